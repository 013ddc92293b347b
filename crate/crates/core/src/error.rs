use thiserror::Error;

/// Errors raised by the simulator and its encoders.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("address error: {0}")]
    Address(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("planning error: {0}")]
    Planning(String),
    #[error("drain timed out after {cycles} cycles with {in_flight} flits in flight (oldest: {stuck:?})")]
    DrainTimeout {
        cycles: u64,
        in_flight: u64,
        stuck: Vec<u64>,
    },
    #[error("flit {packet_id} was dropped before delivery")]
    Undeliverable { packet_id: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
