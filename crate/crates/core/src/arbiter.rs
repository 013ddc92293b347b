//! Weighted round-robin arbitration.

use serde::{Deserialize, Serialize};

/// Weighted round-robin: the pointer holds on a grantee until it has used
/// `weight` consecutive grants, then moves past it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedRoundRobin {
    weights: Vec<u32>,
    pointer: usize,
    used: u32,
}

impl WeightedRoundRobin {
    pub fn new(weights: Vec<u32>) -> Self {
        assert!(!weights.is_empty(), "arbiter needs at least one input");
        assert!(weights.iter().all(|&w| w > 0), "weights must be positive");
        Self {
            weights,
            pointer: 0,
            used: 0,
        }
    }

    pub fn uniform(inputs: usize) -> Self {
        Self::new(vec![1; inputs])
    }

    pub fn inputs(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    /// The input that would win, without updating any state.
    pub fn peek(&self, mut requesting: impl FnMut(usize) -> bool) -> Option<usize> {
        let n = self.weights.len();
        (0..n)
            .map(|i| (self.pointer + i) % n)
            .find(|&idx| requesting(idx))
    }

    /// Records a grant to `idx` (normally the result of [`peek`](Self::peek)).
    pub fn commit(&mut self, idx: usize) {
        if idx != self.pointer {
            self.pointer = idx;
            self.used = 0;
        }
        self.used += 1;
        if self.used >= self.weights[idx] {
            self.pointer = (idx + 1) % self.weights.len();
            self.used = 0;
        }
    }

    pub fn grant(&mut self, requesting: impl FnMut(usize) -> bool) -> Option<usize> {
        let winner = self.peek(requesting)?;
        self.commit(winner);
        Some(winner)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_requester_is_granted() {
        let mut arb = WeightedRoundRobin::uniform(4);
        for _ in 0..10 {
            assert_eq!(arb.grant(|i| i == 2), Some(2));
        }
        assert_eq!(arb.grant(|_| false), None);
    }

    #[test]
    fn equal_weights_split_evenly() {
        let k = 5000;
        let mut arb = WeightedRoundRobin::uniform(2);
        let mut grants = [0u32; 2];
        for _ in 0..2 * k {
            grants[arb.grant(|_| true).unwrap()] += 1;
        }
        assert_eq!(grants, [k, k]);
    }

    #[test]
    fn two_to_one_weights() {
        let k = 5000;
        let mut arb = WeightedRoundRobin::new(vec![2, 1]);
        let mut grants = [0u32; 2];
        for _ in 0..3 * k {
            grants[arb.grant(|_| true).unwrap()] += 1;
        }
        assert_eq!(grants, [2 * k, k]);
    }

    #[test]
    fn pointer_skips_idle_inputs() {
        let mut arb = WeightedRoundRobin::uniform(4);
        assert_eq!(arb.grant(|i| i == 1 || i == 3), Some(1));
        assert_eq!(arb.grant(|i| i == 1 || i == 3), Some(3));
        assert_eq!(arb.grant(|i| i == 1 || i == 3), Some(1));
    }

    #[test]
    fn peek_does_not_move_pointer() {
        let arb = WeightedRoundRobin::uniform(3);
        assert_eq!(arb.peek(|_| true), Some(0));
        assert_eq!(arb.peek(|_| true), Some(0));
    }
}
