//! Flat `key=value` configuration files.
//!
//! One pair per line; blank lines and lines starting with `#` are ignored.
//! Keys use underscores or dashes interchangeably and mirror the long flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value, got {line:?}", n + 1))?;
            let key = normalize(key);
            if key.is_empty() {
                bail!("line {}: empty key", n + 1);
            }
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                bail!("line {}: duplicate key {key:?}", n + 1);
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.entries
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("{key}={v}: {e}")))
            .transpose()
    }

    /// Comma-separated list value.
    pub fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.entries
            .get(key)
            .map(|v| parse_list(v).with_context(|| format!("key {key}")))
            .transpose()
    }

    /// Rejects keys outside `known`, so typos do not pass silently.
    pub fn expect_only(&self, known: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            if !known.contains(&key.as_str()) {
                bail!(
                    "unknown config key {key:?} (expected one of {})",
                    known.join(", ")
                );
            }
        }
        Ok(())
    }
}

pub fn parse_list<T>(value: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("{s:?}: {e}")))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("empty list");
    }
    Ok(items)
}

/// Flag value if given, else the file value.
pub fn pick<T>(flag: Option<T>, file: &KeyValues, key: &str) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let kv =
            KeyValues::parse("# run\npes = 64\n\nbuffer-depth=8\npattern=transpose\n").unwrap();
        assert_eq!(kv.get::<usize>("pes").unwrap(), Some(64));
        assert_eq!(kv.get::<usize>("buffer_depth").unwrap(), Some(8));
        assert_eq!(
            kv.get::<String>("pattern").unwrap().as_deref(),
            Some("transpose")
        );
        assert_eq!(kv.get::<u64>("seed").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("pes 64").is_err());
        assert!(KeyValues::parse("pes=1\npes=2").is_err());
        assert!(KeyValues::parse("=3").is_err());
    }

    #[test]
    fn lists_and_unknown_keys() {
        let kv = KeyValues::parse("rates=0.25, 0.5,1.0\nbogus=1").unwrap();
        assert_eq!(
            kv.list::<f64>("rates").unwrap().unwrap(),
            vec![0.25, 0.5, 1.0]
        );
        assert!(kv.expect_only(&["rates"]).is_err());
        assert!(parse_list::<u32>(" , ").is_err());
    }

    #[test]
    fn flag_beats_file() {
        let kv = KeyValues::parse("seed=3").unwrap();
        assert_eq!(pick(Some(9u64), &kv, "seed").unwrap(), Some(9));
        assert_eq!(pick(None::<u64>, &kv, "seed").unwrap(), Some(3));
    }
}
