//! Plain `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may use `-` or
//! `_` interchangeably.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::ExperimentError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!(
                    "line {}: expected key=value, got {line:?}",
                    no + 1
                ))
            })?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(ExperimentError::Config(format!(
                    "line {}: empty key",
                    no + 1
                )));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ExperimentError::Config(format!(
                    "line {}: duplicate key {key}",
                    no + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ExperimentError> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| ExperimentError::Config(format!("bad value for {key}: {v:?}")))
            })
            .transpose()
    }

    /// A comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ExperimentError> {
        self.raw(key)
            .map(|v| {
                parse_list(v)
                    .map_err(|_| ExperimentError::Config(format!("bad list for {key}: {v:?}")))
            })
            .transpose()
    }

    /// Rejects keys outside `allowed`, so typos surface as errors.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ExperimentError> {
        let allowed: Vec<String> = allowed.iter().map(|k| normalize(k)).collect();
        match self.keys().find(|k| !allowed.iter().any(|a| a == k)) {
            Some(k) => Err(ExperimentError::Config(format!(
                "unknown key {k}; expected one of {}",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, T::Err> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let c = ConfigMap::parse("# header\n n = 6\nshard-bytes=2048\n\nsizes = 1, 2,3\n").unwrap();
        assert_eq!(c.get::<usize>("n").unwrap(), Some(6));
        assert_eq!(c.get::<usize>("shard_bytes").unwrap(), Some(2048));
        assert_eq!(c.get_list::<u64>("sizes").unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(c.get::<usize>("m").unwrap(), None);
        assert!(c.check_keys(&["n", "shard-bytes", "sizes"]).is_ok());
        assert!(c.check_keys(&["n"]).is_err());
    }

    #[test]
    fn rejects_malformed() {
        assert!(ConfigMap::parse("n 6").is_err());
        assert!(ConfigMap::parse("=6").is_err());
        assert!(ConfigMap::parse("n=1\nn=2").is_err());
        assert!(ConfigMap::parse("n=x").unwrap().get::<usize>("n").is_err());
    }
}
