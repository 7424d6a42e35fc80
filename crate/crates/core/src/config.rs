//! Pinned constants table.
//!
//! The defaults are embedded from `constants.toml`; a run may override them
//! with any flat `key = value` TOML table.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// The shipped table, compiled in.
pub const BUILTIN: &str = include_str!("../constants.toml");

/// Relative band within which a re-measured constant counts as unchanged.
pub const DRIFT_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Constants {
    values: BTreeMap<String, f64>,
}

impl Constants {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN).expect("embedded constants table is valid")
    }

    /// Parse a flat table of reals; nested tables are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let mut values = BTreeMap::new();
        for (k, v) in table {
            let x = match v {
                toml::Value::Float(f) => f,
                toml::Value::Integer(i) => i as f64,
                other => return Err(Error::Config(format!("`{k}` must be a number, got {}", other.type_str()))),
            };
            if !x.is_finite() {
                return Err(Error::Config(format!("`{k}` is not finite")));
            }
            values.insert(k, x);
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.values.get(key).copied().ok_or_else(|| Error::Config(format!("missing constant `{key}`")))
    }

    /// Per-dimension lookup: `key_d{d}`.
    pub fn get_dim(&self, key: &str, d: usize) -> Result<f64> {
        self.get(&format!("{key}_d{d}"))
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.values.insert(key.to_string(), value);
    }

    /// Overlay `other` on top of `self`.
    pub fn merged(&self, other: &Constants) -> Constants {
        let mut values = self.values.clone();
        values.extend(other.values.iter().map(|(k, v)| (k.clone(), *v)));
        Constants { values }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v:?}\n"));
        }
        out
    }
}

impl Default for Constants {
    fn default() -> Self {
        Self::builtin()
    }
}

/// `|measured / pinned - 1| <= DRIFT_TOLERANCE`.
pub fn within_drift(measured: f64, pinned: f64) -> bool {
    pinned != 0.0 && (measured / pinned - 1.0).abs() <= DRIFT_TOLERANCE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parses() {
        let c = Constants::builtin();
        assert_eq!(c.get("c_big").unwrap(), 8.0);
        assert!(c.get_dim("c_up", 3).is_ok());
        assert!(matches!(c.get("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip_and_overlay() {
        let c = Constants::builtin();
        assert_eq!(Constants::from_toml(&c.to_toml()).unwrap(), c);
        let o = Constants::from_toml("c_big = 2").unwrap();
        assert_eq!(c.merged(&o).get("c_big").unwrap(), 2.0);
        assert!(Constants::from_toml("a = \"x\"").is_err());
        assert!(Constants::from_toml("[t]\na = 1").is_err());
    }

    #[test]
    fn drift_band() {
        assert!(within_drift(1.4, 1.0));
        assert!(!within_drift(1.6, 1.0));
        assert!(!within_drift(1.0, 0.0));
    }
}
