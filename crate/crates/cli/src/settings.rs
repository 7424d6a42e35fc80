//! Run configuration: a TOML file with top-level run keys, one section per
//! command and an optional `[constants]` overlay. Flags win over the file.

use std::path::Path;
use std::str::FromStr;

use qex::config::Constants;

use crate::Failure;

#[derive(Debug, Clone, Default)]
pub struct RunFile {
    table: toml::Table,
}

impl RunFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let table = text.parse::<toml::Table>().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        Ok(Self { table })
    }

    /// Top-level key, rendered as text.
    pub fn run_value(&self, key: &str) -> Option<String> {
        self.table.get(key).and_then(render)
    }

    pub fn section(&self, name: &str) -> Section {
        let table = match self.table.get(name) {
            Some(toml::Value::Table(t)) => t.clone(),
            _ => toml::Table::new(),
        };
        Section { name: name.to_string(), table }
    }

    /// Shipped constants, overlaid by an explicit file, then by `[constants]`.
    pub fn constants(&self, file: Option<&Path>) -> Result<Constants, Failure> {
        let mut c = Constants::builtin();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            c = c.merged(&Constants::from_toml(&text)?);
        }
        if let Some(toml::Value::Table(t)) = self.table.get("constants") {
            c = c.merged(&Constants::from_toml(&toml::to_string(t).map_err(|e| Failure::Usage(e.to_string()))?)?);
        }
        Ok(c)
    }
}

fn render(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        toml::Value::Array(a) => Some(a.iter().filter_map(render).collect::<Vec<_>>().join(",")),
        _ => None,
    }
}

/// One command's section; records every resolved value for the manifest.
#[derive(Debug, Clone)]
pub struct Section {
    name: String,
    table: toml::Table,
}

impl Section {
    pub fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    /// Flag value, else the file value, else `default`.
    pub fn pick<T: FromStr + ToString>(
        &self,
        resolved: &mut toml::Table,
        key: &str,
        flag: Option<T>,
        default: Option<&str>,
    ) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        let v = match flag {
            Some(v) => v,
            None => {
                let text = self.table.get(key).and_then(render).or(default.map(String::from)).ok_or_else(|| {
                    Failure::Usage(format!("`{}` needs --{} (or `{key}` in the [{}] section)", self.name, key.replace('_', "-"), self.name))
                })?;
                text.parse::<T>().map_err(|e| Failure::Usage(format!("{key}: {e}")))?
            }
        };
        resolved.insert(key.to_string(), toml::Value::String(v.to_string()));
        Ok(v)
    }
}

/// Sample count; accepts `1e6`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Count(pub usize);

impl FromStr for Count {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v: f64 = s.trim().parse().map_err(|_| format!("not a count: `{s}`"))?;
        if !(v >= 1.0 && v.fract() == 0.0 && v <= 1e12) {
            return Err(format!("not a positive integer count: `{s}`"));
        }
        Ok(Count(v as usize))
    }
}

impl std::fmt::Display for Count {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn scalar(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Some(e) = s.strip_prefix("2^") {
        let e: i32 = e.parse().map_err(|_| format!("bad power of two `{s}`"))?;
        return Ok(2f64.powi(e));
    }
    s.parse().map_err(|_| format!("not a number: `{s}`"))
}

/// Comma-separated reals; `2^-4..2^-8` expands to every power in between.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

impl FromStr for List {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            if let Some((a, b)) = part.split_once("..") {
                let exp = |t: &str| -> Result<i32, String> {
                    t.trim().strip_prefix("2^").and_then(|e| e.parse().ok()).ok_or_else(|| format!("ranges need powers of two, got `{t}`"))
                };
                let (a, b) = (exp(a)?, exp(b)?);
                let step = if a <= b { 1 } else { -1 };
                let mut e = a;
                loop {
                    out.push(2f64.powi(e));
                    if e == b {
                        break;
                    }
                    e += step;
                }
            } else {
                out.push(scalar(part)?);
            }
        }
        if out.is_empty() {
            return Err("empty list".into());
        }
        Ok(List(out))
    }
}

impl std::fmt::Display for List {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:e}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A real that also accepts `2^-k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl FromStr for Real {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        scalar(s).map(Real)
    }
}

impl std::fmt::Display for Real {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:e}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!("2^-4..2^-6".parse::<List>().unwrap().0, vec![0.0625, 0.03125, 0.015625]);
        assert_eq!("0.5, 2^-2".parse::<List>().unwrap().0, vec![0.5, 0.25]);
        assert!("2^-4..0.1".parse::<List>().is_err());
        assert!("".parse::<List>().is_err());
    }

    #[test]
    fn counts() {
        assert_eq!("1e6".parse::<Count>().unwrap(), Count(1_000_000));
        assert!("0".parse::<Count>().is_err());
        assert!("2.5".parse::<Count>().is_err());
    }

    #[test]
    fn flags_beat_file() {
        let file = RunFile { table: "[ratio]\nn = 500\nrho = \"2^-4\"".parse().unwrap() };
        let sec = file.section("ratio");
        let mut res = toml::Table::new();
        assert_eq!(sec.pick(&mut res, "n", Some(Count(7)), None).unwrap(), Count(7));
        assert_eq!(sec.pick::<Real>(&mut res, "rho", None, None).unwrap(), Real(0.0625));
        assert!(sec.pick::<Real>(&mut res, "r", None, None).is_err());
        assert_eq!(sec.pick::<Count>(&mut res, "m", None, Some("3")).unwrap(), Count(3));
    }
}
