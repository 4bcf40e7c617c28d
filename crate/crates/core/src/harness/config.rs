//! Flat `key=value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{raw}'", no + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", no + 1)));
        }
    }
    Ok(map)
}

pub fn load(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse(&text)
}

/// Inverse of [`parse`] for maps without `#` or newlines in values.
pub fn render(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let m = parse("# header\n\nmethod = mc  # inline\nt=1\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m["method"], "mc");
        assert_eq!(m["t"], "1");
    }

    #[test]
    fn malformed_lines() {
        assert!(parse("novalue\n").is_err());
        assert!(parse("=3\n").is_err());
        assert!(parse("a=1\na=2\n").is_err());
    }

    #[test]
    fn render_round_trips() {
        let m = parse("b=2\na=mollify(step:h=0.5,lo=-1,hi=1,n=8)\n").unwrap();
        assert_eq!(parse(&render(&m)).unwrap(), m);
    }
}
