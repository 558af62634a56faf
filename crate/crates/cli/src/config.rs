//! Layered key=value settings: built-in defaults, then `BFL_THREADS`, then
//! the `--config` file, then command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// A precondition violated by the requested configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError(format!(
                "config line {}: expected key=value, got `{}`",
                lineno + 1,
                raw.trim()
            )));
        };
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(ConfigError(format!("config line {}: empty key", lineno + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn load_config_file(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::Error::new(e).context(format!("reading config {}", path.display())))?;
    Ok(parse_config_text(&text)?)
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Later layers override earlier ones. Keys outside `known` are rejected.
    pub fn resolve(
        known: &[&str],
        layers: &[&BTreeMap<String, String>],
    ) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for layer in layers {
            for (k, v) in layer.iter() {
                if !known.contains(&k.as_str()) {
                    return Err(ConfigError(format!("unknown setting `{k}`")));
                }
                values.insert(k.clone(), v.clone());
            }
        }
        Ok(Self { values })
    }

    pub fn from_map(values: BTreeMap<String, String>) -> Self {
        Self { values }
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let raw = self
            .raw(key)
            .ok_or_else(|| ConfigError(format!("missing setting `{key}`")))?;
        raw.parse()
            .map_err(|_| ConfigError(format!("`{key}` = `{raw}` is not a valid value")))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError> {
        let raw = self
            .raw(key)
            .ok_or_else(|| ConfigError(format!("missing setting `{key}`")))?;
        let items: Result<Vec<T>, _> = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| ConfigError(format!("`{key}` entry `{s}` is not a valid value")))
            })
            .collect();
        let items = items?;
        if items.is_empty() {
            return Err(ConfigError(format!("`{key}` is empty")));
        }
        Ok(items)
    }

    pub fn flag(&self, key: &str) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(ConfigError(format!("`{key}` = `{v}` is not a boolean"))),
        }
    }

    pub fn insert(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parses_comments_and_blanks() {
        let m = parse_config_text("# run\nN = 100\n\na=0.5 # pulling\n--seed=3\n").unwrap();
        assert_eq!(m, map(&[("N", "100"), ("a", "0.5"), ("seed", "3")]));
        assert!(parse_config_text("N 100").is_err());
        assert!(parse_config_text("=1").is_err());
    }

    #[test]
    fn later_layers_win() {
        let defaults = map(&[("N", "10"), ("a", "0.5")]);
        let file = map(&[("N", "20")]);
        let flags = map(&[("a", "0.75")]);
        let s = Settings::resolve(&["N", "a"], &[&defaults, &file, &flags]).unwrap();
        assert_eq!(s.get::<usize>("N").unwrap(), 20);
        assert_eq!(s.get::<f64>("a").unwrap(), 0.75);
        assert!(Settings::resolve(&["N"], &[&flags]).is_err());
    }

    #[test]
    fn typed_access() {
        let s = Settings::from_map(map(&[("N-list", "64, 128,256"), ("plot", "true"), ("a", "x")]));
        assert_eq!(s.get_list::<usize>("N-list").unwrap(), vec![64, 128, 256]);
        assert!(s.flag("plot").unwrap());
        assert!(!s.flag("missing").unwrap());
        let err = s.get::<f64>("a").unwrap_err();
        assert!(err.0.contains("`a`"));
        assert_eq!(s.get_opt::<f64>("b").unwrap(), None);
    }
}
