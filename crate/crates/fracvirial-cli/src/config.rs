//! `key = value` config files with `[section]` headers, and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    /// Section name ("" for keys before the first header) to key/value pairs.
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = ConfigFile::default();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| CliError::Usage(format!("config line {}: unterminated section header", no + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key", no + 1)));
            }
            cfg.sections.entry(section.clone()).or_default().insert(k.to_string(), v.to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn lookup(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|m| m.get(key))
            .or_else(|| self.sections.get("").and_then(|m| m.get(key)))
            .map(|s| s.as_str())
    }
}

/// Resolves settings in the order flag, config section, config top level, default,
/// and records every resolved value for the manifest.
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    section: String,
    pub resolved: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile, section: &str) -> Self {
        Resolver { file, section: section.to_string(), resolved: BTreeMap::new() }
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.lookup(&self.section, key) {
                Some(text) => Some(
                    text.parse::<T>()
                        .map_err(|e| CliError::Usage(format!("config key '{key}' = '{text}': {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display + Clone,
        T::Err: Display,
    {
        match self.optional(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting --{key} (flag or config key '{key}')")))
    }
}

/// Comma-separated list of numbers.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct List(pub Vec<f64>);

impl FromStr for List {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(List(vec![]));
        }
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl Display for List {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_override_top_level_and_flags_override_both() {
        let cfg = ConfigFile::parse("s = 0.7\nseed = 3 # comment\n[evolve]\ns = 0.8\n\n[domain]\nM = 255\n").unwrap();
        let mut r = Resolver::new(&cfg, "evolve");
        assert_eq!(r.required::<f64>("s", None).unwrap(), 0.8);
        assert_eq!(r.value::<u64>("seed", None, 0).unwrap(), 3);
        assert_eq!(r.value::<f64>("sigma", Some(1.5), 1.0).unwrap(), 1.5);
        let mut d = Resolver::new(&cfg, "domain");
        assert_eq!(d.required::<f64>("s", None).unwrap(), 0.7);
        assert!(d.required::<f64>("sigma", None).is_err());
        assert_eq!(d.resolved.get("s").map(String::as_str), Some("0.7"));
    }

    #[test]
    fn malformed_lines_are_usage_errors() {
        assert!(matches!(ConfigFile::parse("just words"), Err(CliError::Usage(_))));
        assert!(matches!(ConfigFile::parse("[open"), Err(CliError::Usage(_))));
        let cfg = ConfigFile::parse("s = abc").unwrap();
        assert!(Resolver::new(&cfg, "x").required::<f64>("s", None).is_err());
    }

    #[test]
    fn list_roundtrip() {
        let l: List = "4, 8,16".parse().unwrap();
        assert_eq!(l.0, vec![4.0, 8.0, 16.0]);
        assert_eq!(l.to_string(), "4,8,16");
        assert!("4,x".parse::<List>().is_err());
    }
}
