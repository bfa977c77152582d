//! Minimal `key = value` config files with repeatable `[section]` blocks.
//!
//! The grammar is deliberately small: comments run from `#` to the end of
//! the line, keys before any header land in the root section, and a
//! repeated header opens a fresh section each time instead of merging,
//! which is how one file describes several objects.

use crate::{Real, Vec3};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value` or `[section]`, got `{content}`")]
    MalformedLine { line: usize, content: String },
    #[error("line {line}: empty section name")]
    EmptySectionName { line: usize },
    #[error("line {line}: duplicate key `{key}` in {section}")]
    DuplicateKey { line: usize, section: String, key: String },
    #[error("unknown key `{key}` in {section}")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{name}]")]
    UnknownSection { name: String },
    #[error("key `{key}`: expected {expected}, got `{got}`")]
    InvalidValue { key: String, expected: &'static str, got: String },
}

#[derive(Debug, Clone)]
pub struct Section {
    name: String,
    entries: BTreeMap<String, String>,
}

impl Section {
    fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), entries: BTreeMap::new() }
    }

    fn describe(&self) -> String {
        if self.name.is_empty() {
            "the top level".to_string()
        } else {
            format!("section [{}]", self.name)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Errors on any key outside the allowed set, to catch typos early.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    section: self.describe(),
                    key: key.clone(),
                });
            }
        }
        Ok(())
    }

    fn parse_with<T>(
        &self,
        key: &str,
        expected: &'static str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => parse(raw).map(Some).ok_or_else(|| ConfigError::InvalidValue {
                key: key.to_string(),
                expected,
                got: raw.to_string(),
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<Real>, ConfigError> {
        self.parse_with(key, "a number", |s| s.parse::<Real>().ok().filter(|v| v.is_finite()))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse_with(key, "a non-negative integer", |s| s.parse().ok())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parse_with(key, "a non-negative integer", |s| s.parse().ok())
    }

    pub fn get_u32(&self, key: &str) -> Result<Option<u32>, ConfigError> {
        self.parse_with(key, "a non-negative integer", |s| s.parse().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.parse_with(key, "true or false", |s| match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    /// Three comma-separated numbers.
    pub fn get_vec3(&self, key: &str) -> Result<Option<Vec3>, ConfigError> {
        self.parse_with(key, "three comma-separated numbers", |s| {
            let parts: Vec<&str> = s.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return None;
            }
            let mut vals = [0.0; 3];
            for (slot, part) in vals.iter_mut().zip(&parts) {
                *slot = part.parse::<Real>().ok().filter(|v| v.is_finite())?;
            }
            Some(Vec3::new(vals[0], vals[1], vals[2]))
        })
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    root: Section,
    sections: Vec<Section>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut root = Section::new("");
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(inner) = content.strip_prefix('[') {
                let name = inner.strip_suffix(']').ok_or_else(|| ConfigError::MalformedLine {
                    line,
                    content: content.to_string(),
                })?;
                let name = name.trim();
                if name.is_empty() {
                    return Err(ConfigError::EmptySectionName { line });
                }
                sections.push(Section::new(name));
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                ConfigError::MalformedLine { line, content: content.to_string() }
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::MalformedLine { line, content: content.to_string() });
            }
            let target = sections.last_mut().unwrap_or(&mut root);
            if target.entries.contains_key(&key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    section: target.describe(),
                    key,
                });
            }
            target.entries.insert(key, value.trim().to_string());
        }
        Ok(Self { root, sections })
    }

    pub fn root(&self) -> &Section {
        &self.root
    }

    /// All sections with the given name, in file order.
    pub fn sections<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|s| s.name.as_str())
    }

    /// Errors on any section name outside the allowed set, to catch typos.
    pub fn check_sections(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for section in &self.sections {
            if !allowed.contains(&section.name.as_str()) {
                return Err(ConfigError::UnknownSection { name: section.name.clone() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_root_keys_sections_and_comments() {
        let text = "\
# scene description
frames = 5
interval = 0.1   # seconds

[object]
center = 1, 2, 3
fast = true

[object]
center = -1, 0, 0
";
        let config = Config::parse(text).unwrap();
        assert_eq!(config.root().get_usize("frames").unwrap(), Some(5));
        assert_eq!(config.root().get_f64("interval").unwrap(), Some(0.1));
        let objects: Vec<_> = config.sections("object").collect();
        assert_eq!(objects.len(), 2);
        assert_eq!(objects[0].get_vec3("center").unwrap(), Some(Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(objects[0].get_bool("fast").unwrap(), Some(true));
        assert_eq!(objects[1].get_vec3("center").unwrap(), Some(Vec3::new(-1.0, 0.0, 0.0)));
        assert_eq!(config.sections("missing").count(), 0);
    }

    #[test]
    fn empty_input_is_an_empty_config() {
        let config = Config::parse("").unwrap();
        assert_eq!(config.root().get("anything"), None);
        assert_eq!(config.section_names().count(), 0);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert_eq!(
            Config::parse("just words").unwrap_err(),
            ConfigError::MalformedLine { line: 1, content: "just words".into() }
        );
        assert_eq!(
            Config::parse("[unclosed").unwrap_err(),
            ConfigError::MalformedLine { line: 1, content: "[unclosed".into() }
        );
        assert_eq!(Config::parse("[ ]").unwrap_err(), ConfigError::EmptySectionName { line: 1 });
        assert_eq!(
            Config::parse("= value").unwrap_err(),
            ConfigError::MalformedLine { line: 1, content: "= value".into() }
        );
    }

    #[test]
    fn rejects_duplicate_keys_per_section() {
        let err = Config::parse("a = 1\na = 2").unwrap_err();
        assert_eq!(
            err,
            ConfigError::DuplicateKey { line: 2, section: "the top level".into(), key: "a".into() }
        );
        // The same key in different sections is fine.
        let ok = Config::parse("[s]\na = 1\n[s]\na = 2").unwrap();
        assert_eq!(ok.sections("s").count(), 2);
    }

    #[test]
    fn typed_getters_validate_their_values() {
        let config = Config::parse("n = x\nv = 1, 2\nb = yes\ninf = inf").unwrap();
        assert!(matches!(
            config.root().get_f64("n").unwrap_err(),
            ConfigError::InvalidValue { expected: "a number", .. }
        ));
        assert!(config.root().get_vec3("v").is_err());
        assert!(config.root().get_bool("b").is_err());
        assert!(config.root().get_f64("inf").is_err(), "non-finite numbers rejected");
        assert_eq!(config.root().get_f64("missing").unwrap(), None);
    }

    #[test]
    fn unknown_keys_are_caught() {
        let config = Config::parse("known = 1\ntypo = 2").unwrap();
        assert_eq!(
            config.root().check_keys(&["known"]).unwrap_err(),
            ConfigError::UnknownKey { section: "the top level".into(), key: "typo".into() }
        );
        assert!(config.root().check_keys(&["known", "typo"]).is_ok());
    }

    #[test]
    fn unknown_sections_are_caught() {
        let config = Config::parse("[object]\na = 1\n[objext]\nb = 2").unwrap();
        assert_eq!(
            config.check_sections(&["object"]).unwrap_err(),
            ConfigError::UnknownSection { name: "objext".into() }
        );
        assert!(config.check_sections(&["object", "objext"]).is_ok());
    }
}
