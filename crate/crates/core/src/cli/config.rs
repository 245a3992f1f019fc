//! Line-oriented `key = value` files with `[section]` headers.
//!
//! `#` and `;` start comment lines. Keys before the first header belong to
//! the `global` section. Later assignments to a key replace earlier ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut file = ConfigFile::default();
        let mut section = String::from("global");
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| format!("line {}: unterminated section header", n + 1))?
                    .trim();
                if name.is_empty() {
                    return Err(format!("line {}: empty section name", n + 1));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(format!("line {}: empty key", n + 1));
            }
            file.sections
                .entry(section.clone())
                .or_default()
                .insert(key.to_string(), value.trim().to_string());
        }
        Ok(file)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn section(&self, name: &str) -> impl Iterator<Item = (&str, &str)> {
        self.sections
            .get(name)
            .into_iter()
            .flatten()
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Renders one section with keys in the given order.
pub fn render_section(name: &str, entries: &[(String, String)]) -> String {
    let mut out = format!("[{name}]\n");
    for (k, v) in entries {
        writeln!(out, "{k} = {v}").expect("writing to a String");
    }
    out
}
