//! Deterministic suffix-rule lemmatizer.
//!
//! Irregular forms come from `lemmas.txt`; everything else goes through a
//! short list of plural-stripping rules. Verbs are left alone.

use std::collections::HashMap;
use std::sync::OnceLock;

const TABLE: &str = include_str!("lemmas.txt");

fn exceptions() -> &'static HashMap<&'static str, &'static str> {
    static MAP: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| {
        TABLE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let mut it = l.split_whitespace();
                Some((it.next()?, it.next()?))
            })
            .collect()
    })
}

/// Lemma of a lowercase token.
pub fn lemmatize(token: &str) -> String {
    if let Some(lemma) = exceptions().get(token) {
        return (*lemma).to_string();
    }
    let n = token.chars().count();
    if n > 4 && token.ends_with("ies") {
        return format!("{}y", &token[..token.len() - 3]);
    }
    if token.ends_with("sses") {
        return token[..token.len() - 2].to_string();
    }
    for suffix in ["xes", "ches", "shes", "zes"] {
        if n > suffix.len() + 1 && token.ends_with(suffix) {
            return token[..token.len() - 2].to_string();
        }
    }
    for keep in ["ss", "us", "is", "ous"] {
        if token.ends_with(keep) {
            return token.to_string();
        }
    }
    if n > 3 && token.ends_with('s') {
        return token[..token.len() - 1].to_string();
    }
    token.to_string()
}
