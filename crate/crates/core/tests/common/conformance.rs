//! The 40-string conformance vector for the commit-message rules.

use std::collections::BTreeMap;

use jitvp::vfc::rule_patterns;
use regex::Regex;
use serde::Deserialize;

const VECTOR: &str = include_str!("../../rules/conformance.jsonl");

#[derive(Debug, Deserialize)]
pub struct Case {
    pub text: String,
    pub expect: String,
    pub fragment: Option<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

pub fn cases() -> Vec<Case> {
    VECTOR
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Top-level alternatives of `(?i)(a|b|...)`, keeping `|` inside nested
/// groups and character classes.
pub fn keyword_classes(pattern: &str) -> Vec<String> {
    let body = pattern
        .strip_prefix("(?i)(")
        .and_then(|p| p.strip_suffix(')'))
        .expect("rule has the (?i)(...) shape");
    let mut out = Vec::new();
    let mut current = String::new();
    let (mut depth, mut in_class, mut escaped) = (0i32, false, false);
    for ch in body.chars() {
        if escaped {
            current.push(ch);
            escaped = false;
            continue;
        }
        match ch {
            '\\' => escaped = true,
            '[' => in_class = true,
            ']' => in_class = false,
            '(' if !in_class => depth += 1,
            ')' if !in_class => depth -= 1,
            '|' if depth == 0 && !in_class => {
                out.push(std::mem::take(&mut current));
                continue;
            }
            _ => {}
        }
        current.push(ch);
    }
    out.push(current);
    out
}

pub fn all_classes() -> BTreeMap<String, (&'static str, Regex)> {
    let mut out = BTreeMap::new();
    for (name, pattern) in rule_patterns() {
        for class in keyword_classes(pattern) {
            let re = Regex::new(&format!("(?i){class}")).unwrap();
            out.insert(class, (name, re));
        }
    }
    out
}
