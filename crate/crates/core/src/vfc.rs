//! Vulnerability-fixing commit identification.
//!
//! Commit messages are matched against two case-insensitive keyword rules
//! (`strong` and the noisier `medium`), stored in `rules/vuln_patterns.txt`.
//! A manual JSONL list of patch commits can replace or complement them.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::repo::CommitRecord;

pub const RULES_SOURCE: &str = include_str!("../rules/vuln_patterns.txt");

#[derive(Debug, thiserror::Error)]
pub enum VfcError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    pub strong: Regex,
    pub medium: Regex,
}

/// Raw pattern text by rule name, in file order.
pub fn rule_patterns() -> Vec<(&'static str, &'static str)> {
    RULES_SOURCE
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .collect()
}

pub fn compile_rules() -> RuleSet {
    let patterns: HashMap<_, _> = rule_patterns().into_iter().collect();
    let get = |name: &str| {
        let src = patterns
            .get(name)
            .unwrap_or_else(|| panic!("rule {name} missing from rules file"));
        Regex::new(src).unwrap_or_else(|e| panic!("rule {name} does not compile: {e}"))
    };
    RuleSet {
        strong: get("strong_vuln_patterns"),
        medium: get("medium_vuln_patterns"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VfcSource {
    Manual,
    StrongRegex,
    MediumRegex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchLevel {
    #[default]
    StrongOnly,
    StrongOrMedium,
}

impl std::str::FromStr for MatchLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strong" | "strong_only" => Ok(MatchLevel::StrongOnly),
            "medium" | "strong_or_medium" => Ok(MatchLevel::StrongOrMedium),
            other => Err(format!(
                "unknown regex level `{other}` (strong_only | strong_or_medium)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageMatch {
    pub source: VfcSource,
    pub fragment: String,
}

/// Strong rule first, then medium when the level allows it. The fragment is
/// the leftmost match of the winning rule.
pub fn match_message(message: &str, rules: &RuleSet, level: MatchLevel) -> Option<MessageMatch> {
    if let Some(m) = rules.strong.find(message) {
        return Some(MessageMatch {
            source: VfcSource::StrongRegex,
            fragment: m.as_str().to_string(),
        });
    }
    if level == MatchLevel::StrongOrMedium {
        if let Some(m) = rules.medium.find(message) {
            return Some(MessageMatch {
                source: VfcSource::MediumRegex,
                fragment: m.as_str().to_string(),
            });
        }
    }
    None
}

/// Either rule matches; this is the `fix` expert feature.
pub fn mentions_fix(message: &str, rules: &RuleSet) -> bool {
    match_message(message, rules, MatchLevel::StrongOrMedium).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualPatch {
    pub commit_id: String,
    #[serde(rename = "Repository")]
    pub repository: String,
}

pub fn parse_manual_patches(text: &str) -> Result<Vec<ManualPatch>, VfcError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let patch: ManualPatch = serde_json::from_str(line).map_err(|e| VfcError::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(patch);
    }
    Ok(out)
}

pub fn load_manual_patches(path: impl AsRef<Path>) -> Result<Vec<ManualPatch>, VfcError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| VfcError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_manual_patches(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VfcRecord {
    pub commit_id: String,
    pub source: VfcSource,
    /// Empty for manual entries.
    pub matched_fragment: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownManualCommit {
    pub commit_id: String,
    pub repository: String,
}

#[derive(Debug, Clone, Default)]
pub struct VfcIdentification {
    pub records: Vec<VfcRecord>,
    pub unknown_manual: Vec<UnknownManualCommit>,
}

/// Identifies fixing commits among `commits`.
///
/// `regex = None` disables keyword matching. Manual ids may be full hashes
/// or unique prefixes of at least 7 characters; ids not found among the
/// commits are reported, not fatal. When a commit qualifies several ways the
/// record keeps the preferred source (manual, then strong, then medium).
/// Output follows the order of `commits`.
pub fn identify_vfcs(
    commits: &[CommitRecord],
    rules: &RuleSet,
    regex: Option<MatchLevel>,
    manual: Option<&[ManualPatch]>,
) -> VfcIdentification {
    let mut manual_ids: HashSet<&str> = HashSet::new();
    let mut unknown_manual = Vec::new();
    if let Some(manual) = manual {
        for entry in manual {
            let wanted = entry.commit_id.trim();
            let hits: Vec<&CommitRecord> = if wanted.len() >= 40 {
                commits.iter().filter(|c| c.id == wanted).collect()
            } else if wanted.len() >= 7 {
                commits.iter().filter(|c| c.id.starts_with(wanted)).collect()
            } else {
                Vec::new()
            };
            match hits.as_slice() {
                [one] => {
                    manual_ids.insert(one.id.as_str());
                }
                _ => unknown_manual.push(UnknownManualCommit {
                    commit_id: entry.commit_id.clone(),
                    repository: entry.repository.clone(),
                }),
            }
        }
    }

    let mut records = Vec::new();
    for c in commits {
        if manual_ids.contains(c.id.as_str()) {
            records.push(VfcRecord {
                commit_id: c.id.clone(),
                source: VfcSource::Manual,
                matched_fragment: String::new(),
            });
            continue;
        }
        if let Some(level) = regex {
            if let Some(m) = match_message(&c.message, rules, level) {
                records.push(VfcRecord {
                    commit_id: c.id.clone(),
                    source: m.source,
                    matched_fragment: m.fragment,
                });
            }
        }
    }
    VfcIdentification {
        records,
        unknown_manual,
    }
}
