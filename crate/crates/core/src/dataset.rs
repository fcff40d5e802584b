//! Commit annotation (VIC / VFC / VNC) and chronological splitting.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::features::FeatureRow;
use crate::jsonl;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("commit {0} is not part of the dataset")]
    UnknownId(String),
    #[error("cannot split an empty dataset")]
    EmptyDataset,
    #[error("invalid split ratios {0:?}: need train > 0, valid/test >= 0, sum 1")]
    InvalidRatios([f64; 3]),
    #[error("{file} line {line}: {reason}")]
    SchemaViolation { file: String, line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Vulnerability-introducing.
    #[serde(rename = "VIC")]
    Vic,
    /// Vulnerability-fixing.
    #[serde(rename = "VFC")]
    Vfc,
    /// Vulnerability-neutral.
    #[serde(rename = "VNC")]
    Vnc,
}

impl Role {
    pub fn label(self) -> u8 {
        (self == Role::Vic) as u8
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Vic => "VIC",
            Role::Vfc => "VFC",
            Role::Vnc => "VNC",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "VIC" => Ok(Role::Vic),
            "VFC" => Ok(Role::Vfc),
            "VNC" => Ok(Role::Vnc),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedCommit {
    pub role: Role,
    /// Features with `role` and `label` filled in.
    pub row: FeatureRow,
}

impl AnnotatedCommit {
    pub fn new(mut row: FeatureRow, role: Role) -> Self {
        row.role = Some(role);
        row.label = Some(role.label());
        Self { role, row }
    }

    pub fn commit_id(&self) -> &str {
        &self.row.commit_id
    }

    pub fn label(&self) -> u8 {
        self.role.label()
    }

    pub fn date(&self) -> i64 {
        self.row.date.unwrap_or(0)
    }
}

/// Assigns roles with precedence VIC > VFC > VNC. Every id in `vics` and
/// `vfcs` must belong to `rows`.
pub fn annotate(
    rows: Vec<FeatureRow>,
    vics: &HashSet<String>,
    vfcs: &HashSet<String>,
) -> Result<Vec<AnnotatedCommit>, DatasetError> {
    let known: HashSet<&str> = rows.iter().map(|r| r.commit_id.as_str()).collect();
    let mut unknown: Vec<&String> = vics
        .iter()
        .chain(vfcs.iter())
        .filter(|id| !known.contains(id.as_str()))
        .collect();
    unknown.sort();
    if let Some(id) = unknown.first() {
        return Err(DatasetError::UnknownId((*id).clone()));
    }
    Ok(rows
        .into_iter()
        .map(|row| {
            let role = if vics.contains(&row.commit_id) {
                Role::Vic
            } else if vfcs.contains(&row.commit_id) {
                Role::Vfc
            } else {
                Role::Vnc
            };
            AnnotatedCommit::new(row, role)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.75,
            valid: 0.05,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self, DatasetError> {
        let r = Self { train, valid, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let all = [self.train, self.valid, self.test];
        let ok = all.iter().all(|x| x.is_finite() && *x >= 0.0)
            && self.train > 0.0
            && (all.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(DatasetError::InvalidRatios(all))
        }
    }
}

impl FromStr for SplitRatios {
    type Err = String;

    /// `"0.75,0.05,0.2"` or `"75/5/20"` (percentages).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split([',', '/'])
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad ratio `{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        let [a, b, c] = parts[..] else {
            return Err(format!("expected three ratios, got `{s}`"));
        };
        let total = a + b + c;
        let (a, b, c) = if (total - 100.0).abs() < 1e-6 {
            (a / 100.0, b / 100.0, c / 100.0)
        } else {
            (a, b, c)
        };
        SplitRatios::new(a, b, c).map_err(|e| e.to_string())
    }
}

/// Sizes of the three parts for `n` records: floor at both cut points,
/// then at least one training record when `n >= 1`.
pub fn split_sizes(n: usize, ratios: &SplitRatios) -> (usize, usize, usize) {
    // tolerance keeps products like 100 * 0.75 from landing just below an integer
    let cut = |r: f64| (((n as f64) * r) + 1e-9).floor().min(n as f64) as usize;
    let mut train_end = cut(ratios.train);
    let mut valid_end = cut(ratios.train + ratios.valid).max(train_end);
    if n >= 1 && train_end == 0 {
        train_end = 1;
        valid_end = valid_end.max(1);
    }
    (train_end, valid_end - train_end, n - valid_end)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub train: Vec<AnnotatedCommit>,
    pub valid: Vec<AnnotatedCommit>,
    pub test: Vec<AnnotatedCommit>,
    pub ratios: SplitRatios,
}

impl SplitSet {
    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stable-sorts by author date (input order breaks ties) and cuts into
/// train / valid / test.
pub fn chronological_split(records: Vec<AnnotatedCommit>, ratios: SplitRatios) -> Result<SplitSet, DatasetError> {
    ratios.validate()?;
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut records = records;
    records.sort_by_key(|r| r.date());
    let (n_train, n_valid, _) = split_sizes(records.len(), &ratios);
    let test = records.split_off(n_train + n_valid);
    let valid = records.split_off(n_train);
    Ok(SplitSet {
        train: records,
        valid,
        test,
        ratios,
    })
}

/// Keeps only the given roles (e.g. drop VNC for the ideal setting).
pub fn retain_roles(records: Vec<AnnotatedCommit>, keep: &[Role]) -> Vec<AnnotatedCommit> {
    records.into_iter().filter(|r| keep.contains(&r.role)).collect()
}

pub const SPLIT_FILES: [&str; 3] = ["train.jsonl", "valid.jsonl", "test.jsonl"];

pub fn write_split(split: &SplitSet, folder: &Path) -> Result<(), DatasetError> {
    for (name, part) in SPLIT_FILES.iter().zip([&split.train, &split.valid, &split.test]) {
        let rows: Vec<&FeatureRow> = part.iter().map(|r| &r.row).collect();
        jsonl::write_jsonl(&folder.join(name), &rows)?;
    }
    Ok(())
}

/// Parses one split file. Rows need a 0/1 label; a missing role is
/// inferred from it (1 → VIC, 0 → VNC).
pub fn parse_split_file(text: &str, file: &str) -> Result<Vec<AnnotatedCommit>, DatasetError> {
    jsonl::numbered_lines(text)
        .map(|(line, l)| {
            let violation = |reason: String| DatasetError::SchemaViolation {
                file: file.to_string(),
                line,
                reason,
            };
            let row = FeatureRow::parse_line(l).map_err(|e| violation(e.0))?;
            let label = row.label.ok_or_else(|| violation("missing label".into()))?;
            let role = match row.role {
                Some(role) if role.label() != label => {
                    return Err(violation(format!("role {role} disagrees with label {label}")))
                }
                Some(role) => role,
                None if label == 1 => Role::Vic,
                None => Role::Vnc,
            };
            Ok(AnnotatedCommit::new(row, role))
        })
        .collect()
}

/// Reads the three split files. Ratios are recovered from the part sizes.
pub fn read_split(folder: &Path) -> Result<SplitSet, DatasetError> {
    let mut parts = Vec::with_capacity(3);
    for name in SPLIT_FILES {
        let text = fs::read_to_string(folder.join(name))?;
        parts.push(parse_split_file(&text, name)?);
    }
    let test = parts.pop().unwrap_or_default();
    let valid = parts.pop().unwrap_or_default();
    let train = parts.pop().unwrap_or_default();
    let n = (train.len() + valid.len() + test.len()).max(1) as f64;
    Ok(SplitSet {
        ratios: SplitRatios {
            train: train.len() as f64 / n,
            valid: valid.len() as f64 / n,
            test: test.len() as f64 / n,
        },
        train,
        valid,
        test,
    })
}
