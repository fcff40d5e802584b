//! Change-level expert features.
//!
//! Fourteen metrics per commit, computed over the commit's source files:
//!
//! | name | meaning |
//! |------|---------|
//! | `ns` | distinct subsystems (first path component) |
//! | `nd` | distinct directories (full parent path) |
//! | `nf` | files touched |
//! | `entropy` | Shannon entropy (bits) of changed lines across files |
//! | `la`, `ld` | lines added / deleted |
//! | `lt` | mean size of the touched files before the change (0 for new files) |
//! | `fix` | 1 when the message matches either vulnerability keyword rule |
//! | `ndev` | distinct earlier authors of the touched files |
//! | `age` | mean days since each touched file was last changed (0 if never) |
//! | `nuc` | distinct earlier commits touching the files |
//! | `exp` | author's earlier commit count |
//! | `rexp` | sum over the author's earlier commits of `1 / (1 + whole years ago)` |
//! | `sexp` | author's earlier commits touching any of this commit's subsystems |
//!
//! History-based metrics read a [`HistoryIndex`] that is folded strictly in
//! enumeration order; only the repository reads (pre-change file sizes) may
//! run ahead in parallel.

mod row;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use row::{FeatureRow, RowError, RESERVED_KEYS};

use crate::filter::SourceFilter;
use crate::jsonl;
use crate::repo::{ChangeKind, CommitRecord, FileDiff, RepoError, RepoHandle};
use crate::vfc::{self, RuleSet};

pub const FEATURE_NAMES: [&str; 14] = [
    "ns", "nd", "nf", "entropy", "la", "ld", "lt", "fix", "ndev", "age", "nuc", "exp", "rexp", "sexp",
];

pub(crate) const INTEGER_FEATURES: [&str; 10] = ["ns", "nd", "nf", "la", "ld", "fix", "ndev", "nuc", "exp", "sexp"];

const SECONDS_PER_DAY: f64 = 86_400.0;
const SECONDS_PER_YEAR: f64 = 365.25 * SECONDS_PER_DAY;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("commit {0} was already folded or is a parent of a folded commit")]
    OutOfOrderCommit(String),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpertFeatureVector {
    pub ns: u64,
    pub nd: u64,
    pub nf: u64,
    pub entropy: f64,
    pub la: u64,
    pub ld: u64,
    pub lt: f64,
    pub fix: u8,
    pub ndev: u64,
    pub age: f64,
    pub nuc: u64,
    pub exp: u64,
    pub rexp: f64,
    pub sexp: u64,
}

impl ExpertFeatureVector {
    pub fn named_values(&self) -> Vec<(String, f64)> {
        let v = [
            self.ns as f64,
            self.nd as f64,
            self.nf as f64,
            self.entropy,
            self.la as f64,
            self.ld as f64,
            self.lt,
            self.fix as f64,
            self.ndev as f64,
            self.age,
            self.nuc as f64,
            self.exp as f64,
            self.rexp,
            self.sexp as f64,
        ];
        FEATURE_NAMES.iter().zip(v).map(|(n, x)| (n.to_string(), x)).collect()
    }

    /// Rebuilds a vector from named lookups; `None` if any feature is missing.
    pub fn from_named(get: impl Fn(&str) -> Option<f64>) -> Option<Self> {
        let u = |n: &str| get(n).map(|x| x.max(0.0).round() as u64);
        Some(Self {
            ns: u("ns")?,
            nd: u("nd")?,
            nf: u("nf")?,
            entropy: get("entropy")?,
            la: u("la")?,
            ld: u("ld")?,
            lt: get("lt")?,
            fix: u("fix")?.min(1) as u8,
            ndev: u("ndev")?,
            age: get("age")?,
            nuc: u("nuc")?,
            exp: u("exp")?,
            rexp: get("rexp")?,
            sexp: u("sexp")?,
        })
    }
}

/// `-Σ p·log2 p` over files with at least one changed line.
pub fn compute_entropy(changed_lines_per_file: &[u64]) -> f64 {
    let total: u64 = changed_lines_per_file.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let nonzero = changed_lines_per_file.iter().filter(|&&c| c > 0).count();
    if nonzero <= 1 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = changed_lines_per_file
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

pub fn subsystem_of(path: &str) -> &str {
    match path.split_once('/') {
        Some((first, _)) => first,
        None => "",
    }
}

pub fn directory_of(path: &str) -> &str {
    match path.rsplit_once('/') {
        Some((dir, _)) => dir,
        None => "",
    }
}

/// The path under which a file's earlier history is recorded.
fn history_key(file: &FileDiff) -> &str {
    file.old_path.as_deref().unwrap_or_else(|| file.path())
}

#[derive(Debug, Clone, Default)]
struct FileHistory {
    last_change: i64,
    authors: BTreeSet<String>,
    commits: BTreeSet<String>,
}

#[derive(Debug, Clone, Default)]
struct AuthorHistory {
    /// (author time, subsystems touched) per earlier commit.
    commits: Vec<(i64, BTreeSet<String>)>,
}

/// Per-file and per-author history of the commits folded so far.
#[derive(Debug, Clone, Default)]
pub struct HistoryIndex {
    files: HashMap<String, FileHistory>,
    authors: HashMap<String, AuthorHistory>,
    folded: HashSet<String>,
    /// Parents of folded commits; folding one of them later breaks order.
    folded_parents: HashSet<String>,
}

impl HistoryIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.folded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folded.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.folded.contains(id)
    }

    /// Records `commit` as history for later commits. Commits must arrive
    /// in enumeration order: each one after its parents.
    pub fn fold_commit(&mut self, commit: &CommitRecord, filter: &SourceFilter) -> Result<(), FeatureError> {
        if self.folded.contains(&commit.id) || self.folded_parents.contains(&commit.id) {
            return Err(FeatureError::OutOfOrderCommit(commit.id.clone()));
        }
        let files: Vec<&FileDiff> = filter.source_files(commit).collect();
        let mut subsystems = BTreeSet::new();
        for f in &files {
            subsystems.insert(subsystem_of(f.path()).to_string());
            let mut hist = self.files.remove(history_key(f)).unwrap_or_default();
            hist.last_change = hist.last_change.max(commit.author_time);
            hist.authors.insert(commit.author_id.clone());
            hist.commits.insert(commit.id.clone());
            let key = if f.change_kind == ChangeKind::Delete {
                history_key(f)
            } else {
                f.path()
            };
            let entry = self.files.entry(key.to_string()).or_default();
            entry.last_change = entry.last_change.max(hist.last_change);
            entry.authors.extend(hist.authors);
            entry.commits.extend(hist.commits);
        }
        self.authors
            .entry(commit.author_id.clone())
            .or_default()
            .commits
            .push((commit.author_time, subsystems));
        self.folded.insert(commit.id.clone());
        self.folded_parents.extend(commit.parent_ids.iter().cloned());
        Ok(())
    }
}

/// Pre-change line counts of the commit's source files, in the order of
/// [`SourceFilter::source_files`]. Added files count 0.
pub fn prechange_sizes(
    repo: &RepoHandle,
    commit: &CommitRecord,
    filter: &SourceFilter,
) -> Result<Vec<usize>, RepoError> {
    filter
        .source_files(commit)
        .map(|f| match (commit.first_parent(), f.old_path.as_deref()) {
            (Some(parent), Some(old)) if f.change_kind != ChangeKind::Add => repo.count_lines_at(parent, old),
            _ => Ok(0),
        })
        .collect()
}

/// Computes the vector from already-fetched pre-change sizes.
pub fn compute_features(
    commit: &CommitRecord,
    prechange_sizes: &[usize],
    index: &HistoryIndex,
    filter: &SourceFilter,
    rules: &RuleSet,
) -> Result<ExpertFeatureVector, FeatureError> {
    if index.contains(&commit.id) {
        return Err(FeatureError::OutOfOrderCommit(commit.id.clone()));
    }
    let files: Vec<&FileDiff> = filter.source_files(commit).collect();
    let subsystems: BTreeSet<&str> = files.iter().map(|f| subsystem_of(f.path())).collect();
    let directories: BTreeSet<&str> = files.iter().map(|f| directory_of(f.path())).collect();
    let churn: Vec<u64> = files
        .iter()
        .map(|f| (f.lines_added() + f.lines_removed()) as u64)
        .collect();
    let nf = files.len();

    let mut authors: HashSet<&str> = HashSet::new();
    let mut commits: HashSet<&str> = HashSet::new();
    let mut age_days = 0.0;
    for f in &files {
        if let Some(h) = index.files.get(history_key(f)) {
            authors.extend(h.authors.iter().map(String::as_str));
            commits.extend(h.commits.iter().map(String::as_str));
            age_days += (commit.author_time - h.last_change).max(0) as f64 / SECONDS_PER_DAY;
        }
    }

    let (exp, rexp, sexp) = match index.authors.get(&commit.author_id) {
        Some(a) => {
            let rexp: f64 = a
                .commits
                .iter()
                .map(|(t, _)| {
                    let years = ((commit.author_time - t).max(0) as f64 / SECONDS_PER_YEAR).floor();
                    1.0 / (1.0 + years)
                })
                .sum();
            let sexp = a
                .commits
                .iter()
                .filter(|(_, subs)| subs.iter().any(|s| subsystems.contains(s.as_str())))
                .count();
            (a.commits.len() as u64, rexp, sexp as u64)
        }
        None => (0, 0.0, 0),
    };

    let lt = if nf == 0 {
        0.0
    } else {
        prechange_sizes.iter().sum::<usize>() as f64 / nf as f64
    };

    Ok(ExpertFeatureVector {
        ns: subsystems.len() as u64,
        nd: directories.len() as u64,
        nf: nf as u64,
        entropy: compute_entropy(&churn),
        la: files.iter().map(|f| f.lines_added() as u64).sum(),
        ld: files.iter().map(|f| f.lines_removed() as u64).sum(),
        lt,
        fix: vfc::mentions_fix(&commit.message, rules) as u8,
        ndev: authors.len() as u64,
        age: if nf == 0 { 0.0 } else { age_days / nf as f64 },
        nuc: commits.len() as u64,
        exp,
        rexp,
        sexp,
    })
}

/// Reads pre-change sizes from the repository and computes the vector.
/// The index is not updated.
pub fn extract_features(
    repo: &RepoHandle,
    commit: &CommitRecord,
    index: &HistoryIndex,
    filter: &SourceFilter,
    rules: &RuleSet,
) -> Result<ExpertFeatureVector, FeatureError> {
    let sizes = prechange_sizes(repo, commit, filter)?;
    compute_features(commit, &sizes, index, filter, rules)
}

/// Extracts features for every commit in order, folding each one after
/// its vector is computed. Repository reads run on `workers` threads.
pub fn extract_all(
    repo: &RepoHandle,
    commits: &[CommitRecord],
    filter: &SourceFilter,
    rules: &RuleSet,
    workers: usize,
) -> Result<Vec<ExpertFeatureVector>, FeatureError> {
    let sizes = crate::parallel::parallel_map(commits, workers, |c| prechange_sizes(repo, c, filter))?;
    let mut index = HistoryIndex::new();
    let mut out = Vec::with_capacity(commits.len());
    for (c, s) in commits.iter().zip(&sizes) {
        out.push(compute_features(c, s, &index, filter, rules)?);
        index.fold_commit(c, filter)?;
    }
    Ok(out)
}

pub fn write_feature_file(rows: &[FeatureRow], path: &Path) -> Result<(), FeatureError> {
    jsonl::write_jsonl(path, rows)?;
    Ok(())
}

pub fn parse_feature_rows(text: &str) -> Result<Vec<FeatureRow>, FeatureError> {
    jsonl::numbered_lines(text)
        .map(|(line, l)| FeatureRow::parse_line(l).map_err(|e| FeatureError::Schema { line, reason: e.0 }))
        .collect()
}

pub fn read_feature_file(path: &Path) -> Result<Vec<FeatureRow>, FeatureError> {
    parse_feature_rows(&fs::read_to_string(path)?)
}
