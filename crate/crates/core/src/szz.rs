//! Tracing vulnerability-fixing commits back to the commits that
//! introduced the lines they delete.
//!
//! All four variants start from the lines a fix deletes from its source
//! files and blame them in the fix's first parent:
//!
//! - **B**: one blame per deleted line, cosmetic lines included.
//! - **AG**: skips blank/comment candidate lines; when blame lands on a
//!   commit whose hunk for that line is only a whitespace/comment change,
//!   the line is mapped into that commit's parent and blamed again.
//! - **MA**: AG plus hops over meta-changes (merges, rename-only and
//!   mode-only file changes).
//! - **V**: follows every modification of the line, not just cosmetic
//!   ones, until it reaches the commit whose hunk created it.
//!
//! Backward hops are capped at [`MAX_HOPS`] per line.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::filter::{hunk_is_cosmetic, SourceFilter};
use crate::lexer;
use crate::parallel::parallel_map;
use crate::repo::{ChangeKind, CommitRecord, FileDiff, Hunk, RepoError, RepoHandle};

pub const MAX_HOPS: usize = 128;

/// Minimum normalized Levenshtein similarity for a removed line to count
/// as the predecessor of an added line when no exact match exists.
pub const LINE_SIMILARITY: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SzzAlgorithm {
    B,
    Ag,
    Ma,
    V,
}

impl SzzAlgorithm {
    pub const ALL: [SzzAlgorithm; 4] = [SzzAlgorithm::B, SzzAlgorithm::Ag, SzzAlgorithm::Ma, SzzAlgorithm::V];

    fn skips_cosmetic(self) -> bool {
        self != SzzAlgorithm::B
    }

    fn skips_meta(self) -> bool {
        matches!(self, SzzAlgorithm::Ma | SzzAlgorithm::V)
    }
}

impl fmt::Display for SzzAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SzzAlgorithm::B => "b",
            SzzAlgorithm::Ag => "ag",
            SzzAlgorithm::Ma => "ma",
            SzzAlgorithm::V => "v",
        })
    }
}

impl FromStr for SzzAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().trim_end_matches("-szz").trim_end_matches("szz") {
            "b" => Ok(SzzAlgorithm::B),
            "ag" => Ok(SzzAlgorithm::Ag),
            "ma" => Ok(SzzAlgorithm::Ma),
            "v" => Ok(SzzAlgorithm::V),
            _ => Err(format!("unknown SZZ variant `{s}` (b | ag | ma | v)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SzzError {
    #[error(transparent)]
    Repo(#[from] RepoError),
}

/// A line removed by a fix, addressed in the fix's first parent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeletedLine {
    pub file: String,
    pub line_no: usize,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceFlag {
    /// The fix has no parent, so there is nothing to blame.
    RootCommitFix,
    /// The hop limit was reached; the last attribution was kept.
    Truncated { file: String, line_no: usize },
    /// Several equal predecessor lines existed; the closest one was used.
    MappingAmbiguous {
        commit: String,
        file: String,
        line_no: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceResult {
    pub vfc_id: String,
    pub algorithm: SzzAlgorithm,
    pub vic_ids: BTreeSet<String>,
    pub line_evidence: BTreeMap<String, Vec<DeletedLine>>,
    pub flags: Vec<TraceFlag>,
}

/// Serialized form: `{"vfc", "algorithm", "vics"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLine {
    pub vfc: String,
    pub algorithm: SzzAlgorithm,
    pub vics: Vec<String>,
}

impl From<&TraceResult> for TraceLine {
    fn from(t: &TraceResult) -> Self {
        Self {
            vfc: t.vfc_id.clone(),
            algorithm: t.algorithm,
            vics: t.vic_ids.iter().cloned().collect(),
        }
    }
}

/// Removed lines of the fix's source-file hunks. With `exclude_cosmetic`,
/// blank and comment-only lines are dropped (comment state is tracked
/// across the removed side of each hunk).
pub fn candidate_lines(vfc: &CommitRecord, filter: &SourceFilter, exclude_cosmetic: bool) -> Vec<DeletedLine> {
    let style = filter.comment_style();
    let mut out = Vec::new();
    for f in filter.source_files(vfc) {
        let Some(old_path) = f.old_path.as_deref() else {
            continue;
        };
        for h in &f.hunks {
            let residues = lexer::strip_comments(&h.removed, style);
            for (i, content) in h.removed.iter().enumerate() {
                if exclude_cosmetic && lexer::squeeze(&residues[i]).is_empty() {
                    continue;
                }
                out.push(DeletedLine {
                    file: old_path.to_string(),
                    line_no: h.old_line(i),
                    content: content.clone(),
                });
            }
        }
    }
    out
}

struct Predecessor {
    line: usize,
    ambiguous: bool,
    /// Same text up to whitespace (or comments).
    equivalent: bool,
}

/// Finds the old-side line that an added line descends from.
///
/// Exact matches after whitespace normalization anywhere in the file diff
/// win, then matches of the comment-free residue; among several, the one
/// closest to the line's expected position (then the lower line number).
/// Otherwise the most similar removed line of the containing hunk is used
/// if it clears [`LINE_SIMILARITY`].
fn map_to_predecessor(fd: &FileDiff, hunk: &Hunk, new_line: usize, filter: &SourceFilter) -> Option<Predecessor> {
    if hunk.removed.is_empty() {
        return None;
    }
    let idx = new_line - hunk.new_start;
    let target = &hunk.added[idx];
    let expected = hunk.old_start + idx.min(hunk.removed.len() - 1);
    let distance = |l: usize| l.abs_diff(expected);
    let pick = |mut cands: Vec<usize>| -> Option<(usize, bool)> {
        cands.sort_by_key(|&l| (distance(l), l));
        cands.dedup();
        cands.first().map(|&l| (l, cands.len() > 1))
    };

    let norm = lexer::normalize_ws(target);
    let exact: Vec<usize> = fd
        .hunks
        .iter()
        .flat_map(|h| h.removed.iter().enumerate().map(move |(i, r)| (h.old_line(i), r)))
        .filter(|(_, r)| lexer::normalize_ws(r) == norm)
        .map(|(l, _)| l)
        .collect();
    if let Some((line, ambiguous)) = pick(exact) {
        return Some(Predecessor {
            line,
            ambiguous,
            equivalent: true,
        });
    }

    let style = filter.comment_style();
    let code = lexer::squeeze(&lexer::strip_comments(&[target], style)[0]);
    if !code.is_empty() {
        let residues = lexer::strip_comments(&hunk.removed, style);
        let same_code: Vec<usize> = residues
            .iter()
            .enumerate()
            .filter(|(_, r)| lexer::squeeze(r) == code)
            .map(|(i, _)| hunk.old_line(i))
            .collect();
        if let Some((line, ambiguous)) = pick(same_code) {
            return Some(Predecessor {
                line,
                ambiguous,
                equivalent: true,
            });
        }
    }

    let mut best: Option<(f64, usize)> = None;
    for (i, r) in hunk.removed.iter().enumerate() {
        let sim = strsim::normalized_levenshtein(&norm, &lexer::normalize_ws(r));
        if sim < LINE_SIMILARITY {
            continue;
        }
        let line = hunk.old_line(i);
        let better = match best {
            None => true,
            Some((bs, bl)) => sim > bs || (sim == bs && (distance(line), line) < (distance(bl), bl)),
        };
        if better {
            best = Some((sim, line));
        }
    }
    best.map(|(_, line)| Predecessor {
        line,
        ambiguous: false,
        equivalent: false,
    })
}

enum Step {
    Stop,
    Hop {
        revision: String,
        path: String,
        line: usize,
        ambiguous: bool,
    },
}

struct Tracer<'a> {
    repo: &'a RepoHandle,
    filter: &'a SourceFilter,
    commits: HashMap<String, Rc<CommitRecord>>,
    parent_diffs: HashMap<(String, String), Rc<Vec<FileDiff>>>,
}

impl<'a> Tracer<'a> {
    fn new(repo: &'a RepoHandle, filter: &'a SourceFilter) -> Self {
        Self {
            repo,
            filter,
            commits: HashMap::new(),
            parent_diffs: HashMap::new(),
        }
    }

    fn commit(&mut self, id: &str) -> Result<Rc<CommitRecord>, RepoError> {
        if let Some(c) = self.commits.get(id) {
            return Ok(Rc::clone(c));
        }
        let c = Rc::new(self.repo.commit(id)?);
        self.commits.insert(id.to_string(), Rc::clone(&c));
        Ok(c)
    }

    fn diff_against(&mut self, parent: &str, commit: &str) -> Result<Rc<Vec<FileDiff>>, RepoError> {
        let key = (parent.to_string(), commit.to_string());
        if let Some(d) = self.parent_diffs.get(&key) {
            return Ok(Rc::clone(d));
        }
        let d = Rc::new(self.repo.diff_trees(Some(parent), commit)?);
        self.parent_diffs.insert(key, Rc::clone(&d));
        Ok(d)
    }

    /// Where to look next after blame attributed (`path`, `line`) to `commit`.
    fn next_step(
        &mut self,
        commit: &CommitRecord,
        path: &str,
        line: usize,
        algo: SzzAlgorithm,
    ) -> Result<Step, RepoError> {
        if algo == SzzAlgorithm::B || commit.parent_ids.is_empty() {
            return Ok(Step::Stop);
        }
        if commit.is_merge() && algo.skips_meta() {
            return self.hop_out_of_merge(commit, path, line);
        }
        let Some(fd) = commit.file_by_new_path(path) else {
            return Ok(Step::Stop);
        };
        let parent = commit.parent_ids[0].clone();
        let old_path = fd.old_path.clone().unwrap_or_else(|| path.to_string());
        if algo.skips_meta() && fd.is_meta_only() {
            return Ok(Step::Hop {
                revision: parent,
                path: old_path,
                line,
                ambiguous: false,
            });
        }
        let Some(hunk) = fd.hunk_for_new_line(line) else {
            return Ok(Step::Stop);
        };
        let follow = match algo {
            SzzAlgorithm::V => true,
            _ => hunk_is_cosmetic(hunk, self.filter.comment_style()),
        };
        if !follow || fd.change_kind == ChangeKind::Add {
            return Ok(Step::Stop);
        }
        Ok(match map_to_predecessor(fd, hunk, line, self.filter) {
            Some(p) => Step::Hop {
                revision: parent,
                path: old_path,
                line: p.line,
                ambiguous: p.ambiguous,
            },
            None => Step::Stop,
        })
    }

    /// Merged-in parents are tried before the first parent; a parent whose
    /// side holds an equivalent line wins over a merely similar one.
    fn hop_out_of_merge(&mut self, merge: &CommitRecord, path: &str, line: usize) -> Result<Step, RepoError> {
        let mut order: Vec<&String> = merge.parent_ids[1..].iter().collect();
        order.push(&merge.parent_ids[0]);
        let mut fallback: Option<Step> = None;
        for parent in order {
            let diffs = self.diff_against(parent, &merge.id)?;
            let Some(fd) = diffs.iter().find(|f| f.new_path.as_deref() == Some(path)) else {
                // file identical on this side: the line is there unchanged
                return Ok(Step::Hop {
                    revision: parent.clone(),
                    path: path.to_string(),
                    line,
                    ambiguous: false,
                });
            };
            let old_path = fd.old_path.clone().unwrap_or_else(|| path.to_string());
            let Some(hunk) = fd.hunk_for_new_line(line) else {
                return Ok(Step::Hop {
                    revision: parent.clone(),
                    path: old_path,
                    line: fd.map_unchanged_line(line),
                    ambiguous: false,
                });
            };
            if let Some(p) = map_to_predecessor(fd, hunk, line, self.filter) {
                let step = Step::Hop {
                    revision: parent.clone(),
                    path: old_path,
                    line: p.line,
                    ambiguous: p.ambiguous,
                };
                if p.equivalent {
                    return Ok(step);
                }
                fallback.get_or_insert(step);
            }
        }
        Ok(fallback.unwrap_or(Step::Stop))
    }

    fn trace(&mut self, vfc: &CommitRecord, algo: SzzAlgorithm) -> Result<TraceResult, SzzError> {
        let mut result = TraceResult {
            vfc_id: vfc.id.clone(),
            algorithm: algo,
            vic_ids: BTreeSet::new(),
            line_evidence: BTreeMap::new(),
            flags: Vec::new(),
        };
        let Some(parent) = vfc.first_parent() else {
            result.flags.push(TraceFlag::RootCommitFix);
            return Ok(result);
        };
        let candidates = candidate_lines(vfc, self.filter, algo.skips_cosmetic());

        let mut by_file: BTreeMap<&str, Vec<&DeletedLine>> = BTreeMap::new();
        for c in &candidates {
            by_file.entry(c.file.as_str()).or_default().push(c);
        }
        for (file, lines) in by_file {
            let numbers: Vec<usize> = lines.iter().map(|l| l.line_no).collect();
            let blamed = self.repo.blame_at(parent, file, &numbers)?;
            for (deleted, first) in lines.into_iter().zip(blamed) {
                let mut origin = first.origin_commit;
                let mut path = first.origin_path;
                let mut line = first.origin_line_no;
                let mut hops = 0;
                loop {
                    let commit = self.commit(&origin)?;
                    match self.next_step(&commit, &path, line, algo)? {
                        Step::Stop => break,
                        Step::Hop {
                            revision,
                            path: next_path,
                            line: next_line,
                            ambiguous,
                        } => {
                            if ambiguous {
                                result.flags.push(TraceFlag::MappingAmbiguous {
                                    commit: origin.clone(),
                                    file: path.clone(),
                                    line_no: line,
                                });
                            }
                            if hops == MAX_HOPS {
                                result.flags.push(TraceFlag::Truncated {
                                    file: deleted.file.clone(),
                                    line_no: deleted.line_no,
                                });
                                break;
                            }
                            hops += 1;
                            let next = self.repo.blame_at(&revision, &next_path, &[next_line])?;
                            let entry = next
                                .into_iter()
                                .next()
                                .ok_or_else(|| RepoError::Parse(format!("empty blame for {next_path}:{next_line}")))?;
                            origin = entry.origin_commit;
                            path = entry.origin_path;
                            line = entry.origin_line_no;
                        }
                    }
                }
                if origin != vfc.id {
                    result
                        .line_evidence
                        .entry(origin.clone())
                        .or_default()
                        .push(deleted.clone());
                    result.vic_ids.insert(origin);
                }
            }
        }
        result.flags.sort();
        result.flags.dedup();
        Ok(result)
    }
}

pub fn trace(
    repo: &RepoHandle,
    vfc: &CommitRecord,
    algorithm: SzzAlgorithm,
    filter: &SourceFilter,
) -> Result<TraceResult, SzzError> {
    Tracer::new(repo, filter).trace(vfc, algorithm)
}

pub fn b_szz(repo: &RepoHandle, vfc: &CommitRecord, filter: &SourceFilter) -> Result<TraceResult, SzzError> {
    trace(repo, vfc, SzzAlgorithm::B, filter)
}

pub fn ag_szz(repo: &RepoHandle, vfc: &CommitRecord, filter: &SourceFilter) -> Result<TraceResult, SzzError> {
    trace(repo, vfc, SzzAlgorithm::Ag, filter)
}

pub fn ma_szz(repo: &RepoHandle, vfc: &CommitRecord, filter: &SourceFilter) -> Result<TraceResult, SzzError> {
    trace(repo, vfc, SzzAlgorithm::Ma, filter)
}

pub fn v_szz(repo: &RepoHandle, vfc: &CommitRecord, filter: &SourceFilter) -> Result<TraceResult, SzzError> {
    trace(repo, vfc, SzzAlgorithm::V, filter)
}

#[derive(Debug)]
pub struct TraceFailure {
    pub vfc_id: String,
    pub error: SzzError,
}

/// Traces every fix on `workers` threads. Results keep input order; a
/// failing fix yields an `Err` entry without stopping the others.
pub fn run_szz(
    repo: &RepoHandle,
    vfcs: &[CommitRecord],
    algorithm: SzzAlgorithm,
    filter: &SourceFilter,
    workers: usize,
) -> Vec<Result<TraceResult, TraceFailure>> {
    let out: Result<Vec<_>, std::convert::Infallible> = parallel_map(vfcs, workers, |vfc| {
        Ok(trace(repo, vfc, algorithm, filter).map_err(|error| TraceFailure {
            vfc_id: vfc.id.clone(),
            error,
        }))
    });
    match out {
        Ok(v) => v,
        Err(never) => match never {},
    }
}
