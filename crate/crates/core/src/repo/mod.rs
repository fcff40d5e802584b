//! Read-only access to a local Git repository.
//!
//! Everything goes through the installed `git` executable using plumbing
//! commands with fixed, config-independent output formats. No operation
//! writes to the repository, so a [`RepoHandle`] can be shared freely
//! between worker threads.

mod blame;
mod diff;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

pub use blame::BlameEntry;
pub use diff::{parse_patch, unquote, ChangeKind, FileDiff, Hunk};

use crate::language::{Language, UnsupportedLanguage};
use crate::parallel::parallel_map;

#[derive(Debug, thiserror::Error)]
pub enum RepoError {
    #[error("{0} is not a Git repository")]
    NotARepository(PathBuf),
    #[error(transparent)]
    UnsupportedLanguage(#[from] UnsupportedLanguage),
    #[error("{file} does not exist at revision {revision}")]
    FileAbsentAtRevision { revision: String, file: String },
    #[error("line {line} is out of range for {file} ({len} lines)")]
    LineOutOfRange { file: String, line: usize, len: usize },
    #[error("unknown revision {0}")]
    UnknownRevision(String),
    #[error("git {args} failed: {stderr}")]
    Git { args: String, stderr: String },
    #[error("unexpected git output: {0}")]
    Parse(String),
    #[error("i/o error running git: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub id: String,
    pub parent_ids: Vec<String>,
    /// Lowercased e-mail, or lowercased name when the e-mail is empty.
    pub author_id: String,
    pub author_time: i64,
    pub commit_time: i64,
    pub message: String,
    /// Diff against the first parent (against the empty tree for roots).
    pub files: Vec<FileDiff>,
}

impl CommitRecord {
    pub fn is_merge(&self) -> bool {
        self.parent_ids.len() > 1
    }

    pub fn first_parent(&self) -> Option<&str> {
        self.parent_ids.first().map(String::as_str)
    }

    pub fn file_by_new_path(&self, path: &str) -> Option<&FileDiff> {
        self.files.iter().find(|f| f.new_path.as_deref() == Some(path))
    }
}

pub fn normalize_author(name: &str, email: &str) -> String {
    let email = email.trim();
    if email.is_empty() {
        name.trim().to_lowercase()
    } else {
        email.to_lowercase()
    }
}

#[derive(Debug, Clone)]
pub struct RepoHandle {
    root: PathBuf,
    language: Language,
    head_ref: String,
    head: Option<String>,
}

const FIELD: char = '\u{1f}';
const RECORD: char = '\u{1e}';

impl RepoHandle {
    pub fn open(path: impl AsRef<Path>, language: Language) -> Result<Self, RepoError> {
        let path = path.as_ref();
        let not_repo = || RepoError::NotARepository(path.to_path_buf());
        let canonical = path.canonicalize().map_err(|_| not_repo())?;
        let probe = Self {
            root: canonical.clone(),
            language,
            head_ref: String::new(),
            head: None,
        };
        let top = probe
            .git_text(&["rev-parse", "--show-toplevel"])
            .ok()
            .map(|s| PathBuf::from(s.trim()));
        let is_root = match top {
            Some(top) if !top.as_os_str().is_empty() => top.canonicalize().map(|t| t == canonical).unwrap_or(false),
            _ => {
                // bare repository: the git dir is the path itself
                probe
                    .git_text(&["rev-parse", "--absolute-git-dir"])
                    .ok()
                    .and_then(|d| PathBuf::from(d.trim()).canonicalize().ok())
                    .map(|d| d == canonical)
                    .unwrap_or(false)
            }
        };
        if !is_root {
            return Err(not_repo());
        }
        let head_ref = probe
            .git_text(&["symbolic-ref", "--quiet", "--short", "HEAD"])
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|_| "HEAD".to_string());
        let head = probe
            .git_text(&["rev-parse", "--verify", "--quiet", "HEAD^{commit}"])
            .ok()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty());
        Ok(Self {
            root: canonical,
            language,
            head_ref,
            head,
        })
    }

    /// Opens a repository, parsing the language name first.
    pub fn open_named(path: impl AsRef<Path>, language: &str) -> Result<Self, RepoError> {
        let language: Language = language.parse()?;
        Self::open(path, language)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn head_ref(&self) -> &str {
        &self.head_ref
    }

    pub fn head(&self) -> Option<&str> {
        self.head.as_deref()
    }

    fn command(&self, args: &[&str]) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C")
            .arg(&self.root)
            .args([
                "-c",
                "core.quotepath=off",
                "-c",
                "color.ui=never",
                "-c",
                "log.showSignature=false",
                "-c",
                "diff.noprefix=false",
            ])
            .args(args)
            .env("GIT_TERMINAL_PROMPT", "0")
            .env("GIT_OPTIONAL_LOCKS", "0")
            .stdin(Stdio::null());
        cmd
    }

    pub(crate) fn git_bytes(&self, args: &[&str]) -> Result<Vec<u8>, RepoError> {
        let out = self.command(args).output()?;
        if !out.status.success() {
            return Err(RepoError::Git {
                args: args.join(" "),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(out.stdout)
    }

    pub(crate) fn git_text(&self, args: &[&str]) -> Result<String, RepoError> {
        self.git_bytes(args).map(|b| String::from_utf8_lossy(&b).into_owned())
    }

    /// Commit metadata (no diffs) for every ancestor of head, in the order
    /// documented on [`enumerate_commits`](Self::enumerate_commits).
    pub fn enumerate_commit_headers(&self, until: Option<i64>) -> Result<Vec<CommitRecord>, RepoError> {
        let Some(head) = self.head.as_deref() else {
            return Ok(Vec::new());
        };
        let format = format!(
            "--format=%H{f}%P{f}%an{f}%ae{f}%at{f}%ct{f}%B{r}",
            f = "%x1f",
            r = "%x1e"
        );
        let text = self.git_text(&["log", "--no-color", "--no-show-signature", &format, head])?;
        let mut commits = Vec::new();
        for raw in text.split(RECORD) {
            let raw = raw.trim_start_matches('\n');
            if raw.is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.splitn(7, FIELD).collect();
            if fields.len() != 7 {
                return Err(RepoError::Parse(format!("malformed log record: {raw:?}")));
            }
            let parse_time = |s: &str| {
                s.trim()
                    .parse::<i64>()
                    .map_err(|_| RepoError::Parse(format!("bad timestamp `{s}`")))
            };
            let record = CommitRecord {
                id: fields[0].trim().to_string(),
                parent_ids: fields[1].split_whitespace().map(str::to_string).collect(),
                author_id: normalize_author(fields[2], fields[3]),
                author_time: parse_time(fields[4])?.max(0),
                commit_time: parse_time(fields[5])?.max(0),
                message: fields[6].trim_end_matches('\n').to_string(),
                files: Vec::new(),
            };
            if until.is_none_or(|u| record.commit_time <= u) {
                commits.push(record);
            }
        }
        Ok(order_commits(commits))
    }

    /// All ancestors of head committed at or before `until`, with diffs.
    ///
    /// Ordered by commit time ascending; a commit is never listed before one
    /// of its parents, and remaining ties go to the lexicographically
    /// smaller hash.
    pub fn enumerate_commits(&self, until: Option<i64>) -> Result<Vec<CommitRecord>, RepoError> {
        let mut commits = self.enumerate_commit_headers(until)?;
        for c in &mut commits {
            c.files = self.commit_diff(c)?;
        }
        Ok(commits)
    }

    /// Loads one commit with its diff.
    pub fn commit(&self, id: &str) -> Result<CommitRecord, RepoError> {
        let format = format!("--format=%H{f}%P{f}%an{f}%ae{f}%at{f}%ct{f}%B", f = "%x1f");
        let text = self
            .git_text(&["show", "-s", "--no-color", "--no-show-signature", &format, id])
            .map_err(|_| RepoError::UnknownRevision(id.to_string()))?;
        let fields: Vec<&str> = text.splitn(7, FIELD).collect();
        if fields.len() != 7 {
            return Err(RepoError::Parse(format!("malformed commit record for {id}")));
        }
        let parse_time = |s: &str| {
            s.trim()
                .parse::<i64>()
                .map_err(|_| RepoError::Parse(format!("bad timestamp `{s}`")))
        };
        let mut record = CommitRecord {
            id: fields[0].trim().to_string(),
            parent_ids: fields[1].split_whitespace().map(str::to_string).collect(),
            author_id: normalize_author(fields[2], fields[3]),
            author_time: parse_time(fields[4])?.max(0),
            commit_time: parse_time(fields[5])?.max(0),
            message: fields[6].trim_end_matches('\n').to_string(),
            files: Vec::new(),
        };
        record.files = self.commit_diff(&record)?;
        Ok(record)
    }

    /// Diff of a commit against its first parent.
    pub fn commit_diff(&self, commit: &CommitRecord) -> Result<Vec<FileDiff>, RepoError> {
        self.diff_trees(commit.first_parent(), &commit.id)
    }

    /// Zero-context diff between two revisions; `old = None` diffs against
    /// the empty tree. Renames are detected at 50% similarity.
    pub fn diff_trees(&self, old: Option<&str>, new: &str) -> Result<Vec<FileDiff>, RepoError> {
        let mut args = vec![
            "diff-tree",
            "-p",
            "-r",
            "-U0",
            "-M50%",
            "--no-commit-id",
            "--no-ext-diff",
            "--no-textconv",
            "--no-color",
        ];
        match old {
            Some(old) => {
                args.push(old);
                args.push(new);
            }
            None => {
                args.push("--root");
                args.push(new);
            }
        }
        let text = self.git_text(&args)?;
        parse_patch(&text)
    }

    /// Number of newline-delimited lines in `file` at `revision`; 0 when the
    /// file does not exist there.
    pub fn count_lines_at(&self, revision: &str, file: &str) -> Result<usize, RepoError> {
        let spec = format!("{revision}:{file}");
        match self.git_bytes(&["cat-file", "blob", &spec]) {
            Ok(bytes) => Ok(count_lines(&bytes)),
            Err(RepoError::Git { .. }) => Ok(0),
            Err(e) => Err(e),
        }
    }

    pub fn file_exists_at(&self, revision: &str, file: &str) -> Result<bool, RepoError> {
        let spec = format!("{revision}:{file}");
        let status = self
            .command(&["cat-file", "-e", &spec])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()?;
        Ok(status.success())
    }

    /// Blames the given 1-based lines of `file` as of `revision`. One entry
    /// per requested line, in request order.
    pub fn blame_at(&self, revision: &str, file: &str, lines: &[usize]) -> Result<Vec<BlameEntry>, RepoError> {
        blame::blame_at(self, revision, file, lines)
    }

    /// Applies a read-only task to each commit id on `workers` threads.
    /// Output order follows `ids` and is identical to a one-worker run.
    pub fn map_commits_parallel<T, E, F>(&self, ids: &[String], workers: usize, task: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(&RepoHandle, &str) -> Result<T, E> + Sync,
    {
        parallel_map(ids, workers, |id| task(self, id))
    }

    /// Whether `ancestor` is reachable from `descendant` (or equal to it).
    pub fn is_ancestor(&self, ancestor: &str, descendant: &str) -> Result<bool, RepoError> {
        let status = self
            .command(&["merge-base", "--is-ancestor", ancestor, descendant])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()?;
        Ok(status.success())
    }
}

fn count_lines(bytes: &[u8]) -> usize {
    let newlines = bytes.iter().filter(|&&b| b == b'\n').count();
    if bytes.last().is_some_and(|&b| b != b'\n') {
        newlines + 1
    } else {
        newlines
    }
}

/// Kahn's algorithm with a (commit_time, hash) min-heap over ready commits.
/// Parents outside the set count as already emitted.
fn order_commits(commits: Vec<CommitRecord>) -> Vec<CommitRecord> {
    let index: HashMap<&str, usize> = commits.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    let mut pending = vec![0usize; commits.len()];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); commits.len()];
    for (i, c) in commits.iter().enumerate() {
        for p in &c.parent_ids {
            if let Some(&pi) = index.get(p.as_str()) {
                pending[i] += 1;
                children[pi].push(i);
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<(i64, &str, usize)>> = commits
        .iter()
        .enumerate()
        .filter(|(i, _)| pending[*i] == 0)
        .map(|(i, c)| Reverse((c.commit_time, c.id.as_str(), i)))
        .collect();
    let mut order = Vec::with_capacity(commits.len());
    while let Some(Reverse((_, _, i))) = ready.pop() {
        order.push(i);
        for &child in &children[i] {
            pending[child] -= 1;
            if pending[child] == 0 {
                let c = &commits[child];
                ready.push(Reverse((c.commit_time, c.id.as_str(), child)));
            }
        }
    }
    drop(ready);
    let mut slots: Vec<Option<CommitRecord>> = commits.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|i| slots[i].take().expect("each commit emitted once"))
        .collect()
}
