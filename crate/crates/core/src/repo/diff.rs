//! Parser for `git diff-tree -p -U0` output.

use serde::{Deserialize, Serialize};

use super::RepoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Add,
    Delete,
    Modify,
    Rename,
}

/// One `@@` block. With zero context lines, `old_start`/`new_start` point at
/// the first removed/added line, or at the line before the gap when the
/// corresponding count is 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_count: usize,
    pub new_start: usize,
    pub new_count: usize,
    pub removed: Vec<String>,
    pub added: Vec<String>,
}

impl Hunk {
    /// Old-side line number of the `i`-th removed line.
    pub fn old_line(&self, i: usize) -> usize {
        self.old_start + i
    }

    /// New-side line number of the `i`-th added line.
    pub fn new_line(&self, i: usize) -> usize {
        self.new_start + i
    }

    pub fn contains_new_line(&self, line: usize) -> bool {
        self.new_count > 0 && line >= self.new_start && line < self.new_start + self.new_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    /// Absent for added files.
    pub old_path: Option<String>,
    /// Absent for deleted files.
    pub new_path: Option<String>,
    pub change_kind: ChangeKind,
    pub hunks: Vec<Hunk>,
    /// Binary content; such files never carry hunks.
    pub binary: bool,
    pub mode_changed: bool,
}

impl FileDiff {
    /// The path that identifies the file after the change (old path for deletions).
    pub fn path(&self) -> &str {
        self.new_path
            .as_deref()
            .or(self.old_path.as_deref())
            .unwrap_or_default()
    }

    pub fn lines_added(&self) -> usize {
        self.hunks.iter().map(|h| h.added.len()).sum()
    }

    pub fn lines_removed(&self) -> usize {
        self.hunks.iter().map(|h| h.removed.len()).sum()
    }

    /// Renames or mode flips that carry no content change.
    pub fn is_meta_only(&self) -> bool {
        self.hunks.is_empty() && !self.binary && (self.change_kind == ChangeKind::Rename || self.mode_changed)
    }

    /// Hunk whose added side covers new-side `line`.
    pub fn hunk_for_new_line(&self, line: usize) -> Option<&Hunk> {
        self.hunks.iter().find(|h| h.contains_new_line(line))
    }

    /// Maps a new-side line that is outside every hunk to its old-side line.
    pub fn map_unchanged_line(&self, line: usize) -> usize {
        let mut shift: isize = 0;
        for h in &self.hunks {
            let new_end = if h.new_count == 0 {
                h.new_start
            } else {
                h.new_start + h.new_count - 1
            };
            if new_end < line {
                shift += h.old_count as isize - h.new_count as isize;
            }
        }
        (line as isize + shift).max(1) as usize
    }
}

#[derive(Default)]
struct Builder {
    header_old: Option<String>,
    header_new: Option<String>,
    minus_path: Option<Option<String>>,
    plus_path: Option<Option<String>>,
    rename_from: Option<String>,
    rename_to: Option<String>,
    added_file: bool,
    deleted_file: bool,
    binary: bool,
    mode_changed: bool,
    hunks: Vec<Hunk>,
}

impl Builder {
    fn finish(self) -> Result<FileDiff, RepoError> {
        for h in &self.hunks {
            if h.removed.len() != h.old_count || h.added.len() != h.new_count {
                return Err(RepoError::Parse(format!(
                    "hunk line counts do not match header in {:?}",
                    self.plus_path.clone().flatten().or(self.header_new.clone())
                )));
            }
        }
        let old_guess = self
            .rename_from
            .clone()
            .or_else(|| self.minus_path.clone().flatten())
            .or_else(|| self.header_old.clone());
        let new_guess = self
            .rename_to
            .clone()
            .or_else(|| self.plus_path.clone().flatten())
            .or_else(|| self.header_new.clone());
        let (kind, old_path, new_path) = if self.added_file {
            (ChangeKind::Add, None, new_guess)
        } else if self.deleted_file {
            (ChangeKind::Delete, old_guess, None)
        } else if self.rename_from.is_some() && self.rename_from != self.rename_to {
            (ChangeKind::Rename, old_guess, new_guess)
        } else {
            (ChangeKind::Modify, old_guess, new_guess)
        };
        if old_path.is_none() && new_path.is_none() {
            return Err(RepoError::Parse("diff entry without a path".into()));
        }
        Ok(FileDiff {
            old_path,
            new_path,
            change_kind: kind,
            hunks: if self.binary { Vec::new() } else { self.hunks },
            binary: self.binary,
            mode_changed: self.mode_changed,
        })
    }
}

/// Parses a zero-context patch as printed by `git diff-tree -p -U0`.
pub fn parse_patch(text: &str) -> Result<Vec<FileDiff>, RepoError> {
    let mut files = Vec::new();
    let mut current: Option<Builder> = None;
    let mut in_hunks = false;

    for line in text.split('\n') {
        if let Some(rest) = line.strip_prefix("diff --git ") {
            if let Some(b) = current.take() {
                files.push(b.finish()?);
            }
            let (old, new) = split_header_paths(rest);
            current = Some(Builder {
                header_old: old,
                header_new: new,
                ..Builder::default()
            });
            in_hunks = false;
            continue;
        }
        let Some(b) = current.as_mut() else {
            continue;
        };
        if let Some(hdr) = line.strip_prefix("@@ ") {
            b.hunks.push(parse_hunk_header(hdr)?);
            in_hunks = true;
            continue;
        }
        if in_hunks {
            let hunk = b.hunks.last_mut().expect("hunk started");
            if let Some(content) = line.strip_prefix('-') {
                hunk.removed.push(content.to_string());
            } else if let Some(content) = line.strip_prefix('+') {
                hunk.added.push(content.to_string());
            }
            // "\ No newline at end of file" and context lines are ignored.
            continue;
        }
        if line.starts_with("new file mode") {
            b.added_file = true;
        } else if line.starts_with("deleted file mode") {
            b.deleted_file = true;
        } else if line.starts_with("old mode") || line.starts_with("new mode") {
            b.mode_changed = true;
        } else if let Some(p) = line.strip_prefix("rename from ") {
            b.rename_from = Some(unquote(p));
        } else if let Some(p) = line.strip_prefix("rename to ") {
            b.rename_to = Some(unquote(p));
        } else if let Some(p) = line.strip_prefix("--- ") {
            b.minus_path = Some(strip_side(p, "a/"));
        } else if let Some(p) = line.strip_prefix("+++ ") {
            b.plus_path = Some(strip_side(p, "b/"));
        } else if line.starts_with("Binary files ") || line == "GIT binary patch" {
            b.binary = true;
        }
    }
    if let Some(b) = current.take() {
        files.push(b.finish()?);
    }
    Ok(files)
}

fn strip_side(raw: &str, prefix: &str) -> Option<String> {
    let p = unquote(raw.trim_end_matches('\t'));
    if p == "/dev/null" {
        return None;
    }
    Some(p.strip_prefix(prefix).map(str::to_string).unwrap_or(p))
}

fn split_header_paths(rest: &str) -> (Option<String>, Option<String>) {
    if rest.starts_with('"') {
        // quoted form: "a/..." "b/..." (either side may be unquoted)
        if let Some((first, tail)) = take_quoted(rest) {
            let second = tail.trim_start();
            let second = if second.starts_with('"') {
                take_quoted(second).map(|(s, _)| s)
            } else {
                Some(second.to_string())
            };
            return (
                first.strip_prefix("a/").map(str::to_string),
                second.and_then(|s| s.strip_prefix("b/").map(str::to_string)),
            );
        }
        return (None, None);
    }
    // Unquoted "a/P b/P": only unambiguous when both sides are equal.
    let bytes = rest.len();
    if bytes >= 5 && (bytes - 5).is_multiple_of(2) {
        let k = (bytes - 5) / 2;
        if rest.is_char_boundary(2 + k) && rest.is_char_boundary(5 + k) {
            let old = &rest[2..2 + k];
            let new = &rest[5 + k..];
            if rest.starts_with("a/") && rest[2 + k..].starts_with(" b/") && old == new {
                return (Some(old.to_string()), Some(new.to_string()));
            }
        }
    }
    (None, None)
}

fn take_quoted(s: &str) -> Option<(String, &str)> {
    let body = s.strip_prefix('"')?;
    let mut escaped = false;
    for (i, c) in body.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '"' {
            let quoted = &s[..i + 2];
            return Some((unquote(quoted), &body[i + 1..]));
        }
    }
    None
}

/// Undoes Git's C-style path quoting.
pub fn unquote(s: &str) -> String {
    let Some(inner) = s.strip_prefix('"').and_then(|t| t.strip_suffix('"')) else {
        return s.to_string();
    };
    let mut out: Vec<u8> = Vec::with_capacity(inner.len());
    let bytes = inner.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'\\' || i + 1 >= bytes.len() {
            out.push(bytes[i]);
            i += 1;
            continue;
        }
        let c = bytes[i + 1];
        match c {
            b'n' => out.push(b'\n'),
            b't' => out.push(b'\t'),
            b'r' => out.push(b'\r'),
            b'a' => out.push(7),
            b'b' => out.push(8),
            b'f' => out.push(12),
            b'v' => out.push(11),
            b'0'..=b'7' => {
                let oct = bytes.get(i + 1..i + 4).and_then(|o| std::str::from_utf8(o).ok());
                if let Some(v) = oct.and_then(|o| u8::from_str_radix(o, 8).ok()) {
                    out.push(v);
                    i += 4;
                    continue;
                }
                out.push(c);
            }
            other => out.push(other),
        }
        i += 2;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn parse_range(s: &str) -> Result<(usize, usize), RepoError> {
    let bad = || RepoError::Parse(format!("bad hunk range `{s}`"));
    match s.split_once(',') {
        Some((start, count)) => Ok((start.parse().map_err(|_| bad())?, count.parse().map_err(|_| bad())?)),
        None => Ok((s.parse().map_err(|_| bad())?, 1)),
    }
}

fn parse_hunk_header(hdr: &str) -> Result<Hunk, RepoError> {
    // "-a[,b] +c[,d] @@ trailing context"
    let mut parts = hdr.split_whitespace();
    let old = parts
        .next()
        .and_then(|p| p.strip_prefix('-'))
        .ok_or_else(|| RepoError::Parse(format!("bad hunk header `{hdr}`")))?;
    let new = parts
        .next()
        .and_then(|p| p.strip_prefix('+'))
        .ok_or_else(|| RepoError::Parse(format!("bad hunk header `{hdr}`")))?;
    let (old_start, old_count) = parse_range(old)?;
    let (new_start, new_count) = parse_range(new)?;
    Ok(Hunk {
        old_start,
        old_count,
        new_start,
        new_count,
        removed: Vec::new(),
        added: Vec::new(),
    })
}
