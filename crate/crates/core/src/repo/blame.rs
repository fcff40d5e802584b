use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{RepoError, RepoHandle};

/// Origin of one line of a file at a given revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlameEntry {
    pub file: String,
    pub line_no: usize,
    pub content: String,
    pub origin_commit: String,
    /// Path of the line's file inside `origin_commit` (differs after renames).
    pub origin_path: String,
    pub origin_line_no: usize,
}

pub(super) fn blame_at(
    repo: &RepoHandle,
    revision: &str,
    file: &str,
    lines: &[usize],
) -> Result<Vec<BlameEntry>, RepoError> {
    if lines.is_empty() {
        return Ok(Vec::new());
    }
    if !repo.file_exists_at(revision, file)? {
        return Err(RepoError::FileAbsentAtRevision {
            revision: revision.to_string(),
            file: file.to_string(),
        });
    }
    let len = repo.count_lines_at(revision, file)?;
    if let Some(&bad) = lines.iter().find(|&&l| l == 0 || l > len) {
        return Err(RepoError::LineOutOfRange {
            file: file.to_string(),
            line: bad,
            len,
        });
    }

    let mut wanted: Vec<usize> = lines.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let mut ranges: Vec<String> = Vec::new();
    let mut start = wanted[0];
    let mut end = start;
    for &l in &wanted[1..] {
        if l == end + 1 {
            end = l;
        } else {
            ranges.push(format!("{start},{end}"));
            start = l;
            end = l;
        }
    }
    ranges.push(format!("{start},{end}"));

    let mut args: Vec<&str> = vec!["blame", "--line-porcelain"];
    for r in &ranges {
        args.push("-L");
        args.push(r);
    }
    args.push(revision);
    args.push("--");
    args.push(file);
    let text = repo.git_text(&args)?;
    let by_line = parse_line_porcelain(&text, file)?;

    lines
        .iter()
        .map(|l| {
            by_line
                .get(l)
                .cloned()
                .ok_or_else(|| RepoError::Parse(format!("blame output lacks line {l} of {file}")))
        })
        .collect()
}

fn parse_line_porcelain(text: &str, file: &str) -> Result<HashMap<usize, BlameEntry>, RepoError> {
    let mut out = HashMap::new();
    let mut header: Option<(String, usize, usize)> = None;
    let mut origin_path: Option<String> = None;
    for line in text.split('\n') {
        if let Some(content) = line.strip_prefix('\t') {
            let (commit, orig, fin) = header
                .take()
                .ok_or_else(|| RepoError::Parse("blame content before header".into()))?;
            let entry = BlameEntry {
                file: file.to_string(),
                line_no: fin,
                content: content.to_string(),
                origin_commit: commit,
                origin_path: origin_path.take().unwrap_or_else(|| file.to_string()),
                origin_line_no: orig,
            };
            out.insert(fin, entry);
            continue;
        }
        if header.is_none() {
            let mut parts = line.split(' ');
            if let (Some(hash), Some(orig), Some(fin)) = (parts.next(), parts.next(), parts.next()) {
                if hash.len() >= 40 && hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                    let orig = orig.parse().map_err(|_| RepoError::Parse(line.to_string()))?;
                    let fin = fin.parse().map_err(|_| RepoError::Parse(line.to_string()))?;
                    header = Some((hash.to_string(), orig, fin));
                    continue;
                }
            }
        } else if let Some(name) = line.strip_prefix("filename ") {
            origin_path = Some(super::unquote(name));
        }
    }
    Ok(out)
}
