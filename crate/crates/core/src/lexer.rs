//! Hunk-local comment stripping and whitespace residues.
//!
//! Block-comment state carries across the lines handed to one call (the
//! removed or added side of a single hunk), never across hunks or files.
//! Quotes are recognised only when they close on the same line; a comment
//! marker inside such a pair is kept as code.

use crate::language::CommentStyle;

/// Removes comments from a sequence of lines, returning one residue per line.
pub fn strip_comments<S: AsRef<str>>(lines: &[S], style: CommentStyle) -> Vec<String> {
    let mut in_block = false;
    lines
        .iter()
        .map(|l| strip_line(l.as_ref(), style, &mut in_block))
        .collect()
}

fn strip_line(line: &str, style: CommentStyle, in_block: &mut bool) -> String {
    let chars: Vec<char> = line.chars().collect();
    let mut out = String::with_capacity(line.len());
    let mut i = 0;
    while i < chars.len() {
        if *in_block {
            if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                *in_block = false;
                i += 2;
            } else {
                i += 1;
            }
            continue;
        }
        let c = chars[i];
        if c == '"' || c == '\'' || (c == '`' && style == CommentStyle::CLike) {
            if let Some(end) = closing_quote(&chars, i) {
                out.extend(&chars[i..=end]);
                i = end + 1;
                continue;
            }
        }
        match style {
            CommentStyle::CLike => {
                if c == '/' && chars.get(i + 1) == Some(&'/') {
                    break;
                }
                if c == '/' && chars.get(i + 1) == Some(&'*') {
                    *in_block = true;
                    i += 2;
                    continue;
                }
            }
            CommentStyle::Hash => {
                if c == '#' {
                    break;
                }
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

fn closing_quote(chars: &[char], open: usize) -> Option<usize> {
    let quote = chars[open];
    let mut i = open + 1;
    while i < chars.len() {
        match chars[i] {
            '\\' => i += 2,
            c if c == quote => return Some(i),
            _ => i += 1,
        }
    }
    None
}

/// The line with every whitespace character removed.
pub fn squeeze(line: &str) -> String {
    line.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Non-empty whitespace-free residues, in order.
pub fn whitespace_residue<S: AsRef<str>>(lines: &[S]) -> Vec<String> {
    lines
        .iter()
        .map(|l| squeeze(l.as_ref()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Non-empty residues after comment stripping and whitespace removal.
pub fn code_residue<S: AsRef<str>>(lines: &[S], style: CommentStyle) -> Vec<String> {
    strip_comments(lines, style)
        .iter()
        .map(|l| squeeze(l))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Trims and collapses internal whitespace runs to one space.
pub fn normalize_ws(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}
