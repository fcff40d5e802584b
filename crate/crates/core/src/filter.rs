//! Commit collection filter: drops merges, commits without source-file
//! changes, and commits whose source changes are only whitespace or only
//! comments.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::language::{CommentStyle, Language};
use crate::lexer;
use crate::repo::{CommitRecord, FileDiff, Hunk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    Merge,
    WhitespaceOnly,
    CommentOnly,
    NoLanguageFiles,
    Kept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub keep: bool,
    pub reason: FilterReason,
}

impl FilterVerdict {
    fn drop(reason: FilterReason) -> Self {
        Self { keep: false, reason }
    }
}

pub fn language_extensions(language: Language) -> BTreeSet<&'static str> {
    language.extensions().iter().copied().collect()
}

/// Source-file predicate for one language, optionally widened with extra
/// extensions.
#[derive(Debug, Clone)]
pub struct SourceFilter {
    language: Language,
    extensions: BTreeSet<String>,
}

impl SourceFilter {
    pub fn new(language: Language) -> Self {
        Self {
            language,
            extensions: language.extensions().iter().map(|e| e.to_string()).collect(),
        }
    }

    /// Adds extensions (with or without the leading dot).
    pub fn with_extra_extensions<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for e in extra {
            let e = e.as_ref().trim().trim_start_matches('.');
            if !e.is_empty() {
                self.extensions.insert(e.to_string());
            }
        }
        self
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn comment_style(&self) -> CommentStyle {
        self.language.comment_style()
    }

    pub fn extensions(&self) -> &BTreeSet<String> {
        &self.extensions
    }

    pub fn is_source_path(&self, path: &str) -> bool {
        Path::new(path)
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| self.extensions.contains(e))
    }

    pub fn is_source_file(&self, file: &FileDiff) -> bool {
        file.new_path.as_deref().is_some_and(|p| self.is_source_path(p))
            || file.old_path.as_deref().is_some_and(|p| self.is_source_path(p))
    }

    pub fn source_files<'a>(&'a self, commit: &'a CommitRecord) -> impl Iterator<Item = &'a FileDiff> + 'a {
        commit.files.iter().filter(move |f| self.is_source_file(f))
    }

    /// Checks, in order: merge, source-file presence, whitespace-only,
    /// comment-only.
    pub fn classify(&self, commit: &CommitRecord) -> FilterVerdict {
        if commit.parent_ids.len() > 1 {
            return FilterVerdict::drop(FilterReason::Merge);
        }
        let files: Vec<&FileDiff> = self.source_files(commit).collect();
        if files.is_empty() {
            return FilterVerdict::drop(FilterReason::NoLanguageFiles);
        }
        let hunks = || files.iter().flat_map(|f| f.hunks.iter());
        if hunks().all(hunk_is_whitespace_only) {
            return FilterVerdict::drop(FilterReason::WhitespaceOnly);
        }
        let style = self.comment_style();
        if hunks().all(|h| hunk_is_cosmetic(h, style)) {
            return FilterVerdict::drop(FilterReason::CommentOnly);
        }
        FilterVerdict {
            keep: true,
            reason: FilterReason::Kept,
        }
    }
}

/// Removed and added sides agree once all whitespace (and blank lines)
/// is removed.
pub fn hunk_is_whitespace_only(hunk: &Hunk) -> bool {
    lexer::whitespace_residue(&hunk.removed) == lexer::whitespace_residue(&hunk.added)
}

/// Removed and added sides agree after comment stripping and whitespace
/// removal.
pub fn hunk_is_cosmetic(hunk: &Hunk, style: CommentStyle) -> bool {
    lexer::code_residue(&hunk.removed, style) == lexer::code_residue(&hunk.added, style)
}

pub fn classify_commit(commit: &CommitRecord, language: Language) -> FilterVerdict {
    SourceFilter::new(language).classify(commit)
}

/// Splits commits into kept (input order preserved) and dropped with reasons.
pub fn filter_stream(
    commits: Vec<CommitRecord>,
    filter: &SourceFilter,
) -> (Vec<CommitRecord>, Vec<(String, FilterReason)>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for c in commits {
        let verdict = filter.classify(&c);
        if verdict.keep {
            kept.push(c);
        } else {
            dropped.push((c.id, verdict.reason));
        }
    }
    (kept, dropped)
}
