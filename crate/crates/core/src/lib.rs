//! Just-in-time vulnerability prediction workbench.
//!
//! The crate mines a local Git history into labeled commit datasets and
//! evaluates classical prediction models on them:
//!
//! - [`repo`]: read-only access to a Git repository (commits, diffs, blame)
//!   plus the deterministic parallel layer used for per-commit reads.
//! - [`filter`]: drops merges, whitespace-only, comment-only and
//!   non-source commits.
//! - [`features`]: change-level expert metrics (size, diffusion, history,
//!   experience) computed over an incremental history index.
//! - [`vfc`]: vulnerability-fixing commit identification by keyword rules
//!   or a manual patch list.
//! - [`szz`]: B-, AG-, MA- and V-SZZ tracing from fixes to inducing commits.
//! - [`dataset`]: role annotation and chronological train/valid/test splits.
//! - [`models`]: LR, LAPredict, TLEL and a VCCFinder-style linear model.
//! - [`metrics`]: threshold-dependent, ranking and effort-aware metrics.
//! - [`cli`]: the `mining` / `training` / `evaluating` / `inference` commands.

pub mod cli;
pub mod dataset;
pub mod features;
pub mod filter;
pub mod fixture;
pub mod jsonl;
pub mod language;
pub mod lexer;
pub mod metrics;
pub mod models;
pub mod parallel;
pub mod repo;
pub mod szz;
pub mod vfc;

pub use language::Language;
pub use repo::{BlameEntry, ChangeKind, CommitRecord, FileDiff, Hunk, RepoHandle};
