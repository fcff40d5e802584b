//! `jitvp mining | training | evaluating | inference`.
//!
//! Long flags use the single-dash spelling (`-dg_save_folder`,
//! `-repo_name`, ...); the usual `--` forms are accepted too. Every command
//! writes under `<dg_save_folder>/<repo_name>/` and leaves a
//! `manifest.json` (configuration, tool version, input digests) next to its
//! outputs.

mod mining;
mod modeling;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::jsonl;

pub use mining::{run_mining, CommitSummary, FileSummary, MiningConfig, MiningSummary, Setting, MINING_FILES};
pub use modeling::{
    load_messages, run_evaluating, run_inference, run_training, EvaluatingConfig, InferenceConfig, InferenceLine,
    TrainingConfig,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "jitvp", version, about = "Just-in-time vulnerability prediction workbench")]
pub struct Cli {
    /// Log progress to standard error.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine a local repository into features, labels and splits.
    Mining(MiningArgs),
    /// Train a model on the mined (or a supplied) training split.
    Training(TrainingArgs),
    /// Score the test split and compute the metric report.
    Evaluating(EvaluatingArgs),
    /// Score new commits given as feature JSONL.
    Inference(InferenceArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output root; results go to <DIR>/<repo_name>/.
    #[arg(long = "dg_save_folder", visible_aliases = ["save_folder", "save-folder"], value_name = "DIR")]
    pub save_folder: PathBuf,
    #[arg(long = "repo_name", visible_alias = "repo-name")]
    pub repo_name: String,
    /// c, c++, java, javascript or python.
    #[arg(long = "repo_language", visible_alias = "repo-language")]
    pub repo_language: Option<String>,
}

#[derive(Debug, Args)]
pub struct MiningArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "repo_path", visible_alias = "repo-path")]
    pub repo_path: PathBuf,
    /// Only `local` is supported.
    #[arg(long, default_value = "local")]
    pub mode: String,
    #[arg(long, default_value_t = 50)]
    pub workers: usize,
    /// b, ag, ma or v.
    #[arg(long = "szz", visible_alias = "szz_variant", default_value = "v")]
    pub szz: String,
    /// train,valid,test fractions.
    #[arg(long = "split", default_value = "0.75,0.05,0.2")]
    pub split: String,
    /// JSONL of {"commit_id", "Repository"} fixing commits.
    #[arg(long = "manual_patch_file", visible_aliases = ["manual-patch-file", "patch_file"])]
    pub manual_patch_file: Option<PathBuf>,
    /// strong_only, strong_or_medium or none. Defaults to strong_only, or
    /// none when a manual patch file is given.
    #[arg(long = "regex_level", visible_alias = "regex-level")]
    pub regex_level: Option<String>,
    /// Ignore commits committed after this UNIX time.
    #[arg(long)]
    pub until: Option<i64>,
    /// realistic keeps neutral commits; ideal keeps only VIC and VFC.
    #[arg(long, default_value = "realistic")]
    pub setting: String,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: String,
    /// Gradient-descent iterations for lr and vcc_linear.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Train without inverse class frequency weights.
    #[arg(long = "no_class_weight", visible_alias = "no-class-weight")]
    pub no_class_weight: bool,
    #[arg(long = "train_file", visible_alias = "train-file")]
    pub train_file: Option<PathBuf>,
    #[arg(long = "valid_file", visible_alias = "valid-file")]
    pub valid_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluatingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// density (score / (effort + 1)) or score.
    #[arg(long, default_value = "density")]
    pub ranking: String,
    #[arg(long = "test_file", visible_alias = "test-file")]
    pub test_file: Option<PathBuf>,
    /// Prediction JSONL for `-model external`.
    #[arg(long = "score_file", visible_alias = "score-file")]
    pub score_file: Option<PathBuf>,
    /// Also write the metrics as a CSV row with header to this path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub model: String,
    /// Feature JSONL; standard input when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Prediction JSONL; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Rewrites single-dash long flags (`-repo_name`) to `--repo_name`.
pub fn normalize_args<I, T>(args: I) -> Vec<OsString>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    args.into_iter()
        .map(Into::into)
        .enumerate()
        .map(|(i, a)| {
            if i == 0 {
                return a;
            }
            match a.to_str() {
                Some(s) if s.len() > 2 && s.starts_with('-') && s.as_bytes()[1].is_ascii_alphabetic() => {
                    OsString::from(format!("-{s}"))
                }
                _ => a,
            }
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_manifest(path: &Path, manifest: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_vec_pretty(manifest)?;
    text.push(b'\n');
    jsonl::write_atomic(path, &text).with_context(|| format!("cannot write {}", path.display()))
}

fn repo_dir(common: &CommonArgs) -> PathBuf {
    common.save_folder.join(&common.repo_name)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Mining(a) => {
            let config = MiningConfig::from_args(&a)?;
            let summary = run_mining(&config)?;
            eprintln!(
                "mined {} commits ({} kept, {} VFC, {} VIC) into {}",
                summary.commits_total,
                summary.commits_kept,
                summary.vfcs,
                summary.vics,
                summary.out_dir.display()
            );
        }
        Command::Training(a) => {
            let config = TrainingConfig::from_args(&a)?;
            let path = run_training(&config)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Evaluating(a) => {
            let config = EvaluatingConfig::from_args(&a)?;
            let report = run_evaluating(&config)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Inference(a) => {
            let config = InferenceConfig::from_args(&a)?;
            run_inference(&config)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_dash_flags_are_rewritten() {
        let out = normalize_args(["jitvp", "mining", "-repo_name", "x", "-h", "--workers", "-5"]);
        let out: Vec<&str> = out.iter().map(|s| s.to_str().unwrap()).collect();
        assert_eq!(out, ["jitvp", "mining", "--repo_name", "x", "-h", "--workers", "-5"]);
    }

    #[test]
    fn parses_single_dash_invocation() {
        let cli = Cli::try_parse_from(normalize_args([
            "jitvp",
            "training",
            "-dg_save_folder",
            "out",
            "-model",
            "lr",
            "-repo_name",
            "demo",
            "-repo_language",
            "C",
            "-epochs",
            "10",
        ]))
        .unwrap();
        let Command::Training(t) = cli.command else {
            panic!("expected training");
        };
        assert_eq!(t.epochs, Some(10));
        assert_eq!(t.common.save_folder, PathBuf::from("out"));
    }

    #[test]
    fn missing_repo_path_is_a_usage_error() {
        let err = Cli::try_parse_from(["jitvp", "mining", "--dg_save_folder", "o", "--repo_name", "r"]).unwrap_err();
        assert!(err.use_stderr());
        assert!(err.to_string().contains("repo_path"));
    }
}
