use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    file_digest, repo_dir, sha256_hex, write_manifest, EvaluatingArgs, InferenceArgs, TrainingArgs, MANIFEST_FILE,
};
use crate::cli::CommitSummary;
use crate::dataset::parse_split_file;
use crate::features::{parse_feature_rows, FeatureRow};
use crate::jsonl;
use crate::metrics::{self, MetricsReport, PredictionRecord, RankingRule};
use crate::models::{self, Hyperparameters, Messages, ModelKind, DEFAULT_ITERATIONS};

/// Commit messages from a mined `commits.jsonl`; empty when the file is
/// absent.
pub fn load_messages(path: &Path) -> anyhow::Result<Messages> {
    let mut out = Messages::new();
    if !path.exists() {
        return Ok(out);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    for (line, raw) in jsonl::numbered_lines(&text) {
        let c: CommitSummary = serde_json::from_str(raw).with_context(|| format!("{} line {line}", path.display()))?;
        out.insert(c.commit_id, c.message);
    }
    Ok(out)
}

fn read_labeled(path: &Path) -> anyhow::Result<Vec<FeatureRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let name = path.display().to_string();
    Ok(parse_split_file(&text, &name)?.into_iter().map(|a| a.row).collect())
}

pub fn artifact_path(out_dir: &Path, kind: ModelKind) -> PathBuf {
    out_dir.join("models").join(format!("{kind}.artifact"))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingConfig {
    pub out_dir: PathBuf,
    pub model: ModelKind,
    pub hyperparameters: Hyperparameters,
    pub train_file: PathBuf,
    pub valid_file: Option<PathBuf>,
}

impl TrainingConfig {
    pub(super) fn from_args(a: &TrainingArgs) -> anyhow::Result<Self> {
        let out_dir = repo_dir(&a.common);
        let model: ModelKind = a.model.parse()?;
        if model == ModelKind::External {
            bail!("model `external` is not trained; pass its scores to evaluating with -score_file");
        }
        if a.epochs == Some(0) {
            bail!("-epochs must be positive");
        }
        let hyperparameters = Hyperparameters {
            seed: a.seed,
            epochs: a.epochs.unwrap_or(DEFAULT_ITERATIONS),
            class_weighting: !a.no_class_weight,
            ..Hyperparameters::default()
        };
        let valid_default = out_dir.join("valid.jsonl");
        Ok(Self {
            train_file: a.train_file.clone().unwrap_or_else(|| out_dir.join("train.jsonl")),
            valid_file: a
                .valid_file
                .clone()
                .or_else(|| valid_default.exists().then_some(valid_default)),
            out_dir,
            model,
            hyperparameters,
        })
    }
}

pub fn run_training(cfg: &TrainingConfig) -> anyhow::Result<PathBuf> {
    let train = read_labeled(&cfg.train_file)?;
    let valid = match &cfg.valid_file {
        Some(p) => read_labeled(p)?,
        None => Vec::new(),
    };
    let messages = load_messages(&cfg.out_dir.join("commits.jsonl"))?;
    let artifact = models::train(cfg.model, &train, &valid, &cfg.hyperparameters, Some(&messages))?;
    let path = artifact_path(&cfg.out_dir, cfg.model);
    let bytes = models::artifact_to_bytes(&artifact);
    jsonl::write_atomic(&path, &bytes).with_context(|| format!("cannot write {}", path.display()))?;
    let mut inputs = BTreeMap::new();
    inputs.insert("train", file_digest(&cfg.train_file)?);
    if let Some(v) = &cfg.valid_file {
        inputs.insert("valid", file_digest(v)?);
    }
    write_manifest(
        &path.with_extension("manifest.json"),
        &json!({
            "command": "training",
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "inputs": inputs,
            "outputs": { "artifact": sha256_hex(&bytes) },
        }),
    )?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluatingConfig {
    pub out_dir: PathBuf,
    pub model: ModelKind,
    pub threshold: f64,
    pub ranking: RankingRule,
    pub test_file: PathBuf,
    pub score_file: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl EvaluatingConfig {
    pub(super) fn from_args(a: &EvaluatingArgs) -> anyhow::Result<Self> {
        let out_dir = repo_dir(&a.common);
        let model: ModelKind = a.model.parse()?;
        if model == ModelKind::External && a.score_file.is_none() {
            bail!("-model external needs -score_file");
        }
        if !(0.0..=1.0).contains(&a.threshold) {
            bail!("-threshold must lie in [0, 1]");
        }
        Ok(Self {
            test_file: a.test_file.clone().unwrap_or_else(|| out_dir.join("test.jsonl")),
            out_dir,
            model,
            threshold: a.threshold,
            ranking: a.ranking.parse().map_err(anyhow::Error::msg)?,
            score_file: a.score_file.clone(),
            csv: a.csv.clone(),
        })
    }
}

pub fn run_evaluating(cfg: &EvaluatingConfig) -> anyhow::Result<MetricsReport> {
    let mut inputs = BTreeMap::new();
    let predictions: Vec<PredictionRecord> = if cfg.model == ModelKind::External {
        let path = cfg.score_file.as_deref().context("-model external needs -score_file")?;
        inputs.insert("scores", file_digest(path)?);
        models::import_external_scores(path).with_context(|| format!("in {}", path.display()))?
    } else {
        let path = artifact_path(&cfg.out_dir, cfg.model);
        if !path.exists() {
            bail!("artifact not found: {} (run training first)", path.display());
        }
        let artifact = models::load_artifact(&path)?;
        let rows = read_labeled(&cfg.test_file)?;
        let messages = load_messages(&cfg.out_dir.join("commits.jsonl"))?;
        inputs.insert("artifact", file_digest(&path)?);
        inputs.insert("test", file_digest(&cfg.test_file)?);
        models::predict(&artifact, &rows, Some(&messages))?
    };
    let report = metrics::report(&predictions, cfg.threshold, cfg.ranking)?;

    let dir = cfg.out_dir.join("results").join(cfg.model.as_str());
    jsonl::write_jsonl(&dir.join("predictions.jsonl"), &predictions)?;
    let mut text = serde_json::to_vec_pretty(&report)?;
    text.push(b'\n');
    jsonl::write_atomic(&dir.join("metrics.json"), &text)?;
    if let Some(csv) = &cfg.csv {
        let dataset = cfg
            .out_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let body = format!(
            "{}\n{}\n",
            MetricsReport::csv_header(),
            report.csv_row(cfg.model.as_str(), &dataset)
        );
        jsonl::write_atomic(csv, body.as_bytes())?;
    }
    write_manifest(
        &dir.join(MANIFEST_FILE),
        &json!({
            "command": "evaluating",
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "inputs": inputs,
        }),
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct InferenceConfig {
    pub out_dir: PathBuf,
    pub model: ModelKind,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl InferenceConfig {
    pub(super) fn from_args(a: &InferenceArgs) -> anyhow::Result<Self> {
        let model: ModelKind = a.model.parse()?;
        if model == ModelKind::External {
            bail!("model `external` has no artifact to run");
        }
        Ok(Self {
            out_dir: repo_dir(&a.common),
            model,
            input: a.input.clone(),
            output: a.output.clone(),
        })
    }
}

/// One line of inference output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceLine {
    pub commit_id: String,
    pub score: f64,
    pub effort: u64,
}

pub fn run_inference(cfg: &InferenceConfig) -> anyhow::Result<Vec<InferenceLine>> {
    let path = artifact_path(&cfg.out_dir, cfg.model);
    if !path.exists() {
        bail!("artifact not found: {} (run training first)", path.display());
    }
    let artifact = models::load_artifact(&path)?;
    let (text, source) = match &cfg.input {
        Some(p) => (
            std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
            p.display().to_string(),
        ),
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            (s, "standard input".to_string())
        }
    };
    let rows = parse_feature_rows(&text).with_context(|| format!("invalid feature row in {source}"))?;
    let messages = load_messages(&cfg.out_dir.join("commits.jsonl"))?;
    let lines: Vec<InferenceLine> = models::predict(&artifact, &rows, Some(&messages))?
        .into_iter()
        .map(|p| InferenceLine {
            commit_id: p.commit_id,
            score: p.score,
            effort: p.effort,
        })
        .collect();
    let bytes = jsonl::to_jsonl(&lines)?;
    match &cfg.output {
        Some(out) => {
            jsonl::write_atomic(out, &bytes).with_context(|| format!("cannot write {}", out.display()))?;
            let manifest = out.with_file_name(format!(
                "{}.manifest.json",
                out.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            ));
            write_manifest(
                &manifest,
                &json!({
                    "command": "inference",
                    "tool_version": env!("CARGO_PKG_VERSION"),
                    "config": cfg,
                    "inputs": { "artifact": file_digest(&path)?, "features": sha256_hex(text.as_bytes()) },
                }),
            )?;
        }
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(lines)
}
