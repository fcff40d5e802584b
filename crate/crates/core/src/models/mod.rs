//! Classical JIT-VP models and their persisted artifacts.
//!
//! | kind         | input                                  | scorer                       |
//! |--------------|----------------------------------------|------------------------------|
//! | `lr`         | z-normalized features                  | logistic regression          |
//! | `la`         | lines added                            | min-max of `la` over a batch |
//! | `tlel`       | raw features                           | 10 balanced forests × 10 trees |
//! | `vcc_linear` | z-normalized features + message tokens | logistic regression          |
//! | `external`   | scores produced elsewhere              | imported from JSONL          |
//!
//! Artifacts are a `JITVPMODEL <version> <kind>` line followed by a JSON
//! payload.

pub mod logistic;
pub mod tree;
pub mod vcc;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::FeatureRow;
use crate::jsonl::{self, numbered_lines};
use crate::metrics::PredictionRecord;
use logistic::{Example, Problem};
use tree::{Tlel, TlelParams, TreeParams};

pub const ARTIFACT_MAGIC: &str = "JITVPMODEL";
pub const ARTIFACT_VERSION: u32 = 1;
pub const DEFAULT_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lr,
    La,
    Tlel,
    VccLinear,
    External,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Lr,
        ModelKind::La,
        ModelKind::Tlel,
        ModelKind::VccLinear,
        ModelKind::External,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::La => "la",
            ModelKind::Tlel => "tlel",
            ModelKind::VccLinear => "vcc_linear",
            ModelKind::External => "external",
        }
    }

    fn needs_both_classes(self) -> bool {
        matches!(self, ModelKind::Lr | ModelKind::Tlel | ModelKind::VccLinear)
    }

    fn iterative(self) -> bool {
        matches!(self, ModelKind::Lr | ModelKind::VccLinear)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(ModelKind::Lr),
            "la" | "lapredict" => Ok(ModelKind::La),
            "tlel" => Ok(ModelKind::Tlel),
            "vcc_linear" | "vcc" | "vccfinder" => Ok(ModelKind::VccLinear),
            "external" => Ok(ModelKind::External),
            _ => Err(ModelError::UnknownModel(s.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unknown model `{0}`; supported: lr, la, tlel, vcc_linear, external")]
    UnknownModel(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains a single class")]
    SingleClassTrainingSet,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("model kind `{0}` is not trained here; import its scores instead")]
    NotTrainable(ModelKind),
    #[error("artifact version mismatch: {0}")]
    VersionMismatch(String),
    #[error("line {line}: score {score} outside [0, 1]")]
    ScoreOutOfRange { line: usize, score: f64 },
    #[error("line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub seed: u64,
    /// Gradient-descent iterations for the linear kinds.
    pub epochs: usize,
    pub l2: f64,
    /// Inverse class frequency example weights for the linear kinds.
    pub class_weighting: bool,
    pub forests: usize,
    pub trees_per_forest: usize,
    pub max_depth: Option<usize>,
    pub hash_bits: u32,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            seed: 42,
            epochs: DEFAULT_ITERATIONS,
            l2: 1e-4,
            class_weighting: true,
            forests: 10,
            trees_per_forest: 10,
            max_depth: None,
            hash_bits: vcc::DEFAULT_HASH_BITS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub stddev: f64,
    /// Zero variance on the training set; the feature maps to 0.
    pub constant: bool,
}

impl Normalization {
    fn apply(&self, v: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (v - self.mean) / self.stddev
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameters {
    Lr {
        bias: f64,
        weights: Vec<f64>,
    },
    La {
        feature_index: usize,
    },
    Tlel(Tlel),
    VccLinear {
        bias: f64,
        weights: Vec<f64>,
        hash_bits: u32,
        token_weights: Vec<(usize, f64)>,
    },
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub kind: ModelKind,
    pub feature_names: Vec<String>,
    pub normalization: Vec<Normalization>,
    pub trained_on: String,
    pub hyperparameters: Hyperparameters,
    pub parameters: Parameters,
}

/// Commit messages keyed by commit id, used by `vcc_linear`.
pub type Messages = HashMap<String, String>;

/// SHA-256 over the canonical JSONL form of the rows.
pub fn fingerprint(rows: &[FeatureRow]) -> String {
    let bytes = jsonl::to_jsonl(rows).expect("feature rows serialize");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn schema_of(rows: &[FeatureRow]) -> Result<Vec<String>, ModelError> {
    let first: Vec<String> = rows[0].feature_names().map(str::to_string).collect();
    for r in rows {
        if !r.feature_names().eq(first.iter().map(String::as_str)) {
            return Err(ModelError::SchemaMismatch(format!(
                "row {} has features different from row {}",
                r.commit_id, rows[0].commit_id
            )));
        }
    }
    Ok(first)
}

fn matrix(rows: &[FeatureRow], names: &[String]) -> Result<Vec<Vec<f64>>, ModelError> {
    rows.iter()
        .map(|r| {
            names
                .iter()
                .map(|n| {
                    r.get(n)
                        .ok_or_else(|| ModelError::SchemaMismatch(format!("row {} lacks feature `{n}`", r.commit_id)))
                })
                .collect()
        })
        .collect()
}

fn labels(rows: &[FeatureRow]) -> Result<Vec<u8>, ModelError> {
    rows.iter()
        .map(|r| {
            r.label
                .ok_or_else(|| ModelError::SchemaMismatch(format!("row {} has no label", r.commit_id)))
        })
        .collect()
}

fn normalization(x: &[Vec<f64>], d: usize) -> Vec<Normalization> {
    let n = x.len() as f64;
    (0..d)
        .map(|j| {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let stddev = var.sqrt();
            let constant = stddev.is_nan() || stddev <= 1e-12;
            Normalization {
                mean,
                stddev: if constant { 1.0 } else { stddev },
                constant,
            }
        })
        .collect()
}

fn normalized(x: &[Vec<f64>], norm: &[Normalization]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| r.iter().zip(norm).map(|(v, n)| n.apply(*v)).collect())
        .collect()
}

fn message_vector(messages: Option<&Messages>, commit_id: &str, bits: u32) -> vcc::SparseVector {
    let text = messages.and_then(|m| m.get(commit_id)).map_or("", String::as_str);
    vcc::hash_tokens(&vcc::tokens(text), bits)
}

pub fn train(
    kind: ModelKind,
    train_set: &[FeatureRow],
    valid_set: &[FeatureRow],
    hp: &Hyperparameters,
    messages: Option<&Messages>,
) -> Result<ModelArtifact, ModelError> {
    if kind == ModelKind::External {
        return Err(ModelError::NotTrainable(kind));
    }
    if train_set.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let names = schema_of(train_set)?;
    let x = matrix(train_set, &names)?;
    let y = labels(train_set)?;
    let positives = y.iter().filter(|&&l| l == 1).count();
    if kind.needs_both_classes() && (positives == 0 || positives == y.len()) {
        return Err(ModelError::SingleClassTrainingSet);
    }
    if !valid_set.is_empty() {
        matrix(valid_set, &names)?;
    }
    if !kind.iterative() && hp.epochs != DEFAULT_ITERATIONS {
        log::warn!("epochs has no effect on model kind {kind}");
    }
    let norm = normalization(&x, names.len());
    let parameters = match kind {
        ModelKind::La => {
            let feature_index = names
                .iter()
                .position(|n| n == "la")
                .ok_or_else(|| ModelError::SchemaMismatch("training rows lack `la`".into()))?;
            Parameters::La { feature_index }
        }
        ModelKind::Lr | ModelKind::VccLinear => {
            let xn = normalized(&x, &norm);
            let vcc = kind == ModelKind::VccLinear;
            let examples: Vec<Example> = xn
                .into_iter()
                .zip(train_set)
                .map(|(dense, row)| Example {
                    dense,
                    sparse: if vcc {
                        message_vector(messages, &row.commit_id, hp.hash_bits)
                    } else {
                        Vec::new()
                    },
                })
                .collect();
            let yf: Vec<f64> = y.iter().map(|&l| f64::from(l)).collect();
            let weights = if hp.class_weighting {
                logistic::balanced_weights(&yf)
            } else {
                vec![1.0; yf.len()]
            };
            let problem = Problem {
                examples: &examples,
                labels: &yf,
                weights: &weights,
                dense_dim: names.len(),
                sparse_dim: if vcc { 1 << hp.hash_bits } else { 0 },
                l2: hp.l2,
            };
            let params = logistic::fit(&problem, hp.epochs);
            let d = names.len();
            if vcc {
                let token_weights = params[1 + d..]
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(i, w)| (i, *w))
                    .collect();
                Parameters::VccLinear {
                    bias: params[0],
                    weights: params[1..=d].to_vec(),
                    hash_bits: hp.hash_bits,
                    token_weights,
                }
            } else {
                Parameters::Lr {
                    bias: params[0],
                    weights: params[1..].to_vec(),
                }
            }
        }
        ModelKind::Tlel => {
            let params = TlelParams {
                forests: hp.forests,
                trees_per_forest: hp.trees_per_forest,
                tree: TreeParams {
                    max_depth: hp.max_depth,
                    ..TreeParams::default()
                },
                seed: hp.seed,
            };
            Parameters::Tlel(Tlel::fit(&x, &y, &params))
        }
        ModelKind::External => unreachable!("rejected above"),
    };
    Ok(ModelArtifact {
        kind,
        feature_names: names,
        normalization: norm,
        trained_on: fingerprint(train_set),
        hyperparameters: hp.clone(),
        parameters,
    })
}

/// Scores rows; labels default to 0 and effort is `la + ld`.
pub fn predict(
    artifact: &ModelArtifact,
    rows: &[FeatureRow],
    messages: Option<&Messages>,
) -> Result<Vec<PredictionRecord>, ModelError> {
    let x = matrix(rows, &artifact.feature_names)?;
    let scores: Vec<f64> = match &artifact.parameters {
        Parameters::Lr { bias, weights } => x
            .iter()
            .map(|r| {
                let z: f64 = bias
                    + r.iter()
                        .zip(&artifact.normalization)
                        .zip(weights)
                        .map(|((v, n), w)| n.apply(*v) * w)
                        .sum::<f64>();
                logistic::sigmoid(z)
            })
            .collect(),
        Parameters::La { feature_index } => {
            let la: Vec<f64> = x.iter().map(|r| r[*feature_index]).collect();
            let lo = la.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = la.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            la.iter()
                .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
                .collect()
        }
        Parameters::Tlel(model) => x.iter().map(|r| model.predict_one(r)).collect(),
        Parameters::VccLinear {
            bias,
            weights,
            hash_bits,
            token_weights,
        } => {
            let tokens: HashMap<usize, f64> = token_weights.iter().copied().collect();
            x.iter()
                .zip(rows)
                .map(|(r, row)| {
                    let mut z: f64 = bias
                        + r.iter()
                            .zip(&artifact.normalization)
                            .zip(weights)
                            .map(|((v, n), w)| n.apply(*v) * w)
                            .sum::<f64>();
                    for (b, v) in message_vector(messages, &row.commit_id, *hash_bits) {
                        z += tokens.get(&b).copied().unwrap_or(0.0) * v;
                    }
                    logistic::sigmoid(z)
                })
                .collect()
        }
        Parameters::External => return Err(ModelError::NotTrainable(ModelKind::External)),
    };
    Ok(rows
        .iter()
        .zip(scores)
        .map(|(row, score)| PredictionRecord {
            commit_id: row.commit_id.clone(),
            score: score.clamp(0.0, 1.0),
            label: row.label.unwrap_or(0),
            effort: row.churn(),
        })
        .collect())
}

pub fn artifact_to_bytes(artifact: &ModelArtifact) -> Vec<u8> {
    let mut out = format!("{ARTIFACT_MAGIC} {ARTIFACT_VERSION} {}\n", artifact.kind).into_bytes();
    serde_json::to_writer(&mut out, artifact).expect("artifact serializes");
    out.push(b'\n');
    out
}

pub fn artifact_from_bytes(bytes: &[u8]) -> Result<ModelArtifact, ModelError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ModelError::VersionMismatch("artifact is not UTF-8".into()))?;
    let (header, payload) = text
        .split_once('\n')
        .ok_or_else(|| ModelError::VersionMismatch("missing header line".into()))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 3 || parts[0] != ARTIFACT_MAGIC {
        return Err(ModelError::VersionMismatch(format!("bad magic header `{header}`")));
    }
    if parts[1] != ARTIFACT_VERSION.to_string() {
        return Err(ModelError::VersionMismatch(format!(
            "artifact version {} but this build reads {ARTIFACT_VERSION}",
            parts[1]
        )));
    }
    let artifact: ModelArtifact =
        serde_json::from_str(payload).map_err(|e| ModelError::VersionMismatch(format!("payload: {e}")))?;
    if artifact.kind.as_str() != parts[2] {
        return Err(ModelError::VersionMismatch(format!(
            "header kind `{}` but payload kind `{}`",
            parts[2], artifact.kind
        )));
    }
    Ok(artifact)
}

pub fn save_artifact(artifact: &ModelArtifact, path: &Path) -> Result<(), ModelError> {
    Ok(jsonl::write_atomic(path, &artifact_to_bytes(artifact))?)
}

pub fn load_artifact(path: &Path) -> Result<ModelArtifact, ModelError> {
    artifact_from_bytes(&std::fs::read(path)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExternalScore {
    commit_id: String,
    score: f64,
    label: u8,
    effort: u64,
}

pub fn parse_external_scores(text: &str) -> Result<Vec<PredictionRecord>, ModelError> {
    let mut out = Vec::new();
    for (line, raw) in numbered_lines(text) {
        let rec: ExternalScore = serde_json::from_str(raw).map_err(|e| ModelError::SchemaViolation {
            line,
            reason: e.to_string(),
        })?;
        if rec.label > 1 {
            return Err(ModelError::SchemaViolation {
                line,
                reason: format!("label must be 0 or 1, got {}", rec.label),
            });
        }
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(ModelError::ScoreOutOfRange { line, score: rec.score });
        }
        out.push(PredictionRecord {
            commit_id: rec.commit_id,
            score: rec.score,
            label: rec.label,
            effort: rec.effort,
        });
    }
    Ok(out)
}

pub fn import_external_scores(path: &Path) -> Result<Vec<PredictionRecord>, ModelError> {
    parse_external_scores(&std::fs::read_to_string(path)?)
}
