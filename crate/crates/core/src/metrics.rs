//! Evaluation metrics over scored commits.
//!
//! Threshold metrics count `score >= threshold` as a positive prediction.
//! The effort-aware metrics (recall at 20% effort, effort at 20% recall,
//! Popt) walk a ranking of the records, by default descending
//! `score / (effort + 1)`, with ties going to the higher score and then the
//! smaller commit id. Undefined ratios are reported as 0 and named in the
//! report's `flags`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub commit_id: String,
    pub score: f64,
    pub label: u8,
    pub effort: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("evaluation set has only one class")]
    SingleClassEvalSet,
    #[error("evaluation set has no positive records")]
    NoPositives,
    #[error("total effort is zero")]
    ZeroEffort,
    #[error("evaluation set is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(records: &[PredictionRecord], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for r in records {
        match (r.score >= threshold, r.label == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    /// Metrics whose denominator was zero and were set to 0.
    pub undefined: Vec<&'static str>,
}

fn ratio(num: f64, den: f64, name: &'static str, undefined: &mut Vec<&'static str>) -> f64 {
    if den == 0.0 {
        undefined.push(name);
        0.0
    } else {
        num / den
    }
}

pub fn classification_metrics(c: &ConfusionCounts) -> ClassificationMetrics {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let mut undefined = Vec::new();
    let accuracy = ratio(tp + tn, tp + fp + tn + fn_, "accuracy", &mut undefined);
    let precision = ratio(tp, tp + fp, "precision", &mut undefined);
    let recall = ratio(tp, tp + fn_, "recall", &mut undefined);
    let f1 = ratio(2.0 * precision * recall, precision + recall, "f1", &mut undefined);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, den, "mcc", &mut undefined).clamp(-1.0, 1.0);
    ClassificationMetrics {
        accuracy,
        precision,
        recall,
        f1,
        mcc,
        undefined,
    }
}

fn class_sizes(records: &[PredictionRecord]) -> (usize, usize) {
    let p = records.iter().filter(|r| r.label == 1).count();
    (p, records.len() - p)
}

/// Records grouped by equal score, highest score first.
fn score_groups(records: &[PredictionRecord]) -> Vec<(usize, usize)> {
    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last: Option<f64> = None;
    for r in sorted {
        if last != Some(r.score) {
            groups.push((0, 0));
            last = Some(r.score);
        }
        let g = groups.last_mut().expect("group pushed above");
        if r.label == 1 {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    let (p, n) = class_sizes(records);
    if p == 0 || n == 0 {
        return Err(MetricsError::SingleClassEvalSet);
    }
    let mut negatives_below = n as f64;
    let mut sum = 0.0;
    for (pos, neg) in score_groups(records) {
        negatives_below -= neg as f64;
        sum += pos as f64 * (negatives_below + 0.5 * neg as f64);
    }
    Ok(sum / (p as f64 * n as f64))
}

/// Average precision: the precision at each distinct score cut, weighted by
/// the recall gained at that cut.
pub fn pr_auc(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    let (p, n) = class_sizes(records);
    if p == 0 || n == 0 {
        return Err(MetricsError::SingleClassEvalSet);
    }
    let (mut tp, mut fp, mut area) = (0usize, 0usize, 0.0);
    for (pos, neg) in score_groups(records) {
        tp += pos;
        fp += neg;
        if pos > 0 {
            area += (pos as f64 / p as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(area.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingRule {
    /// `score / (effort + 1)` descending.
    #[default]
    Density,
    /// Raw score descending.
    Score,
}

impl fmt::Display for RankingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankingRule::Density => "density",
            RankingRule::Score => "score",
        })
    }
}

impl FromStr for RankingRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "density" => Ok(RankingRule::Density),
            "score" => Ok(RankingRule::Score),
            _ => Err(format!("unknown ranking `{s}` (density | score)")),
        }
    }
}

pub fn effort_ranking(records: &[PredictionRecord], rule: RankingRule) -> Vec<&PredictionRecord> {
    let key = |r: &PredictionRecord| match rule {
        RankingRule::Density => r.score / (r.effort as f64 + 1.0),
        RankingRule::Score => r.score,
    };
    let mut ranked: Vec<&PredictionRecord> = records.iter().collect();
    ranked.sort_by(|a, b| {
        key(b)
            .total_cmp(&key(a))
            .then_with(|| b.score.total_cmp(&a.score))
            .then_with(|| a.commit_id.cmp(&b.commit_id))
    });
    ranked
}

fn effort_totals(records: &[PredictionRecord]) -> Result<(u64, usize), MetricsError> {
    let total: u64 = records.iter().map(|r| r.effort).sum();
    let positives = class_sizes(records).0;
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    if total == 0 {
        return Err(MetricsError::ZeroEffort);
    }
    Ok((total, positives))
}

/// Fraction of positives found while the cumulative effort stays within
/// `budget` of the total; the record that crosses the budget is left out,
/// except that a positive budget always admits the top-ranked record.
pub fn recall_at_effort(records: &[PredictionRecord], budget: f64, rule: RankingRule) -> Result<f64, MetricsError> {
    let (total, positives) = effort_totals(records)?;
    let limit = budget * total as f64 + 1e-9;
    let (mut spent, mut found) = (0u64, 0usize);
    for (i, r) in effort_ranking(records, rule).into_iter().enumerate() {
        spent += r.effort;
        if spent as f64 > limit && !(i == 0 && budget > 0.0) {
            break;
        }
        found += usize::from(r.label == 1);
    }
    Ok(found as f64 / positives as f64)
}

/// Fraction of total effort spent when `ceil(target * P)` positives have
/// been found.
pub fn effort_at_recall(records: &[PredictionRecord], target: f64, rule: RankingRule) -> Result<f64, MetricsError> {
    let (total, positives) = effort_totals(records)?;
    let needed = (target * positives as f64 - 1e-9).ceil().max(0.0) as usize;
    if needed == 0 {
        return Ok(0.0);
    }
    let (mut spent, mut found) = (0u64, 0usize);
    for r in effort_ranking(records, rule) {
        spent += r.effort;
        found += usize::from(r.label == 1);
        if found >= needed {
            break;
        }
    }
    Ok(spent as f64 / total as f64)
}

/// Area under the cumulative effort/recall curve of an inspection order.
fn curve_area(order: &[&PredictionRecord], total_effort: f64, positives: f64) -> f64 {
    let (mut x, mut y, mut area) = (0.0, 0.0, 0.0);
    let (mut spent, mut found) = (0u64, 0u64);
    for r in order {
        spent += r.effort;
        found += u64::from(r.label == 1);
        let (nx, ny) = (spent as f64 / total_effort, found as f64 / positives);
        area += (nx - x) * (y + ny) / 2.0;
        x = nx;
        y = ny;
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Popt {
    pub value: f64,
    /// The optimal and worst curves coincide; `value` is 1 by convention.
    pub degenerate: bool,
}

pub fn p_opt(records: &[PredictionRecord], rule: RankingRule) -> Result<Popt, MetricsError> {
    let (total, positives) = effort_totals(records)?;
    let (total, positives) = (total as f64, positives as f64);
    let mut optimal: Vec<&PredictionRecord> = records.iter().collect();
    optimal.sort_by(|a, b| match (a.label == 1, b.label == 1) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        _ => a.effort.cmp(&b.effort).then_with(|| a.commit_id.cmp(&b.commit_id)),
    });
    let worst: Vec<&PredictionRecord> = optimal.iter().rev().copied().collect();
    let model = effort_ranking(records, rule);
    let a_opt = curve_area(&optimal, total, positives);
    let a_worst = curve_area(&worst, total, positives);
    let a_model = curve_area(&model, total, positives);
    let span = a_opt - a_worst;
    if span.abs() < 1e-15 {
        return Ok(Popt {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(Popt {
        value: (1.0 - (a_opt - a_model) / span).clamp(0.0, 1.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub n: usize,
    pub positives: usize,
    pub ranking: RankingRule,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub recall_at_20_effort: f64,
    pub effort_at_20_recall: f64,
    pub p_opt: f64,
    pub confusion: ConfusionCounts,
    pub flags: Vec<String>,
}

pub const METRIC_NAMES: [&str; 10] = [
    "accuracy",
    "precision",
    "recall",
    "f1",
    "mcc",
    "roc_auc",
    "pr_auc",
    "recall_at_20_effort",
    "effort_at_20_recall",
    "p_opt",
];

fn or_flag(value: Result<f64, MetricsError>, name: &str, flags: &mut Vec<String>) -> f64 {
    value.unwrap_or_else(|e| {
        let reason = match e {
            MetricsError::SingleClassEvalSet => "single_class_eval_set",
            MetricsError::NoPositives => "no_positives",
            MetricsError::ZeroEffort => "zero_effort",
            MetricsError::Empty => "empty",
        };
        flags.push(format!("{name}:{reason}"));
        0.0
    })
}

pub fn report(records: &[PredictionRecord], threshold: f64, rule: RankingRule) -> Result<MetricsReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let counts = confusion(records, threshold);
    let cls = classification_metrics(&counts);
    let mut flags: Vec<String> = cls.undefined.iter().map(|m| format!("{m}:zero_denominator")).collect();
    let roc = or_flag(roc_auc(records), "roc_auc", &mut flags);
    let pr = or_flag(pr_auc(records), "pr_auc", &mut flags);
    let r20 = or_flag(recall_at_effort(records, 0.2, rule), "recall_at_20_effort", &mut flags);
    let e20 = or_flag(effort_at_recall(records, 0.2, rule), "effort_at_20_recall", &mut flags);
    let popt = match p_opt(records, rule) {
        Ok(p) => {
            if p.degenerate {
                flags.push("p_opt:degenerate_curve".into());
            }
            p.value
        }
        Err(e) => or_flag(Err(e), "p_opt", &mut flags),
    };
    Ok(MetricsReport {
        threshold,
        n: records.len(),
        positives: class_sizes(records).0,
        ranking: rule,
        accuracy: cls.accuracy,
        precision: cls.precision,
        recall: cls.recall,
        f1: cls.f1,
        mcc: cls.mcc,
        roc_auc: roc,
        pr_auc: pr,
        recall_at_20_effort: r20,
        effort_at_20_recall: e20,
        p_opt: popt,
        confusion: counts,
        flags,
    })
}

impl MetricsReport {
    pub fn values(&self) -> [(&'static str, f64); 10] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("mcc", self.mcc),
            ("roc_auc", self.roc_auc),
            ("pr_auc", self.pr_auc),
            ("recall_at_20_effort", self.recall_at_20_effort),
            ("effort_at_20_recall", self.effort_at_20_recall),
            ("p_opt", self.p_opt),
        ]
    }

    pub fn csv_header() -> String {
        let mut cols = vec!["model", "dataset"];
        cols.extend(METRIC_NAMES);
        cols.join(",")
    }

    pub fn csv_row(&self, model: &str, dataset: &str) -> String {
        let mut cols = vec![model.to_string(), dataset.to_string()];
        cols.extend(self.values().iter().map(|(_, v)| format!("{v:.6}")));
        cols.join(",")
    }
}
