//! Independent reference implementations of the ranking metrics.

use jitvp::metrics::{PredictionRecord, RankingRule};

pub fn rec(i: usize, score: f64, label: u8, effort: u64) -> PredictionRecord {
    PredictionRecord {
        commit_id: format!("c{i:04}"),
        score,
        label,
        effort,
    }
}

pub fn both_classes(r: &[PredictionRecord]) -> bool {
    r.iter().any(|x| x.label == 1) && r.iter().any(|x| x.label == 0)
}

pub fn auc_oracle(r: &[PredictionRecord]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for p in r.iter().filter(|x| x.label == 1) {
        for n in r.iter().filter(|x| x.label == 0) {
            pairs += 1.0;
            if p.score > n.score {
                wins += 1.0;
            } else if p.score == n.score {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn ap_oracle(r: &[PredictionRecord]) -> f64 {
    let positives = r.iter().filter(|x| x.label == 1).count() as f64;
    let mut cuts: Vec<f64> = r.iter().map(|x| x.score).collect();
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in cuts {
        let above: Vec<_> = r.iter().filter(|x| x.score >= t).collect();
        let tp = above.iter().filter(|x| x.label == 1).count() as f64;
        let recall = tp / positives;
        ap += (recall - prev_recall) * tp / above.len() as f64;
        prev_recall = recall;
    }
    ap
}

pub fn ranked(r: &[PredictionRecord], rule: RankingRule) -> Vec<PredictionRecord> {
    let mut v = r.to_vec();
    let key = |x: &PredictionRecord| match rule {
        RankingRule::Density => x.score / (x.effort as f64 + 1.0),
        RankingRule::Score => x.score,
    };
    v.sort_by(|a, b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap()
            .then(b.score.partial_cmp(&a.score).unwrap())
            .then(a.commit_id.cmp(&b.commit_id))
    });
    v
}

/// Area under the step-interpolated curve, one trapezoid per record.
pub fn area(order: &[PredictionRecord]) -> f64 {
    let total: u64 = order.iter().map(|x| x.effort).sum();
    let positives = order.iter().filter(|x| x.label == 1).count() as f64;
    let mut found = 0.0;
    let mut a = 0.0;
    for x in order {
        let before = found / positives;
        found += f64::from(x.label);
        a += x.effort as f64 / total as f64 * (before + found / positives) / 2.0;
    }
    a
}

pub fn popt_oracle(r: &[PredictionRecord], rule: RankingRule) -> f64 {
    let mut best = r.to_vec();
    best.sort_by_key(|x| (1 - x.label, x.effort, x.commit_id.clone()));
    let worst: Vec<_> = best.iter().rev().cloned().collect();
    let (o, w, m) = (area(&best), area(&worst), area(&ranked(r, rule)));
    if o == w {
        1.0
    } else {
        (1.0 - (o - m) / (o - w)).clamp(0.0, 1.0)
    }
}

/// Budget given in tenths so the comparison is exact integer arithmetic.
pub fn recall_oracle(r: &[PredictionRecord], tenths: u64, rule: RankingRule) -> f64 {
    let total: u64 = r.iter().map(|x| x.effort).sum();
    let positives = r.iter().filter(|x| x.label == 1).count();
    let order = ranked(r, rule);
    let mut spent = 0;
    let mut found = 0;
    for (i, x) in order.iter().enumerate() {
        spent += x.effort;
        let within = spent * 10 <= tenths * total;
        if !within && !(i == 0 && tenths > 0) {
            break;
        }
        found += usize::from(x.label);
    }
    found as f64 / positives as f64
}

pub fn effort_oracle(r: &[PredictionRecord], tenths: usize, rule: RankingRule) -> f64 {
    let total: u64 = r.iter().map(|x| x.effort).sum();
    let positives = r.iter().filter(|x| x.label == 1).count();
    let needed = (tenths * positives).div_ceil(10);
    if needed == 0 {
        return 0.0;
    }
    let order = ranked(r, rule);
    let k = (1..=order.len())
        .find(|&k| order[..k].iter().filter(|x| x.label == 1).count() >= needed)
        .unwrap();
    order[..k].iter().map(|x| x.effort).sum::<u64>() as f64 / total as f64
}
