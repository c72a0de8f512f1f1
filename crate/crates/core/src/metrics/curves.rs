//! Threshold-sweep areas over hard or buffer-softened labels.
//!
//! Every distinct score is one threshold, visited from the highest down, and
//! points sharing a score flip together. Against labels `ℓ ∈ [0, 1]` the
//! swept set `S` has weighted counts `TP = Σ_S ℓ` and `FP = Σ_S (1 − ℓ)`,
//! giving `TPR = min(TP / P, 1)` with `P` the number of hard positives,
//! `FPR = FP / Σ (1 − ℓ)` (0 when that sum is 0) and
//! `precision = TP / |S|`. ROC area is the trapezoid rule over `(FPR, TPR)`
//! closed at `(1, 1)`; PR area is the step sum `Σ (Rₖ − Rₖ₋₁) Pₖ`. With hard
//! labels these are the usual curves.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMode {
    Roc,
    Pr,
}

/// Indices in descending score order, cut into groups of equal score.
struct Ranking {
    order: Vec<usize>,
    bounds: Vec<usize>,
}

impl Ranking {
    fn new(scores: &[f64]) -> Result<Self> {
        if let Some(t) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Metric(format!("score at index {t} is not finite")));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut bounds = Vec::new();
        for i in 1..order.len() {
            if scores[order[i]] != scores[order[i - 1]] {
                bounds.push(i);
            }
        }
        bounds.push(order.len());
        Ok(Self { order, bounds })
    }

    fn area(&self, soft: &[f64], positives: f64, mode: CurveMode) -> f64 {
        let negatives: f64 = soft.iter().map(|l| 1.0 - l).sum();
        let (mut tp, mut fp, mut count) = (0.0, 0.0, 0usize);
        let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
        let mut area = 0.0;
        let mut start = 0;
        for &end in &self.bounds {
            for &i in &self.order[start..end] {
                tp += soft[i];
                fp += 1.0 - soft[i];
            }
            count += end - start;
            start = end;
            let tpr = (tp / positives).min(1.0);
            // A buffer wide enough to soften every label leaves no negative mass.
            let fpr = if negatives > 0.0 { fp / negatives } else { 0.0 };
            area += match mode {
                CurveMode::Roc => (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0,
                CurveMode::Pr => (tpr - prev_tpr) * (tp / count as f64),
            };
            prev_tpr = tpr;
            prev_fpr = fpr;
        }
        if mode == CurveMode::Roc {
            area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
        }
        area
    }
}

fn check(scores: &[f64], truth: &[u8]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::Metric(format!("{} scores for {} labels", scores.len(), truth.len())));
    }
    let positives = truth.iter().filter(|&&l| l != 0).count();
    if positives == 0 || positives == truth.len() {
        return Err(Error::Metric(format!(
            "AUC needs both classes, but the labels hold {positives} positives out of {}",
            truth.len()
        )));
    }
    Ok(positives as f64)
}

pub fn auc(scores: &[f64], truth: &[u8], mode: CurveMode) -> Result<f64> {
    range_auc(scores, truth, 0, mode)
}

/// Labels with a linear ramp of `buffer` points on each side of every event:
/// at distance `d ≤ buffer` outside an event the label gains
/// `1 − d / (buffer + 1)`. Contributions add and are clipped to 1.
pub fn soften_labels(truth: &[u8], buffer: usize) -> Vec<f64> {
    let n = truth.len();
    let mut soft: Vec<f64> = truth.iter().map(|&l| f64::from(l != 0)).collect();
    if buffer == 0 {
        return soft;
    }
    let mut t = 0;
    while t < n {
        if truth[t] == 0 {
            t += 1;
            continue;
        }
        let s = t;
        while t < n && truth[t] != 0 {
            t += 1;
        }
        let e = t;
        for d in 1..=buffer {
            let v = 1.0 - d as f64 / (buffer + 1) as f64;
            if d <= s {
                soft[s - d] += v;
            }
            if e - 1 + d < n {
                soft[e - 1 + d] += v;
            }
        }
    }
    soft.iter_mut().for_each(|v| *v = v.min(1.0));
    soft
}

pub fn range_auc(scores: &[f64], truth: &[u8], buffer: usize, mode: CurveMode) -> Result<f64> {
    let positives = check(scores, truth)?;
    let ranking = Ranking::new(scores)?;
    Ok(ranking.area(&soften_labels(truth, buffer), positives, mode))
}

/// Mean of [`range_auc`] over buffers `0 ..= max_buffer`.
pub fn vus(scores: &[f64], truth: &[u8], max_buffer: usize, mode: CurveMode) -> Result<f64> {
    let positives = check(scores, truth)?;
    let ranking = Ranking::new(scores)?;
    let total: f64 = (0..=max_buffer)
        .map(|w| ranking.area(&soften_labels(truth, w), positives, mode))
        .sum();
    Ok(total / (max_buffer + 1) as f64)
}
