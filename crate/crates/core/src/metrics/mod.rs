//! Point-wise, threshold-free, range-aware and event-level evaluation.

mod affiliation;
mod curves;
mod events;

pub use affiliation::{affiliation, Affiliation};
pub use curves::{auc, range_auc, soften_labels, vus, CurveMode};
pub use events::EventList;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Point-wise counts without any adjustment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn standard_f1(pred: &[u8], truth: &[u8]) -> Result<Classification> {
    if pred.len() != truth.len() {
        return Err(Error::Metric(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Classification {
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, pred.len()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    /// Largest buffer `W` of the volume under the surface.
    pub vus_max_buffer: usize,
    /// Buffer `w` of the single range-AUC figures.
    pub range_buffer: usize,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            vus_max_buffer: 32,
            range_buffer: 16,
        }
    }
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Every evaluation figure for one scored series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub length: usize,
    pub threshold: Option<f64>,
    pub settings: MetricSettings,
    pub accuracy: f64,
    pub standard: Classification,
    pub affiliation: Affiliation,
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub range_auc_roc: f64,
    pub range_auc_pr: f64,
    pub vus_roc: f64,
    pub vus_pr: f64,
}

impl Report {
    pub fn evaluate(
        scores: &[f64],
        pred: &[u8],
        truth: &[u8],
        threshold: Option<f64>,
        settings: MetricSettings,
    ) -> Result<Self> {
        if scores.len() != truth.len() {
            return Err(Error::Metric(format!("{} scores for {} labels", scores.len(), truth.len())));
        }
        let standard = standard_f1(pred, truth)?;
        let len = truth.len();
        let affiliation = affiliation(&EventList::from_labels(pred), &EventList::from_labels(truth), len)?;
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            length: len,
            threshold,
            settings,
            accuracy: standard.accuracy,
            standard,
            affiliation,
            auc_roc: auc(scores, truth, CurveMode::Roc)?,
            auc_pr: auc(scores, truth, CurveMode::Pr)?,
            range_auc_roc: range_auc(scores, truth, settings.range_buffer, CurveMode::Roc)?,
            range_auc_pr: range_auc(scores, truth, settings.range_buffer, CurveMode::Pr)?,
            vus_roc: vus(scores, truth, settings.vus_max_buffer, CurveMode::Roc)?,
            vus_pr: vus(scores, truth, settings.vus_max_buffer, CurveMode::Pr)?,
        })
    }

    /// `metric<TAB>value` lines, fixed order.
    pub fn to_tsv(&self) -> String {
        let rows: [(&str, f64); 14] = [
            ("accuracy", self.accuracy),
            ("std_precision", self.standard.precision),
            ("std_recall", self.standard.recall),
            ("std_f1", self.standard.f1),
            ("aff_precision", self.affiliation.precision),
            ("aff_recall", self.affiliation.recall),
            ("aff_f1", self.affiliation.f1),
            ("auc_roc", self.auc_roc),
            ("auc_pr", self.auc_pr),
            ("range_auc_roc", self.range_auc_roc),
            ("range_auc_pr", self.range_auc_pr),
            ("vus_roc", self.vus_roc),
            ("vus_pr", self.vus_pr),
            ("threshold", self.threshold.unwrap_or(f64::NAN)),
        ];
        let mut out = format!(
            "# schema_version={} length={} vus_max_buffer={} range_buffer={} aff_precision_defined={}\nmetric\tvalue\n",
            self.schema_version,
            self.length,
            self.settings.vus_max_buffer,
            self.settings.range_buffer,
            self.affiliation.precision_defined
        );
        for (name, v) in rows {
            out.push_str(&format!("{name}\t{v:.6}\n"));
        }
        out
    }
}
