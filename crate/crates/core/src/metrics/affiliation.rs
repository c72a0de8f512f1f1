//! Affiliation precision and recall in closed form.
//!
//! Events are real intervals `[start, end)`. The timeline `[0, T)` is cut at
//! the midpoints between consecutive truth events, giving one zone `I` per
//! truth event `g`. Within a zone:
//!
//! * each predicted point `y` scores `P(dist(X, g) ≥ dist(y, g))` for `X`
//!   uniform on `I`; zone precision is the mean over predicted points;
//! * each truth point `x` scores `P(|X − x| ≥ dist(x, Y))` with `Y` the
//!   predictions inside the zone; zone recall is the mean over `g`, and zero
//!   when the zone holds no prediction.
//!
//! Precision averages over zones that contain predictions, recall over all
//! zones.

use serde::{Deserialize, Serialize};

use super::EventList;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affiliation {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when there were no predictions; precision is then reported as 0.
    pub precision_defined: bool,
}

/// `∫₀ᵈ max(c − x, 0) dx`.
fn ramp_integral(c: f64, d: f64) -> f64 {
    if d <= c {
        c * d - d * d / 2.0
    } else {
        c * c / 2.0
    }
}

/// `∫ max(f, 0)` over `[p, q]` for `f` linear with end values `fp`, `fq`.
fn positive_part(p: f64, q: f64, fp: f64, fq: f64) -> f64 {
    let w = q - p;
    if w <= 0.0 {
        return 0.0;
    }
    match (fp >= 0.0, fq >= 0.0) {
        (true, true) => (fp + fq) / 2.0 * w,
        (false, false) => 0.0,
        (true, false) => fp * (w * fp / (fp - fq)) / 2.0,
        (false, true) => fq * (w * fq / (fq - fp)) / 2.0,
    }
}

struct Zone {
    lo: f64,
    hi: f64,
    start: f64,
    end: f64,
}

impl Zone {
    /// Integral of the precision score over predicted `[u, v]` inside the zone.
    fn precision_mass(&self, u: f64, v: f64) -> f64 {
        let width = self.hi - self.lo;
        let a = self.start - self.lo;
        let b = self.hi - self.end;
        let survival = |d1: f64, d2: f64| {
            (ramp_integral(a, d2) - ramp_integral(a, d1) + ramp_integral(b, d2) - ramp_integral(b, d1)) / width
        };
        let mut mass = 0.0;
        let (lu, lv) = (u, v.min(self.start));
        if lu < lv {
            mass += survival(self.start - lv, self.start - lu);
        }
        let (iu, iv) = (u.max(self.start), v.min(self.end));
        if iu < iv {
            mass += iv - iu;
        }
        let (ru, rv) = (u.max(self.end), v);
        if ru < rv {
            mass += survival(ru - self.end, rv - self.end);
        }
        mass
    }

    /// Integral of the recall score over the truth event, given the
    /// predictions clipped to the zone.
    fn recall_mass(&self, preds: &[(f64, f64)]) -> f64 {
        let width = self.hi - self.lo;
        let dist = |x: f64| {
            preds
                .iter()
                .map(|&(u, v)| if x < u { u - x } else if x > v { x - v } else { 0.0 })
                .fold(f64::INFINITY, f64::min)
        };
        let mut cuts = vec![self.start, self.end];
        for (k, &(u, v)) in preds.iter().enumerate() {
            cuts.push(u);
            cuts.push(v);
            if let Some(&(next, _)) = preds.get(k + 1) {
                cuts.push((v + next) / 2.0);
            }
        }
        cuts.retain(|&c| c >= self.start && c <= self.end);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut mass = 0.0;
        for pair in cuts.windows(2) {
            let (p, q) = (pair[0], pair[1]);
            let (dp, dq) = (dist(p), dist(q));
            mass += positive_part(p, q, p - self.lo - dp, q - self.lo - dq);
            mass += positive_part(p, q, self.hi - p - dp, self.hi - q - dq);
        }
        mass / width
    }
}

pub fn affiliation(pred: &EventList, truth: &EventList, len: usize) -> Result<Affiliation> {
    if len == 0 {
        return Err(Error::Metric("affiliation needs a non-empty timeline".into()));
    }
    if truth.is_empty() {
        return Err(Error::Metric("affiliation needs at least one truth event".into()));
    }
    if truth.end() > len || pred.end() > len {
        return Err(Error::Metric(format!("events extend past the timeline length {len}")));
    }
    let gt = truth.events();
    let zones: Vec<Zone> = gt
        .iter()
        .enumerate()
        .map(|(j, &(s, e))| Zone {
            lo: if j == 0 { 0.0 } else { (gt[j - 1].1 + s) as f64 / 2.0 },
            hi: gt.get(j + 1).map_or(len as f64, |&(next, _)| (e + next) as f64 / 2.0),
            start: s as f64,
            end: e as f64,
        })
        .collect();

    let mut precisions = Vec::new();
    let mut recall_sum = 0.0;
    for zone in &zones {
        let clipped: Vec<(f64, f64)> = pred
            .events()
            .iter()
            .map(|&(u, v)| ((u as f64).max(zone.lo), (v as f64).min(zone.hi)))
            .filter(|(u, v)| u < v)
            .collect();
        if clipped.is_empty() {
            continue;
        }
        let covered: f64 = clipped.iter().map(|(u, v)| v - u).sum();
        let mass: f64 = clipped.iter().map(|&(u, v)| zone.precision_mass(u, v)).sum();
        precisions.push(mass / covered);
        recall_sum += zone.recall_mass(&clipped) / (zone.end - zone.start);
    }
    let precision_defined = !precisions.is_empty();
    let precision = if precision_defined {
        precisions.iter().sum::<f64>() / precisions.len() as f64
    } else {
        0.0
    };
    let recall = recall_sum / zones.len() as f64;
    let f1 = if precision > 0.0 && recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Affiliation {
        precision,
        recall,
        f1,
        precision_defined,
    })
}
