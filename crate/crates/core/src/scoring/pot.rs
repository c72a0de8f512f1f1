//! Peaks over threshold: a generalized Pareto tail fitted above an initial
//! quantile, inverted at the target risk.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotConfig {
    pub init_quantile: f64,
    /// Target exceedance probability `q`.
    pub risk: f64,
    /// Fewer excesses than this fall back to the empirical `1 − q` quantile.
    pub min_excess: usize,
}

impl Default for PotConfig {
    fn default() -> Self {
        Self {
            init_quantile: 0.98,
            risk: 1e-3,
            min_excess: 30,
        }
    }
}

impl PotConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.init_quantile > 0.0 && self.init_quantile < 1.0) {
            return Err(Error::Config(format!("init_quantile {} must lie in (0, 1)", self.init_quantile)));
        }
        if !(self.risk > 0.0 && self.risk < 1.0) {
            return Err(Error::Config(format!("risk {} must lie in (0, 1)", self.risk)));
        }
        Ok(())
    }
}

/// Shape `ξ` and scale `σ` of a generalized Pareto distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub shape: f64,
    pub scale: f64,
    pub log_likelihood: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotFit {
    pub threshold: f64,
    /// The initial quantile `t`.
    pub init_threshold: f64,
    pub excesses: usize,
    /// `None` on the fallback path.
    pub gpd: Option<GpdFit>,
}

impl PotFit {
    pub fn is_fallback(&self) -> bool {
        self.gpd.is_none()
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("quantile of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, p))
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = pos - lo as f64;
    if w == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + w * (sorted[hi] - sorted[lo])
    }
}

pub fn pot_threshold(scores: &[f64], cfg: &PotConfig) -> Result<PotFit> {
    cfg.validate()?;
    if scores.is_empty() {
        return Err(Error::Data("no calibration scores".into()));
    }
    if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite calibration score {v}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t = quantile_sorted(&sorted, cfg.init_quantile);
    let excesses: Vec<f64> = sorted.iter().filter(|&&s| s > t).map(|s| s - t).collect();
    let fallback = |reason: &str| {
        let threshold = quantile_sorted(&sorted, 1.0 - cfg.risk);
        log::warn!("POT fallback ({reason}); threshold is the empirical {} quantile", 1.0 - cfg.risk);
        PotFit {
            threshold,
            init_threshold: t,
            excesses: excesses.len(),
            gpd: None,
        }
    };
    if excesses.len() < cfg.min_excess.max(2) {
        return Ok(fallback(&format!("{} excesses, need {}", excesses.len(), cfg.min_excess)));
    }
    let Some(gpd) = fit_gpd(&excesses) else {
        return Ok(fallback("no valid tail fit"));
    };
    let r = cfg.risk * scores.len() as f64 / excesses.len() as f64;
    let threshold = if gpd.shape == 0.0 {
        t - gpd.scale * r.ln()
    } else {
        t + gpd.scale / gpd.shape * (r.powf(-gpd.shape) - 1.0)
    };
    Ok(PotFit {
        threshold,
        init_threshold: t,
        excesses: excesses.len(),
        gpd: Some(gpd),
    })
}

fn log_likelihood(y: &[f64], shape: f64, scale: f64) -> Option<f64> {
    if !(scale > 0.0) || !shape.is_finite() {
        return None;
    }
    let n = y.len() as f64;
    if shape == 0.0 {
        return Some(-n * scale.ln() - y.iter().sum::<f64>() / scale);
    }
    let mut acc = 0.0;
    for &v in y {
        let z = 1.0 + shape * v / scale;
        if z <= 0.0 {
            return None;
        }
        acc += z.ln();
    }
    let ll = -n * scale.ln() - (1.0 + 1.0 / shape) * acc;
    ll.is_finite().then_some(ll)
}

/// Best of the method-of-moments estimate, the exponential fit, and every
/// root of the one-dimensional likelihood equation in `x = ξ/σ`.
fn fit_gpd(y: &[f64]) -> Option<GpdFit> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().copied().fold(0.0, f64::max);

    let mut candidates = vec![(0.0, mean)];
    if var > 0.0 {
        let ratio = mean * mean / var;
        candidates.push((0.5 * (1.0 - ratio), 0.5 * mean * (ratio + 1.0)));
    }
    for x in likelihood_roots(y, mean, y_min, y_max) {
        let v = 1.0 + y.iter().map(|&yi| (x * yi).ln_1p()).sum::<f64>() / n;
        let shape = v - 1.0;
        if shape != 0.0 {
            candidates.push((shape, shape / x));
        }
    }

    let mut best: Option<GpdFit> = None;
    for (shape, scale) in candidates {
        if let Some(ll) = log_likelihood(y, shape, scale) {
            if best.map_or(true, |b| ll > b.log_likelihood) {
                best = Some(GpdFit {
                    shape,
                    scale,
                    log_likelihood: ll,
                });
            }
        }
    }
    best
}

/// Roots of `u(x)·v(x) − 1` with `u = mean(1/(1 + x y))` and
/// `v = 1 + mean(ln(1 + x y))`, searched on a grid then bisected, on
/// `(−1/y_max, 0)` and on the positive bracket.
fn likelihood_roots(y: &[f64], mean: f64, y_min: f64, y_max: f64) -> Vec<f64> {
    const GRID: usize = 200;
    let n = y.len() as f64;
    let w = |x: f64| {
        let u = y.iter().map(|&v| 1.0 / (1.0 + x * v)).sum::<f64>() / n;
        let v = 1.0 + y.iter().map(|&yi| (x * yi).ln_1p()).sum::<f64>() / n;
        u * v - 1.0
    };
    let eps = 1e-8 / mean.max(f64::MIN_POSITIVE);
    let mut brackets = Vec::new();
    if y_max > 0.0 {
        brackets.push((-1.0 / y_max + eps, -eps));
    }
    if y_min > 0.0 && mean > y_min {
        brackets.push((2.0 * (mean - y_min) / (mean * y_min), 2.0 * (mean - y_min) / (y_min * y_min)));
    }
    let mut roots = Vec::new();
    for (a, b) in brackets {
        if !(a < b) {
            continue;
        }
        let step = (b - a) / GRID as f64;
        let mut x0 = a;
        let mut f0 = w(x0);
        for i in 1..=GRID {
            let x1 = a + step * i as f64;
            let f1 = w(x1);
            if f0.is_finite() && f1.is_finite() && f0 * f1 <= 0.0 {
                let (mut lo, mut hi, mut flo) = (x0, x1, f0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    let fm = w(mid);
                    if flo * fm <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        flo = fm;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x0 = x1;
            f0 = f1;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_quantile() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&[5.0], 0.9).unwrap(), 5.0);
    }

    #[test]
    fn constant_scores_fall_back() {
        let fit = pot_threshold(&vec![0.7; 1000], &PotConfig::default()).unwrap();
        assert!(fit.is_fallback());
        assert_eq!(fit.threshold, 0.7);
    }

    #[test]
    fn exponential_likelihood_matches_closed_form() {
        let y = [0.5, 1.0, 2.0];
        let ll = log_likelihood(&y, 0.0, 2.0).unwrap();
        assert!((ll - (-3.0 * 2f64.ln() - 1.75)).abs() < 1e-12);
        assert!(log_likelihood(&y, -1.0, 1.5).is_none());
    }
}
