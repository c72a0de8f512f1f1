use crate::numerics::avg_pool;
use crate::{Error, Result};

/// One window at several temporal resolutions, coarse to fine.
///
/// `series[m]` is the original window and `series[i]` for `i < m` is its
/// average pooling with `kernels[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiScaleBundle {
    series: Vec<Vec<f64>>,
    kernels: Vec<usize>,
}

impl MultiScaleBundle {
    /// Assembles a bundle from explicit series, coarse to fine. Only the
    /// count is checked; the series need not be poolings of each other.
    pub fn from_series(series: Vec<Vec<f64>>, kernels: Vec<usize>) -> Result<Self> {
        if series.len() != kernels.len() + 1 {
            return Err(Error::Shape(format!(
                "{} series for {} kernels",
                series.len(),
                kernels.len()
            )));
        }
        Ok(Self { series, kernels })
    }

    /// Index of the original (finest) scale.
    pub fn m(&self) -> usize {
        self.kernels.len()
    }

    pub fn series(&self) -> &[Vec<f64>] {
        &self.series
    }

    pub fn scale(&self, i: usize) -> &[f64] {
        &self.series[i]
    }

    pub fn kernels(&self) -> &[usize] {
        &self.kernels
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.series.iter().map(Vec::len).collect()
    }

    pub fn original(&self) -> &[f64] {
        &self.series[self.m()]
    }
}

/// Builds `X_0 … X_m` by average pooling `window` with each kernel.
pub fn generate_multiscale(window: &[f64], kernels: &[usize]) -> Result<MultiScaleBundle> {
    if kernels.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Config(format!("kernels {kernels:?} must be strictly decreasing")));
    }
    if let Some(&k) = kernels.iter().find(|&&k| k < 2) {
        return Err(Error::Config(format!("pooling kernel {k} must be at least 2")));
    }
    let mut series = Vec::with_capacity(kernels.len() + 1);
    for &k in kernels {
        series.push(avg_pool(window, k)?);
    }
    series.push(window.to_vec());
    Ok(MultiScaleBundle {
        series,
        kernels: kernels.to_vec(),
    })
}
