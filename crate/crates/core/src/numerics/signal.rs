//! Resampling primitives on plain series.

use super::{NumericsError, Tensor};

/// Non-overlapping mean pooling.
pub fn avg_pool(x: &[f64], kernel: usize) -> Result<Vec<f64>, NumericsError> {
    if kernel == 0 || x.is_empty() || x.len() % kernel != 0 {
        return Err(NumericsError::PoolKernel {
            len: x.len(),
            kernel,
        });
    }
    Ok(x.chunks(kernel)
        .map(|c| c.iter().sum::<f64>() / kernel as f64)
        .collect())
}

/// Neighbour pair and weight of the right neighbour for each output index of
/// a linear resampling from `from` to `to` samples.
pub(crate) fn interpolation_stencil(from: usize, to: usize) -> Vec<(usize, usize, f64)> {
    (0..to)
        .map(|j| {
            if from == 1 || j == 0 {
                return (0, 0, 0.0);
            }
            if j == to - 1 {
                return (from - 1, from - 1, 0.0);
            }
            let pos = (j * (from - 1)) as f64 / (to - 1) as f64;
            let left = (pos.floor() as usize).min(from - 2);
            (left, left + 1, pos - left as f64)
        })
        .collect()
}

/// Piecewise-linear resampling of `x` to `target` samples with the index
/// grid `[0, len-1]` mapped affinely onto `[0, target-1]`.
///
/// Endpoints are copied exactly; `target == x.len()` returns `x` unchanged.
pub fn linear_interpolate(x: &[f64], target: usize) -> Result<Vec<f64>, NumericsError> {
    if x.is_empty() {
        return Err(NumericsError::Empty("linear_interpolate input"));
    }
    if target == 0 {
        return Err(NumericsError::Empty("linear_interpolate target"));
    }
    if target == x.len() {
        return Ok(x.to_vec());
    }
    Ok(interpolation_stencil(x.len(), target)
        .into_iter()
        .map(|(l, r, w)| if w == 0.0 { x[l] } else { x[l] * (1.0 - w) + x[r] * w })
        .collect())
}

/// The `target × from` matrix `W` with `W · h` equal to applying
/// [`linear_interpolate`] to every column of `h`.
pub fn interpolation_matrix(from: usize, target: usize) -> Result<Tensor, NumericsError> {
    if from == 0 || target == 0 {
        return Err(NumericsError::Empty("interpolation_matrix"));
    }
    let mut data = vec![0.0; target * from];
    if from == target {
        for i in 0..from {
            data[i * from + i] = 1.0;
        }
    } else {
        for (j, (l, r, w)) in interpolation_stencil(from, target).into_iter().enumerate() {
            data[j * from + l] += 1.0 - w;
            if w != 0.0 {
                data[j * from + r] += w;
            }
        }
    }
    Tensor::from_rows(target, from, data)
}
