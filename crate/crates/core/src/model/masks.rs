use crate::numerics::MaskMatrix;
use crate::{Error, Result};

fn block_ids(counts: &[usize]) -> Result<Vec<usize>> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::Shape(format!("patch counts {counts:?} must be non-empty and positive")));
    }
    Ok(counts
        .iter()
        .enumerate()
        .flat_map(|(b, &c)| std::iter::repeat(b).take(c))
        .collect())
}

/// Block-diagonal mask: each patch attends only within its own scale.
pub fn build_scale_independent_mask(counts: &[usize]) -> Result<MaskMatrix> {
    let ids = block_ids(counts)?;
    Ok(MaskMatrix::from_fn(ids.len(), |i, j| ids[i] != ids[j])?)
}

/// Block-lower-triangular mask over decode blocks `P_1 … P_m`: block `i`
/// attends to blocks `0 ..= i` only.
pub fn build_cross_scale_mask(counts: &[usize]) -> Result<MaskMatrix> {
    let ids = block_ids(counts)?;
    Ok(MaskMatrix::from_fn(ids.len(), |i, j| ids[j] > ids[i])?)
}
