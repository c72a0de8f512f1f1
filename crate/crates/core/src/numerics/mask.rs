use super::NumericsError;

/// Additive attention mask over a square `size × size` grid.
///
/// Each entry is either `0` (attend) or blocked, which acts as `-∞` when added
/// to attention logits. Every row keeps at least one open entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMatrix {
    size: usize,
    blocked: Vec<bool>,
}

impl MaskMatrix {
    /// Builds a mask from a predicate returning `true` for blocked entries.
    pub fn from_fn(
        size: usize,
        mut is_blocked: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, NumericsError> {
        let mut blocked = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                blocked.push(is_blocked(i, j));
            }
        }
        Self::from_blocked(size, blocked)
    }

    pub fn from_blocked(size: usize, blocked: Vec<bool>) -> Result<Self, NumericsError> {
        if size == 0 || blocked.len() != size * size {
            return Err(NumericsError::InvalidShape(vec![size, blocked.len()]));
        }
        if let Some(row) = (0..size).find(|&r| blocked[r * size..(r + 1) * size].iter().all(|&b| b)) {
            return Err(NumericsError::FullyBlockedRow(row));
        }
        Ok(Self { size, blocked })
    }

    /// A mask that blocks nothing.
    pub fn open(size: usize) -> Self {
        Self {
            size,
            blocked: vec![false; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_blocked(&self, row: usize, col: usize) -> bool {
        self.blocked[row * self.size + col]
    }

    /// Additive value: `0.0` or `f64::NEG_INFINITY`.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        if self.is_blocked(row, col) {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    }

    pub fn row_blocked(&self, row: usize) -> &[bool] {
        &self.blocked[row * self.size..(row + 1) * self.size]
    }

    pub fn open_count(&self) -> usize {
        self.blocked.iter().filter(|&&b| !b).count()
    }
}
