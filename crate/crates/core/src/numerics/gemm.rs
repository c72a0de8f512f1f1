//! Safe wrapper over `matrixmultiply::dgemm` for strided operands.

#[derive(Clone, Copy)]
pub(crate) struct Operand<'a> {
    data: &'a [f64],
    row_stride: isize,
    col_stride: isize,
}

impl<'a> Operand<'a> {
    pub(crate) fn row_major(data: &'a [f64], cols: usize) -> Self {
        Self::strided(data, cols as isize, 1)
    }

    pub(crate) fn strided(data: &'a [f64], row_stride: isize, col_stride: isize) -> Self {
        Self {
            data,
            row_stride,
            col_stride,
        }
    }

    fn check(&self, rows: usize, cols: usize) {
        assert!(self.row_stride >= 0 && self.col_stride >= 0);
        if rows > 0 && cols > 0 {
            let last = (rows - 1) * self.row_stride as usize + (cols - 1) * self.col_stride as usize;
            assert!(last < self.data.len(), "gemm operand out of bounds");
        }
    }
}

/// `c[m×n] = a[m×k] · b[k×n]` (or `+=` when `accumulate`), where `c` is
/// row-major with row stride `ldc`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: Operand<'_>,
    b: Operand<'_>,
    c: &mut [f64],
    ldc: usize,
    accumulate: bool,
) {
    a.check(m, k);
    b.check(k, n);
    if m > 0 && n > 0 {
        assert!((m - 1) * ldc + n - 1 < c.len(), "gemm output out of bounds");
    }
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            for row in 0..m {
                c[row * ldc..row * ldc + n].fill(0.0);
            }
        }
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: every operand was bounds-checked above for its logical extent,
    // and `c` does not alias `a` or `b` (it is a distinct `&mut`).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}
