//! Discrete Fourier transform of real series and top-k spectral filtering.
//!
//! Power-of-two lengths use an iterative radix-2 transform; other lengths
//! fall back to the direct O(T²) sum.

use std::f64::consts::PI;

use super::NumericsError;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }

    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
}

/// One-sided spectrum of a real series of length `len`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    len: usize,
    /// `|X_k|` for `k = 0 ..= len/2`.
    pub amplitudes: Vec<f64>,
    /// `arg X_k` in `(-π, π]`.
    pub phases: Vec<f64>,
}

impl Spectrum {
    pub fn series_len(&self) -> usize {
        self.len
    }

    pub fn bins(&self) -> usize {
        self.amplitudes.len()
    }

    /// Indices of the `k` largest amplitudes, lower frequency first on ties.
    pub fn top_k_bins(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.bins()).collect();
        order.sort_by(|&a, &b| {
            self.amplitudes[b]
                .partial_cmp(&self.amplitudes[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(k);
        order
    }
}

fn transform(buf: &mut [Complex], inverse: bool) {
    let n = buf.len();
    if n.is_power_of_two() {
        radix2(buf, inverse);
    } else {
        direct(buf, inverse);
    }
}

fn radix2(buf: &mut [Complex], inverse: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    if n <= 1 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for j in 0..half {
            let angle = sign * 2.0 * PI * j as f64 / len as f64;
            let w = Complex::new(angle.cos(), angle.sin());
            for start in (0..n).step_by(len) {
                let a = buf[start + j];
                let b = buf[start + j + half].mul(w);
                buf[start + j] = a.add(b);
                buf[start + j + half] = a.sub(b);
            }
        }
        len *= 2;
    }
}

fn direct(buf: &mut [Complex], inverse: bool) {
    let n = buf.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let table: Vec<Complex> = (0..n)
        .map(|j| {
            let angle = sign * 2.0 * PI * j as f64 / n as f64;
            Complex::new(angle.cos(), angle.sin())
        })
        .collect();
    let input = buf.to_vec();
    for (k, out) in buf.iter_mut().enumerate() {
        let mut acc = Complex::default();
        for (t, x) in input.iter().enumerate() {
            acc = acc.add(x.mul(table[(k * t) % n]));
        }
        *out = acc;
    }
}

pub fn dft(x: &[f64]) -> Result<Spectrum, NumericsError> {
    if x.len() < 2 {
        return Err(NumericsError::SeriesTooShort { len: x.len(), min: 2 });
    }
    let mut buf: Vec<Complex> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    transform(&mut buf, false);
    let bins = x.len() / 2 + 1;
    let mut amplitudes = Vec::with_capacity(bins);
    let mut phases = Vec::with_capacity(bins);
    for c in &buf[..bins] {
        amplitudes.push(c.re.hypot(c.im));
        let mut phase = c.im.atan2(c.re);
        if phase <= -PI {
            phase = PI;
        }
        phases.push(phase);
    }
    Ok(Spectrum {
        len: x.len(),
        amplitudes,
        phases,
    })
}

/// Inverse transform keeping only the `k` largest-amplitude bins.
pub fn idft_topk(spectrum: &Spectrum, k: usize) -> Result<Vec<f64>, NumericsError> {
    if k == 0 || k > spectrum.bins() {
        return Err(NumericsError::TopK {
            k,
            bins: spectrum.bins(),
        });
    }
    let n = spectrum.len;
    let mut buf = vec![Complex::default(); n];
    for bin in spectrum.top_k_bins(k) {
        let (a, p) = (spectrum.amplitudes[bin], spectrum.phases[bin]);
        let c = Complex::new(a * p.cos(), a * p.sin());
        buf[bin] = c;
        if bin != 0 && 2 * bin != n {
            buf[n - bin] = Complex::new(c.re, -c.im);
        }
    }
    transform(&mut buf, true);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_keeps_dc() {
        let x = vec![2.5; 16];
        let s = dft(&x).unwrap();
        assert_eq!(s.top_k_bins(1), vec![0]);
        let y = idft_topk(&s, 1).unwrap();
        for v in y {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_length_round_trip() {
        let x: Vec<f64> = (0..9).map(|i| ((i * 7) % 5) as f64 - 1.3).collect();
        let s = dft(&x).unwrap();
        assert_eq!(s.bins(), 5);
        let y = idft_topk(&s, s.bins()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn k_out_of_range() {
        let s = dft(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(idft_topk(&s, 0).is_err());
        assert!(idft_topk(&s, 4).is_err());
        assert!(dft(&[1.0]).is_err());
    }

    #[test]
    fn tie_break_prefers_low_frequency() {
        let s = Spectrum {
            len: 6,
            amplitudes: vec![1.0, 3.0, 3.0, 0.5],
            phases: vec![0.0; 4],
        };
        assert_eq!(s.top_k_bins(2), vec![1, 2]);
    }
}
