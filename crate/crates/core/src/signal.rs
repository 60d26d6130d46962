//! Circular signal operations on N-point periodic vectors.
//!
//! Every waveform in this crate lives on one laser period of `N` bins, so
//! shifts, convolutions and correlations all wrap. Short vectors use the
//! direct sums; longer ones go through a cached FFT plan.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Result};

/// Below this length the direct O(N²) sums are used.
const DIRECT_LIMIT: usize = 64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward/inverse FFT pair for one length.
#[derive(Clone)]
pub struct FftPair {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("n", &self.n).finish()
    }
}

impl FftPair {
    pub fn new(n: usize) -> Self {
        PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            FftPair {
                n,
                fwd: p.plan_fft_forward(n),
                inv: p.plan_fft_inverse(n),
            }
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse transform, normalized, real part only.
    pub fn inverse_real(&self, mut spec: Vec<Complex<f64>>) -> Vec<f64> {
        self.inv.process(&mut spec);
        let scale = 1.0 / self.n as f64;
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    /// `out_i = Σ_j a_j b_{(i-j) mod N}`
    pub fn convolve(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let fa = self.forward(a);
        let fb = self.forward(b);
        self.inverse_real(fa.iter().zip(&fb).map(|(x, y)| x * y).collect())
    }

    /// `out_i = Σ_j a_j b_{(j-i) mod N}`
    pub fn correlate(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let fa = self.forward(a);
        let fb = self.forward(b);
        self.inverse_real(fa.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect())
    }

    /// Correlation of `a` against a kernel whose spectrum is precomputed.
    pub fn correlate_spec(&self, a: &[f64], kernel_spec: &[Complex<f64>]) -> Vec<f64> {
        let fa = self.forward(a);
        self.inverse_real(
            fa.iter()
                .zip(kernel_spec)
                .map(|(x, y)| x * y.conj())
                .collect(),
        )
    }

    /// Convolution of `a` against a kernel whose spectrum is precomputed.
    pub fn convolve_spec(&self, a: &[f64], kernel_spec: &[Complex<f64>]) -> Vec<f64> {
        let fa = self.forward(a);
        self.inverse_real(fa.iter().zip(kernel_spec).map(|(x, y)| x * y).collect())
    }
}

/// Circular convolution `out_i = Σ_j a_j · b_{(i−j) mod N}`.
pub fn circular_convolve(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a.len(), b.len())?;
    let n = a.len();
    if n <= DIRECT_LIMIT {
        Ok(convolve_direct(a, b))
    } else {
        Ok(FftPair::new(n).convolve(a, b))
    }
}

/// Circular cross-correlation `out_i = Σ_j a_j · b_{(j−i) mod N}`.
pub fn circular_correlate(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a.len(), b.len())?;
    let n = a.len();
    if n <= DIRECT_LIMIT {
        Ok(correlate_direct(a, b))
    } else {
        Ok(FftPair::new(n).correlate(a, b))
    }
}

pub(crate) fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| a[j] * b[(i + n - j) % n])
                .sum::<f64>()
        })
        .collect()
}

pub(crate) fn correlate_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| a[j] * b[(j + n - i) % n])
                .sum::<f64>()
        })
        .collect()
}

/// Integer circular shift: `out_i = x_{(i−k) mod N}`.
pub fn circular_shift(x: &[f64], k: isize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k.rem_euclid(n as isize) as usize;
    (0..n).map(|i| x[(i + n - k) % n]).collect()
}

/// Wraps a real bin position into `[0, n)`.
pub fn wrap_position(t: f64, n: usize) -> f64 {
    let w = t.rem_euclid(n as f64);
    // rem_euclid can return exactly n for tiny negative inputs
    if w >= n as f64 {
        0.0
    } else {
        w
    }
}

/// Splits a wrapped position into its integer floor and interpolation weight.
pub(crate) fn split_position(t: f64, n: usize) -> (usize, f64) {
    let t = wrap_position(t, n);
    let base = t.floor();
    ((base as usize) % n, t - base)
}

/// Circular shift by a real amount, linearly interpolating between the two
/// neighbouring integer shifts.
pub fn fractional_shift(x: &[f64], t: f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let (k, w) = split_position(t, n);
    (0..n)
        .map(|i| {
            let a = x[(i + n - k) % n];
            if w == 0.0 {
                a
            } else {
                let b = x[(i + 2 * n - k - 1) % n];
                (1.0 - w) * a + w * b
            }
        })
        .collect()
}

/// Circular distance between two bin positions on a ring of `n` bins.
pub fn circular_error(a: f64, b: f64, n: usize) -> f64 {
    let d = (a - b).abs().rem_euclid(n as f64);
    d.min(n as f64 - d)
}

/// Signed circular offset `a − b` wrapped into `[−n/2, n/2)`.
pub fn circular_offset(a: f64, b: f64, n: usize) -> f64 {
    let nf = n as f64;
    (a - b + nf / 2.0).rem_euclid(nf) - nf / 2.0
}
