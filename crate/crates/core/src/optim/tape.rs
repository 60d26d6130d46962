//! Reverse-mode gradient tape for the fixed coding pipeline.
//!
//! Every variable is a flat `f64` buffer. Nodes are appended in evaluation
//! order, so walking them backwards is a valid reverse topological order.
//! Each node's adjoint is written out by hand; there is no generic operator
//! overloading.

use rustfft::num_complex::Complex;

use crate::signal::{fractional_shift, FftPair};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Node {
    Leaf,
    /// `y = clamp(x, lo, hi)`; gradient passes on the closed interval.
    Clamp { x: Var, lo: f64, hi: f64 },
    /// `y = x ⊛ kernel` with a constant kernel.
    ConvConst { x: Var, kernel: Vec<f64> },
    /// `y = Σ x`.
    Sum { x: Var },
    /// `y = x / Σ x`.
    Normalize { x: Var, total: f64 },
    /// `y = min(1, x / budget)` for a scalar `x`.
    CapRatio { x: Var, budget: f64 },
    /// `D′_k = corr(D_k, u)` for each of `k` rows.
    RowCorrelate { d: Var, u: Var, k: usize },
    /// Per-column zero-mean unit-norm of a `k × n` matrix.
    ColZnorm { x: Var, k: usize, norms: Vec<f64> },
    /// `y = fractional_shift(x, t)`.
    Shift { x: Var, t: f64 },
    /// `y = mult · a · x + offset` with scalar `a`.
    ScaleOffset { x: Var, a: Var, mult: f64 },
    /// `y = r + sqrt(r) ⊙ eps`.
    GaussNoise { r: Var, eps: Vec<f64> },
    /// `y = D x` for a `k × n` matrix.
    MatVec { d: Var, x: Var, k: usize },
    /// Zero-mean unit-norm vector.
    Znorm { x: Var, norm: f64 },
    /// `y_i = Σ_k Z_{k,i} b_k`.
    ColDot { z: Var, b: Var, k: usize },
    /// `y = Σ v_i softmax(β x)_i`.
    Softargmax { x: Var, beta: f64, values: Vec<f64>, probs: Vec<f64> },
    /// `y = |x|`, scalar.
    Abs { x: Var },
    /// Row-wise non-circular total variation of a `k × n` matrix.
    TotalVariation { d: Var, k: usize },
    /// `y = Σ w_i x_i` over scalars.
    Combine { xs: Vec<Var>, weights: Vec<f64> },
}

/// Smallest `r` used in the derivative of `sqrt(r)`.
pub const SQRT_GUARD: f64 = 1e-6;

pub struct Tape {
    values: Vec<Vec<f64>>,
    nodes: Vec<Node>,
    fft: Option<FftPair>,
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

fn spectrum(fft: &FftPair, x: &[f64]) -> Vec<Complex<f64>> {
    fft.forward(x)
}

impl Tape {
    /// A tape for length-`n` signals. Lengths above 64 use FFTs.
    pub fn new(n: usize) -> Self {
        Tape {
            values: Vec::new(),
            nodes: Vec::new(),
            fft: (n > 64).then(|| FftPair::new(n)),
        }
    }

    fn push(&mut self, value: Vec<f64>, node: Node) -> Var {
        self.values.push(value);
        self.nodes.push(node);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0][0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn conv(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        match &self.fft {
            Some(f) => f.convolve(a, b),
            None => crate::signal::convolve_direct(a, b),
        }
    }

    fn corr(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        match &self.fft {
            Some(f) => f.correlate(a, b),
            None => crate::signal::correlate_direct(a, b),
        }
    }

    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Node::Leaf)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let y = self.value(x).iter().map(|v| v.min(hi).max(lo)).collect();
        self.push(y, Node::Clamp { x, lo, hi })
    }

    pub fn conv_const(&mut self, x: Var, kernel: &[f64]) -> Var {
        let y = self.conv(self.value(x), kernel);
        self.push(
            y,
            Node::ConvConst {
                x,
                kernel: kernel.to_vec(),
            },
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![s], Node::Sum { x })
    }

    pub fn normalize(&mut self, x: Var) -> Var {
        let total: f64 = self.value(x).iter().sum();
        let y = self.value(x).iter().map(|v| v / total).collect();
        self.push(y, Node::Normalize { x, total })
    }

    pub fn cap_ratio(&mut self, x: Var, budget: f64) -> Var {
        let y = (self.scalar(x) / budget).min(1.0);
        self.push(vec![y], Node::CapRatio { x, budget })
    }

    pub fn row_correlate(&mut self, d: Var, u: Var, k: usize) -> Var {
        let n = self.value(u).len();
        let mut out = Vec::with_capacity(k * n);
        match &self.fft {
            Some(fft) => {
                let us = spectrum(fft, self.value(u));
                for row in self.value(d).chunks_exact(n) {
                    out.extend(fft.correlate_spec(row, &us));
                }
            }
            None => {
                for row in self.value(d).chunks_exact(n) {
                    out.extend(crate::signal::correlate_direct(row, self.value(u)));
                }
            }
        }
        self.push(out, Node::RowCorrelate { d, u, k })
    }

    pub fn col_znorm(&mut self, x: Var, k: usize) -> Var {
        let xv = self.value(x);
        let n = xv.len() / k;
        let mut out = vec![0.0; k * n];
        let mut norms = vec![0.0; n];
        for i in 0..n {
            let mean = (0..k).map(|r| xv[r * n + i]).sum::<f64>() / k as f64;
            let norm = (0..k)
                .map(|r| (xv[r * n + i] - mean).powi(2))
                .sum::<f64>()
                .sqrt()
                .max(1e-300);
            norms[i] = norm;
            for r in 0..k {
                out[r * n + i] = (xv[r * n + i] - mean) / norm;
            }
        }
        self.push(out, Node::ColZnorm { x, k, norms })
    }

    pub fn shift(&mut self, x: Var, t: f64) -> Var {
        let y = fractional_shift(self.value(x), t);
        self.push(y, Node::Shift { x, t })
    }

    pub fn scale_offset(&mut self, x: Var, a: Var, mult: f64, offset: f64) -> Var {
        let g = mult * self.scalar(a);
        let y = self.value(x).iter().map(|v| g * v + offset).collect();
        self.push(y, Node::ScaleOffset { x, a, mult })
    }

    pub fn gauss_noise(&mut self, r: Var, eps: &[f64]) -> Var {
        let y = self
            .value(r)
            .iter()
            .zip(eps)
            .map(|(r, e)| r + r.max(0.0).sqrt() * e)
            .collect();
        self.push(
            y,
            Node::GaussNoise {
                r,
                eps: eps.to_vec(),
            },
        )
    }

    pub fn mat_vec(&mut self, d: Var, x: Var, k: usize) -> Var {
        let xv = self.value(x);
        let n = xv.len();
        let y = self
            .value(d)
            .chunks_exact(n)
            .take(k)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        self.push(y, Node::MatVec { d, x, k })
    }

    pub fn znorm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mean = xv.iter().sum::<f64>() / xv.len() as f64;
        let norm = xv
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            .sqrt()
            .max(1e-300);
        let y = xv.iter().map(|v| (v - mean) / norm).collect();
        self.push(y, Node::Znorm { x, norm })
    }

    pub fn col_dot(&mut self, z: Var, b: Var, k: usize) -> Var {
        let zv = self.value(z);
        let bv = self.value(b);
        let n = zv.len() / k;
        let mut y = vec![0.0; n];
        for (r, &br) in bv.iter().enumerate() {
            for (yi, zi) in y.iter_mut().zip(&zv[r * n..(r + 1) * n]) {
                *yi += br * zi;
            }
        }
        self.push(y, Node::ColDot { z, b, k })
    }

    pub fn softargmax(&mut self, x: Var, beta: f64, values: Vec<f64>) -> Var {
        let probs = crate::decode::softmax(self.value(x), beta);
        let y = probs.iter().zip(&values).map(|(p, v)| p * v).sum();
        self.push(
            vec![y],
            Node::Softargmax {
                x,
                beta,
                values,
                probs,
            },
        )
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let y = self.scalar(x).abs();
        self.push(vec![y], Node::Abs { x })
    }

    pub fn total_variation(&mut self, d: Var, k: usize) -> Var {
        let y = tv_value(self.value(d), k);
        self.push(vec![y], Node::TotalVariation { d, k })
    }

    pub fn combine(&mut self, xs: Vec<Var>, weights: Vec<f64>) -> Var {
        let y = xs.iter().zip(&weights).map(|(x, w)| w * self.scalar(*x)).sum();
        self.push(vec![y], Node::Combine { xs, weights })
    }

    /// Gradients of the scalar `output` with respect to every variable.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.values.len()];
        grads[output.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx] {
                Node::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Node::Clamp { x, lo, hi } => {
                    let xv = self.value(*x);
                    let gx = acc(&mut grads, *x, xv.len());
                    for ((gi, xi), gy) in gx.iter_mut().zip(xv).zip(&g) {
                        if *xi >= *lo && *xi <= *hi {
                            *gi += gy;
                        }
                    }
                }
                Node::ConvConst { x, kernel } => {
                    let back = self.corr(&g, kernel);
                    add_into(acc(&mut grads, *x, back.len()), &back);
                }
                Node::Sum { x } => {
                    let n = self.value(*x).len();
                    let gx = acc(&mut grads, *x, n);
                    gx.iter_mut().for_each(|v| *v += g[0]);
                }
                Node::Normalize { x, total } => {
                    let u = &self.values[idx];
                    let dot: f64 = g.iter().zip(u).map(|(a, b)| a * b).sum();
                    let gx = acc(&mut grads, *x, u.len());
                    for (gi, gy) in gx.iter_mut().zip(&g) {
                        *gi += (gy - dot) / total;
                    }
                }
                Node::CapRatio { x, budget } => {
                    let xs = self.scalar(*x);
                    if xs < *budget {
                        acc(&mut grads, *x, 1)[0] += g[0] / budget;
                    }
                }
                Node::RowCorrelate { d, u, k } => {
                    let uv = self.value(*u);
                    let dv = self.value(*d);
                    let n = uv.len();
                    let mut gd = Vec::with_capacity(k * n);
                    let mut gu = vec![0.0; n];
                    for r in 0..*k {
                        let gr = &g[r * n..(r + 1) * n];
                        gd.extend(self.conv(gr, uv));
                        add_into(&mut gu, &self.corr(&dv[r * n..(r + 1) * n], gr));
                    }
                    add_into(acc(&mut grads, *d, k * n), &gd);
                    add_into(acc(&mut grads, *u, n), &gu);
                }
                Node::ColZnorm { x, k, norms } => {
                    let z = &self.values[idx];
                    let n = z.len() / k;
                    let mut gx = vec![0.0; k * n];
                    for i in 0..n {
                        let dot: f64 = (0..*k).map(|r| z[r * n + i] * g[r * n + i]).sum();
                        let col: Vec<f64> = (0..*k)
                            .map(|r| (g[r * n + i] - z[r * n + i] * dot) / norms[i])
                            .collect();
                        let mean = col.iter().sum::<f64>() / *k as f64;
                        for r in 0..*k {
                            gx[r * n + i] = col[r] - mean;
                        }
                    }
                    add_into(acc(&mut grads, *x, k * n), &gx);
                }
                Node::Shift { x, t } => {
                    let back = fractional_shift(&g, -t);
                    add_into(acc(&mut grads, *x, back.len()), &back);
                }
                Node::ScaleOffset { x, a, mult } => {
                    let xv = self.value(*x);
                    let av = self.scalar(*a);
                    let ga: f64 = g.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>() * mult;
                    let gx = acc(&mut grads, *x, xv.len());
                    for (gi, gy) in gx.iter_mut().zip(&g) {
                        *gi += mult * av * gy;
                    }
                    acc(&mut grads, *a, 1)[0] += ga;
                }
                Node::GaussNoise { r, eps } => {
                    let rv = self.value(*r);
                    let gr = acc(&mut grads, *r, rv.len());
                    for ((gi, (ri, ei)), gy) in gr.iter_mut().zip(rv.iter().zip(eps)).zip(&g) {
                        *gi += gy * (1.0 + ei / (2.0 * ri.max(SQRT_GUARD).sqrt()));
                    }
                }
                Node::MatVec { d, x, k } => {
                    let xv = self.value(*x);
                    let dv = self.value(*d);
                    let n = xv.len();
                    let mut gx = vec![0.0; n];
                    {
                        let gd = acc(&mut grads, *d, k * n);
                        for r in 0..*k {
                            for i in 0..n {
                                gd[r * n + i] += g[r] * xv[i];
                            }
                        }
                    }
                    for r in 0..*k {
                        for i in 0..n {
                            gx[i] += g[r] * dv[r * n + i];
                        }
                    }
                    add_into(acc(&mut grads, *x, n), &gx);
                }
                Node::Znorm { x, norm } => {
                    let z = &self.values[idx];
                    let dot: f64 = z.iter().zip(&g).map(|(a, b)| a * b).sum();
                    let col: Vec<f64> = g.iter().zip(z).map(|(gi, zi)| (gi - zi * dot) / norm).collect();
                    let mean = col.iter().sum::<f64>() / col.len() as f64;
                    let gx = acc(&mut grads, *x, z.len());
                    for (gi, c) in gx.iter_mut().zip(&col) {
                        *gi += c - mean;
                    }
                }
                Node::ColDot { z, b, k } => {
                    let zv = self.value(*z);
                    let bv = self.value(*b);
                    let n = zv.len() / k;
                    let mut gb = vec![0.0; *k];
                    {
                        let gz = acc(&mut grads, *z, k * n);
                        for r in 0..*k {
                            for i in 0..n {
                                gz[r * n + i] += g[i] * bv[r];
                            }
                        }
                    }
                    for (r, gbr) in gb.iter_mut().enumerate() {
                        *gbr = (0..n).map(|i| g[i] * zv[r * n + i]).sum();
                    }
                    add_into(acc(&mut grads, *b, *k), &gb);
                }
                Node::Softargmax {
                    x,
                    beta,
                    values,
                    probs,
                } => {
                    let y = self.values[idx][0];
                    let gx = acc(&mut grads, *x, probs.len());
                    for ((gi, p), v) in gx.iter_mut().zip(probs).zip(values) {
                        *gi += g[0] * beta * p * (v - y);
                    }
                }
                Node::Abs { x } => {
                    let s = sign(self.scalar(*x));
                    acc(&mut grads, *x, 1)[0] += g[0] * s;
                }
                Node::TotalVariation { d, k } => {
                    let gd = tv_subgradient(self.value(*d), *k);
                    let gx = acc(&mut grads, *d, gd.len());
                    for (gi, s) in gx.iter_mut().zip(&gd) {
                        *gi += g[0] * s;
                    }
                }
                Node::Combine { xs, weights } => {
                    for (x, w) in xs.iter().zip(weights) {
                        acc(&mut grads, *x, 1)[0] += g[0] * w;
                    }
                }
            }
        }
        Gradients { grads }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn tv_value(d: &[f64], k: usize) -> f64 {
    let n = d.len() / k;
    d.chunks_exact(n)
        .map(|row| row.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>())
        .sum()
}

pub(crate) fn tv_subgradient(d: &[f64], k: usize) -> Vec<f64> {
    let n = d.len() / k;
    let mut g = vec![0.0; d.len()];
    for r in 0..k {
        let row = &d[r * n..(r + 1) * n];
        for i in 0..n.saturating_sub(1) {
            let s = sign(row[i + 1] - row[i]);
            g[r * n + i + 1] += s;
            g[r * n + i] -= s;
        }
    }
    g
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(build: impl Fn(&mut Tape, Var) -> Var, x0: Vec<f64>, n: usize, tol: f64) {
        let mut tape = Tape::new(n);
        let x = tape.leaf(x0.clone());
        let y = build(&mut tape, x);
        let g = tape.backward(y).get_or_zeros(x, x0.len());
        let h = 1e-4;
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..x0.len() {
            let eval = |delta: f64| {
                let mut t = Tape::new(n);
                let mut xp = x0.clone();
                xp[i] += delta;
                let xv = t.leaf(xp);
                let yv = build(&mut t, xv);
                t.scalar(yv)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let scale = fd.abs().max(g[i].abs()).max(1e-3 * gmax).max(1e-6);
            assert!((fd - g[i]).abs() / scale < tol, "coord {i}: fd {fd} vs tape {}", g[i]);
        }
    }

    fn weights(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect()
    }

    fn dot_with(tape: &mut Tape, v: Var, w: &[f64]) -> Var {
        // scalarize through a 1×n mat-vec so every node is exercised by the tape
        let wv = tape.leaf(w.to_vec());
        let y = tape.mat_vec(wv, v, 1);
        tape.sum(y)
    }

    #[test]
    fn conv_and_normalize_adjoints() {
        for n in [16usize, 96] {
            let kernel: Vec<f64> = (0..n).map(|i| (-(i as f64) / 3.0).exp()).collect();
            let w = weights(n);
            let x0: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sin().abs()).collect();
            fd_check(
                |t, x| {
                    let c = t.conv_const(x, &kernel);
                    let u = t.normalize(c);
                    dot_with(t, u, &w)
                },
                x0,
                n,
                1e-6,
            );
        }
    }

    #[test]
    fn row_correlate_adjoint_in_both_inputs() {
        for n in [12usize, 80] {
            let k = 3;
            let w = weights(k * n);
            let d0: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.37).cos()).collect();
            let u0: Vec<f64> = (0..n).map(|i| 0.5 + (i as f64 * 0.21).sin()).collect();
            let u_fixed = u0.clone();
            fd_check(
                |t, d| {
                    let u = t.leaf(u_fixed.clone());
                    let c = t.row_correlate(d, u, k);
                    dot_with(t, c, &w)
                },
                d0.clone(),
                n,
                1e-6,
            );
            fd_check(
                |t, u| {
                    let d = t.leaf(d0.clone());
                    let c = t.row_correlate(d, u, k);
                    dot_with(t, c, &w)
                },
                u0,
                n,
                1e-6,
            );
        }
    }

    #[test]
    fn znorm_and_col_znorm_adjoints() {
        let k = 4;
        let n = 6;
        let w = weights(k * n);
        let x0: Vec<f64> = (0..k * n).map(|i| (i as f64 * 1.3).sin() * 2.0).collect();
        fd_check(
            |t, x| {
                let z = t.col_znorm(x, k);
                dot_with(t, z, &w)
            },
            x0,
            n,
            1e-6,
        );
        let w = weights(5);
        fd_check(
            |t, x| {
                let z = t.znorm(x);
                dot_with(t, z, &w)
            },
            vec![1.0, -2.0, 0.5, 3.0, 0.25],
            5,
            1e-6,
        );
    }

    #[test]
    fn shift_noise_and_scale_adjoints() {
        let n = 10;
        let w = weights(n);
        let eps: Vec<f64> = (0..n).map(|i| ((i * 7 % 5) as f64 - 2.0) / 2.0).collect();
        fd_check(
            |t, x| {
                let s = t.shift(x, 3.3);
                let total = t.sum(x);
                let r = t.scale_offset(s, total, 2.0, 0.5);
                let y = t.gauss_noise(r, &eps);
                dot_with(t, y, &w)
            },
            (0..n).map(|i| 1.0 + i as f64 * 0.1).collect(),
            n,
            1e-6,
        );
    }

    #[test]
    fn col_dot_softargmax_abs_adjoints() {
        let k = 3;
        let n = 8;
        let b = vec![0.2, -0.7, 0.4];
        let values: Vec<f64> = (0..n).map(|i| i as f64 - 3.5).collect();
        fd_check(
            |t, z| {
                let bv = t.leaf(b.clone());
                let s = t.col_dot(z, bv, k);
                let y = t.softargmax(s, 3.0, values.clone());
                let shifted = t.leaf(vec![0.0]);
                let c = t.combine(vec![y, shifted], vec![1.0, 1.0]);
                t.abs(c)
            },
            (0..k * n).map(|i| (i as f64 * 0.9).cos()).collect(),
            n,
            1e-6,
        );
    }

    #[test]
    fn tv_value_and_subgradient() {
        assert_eq!(tv_value(&[1.0; 6], 2), 0.0);
        assert_eq!(tv_value(&[0.0, 1.0, 0.0], 1), 2.0);
        assert_eq!(tv_subgradient(&[2.0, 2.0, 2.0], 1), vec![0.0; 3]);
        fd_check(
            |t, d| t.total_variation(d, 2),
            vec![0.1, 0.5, 0.2, 0.9, -1.0, 0.3, 0.35, 2.0],
            4,
            1e-5,
        );
    }

    #[test]
    fn clamp_passes_gradient_on_closed_interval() {
        let mut t = Tape::new(4);
        let x = t.leaf(vec![-1.0, 0.0, 0.5, 2.0]);
        let c = t.clamp(x, 0.0, 0.5);
        let s = t.sum(c);
        let g = t.backward(s);
        assert_eq!(g.get(x).unwrap(), &[0.0, 1.0, 1.0, 0.0]);
    }
}
