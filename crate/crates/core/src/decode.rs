//! Compressive encoding and depth decoding.

use crate::codes::{CodingMatrix, DecodeTemplate};
use crate::error::{check_len, Error, Result};
use crate::model::Histogram;
use crate::signal::circular_correlate;

/// Compressive measurement `B = D M` for one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedValues {
    pub b: Vec<f64>,
    pub source_label: String,
}

pub fn encode(d: &CodingMatrix, m: &[f64]) -> Result<CodedValues> {
    let b = d.apply(m)?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("m", "encoding produced non-finite values"));
    }
    Ok(CodedValues {
        b,
        source_label: d.label().to_string(),
    })
}

pub fn encode_histogram(d: &CodingMatrix, m: &Histogram) -> Result<CodedValues> {
    encode(d, &m.to_f64())
}

/// Zero-mean, unit-norm copy of `b`, or `None` when `b` has no variance.
pub fn znormalize(b: &[f64]) -> Option<Vec<f64>> {
    let mean = b.iter().sum::<f64>() / b.len() as f64;
    let centered: Vec<f64> = b.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(norm > 1e-13 * scale) || norm == 0.0 {
        return None;
    }
    Some(centered.into_iter().map(|v| v / norm).collect())
}

/// ZNCC score of every candidate depth. Degenerate template columns score −∞.
/// Returns `None` when `b` has zero variance.
pub fn zncc_scores(template: &DecodeTemplate, b: &[f64]) -> Result<Option<Vec<f64>>> {
    check_len(template.k(), b.len())?;
    let Some(bhat) = znormalize(b) else {
        return Ok(None);
    };
    let n = template.n();
    let z = template.normalized();
    let mut scores = vec![0.0; n];
    for (k, &bk) in bhat.iter().enumerate() {
        for (s, zk) in scores.iter_mut().zip(&z[k * n..(k + 1) * n]) {
            *s += bk * zk;
        }
    }
    for (i, s) in scores.iter_mut().enumerate() {
        if template.is_degenerate(i) {
            *s = f64::NEG_INFINITY;
        }
    }
    Ok(Some(scores))
}

/// First index of the maximum; `None` if no score is finite.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Depth bin maximizing the zero-mean normalized cross-correlation between
/// `B` and the template columns. Ties go to the smallest index.
pub fn zncc_decode(template: &DecodeTemplate, b: &CodedValues) -> Result<usize> {
    if template.k() < 2 {
        return Err(Error::invalid("template", "ZNCC needs K ≥ 2"));
    }
    match zncc_scores(template, &b.b)? {
        Some(scores) => argmax(&scores).ok_or(Error::AmbiguousDecode { scores }),
        None => Err(Error::AmbiguousDecode {
            scores: vec![0.0; template.n()],
        }),
    }
}

/// Matched filter for full-resolution histograms: the shift maximizing the
/// circular correlation of the histogram with the waveform shape.
pub fn matched_filter_decode(shape: &[f64], m: &[f64]) -> Result<usize> {
    check_len(shape.len(), m.len())?;
    let scores = circular_correlate(m, shape)?;
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(hi - lo > 1e-12 * hi.abs().max(lo.abs())) {
        return Err(Error::AmbiguousDecode { scores });
    }
    argmax(&scores).ok_or(Error::AmbiguousDecode { scores })
}

pub fn matched_filter_decode_histogram(shape: &[f64], m: &Histogram) -> Result<usize> {
    matched_filter_decode(shape, &m.to_f64())
}

/// Default softargmax sharpness for normalized ZNCC scores.
pub fn default_beta(k: usize) -> f64 {
    10.0 * (k as f64).sqrt()
}

/// `Σ_i v_i · softmax(β · scores)_i` and its gradient with respect to the
/// scores, `β p_i (v_i − value)`.
pub fn softargmax_with_grad(scores: &[f64], beta: f64, values: &[f64]) -> (f64, Vec<f64>) {
    let probs = softmax(scores, beta);
    let value: f64 = probs.iter().zip(values).map(|(p, v)| p * v).sum();
    let grad = probs
        .iter()
        .zip(values)
        .map(|(p, v)| beta * p * (v - value))
        .collect();
    (value, grad)
}

pub(crate) fn softmax(scores: &[f64], beta: f64) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (beta * (s - max)).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Differentiable depth estimate `Σ_i i · softmax(β · scores)_i`.
pub fn softargmax_scores(scores: &[f64], beta: f64) -> f64 {
    let probs = softmax(scores, beta);
    probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
}
