//! Coding matrices and their decode templates.
//!
//! A coding matrix `D` is `K × N`: each of the `K` rows is a coding function
//! sampled on the `N` histogram bins, and the compressive measurement is the
//! matrix-vector product `B = D M`. Decoding compares `B` against the columns
//! of `D′`, the rows of `D` circularly correlated with the incident waveform
//! shape, so column `i` of `D′` is exactly the noiseless code of a return at
//! depth `i`.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::formats::{self, dims_u32, ByteReader, MAGIC_MATRIX, VERSION};
use crate::signal::{correlate_direct, FftPair};

/// `K × N` real coding matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingMatrix {
    k: usize,
    n: usize,
    data: Vec<f64>,
    label: String,
}

impl CodingMatrix {
    pub fn new(k: usize, n: usize, data: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::invalid("k", "matrix dimensions must be positive"));
        }
        let len = k
            .checked_mul(n)
            .ok_or_else(|| Error::invalid("k", "K·N overflows"))?;
        check_len(len, data.len())?;
        if k > n {
            return Err(Error::invalid("k", format!("K = {k} exceeds N = {n}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data", "matrix entries must be finite"));
        }
        Ok(CodingMatrix {
            k,
            n,
            data,
            label: label.into(),
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(k * n);
        for row in &rows {
            check_len(n, row.len())?;
            data.extend_from_slice(row);
        }
        Self::new(k, n, data, label)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.data[k * self.n + i]
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// `B = D m`.
    pub fn apply(&self, m: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, m.len())?;
        Ok(self
            .rows()
            .map(|row| row.iter().zip(m).map(|(d, x)| d * x).sum())
            .collect())
    }

    /// Binary `SPCM` encoding with an `f64` payload.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(17 + 8 * self.data.len());
        write_matrix_header(&mut out, self.k, self.n, DTYPE_F64)?;
        formats::push_f64s(&mut out, &self.data);
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

pub(crate) const DTYPE_F64: u8 = 0;

pub(crate) fn write_matrix_header(out: &mut Vec<u8>, k: usize, n: usize, dtype: u8) -> Result<()> {
    out.extend_from_slice(MAGIC_MATRIX);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dims_u32("k", k)?.to_le_bytes());
    out.extend_from_slice(&dims_u32("n", n)?.to_le_bytes());
    out.push(dtype);
    Ok(())
}

/// Parses an `SPCM` header, returning `(K, N, dtype)` and leaving the reader
/// at the payload.
pub(crate) fn read_matrix_header(r: &mut ByteReader<'_>) -> Result<(usize, usize, u8)> {
    r.magic(MAGIC_MATRIX)?;
    r.version()?;
    let k = r.u32()? as usize;
    let n = r.u32()? as usize;
    if k.checked_mul(n).and_then(|kn| kn.checked_mul(8)).is_none() {
        return Err(r.overflow());
    }
    let dtype = r.u8()?;
    Ok((k, n, dtype))
}

/// Decodes any `SPCM` payload into a full-precision matrix. Quantized
/// payloads are dequantized.
pub fn matrix_from_bytes(buf: &[u8], label: &str) -> Result<CodingMatrix> {
    let mut r = ByteReader::new(buf);
    let (k, n, dtype) = read_matrix_header(&mut r)?;
    if dtype == DTYPE_F64 {
        let data = r.f64s(k * n)?;
        r.finish()?;
        CodingMatrix::new(k, n, data, label)
    } else {
        let q = crate::quantize::QuantizedMatrix::read_payload(&mut r, k, n, dtype)?;
        r.finish()?;
        Ok(q.dequantize().with_label(label))
    }
}

pub fn save_matrix(d: &CodingMatrix, path: &Path) -> Result<()> {
    if formats::is_csv(path) {
        formats::write_file(path, d.to_csv().as_bytes())
    } else {
        formats::write_file(path, &d.to_bytes()?)
    }
}

/// Loads an `SPCM` file. The label is taken from the file stem.
pub fn load_matrix(path: &Path) -> Result<CodingMatrix> {
    let bytes = formats::read_file(path)?;
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("loaded");
    matrix_from_bytes(&bytes, label)
}

/// Truncated Fourier codes: harmonics `1..=K/2`, each as a `cos`, `−sin` pair.
pub fn truncated_fourier(k: usize, n: usize) -> Result<CodingMatrix> {
    if k < 2 || k % 2 != 0 {
        return Err(Error::invalid("k", format!("Fourier codes need an even K ≥ 2, got {k}")));
    }
    if k > n {
        return Err(Error::invalid("k", format!("K = {k} exceeds N = {n}")));
    }
    let mut data = Vec::with_capacity(k * n);
    for m in 1..=k / 2 {
        let w = 2.0 * PI * m as f64 / n as f64;
        data.extend((0..n).map(|i| (w * i as f64).cos()));
        data.extend((0..n).map(|i| -(w * i as f64).sin()));
    }
    CodingMatrix::new(k, n, data, "fourier")
}

/// Reflected-binary Gray codeword for index `c`.
pub fn gray_codeword(c: u64) -> u64 {
    c ^ (c >> 1)
}

/// Continuous Gray codes: bit `j` (most significant first) of the `K`-bit
/// reflected Gray sequence, held over `2^K` equal segments, interpolated
/// piecewise-linearly between segment centres around the period and
/// rescaled to `[0, 1]`.
pub fn continuous_gray(k: usize, n: usize) -> Result<CodingMatrix> {
    if k == 0 || k > 30 {
        return Err(Error::invalid("k", format!("Gray codes need 1 ≤ K ≤ 30, got {k}")));
    }
    let segments = 1usize << k;
    if n < segments {
        return Err(Error::invalid(
            "n",
            format!("N = {n} is smaller than 2^K = {segments}"),
        ));
    }
    let width = n as f64 / segments as f64;
    let mut data = Vec::with_capacity(k * n);
    for j in 0..k {
        let bit = k - 1 - j;
        let level = |c: usize| ((gray_codeword((c % segments) as u64) >> bit) & 1) as f64;
        let raw: Vec<f64> = (0..n)
            .map(|i| {
                // bin centre relative to the first segment centre
                let u = ((i as f64 + 0.5) / width - 0.5).rem_euclid(segments as f64);
                let c = u.floor() as usize;
                let w = u - c as f64;
                (1.0 - w) * level(c) + w * level(c + 1)
            })
            .collect();
        let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        data.extend(raw.iter().map(|v| (v - lo) / span));
    }
    CodingMatrix::new(k, n, data, "gray")
}

/// Full-resolution histogramming: the `N × N` identity.
pub fn identity_frh(n: usize) -> Result<CodingMatrix> {
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    CodingMatrix::new(n, n, data, "identity")
}

/// Coarse histogram: row `j` is the indicator of the `j`-th block of
/// `⌈N/K⌉` bins; the last block absorbs any remainder.
pub fn coarse(k: usize, n: usize) -> Result<CodingMatrix> {
    if k == 0 || k > n {
        return Err(Error::invalid("k", format!("need 1 ≤ K ≤ N, got K = {k}, N = {n}")));
    }
    let block = n.div_ceil(k);
    let mut data = vec![0.0; k * n];
    for i in 0..n {
        let j = (i / block).min(k - 1);
        data[j * n + i] = 1.0;
    }
    CodingMatrix::new(k, n, data, "coarse")
}

/// `D′` plus its per-column zero-mean, unit-norm copy used for ZNCC scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTemplate {
    dprime: CodingMatrix,
    normalized: Vec<f64>,
    degenerate: Vec<bool>,
}

impl DecodeTemplate {
    /// Wraps an already-correlated matrix.
    pub fn from_dprime(dprime: CodingMatrix) -> Self {
        let (k, n) = (dprime.k(), dprime.n());
        let mut normalized = vec![0.0; k * n];
        let mut degenerate = vec![false; n];
        for i in 0..n {
            let col: Vec<f64> = (0..k).map(|r| dprime.get(r, i)).collect();
            let mean = col.iter().sum::<f64>() / k as f64;
            let raw_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let centered: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 1e-12 * raw_norm) || norm == 0.0 {
                degenerate[i] = true;
                continue;
            }
            for (r, c) in centered.iter().enumerate() {
                normalized[r * n + i] = c / norm;
            }
        }
        DecodeTemplate {
            dprime,
            normalized,
            degenerate,
        }
    }

    pub fn dprime(&self) -> &CodingMatrix {
        &self.dprime
    }

    pub fn k(&self) -> usize {
        self.dprime.k()
    }

    pub fn n(&self) -> usize {
        self.dprime.n()
    }

    /// Row-major `K × N` zero-mean unit-norm columns.
    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn normalized_column(&self, i: usize) -> Vec<f64> {
        let n = self.n();
        (0..self.k()).map(|r| self.normalized[r * n + i]).collect()
    }

    pub fn is_degenerate(&self, i: usize) -> bool {
        self.degenerate[i]
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }
}

/// Correlates each row of `D` with a unit-sum waveform shape:
/// `D′_{k,i} = Σ_j D_{k,j} · s_{(j−i) mod N}`.
pub fn correlate_with_waveform(d: &CodingMatrix, s_shape: &[f64]) -> Result<DecodeTemplate> {
    check_len(d.n(), s_shape.len())?;
    if s_shape.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("s_shape", "values must be finite"));
    }
    let total: f64 = s_shape.iter().sum();
    if total == 0.0 || s_shape.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("s_shape", "all-zero waveform"));
    }
    let n = d.n();
    let mut data = Vec::with_capacity(d.k() * n);
    if n <= 64 {
        for row in d.rows() {
            data.extend(correlate_direct(row, s_shape));
        }
    } else {
        let fft = FftPair::new(n);
        let spec = fft.forward(s_shape);
        for row in d.rows() {
            data.extend(fft.correlate_spec(row, &spec));
        }
    }
    let dprime = CodingMatrix::new(d.k(), n, data, d.label())?;
    Ok(DecodeTemplate::from_dprime(dprime))
}
