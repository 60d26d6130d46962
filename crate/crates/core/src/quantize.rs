//! Memory-efficient representations of coding matrices.
//!
//! Two compressions are provided: per-row uniform quantization to a fixed
//! bit depth, and per-row Fourier truncation that keeps only the strongest
//! harmonics. Both return a full-precision matrix so that the encoder and
//! the decode template are derived from the same compressed codes.

use std::path::Path;

use crate::codes::{write_matrix_header, CodingMatrix};
use crate::error::{Error, Result};
use crate::eval::{run_sweep, Scheme, SweepConfig, SweepNoise};
use crate::formats::{self, ByteReader};
use crate::signal::FftPair;

/// Level indices plus per-row `[min, max]` scales.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    k: usize,
    n: usize,
    bits: u8,
    row_min: Vec<f64>,
    row_max: Vec<f64>,
    levels: Vec<u64>,
}

fn dtype_for(bits: u8) -> (u8, usize) {
    match bits {
        1..=8 => (1, 1),
        9..=16 => (2, 2),
        17..=32 => (3, 4),
        _ => (4, 8),
    }
}

impl QuantizedMatrix {
    /// Quantizes each row of `d` to `bits` bits (1–63).
    pub fn new(d: &CodingMatrix, bits: u8) -> Result<Self> {
        if !(1..=63).contains(&bits) {
            return Err(Error::invalid("bits", format!("level storage needs 1..=63 bits, got {bits}")));
        }
        let top = ((1u64 << bits) - 1) as f64;
        let mut row_min = Vec::with_capacity(d.k());
        let mut row_max = Vec::with_capacity(d.k());
        let mut levels = Vec::with_capacity(d.k() * d.n());
        for row in d.rows() {
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row_min.push(lo);
            row_max.push(hi);
            let span = hi - lo;
            levels.extend(row.iter().map(|&x| {
                if span > 0.0 {
                    ((x - lo) / span * top).round().clamp(0.0, top) as u64
                } else {
                    0
                }
            }));
        }
        Ok(QuantizedMatrix {
            k: d.k(),
            n: d.n(),
            bits,
            row_min,
            row_max,
            levels,
        })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn levels(&self) -> &[u64] {
        &self.levels
    }

    pub fn dequantize(&self) -> CodingMatrix {
        let top = ((1u64 << self.bits) - 1) as f64;
        let mut data = Vec::with_capacity(self.levels.len());
        for r in 0..self.k {
            let lo = self.row_min[r];
            let step = (self.row_max[r] - lo) / top;
            data.extend(
                self.levels[r * self.n..(r + 1) * self.n]
                    .iter()
                    .map(|&q| lo + q as f64 * step),
            );
        }
        CodingMatrix::new(self.k, self.n, data, format!("quantized{}", self.bits))
            .expect("dimensions carried over from a valid matrix")
    }

    /// `SPCM` bytes with a quantized dtype.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (dtype, width) = dtype_for(self.bits);
        let mut out = Vec::new();
        write_matrix_header(&mut out, self.k, self.n, dtype)?;
        out.push(self.bits);
        for r in 0..self.k {
            out.extend_from_slice(&self.row_min[r].to_le_bytes());
            out.extend_from_slice(&self.row_max[r].to_le_bytes());
        }
        for q in &self.levels {
            out.extend_from_slice(&q.to_le_bytes()[..width]);
        }
        Ok(out)
    }

    pub(crate) fn read_payload(r: &mut ByteReader<'_>, k: usize, n: usize, dtype: u8) -> Result<Self> {
        let width = match dtype {
            1 => 1,
            2 => 2,
            3 => 4,
            4 => 8,
            other => {
                return Err(Error::Parse {
                    offset: 16,
                    reason: format!("unknown dtype tag {other}"),
                })
            }
        };
        let bits = r.u8()?;
        if !(1..=63).contains(&bits) || dtype_for(bits).0 != dtype {
            return Err(Error::Parse {
                offset: 17,
                reason: format!("bit depth {bits} does not match dtype {dtype}"),
            });
        }
        let mut row_min = Vec::with_capacity(k);
        let mut row_max = Vec::with_capacity(k);
        for _ in 0..k {
            row_min.push(r.f64()?);
            row_max.push(r.f64()?);
        }
        let levels = r.uints(k * n, width)?;
        Ok(QuantizedMatrix {
            k,
            n,
            bits,
            row_min,
            row_max,
            levels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        formats::write_file(path, &self.to_bytes()?)
    }
}

/// Per-row uniform quantization to `bits` bits, returned dequantized.
/// `bits = 64` returns the matrix unchanged.
pub fn quantize_matrix(d: &CodingMatrix, bits: u32) -> Result<CodingMatrix> {
    match bits {
        64 => Ok(d.clone()),
        1..=63 => Ok(QuantizedMatrix::new(d, bits as u8)?
            .dequantize()
            .with_label(d.label())),
        _ => Err(Error::invalid("bits", format!("need 1 ≤ bits ≤ 64, got {bits}"))),
    }
}

/// Keeps, per row, the DC term and the `n_coeffs` harmonics of largest
/// magnitude; everything else is zeroed before the inverse transform.
pub fn fourier_compress(d: &CodingMatrix, n_coeffs: usize) -> Result<CodingMatrix> {
    let n = d.n();
    if n_coeffs == 0 || n_coeffs > n / 2 {
        return Err(Error::invalid(
            "n_coeffs",
            format!("need 1 ≤ n_coeffs ≤ N/2 = {}, got {n_coeffs}", n / 2),
        ));
    }
    let fft = FftPair::new(n);
    let mut data = Vec::with_capacity(d.k() * n);
    for row in d.rows() {
        let spec = fft.forward(row);
        let mut harmonics: Vec<usize> = (1..=n / 2).collect();
        // stable: equal magnitudes keep the lower harmonic first
        harmonics.sort_by(|&a, &b| spec[b].norm().total_cmp(&spec[a].norm()));
        let mut keep = vec![false; n];
        keep[0] = true;
        for &m in &harmonics[..n_coeffs] {
            keep[m] = true;
            keep[(n - m) % n] = true;
        }
        let filtered = spec
            .into_iter()
            .zip(&keep)
            .map(|(c, &k)| if k { c } else { Default::default() })
            .collect();
        data.extend(fft.inverse_real(filtered));
    }
    CodingMatrix::new(d.k(), n, data, d.label())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compression {
    /// Full precision.
    None,
    Bits,
    FourierCoeffs,
}

impl std::fmt::Display for Compression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Compression::None => "none",
            Compression::Bits => "bits",
            Compression::FourierCoeffs => "fourier_coeffs",
        })
    }
}

/// One row of a budget sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BudgetRow {
    pub compression: Compression,
    pub budget: usize,
    pub selection: String,
    pub mae: f64,
    pub rmse: f64,
}

/// Single-cell evaluation settings for a budget sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetEval {
    pub phi_sig: f64,
    pub sbr: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BudgetEval {
    fn default() -> Self {
        BudgetEval {
            phi_sig: 1000.0,
            sbr: 0.1,
            trials: 2000,
            seed: 0,
        }
    }
}

/// RMSE/MAE of `scheme` with its matrix compressed at every budget.
///
/// The first row is the uncompressed reference. Every row is evaluated on
/// the same trials, so differences come from the codes alone.
pub fn budget_sweep(
    scheme: &Scheme,
    bit_budgets: &[u32],
    coeff_budgets: &[usize],
    eval: &BudgetEval,
) -> Result<Vec<BudgetRow>> {
    let matrix = scheme
        .matrix()
        .ok_or_else(|| Error::invalid("scheme", "budget sweeps need a compressive scheme"))?;
    let mut variants = vec![(Compression::None, 64usize, matrix.clone())];
    for &b in bit_budgets {
        variants.push((Compression::Bits, b as usize, quantize_matrix(matrix, b)?));
    }
    for &c in coeff_budgets {
        variants.push((Compression::FourierCoeffs, c, fourier_compress(matrix, c)?));
    }
    let schemes = variants
        .iter()
        .map(|(kind, budget, m)| {
            scheme.with_matrix(m.clone(), format!("{}:{kind}:{budget}", scheme.label()))
        })
        .collect::<Result<Vec<_>>>()?;
    let result = run_sweep(&SweepConfig {
        schemes,
        phi_grid: vec![eval.phi_sig],
        sbr_grid: vec![eval.sbr],
        trials: eval.trials,
        seed: eval.seed,
        noise: SweepNoise::Poisson,
    })?;
    Ok(variants
        .iter()
        .zip(&result.rows)
        .map(|((kind, budget, _), cell)| BudgetRow {
            compression: *kind,
            budget: *budget,
            selection: match kind {
                Compression::FourierCoeffs => "largest_magnitude".into(),
                _ => "per_row_uniform".into(),
            },
            mae: cell.mae,
            rmse: cell.rmse,
        })
        .collect())
}

pub fn budget_csv(rows: &[BudgetRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["compression", "budget", "selection", "mae", "rmse"])?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid("csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
