//! On-disk formats.
//!
//! All binary formats are little-endian with a four-byte magic and a `u32`
//! version:
//!
//! | magic  | layout after the version                                          |
//! |--------|-------------------------------------------------------------------|
//! | `SPCV` | `u32 N`, `f64 Δ_ps`, `N × f64`                                    |
//! | `SPCM` | `u32 K`, `u32 N`, `u8 dtype`, payload (see below)                 |
//! | `SPCC` | `u32 H`, `u32 W`, `u32 N`, `f64 Δ_ps`, `H·W·N × f64` (bin-minor) |
//!
//! `SPCM` dtype 0 is a row-major `f64` payload. Dtypes 1–4 are quantized
//! payloads whose level indices are stored as `u8`, `u16`, `u32` or `u64`
//! respectively, preceded by `u8 bits` and `K × (f64 row_min, f64 row_max)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const VERSION: u32 = 1;
pub const MAGIC_VECTOR: &[u8; 4] = b"SPCV";
pub const MAGIC_MATRIX: &[u8; 4] = b"SPCM";
pub const MAGIC_CUBE: &[u8; 4] = b"SPCC";

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Parse {
                offset: self.pos,
                reason: format!(
                    "truncated: need {n} bytes, {} remain",
                    self.buf.len() - self.pos
                ),
            }),
        }
    }

    pub(crate) fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take(4)?;
        if got != want {
            return Err(Error::Parse {
                offset: at,
                reason: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(want)
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn version(&mut self) -> Result<()> {
        let v = self.u32()?;
        if v != VERSION {
            return Err(Error::UnsupportedVersion {
                found: v,
                expected: VERSION,
            });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = count.checked_mul(8).ok_or_else(|| self.overflow())?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Unsigned integers of `width` bytes each, widened to u64.
    pub(crate) fn uints(&mut self, count: usize, width: usize) -> Result<Vec<u64>> {
        let bytes = count.checked_mul(width).ok_or_else(|| self.overflow())?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(width)
            .map(|c| {
                let mut b = [0u8; 8];
                b[..width].copy_from_slice(c);
                u64::from_le_bytes(b)
            })
            .collect())
    }

    pub(crate) fn overflow(&self) -> Error {
        Error::Parse {
            offset: self.pos,
            reason: "declared dimensions overflow".into(),
        }
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Parse {
                offset: self.pos,
                reason: format!("{} trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn dims_u32(name: &'static str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::invalid(name, "dimension exceeds u32"))
}

/// A sampled waveform (IRF, drive, output illumination).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub values: Vec<f64>,
    pub bin_size_ps: f64,
}

impl Waveform {
    pub fn new(values: Vec<f64>, bin_size_ps: f64) -> Self {
        Waveform {
            values,
            bin_size_ps,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(20 + 8 * self.values.len());
        out.extend_from_slice(MAGIC_VECTOR);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&dims_u32("n", self.values.len())?.to_le_bytes());
        out.extend_from_slice(&self.bin_size_ps.to_le_bytes());
        push_f64s(&mut out, &self.values);
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        r.magic(MAGIC_VECTOR)?;
        r.version()?;
        let n = r.u32()? as usize;
        let bin_size_ps = r.f64()?;
        let values = r.f64s(n)?;
        r.finish()?;
        Ok(Waveform {
            values,
            bin_size_ps,
        })
    }

    /// CSV text: optional `# n=<N> dt_ps=<Δ>` header then one value per line.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# n={} dt_ps={}\n", self.values.len(), self.bin_size_ps);
        for v in &self.values {
            s.push_str(&format!("{v}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut declared_n = None;
        let mut bin_size_ps = 1.0;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if let Some(header) = trimmed.strip_prefix('#') {
                for field in header.split_whitespace() {
                    if let Some(v) = field.strip_prefix("n=") {
                        declared_n = Some(v.parse::<usize>().map_err(|e| Error::Parse {
                            offset,
                            reason: format!("bad n in header: {e}"),
                        })?);
                    } else if let Some(v) = field.strip_prefix("dt_ps=") {
                        bin_size_ps = v.parse::<f64>().map_err(|e| Error::Parse {
                            offset,
                            reason: format!("bad dt_ps in header: {e}"),
                        })?;
                    }
                }
            } else if !trimmed.is_empty() {
                let v = trimmed
                    .trim_end_matches(',')
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        offset,
                        reason: format!("bad value {trimmed:?}: {e}"),
                    })?;
                values.push(v);
            }
            offset += line.len();
        }
        if let Some(n) = declared_n {
            if n != values.len() {
                return Err(Error::Parse {
                    offset,
                    reason: format!("header declares n={n} but {} values follow", values.len()),
                });
            }
        }
        Ok(Waveform {
            values,
            bin_size_ps,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if is_csv(path) {
            write_file(path, self.to_csv().as_bytes())
        } else {
            write_file(path, &self.to_bytes()?)
        }
    }

    /// Loads `SPCV`, or CSV when the extension is `.csv`/`.txt`.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        if is_csv(path) {
            let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
                offset: e.utf8_error().valid_up_to(),
                reason: "not UTF-8".into(),
            })?;
            Self::from_csv(&text)
        } else {
            Self::from_bytes(&bytes)
        }
    }
}

pub(crate) fn is_csv(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("csv") | Some("txt")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_binary_round_trip() {
        let w = Waveform::new(vec![0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 7.5], 12.5);
        let back = Waveform::from_bytes(&w.to_bytes().unwrap()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn waveform_csv_round_trip() {
        let w = Waveform::new(vec![0.1, 1.0 / 3.0, 2e-300], 80.0);
        let back = Waveform::from_csv(&w.to_csv()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn csv_without_header() {
        let w = Waveform::from_csv("1\n2.5\n\n3\n").unwrap();
        assert_eq!(w.values, vec![1.0, 2.5, 3.0]);
        assert_eq!(w.bin_size_ps, 1.0);
    }

    #[test]
    fn csv_header_count_mismatch() {
        assert!(Waveform::from_csv("# n=3 dt_ps=1\n1\n2\n").is_err());
    }

    #[test]
    fn truncated_vector_reports_offset() {
        let w = Waveform::new(vec![1.0, 2.0], 1.0);
        let bytes = w.to_bytes().unwrap();
        match Waveform::from_bytes(&bytes[..bytes.len() - 3]) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let mut bytes = Waveform::new(vec![1.0], 1.0).to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(
            Waveform::from_bytes(&bytes),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));
    }
}
