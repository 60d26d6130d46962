//! Per-pixel depth-map evaluation on transient cubes.
//!
//! A [`TransientCube`] holds one `N`-bin waveform per pixel. Cubes are either
//! synthesized here from depth and albedo maps (direct reflections only) or
//! ingested from `SPCC` files rendered elsewhere, in which case each pixel is
//! an unscaled shape that [`scale_cube`] turns into photon counts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::eval::{Scheme, SweepNoise};
use crate::formats::{self, dims_u32, push_f64s, ByteReader, MAGIC_CUBE, VERSION};
use crate::model::{incident_waveform, sample_histogram_with, SamplingMode, SceneParams};
use crate::rng::stream;
use crate::signal::circular_error;

/// `H × W` map of per-pixel values. `NaN` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_len(height * width, values.len())?;
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("values", "map entries must be finite or NaN"));
        }
        Ok(DepthMap { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        DepthMap {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    /// Range over valid pixels, `None` when there are none.
    pub fn range(&self) -> Option<(f64, f64)> {
        let valid = self.values.iter().filter(|v| !v.is_nan());
        let (lo, hi) = valid.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        (lo <= hi).then_some((lo, hi))
    }

    /// One line per row; invalid pixels are written as `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut width = None;
        let mut height = 0;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                let row = trimmed
                    .split(',')
                    .map(|f| {
                        f.trim().parse::<f64>().map_err(|e| Error::Parse {
                            offset,
                            reason: format!("bad map value {f:?}: {e}"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if *width.get_or_insert(row.len()) != row.len() {
                    return Err(Error::Parse {
                        offset,
                        reason: format!("ragged row {height}"),
                    });
                }
                values.extend(row);
                height += 1;
            }
            offset += line.len();
        }
        DepthMap::new(height, width.unwrap_or(0), values)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let bytes = formats::read_file(path)?;
        Self::from_csv(&String::from_utf8_lossy(&bytes))
    }

    /// Binary 16-bit PGM. Valid pixels are scaled linearly from
    /// `[min, max]` to `[0, 65535]`; invalid pixels and constant maps
    /// write 0. Returns the scaling range.
    pub fn to_pgm(&self) -> (Vec<u8>, Option<(f64, f64)>) {
        let range = self.range();
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for &v in &self.values {
            let level = match range {
                Some((lo, hi)) if hi > lo && !v.is_nan() => ((v - lo) / (hi - lo) * 65535.0).round() as u16,
                _ => 0,
            };
            out.extend_from_slice(&level.to_be_bytes());
        }
        (out, range)
    }
}

/// `H × W × N` per-pixel waveforms, bin index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientCube {
    height: usize,
    width: usize,
    n: usize,
    bin_size_ps: f64,
    data: Vec<f64>,
}

impl TransientCube {
    pub fn new(height: usize, width: usize, n: usize, data: Vec<f64>, bin_size_ps: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "cube needs at least one bin"));
        }
        check_len(height * width * n, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "data",
                format!("pixel {} bin {} is {}", i / n, i % n, data[i]),
            ));
        }
        Ok(TransientCube {
            height,
            width,
            n,
            bin_size_ps,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bin_size_ps(&self) -> f64 {
        self.bin_size_ps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let p = y * self.width + x;
        &self.data[p * self.n..(p + 1) * self.n]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    /// All-zero pixels carry no information and are decoded as invalid.
    pub fn invalid_mask(&self) -> Vec<bool> {
        self.pixels().map(|p| p.iter().all(|v| *v == 0.0)).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(28 + 8 * self.data.len());
        out.extend_from_slice(MAGIC_CUBE);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for (name, v) in [("height", self.height), ("width", self.width), ("n", self.n)] {
            out.extend_from_slice(&dims_u32(name, v)?.to_le_bytes());
        }
        out.extend_from_slice(&self.bin_size_ps.to_le_bytes());
        push_f64s(&mut out, &self.data);
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        r.magic(MAGIC_CUBE)?;
        r.version()?;
        let height = r.u32()? as usize;
        let width = r.u32()? as usize;
        let n = r.u32()? as usize;
        let bin_size_ps = r.f64()?;
        let count = height
            .checked_mul(width)
            .and_then(|p| p.checked_mul(n))
            .ok_or_else(|| r.overflow())?;
        let data = r.f64s(count)?;
        r.finish()?;
        Self::new(height, width, n, data, bin_size_ps)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        formats::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&formats::read_file(path)?)
    }
}

/// Direct-reflection cube: each pixel is the illumination shifted to the
/// pixel depth, scaled by `albedo · phi_sig_base`, over a uniform background
/// of `phi_sig_base / sbr` photons per period.
pub fn synth_cube(
    depth: &DepthMap,
    albedo: &DepthMap,
    illum_shape: &[f64],
    phi_sig_base: f64,
    sbr: f64,
) -> Result<TransientCube> {
    if (depth.height, depth.width) != (albedo.height, albedo.width) {
        return Err(Error::invalid(
            "albedo",
            format!(
                "albedo map is {}×{} but depth map is {}×{}",
                albedo.height, albedo.width, depth.height, depth.width
            ),
        ));
    }
    if !(sbr > 0.0) {
        return Err(Error::invalid("sbr", "must be positive"));
    }
    let phi_bkg = phi_sig_base / sbr;
    let mut data = Vec::with_capacity(depth.values.len() * illum_shape.len());
    for (&d, &a) in depth.values.iter().zip(&albedo.values) {
        if d.is_nan() || a.is_nan() || a < 0.0 {
            return Err(Error::invalid("depth", "synthesis needs valid depth and non-negative albedo everywhere"));
        }
        data.extend(incident_waveform(illum_shape, &SceneParams::new(d, a * phi_sig_base, phi_bkg)?)?);
    }
    TransientCube::new(depth.height, depth.width, illum_shape.len(), data, 1.0)
}

/// `steps` vertical bands of increasing depth spanning `[0.1 N, 0.9 N)`,
/// with unit albedo.
pub fn staircase(height: usize, width: usize, n: usize, steps: usize) -> Result<(DepthMap, DepthMap)> {
    if steps == 0 || width == 0 || height == 0 {
        return Err(Error::invalid("steps", "need a non-empty map and at least one step"));
    }
    let lo = 0.1 * n as f64;
    let stride = 0.8 * n as f64 / steps as f64;
    let values = (0..height)
        .flat_map(|_| (0..width).map(move |x| lo + (x * steps / width) as f64 * stride))
        .collect();
    Ok((DepthMap::new(height, width, values)?, DepthMap::filled(height, width, 1.0)))
}

/// How ingested shapes are turned into photon counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Every pixel receives `phi_sig` signal photons.
    #[default]
    PerPixel,
    /// Relative brightness is kept; the mean valid pixel receives `phi_sig`.
    PerScene,
}

/// Scales an ingested cube of shapes and adds `phi_sig / sbr` background
/// photons per pixel. All-zero pixels stay all-zero.
pub fn scale_cube(cube: &TransientCube, phi_sig: f64, sbr: f64, mode: Normalization) -> Result<TransientCube> {
    if !(sbr > 0.0) || !(phi_sig >= 0.0) {
        return Err(Error::invalid("sbr", "need sbr > 0 and phi_sig ≥ 0"));
    }
    let sums: Vec<f64> = cube.pixels().map(|p| p.iter().sum()).collect();
    let valid: Vec<f64> = sums.iter().cloned().filter(|s| *s > 0.0).collect();
    let scene_mean = valid.iter().sum::<f64>() / valid.len().max(1) as f64;
    let floor = phi_sig / (sbr * cube.n as f64);
    let mut data = Vec::with_capacity(cube.data.len());
    for (p, &total) in cube.pixels().zip(&sums) {
        if total <= 0.0 {
            data.extend(std::iter::repeat_n(0.0, cube.n));
            continue;
        }
        let gain = match mode {
            Normalization::PerPixel => phi_sig / total,
            Normalization::PerScene => phi_sig / scene_mean,
        };
        data.extend(p.iter().map(|v| gain * v + floor));
    }
    TransientCube::new(cube.height, cube.width, cube.n, data, cube.bin_size_ps)
}

/// Decoded depth map and, when ground truth was given, error statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeDecode {
    pub depth: DepthMap,
    pub error: Option<DepthMap>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    /// Pixels that were all-zero or whose decode was ambiguous.
    pub invalid: usize,
}

/// Samples and decodes every pixel. Each pixel draws from its own stream,
/// so maps do not depend on the worker count.
pub fn decode_cube(
    cube: &TransientCube,
    scheme: &Scheme,
    seed: u64,
    noise: SweepNoise,
    truth: Option<&DepthMap>,
) -> Result<CubeDecode> {
    check_len(scheme.n(), cube.n)?;
    if let Some(t) = truth {
        if (t.height, t.width) != (cube.height, cube.width) {
            return Err(Error::invalid("truth", "ground-truth map dims differ from the cube"));
        }
    }
    let decoded: Vec<f64> = cube
        .data
        .par_chunks_exact(cube.n)
        .enumerate()
        .map(|(p, r)| {
            if r.iter().all(|v| *v == 0.0) {
                return Ok(f64::NAN);
            }
            let m = match noise {
                SweepNoise::Poisson => {
                    let mut rng = stream(seed, &[3, p as u64]);
                    sample_histogram_with(r, 1, SamplingMode::Poisson, &mut rng)?.to_f64()
                }
                SweepNoise::Noiseless => r.to_vec(),
            };
            match scheme.decode(&m) {
                Ok(i) => Ok(i as f64),
                Err(Error::AmbiguousDecode { .. }) => Ok(f64::NAN),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let invalid = decoded.iter().filter(|v| v.is_nan()).count();
    let depth = DepthMap::new(cube.height, cube.width, decoded)?;
    let Some(truth) = truth else {
        return Ok(CubeDecode {
            depth,
            error: None,
            mae: None,
            rmse: None,
            invalid,
        });
    };
    let errors: Vec<f64> = depth
        .values
        .iter()
        .zip(&truth.values)
        .map(|(&d, &t)| if d.is_nan() || t.is_nan() { f64::NAN } else { circular_error(d, t, cube.n) })
        .collect();
    let valid: Vec<f64> = errors.iter().cloned().filter(|e| !e.is_nan()).collect();
    let count = valid.len().max(1) as f64;
    let (mae, rmse) = if valid.is_empty() {
        (None, None)
    } else {
        (
            Some(valid.iter().sum::<f64>() / count),
            Some((valid.iter().map(|e| e * e).sum::<f64>() / count).sqrt()),
        )
    };
    Ok(CubeDecode {
        depth,
        error: Some(DepthMap::new(cube.height, cube.width, errors)?),
        mae,
        rmse,
        invalid,
    })
}

fn export_one(map: &DepthMap, prefix: &Path, name: &str) -> Result<Vec<PathBuf>> {
    let stem = prefix
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let path = |ext: &str| prefix.with_file_name(format!("{stem}_{name}.{ext}"));
    let (pgm, range) = map.to_pgm();
    let mut sidecar = String::new();
    let (lo, hi) = range.unwrap_or((0.0, 0.0));
    let _ = writeln!(sidecar, "# level = round((value - min) / (max - min) * 65535); invalid pixels and constant maps are 0");
    let _ = writeln!(sidecar, "min={lo}\nmax={hi}\nmaxval=65535\ninvalid={}", map.values.len() - map.valid_count());
    let files = vec![path("pgm"), path("pgm.txt"), path("csv")];
    formats::write_file(&files[0], &pgm)?;
    formats::write_file(&files[1], sidecar.as_bytes())?;
    formats::write_file(&files[2], map.to_csv().as_bytes())?;
    Ok(files)
}

/// Writes `<prefix>_depth.{pgm,pgm.txt,csv}` and, if given, the same for
/// `<prefix>_error`. Returns the paths written.
pub fn export_maps(depth: &DepthMap, error: Option<&DepthMap>, prefix: &Path) -> Result<Vec<PathBuf>> {
    let mut files = export_one(depth, prefix, "depth")?;
    if let Some(e) = error {
        files.extend(export_one(e, prefix, "error")?);
    }
    Ok(files)
}
