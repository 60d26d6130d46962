use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codes::{load_matrix, save_matrix, CodingMatrix};
use crate::error::{Error, Result};
use crate::formats::Waveform;
use crate::model::{Illumination, Irf, IrfKind};
use crate::optim::config::{CodingInit, EnergyMode, NoiseMode, OptConfig};
use crate::signal::circular_convolve;

pub const MATRIX_FILE: &str = "matrix.spcm";
pub const DRIVE_FILE: &str = "illumination.spcv";
pub const WAVEFORM_FILE: &str = "waveform.spcv";
pub const IRF_FILE: &str = "irf.spcv";
pub const CONFIG_FILE: &str = "config.toml";
pub const LOSS_FILE: &str = "loss.csv";

/// Output of training: drive, filtered waveform, coding matrix and history.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedBundle {
    pub f: Vec<f64>,
    pub s: Vec<f64>,
    pub d: CodingMatrix,
    pub config: OptConfig,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Worst-case violations of the drive constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    /// `max_i (f_i − Φ^max)⁺`.
    pub peak_violation: f64,
    /// `max_i (−f_i)⁺`.
    pub floor_violation: f64,
    /// `‖s − f ⊛ h‖∞`.
    pub reconstruction_error: f64,
}

impl ConstraintReport {
    pub const RECONSTRUCTION_TOL: f64 = 1e-9;

    pub fn max_violation(&self) -> f64 {
        self.peak_violation.max(self.floor_violation)
    }

    pub fn reconstruction_mismatch(&self) -> bool {
        !(self.reconstruction_error <= Self::RECONSTRUCTION_TOL)
    }

    pub fn is_feasible(&self) -> bool {
        self.max_violation() == 0.0 && !self.reconstruction_mismatch()
    }
}

impl std::fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "peak violation {:e}, floor violation {:e}, |s - f*h|inf {:e} ({})",
            self.peak_violation,
            self.floor_violation,
            self.reconstruction_error,
            if self.is_feasible() { "feasible" } else { "INFEASIBLE" }
        )
    }
}

/// Checks `0 ≤ f ≤ Φ^max` and `s = f ⊛ h` on a stored bundle.
pub fn check_constraints(bundle: &OptimizedBundle) -> ConstraintReport {
    let phi_max = bundle.config.phi_max();
    let peak_violation = bundle
        .f
        .iter()
        .map(|v| (v - phi_max).max(0.0))
        .fold(0.0, f64::max);
    let floor_violation = bundle.f.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let reconstruction_error = match circular_convolve(&bundle.f, bundle.config.irf.values()) {
        Ok(s) if s.len() == bundle.s.len() => s
            .iter()
            .zip(&bundle.s)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        _ => f64::INFINITY,
    };
    ConstraintReport {
        peak_violation,
        floor_violation,
        reconstruction_error,
    }
}

impl OptimizedBundle {
    pub fn new(f: Vec<f64>, s: Vec<f64>, d: CodingMatrix, config: OptConfig, loss_trace: Vec<f64>) -> Self {
        OptimizedBundle {
            f,
            s,
            d,
            config,
            loss_trace,
        }
    }

    /// The optimized illumination at the training signal budget.
    pub fn illumination(&self) -> Result<Illumination> {
        Illumination::from_drive(
            self.f.clone(),
            &self.config.irf,
            self.config.phi_sig_train,
            self.config.p_factor,
        )
    }

    /// Final-epoch loss no worse than the first epoch's.
    pub fn converged(&self) -> bool {
        match (self.loss_trace.first(), self.loss_trace.last()) {
            (Some(first), Some(last)) => last <= first,
            _ => false,
        }
    }

    /// Running minimum of the per-epoch loss.
    pub fn smoothed_loss_trace(&self) -> Vec<f64> {
        self.loss_trace
            .iter()
            .scan(f64::INFINITY, |best, &v| {
                *best = best.min(v);
                Some(*best)
            })
            .collect()
    }

    /// Fraction of drive bins sitting at the peak limit.
    pub fn saturated_fraction(&self) -> f64 {
        let phi_max = self.config.phi_max();
        if !phi_max.is_finite() {
            return 0.0;
        }
        let hits = self.f.iter().filter(|&&v| v >= phi_max).count();
        hits as f64 / self.f.len() as f64
    }

    pub fn check_constraints(&self) -> ConstraintReport {
        check_constraints(self)
    }

    /// Writes the bundle directory, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let dt = self.config.irf.bin_size_ps();
        save_matrix(&self.d, &dir.join(MATRIX_FILE))?;
        Waveform::new(self.f.clone(), dt).save(&dir.join(DRIVE_FILE))?;
        Waveform::new(self.s.clone(), dt).save(&dir.join(WAVEFORM_FILE))?;
        Waveform::new(self.config.irf.values().to_vec(), dt).save(&dir.join(IRF_FILE))?;
        let meta = BundleMeta::from_bundle(self);
        let text = toml::to_string(&meta).map_err(|e| Error::invalid("config", e.to_string()))?;
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let mut loss = String::from("epoch,loss\n");
        for (i, v) in self.loss_trace.iter().enumerate() {
            loss.push_str(&format!("{i},{v}\n"));
        }
        let path = dir.join(LOSS_FILE);
        fs::write(&path, loss).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: BundleMeta = toml::from_str(&text).map_err(|e| Error::Parse {
            offset: e.span().map_or(0, |s| s.start),
            reason: format!("{}: {}", path.display(), e.message()),
        })?;
        let irf_wave = Waveform::load(&dir.join(IRF_FILE))?;
        let kind = match meta.irf_sigma_bins {
            Some(sigma_bins) => IrfKind::Gaussian { sigma_bins },
            None => IrfKind::Tabulated {
                source: meta.irf_source.clone(),
            },
        };
        let irf = Irf::from_parts(irf_wave.values, irf_wave.bin_size_ps, kind);
        let f = Waveform::load(&dir.join(DRIVE_FILE))?.values;
        let s = Waveform::load(&dir.join(WAVEFORM_FILE))?.values;
        let d = load_matrix(&dir.join(MATRIX_FILE))?.with_label(meta.label.clone());
        let loss_trace = read_loss(&dir.join(LOSS_FILE))?;
        let config = meta.into_config(irf);
        crate::error::check_len(config.n, f.len())?;
        crate::error::check_len(config.k, d.k())?;
        Ok(OptimizedBundle::new(f, s, d, config, loss_trace))
    }
}

fn read_loss(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize::<(usize, f64)>() {
        out.push(row?.1);
    }
    Ok(out)
}

/// Plain-text key-value metadata stored next to the bundle's binary files.
#[derive(Debug, Serialize, Deserialize)]
struct BundleMeta {
    label: String,
    n: usize,
    k: usize,
    irf_sigma_bins: Option<f64>,
    irf_source: String,
    p_factor: f64,
    phi_sig_train: f64,
    phi_train_min: f64,
    phi_train_max: f64,
    sbr_train_set: Vec<f64>,
    depth_samples_per_batch: usize,
    batches_per_epoch: usize,
    lr: f64,
    lr_decay: f64,
    epochs: usize,
    tv_weight: f64,
    beta_softargmax: f64,
    noise_mode: NoiseMode,
    seed: u64,
    energy_mode: EnergyMode,
    coding_init: CodingInit,
    converged: bool,
    final_loss: Option<f64>,
}

impl BundleMeta {
    fn from_bundle(b: &OptimizedBundle) -> Self {
        let c = &b.config;
        let (irf_sigma_bins, irf_source) = match c.irf.kind() {
            IrfKind::Gaussian { sigma_bins } => (Some(*sigma_bins), "gaussian".to_string()),
            IrfKind::Tabulated { source } => (None, source.clone()),
        };
        BundleMeta {
            label: b.d.label().to_string(),
            n: c.n,
            k: c.k,
            irf_sigma_bins,
            irf_source,
            p_factor: c.p_factor,
            phi_sig_train: c.phi_sig_train,
            phi_train_min: c.phi_train_range.0,
            phi_train_max: c.phi_train_range.1,
            sbr_train_set: c.sbr_train_set.clone(),
            depth_samples_per_batch: c.depth_samples_per_batch,
            batches_per_epoch: c.batches_per_epoch,
            lr: c.lr,
            lr_decay: c.lr_decay,
            epochs: c.epochs,
            tv_weight: c.tv_weight,
            beta_softargmax: c.beta_softargmax,
            noise_mode: c.noise_mode,
            seed: c.seed,
            energy_mode: c.energy_mode,
            coding_init: c.coding_init,
            converged: b.converged(),
            final_loss: b.loss_trace.last().copied(),
        }
    }

    fn into_config(self, irf: Irf) -> OptConfig {
        OptConfig {
            n: self.n,
            k: self.k,
            irf,
            p_factor: self.p_factor,
            phi_sig_train: self.phi_sig_train,
            phi_train_range: (self.phi_train_min, self.phi_train_max),
            sbr_train_set: self.sbr_train_set,
            depth_samples_per_batch: self.depth_samples_per_batch,
            batches_per_epoch: self.batches_per_epoch,
            lr: self.lr,
            lr_decay: self.lr_decay,
            epochs: self.epochs,
            tv_weight: self.tv_weight,
            beta_softargmax: self.beta_softargmax,
            noise_mode: self.noise_mode,
            seed: self.seed,
            energy_mode: self.energy_mode,
            coding_init: self.coding_init,
        }
    }
}
