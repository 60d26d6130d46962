use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Irf;

/// Learning rate for bandwidth-limited (no peak limit) training.
pub const LR_BANDWIDTH: f64 = 0.013;
/// Learning rate for peak-power-limited training.
pub const LR_PEAK: f64 = 0.0018;
pub const LR_DECAY: f64 = 0.35;
pub const TV_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Gaussian with variance equal to the mean, `r + sqrt(r) ⊙ ε`.
    #[default]
    GaussianMeanVar,
    None,
}

/// How pulsed baselines are brought under a peak limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    #[default]
    Clip,
    ConstantEnergy,
}

/// Starting point for the coding matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CodingInit {
    /// Seeded uniform entries in `[−1, 1]`.
    #[default]
    Uniform,
    /// Truncated Fourier rows (requires even `K`).
    Fourier,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    pub n: usize,
    pub k: usize,
    pub irf: Irf,
    /// `Φ^max = p_factor · phi_sig_train`; infinite for no peak limit.
    pub p_factor: f64,
    /// Signal budget the drive `f` is expressed against.
    pub phi_sig_train: f64,
    /// Log-uniform window for per-label signal photon counts.
    pub phi_train_range: (f64, f64),
    pub sbr_train_set: Vec<f64>,
    /// `J`, depths per batch.
    pub depth_samples_per_batch: usize,
    pub batches_per_epoch: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    pub tv_weight: f64,
    pub beta_softargmax: f64,
    pub noise_mode: NoiseMode,
    pub seed: u64,
    pub energy_mode: EnergyMode,
    pub coding_init: CodingInit,
}

impl OptConfig {
    /// Defaults for the given system; the learning rate follows the regime.
    pub fn new(k: usize, irf: Irf, p_factor: f64) -> Self {
        let peak_limited = p_factor.is_finite();
        OptConfig {
            n: irf.len(),
            k,
            irf,
            p_factor,
            phi_sig_train: 1000.0,
            phi_train_range: (100.0, 1000.0),
            sbr_train_set: vec![0.5, 1.0, 5.0],
            depth_samples_per_batch: 64,
            batches_per_epoch: 100,
            lr: if peak_limited { LR_PEAK } else { LR_BANDWIDTH },
            lr_decay: LR_DECAY,
            epochs: if peak_limited { 30 } else { 10 },
            tv_weight: TV_WEIGHT,
            beta_softargmax: crate::decode::default_beta(k),
            noise_mode: NoiseMode::GaussianMeanVar,
            seed: 0,
            energy_mode: EnergyMode::Clip,
            coding_init: CodingInit::Uniform,
        }
    }

    pub fn is_peak_limited(&self) -> bool {
        self.p_factor.is_finite()
    }

    pub fn phi_max(&self) -> f64 {
        self.p_factor * self.phi_sig_train
    }

    /// Epoch interval between learning-rate decays.
    pub fn decay_interval(&self) -> usize {
        (self.epochs / 3).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::invalid(name, reason.to_string()));
        if self.irf.len() != self.n {
            return bad("irf", "IRF length must equal N");
        }
        if self.k < 2 || self.k > self.n {
            return bad("k", "need 2 ≤ K ≤ N");
        }
        if !(self.p_factor > 0.0) {
            return bad("p_factor", "must be positive or infinite");
        }
        if !(self.phi_sig_train > 0.0) || !self.phi_sig_train.is_finite() {
            return bad("phi_sig_train", "must be positive");
        }
        let (lo, hi) = self.phi_train_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("phi_train_range", "need 0 < lo ≤ hi");
        }
        if self.sbr_train_set.is_empty() || self.sbr_train_set.iter().any(|s| !(*s > 0.0)) {
            return bad("sbr_train_set", "need at least one positive SBR");
        }
        if self.depth_samples_per_batch == 0 || self.batches_per_epoch == 0 {
            return bad("depth_samples_per_batch", "batches must be non-empty");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay", "must lie in (0, 1]");
        }
        if self.epochs == 0 {
            return bad("epochs", "need at least one epoch");
        }
        if !(self.tv_weight >= 0.0) {
            return bad("tv_weight", "must be non-negative");
        }
        if !(self.beta_softargmax > 0.0) {
            return bad("beta_softargmax", "must be positive");
        }
        if self.coding_init == CodingInit::Fourier && self.k % 2 != 0 {
            return bad("coding_init", "Fourier initialization needs an even K");
        }
        Ok(())
    }
}
