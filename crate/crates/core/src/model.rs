//! The single-photon forward model.
//!
//! An illumination waveform `s` (one laser period of `N` bins) is shifted by
//! the round-trip time of flight, scaled to the requested signal photon
//! count, and offset by a uniform ambient floor. That gives the per-bin mean
//! photon count `r`. A SPAD histogram is then drawn either as independent
//! Poisson counts or, following the first-photon model, as
//! `Binomial(L, 1 − exp(−r_i / L))` over `L` laser cycles.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::error::{check_len, Error, Result};
use crate::signal::{circular_convolve, fractional_shift, wrap_position};

/// Impulse response of the illumination and detection chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Irf {
    values: Vec<f64>,
    bin_size_ps: f64,
    kind: IrfKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IrfKind {
    Gaussian { sigma_bins: f64 },
    Tabulated { source: String },
}

impl Irf {
    /// Builds an IRF from tabulated samples, normalizing them to unit sum.
    pub fn tabulated(values: Vec<f64>, bin_size_ps: f64, source: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("irf", "values must be finite and non-negative"));
        }
        let total: f64 = values.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("irf", "values sum to zero"));
        }
        if !(bin_size_ps > 0.0) {
            return Err(Error::invalid("bin_size_ps", "must be positive"));
        }
        Ok(Irf {
            values: values.into_iter().map(|v| v / total).collect(),
            bin_size_ps,
            kind: IrfKind::Tabulated {
                source: source.into(),
            },
        })
    }

    /// Reassembles a stored IRF without renormalizing.
    pub(crate) fn from_parts(values: Vec<f64>, bin_size_ps: f64, kind: IrfKind) -> Self {
        Irf {
            values,
            bin_size_ps,
            kind,
        }
    }

    pub fn with_bin_size(mut self, bin_size_ps: f64) -> Self {
        self.bin_size_ps = bin_size_ps;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bin_size_ps(&self) -> f64 {
        self.bin_size_ps
    }

    pub fn kind(&self) -> &IrfKind {
        &self.kind
    }

    /// Gaussian width in bins, if this IRF was built from one.
    pub fn sigma_bins(&self) -> Option<f64> {
        match self.kind {
            IrfKind::Gaussian { sigma_bins } => Some(sigma_bins),
            IrfKind::Tabulated { .. } => None,
        }
    }
}

/// Discrete Gaussian of standard deviation `sigma_bins`, centred on bin 0
/// with both tails wrapped around the period, normalized to unit sum.
pub fn gaussian_shape(sigma_bins: f64, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let two_var = 2.0 * sigma_bins * sigma_bins;
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            (-2..=2)
                .map(|m| {
                    let d = i as f64 - m as f64 * nf;
                    (-d * d / two_var).exp()
                })
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn make_gaussian_irf(sigma_bins: f64, n: usize) -> Result<Irf> {
    if !(sigma_bins > 0.0) || !sigma_bins.is_finite() {
        return Err(Error::invalid("sigma_bins", "must be positive"));
    }
    if n < 8 {
        return Err(Error::invalid("n", format!("need at least 8 bins, got {n}")));
    }
    Ok(Irf {
        values: gaussian_shape(sigma_bins, n),
        bin_size_ps: 1.0,
        kind: IrfKind::Gaussian { sigma_bins },
    })
}

/// Clamps every entry into `[0, phi_max]`.
pub fn clamp_peak(f: &[f64], phi_max: f64) -> Vec<f64> {
    f.iter().map(|&v| v.min(phi_max).max(0.0)).collect()
}

/// Emitted illumination: the drive `f`, the filtered output `s` and the
/// photon budget it was built for.
///
/// When built from a drive, `s = f ⊛ h` and `0 ≤ f ≤ Φ^max`. Pulsed
/// baselines are built straight from their output waveform and carry no
/// drive.
#[derive(Debug, Clone, PartialEq)]
pub struct Illumination {
    drive: Option<Vec<f64>>,
    waveform: Vec<f64>,
    phi_sig: f64,
    p_factor: f64,
}

fn check_budget(phi_sig: f64, p_factor: f64) -> Result<()> {
    if !(phi_sig > 0.0) || !phi_sig.is_finite() {
        return Err(Error::invalid("phi_sig", "must be positive and finite"));
    }
    if !(p_factor > 0.0) {
        return Err(Error::invalid("p_factor", "must be positive or infinite"));
    }
    Ok(())
}

impl Illumination {
    /// Filters a drive signal through the IRF. The drive must already satisfy
    /// `0 ≤ f_i ≤ p_factor · phi_sig`.
    pub fn from_drive(drive: Vec<f64>, irf: &Irf, phi_sig: f64, p_factor: f64) -> Result<Self> {
        check_budget(phi_sig, p_factor)?;
        check_len(irf.len(), drive.len())?;
        let phi_max = p_factor * phi_sig;
        if let Some(i) = drive.iter().position(|&v| !(v >= 0.0 && v <= phi_max)) {
            return Err(Error::invalid(
                "drive",
                format!("f[{i}] = {} outside [0, {phi_max}]", drive[i]),
            ));
        }
        // FFT round-off can leave values like −1e-17 where the drive is off
        let waveform = circular_convolve(&drive, irf.values())?
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        Ok(Illumination {
            drive: Some(drive),
            waveform,
            phi_sig,
            p_factor,
        })
    }

    /// Wraps an already-formed output waveform (photons per bin).
    pub fn from_waveform(waveform: Vec<f64>, phi_sig: f64, p_factor: f64) -> Result<Self> {
        check_budget(phi_sig, p_factor)?;
        if waveform.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("waveform", "values must be finite and non-negative"));
        }
        if waveform.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("waveform", "all-zero waveform"));
        }
        Ok(Illumination {
            drive: None,
            waveform,
            phi_sig,
            p_factor,
        })
    }

    pub fn drive(&self) -> Option<&[f64]> {
        self.drive.as_deref()
    }

    pub fn waveform(&self) -> &[f64] {
        &self.waveform
    }

    pub fn len(&self) -> usize {
        self.waveform.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveform.is_empty()
    }

    pub fn phi_sig(&self) -> f64 {
        self.phi_sig
    }

    pub fn p_factor(&self) -> f64 {
        self.p_factor
    }

    pub fn phi_max(&self) -> f64 {
        self.p_factor * self.phi_sig
    }

    pub fn is_peak_limited(&self) -> bool {
        self.p_factor.is_finite()
    }

    /// Photons per period actually emitted, `Σ s`.
    pub fn delivered_photons(&self) -> f64 {
        self.waveform.iter().sum()
    }

    /// Fraction of the signal budget that reaches the scene.
    ///
    /// Without a peak limit the waveform can always be rescaled to the full
    /// budget. With one, emission above the budget is scaled down to it and
    /// emission below it (a clipped pulse) is what it is.
    pub fn signal_fraction(&self) -> f64 {
        if self.is_peak_limited() {
            (self.delivered_photons() / self.phi_sig).min(1.0)
        } else {
            1.0
        }
    }

    /// Unit-sum shape of the output waveform.
    pub fn shape(&self) -> Vec<f64> {
        let total = self.delivered_photons();
        self.waveform.iter().map(|v| v / total).collect()
    }

    /// Scene parameters for this illumination at a nominal signal budget
    /// `phi_sig` and nominal SBR. The ambient floor stays at `phi_sig / sbr`
    /// while the signal is reduced by [`Self::signal_fraction`].
    pub fn scene(&self, depth_bin: f64, phi_sig: f64, sbr: f64) -> Result<SceneParams> {
        let nominal = SceneParams::with_sbr(depth_bin, phi_sig, sbr)?;
        Ok(SceneParams {
            phi_sig: phi_sig * self.signal_fraction(),
            ..nominal
        })
    }
}

/// Per-pixel scene: true depth and signal/ambient photon levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    depth_bin: f64,
    phi_sig: f64,
    phi_bkg: f64,
}

impl SceneParams {
    /// Background given directly as total ambient photons per period.
    pub fn new(depth_bin: f64, phi_sig: f64, phi_bkg: f64) -> Result<Self> {
        if !(phi_sig >= 0.0) || !phi_sig.is_finite() {
            return Err(Error::invalid("phi_sig", "must be finite and non-negative"));
        }
        if !(phi_bkg >= 0.0) || !phi_bkg.is_finite() {
            return Err(Error::invalid("phi_bkg", "must be finite and non-negative"));
        }
        if !depth_bin.is_finite() {
            return Err(Error::invalid("depth_bin", "must be finite"));
        }
        Ok(SceneParams {
            depth_bin,
            phi_sig,
            phi_bkg,
        })
    }

    /// Background from the signal-to-background ratio, `Φ^bkg = Φ^sig / sbr`.
    pub fn with_sbr(depth_bin: f64, phi_sig: f64, sbr: f64) -> Result<Self> {
        if !(sbr > 0.0) {
            return Err(Error::invalid("sbr", "must be positive"));
        }
        Self::new(depth_bin, phi_sig, phi_sig / sbr)
    }

    pub fn depth_bin(&self) -> f64 {
        self.depth_bin
    }

    pub fn phi_sig(&self) -> f64 {
        self.phi_sig
    }

    pub fn phi_bkg(&self) -> f64 {
        self.phi_bkg
    }

    pub fn sbr(&self) -> f64 {
        self.phi_sig / self.phi_bkg
    }

    /// Depth wrapped into `[0, n)`.
    pub fn wrapped_depth(&self, n: usize) -> f64 {
        wrap_position(self.depth_bin, n)
    }
}

/// Mean photon count per bin, `r_i = Φ^sig · shift(s/Σs, d)_i + Φ^bkg / N`.
pub fn incident_waveform(waveform: &[f64], scene: &SceneParams) -> Result<Vec<f64>> {
    let n = waveform.len();
    if n == 0 {
        return Err(Error::invalid("waveform", "empty"));
    }
    if waveform.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("waveform", "values must be finite and non-negative"));
    }
    let total: f64 = waveform.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("waveform", "all-zero waveform"));
    }
    let gain = scene.phi_sig / total;
    let floor = scene.phi_bkg / n as f64;
    Ok(fractional_shift(waveform, scene.depth_bin)
        .into_iter()
        .map(|v| gain * v + floor)
        .collect())
}

/// Probability of at least one photon in each bin, `q_i = 1 − exp(−r_i)`.
pub fn detection_prob(r: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = r.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("r", format!("r[{i}] = {} is negative", r[i])));
    }
    Ok(r.iter().map(|v| -(-v).exp_m1()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// First-photon detection per cycle; `r` is the total mean over all cycles.
    Binomial,
    /// Independent Poisson counts with mean `r_i`.
    #[default]
    Poisson,
}

/// Photon-count histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub cycles: u64,
    pub bin_size_ps: f64,
}

impl Histogram {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Draws a histogram using an explicit RNG.
pub fn sample_histogram_with<R: Rng + ?Sized>(
    r: &[f64],
    cycles: u64,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<Histogram> {
    if cycles < 1 {
        return Err(Error::invalid("cycles", "need at least one laser cycle"));
    }
    if let Some(i) = r.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("r", format!("r[{i}] = {} is not a valid mean", r[i])));
    }
    let counts = match mode {
        SamplingMode::Poisson => r.iter().map(|&lam| poisson(lam, rng)).collect(),
        SamplingMode::Binomial => {
            let per_cycle: Vec<f64> = r.iter().map(|v| v / cycles as f64).collect();
            detection_prob(&per_cycle)?
                .into_iter()
                .map(|q| {
                    if q <= 0.0 {
                        0
                    } else if q >= 1.0 {
                        cycles
                    } else {
                        Binomial::new(cycles, q)
                            .expect("q in (0, 1)")
                            .sample(rng)
                    }
                })
                .collect()
        }
    };
    Ok(Histogram {
        counts,
        cycles,
        bin_size_ps: 1.0,
    })
}

/// Draws a histogram from a ChaCha8 stream seeded with `seed`.
pub fn sample_histogram(r: &[f64], cycles: u64, mode: SamplingMode, seed: u64) -> Result<Histogram> {
    let mut rng = crate::rng::stream(seed, &[]);
    sample_histogram_with(r, cycles, mode, &mut rng)
}

pub(crate) fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).expect("positive finite mean").sample(rng) as u64
    }
}
