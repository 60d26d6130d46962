//! The differentiable forward model used for training.
//!
//! ```text
//! f ─clamp[0,Φmax]─⊛h─► s ─normalize─► u ─shift(t)─► ·Φη + Φ/(SBR·N) ─► r
//!                          │                                            │ + √r ε
//!                          └─► D′ = D ⋆ u ─col-znorm─► Z                 ▼
//!                                                      │        B = D y ─znorm─► b̂
//!                                                      └── scores = Zᵀ b̂ ──► Σ softmax(β·scores)_i |i ⊖ t|
//! ```
//!
//! With a peak limit, `η = min(1, Σs / Φ_train)`: a drive that emits less
//! than the signal budget loses photons, one that emits more is scaled
//! down to it. Without one, `η = 1`.
//!
//! The per-item loss is the circular absolute error averaged under the
//! softmax of the scores, a smooth stand-in for `|argmax − t|` that stays
//! large when the score profile is flat.

use crate::decode::argmax;
use crate::error::{check_len, Error, Result};
use crate::optim::config::{NoiseMode, OptConfig};
use crate::optim::tape::{Tape, Var};
use crate::signal::{circular_offset, wrap_position};

/// One training label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub depth_bin: f64,
    pub phi_sig: f64,
    pub sbr: f64,
    /// Standard-normal draws for the reparameterized noise, one per bin.
    pub eps: Option<Vec<f64>>,
}

/// Loss, per-item predictions and parameter gradients for one batch.
#[derive(Debug, Clone)]
pub struct BatchEval {
    /// Mean soft circular error plus `λ · TV(D)`.
    pub loss: f64,
    pub depth_loss: f64,
    pub item_losses: Vec<f64>,
    /// Integer argmax decode per item.
    pub predictions: Vec<f64>,
    pub grad_f: Vec<f64>,
    pub grad_d: Vec<f64>,
}

struct Recorded {
    tape: Tape,
    f: Var,
    d: Var,
    loss: Var,
    item_losses: Vec<f64>,
    predictions: Vec<f64>,
    depth_loss: f64,
}

fn record(config: &OptConfig, f: &[f64], d: &[f64], batch: &[Sample], tv_weight: f64) -> Result<Recorded> {
    let (n, k) = (config.n, config.k);
    check_len(n, f.len())?;
    check_len(k * n, d.len())?;
    if batch.is_empty() {
        return Err(Error::invalid("batch", "empty batch"));
    }
    let mut tape = Tape::new(n);
    let fv = tape.leaf(f.to_vec());
    let dv = tape.leaf(d.to_vec());
    let c = tape.clamp(fv, 0.0, config.phi_max());
    let s = tape.conv_const(c, config.irf.values());
    if !(tape.value(s).iter().sum::<f64>() > 0.0) {
        return Err(Error::invalid("f", "illumination emits no photons"));
    }
    let u = tape.normalize(s);
    let eta = if config.is_peak_limited() {
        let total = tape.sum(s);
        tape.cap_ratio(total, config.phi_sig_train)
    } else {
        tape.leaf(vec![1.0])
    };
    let dprime = tape.row_correlate(dv, u, k);
    let z = tape.col_znorm(dprime, k);

    let mut losses = Vec::with_capacity(batch.len());
    let mut item_losses = Vec::with_capacity(batch.len());
    let mut predictions = Vec::with_capacity(batch.len());
    for sample in batch {
        if !(sample.sbr > 0.0) {
            return Err(Error::invalid("sbr", "must be positive"));
        }
        let t = wrap_position(sample.depth_bin, n);
        let v = tape.shift(u, t);
        let floor = sample.phi_sig / (sample.sbr * n as f64);
        let r = tape.scale_offset(v, eta, sample.phi_sig, floor);
        let y = match (config.noise_mode, &sample.eps) {
            (NoiseMode::GaussianMeanVar, Some(eps)) => {
                check_len(n, eps.len())?;
                tape.gauss_noise(r, eps)
            }
            _ => r,
        };
        let b = tape.mat_vec(dv, y, k);
        let bhat = tape.znorm(b);
        let scores = tape.col_dot(z, bhat, k);
        let errors: Vec<f64> = (0..n).map(|i| circular_offset(i as f64, t, n).abs()).collect();
        let l = tape.softargmax(scores, config.beta_softargmax, errors);
        item_losses.push(tape.scalar(l));
        predictions.push(argmax(tape.value(scores)).map_or(f64::NAN, |i| i as f64));
        losses.push(l);
    }
    let j = batch.len() as f64;
    let depth_loss = item_losses.iter().sum::<f64>() / j;
    let mut weights = vec![1.0 / j; losses.len()];
    if tv_weight > 0.0 {
        let tv = tape.total_variation(dv, k);
        losses.push(tv);
        weights.push(tv_weight);
    }
    let loss = tape.combine(losses, weights);
    Ok(Recorded {
        tape,
        f: fv,
        d: dv,
        loss,
        item_losses,
        predictions,
        depth_loss,
    })
}

/// Batch loss without gradients.
pub fn batch_loss(config: &OptConfig, f: &[f64], d: &[f64], batch: &[Sample]) -> Result<f64> {
    let rec = record(config, f, d, batch, config.tv_weight)?;
    Ok(rec.tape.scalar(rec.loss))
}

/// Batch loss and reverse-mode gradients with respect to `f` and `D`.
pub fn evaluate_batch(config: &OptConfig, f: &[f64], d: &[f64], batch: &[Sample]) -> Result<BatchEval> {
    let rec = record(config, f, d, batch, config.tv_weight)?;
    let grads = rec.tape.backward(rec.loss);
    Ok(BatchEval {
        loss: rec.tape.scalar(rec.loss),
        depth_loss: rec.depth_loss,
        item_losses: rec.item_losses,
        predictions: rec.predictions,
        grad_f: grads.get_or_zeros(rec.f, f.len()),
        grad_d: grads.get_or_zeros(rec.d, d.len()),
    })
}

/// Single-item forward pass: circular L1 depth loss and predicted depth.
pub fn forward_pipeline(
    f: &[f64],
    d: &[f64],
    depth_bin: f64,
    phi_sig: f64,
    sbr: f64,
    noise_eps: Option<&[f64]>,
    config: &OptConfig,
) -> Result<(f64, f64)> {
    let sample = Sample {
        depth_bin,
        phi_sig,
        sbr,
        eps: noise_eps.map(<[f64]>::to_vec),
    };
    let rec = record(config, f, d, std::slice::from_ref(&sample), 0.0)?;
    Ok((rec.item_losses[0], rec.predictions[0]))
}
