use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::codes::{truncated_fourier, CodingMatrix};
use crate::error::Error;
use crate::optim::adam::{adam_step, AdamHyper, AdamState};
use crate::optim::bundle::OptimizedBundle;
use crate::optim::config::{CodingInit, NoiseMode, OptConfig};
use crate::optim::pipeline::{evaluate_batch, Sample};
use crate::rng;
use crate::signal::circular_convolve;

/// Training failure. Divergence carries the last parameters that produced a
/// finite loss.
#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(#[source] Error),
    #[error("training diverged at epoch {epoch}, step {step}: {source}")]
    Diverged {
        epoch: usize,
        step: usize,
        #[source]
        source: Error,
        checkpoint: Box<OptimizedBundle>,
    },
}

/// State after one projected update, handed to training observers.
#[derive(Debug)]
pub struct Iterate<'a> {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub f: &'a [f64],
    pub d: &'a [f64],
}

/// Labels for one epoch: depths uniform over the period, photon counts
/// log-uniform over the training window, SBR drawn from the training set.
pub fn epoch_labels(config: &OptConfig, epoch: usize) -> Vec<Vec<Sample>> {
    let mut rng = rng::stream(config.seed, &[1, epoch as u64]);
    let (lo, hi) = config.phi_train_range;
    let log_phi = Uniform::new_inclusive(lo.ln(), hi.ln()).expect("validated range");
    (0..config.batches_per_epoch)
        .map(|_| {
            (0..config.depth_samples_per_batch)
                .map(|_| {
                    let depth_bin = rng.random::<f64>() * config.n as f64;
                    let phi_sig = log_phi.sample(&mut rng).exp();
                    let sbr = config.sbr_train_set[rng.random_range(0..config.sbr_train_set.len())];
                    let eps = (config.noise_mode == NoiseMode::GaussianMeanVar).then(|| {
                        (0..config.n)
                            .map(|_| StandardNormal.sample(&mut rng))
                            .collect()
                    });
                    Sample {
                        depth_bin,
                        phi_sig,
                        sbr,
                        eps,
                    }
                })
                .collect()
        })
        .collect()
}

/// Initial drive (all ones, projected) and coding matrix.
pub fn initial_parameters(config: &OptConfig) -> (Vec<f64>, Vec<f64>) {
    let f = vec![1.0f64.min(config.phi_max()); config.n];
    let d = match config.coding_init {
        CodingInit::Fourier => truncated_fourier(config.k, config.n)
            .expect("validated K")
            .data()
            .to_vec(),
        CodingInit::Uniform => {
            let mut rng = rng::stream(config.seed, &[0]);
            let dist = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
            (0..config.k * config.n).map(|_| dist.sample(&mut rng)).collect()
        }
    };
    (f, d)
}

fn project(f: &mut [f64], phi_max: f64) {
    for v in f.iter_mut() {
        *v = v.min(phi_max).max(0.0);
    }
}

fn snapshot(config: &OptConfig, f: &[f64], d: &[f64], trace: &[f64]) -> OptimizedBundle {
    let s: Vec<f64> = circular_convolve(f, config.irf.values())
        .expect("lengths validated")
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let d = CodingMatrix::new(config.k, config.n, d.to_vec(), "optimized").expect("validated dims");
    OptimizedBundle::new(f.to_vec(), s, d, config.clone(), trace.to_vec())
}

/// Jointly optimizes the drive and the coding matrix.
pub fn train(config: &OptConfig) -> Result<OptimizedBundle, TrainError> {
    train_with_observer(config, |_| {})
}

/// As [`train`], calling `observer` after every projected update.
pub fn train_with_observer(
    config: &OptConfig,
    mut observer: impl FnMut(&Iterate<'_>),
) -> Result<OptimizedBundle, TrainError> {
    config.validate().map_err(TrainError::Config)?;
    let (mut f, mut d) = initial_parameters(config);
    let mut f_state = AdamState::new("illumination", f.len());
    let mut d_state = AdamState::new("coding_matrix", d.len());
    let hyper = AdamHyper::default();
    let phi_max = config.phi_max();
    let mut lr = config.lr;
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if epoch > 0 && epoch % config.decay_interval() == 0 {
            lr *= config.lr_decay;
        }
        let mut epoch_total = 0.0;
        let labels = epoch_labels(config, epoch);
        for (step, batch) in labels.iter().enumerate() {
            let diverged = |source: Error, f: &[f64], d: &[f64], trace: &[f64]| TrainError::Diverged {
                epoch,
                step,
                source,
                checkpoint: Box::new(snapshot(config, f, d, trace)),
            };
            let eval = match evaluate_batch(config, &f, &d, batch) {
                Ok(e) => e,
                Err(e) => return Err(diverged(e, &f, &d, &trace)),
            };
            if !eval.loss.is_finite() {
                let e = Error::invalid("loss", format!("non-finite batch loss {}", eval.loss));
                return Err(diverged(e, &f, &d, &trace));
            }
            let (f_prev, d_prev) = (f.clone(), d.clone());
            let update = adam_step(&mut f, &eval.grad_f, &mut f_state, lr, hyper)
                .and_then(|_| adam_step(&mut d, &eval.grad_d, &mut d_state, lr, hyper));
            if let Err(e) = update {
                return Err(diverged(e, &f_prev, &d_prev, &trace));
            }
            project(&mut f, phi_max);
            epoch_total += eval.loss;
            observer(&Iterate {
                epoch,
                step,
                lr,
                loss: eval.loss,
                f: &f,
                d: &d,
            });
        }
        trace.push(epoch_total / labels.len() as f64);
    }
    Ok(snapshot(config, &f, &d, &trace))
}
