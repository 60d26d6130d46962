//! Joint optimization of the illumination drive and coding matrix.
//!
//! The drive `f` is projected onto `[0, Φ^max]` after every Adam step, so
//! every iterate satisfies the peak constraint, and the emitted waveform is
//! always recomputed as `s = f ⊛ h`. Gradients come from a small hand-written
//! reverse-mode [`tape`] over the fixed pipeline in [`pipeline`].

pub mod adam;
pub mod bundle;
pub mod config;
pub mod pipeline;
pub mod tape;
pub mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use bundle::{check_constraints, ConstraintReport, OptimizedBundle};
pub use config::{CodingInit, EnergyMode, NoiseMode, OptConfig};
pub use pipeline::{batch_loss, evaluate_batch, forward_pipeline, BatchEval, Sample};
pub use train::{epoch_labels, initial_parameters, train, train_with_observer, Iterate, TrainError};

/// Row-wise total variation `Σ_k Σ_i |D_{k,i+1} − D_{k,i}|` (not circular).
pub fn tv_penalty(d: &crate::codes::CodingMatrix) -> f64 {
    tape::tv_value(d.data(), d.k())
}
