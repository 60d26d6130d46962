//! Compressive single-photon time-of-flight imaging.
//!
//! The crate covers the full loop around compressive histograms for SPAD
//! lidar:
//!
//! * [`model`]: illumination, impulse response and photon histogram formation.
//! * [`codes`]: baseline coding matrices and their ZNCC decode templates.
//! * [`decode`]: encoding histograms into coded values and decoding depth.
//! * [`optim`]: gradient-based joint design of illumination and codes under
//!   bandwidth and peak-power limits.
//! * [`eval`]: Monte Carlo MAE/RMSE sweeps.
//! * [`scenes`]: per-pixel depth maps from transient cubes.
//! * [`quantize`]: bit-depth and Fourier-coefficient compression of codes.
//!
//! ```
//! use spc_core::codes::{correlate_with_waveform, truncated_fourier};
//! use spc_core::decode::{encode, zncc_decode};
//! use spc_core::model::{incident_waveform, make_gaussian_irf, SceneParams};
//!
//! let irf = make_gaussian_irf(5.0, 1024)?;
//! let d = truncated_fourier(8, 1024)?;
//! let template = correlate_with_waveform(&d, irf.values())?;
//!
//! let scene = SceneParams::with_sbr(300.0, 1000.0, 1.0)?;
//! let r = incident_waveform(irf.values(), &scene)?;
//! let b = encode(&d, &r)?;
//! assert_eq!(zncc_decode(&template, &b)?, 300);
//! # Ok::<(), spc_core::Error>(())
//! ```

pub mod codes;
pub mod decode;
pub mod error;
pub mod eval;
pub mod formats;
pub mod model;
pub mod optim;
pub mod quantize;
pub mod rng;
pub mod scenes;
pub mod signal;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/forward-model.md")]
    mod forward_model {}
    #[doc = include_str!("../../../book/src/coding.md")]
    mod coding {}
    #[doc = include_str!("../../../book/src/optimization.md")]
    mod optimization {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/quantization.md")]
    mod quantization {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
