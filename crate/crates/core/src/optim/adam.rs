use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one named parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub name: &'static str,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(name: &'static str, len: usize) -> Self {
        AdamState {
            name,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    hyper: AdamHyper,
) -> Result<()> {
    crate::error::check_len(params.len(), grads.len())?;
    crate::error::check_len(params.len(), state.m.len())?;
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            block: state.name,
            index,
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.5, -2.0];
        let mut s = AdamState::new("x", 2);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1, AdamHyper::default()).unwrap();
        }
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_by_hand() {
        // m̂ = 1, v̂ = 1 at t = 1, so the step is lr / (1 + eps)
        let mut p = vec![0.0];
        let mut s = AdamState::new("x", 1);
        adam_step(&mut p, &[1.0], &mut s, 0.1, AdamHyper::default()).unwrap();
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_block() {
        let mut p = vec![0.0, 0.0];
        let mut s = AdamState::new("coding_matrix", 2);
        let err = adam_step(&mut p, &[0.0, f64::NAN], &mut s, 0.1, AdamHyper::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::NonFiniteGradient {
                block: "coding_matrix",
                index: 1
            }
        ));
        assert_eq!(s.t, 0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut p = vec![0.3, -0.1, 2.0];
            let mut s = AdamState::new("x", 3);
            let mut trace = Vec::new();
            for i in 0..50 {
                let g: Vec<f64> = p.iter().map(|v| 2.0 * v + (i as f64).sin()).collect();
                adam_step(&mut p, &g, &mut s, 0.05, AdamHyper::default()).unwrap();
                trace.extend(p.iter().map(|v| v.to_bits()));
            }
            trace
        };
        assert_eq!(run(), run());
    }
}
