use proptest::prelude::*;
use spc_core::codes::{correlate_with_waveform, truncated_fourier};
use spc_core::decode::{encode, zncc_decode, zncc_scores};
use spc_core::model::{gaussian_shape, incident_waveform, SceneParams};
use spc_core::signal::{circular_convolve, circular_correlate, circular_error, circular_shift, fractional_shift};

fn direct_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j] * b[(i + n - j) % n]).sum()).collect()
}

fn signal(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..48).prop_flat_map(|n| (signal(n), signal(n)))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

proptest! {
    #[test]
    fn convolution_matches_direct_sum((a, b) in pair()) {
        let fast = circular_convolve(&a, &b).unwrap();
        prop_assert!(close(&fast, &direct_convolve(&a, &b), 1e-10));
    }

    #[test]
    fn convolution_is_linear((a, b) in pair(), alpha in -3.0..3.0f64) {
        let c: Vec<f64> = b.iter().rev().cloned().collect();
        let mix: Vec<f64> = a.iter().zip(&c).map(|(x, y)| alpha * x + y).collect();
        let lhs = circular_convolve(&mix, &b).unwrap();
        let ca = circular_convolve(&a, &b).unwrap();
        let cc = circular_convolve(&c, &b).unwrap();
        let rhs: Vec<f64> = ca.iter().zip(&cc).map(|(x, y)| alpha * x + y).collect();
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }

    #[test]
    fn convolution_commutes_with_shift((a, b) in pair(), k in -60isize..60) {
        let lhs = circular_convolve(&circular_shift(&a, k), &b).unwrap();
        let rhs = circular_shift(&circular_convolve(&a, &b).unwrap(), k);
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }

    #[test]
    fn correlation_is_reversed_convolution((a, b) in pair()) {
        let n = b.len();
        let rev: Vec<f64> = (0..n).map(|i| b[(n - i) % n]).collect();
        let lhs = circular_correlate(&a, &b).unwrap();
        let rhs = circular_convolve(&a, &rev).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }

    #[test]
    fn integer_fractional_shift_is_circular_shift(a in signal(32), k in -40i32..40) {
        let lhs = fractional_shift(&a, k as f64);
        prop_assert!(close(&lhs, &circular_shift(&a, k as isize), 1e-12));
    }

    #[test]
    fn circular_error_is_a_bounded_symmetric_metric(a in 0.0..64.0f64, b in 0.0..64.0f64) {
        let e = circular_error(a, b, 64);
        prop_assert!((e - circular_error(b, a, 64)).abs() < 1e-12);
        prop_assert!((0.0..=32.0).contains(&e));
    }

    #[test]
    fn zncc_ignores_gain_and_offset(depth in 0usize..256, gain in 0.01..100.0f64, offset in -50.0..50.0f64) {
        let d = truncated_fourier(6, 256).unwrap();
        let shape = gaussian_shape(4.0, 256);
        let t = correlate_with_waveform(&d, &shape).unwrap();
        let r = incident_waveform(&shape, &SceneParams::with_sbr(depth as f64, 500.0, 2.0).unwrap()).unwrap();
        let b = encode(&d, &r).unwrap();
        let mut moved = b.clone();
        moved.b.iter_mut().for_each(|v| *v = gain * *v + offset);
        let s0 = zncc_scores(&t, &b.b).unwrap().unwrap();
        let s1 = zncc_scores(&t, &moved.b).unwrap().unwrap();
        prop_assert!(close(&s0, &s1, 1e-9));
        prop_assert_eq!(zncc_decode(&t, &b).unwrap(), zncc_decode(&t, &moved).unwrap());
    }
}
