use spc_core::codes::{load_matrix, save_matrix, truncated_fourier};
use spc_core::eval::{run_sweep, PulsedMode, Scheme, SweepConfig, SweepNoise};
use spc_core::formats::Waveform;
use spc_core::model::{gaussian_shape, incident_waveform, make_gaussian_irf, sample_histogram, SamplingMode, SceneParams};
use spc_core::quantize::{quantize_matrix, QuantizedMatrix};
use spc_core::scenes::{decode_cube, staircase, synth_cube, TransientCube};
use spc_core::signal::circular_error;

#[test]
fn staircase_scene_agrees_with_sweep_cell() {
    let n = 1024;
    let irf = make_gaussian_irf(5.0, n).unwrap();
    let scheme = Scheme::baseline("fourier", 8, &irf, 1000.0, f64::INFINITY, PulsedMode::Unconstrained).unwrap();

    let (depth, albedo) = staircase(64, 64, n, 8).unwrap();
    let cube = synth_cube(&depth, &albedo, &scheme.illumination().shape(), 1000.0, 1.0).unwrap();
    let scene = decode_cube(&cube, &scheme, 11, SweepNoise::Poisson, Some(&depth)).unwrap();
    assert_eq!(scene.invalid, 0);

    let mut config = SweepConfig::new(vec![scheme], vec![1000.0], vec![1.0]);
    config.trials = 2000;
    let cell = run_sweep(&config).unwrap().rows[0].clone();

    // standard error of each mean bounded through its second moment
    let se = (scene.rmse.unwrap().powi(2) / 4096.0 + cell.rmse.powi(2) / 2000.0).sqrt();
    let (a, b) = (scene.mae.unwrap(), cell.mae);
    assert!((a - b).abs() <= 3.0 * se, "scene {a} vs sweep {b}, se {se}");
    assert!(a / b < 2.0 && b / a < 2.0);
}

#[test]
fn sampled_histogram_matches_incident_mean() {
    let shape = gaussian_shape(3.0, 64);
    let r = incident_waveform(&shape, &SceneParams::with_sbr(20.0, 200.0, 0.5).unwrap()).unwrap();
    let reps = 400;
    let mut mean = vec![0.0; 64];
    for rep in 0..reps {
        let h = sample_histogram(&r, 1, SamplingMode::Poisson, rep).unwrap();
        for (m, v) in mean.iter_mut().zip(h.to_f64()) {
            *m += v / reps as f64;
        }
    }
    let total: f64 = mean.iter().sum();
    // total count is Poisson(600) averaged over the repetitions
    let expected: f64 = r.iter().sum();
    assert!((total - expected).abs() < 4.0 * (expected / reps as f64).sqrt());
    for (m, ri) in mean.iter().zip(&r) {
        assert!((m - ri).abs() < 5.0 * (ri / reps as f64).sqrt() + 1e-9);
    }
}

#[test]
fn noiseless_cube_decodes_within_one_bin() {
    let n = 256;
    let irf = make_gaussian_irf(3.0, n).unwrap();
    let scheme = Scheme::baseline("fourier", 8, &irf, 1000.0, f64::INFINITY, PulsedMode::Unconstrained).unwrap();
    let (depth, albedo) = staircase(4, 16, n, 16).unwrap();
    let cube = synth_cube(&depth, &albedo, &scheme.illumination().shape(), 1000.0, 1.0).unwrap();
    let out = decode_cube(&cube, &scheme, 0, SweepNoise::Noiseless, Some(&depth)).unwrap();
    for (got, want) in out.depth.values.iter().zip(&depth.values) {
        assert!(circular_error(*got, *want, n) <= 1.0);
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();

    let d = truncated_fourier(4, 64).unwrap();
    let path = dir.path().join("d.spcm");
    save_matrix(&d, &path).unwrap();
    assert_eq!(load_matrix(&path).unwrap().data(), d.data());

    let q = QuantizedMatrix::new(&d, 5).unwrap();
    let qpath = dir.path().join("q.spcm");
    q.save(&qpath).unwrap();
    let back = load_matrix(&qpath).unwrap();
    assert_eq!(back.data(), quantize_matrix(&d, 5).unwrap().data());

    let w = Waveform::new(gaussian_shape(2.0, 32), 4.0);
    let wpath = dir.path().join("w.spcv");
    w.save(&wpath).unwrap();
    assert_eq!(Waveform::load(&wpath).unwrap(), w);

    let (depth, albedo) = staircase(2, 3, 32, 3).unwrap();
    let cube = synth_cube(&depth, &albedo, &w.values, 50.0, 2.0).unwrap();
    let cpath = dir.path().join("c.spcc");
    cube.save(&cpath).unwrap();
    let loaded = TransientCube::load(&cpath).unwrap();
    assert_eq!(loaded.data(), cube.data());
    assert_eq!((loaded.height(), loaded.width(), loaded.n()), (2, 3, 32));
}
