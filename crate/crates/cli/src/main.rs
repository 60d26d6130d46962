mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spc_core::codes::{self, load_matrix, save_matrix, CodingMatrix};
use spc_core::eval::{self, plot_svg, run_sweep, Metric, PulsedMode, Scheme, SweepConfig, SweepNoise};
use spc_core::formats::Waveform;
use spc_core::model::{make_gaussian_irf, Irf};
use spc_core::optim::{self, CodingInit, NoiseMode, OptConfig, OptimizedBundle, TrainError};
use spc_core::quantize::{self, BudgetEval, Compression, QuantizedMatrix};
use spc_core::scenes::{self, DepthMap, Normalization, TransientCube};
use spc_core::Error;

const USAGE: u8 = 2;
const RUNTIME: u8 = 3;

/// Single-photon compressive depth sensing: codes, training and evaluation.
#[derive(Parser)]
#[command(name = "spc", version, args_override_self = true)]
struct Cli {
    /// Worker threads for sweeps and scenes [default: all cores].
    #[arg(long, global = true, env = "SPC_THREADS")]
    threads: Option<usize>,

    /// TOML file of default flag values (see README).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a baseline coding matrix.
    GenCodes(GenCodes),
    /// Jointly train an illumination and coding matrix.
    Optimize(Optimize),
    /// Monte Carlo MAE/RMSE sweep over photon counts and SBR.
    Eval(EvalArgs),
    /// Synthesize or decode transient cubes.
    #[command(subcommand)]
    Scene(SceneCommand),
    /// Quantize or Fourier-compress a coding matrix.
    Quantize(QuantizeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeName {
    Fourier,
    Gray,
    Coarse,
    Identity,
}

#[derive(Args)]
struct GenCodes {
    #[arg(long, value_enum)]
    scheme: SchemeName,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Output `.spcm` (or `.csv`) path.
    #[arg(long, default_value = "codes.spcm")]
    out: PathBuf,
    /// Accepted for uniformity; code generation is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct SystemArgs {
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Gaussian IRF standard deviation in bins.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Tabulated IRF (`.spcv` or one value per line); overrides `--sigma`.
    #[arg(long)]
    irf_file: Option<PathBuf>,
    /// Bin width in picoseconds, used for physical units in reports.
    #[arg(long, default_value_t = 1.0)]
    dt_ps: f64,
}

impl SystemArgs {
    fn irf(&self) -> Result<Irf, Failure> {
        let irf = match &self.irf_file {
            Some(path) => {
                let w = Waveform::load(path)?;
                Irf::tabulated(w.values, w.bin_size_ps, path.display().to_string())?
            }
            None => make_gaussian_irf(self.sigma, self.n)?.with_bin_size(self.dt_ps),
        };
        Ok(irf)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Uniform,
    Fourier,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Gaussian,
    None,
}

#[derive(Args)]
struct Optimize {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Peak-power factor; omit for no peak limit.
    #[arg(long, default_value_t = f64::INFINITY)]
    p_factor: f64,
    #[arg(long, default_value_t = 1000.0)]
    phi_sig: f64,
    /// Training epochs [default: 10 without a peak limit, 30 with one].
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    tv_weight: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    batches_per_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Lowest per-label photon count; the range is log-uniform up to `--phi-sig`.
    #[arg(long)]
    phi_train_min: Option<f64>,
    #[arg(long, value_enum, default_value = "uniform")]
    init: InitArg,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bundle")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PulsedArg {
    Clip,
    Constant,
    Unconstrained,
}

impl From<PulsedArg> for PulsedMode {
    fn from(p: PulsedArg) -> Self {
        match p {
            PulsedArg::Clip => PulsedMode::Clip,
            PulsedArg::Constant => PulsedMode::ConstantEnergy,
            PulsedArg::Unconstrained => PulsedMode::Unconstrained,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateArg {
    /// The scheme's own output waveform.
    Waveform,
    /// The bare IRF.
    Irf,
}

#[derive(Args, Clone)]
struct SchemeArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = f64::INFINITY)]
    p_factor: f64,
    /// How pulsed baselines meet the peak limit.
    #[arg(long, value_enum, default_value = "clip")]
    pulsed_mode: PulsedArg,
    #[arg(long, value_enum, default_value = "waveform")]
    template: TemplateArg,
    /// Photon budget `Φ^max` is expressed against.
    #[arg(long, default_value_t = 1000.0)]
    phi_ref: f64,
}

impl SchemeArgs {
    /// A baseline name, a bundle directory or an `.spcm` matrix used with a
    /// pulsed illumination.
    fn scheme(&self, spec: &str, irf: &Irf) -> Result<Scheme, Failure> {
        let mode = self.pulsed_mode.into();
        let pulsed = || eval::pulsed_illumination(irf, self.phi_ref, self.p_factor, mode);
        let scheme = match spec {
            "fourier" | "gray" | "coarse" | "identity" | "frh" => {
                if matches!(self.template, TemplateArg::Irf) && !matches!(spec, "identity" | "frh") {
                    let matrix = match spec {
                        "fourier" => codes::truncated_fourier(self.k, irf.len())?,
                        "gray" => codes::continuous_gray(self.k, irf.len())?,
                        _ => codes::coarse(self.k, irf.len())?,
                    };
                    Scheme::with_template_shape(spec, matrix, pulsed()?, irf.values().to_vec())?
                } else {
                    Scheme::baseline(spec, self.k, irf, self.phi_ref, self.p_factor, mode)?
                }
            }
            path => {
                let p = Path::new(path);
                let label = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.to_string());
                if p.is_dir() {
                    Scheme::from_bundle(label, &OptimizedBundle::load(p)?)?
                } else if p.exists() {
                    Scheme::compressive(label, load_matrix(p)?, pulsed()?)?
                } else {
                    return Err(Failure::usage(format!(
                        "scheme {path:?} is neither a baseline name nor an existing file or bundle"
                    )));
                }
            }
        };
        Ok(scheme)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Comma-separated baselines, bundle directories or matrix files.
    #[arg(long, value_delimiter = ',', default_value = "fourier,gray,identity")]
    schemes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "100,300,1000,3000")]
    phi_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
    sbr_grid: Vec<f64>,
    #[arg(long, default_value_t = eval::DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long)]
    noiseless: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "eval-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SceneCommand {
    /// Synthesize a transient cube from a preset or depth/albedo CSV maps.
    Synth(SceneSynth),
    /// Sample, encode and decode every pixel of a cube.
    Decode(SceneDecode),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Staircase,
}

#[derive(Args)]
struct SceneSynth {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, value_enum, default_value = "staircase")]
    preset: Preset,
    /// Side length of the preset scene in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    /// Depth map CSV (bins); replaces the preset.
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Albedo map CSV; defaults to all ones.
    #[arg(long)]
    albedo: Option<PathBuf>,
    /// Output waveform to synthesize with; defaults to the IRF pulse.
    #[arg(long)]
    waveform: Option<PathBuf>,
    #[arg(long, default_value_t = 1000.0)]
    phi_sig: f64,
    #[arg(long, default_value_t = 1.0)]
    sbr: f64,
    /// Accepted for uniformity; synthesis is noiseless.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `cube.spcc` and `truth.csv`.
    #[arg(long, default_value = "scene")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizeArg {
    PerPixel,
    PerScene,
}

#[derive(Args)]
struct SceneDecode {
    #[command(flatten)]
    scheme_args: SchemeArgs,
    #[arg(long, default_value = "scene/cube.spcc")]
    cube: PathBuf,
    /// Baseline name, bundle directory or matrix file.
    #[arg(long, default_value = "fourier")]
    scheme: String,
    /// Ground-truth depth CSV; defaults to `truth.csv` next to the cube.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Treat the cube as unscaled shapes and scale to this signal level.
    #[arg(long)]
    phi_sig: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sbr: f64,
    #[arg(long, value_enum, default_value = "per-pixel")]
    normalize: NormalizeArg,
    #[arg(long)]
    noiseless: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prefix for the exported maps.
    #[arg(long, default_value = "scene/decoded")]
    out: PathBuf,
}

#[derive(Args)]
struct QuantizeArgs {
    #[command(flatten)]
    scheme_args: SchemeArgs,
    /// Matrix file or bundle directory.
    #[arg(long)]
    matrix: PathBuf,
    /// Bit depths, as a list (`1,4,8`) or an inclusive range (`1:64`).
    #[arg(long, default_value = "1:64")]
    bits: String,
    /// Fourier coefficient budgets, list or range.
    #[arg(long)]
    coeffs: Option<String>,
    /// Also run a Monte Carlo sweep per budget.
    #[arg(long)]
    evaluate: bool,
    #[arg(long, default_value_t = 1000.0)]
    phi_sig: f64,
    #[arg(long, default_value_t = 0.1)]
    sbr: f64,
    #[arg(long, default_value_t = eval::DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "quantize.csv")]
    out: PathBuf,
    /// Store the matrix quantized at this bit depth (1–63) as `.spcm`.
    #[arg(long, requires = "store_bits")]
    store: Option<PathBuf>,
    #[arg(long)]
    store_bits: Option<u8>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: RUNTIME,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::AmbiguousDecode { .. } | Error::NonFiniteGradient { .. } => RUNTIME,
            _ => USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn parse_levels(spec: &str) -> Result<Vec<usize>, Failure> {
    let bad = |s: &str| Failure::usage(format!("bad budget {s:?}; use a list like 1,4,8 or a range like 1:64"));
    if let Some((a, b)) = spec.split_once(':') {
        let a: usize = a.trim().parse().map_err(|_| bad(spec))?;
        let b: usize = b.trim().parse().map_err(|_| bad(spec))?;
        if a > b {
            return Err(bad(spec));
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad(s))).collect()
}

fn gen_codes(args: GenCodes) -> Result<(), Failure> {
    let d = match args.scheme {
        SchemeName::Fourier => codes::truncated_fourier(args.k, args.n)?,
        SchemeName::Gray => codes::continuous_gray(args.k, args.n)?,
        SchemeName::Coarse => codes::coarse(args.k, args.n)?,
        SchemeName::Identity => {
            if args.n >= 512 {
                eprintln!(
                    "warning: identity matrix is {n}×{n} ({} MiB as f64)",
                    args.n * args.n * 8 / (1 << 20),
                    n = args.n
                );
            }
            codes::identity_frh(args.n)?
        }
    };
    if args.out.extension().is_some_and(|e| e == "csv") {
        write(&args.out, d.to_csv().as_bytes())?;
    } else {
        save_matrix(&d, &args.out)?;
    }
    println!("{}: K={} N={}", d.label(), d.k(), d.n());
    let norms: Vec<String> = d.row_norms().iter().map(|v| format!("{v:.4}")).collect();
    if norms.len() <= 16 {
        println!("row norms: {}", norms.join(" "));
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn optimize(args: Optimize) -> Result<(), Failure> {
    let irf = args.system.irf()?;
    let mut config = OptConfig::new(args.k, irf, args.p_factor);
    config.phi_sig_train = args.phi_sig;
    config.phi_train_range = (config.phi_train_range.0.min(args.phi_sig), args.phi_sig);
    if let Some(lo) = args.phi_train_min {
        config.phi_train_range.0 = lo;
    }
    config.seed = args.seed;
    macro_rules! set {
        ($field:ident, $arg:expr) => {
            if let Some(v) = $arg {
                config.$field = v;
            }
        };
    }
    set!(epochs, args.epochs);
    set!(lr, args.lr);
    set!(lr_decay, args.lr_decay);
    set!(tv_weight, args.tv_weight);
    set!(beta_softargmax, args.beta);
    set!(batches_per_epoch, args.batches_per_epoch);
    set!(depth_samples_per_batch, args.batch_size);
    config.coding_init = match args.init {
        InitArg::Uniform => CodingInit::Uniform,
        InitArg::Fourier => CodingInit::Fourier,
    };
    config.noise_mode = match args.noise {
        NoiseArg::Gaussian => NoiseMode::GaussianMeanVar,
        NoiseArg::None => NoiseMode::None,
    };
    eprintln!(
        "training K={} N={} p_factor={} for {} epochs (lr {}, decay {})",
        config.k, config.n, config.p_factor, config.epochs, config.lr, config.lr_decay
    );
    let bundle = match optim::train_with_observer(&config, |it| {
        if it.step + 1 == config.batches_per_epoch {
            eprintln!("epoch {:>3}  last batch loss {:.4}", it.epoch, it.loss);
        }
    }) {
        Ok(b) => b,
        Err(TrainError::Config(e)) => return Err(e.into()),
        Err(TrainError::Diverged {
            epoch,
            step,
            source,
            checkpoint,
        }) => {
            let path = args.out.join("checkpoint");
            checkpoint.save(&path)?;
            return Err(Failure::runtime(format!(
                "training diverged at epoch {epoch}, step {step}: {source}; last finite iterate saved to {}",
                path.display()
            )));
        }
    };
    bundle.save(&args.out)?;
    let report = bundle.check_constraints();
    println!("{report}");
    if let Some(last) = bundle.loss_trace.last() {
        println!("final epoch loss {last:.4}");
    }
    let il = bundle.illumination()?;
    println!(
        "delivered photons {:.3} of {} ({:.1}% of bins at the peak limit)",
        il.delivered_photons(),
        config.phi_sig_train,
        100.0 * bundle.saturated_fraction()
    );
    println!("wrote {}", args.out.display());
    if !report.is_feasible() {
        return Err(Failure::runtime("constraint check failed"));
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<(), Failure> {
    let irf = args.scheme.system.irf()?;
    let schemes = args
        .schemes
        .iter()
        .map(|s| args.scheme.scheme(s.trim(), &irf))
        .collect::<Result<Vec<_>, _>>()?;
    let config = SweepConfig {
        schemes,
        phi_grid: args.phi_grid.clone(),
        sbr_grid: args.sbr_grid.clone(),
        trials: args.trials,
        seed: args.seed,
        noise: if args.noiseless {
            SweepNoise::Noiseless
        } else {
            SweepNoise::Poisson
        },
    };
    let result = run_sweep(&config)?;
    write(&args.out.join("sweep.csv"), result.to_csv()?.as_bytes())?;
    for &sbr in &args.sbr_grid {
        for (metric, name) in [(Metric::Mae, "mae"), (Metric::Rmse, "rmse")] {
            write(
                &args.out.join(format!("{name}_sbr{sbr}.svg")),
                plot_svg(&result, sbr, metric).as_bytes(),
            )?;
        }
    }
    print!("{}", result.to_table());
    let dt = args.scheme.system.dt_ps;
    if dt != 1.0 {
        for r in &result.rows {
            println!(
                "{} phi={} sbr={}: MAE {:.4} m, RMSE {:.4} m",
                r.scheme,
                r.phi,
                r.sbr,
                eval::bins_to_meters(r.mae, dt),
                eval::bins_to_meters(r.rmse, dt)
            );
        }
    }
    println!("wrote {}", args.out.join("sweep.csv").display());
    Ok(())
}

fn scene_synth(args: SceneSynth) -> Result<(), Failure> {
    let irf = args.system.irf()?;
    let n = irf.len();
    let shape = match &args.waveform {
        Some(p) => Waveform::load(p)?.values,
        None => irf.values().to_vec(),
    };
    let (depth, albedo) = match &args.depth {
        Some(p) => {
            let depth = DepthMap::load_csv(p)?;
            let albedo = match &args.albedo {
                Some(a) => DepthMap::load_csv(a)?,
                None => DepthMap::filled(depth.height, depth.width, 1.0),
            };
            (depth, albedo)
        }
        None => match args.preset {
            Preset::Staircase => scenes::staircase(args.size, args.size, n, args.steps)?,
        },
    };
    let cube = scenes::synth_cube(&depth, &albedo, &shape, args.phi_sig, args.sbr)?;
    let cube = TransientCube::new(cube.height(), cube.width(), n, cube.data().to_vec(), irf.bin_size_ps())?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::runtime(format!("{}: {e}", args.out.display())))?;
    cube.save(&args.out.join("cube.spcc"))?;
    write(&args.out.join("truth.csv"), depth.to_csv().as_bytes())?;
    println!(
        "{}×{}×{} cube written to {}",
        cube.height(),
        cube.width(),
        cube.n(),
        args.out.join("cube.spcc").display()
    );
    Ok(())
}

fn scene_decode(args: SceneDecode) -> Result<(), Failure> {
    let mut cube = TransientCube::load(&args.cube)?;
    if let Some(phi) = args.phi_sig {
        let mode = match args.normalize {
            NormalizeArg::PerPixel => Normalization::PerPixel,
            NormalizeArg::PerScene => Normalization::PerScene,
        };
        cube = scenes::scale_cube(&cube, phi, args.sbr, mode)?;
    }
    let mut system = args.scheme_args.clone();
    system.system.n = cube.n();
    let irf = system.system.irf()?;
    let scheme = system.scheme(&args.scheme, &irf)?;
    let truth_path = args
        .truth
        .clone()
        .or_else(|| Some(args.cube.with_file_name("truth.csv")).filter(|p| p.exists()));
    let truth = truth_path.as_deref().map(DepthMap::load_csv).transpose()?;
    let noise = if args.noiseless {
        SweepNoise::Noiseless
    } else {
        SweepNoise::Poisson
    };
    let out = scenes::decode_cube(&cube, &scheme, args.seed, noise, truth.as_ref())?;
    let files = scenes::export_maps(&out.depth, out.error.as_ref(), &args.out)?;
    if let (Some(mae), Some(rmse)) = (out.mae, out.rmse) {
        println!("MAE {mae:.4} bins, RMSE {rmse:.4} bins");
    }
    println!("{} invalid pixels", out.invalid);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn quantize_cmd(args: QuantizeArgs) -> Result<(), Failure> {
    let (matrix, scheme) = if args.matrix.is_dir() {
        let bundle = OptimizedBundle::load(&args.matrix)?;
        let scheme = args.evaluate.then(|| Scheme::from_bundle("bundle", &bundle)).transpose()?;
        (bundle.d, scheme)
    } else {
        if !args.matrix.exists() {
            return Err(Failure::usage(format!("{}: no such file", args.matrix.display())));
        }
        let m = load_matrix(&args.matrix)?;
        let scheme = if args.evaluate {
            let mut system = args.scheme_args.clone();
            system.system.n = m.n();
            let irf = system.system.irf()?;
            Some(system.scheme(&args.matrix.display().to_string(), &irf)?)
        } else {
            None
        };
        (m, scheme)
    };
    let bits: Vec<u32> = parse_levels(&args.bits)?.into_iter().map(|b| b as u32).collect();
    let coeffs = args.coeffs.as_deref().map(parse_levels).transpose()?.unwrap_or_default();

    let mut variants: Vec<(Compression, usize, CodingMatrix)> = Vec::new();
    for &b in &bits {
        variants.push((Compression::Bits, b as usize, quantize::quantize_matrix(&matrix, b)?));
    }
    for &c in &coeffs {
        variants.push((Compression::FourierCoeffs, c, quantize::fourier_compress(&matrix, c)?));
    }
    let sweep = match &scheme {
        Some(s) => {
            let eval = BudgetEval {
                phi_sig: args.phi_sig,
                sbr: args.sbr,
                trials: args.trials,
                seed: args.seed,
            };
            // drop the uncompressed reference row
            Some(quantize::budget_sweep(s, &bits, &coeffs, &eval)?.split_off(1))
        }
        None => None,
    };

    let mut csv = String::from("compression,budget,selection,max_abs_error,rel_l2_error");
    if sweep.is_some() {
        csv.push_str(",mae,rmse");
    }
    csv.push('\n');
    let norm = matrix.data().iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for (i, (kind, budget, m)) in variants.iter().enumerate() {
        let diff = m.data().iter().zip(matrix.data()).map(|(a, b)| a - b);
        let max_abs = diff.clone().fold(0.0f64, |a, d| a.max(d.abs()));
        let rel = diff.map(|d| d * d).sum::<f64>().sqrt() / norm;
        let selection = match kind {
            Compression::FourierCoeffs => "largest_magnitude",
            _ => "per_row_uniform",
        };
        csv.push_str(&format!("{kind},{budget},{selection},{max_abs},{rel}"));
        if let Some(rows) = &sweep {
            csv.push_str(&format!(",{},{}", rows[i].mae, rows[i].rmse));
        }
        csv.push('\n');
    }
    write(&args.out, csv.as_bytes())?;
    if let (Some(path), Some(b)) = (&args.store, args.store_bits) {
        QuantizedMatrix::new(&matrix, b)?.save(path)?;
        println!("wrote {}", path.display());
    }
    println!("{} budget rows written to {}", variants.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::runtime(e.to_string()))?;
    }
    match cli.command {
        Command::GenCodes(a) => gen_codes(a),
        Command::Optimize(a) => optimize(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Scene(SceneCommand::Synth(a)) => scene_synth(a),
        Command::Scene(SceneCommand::Decode(a)) => scene_decode(a),
        Command::Quantize(a) => quantize_cmd(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
