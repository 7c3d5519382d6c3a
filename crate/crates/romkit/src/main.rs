use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use romkit_core::metrics::learning_time_study;
use romkit_core::param::{describe_query, rom_at};
use romkit_core::pod::{ric_curve, PodBasis};
use romkit_core::rom::{describe, train, RomModel};
use romkit_core::synth::{
    describe_capsule, generate_linear, generate_toy_capsule, LinearOracle, LinearSpec, SpectrumKind, ToyCapsule,
};
use romkit_core::ParamCouple;

use romkit::config::{Manifest, RunConfig};
use romkit::io::{read_rom_record, read_snapshot_set, write_pod_basis, write_rom_record, write_snapshot_set};
use romkit::tasks::{
    bench, compare, lcurve_rows, load_database, load_snapshot_dir, propagate, residual_rows, spectrum_rows,
    storage_report, sweep, trajectory_snapshots, write_csv, FomTiming,
};
use romkit::{real, RomError, RomResult};

/// Snapshot-driven reduced-order models: POD, regularized DMD, exact
/// propagation, shape metrics and parameter interpolation.
#[derive(Parser)]
#[command(name = "rom", version)]
struct Cli {
    /// Optional key=value settings file; flags given on the command line win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Log filter (error, warn, info, debug)
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic snapshot data
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Build a POD basis and its RIC curve
    Pod(PodArgs),
    /// Train a reduced model on a snapshot set
    Train(TrainCmd),
    /// Propagate a trained model and write the trajectory
    Simulate(SimulateArgs),
    /// Shape error of a model against stored snapshots
    Compare(CompareArgs),
    /// Shape error as a function of the learning window
    StudyLearning(StudyArgs),
    /// Predict and retrain at an unseen parameter couple
    Interpolate(InterpolateArgs),
    /// Interpolated-model error over a test database
    Sweep(SweepArgs),
    /// ROM vs FOM wall-clock speedup
    Bench(BenchArgs),
    /// Snapshot vs reduced-model storage per sample
    StorageReport(StorageArgs),
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Exact solutions of a random linear system lifted to node space
    Linear(LinearArgs),
    /// Nonlinear toy capsule relaxing to a translating steady shape
    Capsule(CapsuleArgs),
}

#[derive(Args)]
struct LinearArgs {
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 7686)]
    d: usize,
    #[arg(long, default_value_t = 250)]
    n: usize,
    #[arg(long, default_value_t = 0.04)]
    dt: f64,
    /// stable | center | mixed
    #[arg(long, default_value = "stable")]
    spectrum: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CapsuleArgs {
    #[arg(long, default_value_t = 2562)]
    nodes: usize,
    #[arg(long, default_value_t = 250)]
    n: usize,
    #[arg(long, default_value_t = 0.04)]
    dt: f64,
    #[arg(long = "ca-like", default_value_t = 0.17)]
    ca: f64,
    #[arg(long = "ratio-like", default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    v_inf: f64,
    #[arg(long, default_value_t = 0.8)]
    rate_min: f64,
    #[arg(long, default_value_t = 1.6)]
    rate_max: f64,
    #[arg(long, default_value_t = 1.0)]
    nonlinearity: f64,
    #[arg(long, default_value_t = 0.05)]
    deformation: f64,
    /// Internal Ralston steps per stored snapshot
    #[arg(long, default_value_t = 50)]
    substeps: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Truncation and regularization settings shared by training commands.
#[derive(Args)]
struct TrainArgs {
    /// RIC truncation tolerance
    #[arg(long, default_value = "1e-6")]
    eps: f64,
    /// Largest number of POD modes kept
    #[arg(long, default_value_t = 20)]
    max_modes: usize,
    /// Fixed Tikhonov parameter
    #[arg(long, default_value = "1e-9", conflicts_with = "lcurve")]
    mu: f64,
    /// Select mu by the L-curve over MIN:MAX
    #[arg(long, value_name = "MIN:MAX", num_args = 0..=1, default_missing_value = "1e-12:1e-5")]
    lcurve: Option<String>,
    /// L-curve grid density
    #[arg(long, default_value_t = 4)]
    points_per_decade: usize,
    /// trapezoid | first
    #[arg(long, default_value = "trapezoid")]
    initial_velocity: String,
}

#[derive(Args)]
struct PodArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "1e-6")]
    eps: f64,
    #[arg(long, default_value_t = 20)]
    max_modes: usize,
    #[arg(long)]
    out: PathBuf,
    /// CSV of (k, ric) over all ranks
    #[arg(long)]
    ric_csv: Option<PathBuf>,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
    /// CSV of the relative time residual (t, R); with --lcurve also writes
    /// lcurve.csv beside it
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 0.04)]
    dt_out: f64,
    /// exact | euler
    #[arg(long, default_value = "exact")]
    scheme: String,
    #[arg(long)]
    out: PathBuf,
    /// CSV of spectra (quantity, index, re, im)
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    fom: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Learning windows
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8")]
    tl: Vec<f64>,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScaleArgs {
    /// Distance weight of the ca axis
    #[arg(long, default_value_t = 1.0)]
    scale_ca: f64,
    /// Distance weight of the ratio axis
    #[arg(long, default_value_t = 1.0)]
    scale_ratio: f64,
}

#[derive(Args)]
struct InterpolateArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    ca: f64,
    #[arg(long)]
    ratio: f64,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    scale: ScaleArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write the predicted trajectory
    #[arg(long)]
    predicted: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    scale: ScaleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    fom: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Recorded FOM runtime; without it the synthetic generator is rerun
    #[arg(long)]
    fom_seconds: Option<f64>,
    /// CSV destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StorageArgs {
    #[arg(long)]
    db: PathBuf,
    /// Rank to assume instead of sibling .romrec files or training
    #[arg(long)]
    modes: Option<usize>,
    #[command(flatten)]
    train: TrainArgs,
    /// CSV destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

const CONFIG_KEYS: [&str; 9] = [
    "eps",
    "max_modes",
    "mu",
    "lcurve",
    "points_per_decade",
    "dt_out",
    "t_end",
    "scheme",
    "initial_velocity",
];

/// Defaults, then the config file, then flags actually typed by the user.
fn resolve(config_file: Option<&Path>, m: &ArgMatches) -> RomResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = config_file {
        cfg.apply_file(path)?;
    }
    for key in CONFIG_KEYS {
        let Ok(Some(mut raw)) = m.try_get_raw(key) else { continue };
        if m.value_source(key) != Some(ValueSource::CommandLine) {
            continue;
        }
        let value = raw.next().map(|v| v.to_string_lossy().into_owned()).unwrap_or_default();
        cfg.set(key, &value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn leaf(m: &ArgMatches) -> &ArgMatches {
    match m.subcommand() {
        Some((_, sub)) => leaf(sub),
        None => m,
    }
}

fn theta(ca: f64, ratio: f64) -> RomResult<ParamCouple> {
    Ok(ParamCouple::new(ca, ratio)?)
}

fn warn_kinematics(path: &Path, s: &romkit_core::SnapshotSet) {
    let w = s.kinematic_warnings();
    if !w.is_empty() {
        log::warn!(
            "{}: {} snapshot columns disagree with forward differences of displacements",
            path.display(),
            w.len()
        );
    }
}

fn load_model(path: &Path) -> RomResult<RomModel> {
    let rec = read_rom_record(path)?;
    RomModel::from_record(&rec).map_err(|e| RomError::data(path.display().to_string(), e))
}

fn run(cli: Cli, matches: &ArgMatches) -> RomResult<()> {
    let m = leaf(matches);
    let cfg = resolve(cli.config.as_deref(), m)?;
    match cli.cmd {
        Cmd::Synth(SynthCmd::Linear(a)) => {
            let spec = LinearSpec {
                k: a.k,
                d: a.d,
                n_snapshots: a.n,
                dt: a.dt,
                kind: SpectrumKind::parse(&a.spectrum)?,
                seed: a.seed,
            };
            let s = generate_linear(&LinearOracle::random(&spec)?)?;
            write_snapshot_set(&s, &a.out)?;
            let mut man = Manifest::new("synth linear");
            for (k, v) in &s.meta().extra {
                man.set(k.clone(), v);
            }
            man.write_for(&a.out)?;
        }
        Cmd::Synth(SynthCmd::Capsule(a)) => {
            let c = ToyCapsule {
                n_nodes: a.nodes,
                n_snapshots: a.n,
                dt: a.dt,
                theta: theta(a.ca, a.ratio)?,
                v_inf: a.v_inf,
                rate_min: a.rate_min,
                rate_max: a.rate_max,
                nonlinearity: a.nonlinearity,
                deformation: a.deformation,
                substeps: a.substeps,
                seed: a.seed,
            };
            log::info!("capsule {}", describe_capsule(&c));
            let s = generate_toy_capsule(&c)?;
            write_snapshot_set(&s, &a.out)?;
            let mut man = Manifest::new("synth capsule");
            man.set("ca", real(a.ca)).set("ratio", real(a.ratio));
            for (k, v) in &s.meta().extra {
                man.set(k.clone(), v);
            }
            man.write_for(&a.out)?;
        }
        Cmd::Pod(a) => {
            let s = read_snapshot_set(&a.input)?;
            let basis = PodBasis::build(&s, cfg.eps, cfg.max_modes)?;
            write_pod_basis(&basis, &a.out)?;
            if let Some(p) = &a.ric_csv {
                let rows = ric_curve(&s)?.into_iter().map(|(k, r)| vec![k.to_string(), real(r)]);
                write_csv(p, &["k", "ric"], rows)?;
            }
            println!("rank {} ric {:e}", basis.rank(), basis.ric().unwrap_or(0.0));
            Manifest::new("pod")
                .set("in", a.input.display())
                .set("eps", real(cfg.eps))
                .set("max_modes", cfg.max_modes)
                .set("rank", basis.rank())
                .write_for(&a.out)?;
        }
        Cmd::Train(a) => {
            let s = read_snapshot_set(&a.input)?;
            warn_kinematics(&a.input, &s);
            let t = train(&s, &cfg.train_config())?;
            write_rom_record(&t.model.to_record(), &a.out)?;
            if let Some(p) = &a.diagnostics {
                write_csv(p, &["t", "R"], residual_rows(&t)?)?;
                if let Some(curve) = &t.lcurve {
                    let lp = p.with_file_name("lcurve.csv");
                    write_csv(&lp, &["mu", "residual", "norm", "selected"], lcurve_rows(curve))?;
                }
            }
            let stab = t.model.continuous_stability();
            if !stab.stable {
                log::warn!("identified operator has eigenvalues with Re > 0 (max {:e})", stab.max_real);
            }
            println!("{}", describe(&t.model));
            Manifest::new("train")
                .with_config(&cfg)
                .set("in", a.input.display())
                .set("rank", t.model.rank())
                .set("mu_selected", real(t.model.mu()))
                .set("velocity_projection_error", real(t.velocity_projection_error))
                .write_for(&a.out)?;
        }
        Cmd::Simulate(a) => {
            let model = load_model(&a.model)?;
            let stab = model.discrete_stability(cfg.dt_out)?;
            if cfg.scheme == romkit::config::Scheme::Euler && !stab.stable {
                log::warn!(
                    "Euler amplification spectral radius {} > 1 at dt {}",
                    stab.spectral_radius,
                    cfg.dt_out
                );
            }
            let traj = propagate(&model, cfg.scheme, cfg.dt_out, cfg.t_end)?;
            let s = trajectory_snapshots(&model, &traj, cfg.scheme)?;
            write_snapshot_set(&s, &a.out)?;
            if let Some(p) = &a.diagnostics {
                write_csv(p, &["quantity", "index", "re", "im"], spectrum_rows(&model, cfg.dt_out)?)?;
            }
            Manifest::new("simulate")
                .with_config(&cfg)
                .set("model", a.model.display())
                .write_for(&a.out)?;
        }
        Cmd::Compare(a) => {
            let fom = read_snapshot_set(&a.fom)?;
            let model = load_model(&a.model)?;
            let series = compare(&fom, &model)?;
            let rows = (0..series.times.len()).map(|i| {
                vec![
                    real(series.times[i]),
                    real(series.eps_shape[i]),
                    real(series.rms[i]),
                ]
            });
            write_csv(&a.out, &["t", "eps_shape", "rms"], rows)?;
            println!("max eps_shape {:e}", series.max());
            Manifest::new("compare")
                .set("fom", a.fom.display())
                .set("model", a.model.display())
                .set("max_eps_shape", real(series.max()))
                .write_for(&a.out)?;
        }
        Cmd::StudyLearning(a) => {
            let s = read_snapshot_set(&a.input)?;
            let rows = learning_time_study(&s, &a.tl, &cfg.train_config())?;
            let csv_rows = rows.iter().map(|r| {
                vec![
                    real(r.t_learn),
                    r.n_snapshots.to_string(),
                    r.rank.to_string(),
                    real(r.eps_shape_end),
                    real(r.eps_shape_max),
                ]
            });
            write_csv(
                &a.out,
                &["t_learn", "n_snapshots", "rank", "eps_shape_end", "eps_shape_max"],
                csv_rows,
            )?;
            Manifest::new("study-learning")
                .with_config(&cfg)
                .set("in", a.input.display())
                .set("tl", a.tl.iter().map(|v| real(*v)).collect::<Vec<_>>().join(","))
                .write_for(&a.out)?;
        }
        Cmd::Interpolate(a) => {
            let db = load_database(&a.db)?.with_scale(a.scale.scale_ca, a.scale.scale_ratio)?;
            let th = theta(a.ca, a.ratio)?;
            let r = rom_at(&db, th, &cfg.train_config())?;
            if r.query.extrapolated {
                log::warn!("query lies outside its triangle; extrapolating");
            }
            write_rom_record(&r.training.model.to_record(), &a.out)?;
            if let Some(p) = &a.predicted {
                write_snapshot_set(&r.predicted, p)?;
            }
            println!("{}", describe_query(&r.query));
            let l = r.query.lambdas;
            Manifest::new("interpolate")
                .with_config(&cfg)
                .set("db", a.db.display())
                .set("query", describe_query(&r.query))
                .set("lambda", format!("{},{},{}", real(l[0]), real(l[1]), real(l[2])))
                .set("extrapolated", r.query.extrapolated)
                .write_for(&a.out)?;
        }
        Cmd::Sweep(a) => {
            let db = load_database(&a.db)?.with_scale(a.scale.scale_ca, a.scale.scale_ratio)?;
            let tests = load_snapshot_dir(&a.test)?;
            let rows = sweep(&db, &tests, &cfg.train_config())?;
            let csv_rows = rows.iter().map(|r| {
                vec![real(r.ca), real(r.ratio), real(r.t), real(r.eps_shape)]
            });
            write_csv(&a.out, &["ca", "ratio", "t", "eps_shape"], csv_rows)?;
            Manifest::new("sweep")
                .with_config(&cfg)
                .set("db", a.db.display())
                .set("test", a.test.display())
                .set("test_samples", tests.len())
                .write_for(&a.out)?;
        }
        Cmd::Bench(a) => {
            let fom = read_snapshot_set(&a.fom)?;
            let model = load_model(&a.model)?;
            let r = bench(&fom, &model, a.repetitions, a.fom_seconds)?;
            let source = match r.fom {
                FomTiming::Recorded(_) => "recorded",
                FomTiming::Regenerated(_) => "regenerated",
            };
            let row = vec![
                real(r.dt_fom),
                real(r.t_fom),
                real(r.t_rom),
                real(r.speedup),
            ];
            let header = ["dt_fom", "t_fom", "t_rom", "speedup"];
            match &a.out {
                Some(p) => {
                    write_csv(p, &header, [row])?;
                    Manifest::new("bench")
                        .set("fom", a.fom.display())
                        .set("model", a.model.display())
                        .set("repetitions", a.repetitions)
                        .set("fom_time_source", source)
                        .write_for(p)?;
                }
                None => println!("{}\n{}", header.join(","), row.join(",")),
            }
        }
        Cmd::StorageReport(a) => {
            let rows = storage_report(&a.db, a.modes, &cfg.train_config())?;
            let header = ["sample", "rank", "snapshot_bytes", "rom_bytes", "ratio"];
            let mut out: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.sample.clone(),
                        r.rank.to_string(),
                        r.snapshot_bytes.to_string(),
                        r.rom_bytes.to_string(),
                        real(r.ratio()),
                    ]
                })
                .collect();
            if !rows.is_empty() {
                let snap: u64 = rows.iter().map(|r| r.snapshot_bytes).sum();
                let rom: u64 = rows.iter().map(|r| r.rom_bytes).sum();
                out.push(vec![
                    "total".into(),
                    String::new(),
                    snap.to_string(),
                    rom.to_string(),
                    real(snap as f64 / rom as f64),
                ]);
            }
            match &a.out {
                Some(p) => {
                    write_csv(p, &header, out)?;
                    Manifest::new("storage-report")
                        .set("db", a.db.display())
                        .write_for(p)?;
                }
                None => {
                    println!("{}", header.join(","));
                    for r in out {
                        println!("{}", r.join(","));
                    }
                }
            }
        }
    }
    Ok(())
}

fn init_threads() -> RomResult<()> {
    if let Ok(v) = std::env::var("ROM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| RomError::Usage(format!("ROM_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RomError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    let result = init_threads().and_then(|_| run(cli, &matches));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
