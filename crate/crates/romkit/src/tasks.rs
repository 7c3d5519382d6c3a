//! Batch drivers behind the CLI commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use romkit_core::dmd::{time_residual, LCurve};
use romkit_core::metrics::{shape_error_series, ShapeErrorSeries};
use romkit_core::numerics::{eigenvalues, symmetric_part, Matrix};
use romkit_core::param::{describe_query, rom_at, ParamDatabase};
use romkit_core::rom::{train, uniform_times, RomModel, TrainConfig, Trajectory};
use romkit_core::synth::{generate_linear, generate_toy_capsule, LinearOracle, LinearSpec, ToyCapsule};
use romkit_core::SnapshotSet;

use crate::config::Scheme;
use crate::error::{RomError, RomResult};
use crate::real;
use crate::io::{read_rom_record, read_snapshot_set, SNAPSHOT_HEADER_BYTES};

/// Writes a CSV file with a header row.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> RomResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let err = |e: csv::Error| RomError::format(path.display().to_string(), e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| RomError::io(path, e))
}

fn is_snapshot_entry(path: &Path) -> bool {
    if path.is_dir() {
        path.join("meta.csv").is_file()
    } else {
        path.extension().is_some_and(|e| e == "romsnap")
    }
}

/// `*.romsnap` files and CSV bundle subdirectories of `dir`, sorted by name.
pub fn snapshot_paths(dir: &Path) -> RomResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| RomError::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| RomError::io(dir, e))?.path();
        if is_snapshot_entry(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_snapshot_dir(dir: &Path) -> RomResult<Vec<SnapshotSet>> {
    snapshot_paths(dir)?.iter().map(|p| read_snapshot_set(p)).collect()
}

pub fn load_database(dir: &Path) -> RomResult<ParamDatabase> {
    let samples = load_snapshot_dir(dir)?;
    ParamDatabase::new(samples).map_err(|e| RomError::data(dir.display().to_string(), e))
}

/// Reduced trajectory at `dt_out, 2·dt_out, …, t_end` with the chosen scheme.
pub fn propagate(model: &RomModel, scheme: Scheme, dt_out: f64, t_end: f64) -> RomResult<Trajectory> {
    let times = uniform_times(dt_out, t_end)?;
    match scheme {
        Scheme::Exact => Ok(model.propagate_exact(&times)?),
        Scheme::Euler => {
            let full = model.propagate_euler(dt_out, times.len())?;
            let n = times.len();
            Ok(Trajectory {
                times,
                alphas: full.alphas.columns(1, n).into_owned(),
                betas: full.betas.columns(1, n).into_owned(),
            })
        }
    }
}

/// A propagated trajectory lifted back to node space as a snapshot set.
pub fn trajectory_snapshots(model: &RomModel, traj: &Trajectory, scheme: Scheme) -> RomResult<SnapshotSet> {
    let dt = if traj.times.len() > 1 { traj.times[1] - traj.times[0] } else { traj.times[0] };
    let s = SnapshotSet::new(
        model.theta(),
        dt,
        model.ref_length(),
        model.initial_positions().clone(),
        model.reconstruct_displacements(traj)?,
        model.reconstruct_velocities(traj)?,
    )?;
    let mut s = s;
    s.meta_mut().set("generator", "rom");
    s.meta_mut().set("scheme", scheme.as_str());
    s.meta_mut().set("rank", model.rank());
    Ok(s)
}

/// Rows `(quantity, index, re, im)` for the spectra of `A_μ`, its symmetric
/// part and the Euler amplification matrix.
pub fn spectrum_rows(model: &RomModel, dt: f64) -> RomResult<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    let push = |rows: &mut Vec<Vec<String>>, name: &str, m: &Matrix| -> RomResult<()> {
        for (i, l) in eigenvalues(m)?.eigenvalues().iter().enumerate() {
            rows.push(vec![name.to_string(), i.to_string(), real(l.re), real(l.im)]);
        }
        Ok(())
    };
    push(&mut rows, "a_mu", model.a_mu())?;
    push(&mut rows, "a_mu_sym", &symmetric_part(model.a_mu()))?;
    let radius = model.discrete_stability(dt)?.spectral_radius;
    rows.push(vec!["euler_radius".into(), "0".into(), real(radius), "0".into()]);
    Ok(rows)
}

pub fn residual_rows(training: &romkit_core::rom::Training) -> RomResult<Vec<Vec<String>>> {
    Ok(time_residual(&training.data, training.model.a_mu())?
        .into_iter()
        .map(|(t, r)| vec![real(t), real(r)])
        .collect())
}

pub fn lcurve_rows(curve: &LCurve) -> Vec<Vec<String>> {
    curve
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                real(p.mu),
                real(p.residual),
                real(p.norm),
                u8::from(i == curve.selected_index).to_string(),
            ]
        })
        .collect()
}

/// `ε_Shape` of a model against stored snapshots, evaluated at the snapshot times.
pub fn compare(fom: &SnapshotSet, model: &RomModel) -> RomResult<ShapeErrorSeries> {
    let times = fom.times();
    let traj = model.propagate_exact(&times)?;
    let pos = model.reconstruct_positions(&traj)?;
    Ok(shape_error_series(fom, &pos, &times, fom.ref_length())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ca: f64,
    pub ratio: f64,
    pub t: f64,
    pub eps_shape: f64,
}

/// Interpolated models at every test couple, scored against the test data.
/// Runs in parallel over test samples; output order follows `tests`.
pub fn sweep(db: &ParamDatabase, tests: &[SnapshotSet], cfg: &TrainConfig) -> RomResult<Vec<SweepRow>> {
    let per_test: Vec<RomResult<Vec<SweepRow>>> = tests
        .par_iter()
        .map(|fom| {
            let theta = fom.theta();
            let r = rom_at(db, theta, cfg)?;
            if r.query.extrapolated {
                log::warn!("extrapolating: {}", describe_query(&r.query));
            }
            let series = compare(fom, &r.training.model)?;
            Ok(series
                .times
                .iter()
                .zip(&series.eps_shape)
                .map(|(&t, &e)| SweepRow {
                    ca: theta.ca,
                    ratio: theta.ratio,
                    t,
                    eps_shape: e,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_test {
        out.extend(rows?);
    }
    Ok(out)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FomTiming {
    Recorded(f64),
    Regenerated(f64),
}

impl FomTiming {
    pub fn seconds(&self) -> f64 {
        match self {
            FomTiming::Recorded(t) | FomTiming::Regenerated(t) => *t,
        }
    }
}

/// FOM wall-clock time: the recorded value if given, otherwise a rerun of the
/// synthetic generator described by the snapshot metadata.
pub fn fom_timing(fom: &SnapshotSet, recorded: Option<f64>) -> RomResult<FomTiming> {
    if let Some(t) = recorded {
        if !(t.is_finite() && t > 0.0) {
            return Err(RomError::Usage(format!("--fom-seconds must be > 0, got {t}")));
        }
        return Ok(FomTiming::Recorded(t));
    }
    if let Some(cfg) = ToyCapsule::from_meta(fom.meta(), fom.theta())? {
        let t0 = Instant::now();
        generate_toy_capsule(&cfg)?;
        return Ok(FomTiming::Regenerated(t0.elapsed().as_secs_f64()));
    }
    if let Some(spec) = LinearSpec::from_meta(fom.meta())? {
        let t0 = Instant::now();
        generate_linear(&LinearOracle::random(&spec)?)?;
        return Ok(FomTiming::Regenerated(t0.elapsed().as_secs_f64()));
    }
    Err(RomError::Usage(
        "no FOM timing source: pass --fom-seconds or use a file written by `rom synth`".into(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub dt_fom: f64,
    pub t_fom: f64,
    pub t_rom: f64,
    pub speedup: f64,
    pub fom: FomTiming,
}

/// Median wall-clock time of one ROM propagation plus reconstruction over
/// the FOM's stored horizon.
pub fn time_rom(model: &RomModel, times: &[f64], repetitions: usize) -> RomResult<f64> {
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t0 = Instant::now();
        let traj = model.propagate_exact(times)?;
        let pos = model.reconstruct_positions(&traj)?;
        std::hint::black_box(&pos);
        samples.push(t0.elapsed().as_secs_f64());
    }
    Ok(median(&mut samples))
}

pub fn bench(fom: &SnapshotSet, model: &RomModel, repetitions: usize, recorded: Option<f64>) -> RomResult<BenchReport> {
    if repetitions < 3 {
        return Err(RomError::Usage(format!("repetitions must be >= 3, got {repetitions}")));
    }
    let timing = fom_timing(fom, recorded)?;
    let t_rom = time_rom(model, &fom.times(), repetitions)?;
    Ok(BenchReport {
        dt_fom: fom.dt(),
        t_fom: timing.seconds(),
        t_rom,
        speedup: timing.seconds() / t_rom,
        fom: timing,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageRow {
    pub sample: String,
    pub snapshot_bytes: u64,
    pub rom_bytes: u64,
    pub rank: usize,
}

impl StorageRow {
    pub fn ratio(&self) -> f64 {
        self.snapshot_bytes as f64 / self.rom_bytes as f64
    }
}

/// Payload bytes of a snapshot set in `ROMSNAP1` (header excluded): `8·(d + 2dN)`.
pub fn snapshot_payload_bytes(s: &SnapshotSet) -> u64 {
    8 * s.payload_reals() as u64
}

/// Payload bytes of a rank-`k` record over `d` coordinates: `8·(dK + K² + 2K + d)`.
pub fn record_payload_bytes(d: usize, k: usize) -> u64 {
    8 * (d * k + k * k + 2 * k + d) as u64
}

/// Snapshot vs reduced storage per sample. The rank comes from `modes` when
/// given, else from a sibling `<stem>.romrec`, else by training with `cfg`.
pub fn storage_report(dir: &Path, modes: Option<usize>, cfg: &TrainConfig) -> RomResult<Vec<StorageRow>> {
    let mut rows = Vec::new();
    for path in snapshot_paths(dir)? {
        let s = read_snapshot_set(&path)?;
        let sibling = path.with_extension("romrec");
        let rank = match modes {
            Some(k) => k,
            None if sibling.is_file() => read_rom_record(&sibling)?.rank(),
            None => train(&s, cfg)?.model.rank(),
        };
        rows.push(StorageRow {
            sample: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            snapshot_bytes: snapshot_payload_bytes(&s),
            rom_bytes: record_payload_bytes(s.dim(), rank),
            rank,
        });
    }
    Ok(rows)
}

/// Total on-disk size of a `ROMSNAP1` file without metadata.
pub fn snapshot_file_bytes(s: &SnapshotSet) -> u64 {
    SNAPSHOT_HEADER_BYTES as u64 + snapshot_payload_bytes(s)
}
