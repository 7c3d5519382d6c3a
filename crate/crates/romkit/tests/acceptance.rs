//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any fails.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use romkit::io::{encode_rom_record, encode_snapshot_set};
use romkit::tasks::{compare, sweep, time_rom};
use romkit_core::dmd::{
    identify_plain, identify_plain_backward, lcurve_sweep, tikhonov_operator, ReducedData, DEFAULT_LCURVE_MAX,
    DEFAULT_LCURVE_MIN, DEFAULT_POINTS_PER_DECADE,
};
use romkit_core::metrics::{learning_time_study, modified_hausdorff, steady_state_onset, PointCloud};
use romkit_core::numerics::{eigenvalues, spectral_norm, symmetric_part};
use romkit_core::param::{locate, predict_trajectory, ParamDatabase};
use romkit_core::pod::PodBasis;
use romkit_core::rom::{train, Training, TrainConfig};
use romkit_core::synth::{generate_toy_capsule, ToyCapsule};
use romkit_core::{Matrix, ParamCouple, SnapshotSet, Vector};

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

/// `A = T B T⁻¹` with `B` block diagonal, together with a closed-form
/// `exp(A t)` built from the blocks.
struct Diagonalizable {
    t: Matrix,
    t_inv: Matrix,
    real: Vec<f64>,
    pairs: Vec<(f64, f64)>,
}

impl Diagonalizable {
    fn random(r: &mut ChaCha8Rng, k: usize) -> Self {
        let n_pairs = r.random_range(0..=k / 2);
        let real = (0..k - 2 * n_pairs).map(|_| -r.random_range(0.05..1.5)).collect();
        let pairs = (0..n_pairs).map(|_| (-r.random_range(0.02..1.0), r.random_range(0.2..3.0))).collect();
        let t = Matrix::identity(k, k) + gaussian(r, k, k) * (0.3 / (k as f64).sqrt());
        let t_inv = t.clone().try_inverse().unwrap();
        Diagonalizable { t, t_inv, real, pairs }
    }

    /// At most one real eigenvalue; each conjugate pair gets its own
    /// frequency band so the Krylov sequence stays well conditioned.
    fn separated(r: &mut ChaCha8Rng, k: usize) -> Self {
        let real = (0..k % 2).map(|_| -r.random_range(0.05..1.5)).collect();
        let pairs = (0..k / 2)
            .map(|j| (-r.random_range(0.02..1.0), 0.3 + 0.5 * j as f64 + r.random_range(0.0..0.4)))
            .collect();
        let t = Matrix::identity(k, k) + gaussian(r, k, k) * (0.3 / (k as f64).sqrt());
        let t_inv = t.clone().try_inverse().unwrap();
        Diagonalizable { t, t_inv, real, pairs }
    }

    fn block(&self, time: f64, exponential: bool) -> Matrix {
        let k = self.t.nrows();
        let mut b = Matrix::zeros(k, k);
        for (i, l) in self.real.iter().enumerate() {
            b[(i, i)] = if exponential { (l * time).exp() } else { *l };
        }
        for (j, &(re, im)) in self.pairs.iter().enumerate() {
            let i = self.real.len() + 2 * j;
            let (c, s, g) = if exponential {
                ((im * time).cos(), (im * time).sin(), (re * time).exp())
            } else {
                (re, im, 1.0)
            };
            b[(i, i)] = g * c;
            b[(i + 1, i + 1)] = g * c;
            b[(i, i + 1)] = g * s;
            b[(i + 1, i)] = -g * s;
        }
        b
    }

    fn exp(&self, time: f64) -> Matrix {
        &self.t * self.block(time, true) * &self.t_inv
    }
}

fn toy() -> &'static (SnapshotSet, f64) {
    static TOY: OnceLock<(SnapshotSet, f64)> = OnceLock::new();
    TOY.get_or_init(|| {
        let t0 = Instant::now();
        let s = generate_toy_capsule(&ToyCapsule::default()).unwrap();
        (s, t0.elapsed().as_secs_f64())
    })
}

fn toy_training() -> &'static Training {
    static T: OnceLock<Training> = OnceLock::new();
    T.get_or_init(|| train(&toy().0, &TrainConfig::default()).unwrap())
}

fn c1_exact_recovery() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(101);
    let dt = 0.04;
    let mut worst: f64 = 0.0;
    let mut worst_cond: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    for trial in 0..20 {
        let k = 1 + trial % 12;
        let a = Diagonalizable::separated(&mut r, k);
        let step = a.exp(dt);
        let mut beta = Vector::from_fn(k, |_, _| r.sample::<f64, _>(StandardNormal));
        let mut states = Matrix::zeros(k, 150);
        for j in 0..150 {
            beta = &step * beta;
            states.set_column(j, &beta);
        }
        let data = ReducedData::from_states(&states, dt).unwrap();
        let got = identify_plain(&data).unwrap();
        let want = (step - Matrix::identity(k, k)) / dt;
        worst = worst.max((&got - &want).norm() / want.norm());
        worst_abs = worst_abs.max((got - &want).norm());
        worst_cond = worst_cond.max(data.cond_x());
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && worst_abs <= 1e-8 && secs < 5.0,
        format!("max Frobenius error {worst_abs:.2e} absolute, {worst:.2e} relative (<= 1e-8), max cond(X) {worst_cond:.1e}, {secs:.2} s (< 5 s)"),
    )
}

fn c2_dichotomy() -> Outcome {
    let b = 1.0f64;
    let mut pass = true;
    let mut parts = Vec::new();
    for dt in [0.1, 0.01, 0.001] {
        let n = (20.0 / dt) as usize;
        let states = Matrix::from_fn(2, n, |i, j| {
            let t = (j + 1) as f64 * dt;
            if i == 0 { (b * t).cos() } else { -(b * t).sin() }
        });
        let data = ReducedData::from_states(&states, dt).unwrap();
        let fwd = eigenvalues(&identify_plain(&data).unwrap()).unwrap().max_real();
        let bwd = eigenvalues(&identify_plain_backward(&data).unwrap()).unwrap().max_real();
        pass &= fwd < 0.0 && bwd > 0.0;
        if dt == 0.001 {
            let e = dt * b * b / 2.0;
            let (rf, rb) = ((fwd + e).abs() / e, (bwd - e).abs() / e);
            pass &= rf <= 0.2 && rb <= 0.2;
            parts.push(format!("dt 1e-3 relative deviation {rf:.3}/{rb:.3} (<= 0.2)"));
        }
        parts.push(format!("dt {dt}: fwd {fwd:.3e} bwd {bwd:.3e}"));
    }
    outcome(pass, parts.join("; "))
}

fn c3_pod_bound() -> Outcome {
    let eps = 1e-6;
    let mut r = rng(103);
    let mut worst_ratio: f64 = 0.0;
    let mut minimal = true;
    for _ in 0..50 {
        let d = r.random_range(10..80);
        let n = r.random_range(3..30);
        let m = d.min(n);
        let decay = r.random_range(0.3..3.0);
        let u = gaussian(&mut r, d, m).qr().q();
        let v = gaussian(&mut r, n, m).qr().q();
        let sigma = Vector::from_fn(m, |i, _| 10f64.powf(-decay * i as f64));
        let s = &u * Matrix::from_diagonal(&sigma) * v.transpose();
        let basis = PodBasis::from_snapshot_matrix(&s, eps, m, "acc".into()).unwrap();
        let q = basis.modes();
        let resid = (&s - q * (q.transpose() * &s)).norm_squared();
        worst_ratio = worst_ratio.max(resid / ((eps + 1e-12) * s.norm_squared()));
        let k = basis.rank();
        if k > 1 {
            let sv = s.clone().svd(false, false).singular_values;
            let total: f64 = sv.iter().map(|x| x * x).sum();
            let kept: f64 = sv.iter().take(k - 1).map(|x| x * x).sum();
            minimal &= 1.0 - kept / total > eps;
        }
    }
    outcome(
        worst_ratio <= 1.0 && minimal,
        format!("max residual/bound {worst_ratio:.3} (<= 1), K minimal in all 50: {minimal}"),
    )
}

fn c4_tikhonov() -> Outcome {
    let mut r = rng(104);
    let a = Diagonalizable::random(&mut r, 5);
    let dt = 0.04;
    let step = a.exp(dt);
    let mut beta = Vector::from_fn(5, |_, _| r.sample::<f64, _>(StandardNormal));
    let mut states = Matrix::zeros(5, 200);
    for j in 0..200 {
        beta = &step * beta;
        states.set_column(j, &beta);
    }
    let data = ReducedData::from_states(&states, dt).unwrap();
    let plain = identify_plain(&data).unwrap();
    let limit = tikhonov_operator(&data, 1e-16).unwrap();
    let rel = (&limit - &plain).norm() / plain.norm();
    let curve = lcurve_sweep(&data, DEFAULT_LCURVE_MIN, DEFAULT_LCURVE_MAX, DEFAULT_POINTS_PER_DECADE).unwrap();
    let worst_rise = curve
        .points
        .windows(2)
        .map(|w| w[1].norm - w[0].norm)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        rel <= 1e-6 && worst_rise <= 1e-12 && curve.points.len() == 29,
        format!(
            "mu->0 relative gap {rel:.2e} (<= 1e-6), largest norm increase over {} grid points {worst_rise:.2e} (<= 1e-12)",
            curve.points.len()
        ),
    )
}

fn c5_kinematics() -> Outcome {
    let model = &toy_training().model;
    let dt = 0.04;
    let traj = model.propagate_euler(dt, 250).unwrap();
    let mut worst: f64 = 0.0;
    for n in 0..250 {
        let d = traj.alphas.column(n + 1) - traj.alphas.column(n) - traj.betas.column(n) * dt;
        worst = worst.max(d.amax());
    }
    let t_end = 2.0;
    let exact = model.propagate_exact(&[t_end]).unwrap();
    let errs: Vec<f64> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&h| {
            let steps = (t_end / h).round() as usize;
            let e = model.propagate_euler(h, steps).unwrap();
            let da = e.alphas.column(steps) - exact.alphas.column(0);
            let db = e.betas.column(steps) - exact.betas.column(0);
            (da.norm_squared() + db.norm_squared()).sqrt()
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let ok = orders.iter().all(|o| (o - 1.0).abs() <= 0.1);
    outcome(
        worst <= 1e-12 && ok,
        format!(
            "max |u(n+1) - u(n) - dt v(n)| {worst:.2e} (<= 1e-12), observed orders {} (1.0 +- 0.1)",
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join("/")
        ),
    )
}

fn c6_steady_spectrum() -> Outcome {
    let a = toy_training().model.a_mu();
    let spec = eigenvalues(a).unwrap();
    let norm = spectral_norm(a).unwrap();
    let (min_abs, max_re) = (spec.min_abs(), spec.max_real());
    outcome(
        min_abs <= 1e-6 * norm && max_re <= 1e-9,
        format!(
            "K = {}, min|lambda|/||A||_2 {:.2e} (<= 1e-6), max Re {max_re:.2e} (<= 1e-9)",
            a.nrows(),
            min_abs / norm
        ),
    )
}

fn c7_energy() -> Outcome {
    let model = &toy_training().model;
    let a = model.a_mu();
    let a_sym = symmetric_part(a);
    let an = spectral_norm(a).unwrap();
    let dt = 0.04;
    let times: Vec<f64> = (0..=250).map(|n| n as f64 * dt).collect();
    let exact = model.propagate_exact(&times).unwrap();
    let euler = model.propagate_euler(dt, 250).unwrap();
    let mut worst: f64 = 0.0;
    for betas in [&exact.betas, &euler.betas] {
        for n in 0..250 {
            let b0 = betas.column(n).into_owned();
            let b1 = betas.column(n + 1);
            let fd = 0.5 * (b1.norm_squared() - b0.norm_squared()) / dt;
            let rate = (b0.transpose() * &a_sym * &b0)[(0, 0)];
            worst = worst.max((fd - rate).abs() / (10.0 * dt * an * an * b0.norm_squared()));
        }
    }
    outcome(worst <= 1.0, format!("max error/bound {worst:.2e} (<= 1) over 250 exact and 250 Euler steps"))
}

fn c8_pipeline() -> Outcome {
    let t = toy_training();
    let series = compare(&toy().0, &t.model).unwrap();
    let max = series.max();
    outcome(
        max <= 1e-3,
        format!("K = {}, mu = {:e}, max eps_shape {max:.3e} (<= 1e-3)", t.model.rank(), t.model.mu()),
    )
}

fn c9_learning_time() -> Outcome {
    let s = &toy().0;
    let onset = steady_state_onset(s, 1e-4).map(|n| (n + 1) as f64 * s.dt());
    let rows = learning_time_study(s, &[2.0, 4.0, 6.0, 8.0], &TrainConfig::default()).unwrap();
    let e: Vec<f64> = rows.iter().map(|r| r.eps_shape_end).collect();
    let monotone = e.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let gap = e[0] / e[3];
    outcome(
        monotone && gap >= 2.0,
        format!(
            "end errors {} for T_L = 2/4/6/8 (nonincreasing within 10%), T_L=2 / T_L=8 = {gap:.2} (>= 2), transient {}",
            e.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join("/"),
            onset.map_or("not settled".to_string(), |t| format!("{t:.2}")),
        ),
    )
}

fn affine_toy(theta: ParamCouple) -> SnapshotSet {
    generate_toy_capsule(&ToyCapsule {
        n_nodes: 162,
        n_snapshots: 60,
        theta,
        nonlinearity: 0.0,
        substeps: 10,
        ..ToyCapsule::default()
    })
    .unwrap()
}

/// Nearest two, then the next nearest that spans a triangle. Ties by index.
fn brute_triangle(thetas: &[ParamCouple], q: ParamCouple) -> [usize; 3] {
    let d = |t: &ParamCouple| (t.ca - q.ca).powi(2) + (t.ratio - q.ratio).powi(2);
    let mut idx: Vec<usize> = (0..thetas.len()).collect();
    idx.sort_by(|&i, &j| d(&thetas[i]).total_cmp(&d(&thetas[j])).then(i.cmp(&j)));
    let (a, b) = (thetas[idx[0]], thetas[idx[1]]);
    let c = idx[2..]
        .iter()
        .copied()
        .find(|&c| {
            let t = thetas[c];
            ((b.ca - a.ca) * (t.ratio - a.ratio) - (b.ratio - a.ratio) * (t.ca - a.ca)).abs() > 1e-12
        })
        .unwrap();
    [idx[0], idx[1], c]
}

fn c10_barycentric() -> Outcome {
    let t0 = Instant::now();
    let grid: Vec<ParamCouple> = (0..7)
        .flat_map(|i| (0..7).map(move |j| ParamCouple { ca: 0.05 + 0.05 * i as f64, ratio: 0.5 + 0.1 * j as f64 }))
        .collect();
    let db = ParamDatabase::new(grid.iter().map(|t| affine_toy(*t)).collect()).unwrap();

    let mut vertex_exact = true;
    for (i, t) in grid.iter().enumerate() {
        let (p, _) = predict_trajectory(&db, *t).unwrap();
        let s = &db.samples()[i];
        let same = |a: &Matrix, b: &Matrix| a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
        vertex_exact &= same(p.displacements(), s.displacements())
            && same(p.velocities(), s.velocities())
            && p.initial_positions().iter().zip(s.initial_positions().iter()).all(|(x, y)| x.to_bits() == y.to_bits());
    }

    let mut r = rng(110);
    let queries: Vec<ParamCouple> = (0..20)
        .map(|_| ParamCouple { ca: r.random_range(0.06..0.34), ratio: r.random_range(0.51..1.09) })
        .collect();
    let mut sum_dev: f64 = 0.0;
    let mut affine_err: f64 = 0.0;
    let mut deterministic = true;
    let mut tests = Vec::new();
    for q in &queries {
        let a = locate(&db, *q).unwrap();
        let b = locate(&db, *q).unwrap();
        deterministic &= a == b && a.triangle.indices == brute_triangle(&grid, *q) && !a.extrapolated;
        sum_dev = sum_dev.max((a.lambdas.iter().sum::<f64>() - 1.0).abs());
        let (pred, _) = predict_trajectory(&db, *q).unwrap();
        let truth = affine_toy(*q);
        affine_err = affine_err.max(
            (pred.displacements() - truth.displacements()).amax() / truth.displacements().amax(),
        );
        affine_err = affine_err.max((pred.velocities() - truth.velocities()).amax() / truth.velocities().amax());
        tests.push(truth);
    }
    let rows = sweep(&db, &tests, &TrainConfig::default()).unwrap();
    let swept = rows.len() == 20 * tests[0].n_snapshots() && rows.iter().all(|r| r.eps_shape.is_finite());
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        vertex_exact && sum_dev <= 1e-12 && affine_err <= 1e-10 && deterministic && swept && secs < 60.0,
        format!(
            "vertices bit-exact {vertex_exact}, max |sum lambda - 1| {sum_dev:.1e} (<= 1e-12), affine error {affine_err:.1e} (<= 1e-10), selection deterministic {deterministic}, sweep {} rows, {secs:.1} s (< 60 s)",
            rows.len()
        ),
    )
}

fn c11_mhd() -> Outcome {
    let mut r = rng(111);
    let mut symmetric = true;
    let mut shift_err: f64 = 0.0;
    for _ in 0..20 {
        let mut cloud = |n: usize| {
            PointCloud::new((0..n).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect())
                .unwrap()
        };
        let (a, b) = (cloud(50), cloud(70));
        let d = modified_hausdorff(&a, &b);
        symmetric &= d == modified_hausdorff(&b, &a);
        let shift = [0.3, -0.7, 0.25];
        shift_err = shift_err.max((modified_hausdorff(&a.translated(shift), &b.translated(shift)) - d).abs());
    }
    let a = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
    let b = PointCloud::new(vec![[0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [2.0, 1.0, 0.0]]).unwrap();
    let hand = modified_hausdorff(&a, &b);
    outcome(
        symmetric && shift_err <= 1e-12 && hand == 1.0,
        format!("symmetric {symmetric}, translation error {shift_err:.1e} (<= 1e-12), 3-point example {hand} (== 1)"),
    )
}

fn c12_performance() -> Outcome {
    let (s, fom_secs) = toy();
    let model = &toy_training().model;
    let rom_secs = time_rom(model, &s.times(), 5).unwrap();
    let speedup = fom_secs / rom_secs;
    outcome(
        rom_secs < 0.05 && speedup >= 100.0,
        format!(
            "ROM {:.2} ms (< 50 ms), FOM {:.3} s, speedup {speedup:.0} (>= 100)",
            rom_secs * 1e3,
            fom_secs
        ),
    )
}

fn c13_storage() -> Outcome {
    let snap = encode_snapshot_set(&toy().0).len();
    let rec = encode_rom_record(&toy_training().model.to_record()).len();
    let ratio = snap as f64 / rec as f64;
    outcome(ratio >= 10.0, format!("snapshot {snap} B, record {rec} B, ratio {ratio:.1} (>= 10)"))
}

fn main() {
    let criteria: [Check; 13] = [
        ("exact recovery", c1_exact_recovery),
        ("stability dichotomy", c2_dichotomy),
        ("POD bound", c3_pod_bound),
        ("Tikhonov limits", c4_tikhonov),
        ("ROM kinematics", c5_kinematics),
        ("steady-state spectrum", c6_steady_spectrum),
        ("kinetic energy", c7_energy),
        ("end-to-end pipeline", c8_pipeline),
        ("learning-time monotonicity", c9_learning_time),
        ("barycentric layer", c10_barycentric),
        ("MHD properties", c11_mhd),
        ("performance floor", c12_performance),
        ("storage", c13_storage),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
