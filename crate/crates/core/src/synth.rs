//! Synthetic full-order trajectories with known ground truth.
//!
//! [`LinearOracle`] embeds an exactly solvable linear reduced system in node
//! space. [`ToyCapsule`] is a verification oracle, not a physical model: a
//! cloud of nodes on a sphere that relaxes towards a steady deformed shape
//! while translating at constant speed, integrated with the two-stage
//! Ralston scheme.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{matrix_exponential, Matrix, Vector};
use crate::snapshot::{ParamCouple, SnapshotMeta, SnapshotSet};
use crate::{Error, Result};

pub use crate::dmd::identify_plain_backward as identify_backward_oracle;

/// `n` nearly uniform unit vectors (golden-angle spiral), interleaved.
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = core::f64::consts::PI * (3.0 - libm::sqrt(5.0));
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = libm::sqrt((1.0 - z * z).max(0.0));
            let phi = golden * i as f64;
            [r * libm::cos(phi), r * libm::sin(phi), z]
        })
        .collect()
}

fn flatten(points: &[[f64; 3]], scale: f64) -> Vector {
    Vector::from_iterator(points.len() * 3, points.iter().flat_map(|p| p.map(|c| c * scale)))
}

/// Spectrum families for random linear oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    /// Every eigenvalue has a strictly negative real part.
    Stable,
    /// Purely imaginary pairs (and a zero eigenvalue when `K` is odd).
    Center,
    /// Half decaying, half oscillating without decay.
    Mixed,
}

impl SpectrumKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpectrumKind::Stable => "stable",
            SpectrumKind::Center => "center",
            SpectrumKind::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "stable" => Ok(SpectrumKind::Stable),
            "center" => Ok(SpectrumKind::Center),
            "mixed" => Ok(SpectrumKind::Mixed),
            other => Err(Error::invalid(
                "spectrum",
                format!("expected stable|center|mixed, got {other:?}"),
            )),
        }
    }
}

/// `v(t) = L exp(A t) β⁰` and `u(t) = L ∫₀ᵗ exp(A s) ds β⁰` for an
/// orthonormal lift `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOracle {
    pub a_ref: Matrix,
    pub lift: Matrix,
    pub beta0: Vector,
    pub dt: f64,
    pub n_snapshots: usize,
    pub theta: ParamCouple,
    pub initial_positions: Vector,
    pub meta: SnapshotMeta,
}

impl LinearOracle {
    /// Oracle with unit-sphere node positions and a neutral parameter couple.
    pub fn new(a_ref: Matrix, lift: Matrix, beta0: Vector, dt: f64, n_snapshots: usize) -> Result<Self> {
        let d = lift.nrows();
        if !d.is_multiple_of(3) || d == 0 {
            return Err(Error::shape("lift rows", "3*n_nodes", d));
        }
        let o = LinearOracle {
            a_ref,
            lift,
            beta0,
            dt,
            n_snapshots,
            theta: ParamCouple { ca: 1.0, ratio: 1.0 },
            initial_positions: flatten(&fibonacci_sphere(d / 3), 1.0),
            meta: SnapshotMeta::default(),
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.a_ref.nrows();
        if self.a_ref.ncols() != k || k == 0 {
            return Err(Error::shape("a_ref", "square, nonempty", format!("{}x{}", k, self.a_ref.ncols())));
        }
        if self.lift.ncols() != k {
            return Err(Error::shape("lift columns", k, self.lift.ncols()));
        }
        if self.beta0.len() != k {
            return Err(Error::shape("beta0", k, self.beta0.len()));
        }
        if self.initial_positions.len() != self.lift.nrows() {
            return Err(Error::shape("initial_positions", self.lift.nrows(), self.initial_positions.len()));
        }
        crate::numerics::ensure_finite(&self.a_ref, "a_ref")?;
        let defect = (self.lift.transpose() * &self.lift - Matrix::identity(k, k)).amax();
        if defect > 1e-10 {
            return Err(Error::invalid("lift", format!("not orthonormal (defect {defect:e})")));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        if self.n_snapshots == 0 {
            return Err(Error::invalid("n_snapshots", "must be at least 1"));
        }
        Ok(())
    }

    /// Random oracle: block-diagonal spectrum of the requested kind under a
    /// random well-conditioned similarity, random orthonormal lift and
    /// standard normal `β⁰`.
    pub fn random(spec: &LinearSpec) -> Result<Self> {
        let (k, d) = (spec.k, spec.d);
        if k == 0 || d < k {
            return Err(Error::invalid("k", format!("need 1 <= k <= d, got k={k}, d={d}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let a_ref = random_operator(&mut rng, k, spec.kind)?;
        let lift = random_orthonormal(&mut rng, d, k);
        let beta0 = Vector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut o = LinearOracle::new(a_ref, lift, beta0, spec.dt, spec.n_snapshots)?;
        spec.write_meta(&mut o.meta);
        Ok(o)
    }

    pub fn dim(&self) -> usize {
        self.lift.nrows()
    }

    pub fn rank(&self) -> usize {
        self.a_ref.nrows()
    }

    /// `(exp(A Δt) − I)/Δt`, what forward-difference identification recovers.
    pub fn forward_difference_operator(&self) -> Result<Matrix> {
        let k = self.rank();
        Ok((matrix_exponential(&self.a_ref, self.dt)? - Matrix::identity(k, k)) / self.dt)
    }

    /// `(I − exp(−A Δt))/Δt`, what backward-difference identification recovers.
    pub fn backward_difference_operator(&self) -> Result<Matrix> {
        let k = self.rank();
        Ok((Matrix::identity(k, k) - matrix_exponential(&self.a_ref, -self.dt)?) / self.dt)
    }

    /// Reduced state `(∫₀ᵗ exp(As) ds β⁰, exp(At) β⁰)`.
    pub fn reduced_state(&self, t: f64) -> Result<(Vector, Vector)> {
        let k = self.rank();
        let mut aug = Matrix::zeros(k + 1, k + 1);
        aug.view_mut((0, 0), (k, k)).copy_from(&self.a_ref);
        aug.view_mut((0, k), (k, 1)).copy_from(&self.beta0);
        let e = matrix_exponential(&aug, t)?;
        let alpha = e.view((0, k), (k, 1)).column(0).into_owned();
        let beta = e.view((0, 0), (k, k)) * &self.beta0;
        Ok((alpha, beta))
    }
}

/// Parameters of a random linear oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSpec {
    pub k: usize,
    pub d: usize,
    pub n_snapshots: usize,
    pub dt: f64,
    pub kind: SpectrumKind,
    pub seed: u64,
}

impl LinearSpec {
    pub fn write_meta(&self, meta: &mut SnapshotMeta) {
        meta.set("generator", "linear");
        meta.set("k", self.k);
        meta.set("d", self.d);
        meta.set("n", self.n_snapshots);
        meta.set("dt", self.dt);
        meta.set("spectrum", self.kind.as_str());
        meta.set("seed", self.seed);
    }

    pub fn from_meta(meta: &SnapshotMeta) -> Result<Option<Self>> {
        if meta.get("generator") != Some("linear") {
            return Ok(None);
        }
        Ok(Some(LinearSpec {
            k: meta_parse(meta, "k")?,
            d: meta_parse(meta, "d")?,
            n_snapshots: meta_parse(meta, "n")?,
            dt: meta_parse(meta, "dt")?,
            kind: SpectrumKind::parse(meta.get("spectrum").unwrap_or(""))?,
            seed: meta_parse(meta, "seed")?,
        }))
    }
}

fn meta_parse<T: core::str::FromStr>(meta: &SnapshotMeta, key: &'static str) -> Result<T> {
    meta.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::invalid("metadata", format!("missing or malformed key {key:?}")))
}

fn random_operator(rng: &mut ChaCha8Rng, k: usize, kind: SpectrumKind) -> Result<Matrix> {
    let mut block = Matrix::zeros(k, k);
    let mut i = 0;
    let mut pair = 0;
    while i < k {
        let decaying = match kind {
            SpectrumKind::Stable => true,
            SpectrumKind::Center => false,
            SpectrumKind::Mixed => pair % 2 == 0,
        };
        let re = if decaying { -rng.random_range(0.1..1.0) } else { 0.0 };
        if i + 1 < k {
            let im = rng.random_range(0.2..3.0);
            block[(i, i)] = re;
            block[(i + 1, i + 1)] = re;
            block[(i, i + 1)] = im;
            block[(i + 1, i)] = -im;
            i += 2;
        } else {
            block[(i, i)] = re;
            i += 1;
        }
        pair += 1;
    }
    // A mild random similarity keeps the spectrum but makes the operator non-normal.
    let g = Matrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let t = Matrix::identity(k, k) + g * (0.3 / libm::sqrt(k as f64));
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("random similarity transform".into()))?;
    Ok(&t * block * t_inv)
}

fn random_orthonormal(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Matrix {
    let g = Matrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Exact snapshots of a linear oracle at `t = n·Δt`, `n = 1..=N`.
pub fn generate_linear(o: &LinearOracle) -> Result<SnapshotSet> {
    o.validate()?;
    let k = o.rank();
    let n = o.n_snapshots;
    let mut alphas = Matrix::zeros(k, n);
    let mut betas = Matrix::zeros(k, n);
    for j in 0..n {
        let (a, b) = o.reduced_state((j + 1) as f64 * o.dt)?;
        alphas.set_column(j, &a);
        betas.set_column(j, &b);
    }
    let s = SnapshotSet::new(
        o.theta,
        o.dt,
        1.0,
        o.initial_positions.clone(),
        &o.lift * alphas,
        &o.lift * betas,
    )?;
    Ok(s.with_meta(o.meta.clone()))
}

/// One step of the two-stage Ralston scheme for `u̇ = φ(u)`, carrying
/// `v = φ(u)`:
/// `û = u + ⅔h v`, `u⁺ = u + h(¼v + ¾φ(û))`, `v⁺ = φ(u⁺)`.
pub fn ralston_step<F>(phi: &mut F, u: &Vector, v: &Vector, h: f64) -> (Vector, Vector)
where
    F: FnMut(&Vector) -> Vector,
{
    let u_hat = u + v * (2.0 / 3.0 * h);
    let v_hat = phi(&u_hat);
    let u_next = u + (v * 0.25 + v_hat * 0.75) * h;
    let v_next = phi(&u_next);
    (u_next, v_next)
}

/// Configuration of the toy capsule.
///
/// Nodes start on a sphere of radius `ratio` (with `ℓ = 1`) and obey
/// `u̇ᵢ = v∞eₓ − κᵢ(1 + γ‖wᵢ‖²/δ²)wᵢ` with `wᵢ = uᵢ − ū − sᵢ`, where `ū` is the
/// mean displacement and `s` the zero-mean steady deformation
/// `s = δ·(ca·g₁ + ratio·g₂)`, `δ = deformation·v∞`. The shape `g₁` is a
/// front/back asymmetry and `g₂` an axial elongation. Rates `κᵢ` grow from
/// the front to the rear of the sphere with a small seeded jitter. With
/// `γ = 0` trajectories are affine in `(ca, ratio)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyCapsule {
    pub n_nodes: usize,
    pub n_snapshots: usize,
    pub dt: f64,
    pub theta: ParamCouple,
    pub v_inf: f64,
    pub rate_min: f64,
    pub rate_max: f64,
    pub nonlinearity: f64,
    pub deformation: f64,
    /// Internal Ralston steps per stored snapshot.
    pub substeps: usize,
    pub seed: u64,
}

impl Default for ToyCapsule {
    fn default() -> Self {
        ToyCapsule {
            n_nodes: 2562,
            n_snapshots: 250,
            dt: 0.04,
            theta: ParamCouple { ca: 0.17, ratio: 0.8 },
            v_inf: 1.0,
            rate_min: 0.8,
            rate_max: 1.6,
            nonlinearity: 1.0,
            deformation: 0.05,
            substeps: 50,
            seed: 1,
        }
    }
}

/// Largest stable internal step is `RALSTON_STABILITY / rate` for a linear decay.
pub const RALSTON_STABILITY: f64 = 2.0;

impl ToyCapsule {
    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if self.n_nodes < 4 {
            return Err(Error::invalid("n_nodes", "must be at least 4"));
        }
        if self.n_snapshots == 0 {
            return Err(Error::invalid("n_snapshots", "must be at least 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        if !(self.rate_min.is_finite() && self.rate_min > 0.0 && self.rate_max >= self.rate_min && self.rate_max.is_finite()) {
            return Err(Error::invalid("rates", "need 0 < rate_min <= rate_max"));
        }
        if !(self.nonlinearity.is_finite() && self.nonlinearity >= 0.0) {
            return Err(Error::invalid("nonlinearity", "must be finite and >= 0"));
        }
        if !(self.deformation.is_finite() && self.deformation >= 0.0) {
            return Err(Error::invalid("deformation", "must be finite and >= 0"));
        }
        if !self.v_inf.is_finite() {
            return Err(Error::invalid("v_inf", "must be finite"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn write_meta(&self, meta: &mut SnapshotMeta) {
        meta.set("generator", "capsule");
        meta.set("nodes", self.n_nodes);
        meta.set("n", self.n_snapshots);
        meta.set("dt", self.dt);
        meta.set("v_inf", self.v_inf);
        meta.set("rate_min", self.rate_min);
        meta.set("rate_max", self.rate_max);
        meta.set("nonlinearity", self.nonlinearity);
        meta.set("deformation", self.deformation);
        meta.set("substeps", self.substeps);
        meta.set("seed", self.seed);
    }

    /// Rebuilds the configuration recorded by [`ToyCapsule::write_meta`];
    /// the couple comes from the snapshot header.
    pub fn from_meta(meta: &SnapshotMeta, theta: ParamCouple) -> Result<Option<Self>> {
        if meta.get("generator") != Some("capsule") {
            return Ok(None);
        }
        let c = ToyCapsule {
            n_nodes: meta_parse(meta, "nodes")?,
            n_snapshots: meta_parse(meta, "n")?,
            dt: meta_parse(meta, "dt")?,
            theta,
            v_inf: meta_parse(meta, "v_inf")?,
            rate_min: meta_parse(meta, "rate_min")?,
            rate_max: meta_parse(meta, "rate_max")?,
            nonlinearity: meta_parse(meta, "nonlinearity")?,
            deformation: meta_parse(meta, "deformation")?,
            substeps: meta_parse(meta, "substeps")?,
            seed: meta_parse(meta, "seed")?,
        };
        c.validate()?;
        Ok(Some(c))
    }

    fn directions(&self) -> Vec<[f64; 3]> {
        fibonacci_sphere(self.n_nodes)
    }

    fn rates(&self, dirs: &[[f64; 3]]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let span = self.rate_max - self.rate_min;
        dirs.iter()
            .map(|n| {
                let jitter: f64 = rng.random();
                self.rate_min + span * (0.85 * 0.5 * (1.0 - n[0]) + 0.15 * jitter)
            })
            .collect()
    }

    /// Zero-mean steady deformation `s`, interleaved.
    pub fn steady_deformation(&self) -> Vector {
        let dirs = self.directions();
        let delta = self.deformation * self.v_inf;
        let mut s: Vec<[f64; 3]> = dirs
            .iter()
            .map(|n| {
                let g1 = n[0] * n[0] * n[0] - 0.6 * n[0];
                let g2 = 0.5 * (3.0 * n[0] * n[0] - 1.0);
                let radial = self.theta.ca * g1 + self.theta.ratio * g2;
                n.map(|c| delta * radial * c)
            })
            .collect();
        let mut mean = [0.0; 3];
        for p in &s {
            for a in 0..3 {
                mean[a] += p[a] / s.len() as f64;
            }
        }
        for p in &mut s {
            for a in 0..3 {
                p[a] -= mean[a];
            }
        }
        flatten(&s, 1.0)
    }

    /// Upper bound on the internal step `dt / substeps` for stability.
    pub fn step_cap(&self) -> f64 {
        let dirs = self.directions();
        let rates = self.rates(&dirs);
        let s = self.steady_deformation();
        let delta = self.deformation * self.v_inf;
        let stiff = rates
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let w2 = s.rows(3 * i, 3).norm_squared();
                let amp = if delta > 0.0 { 3.0 * self.nonlinearity * w2 / (delta * delta) } else { 0.0 };
                k * (1.0 + amp)
            })
            .fold(0.0, f64::max);
        RALSTON_STABILITY / stiff
    }
}

/// Integrates the toy capsule and stores every `substeps`-th state.
pub fn generate_toy_capsule(cfg: &ToyCapsule) -> Result<SnapshotSet> {
    cfg.validate()?;
    let h = cfg.dt / cfg.substeps as f64;
    let cap = cfg.step_cap();
    if h >= cap {
        let snap_cap = cap * cfg.substeps as f64;
        return Err(Error::StepTooLarge {
            dt: cfg.dt,
            cap: snap_cap,
            suggested: 0.9 * snap_cap,
        });
    }
    let dirs = cfg.directions();
    let rates = cfg.rates(&dirs);
    let s = cfg.steady_deformation();
    let n = cfg.n_nodes;
    let d = 3 * n;
    let delta = cfg.deformation * cfg.v_inf;
    let inv_delta2 = if delta > 0.0 { 1.0 / (delta * delta) } else { 0.0 };
    let gamma = cfg.nonlinearity;
    let v_inf = cfg.v_inf;

    let mut phi = |u: &Vector| -> Vector {
        let mut mean = [0.0; 3];
        for i in 0..n {
            for a in 0..3 {
                mean[a] += u[3 * i + a];
            }
        }
        let mean = mean.map(|m| m / n as f64);
        let mut out = Vector::zeros(d);
        for i in 0..n {
            let w = [
                u[3 * i] - mean[0] - s[3 * i],
                u[3 * i + 1] - mean[1] - s[3 * i + 1],
                u[3 * i + 2] - mean[2] - s[3 * i + 2],
            ];
            let w2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
            let g = rates[i] * (1.0 + gamma * w2 * inv_delta2);
            out[3 * i] = v_inf - g * w[0];
            out[3 * i + 1] = -g * w[1];
            out[3 * i + 2] = -g * w[2];
        }
        out
    };

    let mut u = Vector::zeros(d);
    let mut v = phi(&u);
    let mut disp = Matrix::zeros(d, cfg.n_snapshots);
    let mut vel = Matrix::zeros(d, cfg.n_snapshots);
    for j in 0..cfg.n_snapshots {
        for _ in 0..cfg.substeps {
            let (un, vn) = ralston_step(&mut phi, &u, &v, h);
            u = un;
            v = vn;
        }
        disp.set_column(j, &u);
        vel.set_column(j, &v);
    }
    let positions = flatten(&dirs, cfg.theta.ratio);
    let mut meta = SnapshotMeta::default();
    cfg.write_meta(&mut meta);
    Ok(SnapshotSet::new(cfg.theta, cfg.dt, 1.0, positions, disp, vel)?.with_meta(meta))
}

/// Short description used in logs.
pub fn describe_capsule(cfg: &ToyCapsule) -> String {
    let mut out = String::new();
    for (k, v) in [
        ("nodes", cfg.n_nodes.to_string()),
        ("n", cfg.n_snapshots.to_string()),
        ("dt", cfg.dt.to_string()),
        ("ca", cfg.theta.ca.to_string()),
        ("ratio", cfg.theta.ratio.to_string()),
        ("seed", cfg.seed.to_string()),
    ] {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
    }
    out
}
