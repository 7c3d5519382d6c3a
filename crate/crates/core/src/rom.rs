//! The reduced dynamical system `α̇ = β`, `β̇ = A_μβ` with `α(0) = 0`.
//!
//! Written as `ẇ = 𝔸_μ w` for `w = (α, β)` and the block operator
//! `𝔸_μ = [[0, I], [0, A_μ]]`, whose exact flow is `exp(𝔸_μ t)`. Node
//! positions are recovered as `X + Qα`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::dmd::{
    assemble_reduced_data, identify_tikhonov, lcurve_sweep, IdentifiedModel, LCurve, ReducedData,
    DEFAULT_LCURVE_MAX, DEFAULT_LCURVE_MIN, DEFAULT_MU, DEFAULT_POINTS_PER_DECADE,
};
use crate::numerics::{eigenvalues, matrix_exponential, Matrix, Spectrum, Vector};
use crate::pod::{PodBasis, DEFAULT_EPS, DEFAULT_MAX_RANK};
use crate::snapshot::{ParamCouple, RomRecord, SnapshotSet};
use crate::{Error, Result};

pub const DEFAULT_DT_OUT: f64 = 0.04;
pub const DEFAULT_T_END: f64 = 10.0;

/// How the reduced initial velocity `β⁰` is obtained from stored snapshots,
/// which start at `t = Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialVelocity {
    /// `β⁰ = Qᵀv¹`: the first stored velocity is taken as the initial one.
    FirstSnapshot,
    /// `β⁰ = Qᵀ(2u¹/Δt − v¹)`: trapezoidal back-extrapolation over the first
    /// step using `u⁰ = 0`, second-order accurate in `Δt`.
    #[default]
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    Fixed(f64),
    LCurve {
        mu_min: f64,
        mu_max: f64,
        points_per_decade: usize,
    },
}

impl Regularization {
    pub fn default_lcurve() -> Self {
        Regularization::LCurve {
            mu_min: DEFAULT_LCURVE_MIN,
            mu_max: DEFAULT_LCURVE_MAX,
            points_per_decade: DEFAULT_POINTS_PER_DECADE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub eps: f64,
    pub max_modes: usize,
    pub regularization: Regularization,
    pub initial_velocity: InitialVelocity,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eps: DEFAULT_EPS,
            max_modes: DEFAULT_MAX_RANK,
            regularization: Regularization::Fixed(DEFAULT_MU),
            initial_velocity: InitialVelocity::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomModel {
    basis: PodBasis,
    a_mu: Matrix,
    mu: f64,
    beta0: Vector,
    dt_train: f64,
    initial_positions: Vector,
    ref_length: f64,
    theta: ParamCouple,
    spectrum: Spectrum,
}

impl RomModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        basis: PodBasis,
        a_mu: Matrix,
        mu: f64,
        beta0: Vector,
        dt_train: f64,
        initial_positions: Vector,
        ref_length: f64,
        theta: ParamCouple,
    ) -> Result<Self> {
        let k = basis.rank();
        if a_mu.shape() != (k, k) {
            return Err(Error::shape(
                "a_mu",
                format!("{k}x{k}"),
                format!("{}x{}", a_mu.nrows(), a_mu.ncols()),
            ));
        }
        if beta0.len() != k {
            return Err(Error::shape("beta0", k, beta0.len()));
        }
        if initial_positions.len() != basis.dim() {
            return Err(Error::shape("initial_positions", basis.dim(), initial_positions.len()));
        }
        if !(dt_train.is_finite() && dt_train > 0.0) {
            return Err(Error::invalid("dt_train", "must be finite and > 0"));
        }
        if !(ref_length.is_finite() && ref_length > 0.0) {
            return Err(Error::invalid("ref_length", "must be finite and > 0"));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::invalid("mu", "must be finite and >= 0"));
        }
        theta.validate()?;
        let spectrum = eigenvalues(&a_mu)?;
        Ok(RomModel {
            basis,
            a_mu,
            mu,
            beta0,
            dt_train,
            initial_positions,
            ref_length,
            theta,
            spectrum,
        })
    }

    pub fn from_record(rec: &RomRecord) -> Result<Self> {
        rec.validate()?;
        if rec.alpha0.iter().any(|a| *a != 0.0) {
            return Err(Error::invalid("alpha0", "reduced initial displacement must be zero"));
        }
        let basis = PodBasis::from_parts(
            rec.modes.clone(),
            Vec::new(),
            rec.eps,
            format!("ca={} ratio={}", rec.theta.ca, rec.theta.ratio),
        )?;
        RomModel::new(
            basis,
            rec.a_mu.clone(),
            rec.mu,
            rec.beta0.clone(),
            rec.dt,
            rec.initial_positions.clone(),
            rec.ref_length,
            rec.theta,
        )
    }

    pub fn to_record(&self) -> RomRecord {
        RomRecord {
            theta: self.theta,
            modes: self.basis.modes().clone(),
            a_mu: self.a_mu.clone(),
            mu: self.mu,
            eps: self.basis.eps(),
            dt: self.dt_train,
            alpha0: self.alpha0(),
            beta0: self.beta0.clone(),
            initial_positions: self.initial_positions.clone(),
            ref_length: self.ref_length,
        }
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    pub fn a_mu(&self) -> &Matrix {
        &self.a_mu
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn alpha0(&self) -> Vector {
        Vector::zeros(self.rank())
    }

    pub fn beta0(&self) -> &Vector {
        &self.beta0
    }

    pub fn dt_train(&self) -> f64 {
        self.dt_train
    }

    pub fn initial_positions(&self) -> &Vector {
        &self.initial_positions
    }

    pub fn ref_length(&self) -> f64 {
        self.ref_length
    }

    pub fn theta(&self) -> ParamCouple {
        self.theta
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// `𝔸_μ = [[0, I_K], [0, A_μ]]`.
    pub fn block_operator(&self) -> Matrix {
        let k = self.rank();
        let mut a = Matrix::zeros(2 * k, 2 * k);
        for i in 0..k {
            a[(i, k + i)] = 1.0;
        }
        a.view_mut((k, k), (k, k)).copy_from(&self.a_mu);
        a
    }

    /// Exact flow `w(t) = exp(𝔸_μ t) w(0)` sampled at `times` (nonnegative,
    /// strictly increasing). Consecutive samples are chained, and the step
    /// exponential is reused while the spacing stays the same.
    pub fn propagate_exact(&self, times: &[f64]) -> Result<Trajectory> {
        check_times(times)?;
        let k = self.rank();
        let block = self.block_operator();
        let mut w = Vector::zeros(2 * k);
        w.rows_mut(k, k).copy_from(&self.beta0);

        let mut alphas = Matrix::zeros(k, times.len());
        let mut betas = Matrix::zeros(k, times.len());
        let mut t_prev = 0.0;
        let mut cached: Option<(f64, Matrix)> = None;
        for (i, &t) in times.iter().enumerate() {
            let step = t - t_prev;
            if step > 0.0 {
                let reuse = matches!(&cached, Some((h, _)) if (h - step).abs() <= 1e-13 * step);
                if !reuse {
                    cached = Some((step, matrix_exponential(&block, step)?));
                }
                if let Some((_, e)) = &cached {
                    w = e * w;
                }
            }
            alphas.set_column(i, &w.rows(0, k));
            betas.set_column(i, &w.rows(k, k));
            t_prev = t;
        }
        Ok(Trajectory {
            times: times.to_vec(),
            alphas,
            betas,
        })
    }

    /// Forward Euler `αⁿ⁺¹ = αⁿ + Δtβⁿ`, `βⁿ⁺¹ = βⁿ + ΔtA_μβⁿ`, including `t = 0`.
    pub fn propagate_euler(&self, dt: f64, steps: usize) -> Result<Trajectory> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        let k = self.rank();
        let mut alphas = Matrix::zeros(k, steps + 1);
        let mut betas = Matrix::zeros(k, steps + 1);
        betas.set_column(0, &self.beta0);
        for n in 0..steps {
            let alpha = alphas.column(n) + betas.column(n) * dt;
            let beta = betas.column(n) + (&self.a_mu * betas.column(n)) * dt;
            alphas.set_column(n + 1, &alpha);
            betas.set_column(n + 1, &beta);
        }
        Ok(Trajectory {
            times: (0..=steps).map(|n| n as f64 * dt).collect(),
            alphas,
            betas,
        })
    }

    /// Spectral radius of `I + ΔtA_μ`.
    pub fn discrete_stability(&self, dt: f64) -> Result<DiscreteStability> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        let k = self.rank();
        let amp = Matrix::identity(k, k) + &self.a_mu * dt;
        let spectral_radius = eigenvalues(&amp)?.spectral_radius();
        Ok(DiscreteStability {
            dt,
            spectral_radius,
            stable: spectral_radius <= 1.0 + DISCRETE_STABILITY_SLACK,
        })
    }

    pub fn continuous_stability(&self) -> ContinuousStability {
        let max_real = self.spectrum.max_real();
        ContinuousStability {
            max_real,
            min_abs: self.spectrum.min_abs(),
            stable: max_real <= CONTINUOUS_STABILITY_SLACK,
        }
    }

    /// `βᵀA_μ^Sβ`, the rate of change of `½‖β‖²` (and of `½‖Qβ‖²`).
    pub fn kinetic_energy_rate(&self, beta: &Vector) -> Result<f64> {
        if beta.len() != self.rank() {
            return Err(Error::shape("kinetic_energy_rate", self.rank(), beta.len()));
        }
        Ok(beta.dot(&(&self.a_mu * beta)))
    }

    /// `X + Qα`.
    pub fn reconstruct_shape(&self, alpha: &Vector) -> Result<Vector> {
        Ok(&self.initial_positions + self.basis.reconstruct(alpha)?)
    }

    /// Node positions for every trajectory sample, one column each.
    pub fn reconstruct_positions(&self, traj: &Trajectory) -> Result<Matrix> {
        if traj.alphas.nrows() != self.rank() {
            return Err(Error::shape("reconstruct_positions", self.rank(), traj.alphas.nrows()));
        }
        let mut x = self.basis.modes() * &traj.alphas;
        for mut col in x.column_iter_mut() {
            col += &self.initial_positions;
        }
        Ok(x)
    }

    /// Displacements `Qα` for every sample.
    pub fn reconstruct_displacements(&self, traj: &Trajectory) -> Result<Matrix> {
        if traj.alphas.nrows() != self.rank() {
            return Err(Error::shape("reconstruct_displacements", self.rank(), traj.alphas.nrows()));
        }
        Ok(self.basis.modes() * &traj.alphas)
    }

    /// Velocities `Qβ` for every sample.
    pub fn reconstruct_velocities(&self, traj: &Trajectory) -> Result<Matrix> {
        if traj.betas.nrows() != self.rank() {
            return Err(Error::shape("reconstruct_velocities", self.rank(), traj.betas.nrows()));
        }
        Ok(self.basis.modes() * &traj.betas)
    }
}

pub const DISCRETE_STABILITY_SLACK: f64 = 1e-10;
pub const CONTINUOUS_STABILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteStability {
    pub dt: f64,
    pub spectral_radius: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousStability {
    pub max_real: f64,
    /// Smallest eigenvalue modulus; near zero when steady translation is representable.
    pub min_abs: f64,
    pub stable: bool,
}

fn check_times(times: &[f64]) -> Result<()> {
    let mut prev = None;
    for &t in times {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::invalid("times", format!("must be finite and >= 0, got {t}")));
        }
        if let Some(p) = prev {
            if t <= p {
                return Err(Error::invalid("times", "must be strictly increasing"));
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// Output grid `n·dt` for `n = 1..` up to `t_end` (inclusive within rounding).
pub fn uniform_times(dt: f64, t_end: f64) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt_out", "must be finite and > 0"));
    }
    if !(t_end.is_finite() && t_end >= dt) {
        return Err(Error::invalid("t_end", format!("must be >= dt_out ({dt}), got {t_end}")));
    }
    let n = libm::floor(t_end / dt + 1e-9) as usize;
    Ok((1..=n).map(|i| i as f64 * dt).collect())
}

/// Sampled reduced trajectory `w(t) = (α(t), β(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub alphas: Matrix,
    pub betas: Matrix,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Everything produced by fitting a model to one snapshot set.
#[derive(Debug, Clone)]
pub struct Training {
    pub model: RomModel,
    pub data: ReducedData,
    pub identified: IdentifiedModel,
    pub lcurve: Option<LCurve>,
    /// `‖Sᵛ − QQᵀSᵛ‖²_F / ‖Sᵛ‖²_F`: how well displacement modes carry velocities.
    pub velocity_projection_error: f64,
}

/// POD basis, reduced data, regularized identification and initial state.
pub fn train(s: &SnapshotSet, cfg: &TrainConfig) -> Result<Training> {
    let basis = PodBasis::build(s, cfg.eps, cfg.max_modes)?;
    let data = assemble_reduced_data(s, &basis)?;
    let (identified, lcurve) = match cfg.regularization {
        Regularization::Fixed(mu) => (identify_tikhonov(&data, mu)?, None),
        Regularization::LCurve {
            mu_min,
            mu_max,
            points_per_decade,
        } => {
            let curve = lcurve_sweep(&data, mu_min, mu_max, points_per_decade)?;
            (identify_tikhonov(&data, curve.selected_mu)?, Some(curve))
        }
    };
    let first_v = s.velocities().column(0).into_owned();
    let v0 = match cfg.initial_velocity {
        InitialVelocity::FirstSnapshot => first_v,
        InitialVelocity::Trapezoid => s.displacements().column(0) * (2.0 / s.dt()) - first_v,
    };
    let beta0 = basis.project(&v0)?;
    let velocity_projection_error = basis.relative_projection_error(s.velocities())?;
    let model = RomModel::new(
        basis,
        identified.a_mu.clone(),
        identified.mu,
        beta0,
        s.dt(),
        s.initial_positions().clone(),
        s.ref_length(),
        s.theta(),
    )?;
    Ok(Training {
        model,
        data,
        identified,
        lcurve,
        velocity_projection_error,
    })
}

/// Human-readable one-line model summary.
pub fn describe(model: &RomModel) -> String {
    let c = model.continuous_stability();
    format!(
        "K={} mu={:e} max_re={:.3e} min_abs={:.3e} dt_train={}",
        model.rank(),
        model.mu(),
        c.max_real,
        c.min_abs,
        model.dt_train()
    )
}
