//! Identification of the reduced velocity operator.
//!
//! Reduced velocities `βⁿ = Qᵀvⁿ` are stacked into `X = [β¹ … β^{N−1}]` and
//! their forward differences into `Y = [(β^{n+1} − βⁿ)/Δt]`. The operator `A`
//! of `β̇ = Aβ` is then the least-squares solution of `min ‖Y − AX‖_F`,
//! optionally with the scaled ridge penalty `μ‖X‖²_F‖A‖²_F`.

use alloc::format;
use alloc::vec::Vec;

use crate::numerics::{
    condition_from_singular_values, eigenvalues, qr_pseudo_inverse, solve_spd, symmetric_part,
    thin_svd, Matrix, Spectrum, RANK_TOLERANCE,
};
use crate::pod::PodBasis;
use crate::snapshot::SnapshotSet;
use crate::{Error, Result};

pub const DEFAULT_MU: f64 = 1e-9;
pub const DEFAULT_LCURVE_MIN: f64 = 1e-12;
pub const DEFAULT_LCURVE_MAX: f64 = 1e-5;
pub const DEFAULT_POINTS_PER_DECADE: usize = 4;

/// Data matrices of the least-squares identification problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedData {
    x: Matrix,
    y: Matrix,
    dt: f64,
    cond_x: f64,
}

impl ReducedData {
    /// Builds `X`, `Y` from a sequence of reduced states (one per column,
    /// uniformly spaced by `dt`). Requires at least `K + 1` states and a
    /// full-row-rank `X`.
    pub fn from_states(states: &Matrix, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be finite and > 0, got {dt}")));
        }
        let (k, n) = states.shape();
        if k == 0 {
            return Err(Error::invalid("states", "reduced dimension must be at least 1"));
        }
        if n < k + 1 {
            return Err(Error::InsufficientData(format!(
                "{n} snapshots cannot identify a rank-{k} model; need at least {}",
                k + 1
            )));
        }
        crate::numerics::ensure_finite(states, "reduced states")?;
        let x = states.columns(0, n - 1).into_owned();
        let y = (states.columns(1, n - 1) - &x) / dt;

        let sigma: Vec<f64> = thin_svd(&x)?.singular_values.iter().copied().collect();
        let smax = sigma.first().copied().unwrap_or(0.0);
        if let Some(row) = sigma.iter().position(|s| !(*s > RANK_TOLERANCE * smax)) {
            return Err(Error::RankDeficient {
                row,
                pivot: sigma[row],
                hint: "; the reduced velocity data does not span all modes, try a smaller rank",
            });
        }
        Ok(ReducedData {
            cond_x: condition_from_singular_values(&sigma),
            x,
            y,
            dt,
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn rank(&self) -> usize {
        self.x.nrows()
    }

    /// Number of difference columns, `N − 1`.
    pub fn n_columns(&self) -> usize {
        self.x.ncols()
    }

    pub fn cond_x(&self) -> f64 {
        self.cond_x
    }

    /// Condition number of `XXᵀ`, the square of that of `X`.
    pub fn cond_xxt(&self) -> f64 {
        self.cond_x * self.cond_x
    }

    /// `[β² … β^N] = X + Δt·Y`.
    pub fn x_next(&self) -> Matrix {
        &self.x + &self.y * self.dt
    }
}

/// Projects velocity snapshots onto `basis` and assembles `X`, `Y`.
pub fn assemble_reduced_data(s: &SnapshotSet, basis: &PodBasis) -> Result<ReducedData> {
    if basis.dim() != s.dim() {
        return Err(Error::shape("assemble_reduced_data", basis.dim(), s.dim()));
    }
    let betas = basis.project_columns(s.velocities())?;
    ReducedData::from_states(&betas, s.dt())
}

/// `A = Y X†` with the QR pseudo-inverse.
pub fn identify_plain(data: &ReducedData) -> Result<Matrix> {
    Ok(&data.y * qr_pseudo_inverse(&data.x)?)
}

/// Backward-difference variant: minimizes `Σ‖(β^{n+1} − βⁿ)/Δt − Aβ^{n+1}‖²`.
///
/// Exposed for the discretization analysis only: on a pure center this
/// estimator produces eigenvalues with positive real part.
pub fn identify_plain_backward(data: &ReducedData) -> Result<Matrix> {
    Ok(&data.y * qr_pseudo_inverse(&data.x_next())?)
}

/// Identified operator with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedModel {
    pub a_mu: Matrix,
    pub mu: f64,
    /// `‖Y − A_μX‖_F / ‖Y‖_F` (absolute when `Y = 0`).
    pub residual_fro: f64,
    /// `‖A_μ‖_F`.
    pub norm_fro: f64,
    pub spectrum: Spectrum,
    pub symmetric_part_spectrum: Spectrum,
}

fn relative_residual(data: &ReducedData, a: &Matrix) -> f64 {
    let r = (&data.y - a * &data.x).norm();
    let y = data.y.norm();
    if y > 0.0 {
        r / y
    } else {
        r
    }
}

/// `A_μ = YXᵀ(XXᵀ + μ‖X‖²_F I)⁻¹`, evaluated through a Cholesky solve.
pub fn tikhonov_operator(data: &ReducedData, mu: f64) -> Result<Matrix> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::invalid("mu", format!("must be finite and >= 0, got {mu}")));
    }
    let k = data.rank();
    let mut gram = &data.x * data.x.transpose();
    let shift = mu * data.x.norm_squared();
    for i in 0..k {
        gram[(i, i)] += shift;
    }
    let rhs = &data.x * data.y.transpose();
    let zt = solve_spd(&gram, &rhs).map_err(|_| {
        Error::Singular(format!(
            "regularized normal matrix is not positive definite at mu = {mu:e}"
        ))
    })?;
    Ok(zt.transpose())
}

pub fn identify_tikhonov(data: &ReducedData, mu: f64) -> Result<IdentifiedModel> {
    let a_mu = tikhonov_operator(data, mu)?;
    let spectrum = eigenvalues(&a_mu)?;
    let symmetric_part_spectrum = eigenvalues(&symmetric_part(&a_mu))?;
    Ok(IdentifiedModel {
        residual_fro: relative_residual(data, &a_mu),
        norm_fro: a_mu.norm(),
        a_mu,
        mu,
        spectrum,
        symmetric_part_spectrum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LCurvePoint {
    pub mu: f64,
    pub residual: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LCurve {
    pub points: Vec<LCurvePoint>,
    pub selected_index: usize,
    pub selected_mu: f64,
}

/// Logarithmic grid from `mu_min` to `mu_max` inclusive.
pub fn log_grid(mu_min: f64, mu_max: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(mu_min > 0.0 && mu_max > mu_min && mu_max.is_finite()) {
        return Err(Error::invalid(
            "lcurve bounds",
            format!("need 0 < mu_min < mu_max, got {mu_min:e}..{mu_max:e}"),
        ));
    }
    if points_per_decade == 0 {
        return Err(Error::invalid("points_per_decade", "must be at least 1"));
    }
    let lo = libm::log10(mu_min);
    let hi = libm::log10(mu_max);
    let steps = libm::round((hi - lo) * points_per_decade as f64) as usize;
    if steps + 1 < 3 {
        return Err(Error::invalid(
            "lcurve bounds",
            format!("sweep has {} points, at least 3 are needed", steps + 1),
        ));
    }
    Ok((0..=steps)
        .map(|i| {
            if i == 0 {
                mu_min
            } else if i == steps {
                mu_max
            } else {
                libm::pow(10.0, lo + (hi - lo) * i as f64 / steps as f64)
            }
        })
        .collect())
}

/// Evaluates `A_μ` over a logarithmic grid and picks the corner of the
/// (log residual, log norm) polyline.
pub fn lcurve_sweep(
    data: &ReducedData,
    mu_min: f64,
    mu_max: f64,
    points_per_decade: usize,
) -> Result<LCurve> {
    let mus = log_grid(mu_min, mu_max, points_per_decade)?;
    let mut points = Vec::with_capacity(mus.len());
    for mu in mus {
        let a = tikhonov_operator(data, mu)?;
        points.push(LCurvePoint {
            mu,
            residual: relative_residual(data, &a),
            norm: a.norm(),
        });
    }
    let selected_index = lcurve_corner(&points);
    Ok(LCurve {
        selected_mu: points[selected_index].mu,
        selected_index,
        points,
    })
}

/// Curvature below which a bend does not count as a corner.
const CORNER_CURVATURE_FLOOR: f64 = 1e-6;

/// Index of maximum signed curvature of the log-log L-curve, using the
/// circle through each triple of consecutive points. Positive curvature is
/// the turn from the steep (norm-dominated) branch to the flat
/// (residual-dominated) branch as `μ` grows. Without any such turn the
/// smallest `μ` is returned; ties go to the smaller `μ`.
pub fn lcurve_corner(points: &[LCurvePoint]) -> usize {
    let floor = 1e-300;
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (libm::log10(p.residual.max(floor)), libm::log10(p.norm.max(floor))))
        .collect();
    let total: f64 = xy.windows(2).map(|w| dist(w[0], w[1])).sum();
    let min_seg = 1e-6 * total;

    let mut best = (0usize, CORNER_CURVATURE_FLOOR);
    for i in 1..xy.len().saturating_sub(1) {
        let (a, b, c) = (xy[i - 1], xy[i], xy[i + 1]);
        let (ab, bc, ca) = (dist(a, b), dist(b, c), dist(c, a));
        if ab < min_seg || bc < min_seg || ca < min_seg {
            continue;
        }
        let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
        let kappa = 2.0 * cross / (ab * bc * ca);
        if kappa > best.1 {
            best = (i, kappa);
        }
    }
    best.0
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    libm::hypot(a.0 - b.0, a.1 - b.1)
}

/// Column-wise relative residual `R(j) = ‖A_μX_j − Y_j‖₁ / ‖Y_j‖₁` reported
/// against `t_j = j·Δt`, `j = 1..N−1`.
pub fn time_residual(data: &ReducedData, a_mu: &Matrix) -> Result<Vec<(f64, f64)>> {
    let k = data.rank();
    if a_mu.shape() != (k, k) {
        return Err(Error::shape(
            "time_residual",
            format!("{k}x{k}"),
            format!("{}x{}", a_mu.nrows(), a_mu.ncols()),
        ));
    }
    let pred = a_mu * &data.x;
    Ok((0..data.n_columns())
        .map(|j| {
            let num: f64 = (pred.column(j) - data.y.column(j)).iter().map(|v| v.abs()).sum();
            let den: f64 = data.y.column(j).iter().map(|v| v.abs()).sum();
            let r = if den > 0.0 {
                num / den
            } else if num <= 1e-14 {
                0.0
            } else {
                f64::INFINITY
            };
            ((j + 1) as f64 * data.dt, r)
        })
        .collect())
}
