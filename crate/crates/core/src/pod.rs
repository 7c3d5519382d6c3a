//! Truncated POD basis from displacement snapshots.
//!
//! The basis is the leading left singular vectors of the displacement
//! snapshot matrix `[u¹ … u^N]`, truncated at the smallest rank whose
//! relative information content (the neglected fraction of `Σσ²`) is at most
//! `eps`, and capped at `max_rank`. Velocities are projected on the same
//! modes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::numerics::{thin_svd, Matrix, Vector};
use crate::snapshot::SnapshotSet;
use crate::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_RANK: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: Matrix,
    singular_values: Vec<f64>,
    eps: f64,
    source: String,
}

/// `RIC(K)` for `K = 0..=r`: entry `K` is the neglected energy fraction when
/// keeping the first `K` singular values. Tail sums run from the smallest
/// value up so small fractions keep full relative precision.
pub fn ric_from_singular_values(sigma: &[f64]) -> Vec<f64> {
    let r = sigma.len();
    let mut tail = alloc::vec![0.0; r + 1];
    for k in (0..r).rev() {
        tail[k] = tail[k + 1] + sigma[k] * sigma[k];
    }
    let total = tail[0];
    if total == 0.0 {
        return tail;
    }
    tail.iter().map(|t| t / total).collect()
}

/// Smallest `K ≥ 1` with `RIC(K) ≤ eps`.
pub fn truncation_rank(sigma: &[f64], eps: f64) -> usize {
    let ric = ric_from_singular_values(sigma);
    (1..ric.len()).find(|&k| ric[k] <= eps).unwrap_or(sigma.len().max(1))
}

fn validate_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid("eps", format!("must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

impl PodBasis {
    /// Builds the truncated basis of `s`'s displacement snapshots.
    pub fn build(s: &SnapshotSet, eps: f64, max_rank: usize) -> Result<Self> {
        Self::from_snapshot_matrix(s.displacements(), eps, max_rank, source_label(s))
    }

    pub fn from_snapshot_matrix(
        snapshots: &Matrix,
        eps: f64,
        max_rank: usize,
        source: String,
    ) -> Result<Self> {
        validate_eps(eps)?;
        if max_rank == 0 {
            return Err(Error::invalid("max_rank", "must be at least 1"));
        }
        if snapshots.iter().all(|v| *v == 0.0) {
            return Err(Error::DegenerateData(
                "displacement snapshot matrix is identically zero".into(),
            ));
        }
        let svd = thin_svd(snapshots)?;
        let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        let rank = truncation_rank(&sigma, eps).min(max_rank);
        Ok(PodBasis {
            modes: svd.u.columns(0, rank).into_owned(),
            singular_values: sigma,
            eps,
            source,
        })
    }

    /// Wraps externally supplied orthonormal modes (e.g. loaded from disk).
    pub fn from_parts(modes: Matrix, singular_values: Vec<f64>, eps: f64, source: String) -> Result<Self> {
        if modes.ncols() == 0 || modes.nrows() == 0 {
            return Err(Error::invalid("modes", "basis must have at least one mode"));
        }
        let k = modes.ncols();
        let defect = (modes.transpose() * &modes - Matrix::identity(k, k)).amax();
        if defect > crate::snapshot::MODE_ORTHONORMALITY_TOLERANCE {
            return Err(Error::invalid(
                "modes",
                format!("columns are not orthonormal (max |QᵀQ − I| = {defect:e})"),
            ));
        }
        Ok(PodBasis {
            modes,
            singular_values,
            eps,
            source,
        })
    }

    pub fn modes(&self) -> &Matrix {
        &self.modes
    }

    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn dim(&self) -> usize {
        self.modes.nrows()
    }

    /// All singular values of the snapshot matrix (empty when unknown).
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Neglected energy fraction at the chosen rank, if singular values are known.
    pub fn ric(&self) -> Option<f64> {
        if self.singular_values.is_empty() {
            return None;
        }
        Some(ric_from_singular_values(&self.singular_values)[self.rank()])
    }

    /// `Qᵀ field`.
    pub fn project(&self, field: &Vector) -> Result<Vector> {
        if field.len() != self.dim() {
            return Err(Error::shape("project", self.dim(), field.len()));
        }
        Ok(self.modes.tr_mul(field))
    }

    /// `Qᵀ S` for a matrix of fields.
    pub fn project_columns(&self, fields: &Matrix) -> Result<Matrix> {
        if fields.nrows() != self.dim() {
            return Err(Error::shape("project_columns", self.dim(), fields.nrows()));
        }
        Ok(self.modes.tr_mul(fields))
    }

    /// `Q reduced`.
    pub fn reconstruct(&self, reduced: &Vector) -> Result<Vector> {
        if reduced.len() != self.rank() {
            return Err(Error::shape("reconstruct", self.rank(), reduced.len()));
        }
        Ok(&self.modes * reduced)
    }

    /// `‖S − QQᵀS‖²_F / ‖S‖²_F`.
    pub fn relative_projection_error(&self, fields: &Matrix) -> Result<f64> {
        let total = fields.norm_squared();
        if total == 0.0 {
            return Ok(0.0);
        }
        let coeffs = self.project_columns(fields)?;
        let residual = fields - &self.modes * coeffs;
        Ok(residual.norm_squared() / total)
    }
}

fn source_label(s: &SnapshotSet) -> String {
    let t = s.theta();
    format!("ca={} ratio={}", t.ca, t.ratio)
}

/// `(K, RIC(K))` for `K = 1..=min(d, N)`.
pub fn ric_curve(s: &SnapshotSet) -> Result<Vec<(usize, f64)>> {
    if s.displacements().iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateData(
            "displacement snapshot matrix is identically zero".into(),
        ));
    }
    let svd = thin_svd(s.displacements())?;
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let ric = ric_from_singular_values(&sigma);
    Ok((1..ric.len()).map(|k| (k, ric[k])).collect())
}
