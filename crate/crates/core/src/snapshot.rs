//! Trajectory data model: parameter couples, snapshot sets and persisted
//! reduced-order records.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::numerics::{ensure_finite, Matrix, Vector};
use crate::{Error, Result};

/// Parameter couple `(Ca, a/ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCouple {
    pub ca: f64,
    pub ratio: f64,
}

impl ParamCouple {
    pub fn new(ca: f64, ratio: f64) -> Result<Self> {
        let p = ParamCouple { ca, ratio };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ca.is_finite() && self.ca > 0.0) {
            return Err(Error::invalid("ca", format!("must be finite and > 0, got {}", self.ca)));
        }
        if !(self.ratio.is_finite() && self.ratio > 0.0) {
            return Err(Error::invalid(
                "ratio",
                format!("must be finite and > 0, got {}", self.ratio),
            ));
        }
        Ok(())
    }
}

/// Reference frame the displacements were recorded in. All computations are
/// frame-agnostic; the flag is carried for provenance only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    #[default]
    Lab,
    Centroid,
}

impl Frame {
    pub fn as_str(&self) -> &'static str {
        match self {
            Frame::Lab => "lab",
            Frame::Centroid => "centroid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lab" => Ok(Frame::Lab),
            "centroid" => Ok(Frame::Centroid),
            other => Err(Error::invalid("frame", format!("expected lab|centroid, got {other:?}"))),
        }
    }
}

/// Free-form provenance attached to a snapshot set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SnapshotMeta {
    pub frame: Frame,
    /// Set when velocities were reconstructed from displacements by finite
    /// differences instead of being supplied by the solver.
    pub velocities_derived: bool,
    /// Additional `key=value` entries (generator settings, seeds, ...).
    pub extra: Vec<(String, String)>,
}

impl SnapshotMeta {
    pub fn is_default(&self) -> bool {
        self == &SnapshotMeta::default()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.extra
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.extra.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.extra.push((key, value)),
        }
    }
}

/// Data-quality observation raised while validating snapshots.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotWarning {
    /// Forward differences of displacements disagree with the stored
    /// velocities by more than the loose tolerance.
    KinematicMismatch { column: usize, relative: f64 },
}

/// Relative tolerance of the loose kinematic check.
pub const KINEMATIC_TOLERANCE: f64 = 0.1;

/// One parameter couple's trajectory: displacement and velocity snapshots at
/// `t = n·dt`, `n = 1..=N`. The displacement at `t = 0` is implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    theta: ParamCouple,
    dt: f64,
    ref_length: f64,
    initial_positions: Vector,
    displacements: Matrix,
    velocities: Matrix,
    meta: SnapshotMeta,
}

impl SnapshotSet {
    pub fn new(
        theta: ParamCouple,
        dt: f64,
        ref_length: f64,
        initial_positions: Vector,
        displacements: Matrix,
        velocities: Matrix,
    ) -> Result<Self> {
        let s = SnapshotSet {
            theta,
            dt,
            ref_length,
            initial_positions,
            displacements,
            velocities,
            meta: SnapshotMeta::default(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Builds a set whose velocities are finite-difference estimates of the
    /// displacement history (second order, using the implicit zero column at
    /// `t = 0`). The result is flagged in its metadata.
    pub fn with_derived_velocities(
        theta: ParamCouple,
        dt: f64,
        ref_length: f64,
        initial_positions: Vector,
        displacements: Matrix,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        let (d, n) = displacements.shape();
        if n < 2 {
            return Err(Error::InsufficientData(
                "deriving velocities needs at least 2 snapshots".into(),
            ));
        }
        let col = |k: usize| -> Vector {
            if k == 0 {
                Vector::zeros(d)
            } else {
                displacements.column(k - 1).into_owned()
            }
        };
        let mut v = Matrix::zeros(d, n);
        for k in 1..=n {
            let est = if k < n {
                (col(k + 1) - col(k - 1)) / (2.0 * dt)
            } else {
                (col(k) * 3.0 - col(k - 1) * 4.0 + col(k - 2)) / (2.0 * dt)
            };
            v.set_column(k - 1, &est);
        }
        let mut s = SnapshotSet::new(theta, dt, ref_length, initial_positions, displacements, v)?;
        s.meta.velocities_derived = true;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if !(self.ref_length.is_finite() && self.ref_length > 0.0) {
            return Err(Error::invalid(
                "ref_length",
                format!("must be finite and > 0, got {}", self.ref_length),
            ));
        }
        let (d, n) = self.displacements.shape();
        if d == 0 || d % 3 != 0 {
            return Err(Error::shape("displacements", "3*n_nodes rows (n_nodes >= 1)", d));
        }
        if n == 0 {
            return Err(Error::shape("displacements", "at least one snapshot column", 0));
        }
        if self.velocities.shape() != (d, n) {
            return Err(Error::shape(
                "velocities",
                format!("{d}x{n}"),
                format!("{}x{}", self.velocities.nrows(), self.velocities.ncols()),
            ));
        }
        if self.initial_positions.len() != d {
            return Err(Error::shape("initial_positions", d, self.initial_positions.len()));
        }
        for (i, x) in self.initial_positions.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    field: "initial_positions",
                    row: i,
                    col: 0,
                });
            }
        }
        ensure_finite(&self.displacements, "displacements")?;
        ensure_finite(&self.velocities, "velocities")?;
        Ok(())
    }

    /// Loose check that `(u^{n+1} − u^n)/dt` follows `v^n`.
    pub fn kinematic_warnings(&self) -> Vec<SnapshotWarning> {
        let n = self.n_snapshots();
        let scale = self
            .velocities
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        let mut out = Vec::new();
        if scale == 0.0 {
            return out;
        }
        for k in 0..n.saturating_sub(1) {
            let fd = (self.displacements.column(k + 1) - self.displacements.column(k)) / self.dt;
            let rel = (fd - self.velocities.column(k)).norm() / scale;
            if rel > KINEMATIC_TOLERANCE {
                out.push(SnapshotWarning::KinematicMismatch {
                    column: k,
                    relative: rel,
                });
            }
        }
        out
    }

    pub fn theta(&self) -> ParamCouple {
        self.theta
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn ref_length(&self) -> f64 {
        self.ref_length
    }

    pub fn initial_positions(&self) -> &Vector {
        &self.initial_positions
    }

    pub fn displacements(&self) -> &Matrix {
        &self.displacements
    }

    pub fn velocities(&self) -> &Matrix {
        &self.velocities
    }

    pub fn meta(&self) -> &SnapshotMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut SnapshotMeta {
        &mut self.meta
    }

    pub fn with_meta(mut self, meta: SnapshotMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Number of coordinates `d = 3·n_nodes`.
    pub fn dim(&self) -> usize {
        self.displacements.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.dim() / 3
    }

    pub fn n_snapshots(&self) -> usize {
        self.displacements.ncols()
    }

    /// Snapshot times `n·dt`, `n = 1..=N`.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.n_snapshots()).map(|n| n as f64 * self.dt).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.n_snapshots() as f64 * self.dt
    }

    /// Node positions `X + u^n` for snapshot column `col` (0-based, time `(col+1)·dt`).
    pub fn positions(&self, col: usize) -> Vector {
        &self.initial_positions + self.displacements.column(col)
    }

    /// The first `n` snapshots.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_snapshots() {
            return Err(Error::invalid(
                "prefix length",
                format!("must be in 1..={}, got {n}", self.n_snapshots()),
            ));
        }
        let mut s = self.clone();
        s.displacements = self.displacements.columns(0, n).into_owned();
        s.velocities = self.velocities.columns(0, n).into_owned();
        Ok(s)
    }

    /// Replaces the parameter couple (used when a trajectory is synthesized
    /// for a query point).
    pub fn with_theta(mut self, theta: ParamCouple) -> Result<Self> {
        theta.validate()?;
        self.theta = theta;
        Ok(self)
    }

    /// Payload reals stored by the binary snapshot format.
    pub fn payload_reals(&self) -> usize {
        self.dim() + 2 * self.dim() * self.n_snapshots()
    }
}

/// Persistent form of a trained reduced model: modes, reduced operator and
/// reduced initial state, plus what is needed to rebuild node positions.
#[derive(Debug, Clone, PartialEq)]
pub struct RomRecord {
    pub theta: ParamCouple,
    pub modes: Matrix,
    pub a_mu: Matrix,
    pub mu: f64,
    pub eps: f64,
    pub dt: f64,
    pub alpha0: Vector,
    pub beta0: Vector,
    pub initial_positions: Vector,
    pub ref_length: f64,
}

/// Orthonormality tolerance for stored modes.
pub const MODE_ORTHONORMALITY_TOLERANCE: f64 = 1e-8;

impl RomRecord {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn dim(&self) -> usize {
        self.modes.nrows()
    }

    /// `d·K + K² + 2K + d`.
    pub fn payload_reals(&self) -> usize {
        let (d, k) = (self.dim(), self.rank());
        d * k + k * k + 2 * k + d
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        let (d, k) = self.modes.shape();
        if k == 0 {
            return Err(Error::invalid("modes", "at least one mode is required"));
        }
        if d == 0 || d % 3 != 0 {
            return Err(Error::shape("modes", "3*n_nodes rows", d));
        }
        if self.a_mu.shape() != (k, k) {
            return Err(Error::shape(
                "a_mu",
                format!("{k}x{k}"),
                format!("{}x{}", self.a_mu.nrows(), self.a_mu.ncols()),
            ));
        }
        if self.alpha0.len() != k {
            return Err(Error::shape("alpha0", k, self.alpha0.len()));
        }
        if self.beta0.len() != k {
            return Err(Error::shape("beta0", k, self.beta0.len()));
        }
        if self.initial_positions.len() != d {
            return Err(Error::shape("initial_positions", d, self.initial_positions.len()));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::invalid("mu", format!("must be finite and >= 0, got {}", self.mu)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid("eps", format!("must be finite and > 0, got {}", self.eps)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if !(self.ref_length.is_finite() && self.ref_length > 0.0) {
            return Err(Error::invalid("ref_length", "must be finite and > 0"));
        }
        ensure_finite(&self.modes, "modes")?;
        ensure_finite(&self.a_mu, "a_mu")?;
        for (field, v) in [
            ("alpha0", &self.alpha0),
            ("beta0", &self.beta0),
            ("initial_positions", &self.initial_positions),
        ] {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { field, row: i, col: 0 });
            }
        }
        let defect = (self.modes.transpose() * &self.modes - Matrix::identity(k, k)).amax();
        if defect > MODE_ORTHONORMALITY_TOLERANCE {
            return Err(Error::invalid(
                "modes",
                format!("columns are not orthonormal (max |QᵀQ − I| = {defect:e})"),
            ));
        }
        Ok(())
    }
}
