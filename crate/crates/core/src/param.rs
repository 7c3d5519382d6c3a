//! Interpolation over the `(Ca, a/ℓ)` parameter plane.
//!
//! A query couple is located in the triangle formed by its nearest
//! nondegenerate triple of database samples; the vertex trajectories are
//! combined with the query's barycentric weights and a new reduced model is
//! trained on the combination.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::numerics::{Matrix, Vector};
use crate::rom::{train, TrainConfig, Training};
use crate::snapshot::{ParamCouple, SnapshotSet};
use crate::{Error, Result};

/// Relative area below which three parameter points count as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-12;
/// Weights below `-EXTRAPOLATION_TOLERANCE` flag a query outside its triangle.
pub const EXTRAPOLATION_TOLERANCE: f64 = 1e-12;

/// Training samples sharing node count, snapshot spacing and snapshot count.
#[derive(Debug, Clone)]
pub struct ParamDatabase {
    samples: Vec<SnapshotSet>,
    scale: [f64; 2],
}

impl ParamDatabase {
    pub fn new(samples: Vec<SnapshotSet>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData("parameter database is empty".into()));
        }
        let first = &samples[0];
        for (i, s) in samples.iter().enumerate().skip(1) {
            let mismatched = mismatched_fields(first, s);
            if !mismatched.is_empty() {
                return Err(Error::Incompatible(format!(
                    "sample {i} differs from sample 0 in {}",
                    mismatched.join(", ")
                )));
            }
        }
        for i in 0..samples.len() {
            for j in 0..i {
                if samples[i].theta() == samples[j].theta() {
                    let t = samples[i].theta();
                    return Err(Error::Incompatible(format!(
                        "samples {j} and {i} share the couple (ca={}, ratio={})",
                        t.ca, t.ratio
                    )));
                }
            }
        }
        Ok(ParamDatabase {
            samples,
            scale: [1.0, 1.0],
        })
    }

    /// Per-axis multipliers applied to `(ca, ratio)` before measuring distances.
    pub fn with_scale(mut self, ca: f64, ratio: f64) -> Result<Self> {
        if !(ca.is_finite() && ca > 0.0 && ratio.is_finite() && ratio > 0.0) {
            return Err(Error::invalid("scale", "axis scales must be finite and > 0"));
        }
        self.scale = [ca, ratio];
        Ok(self)
    }

    pub fn scale(&self) -> [f64; 2] {
        self.scale
    }

    pub fn samples(&self) -> &[SnapshotSet] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn thetas(&self) -> Vec<ParamCouple> {
        self.samples.iter().map(|s| s.theta()).collect()
    }

    fn scaled(&self, t: ParamCouple) -> [f64; 2] {
        [t.ca * self.scale[0], t.ratio * self.scale[1]]
    }
}

fn mismatched_fields(a: &SnapshotSet, b: &SnapshotSet) -> Vec<&'static str> {
    let mut out = Vec::new();
    if a.dim() != b.dim() {
        out.push("n_nodes");
    }
    if a.n_snapshots() != b.n_snapshots() {
        out.push("n_snapshots");
    }
    if (a.dt() - b.dt()).abs() > 1e-12 * a.dt() {
        out.push("dt");
    }
    if (a.ref_length() - b.ref_length()).abs() > 1e-12 * a.ref_length() {
        out.push("ref_length");
    }
    if a.meta().frame != b.meta().frame {
        out.push("frame");
    }
    out
}

fn signed_area2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
}

fn degenerate(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let diam2 = dist2(a, b).max(dist2(b, c)).max(dist2(a, c));
    (0.5 * signed_area2(a, b, c)).abs() <= COLLINEAR_TOLERANCE * diam2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub indices: [usize; 3],
    pub vertices: [ParamCouple; 3],
}

/// The two samples nearest to `theta` plus the next nearest one that does
/// not make the triple collinear. Ties are broken by sample index.
pub fn find_triangle(db: &ParamDatabase, theta: ParamCouple) -> Result<Triangle> {
    theta.validate()?;
    if db.len() < 3 {
        return Err(Error::NoTriangle);
    }
    let q = db.scaled(theta);
    let pts: Vec<[f64; 2]> = db.samples.iter().map(|s| db.scaled(s.theta())).collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| dist2(pts[i], q).total_cmp(&dist2(pts[j], q)).then(i.cmp(&j)));

    let (a, b) = (order[0], order[1]);
    let c = order[2..]
        .iter()
        .copied()
        .find(|&c| !degenerate(pts[a], pts[b], pts[c]))
        .ok_or(Error::NoTriangle)?;
    let thetas = db.thetas();
    Ok(Triangle {
        indices: [a, b, c],
        vertices: [thetas[a], thetas[b], thetas[c]],
    })
}

/// `λ` with `Σλᵢ = 1` and `Σλᵢθᵢ = θ`. Weights may be negative when `theta`
/// lies outside the triangle.
pub fn barycentric_coords(vertices: &[ParamCouple; 3], theta: ParamCouple) -> Result<[f64; 3]> {
    for (i, v) in vertices.iter().enumerate() {
        if *v == theta {
            let mut l = [0.0; 3];
            l[i] = 1.0;
            return Ok(l);
        }
    }
    let p = vertices.map(|v| [v.ca, v.ratio]);
    if degenerate(p[0], p[1], p[2]) {
        return Err(Error::DegenerateTriangle);
    }
    let (e1, e2) = (
        [p[1][0] - p[0][0], p[1][1] - p[0][1]],
        [p[2][0] - p[0][0], p[2][1] - p[0][1]],
    );
    let r = [theta.ca - p[0][0], theta.ratio - p[0][1]];
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    let l2 = (r[0] * e2[1] - r[1] * e2[0]) / det;
    let l3 = (e1[0] * r[1] - e1[1] * r[0]) / det;
    Ok([1.0 - l2 - l3, l2, l3])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricQuery {
    pub theta: ParamCouple,
    pub triangle: Triangle,
    pub lambdas: [f64; 3],
    /// Set when some weight is negative, i.e. the query lies outside its triangle.
    pub extrapolated: bool,
}

pub fn locate(db: &ParamDatabase, theta: ParamCouple) -> Result<BarycentricQuery> {
    let triangle = find_triangle(db, theta)?;
    let lambdas = barycentric_coords(&triangle.vertices, theta)?;
    Ok(BarycentricQuery {
        theta,
        triangle,
        lambdas,
        extrapolated: lambdas.iter().any(|l| *l < -EXTRAPOLATION_TOLERANCE),
    })
}

fn combine(mats: [&Matrix; 3], l: [f64; 3]) -> Matrix {
    mats[0] * l[0] + mats[1] * l[1] + mats[2] * l[2]
}

fn combine_vec(vs: [&Vector; 3], l: [f64; 3]) -> Vector {
    vs[0] * l[0] + vs[1] * l[1] + vs[2] * l[2]
}

/// Affine combination of the vertex trajectories (displacements, velocities
/// and initial positions) with the query's weights. At a database couple the
/// stored sample is returned unchanged.
pub fn predict_trajectory(
    db: &ParamDatabase,
    theta: ParamCouple,
) -> Result<(SnapshotSet, BarycentricQuery)> {
    let query = locate(db, theta)?;
    if let Some(i) = query.lambdas.iter().position(|l| *l == 1.0) {
        if query.lambdas.iter().filter(|l| **l == 0.0).count() == 2 {
            let s = db.samples[query.triangle.indices[i]].clone();
            return Ok((s, query));
        }
    }
    let [a, b, c] = query.triangle.indices.map(|i| &db.samples[i]);
    for (i, other) in [b, c].iter().enumerate() {
        let m = mismatched_fields(a, other);
        if !m.is_empty() {
            return Err(Error::Incompatible(format!(
                "vertex {} differs from vertex 0 in {}",
                i + 1,
                m.join(", ")
            )));
        }
    }
    let l = query.lambdas;
    let mut s = SnapshotSet::new(
        theta,
        a.dt(),
        a.ref_length(),
        combine_vec(
            [a.initial_positions(), b.initial_positions(), c.initial_positions()],
            l,
        ),
        combine([a.displacements(), b.displacements(), c.displacements()], l),
        combine([a.velocities(), b.velocities(), c.velocities()], l),
    )?;
    let meta = s.meta_mut();
    meta.frame = a.meta().frame;
    meta.velocities_derived = [a, b, c].iter().any(|v| v.meta().velocities_derived);
    meta.set("interpolated", "true");
    meta.set("extrapolated", query.extrapolated);
    Ok((s, query))
}

#[derive(Debug, Clone)]
pub struct InterpolatedRom {
    pub query: BarycentricQuery,
    pub predicted: SnapshotSet,
    pub training: Training,
}

/// Predicts the trajectory at `theta` and trains a reduced model on it.
pub fn rom_at(db: &ParamDatabase, theta: ParamCouple, cfg: &TrainConfig) -> Result<InterpolatedRom> {
    let (predicted, query) = predict_trajectory(db, theta)?;
    let training = train(&predicted, cfg)?;
    Ok(InterpolatedRom {
        query,
        predicted,
        training,
    })
}

/// Linear-in-time resampling onto `t = k·dt_new`, `k = 1..=n_new`. The state
/// at `t = 0` is `u = 0` with velocity back-extrapolated from the first step.
pub fn resample_linear(s: &SnapshotSet, dt_new: f64, n_new: usize) -> Result<SnapshotSet> {
    if !(dt_new.is_finite() && dt_new > 0.0) {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    if n_new == 0 {
        return Err(Error::invalid("n_snapshots", "must be at least 1"));
    }
    let horizon = s.horizon();
    let t_last = n_new as f64 * dt_new;
    if t_last > horizon * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "n_snapshots",
            format!("resampled horizon {t_last} exceeds stored horizon {horizon}"),
        ));
    }
    let d = s.dim();
    let dt = s.dt();
    let n = s.n_snapshots();
    let u0 = Vector::zeros(d);
    let v0 = s.displacements().column(0) * (2.0 / dt) - s.velocities().column(0);
    let u_at = |k: usize| -> Vector {
        if k == 0 {
            u0.clone()
        } else {
            s.displacements().column(k - 1).into_owned()
        }
    };
    let v_at = |k: usize| -> Vector {
        if k == 0 {
            v0.clone()
        } else {
            s.velocities().column(k - 1).into_owned()
        }
    };
    let mut u = Matrix::zeros(d, n_new);
    let mut v = Matrix::zeros(d, n_new);
    for k in 1..=n_new {
        let mut pos = (k as f64 * dt_new / dt).min(n as f64);
        let nearest = libm::round(pos);
        if (pos - nearest).abs() <= 1e-9 {
            pos = nearest;
        }
        let lo = (libm::floor(pos) as usize).min(n);
        let frac = pos - lo as f64;
        if frac == 0.0 || lo == n {
            u.set_column(k - 1, &u_at(lo));
            v.set_column(k - 1, &v_at(lo));
        } else {
            u.set_column(k - 1, &(u_at(lo) * (1.0 - frac) + u_at(lo + 1) * frac));
            v.set_column(k - 1, &(v_at(lo) * (1.0 - frac) + v_at(lo + 1) * frac));
        }
    }
    let out = SnapshotSet::new(s.theta(), dt_new, s.ref_length(), s.initial_positions().clone(), u, v)?;
    let mut meta = s.meta().clone();
    meta.set("resampled_from_dt", s.dt());
    Ok(out.with_meta(meta))
}

/// Short text form of a query for logs and manifests.
pub fn describe_query(q: &BarycentricQuery) -> String {
    let v = q.triangle.vertices;
    format!(
        "theta=({}, {}) vertices=[({}, {}), ({}, {}), ({}, {})] lambda=[{}, {}, {}]{}",
        q.theta.ca,
        q.theta.ratio,
        v[0].ca,
        v[0].ratio,
        v[1].ca,
        v[1].ratio,
        v[2].ca,
        v[2].ratio,
        q.lambdas[0],
        q.lambdas[1],
        q.lambdas[2],
        if q.extrapolated { " (extrapolated)" } else { "" }
    )
}
