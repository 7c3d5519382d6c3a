//! Shape comparison between full and reduced trajectories.
//!
//! Node coordinates are interleaved in field vectors: node `i` occupies
//! entries `3i, 3i+1, 3i+2`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{Matrix, Vector};
use crate::rom::{train, TrainConfig};
use crate::snapshot::SnapshotSet;
use crate::{Error, Result};

/// Default threshold for the velocity-stationarity steady-state proxy.
pub const STEADY_STATE_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud", "must contain at least one point"));
        }
        for (i, p) in points.iter().enumerate() {
            if let Some(c) = p.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    field: "point cloud",
                    row: i,
                    col: c,
                });
            }
        }
        Ok(PointCloud { points })
    }

    /// Reads an interleaved coordinate vector of length `3·n`.
    pub fn from_coordinates(coords: &[f64]) -> Result<Self> {
        if !coords.len().is_multiple_of(3) {
            return Err(Error::shape("point cloud", "multiple of 3 coordinates", coords.len()));
        }
        PointCloud::new(coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn from_vector(v: &Vector) -> Result<Self> {
        PointCloud::from_coordinates(v.as_slice())
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, shift: [f64; 3]) -> Self {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
                .collect(),
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Uniform bucket grid over a point set for exact nearest-neighbor queries.
struct Grid<'a> {
    points: &'a [[f64; 3]],
    origin: [f64; 3],
    h: f64,
    dims: [i64; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [[f64; 3]]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let ext = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let max_ext = ext[0].max(ext[1]).max(ext[2]);
        let n = points.len();
        let mut h = if max_ext > 0.0 {
            let floor = max_ext * 1e-3;
            let vol: f64 = ext.iter().map(|e| e.max(floor)).product();
            libm::cbrt(vol / n as f64)
        } else {
            1.0
        };
        let dims_for = |h: f64| -> [i64; 3] {
            let mut d = [1i64; 3];
            for a in 0..3 {
                d[a] = (libm::floor(ext[a] / h) as i64 + 1).max(1);
            }
            d
        };
        let mut dims = dims_for(h);
        while (dims[0] * dims[1] * dims[2]) as usize > 2 * n + 8 {
            h *= 1.5;
            dims = dims_for(h);
        }

        let cells = (dims[0] * dims[1] * dims[2]) as usize;
        let mut counts = vec![0usize; cells + 1];
        let ids: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = Self::cell_of(lo, h, dims, p);
                Self::flat(dims, c[0], c[1], c[2])
            })
            .collect();
        for &id in &ids {
            counts[id + 1] += 1;
        }
        for i in 0..cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0usize; n];
        for (i, &id) in ids.iter().enumerate() {
            order[fill[id]] = i;
            fill[id] += 1;
        }
        Grid {
            points,
            origin: lo,
            h,
            dims,
            starts: counts,
            order,
        }
    }

    fn cell_of(origin: [f64; 3], h: f64, dims: [i64; 3], p: &[f64; 3]) -> [i64; 3] {
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = (libm::floor((p[a] - origin[a]) / h) as i64).clamp(0, dims[a] - 1);
        }
        c
    }

    fn raw_cell(&self, p: &[f64; 3]) -> [i64; 3] {
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = libm::floor((p[a] - self.origin[a]) / self.h) as i64;
        }
        c
    }

    fn flat(dims: [i64; 3], i: i64, j: i64, k: i64) -> usize {
        ((i * dims[1] + j) * dims[2] + k) as usize
    }

    /// Squared distance from `q` to its nearest grid point.
    fn nearest2(&self, q: &[f64; 3]) -> f64 {
        let c = self.raw_cell(q);
        let mut best = f64::INFINITY;
        let r_max = (0..3)
            .map(|a| c[a].abs().max((c[a] - (self.dims[a] - 1)).abs()))
            .max()
            .unwrap_or(0);
        let mut r = 0i64;
        loop {
            let lo = [
                (c[0] - r).max(0),
                (c[1] - r).max(0),
                (c[2] - r).max(0),
            ];
            let hi = [
                (c[0] + r).min(self.dims[0] - 1),
                (c[1] + r).min(self.dims[1] - 1),
                (c[2] + r).min(self.dims[2] - 1),
            ];
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        let cheb = (i - c[0]).abs().max((j - c[1]).abs()).max((k - c[2]).abs());
                        if cheb != r {
                            continue;
                        }
                        let id = Self::flat(self.dims, i, j, k);
                        for &p in &self.order[self.starts[id]..self.starts[id + 1]] {
                            best = best.min(dist2(q, &self.points[p]));
                        }
                    }
                }
            }
            let reach = r as f64 * self.h;
            if (best.is_finite() && best <= reach * reach) || r >= r_max {
                return best;
            }
            r += 1;
        }
    }
}

/// `mean_{x∈a} min_{y∈b} ‖x − y‖`.
pub fn directed_mean_distance(a: &PointCloud, b: &PointCloud) -> f64 {
    let grid = Grid::new(&b.points);
    let total: f64 = a.points.iter().map(|p| libm::sqrt(grid.nearest2(p))).sum();
    total / a.len() as f64
}

/// Modified Hausdorff distance: the larger of the two directed mean
/// nearest-neighbor distances.
pub fn modified_hausdorff(a: &PointCloud, b: &PointCloud) -> f64 {
    directed_mean_distance(a, b).max(directed_mean_distance(b, a))
}

/// Root-mean-square node-to-node distance between equally indexed clouds.
pub fn indexed_rms(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || !a.len().is_multiple_of(3) || a.is_empty() {
        return Err(Error::shape("indexed_rms", a.len(), b.len()));
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(libm::sqrt(s / (a.len() / 3) as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeErrorSeries {
    pub times: Vec<f64>,
    /// `MHD / ℓ` per time.
    pub eps_shape: Vec<f64>,
    /// Indexed RMS node distance / `ℓ` per time.
    pub rms: Vec<f64>,
}

impl ShapeErrorSeries {
    pub fn max(&self) -> f64 {
        self.eps_shape.iter().copied().fold(0.0, f64::max)
    }

    pub fn last(&self) -> Option<f64> {
        self.eps_shape.last().copied()
    }
}

/// `ε_Shape` between the stored snapshots and reduced positions evaluated at
/// the snapshot times (one column per snapshot).
pub fn shape_error_series(
    fom: &SnapshotSet,
    rom_positions: &Matrix,
    rom_times: &[f64],
    ref_length: f64,
) -> Result<ShapeErrorSeries> {
    if !(ref_length.is_finite() && ref_length > 0.0) {
        return Err(Error::invalid("ref_length", "must be finite and > 0"));
    }
    if rom_positions.nrows() != fom.dim() {
        return Err(Error::shape("shape_error_series rows", fom.dim(), rom_positions.nrows()));
    }
    if rom_positions.ncols() != rom_times.len() {
        return Err(Error::shape("shape_error_series columns", rom_times.len(), rom_positions.ncols()));
    }
    let fom_times = fom.times();
    if rom_times.len() != fom_times.len() {
        return Err(Error::Incompatible(format!(
            "time grids differ: {} FOM snapshots vs {} ROM samples",
            fom_times.len(),
            rom_times.len()
        )));
    }
    let tol = 1e-9 * fom.dt();
    if let Some(i) = (0..fom_times.len()).find(|&i| (fom_times[i] - rom_times[i]).abs() > tol) {
        return Err(Error::Incompatible(format!(
            "time grids differ at sample {i}: {} vs {}",
            fom_times[i], rom_times[i]
        )));
    }
    let mut eps_shape = Vec::with_capacity(rom_times.len());
    let mut rms = Vec::with_capacity(rom_times.len());
    for (i, col) in rom_positions.column_iter().enumerate() {
        let f = fom.positions(i);
        let r: Vec<f64> = col.iter().copied().collect();
        let a = PointCloud::from_coordinates(f.as_slice())?;
        let b = PointCloud::from_coordinates(&r)?;
        eps_shape.push(modified_hausdorff(&a, &b) / ref_length);
        rms.push(indexed_rms(f.as_slice(), &r)? / ref_length);
    }
    Ok(ShapeErrorSeries {
        times: rom_times.to_vec(),
        eps_shape,
        rms,
    })
}

/// Trains on `s` with `cfg`, propagates exactly at the snapshot times and
/// returns the shape error series.
pub fn training_error(s: &SnapshotSet, cfg: &TrainConfig) -> Result<ShapeErrorSeries> {
    let model = train(s, cfg)?.model;
    let times = s.times();
    let traj = model.propagate_exact(&times)?;
    let pos = model.reconstruct_positions(&traj)?;
    shape_error_series(s, &pos, &times, s.ref_length())
}

/// First snapshot index from which every later velocity change
/// `‖vⁿ⁺¹ − vⁿ‖ / ‖vⁿ‖` stays below `threshold`. This is a stationarity
/// proxy for reaching steady state, not an area-based criterion.
pub fn steady_state_onset(s: &SnapshotSet, threshold: f64) -> Option<usize> {
    let v = s.velocities();
    let n = v.ncols();
    if n < 2 {
        return None;
    }
    let mut onset = None;
    for k in (0..n - 1).rev() {
        let base = v.column(k).norm();
        let change = (v.column(k + 1) - v.column(k)).norm();
        let settled = if base == 0.0 { change == 0.0 } else { change / base < threshold };
        if settled {
            onset = Some(k);
        } else {
            break;
        }
    }
    onset
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningTimeRow {
    pub t_learn: f64,
    pub n_snapshots: usize,
    pub rank: usize,
    /// `ε_Shape` at the end of the full horizon.
    pub eps_shape_end: f64,
    /// Largest `ε_Shape` over the full horizon.
    pub eps_shape_max: f64,
}

/// Trains on each prefix `[0, T_L]` and measures the error over the whole
/// stored horizon.
pub fn learning_time_study(
    s: &SnapshotSet,
    t_learn_values: &[f64],
    cfg: &TrainConfig,
) -> Result<Vec<LearningTimeRow>> {
    let times = s.times();
    let mut rows = Vec::with_capacity(t_learn_values.len());
    for &t_learn in t_learn_values {
        if !(t_learn.is_finite() && t_learn > 0.0) {
            return Err(Error::invalid("t_learn", format!("must be finite and > 0, got {t_learn}")));
        }
        let n = libm::floor(t_learn / s.dt() + 1e-9) as usize;
        if n > s.n_snapshots() {
            return Err(Error::invalid(
                "t_learn",
                format!("{t_learn} exceeds the stored horizon {}", s.horizon()),
            ));
        }
        if n == 0 {
            return Err(Error::InsufficientData(format!(
                "t_learn = {t_learn} covers no snapshot"
            )));
        }
        let model = train(&s.prefix(n)?, cfg)?.model;
        let traj = model.propagate_exact(&times)?;
        let pos = model.reconstruct_positions(&traj)?;
        let series = shape_error_series(s, &pos, &times, s.ref_length())?;
        rows.push(LearningTimeRow {
            t_learn,
            n_snapshots: n,
            rank: model.rank(),
            eps_shape_end: series.last().unwrap_or(0.0),
            eps_shape_max: series.max(),
        });
    }
    Ok(rows)
}
