//! Dense real linear algebra used throughout the crate.
//!
//! Factorizations come from `nalgebra`; this module adds the pieces the
//! reduced-order pipeline needs on top of them: a thin SVD that goes through
//! QR for tall snapshot matrices, the QR route to the right pseudo-inverse of
//! a wide full-row-rank matrix, a Padé scaling-and-squaring matrix exponential
//! and eigenvalue spectra with conjugate pairing.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

pub use nalgebra::Complex;

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type Complex64 = Complex<f64>;

/// Relative threshold below which a triangular pivot counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Thin singular value decomposition `M = U diag(σ) Vᵀ` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank_count(&self) -> usize {
        self.singular_values.len()
    }

    /// `σ_max / σ_min`, infinite when the smallest value is zero.
    pub fn condition_number(&self) -> f64 {
        condition_from_singular_values(self.singular_values.as_slice())
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

pub fn condition_from_singular_values(sigma: &[f64]) -> f64 {
    let max = sigma.iter().copied().fold(0.0_f64, f64::max);
    let min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

pub(crate) fn ensure_finite(m: &Matrix, field: &'static str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite {
                    field,
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(())
}

fn ensure_nonempty(m: &Matrix, context: &'static str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::shape(context, "at least 1x1", format!("{}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Thin SVD with singular values sorted nonincreasing.
///
/// Tall inputs are first reduced by a Householder QR so the iterative part
/// only ever sees a `cols × cols` triangle, which matters for snapshot
/// matrices with thousands of rows and a few hundred columns.
pub fn thin_svd(m: &Matrix) -> Result<SvdResult> {
    ensure_nonempty(m, "thin_svd")?;
    ensure_finite(m, "matrix")?;
    if m.nrows() < m.ncols() {
        let t = thin_svd(&m.transpose())?;
        return Ok(SvdResult {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }

    let (q, core) = if m.nrows() > m.ncols() {
        let qr = m.clone().qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, m.clone())
    };

    let svd = SVD::try_new_unordered(core, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD iteration did not converge".into()))?;
    let (u_core, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numeric("SVD factors were not produced".into())),
    };

    let r = svd.singular_values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let singular_values = Vector::from_iterator(r, order.iter().map(|&k| svd.singular_values[k]));
    let u_sorted = Matrix::from_fn(u_core.nrows(), r, |i, j| u_core[(i, order[j])]);
    let v = Matrix::from_fn(v_t.ncols(), r, |i, j| v_t[(order[j], i)]);
    let u = match q {
        Some(q) => q * u_sorted,
        None => u_sorted,
    };
    Ok(SvdResult {
        u,
        singular_values,
        v,
    })
}

/// Right pseudo-inverse `X† = Xᵀ(XXᵀ)⁻¹` of a wide full-row-rank matrix.
///
/// Evaluated as `Q̂ (Rᵀ)⁻¹` from the thin QR factorization `Xᵀ = Q̂ R`, which
/// never forms the squared-condition Gram matrix `XXᵀ`.
pub fn qr_pseudo_inverse(x: &Matrix) -> Result<Matrix> {
    ensure_nonempty(x, "qr_pseudo_inverse")?;
    ensure_finite(x, "matrix")?;
    let (k, m) = x.shape();
    if k > m {
        return Err(Error::shape(
            "qr_pseudo_inverse",
            "rows <= cols (wide matrix)",
            format!("{k}x{m}"),
        ));
    }
    let qr = x.transpose().qr();
    let r = qr.r();
    let scale = r.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    for i in 0..k {
        let pivot = r[(i, i)].abs();
        if !(pivot > RANK_TOLERANCE * scale) {
            return Err(Error::RankDeficient {
                row: i,
                pivot,
                hint: "",
            });
        }
    }
    let q = qr.q();
    let zt = r
        .solve_upper_triangular(&q.transpose())
        .ok_or_else(|| Error::Singular("triangular factor is singular".into()))?;
    Ok(zt.transpose())
}

/// Solves `A X = B` for symmetric positive-definite `A`.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.nrows() != b.nrows() {
        return Err(Error::shape(
            "solve_spd",
            format!("square A with {} rows", b.nrows()),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not numerically positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    if m.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(thin_svd(m)?.singular_values[0])
}

// Padé coefficients and ℓ1-norm bounds from Higham (2005), "The scaling and
// squaring method for the matrix exponential revisited".
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(f64, usize); 4] = [
    (1.495585217958292e-2, 3),
    (2.53939833006323e-1, 5),
    (9.504178996162932e-1, 7),
    (2.097847961257068e0, 9),
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(M t)` by Padé scaling and squaring.
pub fn matrix_exponential(m: &Matrix, t: f64) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::shape(
            "matrix_exponential",
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    if !t.is_finite() {
        return Err(Error::invalid("t", "time must be finite"));
    }
    ensure_finite(m, "matrix")?;
    let n = m.nrows();
    let a = m * t;
    let norm = one_norm(&a);
    let id = Matrix::identity(n, n);

    for (theta, degree) in THETA {
        if norm <= theta {
            let (u, v) = pade_low(&a, &id, degree);
            return pade_quotient(&u, &v);
        }
    }

    let squarings = if norm > THETA13 {
        libm::ceil(libm::log2(norm / THETA13)) as i32
    } else {
        0
    };
    let a = a * libm::exp2(-(squarings as f64));
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let mut r = pade_quotient(&u, &v)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(a: &Matrix, id: &Matrix, degree: usize) -> (Matrix, Matrix) {
    let b: &[f64] = match degree {
        3 => &PADE3,
        5 => &PADE5,
        7 => &PADE7,
        _ => &PADE9,
    };
    let a2 = a * a;
    let mut power = id.clone();
    let mut u_inner = id * b[1];
    let mut v = id * b[0];
    for k in 1..=degree / 2 {
        power = &power * &a2;
        u_inner += &power * b[2 * k + 1];
        v += &power * b[2 * k];
    }
    (a * u_inner, v)
}

fn pade_quotient(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::Numeric("Padé denominator is singular".into()))
}

/// `|z|` without relying on std float methods.
pub fn modulus(z: &Complex64) -> f64 {
    libm::hypot(z.re, z.im)
}

/// Eigenvalues of a real square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<Complex64>,
}

impl Spectrum {
    /// Sorts by decreasing real part, then decreasing imaginary part.
    pub fn new(mut eigenvalues: Vec<Complex64>) -> Self {
        eigenvalues.sort_by(|a, b| {
            b.re.partial_cmp(&a.re)
                .unwrap_or(Ordering::Equal)
                .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
        });
        Spectrum { eigenvalues }
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_abs(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(modulus)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(modulus).fold(0.0, f64::max)
    }

    pub fn sum(&self) -> Complex64 {
        self.eigenvalues.iter().fold(Complex64::new(0.0, 0.0), |acc, l| acc + l)
    }

    /// Largest distance from an eigenvalue to the nearest conjugate of another
    /// (or the same) eigenvalue. Zero for exactly paired spectra.
    pub fn conjugate_pairing_defect(&self) -> f64 {
        let mut used = alloc::vec![false; self.eigenvalues.len()];
        let mut worst = 0.0_f64;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            if used[i] {
                continue;
            }
            let target = l.conj();
            let (j, dist) = self
                .eigenvalues
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, m)| (j, modulus(&(m - target))))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
                .unwrap_or((i, 0.0));
            used[i] = true;
            used[j] = true;
            worst = worst.max(dist);
        }
        worst
    }
}

/// Eigenvalues of a square real matrix; symmetric input takes the
/// symmetric solver so the spectrum is exactly real.
pub fn eigenvalues(m: &Matrix) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(Error::shape(
            "eigenvalues",
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    ensure_nonempty(m, "eigenvalues")?;
    ensure_finite(m, "matrix")?;
    let n = m.nrows();
    if m == &m.transpose() {
        let sym = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
        return Ok(Spectrum::new(
            sym.eigenvalues.iter().map(|v| Complex64::new(*v, 0.0)).collect(),
        ));
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000 * n.max(1))
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    Ok(Spectrum::new(schur.complex_eigenvalues().iter().copied().collect()))
}

/// Symmetric part `(M + Mᵀ)/2`.
pub fn symmetric_part(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}
