#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use romkit_core::numerics::{Matrix, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    gaussian(rng, rows, cols).qr().q()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Real matrix with the given eigenvalues (conjugate pairs as 2x2 blocks)
/// under a random well-conditioned similarity.
pub fn with_spectrum(rng: &mut ChaCha8Rng, real: &[f64], pairs: &[(f64, f64)]) -> Matrix {
    let k = real.len() + 2 * pairs.len();
    let mut b = Matrix::zeros(k, k);
    for (i, r) in real.iter().enumerate() {
        b[(i, i)] = *r;
    }
    for (j, (re, im)) in pairs.iter().enumerate() {
        let i = real.len() + 2 * j;
        b[(i, i)] = *re;
        b[(i + 1, i + 1)] = *re;
        b[(i, i + 1)] = *im;
        b[(i + 1, i)] = -*im;
    }
    let t = Matrix::identity(k, k) + gaussian(rng, k, k) * (0.3 / (k as f64).sqrt());
    let t_inv = t.clone().try_inverse().expect("similarity invertible");
    &t * b * t_inv
}

pub fn rel_fro(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
