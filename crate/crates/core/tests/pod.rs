mod common;

use common::*;
use proptest::prelude::*;
use romkit_core::numerics::{thin_svd, Matrix, Vector};
use romkit_core::pod::{ric_curve, ric_from_singular_values, truncation_rank, PodBasis};
use romkit_core::{ParamCouple, SnapshotSet};

fn set_from(u: Matrix) -> SnapshotSet {
    let (d, n) = u.shape();
    SnapshotSet::new(ParamCouple { ca: 1.0, ratio: 1.0 }, 0.04, 1.0, Vector::zeros(d), u, Matrix::zeros(d, n)).unwrap()
}

/// Snapshot matrix with geometrically decaying singular values.
fn decaying(seed: u64, d: usize, n: usize, ratio: f64) -> Matrix {
    let mut r = rng(seed);
    let k = d.min(n);
    let u = orthonormal(&mut r, d, k);
    let v = orthonormal(&mut r, n, k);
    let s = Vector::from_fn(k, |i, _| ratio.powi(i as i32));
    &u * Matrix::from_diagonal(&s) * v.transpose()
}

#[test]
fn projection_error_equals_ric_and_respects_eps() {
    for seed in 0..10 {
        let s = set_from(decaying(seed, 30, 18, 0.3));
        let b = PodBasis::build(&s, 1e-6, 20).unwrap();
        let err = b.relative_projection_error(s.displacements()).unwrap();
        assert!(err <= 1e-6 + 1e-12, "seed {seed}: {err}");
        assert!((err - b.ric().unwrap()).abs() < 1e-12);
        let k = b.rank();
        if k > 1 {
            let ric = ric_from_singular_values(b.singular_values());
            assert!(ric[k - 1] > 1e-6);
        }
    }
}

#[test]
fn modes_are_left_singular_vectors() {
    let u = decaying(3, 12, 9, 0.5);
    let s = set_from(u.clone());
    let b = PodBasis::build(&s, 1e-3, 20).unwrap();
    let svd = thin_svd(&u).unwrap();
    for j in 0..b.rank() {
        let dot = b.modes().column(j).dot(&svd.u.column(j)).abs();
        assert!((dot - 1.0).abs() < 1e-10);
    }
}

#[test]
fn displacement_snapshots_exclude_the_zero_state() {
    // Rank-one history u^n = n·φ: one mode captures everything.
    let phi = Vector::from_fn(9, |i, _| (i as f64).sin());
    let u = Matrix::from_fn(9, 6, |i, j| (j + 1) as f64 * phi[i]);
    let b = PodBasis::build(&set_from(u), 1e-12, 20).unwrap();
    assert_eq!(b.rank(), 1);
    let q = b.modes().column(0);
    assert!((q.dot(&phi).abs() - phi.norm()).abs() < 1e-12);
}

#[test]
fn ric_curve_is_nonincreasing_and_ends_at_zero() {
    let s = set_from(decaying(7, 21, 10, 0.6));
    let curve = ric_curve(&s).unwrap();
    assert_eq!(curve.len(), 10);
    assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1));
    assert!(curve.last().unwrap().1.abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn truncation_is_minimal(sigma in prop::collection::vec(1e-8f64..10.0, 1..15), eps in 1e-9f64..0.5) {
        let mut sigma = sigma;
        sigma.sort_by(|a, b| b.total_cmp(a));
        let k = truncation_rank(&sigma, eps);
        let ric = ric_from_singular_values(&sigma);
        prop_assert!(ric[k] <= eps);
        if k > 1 {
            prop_assert!(ric[k - 1] > eps);
        }
    }

    #[test]
    fn random_snapshots_obey_bound(nodes in 1usize..9, n in 2usize..15, seed in any::<u64>()) {
        let mut r = rng(seed);
        let u = gaussian(&mut r, 3 * nodes, n);
        let s = set_from(u);
        let b = PodBasis::build(&s, 1e-6, 20).unwrap();
        let err = b.relative_projection_error(s.displacements()).unwrap();
        prop_assert!(err <= 1e-6 + 1e-12);
        let qtq = b.modes().transpose() * b.modes();
        prop_assert!((qtq - Matrix::identity(b.rank(), b.rank())).amax() < 1e-12);
    }
}
