use std::path::Path;

use proptest::prelude::*;
use romkit::bundle::{read_bundle, write_bundle};
use romkit::io::*;
use romkit::RomError;
use romkit_core::pod::PodBasis;
use romkit_core::{Frame, Matrix, ParamCouple, RomRecord, SnapshotSet, Vector};

fn set(n_nodes: usize, n: usize, seed: u64) -> SnapshotSet {
    let d = 3 * n_nodes;
    let f = |i: usize, j: usize, k: u64| ((i * 31 + j * 17) as f64 + k as f64 * 0.37).sin();
    SnapshotSet::new(
        ParamCouple { ca: 0.17, ratio: 0.8 },
        0.04,
        1.5,
        Vector::from_fn(d, |i, _| f(i, 0, seed)),
        Matrix::from_fn(d, n, |i, j| f(i, j, seed + 1)),
        Matrix::from_fn(d, n, |i, j| f(i, j, seed + 2)),
    )
    .unwrap()
}

fn record(d: usize, k: usize) -> RomRecord {
    let g = Matrix::from_fn(d, k, |i, j| ((i + 2 * j) as f64).cos() + if i == j { 3.0 } else { 0.0 });
    RomRecord {
        theta: ParamCouple { ca: 0.2, ratio: 1.1 },
        modes: g.qr().q(),
        a_mu: Matrix::from_fn(k, k, |i, j| i as f64 - 2.0 * j as f64),
        mu: 1e-9,
        eps: 1e-6,
        dt: 0.04,
        alpha0: Vector::zeros(k),
        beta0: Vector::from_fn(k, |i, _| i as f64 + 0.5),
        initial_positions: Vector::from_fn(d, |i, _| i as f64),
        ref_length: 1.0,
    }
}

#[test]
fn minimal_zero_file() {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"ROMSNAP1");
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&1u64.to_le_bytes());
    bytes.extend_from_slice(&2u64.to_le_bytes());
    for v in [0.04f64, 0.1, 1.0, 1.0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend(std::iter::repeat_n(0u8, 8 * (3 + 6 + 6)));
    let s = decode_snapshot_set(&bytes, "mem").unwrap();
    assert_eq!((s.dim(), s.n_snapshots()), (3, 2));
    assert!(s.displacements().iter().all(|v| *v == 0.0));
    assert_eq!(encode_snapshot_set(&s), bytes);
}

#[test]
fn header_layout_is_fixed() {
    let s = set(2, 3, 0);
    let b = encode_snapshot_set(&s);
    assert_eq!(b.len(), SNAPSHOT_HEADER_BYTES + 8 * (6 + 2 * 18));
    assert_eq!(&b[..8], b"ROMSNAP1");
    assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 2);
    assert_eq!(u64::from_le_bytes(b[20..28].try_into().unwrap()), 3);
    assert_eq!(f64::from_le_bytes(b[28..36].try_into().unwrap()), 0.04);
    // First displacement value sits right after X.
    let off = SNAPSHOT_HEADER_BYTES + 8 * 6;
    assert_eq!(f64::from_le_bytes(b[off..off + 8].try_into().unwrap()), s.displacements()[(0, 0)]);
    let off = off + 8;
    assert_eq!(f64::from_le_bytes(b[off..off + 8].try_into().unwrap()), s.displacements()[(1, 0)]);
}

#[test]
fn metadata_trailer_round_trips() {
    let mut s = set(3, 4, 1);
    s.meta_mut().frame = Frame::Centroid;
    s.meta_mut().velocities_derived = true;
    s.meta_mut().set("generator", "capsule");
    s.meta_mut().set("seed", 9);
    let back = decode_snapshot_set(&encode_snapshot_set(&s), "mem").unwrap();
    assert_eq!(back.meta(), s.meta());
}

#[test]
fn writes_are_deterministic_and_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = set(5, 7, 2);
    let (a, b) = (dir.path().join("a.romsnap"), dir.path().join("b.romsnap"));
    write_snapshot_set(&s, &a).unwrap();
    write_snapshot_set(&s, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let back = read_snapshot_set(&a).unwrap();
    assert_eq!(back.displacements(), s.displacements());
    assert_eq!(back.velocities(), s.velocities());
    assert_eq!(back.initial_positions(), s.initial_positions());
}

#[test]
fn unwritable_location_is_an_io_error() {
    let err = write_snapshot_set(&set(1, 1, 0), Path::new("/nonexistent-dir/x.romsnap")).unwrap_err();
    assert!(matches!(err, RomError::Io { .. }));
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn csv_bundle_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = set(4, 6, 3);
    s.meta_mut().set("note", "x");
    let b = dir.path().join("bundle");
    write_bundle(&s, &b).unwrap();
    let back = read_bundle(&b).unwrap();
    assert_eq!(back.displacements(), s.displacements());
    assert_eq!(back.velocities(), s.velocities());
    assert_eq!(back.theta(), s.theta());
    assert_eq!(back.meta(), s.meta());
    // Dispatch by directory.
    assert_eq!(read_snapshot_set(&b).unwrap().dt(), 0.04);
}

#[test]
fn csv_bundle_without_velocities_derives_them() {
    let dir = tempfile::tempdir().unwrap();
    let b = dir.path().join("bundle");
    write_bundle(&set(2, 5, 4), &b).unwrap();
    std::fs::remove_file(b.join("V.csv")).unwrap();
    let s = read_bundle(&b).unwrap();
    assert!(s.meta().velocities_derived);
    std::fs::write(b.join("U.csv"), "1,2\n3,4\n").unwrap();
    assert!(matches!(read_bundle(&b), Err(RomError::Format { .. })));
}

#[test]
fn rom_record_round_trip_and_size() {
    let rec = record(3, 1);
    let bytes = encode_rom_record(&rec);
    assert_eq!(bytes.len(), RECORD_HEADER_BYTES + 8 * rec.payload_reals());
    assert_eq!(rec.payload_reals(), 3 + 1 + 2 + 3);
    assert_eq!(decode_rom_record(&bytes, "mem").unwrap(), rec);
    let big = record(30, 4);
    assert_eq!(decode_rom_record(&encode_rom_record(&big), "mem").unwrap(), big);
}

#[test]
fn rom_record_rejects_non_orthonormal_modes() {
    let mut rec = record(6, 2);
    rec.modes[(0, 0)] += 0.1;
    let err = decode_rom_record(&encode_rom_record(&rec), "mem").unwrap_err();
    assert!(matches!(err, RomError::Data { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn pod_basis_round_trip() {
    let s = set(4, 5, 5);
    let b = PodBasis::build(&s, 1e-6, 20).unwrap();
    let back = decode_pod_basis(&encode_pod_basis(&b), "mem").unwrap();
    assert_eq!(back.modes(), b.modes());
    assert_eq!(back.singular_values(), b.singular_values());
}

fn patch(bytes: &[u8], at: usize, with: &[u8]) -> Vec<u8> {
    let mut b = bytes.to_vec();
    b[at..at + with.len()].copy_from_slice(with);
    b
}

#[test]
fn every_single_field_corruption_is_rejected() {
    let s = set(3, 4, 6);
    let good = encode_snapshot_set(&s);
    let d = s.dim();
    let mut bad = Vec::new();
    for i in 0..8 {
        bad.push(patch(&good, i, &[good[i] ^ 0x20]));
    }
    bad.push(patch(&good, 8, &2u32.to_le_bytes()));
    for v in [0u64, 2, 4, u64::MAX, 1 << 61] {
        bad.push(patch(&good, 12, &v.to_le_bytes()));
    }
    for v in [0u64, 3, 5, u64::MAX] {
        bad.push(patch(&good, 20, &v.to_le_bytes()));
    }
    for field in 0..4 {
        for v in [f64::NAN, f64::INFINITY, -1.0, 0.0] {
            bad.push(patch(&good, 28 + 8 * field, &v.to_le_bytes()));
        }
    }
    let payload = d + 2 * d * 4;
    for k in [0, d / 2, d, d + 5, payload - 1] {
        bad.push(patch(&good, SNAPSHOT_HEADER_BYTES + 8 * k, &f64::NAN.to_le_bytes()));
    }
    bad.push(good[..good.len() - 1].to_vec());
    let mut extra = good.clone();
    extra.extend_from_slice(b"junk");
    bad.push(extra);
    for (i, b) in bad.iter().enumerate() {
        assert!(decode_snapshot_set(b, "mem").is_err(), "corruption {i} accepted");
    }
}

#[test]
fn nan_reports_its_position() {
    let s = set(2, 3, 7);
    let good = encode_snapshot_set(&s);
    let k = 6 + 6 * 2 + 4;
    let b = patch(&good, SNAPSHOT_HEADER_BYTES + 8 * k, &f64::NAN.to_le_bytes());
    match decode_snapshot_set(&b, "mem") {
        Err(RomError::Data { source: romkit_core::Error::NonFinite { field, row, col }, .. }) => {
            assert_eq!((field, row, col), ("displacements", 4, 2));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn record_corruptions_are_rejected() {
    let good = encode_rom_record(&record(6, 2));
    let bad = [
        patch(&good, 0, b"X"),
        patch(&good, 12, &3u64.to_le_bytes()),
        patch(&good, 20, &3u64.to_le_bytes()),
        patch(&good, 28, &f64::NAN.to_le_bytes()),
        patch(&good, RECORD_HEADER_BYTES, &f64::INFINITY.to_le_bytes()),
        good[..good.len() - 8].to_vec(),
    ];
    for (i, b) in bad.iter().enumerate() {
        assert!(decode_rom_record(b, "mem").is_err(), "corruption {i} accepted");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapshot_round_trip_is_lossless(
        n_nodes in 1usize..6,
        n in 1usize..6,
        vals in prop::collection::vec(-1e6f64..1e6, 3 * 5 * 11),
        dt in 1e-4f64..1.0,
        ca in 1e-3f64..2.0,
        ratio in 1e-2f64..3.0,
    ) {
        let d = 3 * n_nodes;
        let s = SnapshotSet::new(
            ParamCouple { ca, ratio },
            dt,
            1.0,
            Vector::from_fn(d, |i, _| vals[i]),
            Matrix::from_fn(d, n, |i, j| vals[d + i + d * j]),
            Matrix::from_fn(d, n, |i, j| vals[d * 6 + i + d * j] * 1e-3),
        ).unwrap();
        let back = decode_snapshot_set(&encode_snapshot_set(&s), "mem").unwrap();
        prop_assert_eq!(back.displacements(), s.displacements());
        prop_assert_eq!(back.velocities(), s.velocities());
        prop_assert_eq!(back.initial_positions(), s.initial_positions());
        prop_assert_eq!(back.theta(), s.theta());
        prop_assert_eq!(back.dt().to_bits(), dt.to_bits());
    }

    #[test]
    fn truncations_never_decode(cut in 0usize..400) {
        let good = encode_snapshot_set(&set(2, 3, 8));
        prop_assume!(cut < good.len());
        prop_assert!(decode_snapshot_set(&good[..cut], "mem").is_err());
    }
}
