use romkit::config::Scheme;
use romkit::io::{write_rom_record, write_snapshot_set};
use romkit::tasks::*;
use romkit::RomError;
use romkit_core::metrics::training_error;
use romkit_core::param::ParamDatabase;
use romkit_core::rom::{train, TrainConfig};
use romkit_core::synth::{generate_toy_capsule, ToyCapsule};
use romkit_core::{Matrix, ParamCouple, SnapshotSet, Vector};

fn small_toy(ca: f64, ratio: f64, nonlinearity: f64) -> SnapshotSet {
    generate_toy_capsule(&ToyCapsule {
        n_nodes: 162,
        n_snapshots: 60,
        theta: ParamCouple { ca, ratio },
        nonlinearity,
        substeps: 10,
        ..ToyCapsule::default()
    })
    .unwrap()
}

fn bare(d: usize, n: usize) -> SnapshotSet {
    SnapshotSet::new(
        ParamCouple { ca: 0.1, ratio: 1.0 },
        0.04,
        1.0,
        Vector::zeros(d),
        Matrix::from_fn(d, n, |i, j| ((i + 1) * (j + 1)) as f64 * 1e-3),
        Matrix::from_fn(d, n, |i, _| (i + 1) as f64 * 1e-3),
    )
    .unwrap()
}

#[test]
fn storage_sizes_follow_payload_counts() {
    let (d, n, k) = (7686u64, 250u64, 20u64);
    let snap = 8 * (d + 2 * d * n);
    let rec = 8 * (d * k + k * k + 2 * k + d);
    assert_eq!(record_payload_bytes(7686, 20), rec);
    let row = StorageRow {
        sample: "x".into(),
        snapshot_bytes: snap,
        rom_bytes: rec,
        rank: 20,
    };
    assert!((row.ratio() - 3_850_686.0 / 161_846.0).abs() < 1e-12);
    assert!(row.ratio() > 23.7 && row.ratio() < 23.9);
    assert_eq!(snapshot_payload_bytes(&bare(6, 4)), 8 * (6 + 2 * 6 * 4));
}

#[test]
fn storage_report_rank_sources() {
    let dir = tempfile::tempdir().unwrap();
    let s = small_toy(0.1, 0.8, 1.0);
    write_snapshot_set(&s, &dir.path().join("a.romsnap")).unwrap();
    write_snapshot_set(&s, &dir.path().join("b.romsnap")).unwrap();
    let cfg = TrainConfig::default();
    let trained = train(&s, &cfg).unwrap().model;
    write_rom_record(&trained.to_record(), &dir.path().join("a.romrec")).unwrap();

    let rows = storage_report(dir.path(), Some(7), &cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.rank == 7));
    assert_eq!(rows[0].sample, "a.romsnap");

    let rows = storage_report(dir.path(), None, &cfg).unwrap();
    assert_eq!(rows[0].rank, trained.rank());
    assert_eq!(rows[1].rank, trained.rank());
    assert_eq!(rows[0].rom_bytes, record_payload_bytes(s.dim(), trained.rank()));
    let on_disk = std::fs::metadata(dir.path().join("a.romrec")).unwrap().len();
    assert_eq!(on_disk, romkit::io::RECORD_HEADER_BYTES as u64 + rows[0].rom_bytes);

    let empty = tempfile::tempdir().unwrap();
    assert!(storage_report(empty.path(), None, &cfg).unwrap().is_empty());
}

#[test]
fn median_of_odd_and_even() {
    assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
}

#[test]
fn bench_uses_recorded_or_regenerated_fom_time() {
    let s = small_toy(0.1, 0.8, 1.0);
    let model = train(&s, &TrainConfig::default()).unwrap().model;
    let r = bench(&s, &model, 3, Some(2.0)).unwrap();
    assert_eq!(r.fom, FomTiming::Recorded(2.0));
    assert_eq!(r.speedup, 2.0 / r.t_rom);
    assert_eq!(r.dt_fom, s.dt());
    let r = bench(&s, &model, 3, None).unwrap();
    assert!(matches!(r.fom, FomTiming::Regenerated(t) if t > 0.0));
    assert!(matches!(bench(&s, &model, 2, Some(1.0)), Err(RomError::Usage(_))));
    assert!(matches!(bench(&s, &model, 3, Some(0.0)), Err(RomError::Usage(_))));
}

#[test]
fn bench_without_timing_source_is_refused() {
    let s = bare(6, 8);
    let model = train(&s, &TrainConfig::default()).unwrap().model;
    let err = bench(&s, &model, 3, None).unwrap_err();
    assert!(matches!(err, RomError::Usage(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn sweep_at_vertices_equals_direct_training() {
    let verts = [(0.1, 0.6), (0.3, 0.6), (0.1, 1.0), (0.3, 1.0)];
    let samples: Vec<_> = verts.iter().map(|&(a, b)| small_toy(a, b, 0.0)).collect();
    let db = ParamDatabase::new(samples.clone()).unwrap();
    let cfg = TrainConfig::default();
    let tests = vec![samples[2].clone(), samples[0].clone()];
    let rows = sweep(&db, &tests, &cfg).unwrap();
    let n = samples[0].n_snapshots();
    assert_eq!(rows.len(), 2 * n);
    assert_eq!((rows[0].ca, rows[0].ratio), (0.1, 1.0));
    assert_eq!((rows[n].ca, rows[n].ratio), (0.1, 0.6));
    let direct = training_error(&samples[2], &cfg).unwrap();
    for (row, e) in rows[..n].iter().zip(&direct.eps_shape) {
        assert_eq!(row.eps_shape, *e);
    }
    // Interior point of the affine family: prediction is exact up to training error.
    let q = small_toy(0.2, 0.8, 0.0);
    let rows = sweep(&db, std::slice::from_ref(&q), &cfg).unwrap();
    let direct = training_error(&q, &cfg).unwrap().max();
    let swept = rows.iter().map(|r| r.eps_shape).fold(0.0, f64::max);
    assert!((swept - direct).abs() <= 1e-6 + 1e-3 * direct, "{swept} vs {direct}");
}

#[test]
fn propagation_grid_and_euler_consistency() {
    let s = small_toy(0.1, 0.8, 1.0);
    let model = train(&s, &TrainConfig::default()).unwrap().model;
    let traj = propagate(&model, Scheme::Exact, 0.04, 1.0).unwrap();
    assert_eq!(traj.len(), 25);
    assert!((traj.times[0] - 0.04).abs() < 1e-15);
    assert!((traj.times[24] - 1.0).abs() < 1e-12);
    let euler = propagate(&model, Scheme::Euler, 0.04, 1.0).unwrap();
    assert_eq!(euler.len(), 25);
    // First Euler step from the initial state.
    let a1 = model.alpha0() + model.beta0() * 0.04;
    assert!((euler.alphas.column(0) - a1).amax() < 1e-14);
    let out = trajectory_snapshots(&model, &traj, Scheme::Exact).unwrap();
    assert_eq!(out.n_snapshots(), 25);
    assert!((out.dt() - 0.04).abs() < 1e-15);
    assert_eq!(out.meta().get("generator"), Some("rom"));
}

#[test]
fn csv_writer_emits_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    write_csv(&p, &["a", "b"], vec![vec!["1".to_string(), "2".to_string()]]).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n1,2\n");
}
