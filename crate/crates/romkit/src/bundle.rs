//! CSV bundle: a directory holding `meta.csv` (`key,value` rows), `X.csv`
//! (one column), `U.csv` and `V.csv` (one snapshot per column), all
//! headerless. Without `V.csv`, velocities are derived from the displacement
//! history and the set is flagged accordingly.

use std::fs;
use std::path::Path;

use romkit_core::{Matrix, ParamCouple, SnapshotSet, Vector};

use crate::error::{RomError, RomResult};
use crate::real;
use crate::io::{decode_meta, encode_meta};

fn reader(path: &Path) -> RomResult<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| RomError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> RomError {
    RomError::format(path.display().to_string(), e.to_string())
}

/// Rows of reals; every row must have the same length.
pub fn read_real_table(path: &Path) -> RomResult<Vec<Vec<f64>>> {
    let origin = path.display().to_string();
    let mut rows = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.parse::<f64>().map_err(|_| {
                    RomError::format(&origin, format!("row {i}, column {j}: not a number: {field:?}"))
                })
            })
            .collect::<RomResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn read_matrix(path: &Path) -> RomResult<Matrix> {
    let rows = read_real_table(path)?;
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn write_matrix(path: &Path, m: &Matrix) -> RomResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| real(*v)))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| RomError::io(path, e))
}

pub fn read_bundle(dir: &Path) -> RomResult<SnapshotSet> {
    let origin = dir.display().to_string();
    let meta_path = dir.join("meta.csv");
    let mut pairs = Vec::new();
    for rec in reader(&meta_path)?.records() {
        let rec = rec.map_err(|e| csv_err(&meta_path, e))?;
        if rec.len() != 2 {
            return Err(RomError::format(&origin, format!("meta.csv row with {} fields", rec.len())));
        }
        pairs.push((rec[0].to_string(), rec[1].to_string()));
    }
    let get = |key: &str| -> RomResult<f64> {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .ok_or_else(|| RomError::format(&origin, format!("meta.csv lacks {key}")))?
            .1
            .parse()
            .map_err(|_| RomError::format(&origin, format!("meta.csv: {key} is not a number")))
    };
    let (n_nodes, n) = (get("n_nodes")?, get("N")?);
    let theta = ParamCouple {
        ca: get("ca")?,
        ratio: get("ratio")?,
    };
    let (dt, ref_length) = (get("dt")?, get("ref_length")?);
    let extra: String = pairs
        .iter()
        .filter(|(k, _)| !["n_nodes", "N", "dt", "ca", "ratio", "ref_length"].contains(&k.as_str()))
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    let meta = decode_meta(&extra, &origin)?;

    let x = read_matrix(&dir.join("X.csv"))?;
    let u = read_matrix(&dir.join("U.csv"))?;
    let d = 3.0 * n_nodes;
    if x.nrows() as f64 != d || x.ncols() != 1 {
        return Err(RomError::format(
            &origin,
            format!("X.csv is {}x{}, expected {d}x1", x.nrows(), x.ncols()),
        ));
    }
    if u.nrows() as f64 != d || u.ncols() as f64 != n {
        return Err(RomError::format(
            &origin,
            format!("U.csv is {}x{}, expected {d}x{n}", u.nrows(), u.ncols()),
        ));
    }
    let x = Vector::from_column_slice(x.as_slice());
    let v_path = dir.join("V.csv");
    let s = if v_path.exists() {
        let v = read_matrix(&v_path)?;
        SnapshotSet::new(theta, dt, ref_length, x, u, v)
    } else {
        log::warn!("{origin}: no V.csv, deriving velocities from displacements");
        SnapshotSet::with_derived_velocities(theta, dt, ref_length, x, u)
    }
    .map_err(|e| RomError::data(&origin, e))?;
    let derived = s.meta().velocities_derived || meta.velocities_derived;
    let mut s = s.with_meta(meta);
    s.meta_mut().velocities_derived = derived;
    Ok(s)
}

pub fn write_bundle(s: &SnapshotSet, dir: &Path) -> RomResult<()> {
    fs::create_dir_all(dir).map_err(|e| RomError::io(dir, e))?;
    let meta_path = dir.join("meta.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&meta_path)
        .map_err(|e| csv_err(&meta_path, e))?;
    let theta = s.theta();
    let mut rows = vec![
        ("n_nodes".to_string(), s.n_nodes().to_string()),
        ("N".to_string(), s.n_snapshots().to_string()),
        ("dt".to_string(), real(s.dt())),
        ("ca".to_string(), real(theta.ca)),
        ("ratio".to_string(), real(theta.ratio)),
        ("ref_length".to_string(), real(s.ref_length())),
    ];
    for line in encode_meta(s.meta()).lines() {
        if let Some((k, v)) = line.split_once('=') {
            rows.push((k.to_string(), v.to_string()));
        }
    }
    for (k, v) in rows {
        w.write_record([k, v]).map_err(|e| csv_err(&meta_path, e))?;
    }
    w.flush().map_err(|e| RomError::io(&meta_path, e))?;
    let x = Matrix::from_column_slice(s.dim(), 1, s.initial_positions().as_slice());
    write_matrix(&dir.join("X.csv"), &x)?;
    write_matrix(&dir.join("U.csv"), s.displacements())?;
    write_matrix(&dir.join("V.csv"), s.velocities())
}
