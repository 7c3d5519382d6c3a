//! Binary formats.
//!
//! `ROMSNAP1` (snapshot sets), little-endian:
//!
//! ```text
//! "ROMSNAP1" | u32 version=1 | u64 n_nodes | u64 N | f64 dt | f64 ca | f64 ratio
//! | f64 ref_length | X (3·n_nodes) | U (3·n_nodes·N, column-major) | V (same)
//! ```
//!
//! followed, when the set carries non-default metadata, by the trailer
//! `"ROMMETA1" | u32 len | len bytes of "key=value\n" lines`.
//!
//! `ROMREC1` (trained models):
//!
//! ```text
//! "ROMREC1\0" | u32 version=1 | u64 n_nodes | u64 K | f64 dt | f64 ca | f64 ratio
//! | f64 ref_length | f64 mu | f64 eps | Q (d×K) | A_μ (K×K) | α⁰ (K) | β⁰ (K) | X (d)
//! ```
//!
//! `ROMPOD1` (bare POD bases):
//!
//! ```text
//! "ROMPOD1\0" | u32 version=1 | u64 d | u64 K | u64 r | f64 eps | σ (r) | Q (d×K)
//! ```

use std::fs;
use std::path::Path;

use romkit_core::pod::PodBasis;
use romkit_core::{Frame, Matrix, ParamCouple, RomRecord, SnapshotMeta, SnapshotSet, Vector};

use crate::bundle;
use crate::error::{RomError, RomResult};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"ROMSNAP1";
pub const META_MAGIC: &[u8; 8] = b"ROMMETA1";
pub const RECORD_MAGIC: &[u8; 8] = b"ROMREC1\0";
pub const POD_MAGIC: &[u8; 8] = b"ROMPOD1\0";
pub const VERSION: u32 = 1;

/// Bytes of the fixed `ROMSNAP1` header.
pub const SNAPSHOT_HEADER_BYTES: usize = 8 + 4 + 8 + 8 + 4 * 8;
/// Bytes of the fixed `ROMREC1` header.
pub const RECORD_HEADER_BYTES: usize = 8 + 4 + 8 + 8 + 6 * 8;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn reals<'a>(&mut self, it: impl IntoIterator<Item = &'a f64>) {
        for v in it {
            self.f64(*v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> RomResult<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(RomError::format(
                self.origin,
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8; 8]) -> RomResult<()> {
        let got = self.take(8, "magic")?;
        if got != want {
            return Err(RomError::format(
                self.origin,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(want)
                ),
            ));
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(RomError::format(
                self.origin,
                format!("unsupported version {version}, expected {VERSION}"),
            ));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> RomResult<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> RomResult<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> RomResult<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn reals(&mut self, n: usize, what: &str) -> RomResult<Vec<f64>> {
        let bytes = self.take(n * 8, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn expect_remaining(&self, n: usize, what: &str) -> RomResult<()> {
        if self.remaining() < n {
            return Err(RomError::format(
                self.origin,
                format!("{what} needs {n} more bytes, only {} left", self.remaining()),
            ));
        }
        Ok(())
    }
}

/// Product of declared dimensions, refusing overflow and absurd sizes.
fn checked_count(origin: &str, dims: &[u64]) -> RomResult<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
        .and_then(|n| n.checked_mul(8).map(|_| n))
        .ok_or_else(|| RomError::format(origin, format!("declared dimensions {dims:?} overflow")))
}

pub fn encode_meta(meta: &SnapshotMeta) -> String {
    let mut out = format!(
        "frame={}\nvelocities_derived={}\n",
        meta.frame.as_str(),
        meta.velocities_derived
    );
    for (k, v) in &meta.extra {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

pub fn decode_meta(text: &str, origin: &str) -> RomResult<SnapshotMeta> {
    let mut meta = SnapshotMeta::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| RomError::format(origin, format!("metadata line without '=': {line:?}")))?;
        match k {
            "frame" => meta.frame = Frame::parse(v).map_err(|e| RomError::data(origin, e))?,
            "velocities_derived" => {
                meta.velocities_derived = v
                    .parse()
                    .map_err(|_| RomError::format(origin, format!("bad velocities_derived {v:?}")))?
            }
            _ => meta.set(k, v),
        }
    }
    Ok(meta)
}

pub fn encode_snapshot_set(s: &SnapshotSet) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(SNAPSHOT_HEADER_BYTES + 8 * s.payload_reals()));
    w.0.extend_from_slice(SNAPSHOT_MAGIC);
    w.u32(VERSION);
    w.u64(s.n_nodes() as u64);
    w.u64(s.n_snapshots() as u64);
    let theta = s.theta();
    for v in [s.dt(), theta.ca, theta.ratio, s.ref_length()] {
        w.f64(v);
    }
    w.reals(s.initial_positions().iter());
    w.reals(s.displacements().iter());
    w.reals(s.velocities().iter());
    if !s.meta().is_default() {
        let text = encode_meta(s.meta());
        w.0.extend_from_slice(META_MAGIC);
        w.u32(text.len() as u32);
        w.0.extend_from_slice(text.as_bytes());
    }
    w.0
}

pub fn decode_snapshot_set(bytes: &[u8], origin: &str) -> RomResult<SnapshotSet> {
    let mut r = Reader { buf: bytes, pos: 0, origin };
    r.magic(SNAPSHOT_MAGIC)?;
    let n_nodes = r.u64("n_nodes")?;
    let n = r.u64("N")?;
    let dt = r.f64("dt")?;
    let ca = r.f64("ca")?;
    let ratio = r.f64("ratio")?;
    let ref_length = r.f64("ref_length")?;
    let d = checked_count(origin, &[3, n_nodes])?;
    let dn = checked_count(origin, &[3, n_nodes, n])?;
    let payload_bytes = dn
        .checked_mul(2)
        .and_then(|x| x.checked_add(d))
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| RomError::format(origin, "declared dimensions overflow"))?;
    r.expect_remaining(payload_bytes, "payload")?;
    let x = Vector::from_vec(r.reals(d, "initial positions")?);
    let u = Matrix::from_vec(d, n as usize, r.reals(dn, "displacements")?);
    let v = Matrix::from_vec(d, n as usize, r.reals(dn, "velocities")?);
    let meta = if r.remaining() > 0 {
        r.magic_trailer()?
    } else {
        SnapshotMeta::default()
    };
    if r.remaining() != 0 {
        return Err(RomError::format(origin, format!("{} trailing bytes", r.remaining())));
    }
    let s = SnapshotSet::new(ParamCouple { ca, ratio }, dt, ref_length, x, u, v)
        .map_err(|e| RomError::data(origin, e))?;
    Ok(s.with_meta(meta))
}

impl Reader<'_> {
    fn magic_trailer(&mut self) -> RomResult<SnapshotMeta> {
        let tag = self.take(8, "metadata trailer")?;
        if tag != META_MAGIC {
            return Err(RomError::format(self.origin, "unexpected bytes after payload"));
        }
        let len = self.u32("metadata length")? as usize;
        let body = self.take(len, "metadata")?;
        let text = std::str::from_utf8(body)
            .map_err(|_| RomError::format(self.origin, "metadata is not UTF-8"))?;
        decode_meta(text, self.origin)
    }
}

pub fn encode_rom_record(rec: &RomRecord) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(RECORD_HEADER_BYTES + 8 * rec.payload_reals()));
    w.0.extend_from_slice(RECORD_MAGIC);
    w.u32(VERSION);
    w.u64((rec.dim() / 3) as u64);
    w.u64(rec.rank() as u64);
    for v in [rec.dt, rec.theta.ca, rec.theta.ratio, rec.ref_length, rec.mu, rec.eps] {
        w.f64(v);
    }
    w.reals(rec.modes.iter());
    w.reals(rec.a_mu.iter());
    w.reals(rec.alpha0.iter());
    w.reals(rec.beta0.iter());
    w.reals(rec.initial_positions.iter());
    w.0
}

pub fn decode_rom_record(bytes: &[u8], origin: &str) -> RomResult<RomRecord> {
    let mut r = Reader { buf: bytes, pos: 0, origin };
    r.magic(RECORD_MAGIC)?;
    let n_nodes = r.u64("n_nodes")?;
    let k = r.u64("K")?;
    let mut h = [0.0; 6];
    for (slot, name) in h.iter_mut().zip(["dt", "ca", "ratio", "ref_length", "mu", "eps"]) {
        *slot = r.f64(name)?;
    }
    let [dt, ca, ratio, ref_length, mu, eps] = h;
    let d = checked_count(origin, &[3, n_nodes])?;
    let dk = checked_count(origin, &[d as u64, k])?;
    let kk = checked_count(origin, &[k, k])?;
    let k = k as usize;
    let payload_bytes = dk
        .checked_add(kk)
        .and_then(|x| x.checked_add(2 * k + d))
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| RomError::format(origin, "declared dimensions overflow"))?;
    if r.remaining() != payload_bytes {
        return Err(RomError::format(
            origin,
            format!("payload is {} bytes, header implies {payload_bytes}", r.remaining()),
        ));
    }
    let rec = RomRecord {
        theta: ParamCouple { ca, ratio },
        modes: Matrix::from_vec(d, k, r.reals(dk, "modes")?),
        a_mu: Matrix::from_vec(k, k, r.reals(kk, "a_mu")?),
        mu,
        eps,
        dt,
        alpha0: Vector::from_vec(r.reals(k, "alpha0")?),
        beta0: Vector::from_vec(r.reals(k, "beta0")?),
        initial_positions: Vector::from_vec(r.reals(d, "initial positions")?),
        ref_length,
    };
    rec.validate().map_err(|e| RomError::data(origin, e))?;
    Ok(rec)
}

pub fn encode_pod_basis(b: &PodBasis) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(POD_MAGIC);
    w.u32(VERSION);
    w.u64(b.dim() as u64);
    w.u64(b.rank() as u64);
    w.u64(b.singular_values().len() as u64);
    w.f64(b.eps());
    w.reals(b.singular_values());
    w.reals(b.modes().iter());
    w.0
}

pub fn decode_pod_basis(bytes: &[u8], origin: &str) -> RomResult<PodBasis> {
    let mut r = Reader { buf: bytes, pos: 0, origin };
    r.magic(POD_MAGIC)?;
    let d = r.u64("d")?;
    let k = r.u64("K")?;
    let n_sv = r.u64("r")?;
    let eps = r.f64("eps")?;
    let dk = checked_count(origin, &[d, k])?;
    let n_sv = checked_count(origin, &[n_sv])?;
    if dk.checked_add(n_sv).and_then(|x| x.checked_mul(8)) != Some(r.remaining()) {
        return Err(RomError::format(origin, "payload size does not match header"));
    }
    let sv = r.reals(n_sv, "singular values")?;
    let q = Matrix::from_vec(d as usize, k as usize, r.reals(dk, "modes")?);
    PodBasis::from_parts(q, sv, eps, origin.to_string()).map_err(|e| RomError::data(origin, e))
}

fn read_bytes(path: &Path) -> RomResult<Vec<u8>> {
    fs::read(path).map_err(|e| RomError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> RomResult<()> {
    fs::write(path, bytes).map_err(|e| RomError::io(path, e))
}

/// Reads a `ROMSNAP1` file, or a CSV bundle when `path` is a directory.
pub fn read_snapshot_set(path: &Path) -> RomResult<SnapshotSet> {
    if path.is_dir() {
        return bundle::read_bundle(path);
    }
    decode_snapshot_set(&read_bytes(path)?, &path.display().to_string())
}

/// Writes a CSV bundle when `path` is an existing directory or ends with a
/// separator, and `ROMSNAP1` otherwise.
pub fn write_snapshot_set(s: &SnapshotSet, path: &Path) -> RomResult<()> {
    let as_dir = path.is_dir() || path.as_os_str().to_string_lossy().ends_with(std::path::MAIN_SEPARATOR);
    if as_dir {
        return bundle::write_bundle(s, path);
    }
    write_bytes(path, &encode_snapshot_set(s))
}

pub fn read_rom_record(path: &Path) -> RomResult<RomRecord> {
    decode_rom_record(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_rom_record(rec: &RomRecord, path: &Path) -> RomResult<()> {
    write_bytes(path, &encode_rom_record(rec))
}

pub fn read_pod_basis(path: &Path) -> RomResult<PodBasis> {
    decode_pod_basis(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_pod_basis(b: &PodBasis, path: &Path) -> RomResult<()> {
    write_bytes(path, &encode_pod_basis(b))
}
