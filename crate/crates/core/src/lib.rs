//! Snapshot-driven reduced-order modelling for deformable-particle trajectories.
//!
//! The pipeline goes from full-order snapshots to a low-order linear dynamical
//! system and back:
//!
//! * [`pod`] builds a truncated orthonormal basis from displacement snapshots,
//! * [`dmd`] identifies the reduced velocity operator by (Tikhonov-regularized)
//!   least squares on forward differences,
//! * [`rom`] propagates the reduced system exactly or with forward Euler and
//!   lifts it back to node positions,
//! * [`metrics`] compares full-order and reduced shapes,
//! * [`param`] predicts trajectories at unseen parameter couples by barycentric
//!   interpolation over a sample database and re-identifies a model there,
//! * [`synth`] provides synthetic full-order generators used as ground truth.
//!
//! The crate is `no_std` and only needs an allocator. File formats, timing and
//! the command-line front end live in the `romkit` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dmd;
mod error;
pub mod metrics;
pub mod numerics;
pub mod param;
pub mod pod;
pub mod rom;
pub mod snapshot;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use numerics::{Matrix, Vector};
pub use snapshot::{Frame, ParamCouple, RomRecord, SnapshotMeta, SnapshotSet};
