//! File formats, batch drivers and command-line plumbing around
//! [`romkit_core`].

pub mod bundle;
pub mod config;
pub mod error;
pub mod io;
pub mod tasks;

pub use error::{RomError, RomResult};

/// Shortest round-trip text for a real, in exponent form when very small or large.
pub fn real(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}
