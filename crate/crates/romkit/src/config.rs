//! Run configuration: built-in defaults, an optional `key=value` file and
//! command-line flags, in increasing precedence. The resolved values are
//! echoed into a `<output>.manifest` file next to every written artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use romkit_core::dmd::{DEFAULT_LCURVE_MAX, DEFAULT_LCURVE_MIN, DEFAULT_MU, DEFAULT_POINTS_PER_DECADE};
use romkit_core::pod::{DEFAULT_EPS, DEFAULT_MAX_RANK};
use romkit_core::rom::{InitialVelocity, Regularization, TrainConfig, DEFAULT_DT_OUT, DEFAULT_T_END};

use crate::error::{RomError, RomResult};
use crate::real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Exact,
    Euler,
}

impl FromStr for Scheme {
    type Err = RomError;
    fn from_str(s: &str) -> RomResult<Self> {
        match s {
            "exact" => Ok(Scheme::Exact),
            "euler" => Ok(Scheme::Euler),
            _ => Err(RomError::Usage(format!("scheme must be exact|euler, got {s:?}"))),
        }
    }
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Exact => "exact",
            Scheme::Euler => "euler",
        }
    }
}

/// Parses `a:b` into a positive, increasing interval.
pub fn parse_interval(s: &str) -> RomResult<(f64, f64)> {
    let bad = || RomError::Usage(format!("expected an interval like 1e-12:1e-5, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if !(a > 0.0 && b > a && b.is_finite()) {
        return Err(bad());
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub eps: f64,
    pub max_modes: usize,
    pub mu: f64,
    /// When set, `mu` is chosen by the L-curve over this interval.
    pub lcurve: Option<(f64, f64)>,
    pub points_per_decade: usize,
    pub dt_out: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub initial_velocity: InitialVelocity,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            eps: DEFAULT_EPS,
            max_modes: DEFAULT_MAX_RANK,
            mu: DEFAULT_MU,
            lcurve: None,
            points_per_decade: DEFAULT_POINTS_PER_DECADE,
            dt_out: DEFAULT_DT_OUT,
            t_end: DEFAULT_T_END,
            scheme: Scheme::Exact,
            initial_velocity: InitialVelocity::Trapezoid,
        }
    }
}

pub const DEFAULT_LCURVE: (f64, f64) = (DEFAULT_LCURVE_MIN, DEFAULT_LCURVE_MAX);

fn parse<T: FromStr>(key: &str, v: &str) -> RomResult<T> {
    v.trim()
        .parse()
        .map_err(|_| RomError::Usage(format!("config key {key}: cannot parse {v:?}")))
}

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> RomResult<()> {
        match key {
            "eps" => self.eps = parse(key, value)?,
            "max_modes" => self.max_modes = parse(key, value)?,
            "mu" => {
                self.mu = parse(key, value)?;
                self.lcurve = None;
            }
            "lcurve" => self.lcurve = Some(parse_interval(value)?),
            "points_per_decade" => self.points_per_decade = parse(key, value)?,
            "dt_out" => self.dt_out = parse(key, value)?,
            "t_end" => self.t_end = parse(key, value)?,
            "scheme" => self.scheme = value.trim().parse()?,
            "initial_velocity" => {
                self.initial_velocity = match value.trim() {
                    "trapezoid" => InitialVelocity::Trapezoid,
                    "first" => InitialVelocity::FirstSnapshot,
                    other => {
                        return Err(RomError::Usage(format!(
                            "initial_velocity must be trapezoid|first, got {other:?}"
                        )))
                    }
                }
            }
            _ => return Err(RomError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> RomResult<()> {
        let text = fs::read_to_string(path).map_err(|e| RomError::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                RomError::Usage(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> RomResult<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(RomError::Usage(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("eps", self.eps)?;
        positive("dt_out", self.dt_out)?;
        positive("t_end", self.t_end)?;
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(RomError::Usage(format!("mu must be finite and >= 0, got {}", self.mu)));
        }
        if self.max_modes == 0 {
            return Err(RomError::Usage("max_modes must be at least 1".into()));
        }
        if self.points_per_decade < 2 {
            return Err(RomError::Usage("points_per_decade must be at least 2".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let regularization = match self.lcurve {
            Some((mu_min, mu_max)) => Regularization::LCurve {
                mu_min,
                mu_max,
                points_per_decade: self.points_per_decade,
            },
            None => Regularization::Fixed(self.mu),
        };
        TrainConfig {
            eps: self.eps,
            max_modes: self.max_modes,
            regularization,
            initial_velocity: self.initial_velocity,
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("eps", real(self.eps)),
            ("max_modes", self.max_modes.to_string()),
            (
                "mu",
                if self.lcurve.is_some() { "lcurve".to_string() } else { real(self.mu) },
            ),
            (
                "lcurve",
                self.lcurve.map_or("off".to_string(), |(a, b)| format!("{}:{}", real(a), real(b))),
            ),
            ("points_per_decade", self.points_per_decade.to_string()),
            ("dt_out", real(self.dt_out)),
            ("t_end", real(self.t_end)),
            ("scheme", self.scheme.as_str().to_string()),
            (
                "initial_velocity",
                match self.initial_velocity {
                    InitialVelocity::Trapezoid => "trapezoid",
                    InitialVelocity::FirstSnapshot => "first",
                }
                .to_string(),
            ),
        ]
    }
}

/// Reproducibility record written next to an output artifact.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub command: String,
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: impl Into<String>) -> Self {
        Manifest {
            command: command.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.insert(key.into(), value.to_string());
        self
    }

    pub fn with_config(&mut self, cfg: &RunConfig) -> &mut Self {
        for (k, v) in cfg.entries() {
            self.set(k, v);
        }
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(out, "version={}", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest");
        PathBuf::from(s)
    }

    pub fn write_for(&self, output: &Path) -> RomResult<PathBuf> {
        let trimmed = output
            .to_str()
            .map(|s| Path::new(s.trim_end_matches(std::path::MAIN_SEPARATOR)))
            .unwrap_or(output);
        let path = Manifest::path_for(trimmed);
        fs::write(&path, self.render()).map_err(|e| RomError::io(&path, e))?;
        Ok(path)
    }
}
