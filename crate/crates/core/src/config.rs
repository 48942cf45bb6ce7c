//! Flat `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Recognised keys and defaults:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `n` | 128 | cells per side |
//! | `radius` | 1.0 | disk radius |
//! | `winding` | 1 | odd winding number of the boundary loop |
//! | `frame_alpha`, `frame_beta`, `frame_gamma` | 0 | ZYZ Euler angles of the frame |
//! | `phase` | 0 | phase of the boundary loop |
//! | `eps` | 0.25 | elastic constant for `solve` and `analyze` |
//! | `eps_list` | 0.25,0.125,0.0625,0.03125 | sweep values, strictly decreasing |
//! | `dt` | auto | initial time step |
//! | `max_iters` | 500000 | accepted-step budget per solve |
//! | `rel_tol` | 1e-4 | windowed relative decrement per unit time |
//! | `window` | 50 | convergence window in steps |
//! | `sigma_projection` | false | project onto the convex hull after each step |
//! | `potential` | standard | `standard` or `beta` |
//! | `beta` | 3.0 | parameter of the `beta` potential |
//! | `init` | melt | `melt` or `random` |
//! | `seed` | 0 | seed for `init = random` |
//! | `amplitude` | 0.05 | perturbation size for `init = random` |
//! | `radii` | 0.3,0.4,0.5,0.6,0.7 | analysis radii as fractions of `radius` |
//! | `out_dir` | out | output directory |

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::defect::DEFAULT_RADII;
use crate::error::FieldError;
use crate::field::{apply_boundary, make_disk_domain, BoundaryData, DomainMask, InitMode};
use crate::minimizer::{SolveConfig, DEFAULT_WINDOW};
use crate::tensor::{Potential, Rotation3};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    Melt,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub radius: f64,
    pub winding: i32,
    pub frame: [f64; 3],
    pub phase: f64,
    pub eps: f64,
    pub eps_list: Vec<f64>,
    pub dt: Option<f64>,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub window: usize,
    pub sigma_projection: bool,
    pub potential: Potential,
    pub init: InitKind,
    pub seed: u64,
    pub amplitude: f64,
    pub radii: Vec<f64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 128,
            radius: 1.0,
            winding: 1,
            frame: [0.0; 3],
            phase: 0.0,
            eps: 0.25,
            eps_list: vec![0.25, 0.125, 0.0625, 0.03125],
            dt: None,
            max_iters: 500_000,
            rel_tol: 1e-4,
            window: DEFAULT_WINDOW,
            sigma_projection: false,
            potential: Potential::Standard,
            init: InitKind::Melt,
            seed: 0,
            amplitude: 0.05,
            radii: DEFAULT_RADII.to_vec(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut beta = 3.0;
        let mut potential_kind = "standard".to_string();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Line { line, msg };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let res: Result<(), String> = (|| {
                match key {
                    "n" => cfg.n = num(value)?,
                    "radius" => cfg.radius = num(value)?,
                    "winding" => cfg.winding = num(value)?,
                    "frame_alpha" => cfg.frame[0] = num(value)?,
                    "frame_beta" => cfg.frame[1] = num(value)?,
                    "frame_gamma" => cfg.frame[2] = num(value)?,
                    "phase" => cfg.phase = num(value)?,
                    "eps" => cfg.eps = num(value)?,
                    "eps_list" => cfg.eps_list = parse_list(value)?,
                    "dt" => {
                        cfg.dt = if value == "auto" {
                            None
                        } else {
                            Some(num(value)?)
                        }
                    }
                    "max_iters" => cfg.max_iters = num(value)?,
                    "rel_tol" => cfg.rel_tol = num(value)?,
                    "window" => cfg.window = num(value)?,
                    "sigma_projection" => cfg.sigma_projection = parse_bool(value)?,
                    "potential" => match value {
                        "standard" | "beta" => potential_kind = value.to_string(),
                        _ => return Err(format!("unknown potential {value:?}")),
                    },
                    "beta" => beta = num(value)?,
                    "init" => {
                        cfg.init = match value {
                            "melt" => InitKind::Melt,
                            "random" => InitKind::Random,
                            _ => return Err(format!("unknown init {value:?}")),
                        }
                    }
                    "seed" => cfg.seed = num(value)?,
                    "amplitude" => cfg.amplitude = num(value)?,
                    "radii" => cfg.radii = parse_list(value)?,
                    "out_dir" => cfg.out_dir = PathBuf::from(value),
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            })();
            res.map_err(err)?;
        }
        if potential_kind == "beta" {
            cfg.potential = Potential::Beta(beta);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.radius.is_nan() || self.radius <= 0.0 {
            return bad("radius must be positive");
        }
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return bad("radii must be fractions in (0, 1)");
        }
        if self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return bad("radii must be strictly increasing");
        }
        if self.amplitude.is_nan() || self.amplitude < 0.0 {
            return bad("amplitude must be nonnegative");
        }
        self.solve_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sweep_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn boundary(&self) -> BoundaryData {
        BoundaryData {
            winding: self.winding,
            frame: Rotation3::from_euler_zyz(self.frame[0], self.frame[1], self.frame[2]),
            phase: self.phase,
        }
    }

    pub fn mask(&self) -> Result<Arc<DomainMask>, FieldError> {
        let mask = make_disk_domain(self.n, self.radius)?;
        Ok(Arc::new(apply_boundary(&mask, &self.boundary())?))
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            eps: self.eps,
            dt: self.dt,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            sigma_projection: self.sigma_projection,
            continuation: Vec::new(),
            potential: self.potential,
            window: self.window,
        }
    }

    pub fn sweep_config(&self) -> SolveConfig {
        SolveConfig {
            eps: self.eps_list.first().copied().unwrap_or(self.eps),
            continuation: self.eps_list.clone(),
            ..self.solve_config()
        }
    }

    pub fn init_mode(&self) -> InitMode {
        match self.init {
            InitKind::Melt => InitMode::RadialMelt,
            InitKind::Random => InitMode::Random {
                seed: self.seed,
                amplitude: self.amplitude,
            },
        }
    }

    /// Analysis radii scaled by the domain radius.
    pub fn analysis_radii(&self) -> Vec<f64> {
        self.radii.iter().map(|r| r * self.radius).collect()
    }
}
