//! Named initial-data generators.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use fracburgers::fields::{random_band_limited, Grid, RealField};
use serde::{Deserialize, Serialize};

use crate::store;

#[derive(Debug, thiserror::Error)]
pub enum InitialError {
    #[error("initial data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] store::StoreError),
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    /// Integer mode per axis; the term is `a·sin(2π m·x/length + phase)`.
    pub modes: Vec<i64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `a·exp(−|x − c|²/w²)` with periodic distance; `c` defaults to the
    /// torus center.
    GaussianBump {
        amplitude: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "one")]
        width: f64,
        /// Subtract the mean after sampling.
        #[serde(default)]
        mean_zero: bool,
    },
    /// Mean-zero random modes up to `max_mode`, scaled to sup norm
    /// `amplitude` (SplitMix64 stream, see `fields::random_band_limited`).
    RandomBandLimited {
        max_mode: usize,
        #[serde(default = "one")]
        decay: f64,
        #[serde(default = "one")]
        amplitude: f64,
        /// Falls back to the config seed.
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        offset: f64,
    },
    SineSum {
        terms: Vec<SineTerm>,
        #[serde(default)]
        offset: f64,
    },
    /// A stored snapshot (`.bin` with its `.json` sidecar).
    FileLoad { path: PathBuf },
    /// Pointwise sum of other generators.
    Sum { parts: Vec<InitialData> },
}

fn invalid<T>(m: impl Into<String>) -> Result<T, InitialError> {
    Err(InitialError::Invalid(m.into()))
}

fn finite(name: &str, v: f64) -> Result<(), InitialError> {
    if v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be finite"))
    }
}

impl InitialData {
    pub fn validate(&self, grid: &Grid) -> Result<(), InitialError> {
        let dim = grid.dim();
        match self {
            InitialData::GaussianBump { amplitude, center, width, .. } => {
                finite("amplitude", *amplitude)?;
                if !(*width > 0.0 && width.is_finite()) {
                    return invalid(format!("width must be > 0, got {width}"));
                }
                if let Some(c) = center {
                    if c.len() != dim || c.iter().any(|v| !v.is_finite()) {
                        return invalid(format!("center needs {dim} finite coordinates"));
                    }
                }
            }
            InitialData::RandomBandLimited { max_mode, decay, amplitude, offset, .. } => {
                if *max_mode == 0 {
                    return invalid("max_mode must be >= 1");
                }
                finite("decay", *decay)?;
                finite("amplitude", *amplitude)?;
                finite("offset", *offset)?;
            }
            InitialData::SineSum { terms, offset } => {
                finite("offset", *offset)?;
                for t in terms {
                    finite("amplitude", t.amplitude)?;
                    finite("phase", t.phase)?;
                    if t.modes.len() != dim {
                        return invalid(format!("modes need {dim} entries, got {:?}", t.modes));
                    }
                }
            }
            InitialData::FileLoad { path } => {
                let header = store::read_snapshot_header(path)?;
                if header.grid != *grid {
                    return invalid(format!("{} holds a different grid", path.display()));
                }
            }
            InitialData::Sum { parts } => {
                if parts.is_empty() {
                    return invalid("sum needs at least one part");
                }
                for p in parts {
                    p.validate(grid)?;
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self, grid: Grid, seed: u64) -> Result<RealField, InitialError> {
        self.validate(&grid)?;
        let len = grid.length();
        let dim = grid.dim();
        let field = match self {
            InitialData::GaussianBump { amplitude, center, width, mean_zero } => {
                let c = center.clone().unwrap_or_else(|| vec![0.5 * len; dim]);
                let f = RealField::from_fn(grid, |p| {
                    let r2: f64 = (0..dim)
                        .map(|j| ((p[j] - c[j] + 0.5 * len).rem_euclid(len) - 0.5 * len).powi(2))
                        .sum();
                    amplitude * (-r2 / (width * width)).exp()
                });
                if *mean_zero {
                    let m = f.mean();
                    f.map(|v| v - m)
                } else {
                    f
                }
            }
            InitialData::RandomBandLimited { max_mode, decay, amplitude, seed: own, offset } => {
                random_band_limited(grid, *max_mode, *decay, *amplitude, own.unwrap_or(seed))
                    .map(|v| v + offset)
            }
            InitialData::SineSum { terms, offset } => RealField::from_fn(grid, |p| {
                offset
                    + terms
                        .iter()
                        .map(|t| {
                            let arg: f64 =
                                (0..dim).map(|j| t.modes[j] as f64 * p[j]).sum::<f64>() * 2.0 * PI / len;
                            t.amplitude * (arg + t.phase).sin()
                        })
                        .sum::<f64>()
            }),
            InitialData::FileLoad { path } => store::read_snapshot(path)?.1,
            InitialData::Sum { parts } => {
                let mut acc = RealField::zeros(grid);
                for p in parts {
                    let f = p.generate(grid, seed)?;
                    acc = acc.zip_map(&f, |a, b| a + b).expect("parts share the grid");
                }
                acc
            }
        };
        Ok(field)
    }

    pub(crate) fn override_seed(&mut self, seed: u64) {
        match self {
            InitialData::RandomBandLimited { seed: s, .. } => *s = Some(seed),
            InitialData::Sum { parts } => parts.iter_mut().for_each(|p| p.override_seed(seed)),
            _ => {}
        }
    }

    pub(crate) fn resolve_paths(&mut self, base: &Path) {
        match self {
            InitialData::FileLoad { path } if path.is_relative() => *path = base.join(&*path),
            InitialData::Sum { parts } => parts.iter_mut().for_each(|p| p.resolve_paths(base)),
            _ => {}
        }
    }

    /// `(−Δ)^{1/2}` of a sine sum in closed form.
    pub fn exact_sqrt_laplacian(&self, grid: Grid) -> Option<RealField> {
        let InitialData::SineSum { terms, .. } = self else {
            return None;
        };
        let len = grid.length();
        let dim = grid.dim();
        Some(RealField::from_fn(grid, |p| {
            terms
                .iter()
                .map(|t| {
                    let k: Vec<f64> = t.modes.iter().map(|&m| 2.0 * PI * m as f64 / len).collect();
                    let arg: f64 = (0..dim).map(|j| k[j] * p[j]).sum();
                    let knorm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
                    t.amplitude * knorm * (arg + t.phase).sin()
                })
                .sum()
        }))
    }
}
