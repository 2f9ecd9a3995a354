//! Barrier problem files for the `barrier` subcommand and diagnostic.

use std::path::{Path, PathBuf};

use fracburgers::barriers::{
    b1_lambda_refined, lambda_star_estimate, solve_barrier, strip_bound_check, BarrierError,
    BarrierProblem, Face, FaceData, Geometry,
};
use fracburgers::report::DiagnosticReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BarrierSpecError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: at `{key}`: {message}")]
    Schema { origin: String, key: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Numerical(String),
}

impl From<BarrierError> for BarrierSpecError {
    fn from(e: BarrierError) -> Self {
        match e {
            BarrierError::InvalidProblem(_) => BarrierSpecError::Invalid(e.to_string()),
            BarrierError::NotConverged { .. } => BarrierSpecError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceSpec {
    pub axis: usize,
    pub high: bool,
    pub value: f64,
}

fn one() -> usize {
    1
}
fn b1_resolutions() -> Vec<f64> {
    vec![8.0, 16.0, 32.0]
}
fn star_resolution() -> f64 {
    512.0
}
fn strip_length() -> f64 {
    8.0
}
fn strip_resolution() -> f64 {
    32.0
}

/// Relative change allowed between the last two `b₁` refinements.
pub const REFINEMENT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BarrierSpec {
    /// `λ` from `b₁` over a refinement ladder (points per unit length).
    B1 {
        #[serde(default = "one")]
        n_dim: usize,
        #[serde(default = "b1_resolutions")]
        resolutions: Vec<f64>,
    },
    LambdaStar {
        #[serde(default = "one")]
        n_dim: usize,
        #[serde(default = "one_u32")]
        k0: u32,
        lambda: f64,
        #[serde(default = "star_resolution")]
        resolution: f64,
    },
    /// `b₂` against `2√2 e^{−x/2}`.
    Strip {
        #[serde(default = "strip_length")]
        length: f64,
        #[serde(default = "strip_resolution")]
        resolution: f64,
    },
    /// Any box or strip with constant face data.
    Custom {
        geometry: Geometry,
        #[serde(default)]
        default_value: f64,
        #[serde(default)]
        faces: Vec<FaceSpec>,
        resolution: f64,
        /// Per-axis `[lo, hi]` over which the maximum is reported.
        #[serde(default)]
        region: Option<Vec<[f64; 2]>>,
    },
}

fn one_u32() -> u32 {
    1
}

pub fn parse_barrier_spec(path: &Path) -> Result<BarrierSpec, BarrierSpecError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| BarrierSpecError::Io { path: path.to_path_buf(), source })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| BarrierSpecError::Schema {
        origin: path.display().to_string(),
        key: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

impl BarrierSpec {
    pub fn evaluate(&self) -> Result<DiagnosticReport, BarrierSpecError> {
        match self {
            BarrierSpec::B1 { n_dim, resolutions } => {
                let r = b1_lambda_refined(*n_dim, resolutions)?;
                let hist = &r.refinement_history;
                let lambda = r.lambda_estimate.expect("b1 sets lambda");
                let change = hist
                    .windows(2)
                    .map(|w| ((w[1].1 - w[0].1) / w[1].1).abs())
                    .next_back()
                    .unwrap_or(f64::NAN);
                let mut rep = DiagnosticReport::new("b1_lambda", REFINEMENT_TOLERANCE)
                    .measure("lambda", lambda)
                    .measure("max_on_subregion", r.max_on_subregion.unwrap_or(f64::NAN))
                    .measure("relative_change", change)
                    .measure("sweeps", r.sweeps as f64);
                for (res, l) in hist {
                    rep = rep.measure(format!("lambda_at_{res}"), *l);
                }
                let ok = lambda > 0.0
                    && lambda < 0.5
                    && r.maximum_principle_holds()
                    && (hist.len() < 2 || change < REFINEMENT_TOLERANCE);
                if hist.len() < 2 {
                    rep = rep.note("single resolution; refinement not checked");
                }
                Ok(rep.with_passed(ok))
            }
            BarrierSpec::LambdaStar { n_dim, k0, lambda, resolution } => {
                let s = lambda_star_estimate(*n_dim, *k0, *lambda, *resolution)?;
                let upper = lambda.min(1.0) / 2f64.powi(*k0 as i32 + 1);
                Ok(DiagnosticReport::new("lambda_star", 0.0)
                    .measure("lambda_star", s)
                    .measure("upper_bracket", upper)
                    .with_passed(s > 0.0 && s < upper))
            }
            BarrierSpec::Strip { length, resolution } => Ok(strip_bound_check(*length, *resolution)?),
            BarrierSpec::Custom { geometry, default_value, faces, resolution, region } => {
                let mut p = BarrierProblem::new(*geometry, *default_value, *resolution);
                for f in faces {
                    p = p.with_face(Face { axis: f.axis, high: f.high }, FaceData::Constant(f.value));
                }
                let r = solve_barrier(&p)?;
                let mut rep = DiagnosticReport::new("barrier_solve", 0.0)
                    .measure("min", r.solution.min())
                    .measure("max", r.solution.max())
                    .measure("boundary_min", r.boundary_range.0)
                    .measure("boundary_max", r.boundary_range.1)
                    .measure("residual", r.residual)
                    .measure("sweeps", r.sweeps as f64);
                if let Some(region) = region {
                    let b: Vec<(f64, f64)> = region.iter().map(|r| (r[0], r[1])).collect();
                    if b.len() != r.solution.shape.len() {
                        return Err(BarrierSpecError::Invalid(format!(
                            "region needs {} intervals",
                            r.solution.shape.len()
                        )));
                    }
                    rep = rep.measure("max_on_region", r.solution.max_over(&b));
                }
                Ok(rep.with_passed(r.maximum_principle_holds()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn custom_constant_box() {
        let spec: BarrierSpec = serde_json::from_str(
            r#"{"kind": "custom", "geometry": {"kind": "box", "n_dim": 1, "half_width": 1, "height": 1},
                "default_value": 1.0, "resolution": 16, "region": [[-0.5, 0.5], [0, 0.5]]}"#,
        )
        .unwrap();
        let rep = spec.evaluate().unwrap();
        assert!(rep.passed);
        assert!((rep.get("max_on_region").unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_fields_rejected() {
        let r: Result<BarrierSpec, _> = serde_json::from_str(r#"{"kind": "strip", "width": 3}"#);
        assert!(r.is_err());
    }

    #[test]
    fn lambda_star_bracket() {
        let spec = BarrierSpec::LambdaStar { n_dim: 1, k0: 1, lambda: 0.25, resolution: 256.0 };
        assert!(spec.evaluate().unwrap().passed);
    }
}
