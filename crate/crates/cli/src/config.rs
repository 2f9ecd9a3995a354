//! Experiment configuration: JSON in, validated struct out.

use std::path::{Path, PathBuf};

use fracburgers::fields::Grid;
use fracburgers::solver::SolverConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::Diagnostic;
use crate::initial::InitialData;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
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
}

/// Which snapshots are written to disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotPolicy {
    #[default]
    All,
    /// First and last only.
    Ends,
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output root; the `--out` flag wins, then this, then `FRACBURGERS_OUT`.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub snapshots: SnapshotPolicy,
    /// Also write `plot.gp`.
    #[serde(default)]
    pub gnuplot: bool,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    /// Seed for random initial data without their own seed and for sampled
    /// diagnostics.
    #[serde(default)]
    pub seed: u64,
    pub grid: Grid,
    pub solver: SolverConfig,
    pub initial: InitialData,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.solver.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.initial.validate(&self.grid).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for d in &self.diagnostics {
            d.validate(self).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical config (output settings excluded) and the
    /// version tag.
    pub fn digest(&self) -> String {
        let mut physics = self.clone();
        physics.output = OutputSpec::default();
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&physics).expect("config serializes"));
        h.update(b"\n");
        h.update(crate::VERSION_TAG.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn run_id(&self) -> String {
        self.digest()[..16].to_string()
    }

    /// Applies a `--seed` override to the config and to seeded generators.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.initial.override_seed(seed);
    }
}

fn deserialize(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        origin: origin.to_string(),
        key: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

/// Parses and validates JSON text. `origin` labels error messages.
pub fn parse_str(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg = deserialize(text, origin)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file. Relative `file-load` paths resolve against the
/// config's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let mut cfg = deserialize(&text, &path.display().to_string())?;
    if let Some(dir) = path.parent() {
        cfg.initial.resolve_paths(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "grid": {"dim": 1, "n": 64, "length": 6.283185307179586},
        "solver": {"t_end": 0.1},
        "initial": {"kind": "sine-sum", "terms": [{"amplitude": 1.0, "modes": [1]}]}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_str(MINIMAL, "minimal").unwrap();
        assert_eq!(cfg.solver.alpha, 0.5);
        assert_eq!(cfg.solver.dt, 1e-3);
        assert!(cfg.solver.dealias);
        assert_eq!(cfg.schema_version, SCHEMA_VERSION);
        assert!(cfg.diagnostics.is_empty());
    }

    #[test]
    fn alpha_out_of_range() {
        let text = MINIMAL.replace(r#""t_end": 0.1"#, r#""t_end": 0.1, "alpha": 1.5"#);
        let err = parse_str(&text, "x").unwrap_err().to_string();
        assert!(err.contains("alpha out of (0,1]"), "{err}");
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let text = MINIMAL.replace(r#""t_end": 0.1"#, r#""t_end": 0.1, "alhpa": 0.5"#);
        match parse_str(&text, "x").unwrap_err() {
            ConfigError::Schema { key, message, .. } => {
                assert_eq!(key, "solver.alhpa");
                assert!(message.contains("alhpa"));
            }
            e => panic!("{e}"),
        }
        let text = MINIMAL.replace(r#""n": 64"#, r#""n": 64, "extra": 1"#);
        assert!(parse_str(&text, "x").is_err());
    }

    #[test]
    fn bad_grid_is_rejected() {
        let text = MINIMAL.replace(r#""n": 64"#, r#""n": 63"#);
        let err = parse_str(&text, "x").unwrap_err().to_string();
        assert!(err.contains("grid") && err.contains("even"), "{err}");
    }

    #[test]
    fn emit_then_parse_round_trips() {
        let cfg = parse_str(MINIMAL, "m").unwrap();
        let again = parse_str(&cfg.to_json(), "emitted").unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn digest_ignores_output_settings() {
        let a = parse_str(MINIMAL, "m").unwrap();
        let mut b = a.clone();
        b.output.dir = Some("elsewhere".into());
        assert_eq!(a.run_id(), b.run_id());
        b.seed = 7;
        assert_ne!(a.run_id(), b.run_id());
    }
}
