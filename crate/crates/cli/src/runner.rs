//! Solve, diagnose, persist.

use std::path::{Path, PathBuf};

use fracburgers::report::DiagnosticReport;
use fracburgers::solver::{run, SolverError};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::diagnostics::{evaluate_or_fail, Diagnostic};
use crate::store::{self, RunRecord, RunStatus};
use crate::{CliError, OUT_ENV};

/// A finished (or aborted) run and where it was written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub dir: PathBuf,
}

/// `--out` flag, then `output.dir`, then `FRACBURGERS_OUT`, then `runs`.
pub fn resolve_root(flag: Option<&Path>, config: Option<&ExperimentConfig>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.and_then(|c| c.output.dir.clone()))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Runs the solver and the requested diagnostics and writes
/// `<root>/<run-id>/`. A blow-up yields an aborted record, not an error.
pub fn run_experiment(config: &ExperimentConfig, root: &Path) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let initial = config.initial.generate(config.grid, config.seed)?;
    let (traj, status, abort_time, abort_detail) = match run(&initial, &config.solver) {
        Ok(traj) => (traj, RunStatus::Completed, None, None),
        Err(SolverError::BlowUp { time, reason, partial }) => {
            let cause = reason.split(':').next().unwrap_or(&reason).trim().to_string();
            (*partial, RunStatus::Aborted(cause), Some(time), Some(reason))
        }
        Err(e) => return Err(CliError::Validation(e.to_string())),
    };

    let run_id = config.run_id();
    let dir = root.join(&run_id);
    store::prepare_run_dir(&dir)?;
    let snapshots = store::write_snapshots(&dir, &traj, config.output.snapshots)?;

    let diagnostics: Vec<DiagnosticReport> = if status == RunStatus::Completed {
        config
            .diagnostics
            .par_iter()
            .map(|d| evaluate_or_fail(d, config, &traj))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    } else {
        Vec::new()
    };

    let record = RunRecord {
        schema_version: crate::config::SCHEMA_VERSION,
        run_id,
        version: crate::VERSION_TAG.to_string(),
        created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
        status,
        abort_time,
        abort_detail,
        config_digest: config.digest(),
        config: config.clone(),
        steps: traj.series.len() - 1,
        t_final: traj.series.last().map_or(0.0, |r| r.t),
        snapshots,
        series: traj.series,
        diagnostics,
    };
    store::emit_report(&record, &dir, config.output.gnuplot)?;
    Ok(RunOutcome { record, dir })
}

/// `<root>/<id>`, or `id` itself when it names a run directory.
pub fn resolve_run_dir(root: &Path, id: &str) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(id);
    if direct.join(store::RECORD_FILE).is_file() {
        return Ok(direct);
    }
    let under = root.join(id);
    if under.join(store::RECORD_FILE).is_file() {
        return Ok(under);
    }
    Err(CliError::Validation(format!("no run {id:?} under {}", root.display())))
}

/// Builds a diagnostic from `key=value` words; values are parsed as JSON
/// when possible and taken as strings otherwise.
pub fn parse_diagnostic(kind: &str, params: &[String]) -> Result<Diagnostic, CliError> {
    let mut map = serde_json::Map::new();
    map.insert("kind".into(), serde_json::Value::String(kind.to_string()));
    for p in params {
        let Some((k, v)) = p.split_once('=') else {
            return Err(CliError::Validation(format!("parameter {p:?} is not key=value")));
        };
        let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
        map.insert(k.to_string(), value);
    }
    serde_path_to_error::deserialize(serde_json::Value::Object(map)).map_err(|e| {
        let path = e.path().to_string();
        CliError::Validation(format!("{kind}: at `{path}`: {}", e.into_inner()))
    })
}

/// Evaluates one diagnostic on a stored run and appends its reports. `seed`
/// replaces the stored seed for sampled diagnostics.
pub fn diagnose(dir: &Path, diagnostic: &Diagnostic, seed: Option<u64>) -> Result<Vec<DiagnosticReport>, CliError> {
    let mut record = store::load_record(dir)?;
    if record.status != RunStatus::Completed {
        return Err(CliError::Numerical(format!("run {} is {}", record.run_id, record.status)));
    }
    let traj = store::load_trajectory(dir, &record)?;
    let mut cfg = record.config.clone();
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let reports = diagnostic.evaluate(&cfg, &traj)?;
    record.diagnostics.extend(reports.iter().cloned());
    store::write_diagnostics(dir, &record)?;
    Ok(reports)
}
