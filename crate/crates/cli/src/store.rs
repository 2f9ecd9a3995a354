//! Run directories: records, scalar CSVs, binary snapshots and listings.
//!
//! ```text
//! <root>/<run-id>/record.json
//!                 scalars.csv         t,l2,linf,mean,hhalf
//!                 snapshots/NNNNNNNN.bin + .json sidecar
//!                 diagnostics.json
//!                 summary.txt
//!                 plot.gp             (optional)
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use fracburgers::fields::{Grid, RealField};
use fracburgers::report::DiagnosticReport;
use fracburgers::solver::{Snapshot, StepRecord, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SnapshotPolicy};

pub const RECORD_FILE: &str = "record.json";
pub const SCALARS_FILE: &str = "scalars.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const GNUPLOT_FILE: &str = "plot.gp";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_FORMAT: &str = "fracburgers-snapshot";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
}

type Result<T> = std::result::Result<T, StoreError>;

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|source| StoreError::Io { path: path.to_path_buf(), source })
}

fn corrupt(path: &Path, message: impl fmt::Display) -> StoreError {
    StoreError::Corrupt { path: path.to_path_buf(), message: message.to_string() }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = io(path, fs::read_to_string(path))?;
    serde_json::from_str(&text).map_err(|e| corrupt(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    io(path, fs::write(path, text))
}

/// JSON sidecar of a `.bin` snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub format: String,
    pub version: u32,
    pub endianness: String,
    pub dtype: String,
    /// Row-major, last axis fastest.
    pub layout: String,
    pub grid: Grid,
    pub step: usize,
    pub t: f64,
    pub count: usize,
}

fn sidecar_and_data(path: &Path) -> (PathBuf, PathBuf) {
    if path.extension().is_some_and(|e| e == "json") {
        (path.to_path_buf(), path.with_extension("bin"))
    } else {
        (path.with_extension("json"), path.to_path_buf())
    }
}

/// Writes `<stem>.bin` (little-endian f64) and `<stem>.json`.
pub fn write_snapshot(bin: &Path, step: usize, t: f64, field: &RealField) -> Result<()> {
    let header = SnapshotHeader {
        format: SNAPSHOT_FORMAT.into(),
        version: 1,
        endianness: "little".into(),
        dtype: "f64".into(),
        layout: "row-major".into(),
        grid: *field.grid(),
        step,
        t,
        count: field.values().len(),
    };
    let bytes: Vec<u8> = field.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    io(bin, fs::write(bin, bytes))?;
    write_json(&bin.with_extension("json"), &header)
}

pub fn read_snapshot_header(path: &Path) -> Result<SnapshotHeader> {
    let (side, _) = sidecar_and_data(path);
    let h: SnapshotHeader = read_json(&side)?;
    if h.format != SNAPSHOT_FORMAT || h.endianness != "little" || h.dtype != "f64" {
        return Err(corrupt(&side, "not a little-endian f64 snapshot"));
    }
    if h.count != h.grid.total_points() {
        return Err(corrupt(&side, "count does not match the grid"));
    }
    Ok(h)
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, RealField)> {
    let header = read_snapshot_header(path)?;
    let (_, bin) = sidecar_and_data(path);
    let bytes = io(&bin, fs::read(&bin))?;
    if bytes.len() != 8 * header.count {
        return Err(corrupt(&bin, format!("expected {} bytes, found {}", 8 * header.count, bytes.len())));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let field = RealField::new(header.grid, values).map_err(|e| corrupt(&bin, e))?;
    Ok((header, field))
}

/// `completed`, or `aborted: <cause>` after a blow-up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RunStatus {
    Completed,
    Aborted(String),
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Completed => f.write_str("completed"),
            RunStatus::Aborted(cause) => write!(f, "aborted: {cause}"),
        }
    }
}

impl From<RunStatus> for String {
    fn from(s: RunStatus) -> Self {
        s.to_string()
    }
}

impl TryFrom<String> for RunStatus {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        if s == "completed" {
            Ok(RunStatus::Completed)
        } else if let Some(cause) = s.strip_prefix("aborted: ") {
            Ok(RunStatus::Aborted(cause.to_string()))
        } else {
            Err(format!("unknown run status {s:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotEntry {
    pub step: usize,
    pub t: f64,
    /// Relative to the run directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub version: String,
    /// RFC 3339.
    pub created: String,
    pub status: RunStatus,
    /// Blow-up time for aborted runs.
    pub abort_time: Option<f64>,
    pub abort_detail: Option<String>,
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub steps: usize,
    pub t_final: f64,
    pub snapshots: Vec<SnapshotEntry>,
    /// Kept in `scalars.csv`.
    #[serde(skip)]
    pub series: Vec<StepRecord>,
    /// Kept in `diagnostics.json`.
    #[serde(skip)]
    pub diagnostics: Vec<DiagnosticReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsFile {
    pub schema_version: u32,
    pub run_id: String,
    pub reports: Vec<DiagnosticReport>,
}

/// Creates (or clears a previous run in) `dir`.
pub fn prepare_run_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let ours = dir.join(RECORD_FILE).exists();
        let empty = io(dir, fs::read_dir(dir))?.next().is_none();
        if !ours && !empty {
            return Err(corrupt(dir, "exists and is not a run directory"));
        }
        io(dir, fs::remove_dir_all(dir))?;
    }
    io(dir, fs::create_dir_all(dir.join(SNAPSHOT_DIR)))
}

/// Writes the snapshots selected by `policy` and returns their index.
pub fn write_snapshots(dir: &Path, traj: &Trajectory, policy: SnapshotPolicy) -> Result<Vec<SnapshotEntry>> {
    let n = traj.snapshots.len();
    let keep = |i: usize| match policy {
        SnapshotPolicy::All => true,
        SnapshotPolicy::Ends => i == 0 || i + 1 == n,
        SnapshotPolicy::None => false,
    };
    let mut entries = Vec::new();
    for (_, s) in traj.snapshots.iter().enumerate().filter(|(i, _)| keep(*i)) {
        let file = format!("{SNAPSHOT_DIR}/{:08}.bin", s.step);
        write_snapshot(&dir.join(&file), s.step, s.t, &s.field)?;
        entries.push(SnapshotEntry { step: s.step, t: s.t, file });
    }
    Ok(entries)
}

pub fn write_scalars(path: &Path, series: &[StepRecord]) -> Result<()> {
    let mut w = io(path, csv::Writer::from_path(path).map_err(std::io::Error::from))?;
    for r in series {
        w.serialize(r).map_err(|e| corrupt(path, e))?;
    }
    io(path, w.flush())
}

pub fn read_scalars(path: &Path) -> Result<Vec<StepRecord>> {
    let mut r = io(path, csv::Reader::from_path(path).map_err(std::io::Error::from))?;
    let headers = r.headers().map_err(|e| corrupt(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "l2", "linf", "mean", "hhalf"] {
        return Err(corrupt(path, "unexpected header"));
    }
    r.deserialize().map(|row| row.map_err(|e| corrupt(path, e))).collect()
}

/// Human-readable summary with one PASS/FAIL line per report.
pub fn summary_text(record: &RunRecord) -> String {
    let mut s = String::new();
    let name = record.config.name.as_deref().unwrap_or("-");
    s.push_str(&format!("run {} ({name})\n", record.run_id));
    s.push_str(&format!("created {}\n", record.created));
    s.push_str(&format!("status {}\n", record.status));
    if let Some(t) = record.abort_time {
        s.push_str(&format!("abort time {t}\n"));
    }
    let g = record.config.grid;
    s.push_str(&format!(
        "grid dim={} n={} length={}; alpha={} epsilon={} dt={} steps={} t_final={}\n",
        g.dim(),
        g.n(),
        g.length(),
        record.config.solver.alpha,
        record.config.solver.epsilon,
        record.config.solver.dt,
        record.steps,
        record.t_final
    ));
    if record.diagnostics.is_empty() {
        s.push_str("no diagnostics\n");
    }
    for r in &record.diagnostics {
        s.push_str(&r.summary_line());
        s.push('\n');
        for n in &r.notes {
            s.push_str(&format!("    {n}\n"));
        }
    }
    let failed = record.diagnostics.iter().filter(|r| !r.passed).count();
    s.push_str(&format!("{} passed, {failed} failed\n", record.diagnostics.len() - failed));
    s
}

fn gnuplot_script() -> &'static str {
    "set datafile separator ','\n\
     set key autotitle columnhead\n\
     set xlabel 't'\n\
     set logscale y\n\
     plot 'scalars.csv' using 1:2 with lines, \\\n     \
     '' using 1:3 with lines, \\\n     \
     '' using 1:5 with lines\n"
}

/// Writes `record.json`, `scalars.csv`, `diagnostics.json`, `summary.txt`
/// and, if asked, `plot.gp` into `dir`.
pub fn emit_report(record: &RunRecord, dir: &Path, gnuplot: bool) -> Result<()> {
    io(dir, fs::create_dir_all(dir))?;
    write_json(&dir.join(RECORD_FILE), record)?;
    write_scalars(&dir.join(SCALARS_FILE), &record.series)?;
    write_diagnostics(dir, record)?;
    if gnuplot {
        let p = dir.join(GNUPLOT_FILE);
        io(&p, fs::write(&p, gnuplot_script()))?;
    }
    Ok(())
}

/// Rewrites `diagnostics.json` and `summary.txt` only.
pub fn write_diagnostics(dir: &Path, record: &RunRecord) -> Result<()> {
    let file = DiagnosticsFile {
        schema_version: crate::config::SCHEMA_VERSION,
        run_id: record.run_id.clone(),
        reports: record.diagnostics.clone(),
    };
    write_json(&dir.join(DIAGNOSTICS_FILE), &file)?;
    let p = dir.join(SUMMARY_FILE);
    io(&p, fs::write(&p, summary_text(record)))
}

/// Reads a run back, including scalars and diagnostics.
pub fn load_record(dir: &Path) -> Result<RunRecord> {
    let mut record: RunRecord = read_json(&dir.join(RECORD_FILE))?;
    record.series = read_scalars(&dir.join(SCALARS_FILE))?;
    let diags = dir.join(DIAGNOSTICS_FILE);
    if diags.exists() {
        let f: DiagnosticsFile = read_json(&diags)?;
        record.diagnostics = f.reports;
    }
    Ok(record)
}

/// Rebuilds the trajectory from the stored snapshots and scalar series.
pub fn load_trajectory(dir: &Path, record: &RunRecord) -> Result<Trajectory> {
    let mut snapshots = Vec::with_capacity(record.snapshots.len());
    for e in &record.snapshots {
        let (h, field) = read_snapshot(&dir.join(&e.file))?;
        if h.step != e.step {
            return Err(corrupt(&dir.join(&e.file), "step does not match the record"));
        }
        snapshots.push(Snapshot { step: e.step, t: e.t, field });
    }
    let Some(first) = snapshots.first() else {
        return Err(corrupt(dir, "run has no stored snapshots"));
    };
    if first.step != 0 {
        return Err(corrupt(dir, "first stored snapshot is not the initial field"));
    }
    Ok(Trajectory {
        config: record.config.solver.clone(),
        initial: first.field.clone(),
        snapshots,
        series: record.series.clone(),
    })
}

/// One row of [`list_runs`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub id: String,
    pub created: String,
    pub digest: String,
    pub status: String,
}

/// Runs below `root`, oldest first; directories whose record cannot be
/// read are listed last with status `unreadable`.
pub fn list_runs(root: &Path) -> Result<Vec<RunRow>> {
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for entry in io(root, fs::read_dir(root))? {
        let entry = io(root, entry)?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let id = entry.file_name().to_string_lossy().into_owned();
        let parsed = read_json::<RunRecord>(&path.join(RECORD_FILE)).ok().and_then(|r| {
            chrono::DateTime::parse_from_rfc3339(&r.created).ok().map(|when| (when, r))
        });
        match parsed {
            Some((when, r)) => good.push((
                when,
                RunRow { id, created: r.created, digest: r.config_digest, status: r.status.to_string() },
            )),
            None => bad.push(RunRow {
                id,
                created: String::new(),
                digest: String::new(),
                status: "unreadable".into(),
            }),
        }
    }
    good.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    bad.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(good.into_iter().map(|(_, r)| r).chain(bad).collect())
}

/// Plain-text table for [`list_runs`].
pub fn format_table(rows: &[RunRow]) -> String {
    let mut s = format!("{:<18} {:<32} {:<16} {}\n", "id", "date", "digest", "status");
    for r in rows {
        let digest: String = r.digest.chars().take(16).collect();
        s.push_str(&format!("{:<18} {:<32} {:<16} {}\n", r.id, r.created, digest, r.status));
    }
    s
}
