use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracburgers::degiorgi::{degiorgi_constants, verify_constants, ConstantsInputs, DeGiorgiError};
use fracburgers_cli::barrier::parse_barrier_spec;
use fracburgers_cli::runner::{diagnose, parse_diagnostic, resolve_root, resolve_run_dir, run_experiment};
use fracburgers_cli::store::{format_table, list_runs, load_record, summary_text};
use fracburgers_cli::{parse_config, CliError, RunStatus};

#[derive(Parser)]
#[command(name = "fracburgers", version, about = "Fractional Burgers solver and regularity diagnostics")]
struct Cli {
    /// Output root (overrides the config and $FRACBURGERS_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random initial data and sampled diagnostics.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the diagnostics phase.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Solve { config: PathBuf },
    /// Evaluate one diagnostic on a stored run, e.g. `scaling lambda=2`.
    Diagnose {
        run_id: String,
        diagnostic: String,
        params: Vec<String>,
    },
    /// Solve a barrier problem file and print its report.
    Barrier { problem: PathBuf },
    /// Compute and recheck delta, M and eps0.
    Constants {
        lambda: f64,
        #[arg(value_name = "N")]
        dim: usize,
        c0: f64,
        phi: f64,
    },
    /// Print the summary of a stored run.
    Report {
        run_id: String,
        /// Print diagnostics.json instead of the text summary.
        #[arg(long)]
        json: bool,
    },
    /// List runs under a directory.
    List { dir: Option<PathBuf> },
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    let root_only = || resolve_root(cli.out.as_deref(), None);
    match cli.command {
        Command::Solve { config } => {
            let mut cfg = parse_config(&config)?;
            if let Some(seed) = cli.seed {
                cfg.override_seed(seed);
            }
            let root = resolve_root(cli.out.as_deref(), Some(&cfg));
            let outcome = run_experiment(&cfg, &root)?;
            print!("{}", summary_text(&outcome.record));
            println!("written to {}", outcome.dir.display());
            if let RunStatus::Aborted(_) = outcome.record.status {
                return Err(CliError::Numerical(
                    outcome.record.abort_detail.clone().unwrap_or_else(|| outcome.record.status.to_string()),
                ));
            }
        }
        Command::Diagnose { run_id, diagnostic, params } => {
            let dir = resolve_run_dir(&root_only(), &run_id)?;
            let d = parse_diagnostic(&diagnostic, &params)?;
            for r in diagnose(&dir, &d, cli.seed)? {
                println!("{}", r.summary_line());
            }
        }
        Command::Barrier { problem } => {
            let spec = parse_barrier_spec(&problem)?;
            let rep = spec.evaluate()?;
            println!("{}", json(&rep));
            println!("{}", rep.summary_line());
        }
        Command::Constants { lambda, dim, c0, phi } => {
            let c = degiorgi_constants(&ConstantsInputs::new(lambda, dim, c0, phi)).map_err(|e| match e {
                DeGiorgiError::NoAdmissible(_) => CliError::Numerical(e.to_string()),
                other => CliError::Validation(other.to_string()),
            })?;
            println!("{}", json(&c));
            println!("{}", verify_constants(&c).summary_line());
        }
        Command::Report { run_id, json: as_json } => {
            let dir = resolve_run_dir(&root_only(), &run_id)?;
            let record = load_record(&dir)?;
            if as_json {
                println!("{}", json(&record.diagnostics));
            } else {
                print!("{}", summary_text(&record));
            }
        }
        Command::List { dir } => {
            let dir = dir.unwrap_or_else(root_only);
            let rows = list_runs(&dir)?;
            print!("{}", format_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
