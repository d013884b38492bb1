mod config;
mod run;

use clap::{Parser, Subcommand};
use config::*;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const VERSION_TAG: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config documents or input files.
    Usage(String),
    /// Numerical or range failure inside a run.
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<hokdv_core::Error> for CliError {
    fn from(e: hokdv_core::Error) -> Self {
        use hokdv_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::Io(_) | E::Parse(_) => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "hokdv", version = VERSION_TAG, about = "Higher-order KdV on the circle: simulation, control and estimates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Free flow with conservation diagnostics.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cfg: SimulateConfig,
    },
    /// Linear exact control by the moment method.
    Control {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cfg: ControlConfig,
    },
    /// Closed-loop decay under simple damping (lambda = 0) or the gain K_lambda.
    Stabilize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cfg: StabilizeConfig,
    },
    /// Damping, local nonlinear control and reversed damping, verified end to end.
    GlobalControl {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cfg: GlobalConfig,
    },
    /// Eigenvalue gap, polynomial identities and propagator checks.
    VerifyLemmas {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cfg: LemmasConfig,
    },
    /// Counting sum scan under domain doubling and the optional L4 ratio trend.
    Strichartz {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cfg: StrichartzConfig,
    },
}

fn resolve_and_run<C, F>(
    name: &str,
    common: &Common,
    flags: C,
    resolve: fn(C, C) -> Result<C, CliError>,
    body: F,
) -> Result<bool, CliError>
where
    C: serde::de::DeserializeOwned + serde::Serialize + Default,
    F: FnOnce(&C) -> Result<run::Outcome, CliError>,
{
    let file: C = load(common.config.as_deref())?;
    let cfg = resolve(flags, file)?;
    let start = Instant::now();
    let outcome = body(&cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let dir = run_dir(&common.outdir, name)?;
    write_outputs(&dir, name, &cfg, &outcome, wall)?;
    let passed = outcome.verdicts.values().all(|v| *v);
    for (k, v) in &outcome.verdicts {
        println!("{} {k}", if *v { "PASS" } else { "FAIL" });
    }
    println!("{}", dir.display());
    Ok(passed)
}

fn run_dir(outdir: &Path, name: &str) -> Result<PathBuf, CliError> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let base = outdir.join(format!("{name}-{stamp}"));
    let mut dir = base.clone();
    let mut i = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{i}", base.display()));
        i += 1;
    }
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_outputs<C: serde::Serialize>(
    dir: &Path,
    name: &str,
    cfg: &C,
    outcome: &run::Outcome,
    wall: f64,
) -> Result<(), CliError> {
    let passed = outcome.verdicts.values().all(|v| *v);
    let report = json!({
        "subcommand": name,
        "version": VERSION_TAG,
        "config": cfg,
        "verdicts": outcome.verdicts,
        "passed": passed,
        "results": outcome.results,
    });
    hokdv_core::io::write_json_sorted(&dir.join("report.json"), &report)?;
    hokdv_core::io::write_json_sorted(&dir.join("timing.json"), &json!({"wall_time_s": wall}))?;
    for t in &outcome.tables {
        let header: Vec<&str> = t.header.iter().map(|s| s.as_str()).collect();
        hokdv_core::io::write_table_file(&dir.join(format!("{}.csv", t.name)), &header, t.rows.iter().cloned())?;
    }
    for (fname, u) in &outcome.fields {
        hokdv_core::io::write_field_file(&dir.join(format!("{fname}.csv")), u)?;
    }
    Ok(())
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HOKDV_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("HOKDV_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    init_threads()?;
    match cli.cmd {
        Cmd::Simulate { common, cfg } => {
            resolve_and_run("simulate", &common, cfg, SimulateConfig::resolve, run::simulate_cmd)
        }
        Cmd::Control { common, cfg } => {
            resolve_and_run("control", &common, cfg, ControlConfig::resolve, run::control_cmd)
        }
        Cmd::Stabilize { common, cfg } => {
            resolve_and_run("stabilize", &common, cfg, StabilizeConfig::resolve, run::stabilize_cmd)
        }
        Cmd::GlobalControl { common, cfg } => {
            resolve_and_run("global-control", &common, cfg, GlobalConfig::resolve, run::global_cmd)
        }
        Cmd::VerifyLemmas { common, cfg } => {
            resolve_and_run("verify-lemmas", &common, cfg, LemmasConfig::resolve, run::lemmas_cmd)
        }
        Cmd::Strichartz { common, cfg } => {
            resolve_and_run("strichartz", &common, cfg, StrichartzConfig::resolve, run::strichartz_cmd)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Numeric(_) => 3,
            })
        }
    }
}
