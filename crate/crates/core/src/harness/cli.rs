//! Command line front end.

use super::{run_campaign, simulate, verify, CheckKind, Report, Scenario};
use crate::error::{Error, Result};
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

/// Every requested check passed.
pub const EXIT_OK: i32 = 0;
/// At least one check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Unreadable or invalid scenario, or bad arguments.
pub const EXIT_USAGE: i32 = 2;
/// The solver or the file system failed while running.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ricciflow", version, about = "Conformal Ricci flow from Radon measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the scenario's flows and write snapshot dumps and CSV time series.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the scenario's flows and judge the requested checks.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
        /// Restrict to these checks (repeatable).
        #[arg(long = "check")]
        checks: Vec<String>,
        /// Directory for report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the summary of a saved report.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err((code, e)) => {
            eprintln!("error: {e}");
            code
        }
    }
}

type Outcome = std::result::Result<i32, (i32, Error)>;

fn usage(e: Error) -> (i32, Error) {
    (EXIT_USAGE, e)
}

fn runtime(e: Error) -> (i32, Error) {
    match e {
        Error::Domain(_) | Error::Parse(_) | Error::Precondition(_) | Error::Unsupported(_) => (EXIT_USAGE, e),
        other => (EXIT_RUNTIME, other),
    }
}

fn load(path: &Path) -> std::result::Result<Scenario, (i32, Error)> {
    let sc = Scenario::load(path).map_err(|e| match e {
        Error::Io(io) => usage(Error::Parse(format!("cannot read {}: {io}", path.display()))),
        other => usage(other),
    })?;
    sc.validate().map_err(usage)?;
    Ok(sc)
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Simulate { scenario, out } => {
            let sc = load(&scenario)?;
            let campaign = run_campaign(&sc).map_err(runtime)?;
            let files = simulate(&campaign, &out).map_err(runtime)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(EXIT_OK)
        }
        Command::Verify { scenario, checks, out } => {
            let mut sc = load(&scenario)?;
            if !checks.is_empty() {
                sc.checks = checks.iter().map(|c| CheckKind::parse(c)).collect::<Result<_>>().map_err(usage)?;
                sc.validate().map_err(usage)?;
            }
            let campaign = run_campaign(&sc).map_err(runtime)?;
            let report = verify(&campaign);
            if let Some(dir) = out {
                write_report(&report, &dir).map_err(runtime)?;
            }
            print!("{}", report.summary());
            Ok(if report.all_passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Report { input } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| usage(Error::Parse(format!("cannot read {}: {e}", input.display()))))?;
            let report = Report::from_json(&text).map_err(usage)?;
            print!("{}", report.summary());
            Ok(if report.all_passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
    }
}

fn write_report(report: &Report, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?)?;
    Ok(path)
}
