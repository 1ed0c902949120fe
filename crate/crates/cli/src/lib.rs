//! Scenario-driven runs of the formation laboratory.
//!
//! [`execute`] runs one command on a scenario, writes `report.json` and any
//! CSV files into the output directory and returns the exit code.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod commands;
pub mod output;
pub mod scenario;

pub use scenario::{Convention, Scenario};

/// Version of the report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Attach,
    Simulate,
    Equilibria,
    Spectrum,
    Factorize,
    Continue,
    Sotomayor,
    Classify,
    Probe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Attach => "attach",
            Command::Simulate => "simulate",
            Command::Equilibria => "equilibria",
            Command::Spectrum => "spectrum",
            Command::Factorize => "factorize",
            Command::Continue => "continue",
            Command::Sotomayor => "sotomayor",
            Command::Classify => "classify",
            Command::Probe => "probe",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    fn status(&self) -> &'static str {
        match self {
            CliError::Scenario(_) => "scenario_error",
            CliError::Numerical(_) => "numerical_failure",
            CliError::Io(_) => "io_error",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: Option<Command>,
    pub status: String,
    pub scenario_digest: Option<String>,
    pub targets_convention: Option<Convention>,
    pub targets_squared: Option<[f64; 5]>,
    pub mu: Option<f64>,
    pub search_seed: Option<u64>,
    pub wall_time_s: f64,
    pub diagnostics: Vec<String>,
    pub artifacts: Vec<String>,
    pub result: serde_json::Value,
}

/// What a command produced before the report is assembled.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: serde_json::Value,
    pub diagnostics: Vec<String>,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub command: Option<Command>,
    pub seed_override: Option<u64>,
    pub fixed_step: bool,
}

fn prepare(path: &Path, opts: &RunOptions) -> Result<(Scenario, Command), CliError> {
    let mut sc = Scenario::load(path)?;
    if let Some(seed) = opts.seed_override {
        sc = sc.with_seed(seed);
    }
    if opts.fixed_step {
        sc = sc.with_fixed_step();
    }
    let cmd = opts
        .command
        .or(sc.command)
        .ok_or_else(|| CliError::Scenario("no command given on the command line or in the scenario".into()))?;
    Ok((sc, cmd))
}

/// Runs and writes the report; returns the process exit code.
pub fn execute(scenario: &Path, out: &Path, opts: &RunOptions) -> i32 {
    let t0 = Instant::now();
    let mut report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: "twocycles".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: opts.command,
        status: "ok".into(),
        scenario_digest: None,
        targets_convention: None,
        targets_squared: None,
        mu: None,
        search_seed: None,
        wall_time_s: 0.0,
        diagnostics: Vec::new(),
        artifacts: Vec::new(),
        result: serde_json::Value::Null,
    };
    let outcome = prepare(scenario, opts).and_then(|(sc, cmd)| {
        report.command = Some(cmd);
        report.scenario_digest = Some(sc.digest());
        report.targets_convention = Some(sc.targets.convention);
        report.targets_squared = Some(sc.targets.squared().0);
        report.mu = Some(sc.mu);
        report.search_seed = Some(sc.search.seed);
        std::fs::create_dir_all(out)?;
        commands::run(cmd, &sc, out)
    });
    let code = match outcome {
        Ok(o) => {
            report.result = o.result;
            report.diagnostics = o.diagnostics;
            report.artifacts = o.artifacts;
            0
        }
        Err(e) => {
            eprintln!("{e}");
            report.status = e.status().into();
            report.diagnostics.push(e.to_string());
            e.exit_code()
        }
    };
    report.wall_time_s = t0.elapsed().as_secs_f64();
    if let Err(e) = write_report(out, &report) {
        eprintln!("could not write report: {e}");
        return if code == 0 { 1 } else { code };
    }
    code
}

pub fn report_path(out: &Path) -> PathBuf {
    out.join("report.json")
}

fn write_report(out: &Path, report: &Report) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    output::write_atomic(&report_path(out), text.as_bytes())
}
