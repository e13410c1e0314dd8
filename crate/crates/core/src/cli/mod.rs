//! Command-line front end: argument definitions, command execution and
//! report writing. The `discfdr` binary is a thin wrapper around [`main`].

pub mod config;
pub mod input;
pub mod number;
mod report;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::procedures::ProcedureTag;
use crate::simulate::MarginMode;

pub use config::{Experiment, Format, RunConfig, ScenarioConfig};
pub use report::Report;

/// Exit status for malformed input data.
pub const EXIT_INPUT: i32 = 3;
/// Exit status for invalid or inconsistent configuration.
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "discfdr",
    version,
    about = "FDR control for discrete exact tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the attainable p-values of each row's exact test.
    Support(SupportArgs),
    /// Estimate the proportion of true nulls.
    Estimate(EstimateArgs),
    /// Run a multiple-testing procedure on a count matrix.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo experiment.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Significant digits of printed numbers.
    #[arg(long)]
    pub digits: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    /// Tab-separated counts with header `id x1 x2 n1 n2`.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TuningArgs {
    /// Comma-separated tuning parameters; defaults to max(nu, j/20).
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Tuning parameter of the Storey estimators.
    #[arg(long)]
    pub storey_tau: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProcedureArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    /// One of bh, abh_H, abh_storey, bhh, abhh_H (comma-separated for simulate).
    #[arg(long, value_delimiter = ',')]
    pub procedure: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct SupportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub procedure: ProcedureArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub pi0: Option<f64>,
    #[arg(long)]
    pub n1: Option<u64>,
    #[arg(long)]
    pub n2: Option<u64>,
    /// Odds ratio for false nulls.
    #[arg(long)]
    pub effect: Option<f64>,
    #[arg(long)]
    pub base_rate: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// fixed-margins or unconditional.
    #[arg(long)]
    pub margin_mode: Option<MarginMode>,
    #[command(flatten)]
    pub procedure: ProcedureArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl Command {
    fn output(&self) -> &OutputArgs {
        match self {
            Command::Support(a) => &a.output,
            Command::Estimate(a) => &a.output,
            Command::Analyze(a) => &a.output,
            Command::Simulate(a) => &a.output,
        }
    }

    /// Flag values as a configuration layer.
    fn flags(&self) -> RunConfig {
        let out = self.output();
        let mut cfg = RunConfig {
            out: out.out.clone(),
            format: out.format,
            digits: out.digits,
            ..Default::default()
        };
        let tuning = |cfg: &mut RunConfig, t: &TuningArgs| {
            cfg.taus = t.taus.clone();
            cfg.storey_tau = t.storey_tau;
        };
        let procedure = |cfg: &mut RunConfig, p: &ProcedureArgs| {
            cfg.alpha = p.alpha;
            cfg.procedure = p.procedure.clone();
        };
        match self {
            Command::Support(a) => cfg.input = a.input.input.clone(),
            Command::Estimate(a) => {
                cfg.input = a.input.input.clone();
                tuning(&mut cfg, &a.tuning);
            }
            Command::Analyze(a) => {
                cfg.input = a.input.input.clone();
                tuning(&mut cfg, &a.tuning);
                procedure(&mut cfg, &a.procedure);
            }
            Command::Simulate(a) => {
                tuning(&mut cfg, &a.tuning);
                procedure(&mut cfg, &a.procedure);
                cfg.experiment = a.experiment;
                cfg.scenario = ScenarioConfig {
                    m: a.m,
                    pi0: a.pi0,
                    n1: a.n1,
                    n2: a.n2,
                    effect: a.effect,
                    base_rate: a.base_rate,
                    reps: a.reps,
                    seed: a.seed,
                    margin_mode: a.margin_mode,
                };
            }
        }
        cfg
    }

    /// Flags layered over the configuration file, if any.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let file = match &self.output().config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        Ok(self.flags().over(file))
    }
}

/// Runs one command and returns the rendered report.
pub fn execute(command: &Command) -> Result<(RunConfig, String)> {
    let cfg = command.resolve_config()?;
    let digits = cfg.digits()?;
    let report = match command {
        Command::Support(_) => report::support(&cfg, &load_rows(&cfg)?)?,
        Command::Estimate(_) => report::estimate(&cfg, &load_rows(&cfg)?)?,
        Command::Analyze(_) => report::analyze(&cfg, &load_rows(&cfg)?)?,
        Command::Simulate(_) => report::simulate(&cfg)?,
    };
    let text = report.render(cfg.format(), digits)?;
    Ok((cfg, text))
}

fn load_rows(cfg: &RunConfig) -> Result<Vec<input::CheckedRow>> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Input("no input file given (use --input)".into()))?;
    let file = File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    let rows = input::check_rows(input::read_count_matrix(BufReader::new(file))?)?;
    for r in &rows {
        if let Some(reason) = r.removal {
            eprintln!(
                "line {}: removed row '{}' (total count {}, {})",
                r.row.line,
                r.row.id,
                r.row.counts.total(),
                reason.as_str()
            );
        }
    }
    Ok(rows)
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_input() {
        EXIT_INPUT
    } else {
        EXIT_CONFIG
    }
}

/// Parses arguments, runs the command and writes the report. Returns the
/// process exit status.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(command: &Command) -> Result<()> {
    let (cfg, text) = execute(command)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())?;
            lock.flush()?;
        }
    }
    Ok(())
}

pub(crate) fn default_analyze_procedure() -> ProcedureTag {
    ProcedureTag::AbhH
}
