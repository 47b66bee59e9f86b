//! `ttssa`: batch experiments for linear two-time-scale stochastic approximation.
//!
//! Exit status is 0 on success, 2 for configuration errors and 3 for
//! numerical failures. Errors are written to stderr as
//! `{"error": kind, "message": text}`.

mod commands;
mod config;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use ttssa::Error;

use commands::Output;
use config::{Mode, Overrides};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io(String),
    Parse(String),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "Io",
            CliError::Parse(_) => "Parse",
            CliError::Usage(_) => "Usage",
            CliError::Core(e) => match e {
                Error::SingularMatrix { .. } => "SingularMatrix",
                Error::NotPositive { .. } => "NotPositive",
                Error::NotErgodic(_) => "NotErgodic",
                Error::Dimension(_) => "Dimension",
                Error::InvalidInput(_) => "InvalidInput",
                Error::InsufficientData(_) => "InsufficientData",
                Error::NonPositive { .. } => "NonPositive",
                Error::NonFinite { .. } => "NonFinite",
                Error::NotFound { .. } => "NotFound",
                Error::Diverges(_) => "Diverges",
                Error::Overflow(_) => "Overflow",
                Error::BudgetExceeded { .. } => "BudgetExceeded",
                Error::FeatureScale(_) => "FeatureScale",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Io(m) | CliError::Parse(m) | CliError::Usage(m) => m.clone(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) | CliError::Parse(_) | CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::InvalidInput(_)
                | Error::Dimension(_)
                | Error::NotErgodic(_)
                | Error::FeatureScale(_)
                | Error::BudgetExceeded { .. } => 2,
                _ => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "ttssa", version, about = "Two-time-scale stochastic approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact solution, spectral summary and assumption report.
    Solve(Common),
    /// Schedule certification, transient index and rate constants.
    Validate(Common),
    /// Runs the config's mode (plain Monte Carlo by default).
    Run(Common),
    /// Restarted scheme, one CSV row per epoch.
    Restart(Common),
    /// Rate fit per fast-step exponent.
    Sweep(Common),
    /// Log-log slope of one column of a curve CSV.
    RateFit(RateFitArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    traj: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
}

#[derive(Args)]
struct RateFitArgs {
    /// Curve CSV written by `run`.
    input: PathBuf,
    #[arg(long, default_value = "lyapunov")]
    column: String,
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("LO: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("HI: {e}"))?;
    if !(lo > 0.0 && lo < hi) {
        return Err(format!("need 0 < LO < HI, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn emit(output: Output, out: Option<&PathBuf>) -> Result<(), CliError> {
    let write = |path: &PathBuf, text: &str| fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())));
    let mut stdout = std::io::stdout().lock();
    let res = match (output, out) {
        (Output::Json(v), None) => writeln!(stdout, "{}", serde_json::to_string_pretty(&v).unwrap()),
        (Output::Json(v), Some(p)) => return write(p, &(serde_json::to_string_pretty(&v).unwrap() + "\n")),
        (Output::Csv(t) | Output::CsvWithSummary(t, _), None) => stdout.write_all(t.as_bytes()),
        (Output::Csv(t), Some(p)) => return write(p, &t),
        (Output::CsvWithSummary(t, s), Some(p)) => {
            write(p, &t)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&s).unwrap())
        }
    };
    res.map_err(|e| CliError::Io(format!("stdout: {e}")))
}

enum Action {
    Report(fn(&config::Experiment) -> Result<Output, CliError>),
    Data(Option<Mode>),
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (common, action) = match cli.command {
        Command::RateFit(a) => return emit(commands::rate_fit(&a.input, &a.column, a.window)?, a.out.as_ref()),
        Command::Solve(c) => (c, Action::Report(commands::solve)),
        Command::Validate(c) => (c, Action::Report(commands::validate)),
        Command::Run(c) => (c, Action::Data(None)),
        Command::Restart(c) => (c, Action::Data(Some(Mode::Restart))),
        Command::Sweep(c) => (c, Action::Data(Some(Mode::Sweep))),
    };
    let ov = Overrides { seed: common.seed, traj: common.traj, horizon: common.horizon, out: common.out.clone(), window: common.window };
    let exp = config::load(&common.config, &ov)?;
    match action {
        // reports ignore the config's data path
        Action::Report(f) => emit(f(&exp)?, common.out.as_ref()),
        Action::Data(mode) => {
            let output = match mode.unwrap_or(exp.mode) {
                Mode::Plain => commands::run_plain(&exp)?,
                Mode::Restart => commands::restart(&exp)?,
                Mode::Sweep => commands::sweep(&exp)?,
            };
            emit(output, exp.output.as_ref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.to_string())),
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", json!({"error": e.kind(), "message": e.message()}));
    ExitCode::from(e.exit_code())
}
