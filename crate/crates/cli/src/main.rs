//! `longrun`: long-run portfolio analytics from a JSON model file.
//!
//! Exit codes: 0 success, 1 output or threshold failure, 2 invalid input,
//! 3 solver failure, 10 and 11 from `check` (condition not implied,
//! failure proven).

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::{CliError, Format, Options, PolicyChoice};
use longrun_core::closed_form::Measure;

#[derive(Parser, Debug)]
#[command(name = "longrun", version, about = "Long-run optimal portfolios and certainty-equivalent loss bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Model file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; a directory for calibration-demo. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,

    /// Euler step in months.
    #[arg(long, global = true, default_value_t = 0.1)]
    dt: f64,

    /// Measure for the simulated state.
    #[arg(long, global = true, value_enum, default_value_t = MeasureArg::P)]
    measure: MeasureArg,

    #[arg(long, global = true, value_enum, default_value_t = PolicyArg::LongRun)]
    policy: PolicyArg,

    /// Simulation horizon in months.
    #[arg(long, global = true, default_value_t = 12.0)]
    horizon: f64,

    /// Horizon grid START:END[:STEP] in months (default 1:360).
    #[arg(long, global = true)]
    horizons: Option<String>,

    /// Initial state (default: long-run mean under the physical measure).
    #[arg(long, global = true, allow_hyphen_values = true)]
    y0: Option<f64>,

    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Value function, growth rate, policy and measure dynamics.
    Solve,
    /// Long-run optimality conditions; exit 0, 10 or 11.
    Check,
    /// Principal eigenvalue, tightness test and loss decay constant.
    Eigen1d,
    /// Certainty-equivalent loss bound curves for the long-run and myopic policies.
    Cel,
    /// Monte Carlo state, utility and deflated wealth.
    Simulate,
    /// Built-in calibration: threshold, solutions and loss curves.
    CalibrationDemo,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MeasureArg {
    P,
    Phat,
    Q,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PolicyArg {
    LongRun,
    Myopic,
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("LONGRUN_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::validation(format!("LONGRUN_THREADS = '{v}' is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::validation(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, CliError> {
    init_threads()?;
    let horizons = cli.horizons.as_deref().map(commands::parse_horizons).transpose()?;
    let opts = Options {
        config: cli.config,
        out: cli.out,
        format: cli.format.map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }),
        seed: cli.seed,
        paths: cli.paths,
        dt: cli.dt,
        measure: match cli.measure {
            MeasureArg::P => Measure::PhysicalP,
            MeasureArg::Phat => Measure::MyopicPhat,
            MeasureArg::Q => Measure::QOptimal,
        },
        policy: match cli.policy {
            PolicyArg::LongRun => PolicyChoice::LongRun,
            PolicyArg::Myopic => PolicyChoice::Myopic,
        },
        horizon: cli.horizon,
        horizons,
        y0: cli.y0,
        parallel: !cli.sequential,
    };
    match cli.command {
        Command::Solve => commands::solve(&opts),
        Command::Check => commands::check(&opts),
        Command::Eigen1d => commands::eigen(&opts),
        Command::Cel => commands::cel(&opts),
        Command::Simulate => commands::simulate(&opts),
        Command::CalibrationDemo => commands::calibration_demo(&opts),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
