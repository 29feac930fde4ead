use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lastiter_cli::{
    cmd_liftcheck, cmd_run, cmd_stages, cmd_sweep, cmd_verify, CliResult, GameSource, LiftCheckConfig, Outcome,
    RunConfig, StagesConfig, Stepsize, SweepConfig,
};
use lastiter_core::io::DEFAULT_OUTPUT_DIGITS;
use lastiter_core::Context;

#[derive(Parser)]
#[command(name = "lastiter", version, about = "Simulate optimistic learning dynamics in zero-sum matrix games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write its trajectory CSV.
    Run {
        #[arg(long, default_value = "oftrl")]
        algo: String,
        /// entropy | euclid | logbar | tsallis:<beta>
        #[arg(long)]
        reg: String,
        #[arg(long)]
        eta: Option<String>,
        #[arg(long)]
        adagrad_eps: Option<String>,
        /// hard:<delta> | file:<path> | lift:<delta>:<n>
        #[arg(long)]
        game: GameSource,
        #[arg(long)]
        iters: u64,
        /// Significant decimal digits.
        #[arg(long, default_value_t = Context::DEFAULT_DIGITS)]
        precision: u32,
        #[arg(long)]
        out: PathBuf,
        /// Store every k-th iterate (plus crossings and gap peaks).
        #[arg(long, default_value_t = 1)]
        thin: u64,
        /// Also write a two-panel SVG next to the CSV.
        #[arg(long)]
        svg: bool,
        /// Logarithmic gap axis in the SVG.
        #[arg(long)]
        log_gap: bool,
        /// Write every value at full internal precision.
        #[arg(long)]
        full_precision: bool,
        /// Significant digits per CSV value.
        #[arg(long, default_value_t = DEFAULT_OUTPUT_DIGITS)]
        digits: usize,
    },
    /// Stage report for a trajectory CSV of a run on the hard instance.
    Stages {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        delta: String,
        #[arg(long)]
        reg: String,
        #[arg(long)]
        eta: String,
        #[arg(long, default_value_t = Context::DEFAULT_DIGITS)]
        precision: u32,
    },
    /// Check the regularizer assumptions at a given delta (or `auto`).
    Verify {
        #[arg(long)]
        reg: String,
        #[arg(long)]
        delta: String,
        #[arg(long, default_value_t = Context::DEFAULT_DIGITS)]
        precision: u32,
    },
    /// Compare OFTRL on the 2x2 instance with OFTRL on its duplication lift.
    LiftCheck {
        #[arg(long)]
        delta: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        reg: String,
        #[arg(long)]
        eta: String,
        #[arg(long)]
        iters: u64,
        #[arg(long, default_value_t = Context::DEFAULT_DIGITS)]
        precision: u32,
    },
    /// Flat-region length for several values of delta.
    Sweep {
        #[arg(long, default_value = "oftrl")]
        algo: String,
        #[arg(long)]
        reg: String,
        #[arg(long)]
        eta: String,
        /// Comma-separated list; may be empty.
        #[arg(long, default_value = "")]
        deltas: String,
        #[arg(long)]
        iters: u64,
        #[arg(long, default_value_t = Context::DEFAULT_DIGITS)]
        precision: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cmd: Command) -> CliResult<Outcome> {
    Ok(match cmd {
        Command::Run {
            algo,
            reg,
            eta,
            adagrad_eps,
            game,
            iters,
            precision,
            out,
            thin,
            svg,
            log_gap,
            full_precision,
            digits,
        } => {
            let cfg = RunConfig {
                algo,
                reg,
                stepsize: Stepsize::from_flags(eta, adagrad_eps)?,
                game,
                iters,
                precision,
                out,
                thin,
                svg,
                log_gap,
                full_precision,
                digits,
            };
            cmd_run(&cfg)?.outcome
        }
        Command::Stages {
            csv,
            delta,
            reg,
            eta,
            precision,
        } => {
            cmd_stages(&StagesConfig {
                csv,
                delta,
                reg,
                eta,
                precision,
            })?
            .0
        }
        Command::Verify { reg, delta, precision } => cmd_verify(&reg, &delta, precision)?.0,
        Command::LiftCheck {
            delta,
            n,
            reg,
            eta,
            iters,
            precision,
        } => {
            cmd_liftcheck(&LiftCheckConfig {
                delta,
                copies: n,
                reg,
                eta,
                iters,
                precision,
            })?
            .0
        }
        Command::Sweep {
            algo,
            reg,
            eta,
            deltas,
            iters,
            precision,
            out,
        } => {
            let deltas = deltas
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            let res = cmd_sweep(&SweepConfig {
                algo,
                reg,
                eta,
                deltas,
                iters,
                precision,
                out,
            })?;
            for w in &res.warnings {
                eprintln!("{w}");
            }
            res.outcome
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
