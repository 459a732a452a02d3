//! Command-line front end: measures, protocol runs, verification tables and
//! parameter sweeps.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use output::Format;

const STATE_HELP: &str = "\
States are given as `family[:param[,param]]` or `file:PATH`:
  bell                 (|00> + |11>)/sqrt(2)
  werner:P             singlet weight P, rest uniform on the triplet
  isotropic:F          weight F on |Phi+>, rest uniform on its complement
  ghz:K | ghzK         K-qubit GHZ state
  maxcorr:M            classically correlated M-level pair
  random:SEED,DxD,RANK Haar-random purification, e.g. random:7,2x2,4
  file:PATH            JSON state file

Exit codes: 0 success, 1 bad input or a failed check, 2 solver failure or dimension blowup.";

#[derive(Parser, Debug)]
#[command(name = "disent", version, about = "Entanglement measures and catalytic disentangling", after_help = STATE_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Approx {
    Ppt,
    Ensemble,
    Both,
}

impl Approx {
    pub fn ppt(self) -> bool {
        self != Approx::Ensemble
    }

    pub fn ensemble(self) -> bool {
        self != Approx::Ppt
    }
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VerifyKind {
    Lemma,
    Thm1,
    Recovery,
    Appendix,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Entropies, mutual information, relative entropy of entanglement and max-divergences of one state.
    Measure {
        #[arg(long)]
        state: String,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Approx::Both)]
        approx: Approx,
        #[command(flatten)]
        output: Output,
    },
    /// Searches separable catalysts for the fewest registers that disentangle the state.
    Protocol {
        #[arg(long)]
        state: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_enum, default_value_t = Approx::Both)]
        approx: Approx,
        #[command(flatten)]
        output: Output,
    },
    /// Emits a verification table; fails unless every row passes.
    Verify {
        #[arg(value_enum)]
        kind: VerifyKind,
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// State for the recovery and appendix checks.
        #[arg(long)]
        state: Option<String>,
        /// Number of registers; defaults to the budget (recovery) or 2 (appendix).
        #[arg(long = "M")]
        m: Option<usize>,
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// One row of measures per grid point: `FAMILY=START:STOP:STEP` (werner, isotropic)
    /// or `eps=START:STOP:STEP` together with --state.
    Sweep {
        #[arg(long)]
        grid: String,
        #[arg(long)]
        state: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Approx::Both)]
        approx: Approx,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<disent::Error>() {
        Some(disent::Error::SolverFailure(_) | disent::Error::DimensionBlowup { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Measure {
            state,
            eps,
            tol,
            approx,
            output,
        } => commands::measure(&state, eps, tol, approx, &output),
        Command::Protocol {
            state,
            eps,
            delta,
            approx,
            output,
        } => commands::protocol(&state, eps, delta, approx, &output),
        Command::Verify {
            kind,
            grid,
            seed,
            state,
            m,
            eps,
            threads,
            output,
        } => commands::verify(kind, &grid, seed, state.as_deref(), m, eps, threads, &output),
        Command::Sweep {
            grid,
            state,
            eps,
            tol,
            approx,
            seed,
            threads,
            output,
        } => commands::sweep(&grid, state.as_deref(), eps, tol, approx, seed, threads, &output),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
