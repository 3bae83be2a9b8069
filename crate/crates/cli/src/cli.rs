use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::{commands, exit};

#[derive(Debug, Parser)]
#[command(name = "nlc", version, about = "Learn and certify neural Lyapunov functions with linear controllers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the learner/falsifier loop and write a run directory.
    Synthesize(SynthesizeArgs),
    /// Check a checkpoint's Lyapunov conditions with the falsifier.
    Verify(VerifyArgs),
    /// Certify a region of attraction and compare it with the LQR baseline.
    Roa(RoaArgs),
    /// Simulate the closed loop from given initial states.
    Simulate(SimulateArgs),
    /// List the built-in benchmarks.
    BenchList,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Built-in benchmark, e.g. `pendulum` or `nlink(3)`.
    #[arg(long, conflicts_with = "system")]
    pub bench: Option<String>,
    /// System file in s-expression form.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// JSON run configuration; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_cegis: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory (default `runs/<system>-seed<seed>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub checkpoint: PathBuf,
    /// Defaults to the epsilon recorded in the checkpoint.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Defaults to the recorded delta, else `min(0.01, epsilon / 10)`.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Accept `LieV < relaxation` instead of `LieV < 0`.
    #[arg(long)]
    pub relaxation: Option<f64>,
    #[arg(long)]
    pub max_boxes: Option<u64>,
    /// Falsifier time limit in seconds.
    #[arg(long)]
    pub max_time: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RoaArgs {
    pub checkpoint: PathBuf,
    /// Output directory for `roa_grid.csv`, `trajectories.csv` and
    /// `roa.json` (default: the checkpoint's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run configuration supplying LQR weights for the baseline.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    pub grid_n: usize,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 20)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 20.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Checkpoint whose controller is used.
    #[arg(required_unless_present = "bench", conflicts_with = "bench")]
    pub checkpoint: Option<PathBuf>,
    /// Simulate a benchmark under its LQR controller instead.
    #[arg(long)]
    pub bench: Option<String>,
    /// Initial state as comma-separated values; repeat for several.
    #[arg(long = "x0", required = true, value_delimiter = ';')]
    pub x0: Vec<String>,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the exit code. Normal
/// output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synthesize(a) => commands::synthesize(a, out),
        Command::Verify(a) => commands::verify(a, out),
        Command::Roa(a) => commands::roa(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
        Command::BenchList => commands::bench_list(out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
