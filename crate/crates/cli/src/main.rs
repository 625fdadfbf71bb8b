//! `rpsim`: radical-pair simulations, entropy-bound audits, γ scans, field
//! sweeps and Liouville spectra from presets or `key = value` configs.

mod commands;
mod config;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Expectation, Failure, Outcome};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "rpsim", version, about = "Radical-pair spin dynamics driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trajectory scalars, one row per stride step.
    Simulate(RunArgs),
    /// Entropy trace and Ozawa / Lanford-Robinson verdicts.
    Bounds {
        #[command(flatten)]
        run: RunArgs,
        /// Fail with exit code 4 unless the verdicts match, e.g. `ozawa=violated,lr=ok`.
        #[arg(long, value_name = "BOUND=VERDICT")]
        expect: Option<String>,
    },
    /// Verdicts under both theories across the `gammas` list.
    GammaScan(RunArgs),
    /// Yields, Groenewold information and ρ₃₅ yield over `b_grid`.
    Sweep(RunArgs),
    /// Eigenvalues of the non-reacting superoperator at field `b`.
    Spectrum(RunArgs),
}

/// Each flag overrides the config key of the same name (dashes for underscores).
#[derive(Args)]
struct RunArgs {
    /// fig1ab, fig1de, fig2 or fig3.
    #[arg(long)]
    preset: Option<String>,
    /// Flat `key = value` file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// HABERKORN or KOMINIS.
    #[arg(long)]
    theory: Option<String>,
    #[arg(long)]
    n_nuclei: Option<String>,
    /// Comma-separated `D<n>:<A>` / `A<n>:<A>` (1-based nucleus index).
    #[arg(long)]
    couplings: Option<String>,
    /// Field in units of A.
    #[arg(long, allow_negative_numbers = true)]
    b: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    k_s: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    k_t: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<String>,
    /// SINGLET_UP, MIXED_TRIPLET or CUSTOM.
    #[arg(long)]
    rho0: Option<String>,
    /// Product-basis matrix for rho0 = CUSTOM.
    #[arg(long)]
    rho0_file: Option<String>,
    /// Number or `auto`.
    #[arg(long, allow_negative_numbers = true)]
    t_max: Option<String>,
    /// Number or `auto`.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<String>,
    #[arg(long)]
    stride: Option<String>,
    /// `lo:hi:n` or a comma-separated list.
    #[arg(long)]
    b_grid: Option<String>,
    /// Ascending comma-separated list.
    #[arg(long)]
    gammas: Option<String>,
    /// trace-norm or frobenius.
    #[arg(long)]
    coherence: Option<String>,
    /// event-weighted or time-integral.
    #[arg(long)]
    c35: Option<String>,
    /// CSV destination; stdout when absent or `-`.
    #[arg(long, short)]
    out: Option<String>,
    #[arg(long)]
    plot_dir: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        [
            ("theory", &self.theory),
            ("n_nuclei", &self.n_nuclei),
            ("couplings", &self.couplings),
            ("b", &self.b),
            ("k_s", &self.k_s),
            ("k_t", &self.k_t),
            ("gamma", &self.gamma),
            ("rho0", &self.rho0),
            ("rho0_file", &self.rho0_file),
            ("t_max", &self.t_max),
            ("dt", &self.dt),
            ("stride", &self.stride),
            ("b_grid", &self.b_grid),
            ("gammas", &self.gammas),
            ("coherence", &self.coherence),
            ("c35", &self.c35),
            ("out", &self.out),
            ("plot_dir", &self.plot_dir),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
        .collect()
    }

    fn resolve(&self) -> Result<RunConfig, Failure> {
        Ok(RunConfig::resolve(
            self.preset.as_deref(),
            self.config.as_deref(),
            &self.overrides(),
        )?)
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a.resolve()?),
        Command::Bounds { run, expect } => {
            let expect = expect.map(|e| e.parse::<Expectation>()).transpose()?;
            commands::bounds(&run.resolve()?, expect.as_ref())
        }
        Command::GammaScan(a) => commands::gamma_scan_cmd(&a.resolve()?),
        Command::Sweep(a) => commands::sweep(&a.resolve()?),
        Command::Spectrum(a) => commands::spectrum(&a.resolve()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rpsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
