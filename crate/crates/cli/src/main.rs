//! `pfair`: simulate data, fit the two outcome models, and audit principal
//! fairness, with every stage reading and writing plain files.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{AssessArgs, FitArgs, SimulateArgs};

#[derive(Debug, Parser)]
#[command(
    name = "pfair",
    version,
    about = "Principal fairness auditing for binary decisions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset with known strata (writes data.csv and truth.csv).
    Simulate {
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Fit the outcome models of both decision arms.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        fit: FitFlags,
    },
    /// Impute potential outcomes and write the fairness report.
    Assess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
        /// Directory holding posterior_y0.txt and posterior_y1.txt
        /// (defaults to the output directory).
        #[arg(long)]
        posteriors: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        assess: AssessFlags,
    },
    /// simulate, fit and assess in one run, all in the output directory.
    Pipeline {
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long)]
        output_dir: PathBuf,
        #[command(flatten)]
        fit: FitFlags,
        #[command(flatten)]
        assess: AssessFlags,
    },
}

#[derive(Debug, Args)]
struct SimFlags {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    theta_d: f64,
    /// p(D=1|h,a) for h = stable, treatable, better_without, severe and a = 0, 1.
    #[arg(long, value_delimiter = ',', num_args = 8)]
    decision_probs: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct FitFlags {
    #[arg(long, default_value_t = 1.0)]
    prior_std: f64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 3000)]
    steps: usize,
    #[arg(long, default_value_t = 8)]
    mc_samples: usize,
}

#[derive(Debug, Args)]
struct AssessFlags {
    #[arg(long, default_value_t = 100)]
    draws: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

impl SimFlags {
    fn args(&self, output_dir: PathBuf) -> SimulateArgs {
        SimulateArgs {
            output_dir,
            seed: self.seed,
            n: self.n,
            m: self.m,
            theta_d: self.theta_d,
            decision_probs: self.decision_probs.clone(),
        }
    }
}

impl FitFlags {
    fn args(&self, input: PathBuf, output_dir: PathBuf, seed: u64) -> FitArgs {
        FitArgs {
            input,
            output_dir,
            seed,
            prior_std: self.prior_std,
            learning_rate: self.lr,
            steps: self.steps,
            mc_samples: self.mc_samples,
        }
    }
}

impl AssessFlags {
    fn args(
        &self,
        input: PathBuf,
        posteriors: PathBuf,
        output_dir: PathBuf,
        seed: u64,
    ) -> AssessArgs {
        AssessArgs {
            input,
            posteriors,
            output_dir,
            seed,
            draws: self.draws,
            format: self.format,
        }
    }
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    match cli.command {
        Command::Simulate { sim, output_dir } => commands::simulate(&sim.args(output_dir)),
        Command::Fit {
            input,
            output_dir,
            seed,
            fit,
        } => commands::fit(&fit.args(input, output_dir, seed)),
        Command::Assess {
            input,
            output_dir,
            posteriors,
            seed,
            assess,
        } => {
            let posteriors = posteriors.unwrap_or_else(|| output_dir.clone());
            commands::assess(&assess.args(input, posteriors, output_dir, seed))
        }
        Command::Pipeline {
            sim,
            output_dir,
            fit,
            assess,
        } => {
            let data = output_dir.join(commands::DATA_FILE);
            commands::simulate(&sim.args(output_dir.clone()))?;
            commands::fit(&fit.args(data.clone(), output_dir.clone(), sim.seed))?;
            commands::assess(&assess.args(data, output_dir.clone(), output_dir, sim.seed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
