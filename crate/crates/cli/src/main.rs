mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "nlsp", version, about = "Radial cubic NLS with a potential: solitons, spectra, dynamics near the excited states")]
pub struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "nlsp-out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sweeps (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct InitialData {
    /// Binary field dump to start from (overrides the chart coordinates)
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub b_plus: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub b_minus: f64,
    /// Coefficients on the zeta frame, comma separated
    #[arg(long, default_value = "", allow_hyphen_values = true)]
    pub zeta: String,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Q and Q_omega with their functionals
    Soliton {
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Unstable eigenpair and operator certificates at omega
    Spectrum {
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Integrate data near Q_omega and stream diagnostics
    Evolve {
        #[command(flatten)]
        data: InitialData,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        duration: f64,
    },
    /// Forward and backward verdicts
    Classify {
        #[command(flatten)]
        data: InitialData,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Bisection samples of the center-stable graph
    Manifold {
        /// lambda_- values, comma separated
        #[arg(long, default_value = "0,1e-3,2e-3,4e-3,8e-3", allow_hyphen_values = true)]
        lambda_minus: String,
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        zeta: String,
        /// Additional random samples with zeta frame coefficients
        #[arg(long, default_value_t = 0)]
        random: usize,
    },
    /// Nine-class catalog around the intersection point
    Nineclass {
        #[arg(long, default_value = "2e-3,0,1e-3,0", allow_hyphen_values = true)]
        zeta: String,
    },
    /// Regenerate the calibration file (eps_V / kappa_V tables)
    Calibrate {
        #[arg(long, default_value_t = 400)]
        samples: usize,
        #[arg(long, default_value = "0.005,0.01,0.02,0.05,0.1,0.2,0.3,0.5")]
        deltas: String,
    },
    /// Energy curves along the excited branch
    Curves {
        /// "1e2..1e6" (decades) or a comma list
        #[arg(long, default_value = "1e2..1e6")]
        omega: String,
        #[arg(long, default_value_t = 1)]
        per_decade: usize,
    },
    /// Invariant suite
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match config::RunConfig::load(cli.config.as_deref(), cli.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
