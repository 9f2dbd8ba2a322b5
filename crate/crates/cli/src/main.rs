mod commands;
mod error;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

const CSV_HELP: &str = "\
CSV columns (one row per quadrature node, both signs of the frequency, sorted):
  lambda            frequency λ
  ln_det_delta      ln det Δ_θ(λ)
  re_ln_det_d       Re ln det D_θ(λ)
  lambda_min_delta  smallest eigenvalue of Δ_θ(λ)
  trace_phi         tr Φ(λ)
  norm_psi          spectral norm of Ψ(λ)
  weight            quadrature weight of the node on the half line";

#[derive(Debug, Parser)]
#[command(name = "qefsynth", version, about = "Risk-sensitive coherent quantum controller analysis and synthesis")]
pub struct Cli {
    /// Worker threads for frequency-node evaluation (QEFSYNTH_THREADS overrides).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Model file (JSON).
    pub model: PathBuf,
    /// Risk-sensitivity parameter; defaults to the value in the model file.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Relative and absolute quadrature tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub quad_tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check dimensions, physical realizability, stability and (with θ) the spectral condition.
    Validate(ModelArgs),
    /// QEF growth rate by both log-determinant routes, or the mean-square rate.
    #[command(after_help = CSV_HELP)]
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        /// Report the mean-square rate Υ_* instead.
        #[arg(long)]
        mean_square: bool,
        /// Write per-node frequency data to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Core matrix and controller gradients.
    Grad {
        #[command(flatten)]
        model: ModelArgs,
        /// Use the mean-square core matrix from the Gramians.
        #[arg(long)]
        mean_square: bool,
    },
    /// Core matrix by frequency quadrature against the cascade state-space route.
    Crosscheck {
        #[command(flatten)]
        model: ModelArgs,
        /// Cascade order N; chosen by the tail rule when omitted.
        #[arg(long)]
        order: Option<usize>,
        /// Double-series truncation J_max; defaults to N.
        #[arg(long)]
        series_order: Option<usize>,
        /// Pass threshold on scaled block deltas.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Gradient descent on Υ_θ from the model's controller or a mean-square initialization.
    Optimize(OptimizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    /// Controller stored in the model file.
    Model,
    /// Local minimizer of the mean-square cost reached from the model's controller (random seed if unstable).
    Cqlqg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    /// Steepest descent on Υ_θ.
    Descent,
    /// Weighted mean-square outer iteration.
    Weighted,
}

#[derive(Debug, Args, Clone)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Absolute stationarity tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol_stat: f64,
    /// Stop also below this fraction of the initial residual.
    #[arg(long, default_value_t = 0.0)]
    pub rel_tol: f64,
    /// Solve for θ/8, θ/4, θ/2, θ in turn.
    #[arg(long)]
    pub continuation: bool,
    /// Seed for random admissible seeding.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = InitKind::Cqlqg)]
    pub init: InitKind,
    #[arg(long, value_enum, default_value_t = Scheme::Descent)]
    pub scheme: Scheme,
    /// Outer steps K of the weighted scheme.
    #[arg(long, default_value_t = 20)]
    pub outer: usize,
    /// Output directory for trace.jsonl and model.json.
    #[arg(long, default_value = "qefsynth-out")]
    pub out: PathBuf,
}

fn configure_threads(flag: Option<usize>) -> error::Result<()> {
    let env = match std::env::var("QEFSYNTH_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| error::CliError::Usage(format!("QEFSYNTH_THREADS must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    if let Some(n) = env.or(flag) {
        if n == 0 {
            return Err(error::CliError::Usage("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| error::CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let outcome = configure_threads(cli.threads).and_then(|_| commands::run(&cli.command));
    match outcome {
        Ok(report) => println!("{}", serde_json::to_string_pretty(&report).expect("report serialization")),
        Err(e) => {
            println!("{}", serde_json::to_string_pretty(&e.report()).expect("report serialization"));
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
