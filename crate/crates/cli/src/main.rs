mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fedhc_core::Error;

#[derive(Parser, Debug)]
#[command(name = "fedhc", version, about = "Hybrid Bayesian network structure learning")]
struct Cli {
    /// Worker threads; defaults to the available hardware parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a network from a CSV file.
    Learn(LearnArgs),
    /// Flag multivariate outliers with the reweighted MCD estimator.
    Outliers(OutlierArgs),
    /// Sample a dataset from a random Gaussian network or a discrete network file.
    Simulate(SimulateArgs),
    /// Run a simulation benchmark and stream one CSV record per run.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Fedhc,
    Pchc,
    Mmhc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pearson,
    Spearman,
    Cat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CategoricalTestArg {
    G2,
    X2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NullArg {
    Normal,
    T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SearchArg {
    Hc,
    Tabu,
}

#[derive(Args, Debug)]
pub struct LearnArgs {
    /// Headed CSV file, one column per variable.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "fedhc")]
    pub algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value = "pearson")]
    pub method: MethodArg,
    /// Statistic for categorical data.
    #[arg(long, value_enum, default_value = "g2")]
    pub ci_test: CategoricalTestArg,
    /// Reference distribution of the Fisher z statistic.
    #[arg(long = "null", value_enum, default_value = "normal")]
    pub null_ref: NullArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Remove outliers before learning (continuous data only).
    #[arg(long)]
    pub robust: bool,
    /// Random restarts of the search.
    #[arg(long, default_value_t = 10)]
    pub restart: usize,
    /// bic-g, loglik-g, aic-g, bic, loglik, bdeu or bdeu:<iss>.
    #[arg(long)]
    pub score: Option<String>,
    #[arg(long, value_enum, default_value = "hc")]
    pub search: SearchArg,
    /// CSV with header `from,to` listing forbidden arrows.
    #[arg(long)]
    pub blacklist: Option<PathBuf>,
    /// CSV with header `from,to` listing required arrows.
    #[arg(long)]
    pub whitelist: Option<PathBuf>,
    /// Largest conditioning set for mmhc and pchc.
    #[arg(long, default_value_t = 3)]
    pub max_k: usize,
    /// Extra forward sweeps for fedhc.
    #[arg(long, default_value_t = 0)]
    pub fbed_runs: usize,
    /// Run the backward phase of fedhc's selection.
    #[arg(long)]
    pub backward: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Precomputed correlation matrix (headerless CSV) of the same data.
    #[arg(long, conflicts_with_all = ["save_corr", "robust"])]
    pub corr: Option<PathBuf>,
    /// Write the correlation matrix for reuse with `--corr`.
    #[arg(long)]
    pub save_corr: Option<PathBuf>,
    #[arg(long)]
    pub out_dot: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OutlierArgs {
    /// Headed CSV file of continuous variables.
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Number of variables of the random network.
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    #[arg(long, default_value_t = 3.0)]
    pub avg_neighbors: f64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Discrete network JSON to sample from instead of a random Gaussian one.
    #[arg(long, conflicts_with = "outliers")]
    pub network: Option<PathBuf>,
    /// Fraction of rows replaced by outliers.
    #[arg(long)]
    pub outliers: Option<f64>,
    /// Outlier shift in column standard deviations.
    #[arg(long, default_value_t = 10.0)]
    pub magnitude: f64,
    #[arg(long)]
    pub out_data: PathBuf,
    #[arg(long)]
    pub out_dag: Option<PathBuf>,
    #[arg(long)]
    pub out_cpdag: Option<PathBuf>,
    /// Per-row contamination labels (`index,outlier`).
    #[arg(long, requires = "outliers")]
    pub out_labels: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    #[arg(long, default_value_t = 3.0)]
    pub avg_neighbors: f64,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// Algorithms, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "fedhc")]
    pub algorithms: Vec<AlgorithmArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10)]
    pub restart: usize,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InconsistentConstraints(_) => 3,
            Error::InvalidGraph(_)
            | Error::SingularConditioningSet
            | Error::InsufficientSample { .. }
            | Error::DegenerateTable
            | Error::SingularRegression => 4,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure {
                code: 4,
                message: format!("cannot start the thread pool: {e}"),
            })?;
    }
    match cli.command {
        Command::Learn(args) => commands::learn(&args),
        Command::Outliers(args) => commands::outliers(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Bench(args) => commands::bench(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(4),
    }
}
