//! Command-line front end: `explain`, `compare`, `benchmark` and `gen-fixtures`.
//!
//! Failures print one JSON line `{"error": code, "message": text}` on stderr and exit
//! with 2 (configuration or validation), 3 (numeric failure) or 4 (I/O).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shapkit::ShapError;

mod commands;
mod input;
mod output;

pub use output::sha256_hex;

#[derive(Debug, Parser)]
#[command(name = "shapkit", version, about = "Shapley additive explanations for tabular models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one prediction.
    Explain(ExplainArgs),
    /// Run several methods on the same prediction and report their deviations.
    Compare(CompareArgs),
    /// Run a convergence or masking benchmark.
    Benchmark(BenchmarkArgs),
    /// Write the seeded fixture files and a hash manifest.
    GenFixtures(GenFixturesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackgroundMode {
    Independence,
    Mean,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Model document (linear, tree, mlp or max).
    #[arg(long, value_name = "PATH", conflicts_with = "game")]
    pub model: Option<PathBuf>,
    /// Tabulated game document; explains the game directly.
    #[arg(long, value_name = "PATH")]
    pub game: Option<PathBuf>,
    /// Numeric CSV with a header row holding the instances.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Row of `--data` to explain.
    #[arg(long, value_name = "INT", default_value_t = 0)]
    pub instance: usize,
    /// Background CSV; defaults to `--data` without the explained row.
    #[arg(long, value_name = "PATH")]
    pub background: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BackgroundMode::Independence)]
    pub background_mode: BackgroundMode,
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    /// Coalition budget for `kernel`.
    #[arg(long, value_name = "INT")]
    pub budget: Option<usize>,
    /// Permutations for `sampling`.
    #[arg(long, value_name = "INT")]
    pub permutations: Option<usize>,
    /// Debiased lasso for `kernel`: a penalty, or `auto` for cross-validation.
    #[arg(long, value_name = "LAMBDA")]
    pub lasso: Option<String>,
    /// Largest feature count handled by `low-order`.
    #[arg(long, value_name = "INT")]
    pub threshold: Option<usize>,
    /// Output unit explained by `deep`.
    #[arg(long, value_name = "INT")]
    pub output_index: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "exact")]
    pub method: String,
    #[command(flatten)]
    pub params: MethodArgs,
    /// Write here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Methods to run; repeat the flag or separate with commas.
    #[arg(long = "method", value_delimiter = ',', default_value = "exact,kernel")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub params: MethodArgs,
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    /// `dense_tree`, `sparse_tree` or `masking`.
    #[arg(long)]
    pub scenario: String,
    /// Directory for the result tables and manifest.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Convergence budgets; the scenario default when omitted.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long, default_value_t = shapkit::bench::DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Convergence methods: kernel, kernel+lasso, sampling.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Attribution method ranking features in the masking scenario.
    #[arg(long, default_value = "deep")]
    pub method: String,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,1")]
    pub fractions: Vec<f64>,
    /// Instances in the masking scenario.
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenFixturesArgs {
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit code and stable error code for a failure.
pub fn classify(err: &anyhow::Error) -> (i32, &'static str) {
    if let Some(e) = err.downcast_ref::<ShapError>() {
        let exit = match e {
            ShapError::Numeric(_) | ShapError::Singular(_) => 3,
            ShapError::Io(_) => 4,
            _ => 2,
        };
        return (exit, e.code());
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return (4, "io");
    }
    (2, "config")
}

/// Single-line machine-readable error document.
pub fn error_line(err: &anyhow::Error) -> String {
    let (_, code) = classify(err);
    serde_json::json!({ "error": code, "message": format!("{err:#}") }).to_string()
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Explain(args) => commands::explain(&args),
        Command::Compare(args) => commands::compare(&args),
        Command::Benchmark(args) => commands::benchmark(&args),
        Command::GenFixtures(args) => commands::gen_fixtures(&args),
    }
}
