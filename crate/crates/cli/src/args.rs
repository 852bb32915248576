use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nugh::fitting::SeriesFormat;
use nugh::inversion::TailSide;
use nugh::montecarlo::DEFAULT_SEED;
use nugh::nu_families::NuFamily;
use serde::Serialize;

/// Random-sum generalized hyperbolic distributions: characteristic
/// functions, densities, sampling, verification and fitting.
#[derive(Debug, Parser, Serialize)]
#[command(name = "nugh", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output file; relative paths resolve against $NUGH_OUTPUT_DIR when set.
    /// Without it, output goes to $NUGH_OUTPUT_DIR/<command>.<ext> or stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Output format (reports are always JSON).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Random stream index for sampling commands.
    #[arg(long, global = true, default_value_t = 0)]
    pub stream: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Command {
    /// Tabulate the characteristic function g(t).
    Cf(CfArgs),
    /// Density on an equispaced grid.
    Pdf(PdfArgs),
    /// Distribution function at chosen points.
    Cdf(CdfArgs),
    /// Quantiles at chosen levels.
    Quantile(QuantileArgs),
    /// Draw samples.
    Sample(SampleArgs),
    /// Run the property suite and report every check.
    Check(CheckArgs),
    /// Exponential-tail diagnostic of the density.
    Tails(TailsArgs),
    /// Maximum-likelihood fit to a return or price series.
    Fit(FitArgs),
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct GhArgs {
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Formula {
    /// g = phi(-log f) with a tracked logarithm.
    Composed,
    /// The explicit closed forms.
    Closed,
}

#[derive(Debug, Args, Serialize)]
pub struct CfArgs {
    #[arg(long)]
    pub family: NuFamily,
    #[command(flatten)]
    pub gh: GhArgs,
    /// Single abscissa; overrides the grid flags.
    #[arg(long, allow_negative_numbers = true)]
    pub t: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t_min: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub t_max: f64,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = Formula::Composed)]
    pub formula: Formula,
}

#[derive(Debug, Args, Serialize)]
pub struct PdfArgs {
    #[arg(long)]
    pub family: NuFamily,
    #[command(flatten)]
    pub gh: GhArgs,
    /// Left end of the grid (default: mean - 40 sd).
    #[arg(long, allow_negative_numbers = true)]
    pub x_min: Option<f64>,
    /// Right end of the grid, excluded (default: mean + 40 sd).
    #[arg(long, allow_negative_numbers = true)]
    pub x_max: Option<f64>,
    #[arg(long, default_value_t = 4096)]
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct CdfArgs {
    #[arg(long)]
    pub family: NuFamily,
    #[command(flatten)]
    pub gh: GhArgs,
    /// Comma-separated abscissae; overrides the grid flags.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Vec<f64>,
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct QuantileArgs {
    #[arg(long)]
    pub family: NuFamily,
    #[command(flatten)]
    pub gh: GhArgs,
    /// Comma-separated probability levels in (0, 1).
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99])]
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Base law evaluated at a random time drawn from the mixing law.
    Mixture,
    /// p^(1/index) times a sum of nu_p draws from the base law.
    RandomSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    Gaussian,
    Laplace,
    Hsecant,
    Linnik,
    /// GH flags with lambda = -1/2.
    Nig,
    /// The nu-GH law given by --family and the GH flags.
    NuGh,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub family: NuFamily,
    #[command(flatten)]
    pub gh: GhArgs,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Method::Mixture)]
    pub method: Method,
    /// Summation parameter for --method random-sum.
    #[arg(long)]
    pub p: Option<f64>,
    /// Stability index in (0, 2] for --method random-sum.
    #[arg(long, default_value_t = 2.0)]
    pub index: f64,
    /// Summand law for --method random-sum.
    #[arg(long, value_enum, default_value_t = BaseKind::Nig)]
    pub base: BaseKind,
    /// Standard deviation of the Gaussian base.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Index of the Linnik base.
    #[arg(long, default_value_t = 1.0)]
    pub linnik_alpha: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    /// Restrict the suite to one family (default: both).
    #[arg(long)]
    pub family: Option<NuFamily>,
    /// Monte Carlo sample size.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TailsArgs {
    #[arg(long)]
    pub family: NuFamily,
    #[command(flatten)]
    pub gh: GhArgs,
    #[arg(long, value_parser = parse_side, default_value = "right")]
    pub side: TailSide,
    /// Inner quantile level of the window.
    #[arg(long, default_value_t = 0.995)]
    pub q_low: f64,
    /// Outer quantile level of the window.
    #[arg(long, default_value_t = 0.9999)]
    pub q_high: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x_max: Option<f64>,
    #[arg(long, default_value_t = 1 << 15)]
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub family: NuFamily,
    /// One value per row; a non-numeric first row is a header.
    #[arg(long)]
    pub input: PathBuf,
    /// Whether the series holds returns or prices (log returns are taken).
    #[arg(long, value_parser = parse_series_format, default_value = "returns")]
    pub input_format: SeriesFormat,
    /// Fit lambda as well (otherwise lambda = -1/2).
    #[arg(long)]
    pub free_lambda: bool,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value_t = 3000)]
    pub max_iterations: usize,
}

fn parse_side(s: &str) -> Result<TailSide, String> {
    match s {
        "left" => Ok(TailSide::Left),
        "right" => Ok(TailSide::Right),
        other => Err(format!("unknown side '{other}' (left or right)")),
    }
}

fn parse_series_format(s: &str) -> Result<SeriesFormat, String> {
    s.parse().map_err(|e: nugh::Error| e.to_string())
}
