use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use paratrend::longrun::{DEFAULT_RHO, DEFAULT_TAU};
use paratrend::test_engine::{DEFAULT_ALPHA, DEFAULT_SEED, DEFAULT_SIMS};

#[derive(Debug, Parser)]
#[command(name = "paratrend", version, about = "Test whether time series trends are parallel, and cluster them")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "PARATREND_WORKERS")]
    pub workers: Option<usize>,

    /// Directory for JSON and CSV outputs.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test whether all (or selected) series share a trend up to shifts.
    Test(TestCommandArgs),
    /// Split series into maximal groups with parallel trends.
    Cluster(ClusterArgs),
    /// Generate panels or run Monte Carlo studies.
    Simulate(SimulateArgs),
    /// Estimate the long-run variance function from residuals.
    Longrun(LongrunArgs),
    /// Select the smoothing bandwidth by generalized cross-validation.
    Bandwidth(BandwidthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Epanechnikov,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NullArg {
    Spectral,
    Direct,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Panel as delimited text, one column per series unless `--series-in-rows`.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Field delimiter; tab for .tsv/.tab files, comma otherwise.
    #[arg(long)]
    pub delimiter: Option<char>,
    /// First record holds series names.
    #[arg(long, conflicts_with = "no_header")]
    pub header: bool,
    /// First record is data.
    #[arg(long)]
    pub no_header: bool,
    /// One row per series instead of one column per series.
    #[arg(long)]
    pub series_in_rows: bool,
    /// Sum consecutive blocks of this many observations.
    #[arg(long)]
    pub aggregate: Option<usize>,
    /// Take base-10 logarithms after aggregation.
    #[arg(long)]
    pub log10: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LongRunArgs {
    /// Window half-width in rescaled time.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Truncation lag as a fraction of the window size.
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    /// Points of the grid the long-run variance is reported on.
    #[arg(long, default_value_t = paratrend::longrun::DEFAULT_GRID_SIZE)]
    pub longrun_grid: usize,
    /// Bandwidth of the fit whose residuals are used; max(0.05, 2/T) by default.
    #[arg(long)]
    pub residual_bandwidth: Option<f64>,
    /// Skip the correction for variance absorbed by the residual fit.
    #[arg(long)]
    pub no_residual_correction: bool,
    /// Center each series at its window mean before forming autocovariances.
    #[arg(long)]
    pub window_centering: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "epanechnikov")]
    pub kernel: KernelArg,
    /// Fixed bandwidth in rescaled time.
    #[arg(long, conflicts_with = "auto_bandwidth")]
    pub bandwidth: Option<f64>,
    /// Select the bandwidth by GCV (the default without `--bandwidth`).
    #[arg(long)]
    pub auto_bandwidth: bool,
    /// Integrate on this many equispaced points instead of the design points.
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[command(flatten)]
    pub longrun: LongRunArgs,
    #[arg(long, default_value_t = DEFAULT_SIMS)]
    pub sims: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "spectral")]
    pub null_method: NullArg,
    /// Scale surrogates by g instead of its square root.
    #[arg(long)]
    pub literal_scale: bool,
    /// Report the asymptotic normal standardization too.
    #[arg(long)]
    pub normal_diag: bool,
    /// Long-run variance as `u,g` CSV, replacing the residual estimate.
    #[arg(long)]
    pub longrun_file: Option<PathBuf>,
    /// Write the sorted null sample to null_samples.csv.
    #[arg(long)]
    pub null_csv: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TestCommandArgs {
    #[command(flatten)]
    pub common: TestArgs,
    /// Test only these series (1-based, comma separated). Trends and the
    /// long-run variance are still estimated on the full panel.
    #[arg(long, value_delimiter = ',')]
    pub members: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub common: TestArgs,
    /// Initial removal batch size; max(1, N/20) by default.
    #[arg(long)]
    pub n_remove: Option<usize>,
    /// Remove the smallest contributors instead of the largest.
    #[arg(long)]
    pub strict_notation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Generate,
    Acceptance,
    Power,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub study: Study,
    /// Series lengths (acceptance accepts a list).
    #[arg(long = "t", value_delimiter = ',', default_value = "300")]
    pub t: Vec<usize>,
    /// Numbers of series (acceptance accepts a list).
    #[arg(long = "n", value_delimiter = ',', default_value = "100")]
    pub n: Vec<usize>,
    /// Bandwidths; acceptance defaults to 0.3,0.4,0.5 and power to 0.4.
    #[arg(long = "b", value_delimiter = ',')]
    pub b: Option<Vec<f64>>,
    /// Distorted proportions.
    #[arg(long = "p", value_delimiter = ',', default_value = "0.1,0.3,0.5")]
    pub p: Vec<f64>,
    /// Distortion magnitudes.
    #[arg(long = "a", value_delimiter = ',', default_value = "0,0.5,1,2")]
    pub a: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 1000)]
    pub sims: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "epanechnikov")]
    pub kernel: KernelArg,
    /// Use the residual long-run variance estimate instead of the true one.
    #[arg(long)]
    pub estimated_longrun: bool,
    #[command(flatten)]
    pub longrun: LongRunArgs,
    #[arg(long, value_enum, default_value = "spectral")]
    pub null_method: NullArg,
    #[arg(long)]
    pub literal_scale: bool,
    #[arg(long, default_value_t = paratrend::sim::DEFAULT_MA_TRUNCATION)]
    pub ma_truncation: usize,
    /// Generate errors by the time-varying recursion instead of the moving average.
    #[arg(long)]
    pub recursion: bool,
}

#[derive(Debug, Clone, Args)]
pub struct LongrunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "epanechnikov")]
    pub kernel: KernelArg,
    #[command(flatten)]
    pub longrun: LongRunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BandwidthArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "epanechnikov")]
    pub kernel: KernelArg,
    /// Number of log-spaced candidates on [2/T, 0.5].
    #[arg(long, default_value_t = 15)]
    pub candidates: usize,
    /// Explicit candidate list, overriding `--candidates`.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Pilot bandwidth for the residual covariance.
    #[arg(long)]
    pub pilot: Option<f64>,
    /// Band width of the residual covariance; floor(T^(4/15)) by default.
    #[arg(long)]
    pub band: Option<usize>,
}
