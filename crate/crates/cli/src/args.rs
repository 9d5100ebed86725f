use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "bmcoll",
    version,
    about = "Upper-tail large deviations of one-sided colliding Brownian motions"
)]
pub struct Cli {
    /// key=value file supplying defaults for any flag (flags win).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write results here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IcArg {
    Packed,
    Flat,
    #[value(alias = "stat")]
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IcOrAll {
    All,
    Packed,
    Flat,
    #[value(alias = "stat")]
    Stationary,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate functions and saddle points on an a-grid.
    #[command(allow_negative_numbers = true)]
    Rates(RatesArgs),
    /// One-point probability P(x_t(t) <= (2+a)t) from the Fredholm determinant.
    #[command(allow_negative_numbers = true)]
    Prob(ProbArgs),
    /// Finite-t rate estimates -log P(x_t(t) > (2+a)t)/t.
    #[command(allow_negative_numbers = true)]
    Tail(TailArgs),
    /// Monte Carlo of the particle system.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// The flat rate function with its small- and large-a approximations.
    #[command(allow_negative_numbers = true)]
    Figure1(Figure1Args),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[arg(long, value_enum, default_value_t = IcOrAll::All)]
    pub ic: IcOrAll,
    #[arg(long, default_value_t = 0.01)]
    pub a_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub a_max: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Evenly spaced instead of log-spaced a values.
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Args)]
pub struct ProbArgs {
    #[arg(long, value_enum)]
    pub ic: IcArg,
    #[arg(long)]
    pub t: f64,
    #[arg(long)]
    pub a: f64,
    /// Density of the stationary system (< 1 selects the continued formula).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Offset of the level above (2+a)t (packed and flat).
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
    #[arg(long, default_value_t = 48)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 768)]
    pub max_grid_size: usize,
}

#[derive(Debug, Args)]
pub struct TailArgs {
    #[arg(long, value_enum)]
    pub ic: IcArg,
    #[arg(long)]
    pub a: f64,
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    pub t_list: Vec<f64>,
    #[arg(long, default_value_t = 48)]
    pub grid_size: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub ic: IcArg,
    #[arg(long)]
    pub t: u32,
    /// Defaults to 1e-4 max(1, t).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    /// Defaults to 4t.
    #[arg(long)]
    pub cutoff: Option<u32>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report the tail fraction above (2+a)t.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Reflect against grid values only.
    #[arg(long)]
    pub no_bridge: bool,
    /// Emit every draw instead of the summary.
    #[arg(long)]
    pub samples: bool,
}

#[derive(Debug, Args)]
pub struct Figure1Args {
    #[arg(long, default_value_t = 6.0)]
    pub a_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Small samples and grids; seconds instead of minutes.
    #[arg(long)]
    pub fast: bool,
    /// Comma-separated criterion numbers.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
}
