use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "hdq", version, about = "Two-level hysteretic M/M/1 queue: exact law, diffusion limit, simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Stationary probabilities in closed form.
    #[command(allow_negative_numbers = true)]
    Exact {
        #[command(flatten)]
        model: ModelArgs,
        /// Last level listed; the remaining mass is reported as a tail row.
        #[arg(long)]
        lmax: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Region moment generating functions.
    #[command(allow_negative_numbers = true)]
    Mgf {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        theta: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Density, CDF and constants of the diffusion limit.
    #[command(allow_negative_numbers = true)]
    Diffusion {
        #[command(flatten)]
        limit: LimitArgs,
        /// Evaluation points; defaults to a uniform grid.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, default_value_t = 20.0)]
        grid_end: f64,
        #[arg(long, default_value_t = 0.25)]
        grid_step: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Diffusion approximation of the mean queue length.
    #[command(allow_negative_numbers = true)]
    Approx {
        #[command(flatten)]
        seq: SequenceArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact and approximate means along a scaling sequence.
    #[command(allow_negative_numbers = true)]
    Table1 {
        #[command(flatten)]
        seq: SequenceArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [10u64, 100, 1000, 10000])]
        n: Vec<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact and approximate means over a range of b1.
    #[command(name = "sweep-b1")]
    #[command(allow_negative_numbers = true)]
    SweepB1 {
        #[command(flatten)]
        seq: SequenceArgs,
        #[arg(long = "b1-values", value_delimiter = ',', required = true, allow_hyphen_values = true)]
        b1_values: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        n: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Discrete-event simulation with batch-means intervals.
    #[command(allow_negative_numbers = true)]
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1e6)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        warmup: f64,
        #[arg(long, default_value_t = 20)]
        batches: u32,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Runs the built-in consistency checks.
    #[command(allow_negative_numbers = true)]
    Validate {
        /// Number of random models.
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
        /// Corrupts the closed form to exercise the failure path.
        #[arg(long, hide = true)]
        inject_fault: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Either the four rates or the three ratios, plus the two levels.
#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// JSON file with model keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub rho1: Option<f64>,
    #[arg(long)]
    pub rho2: Option<f64>,
    #[arg(long)]
    pub rho12: Option<f64>,
    #[arg(long)]
    pub ell_d: Option<u64>,
    #[arg(long)]
    pub ell_u: Option<u64>,
}

/// Diffusion-limit parameters.
#[derive(Args, Debug)]
pub struct LimitArgs {
    #[arg(long, default_value_t = 1.0)]
    pub b1: f64,
    #[arg(long, default_value_t = -1.0)]
    pub b2: f64,
    #[arg(long, default_value_t = 3.0)]
    pub ld: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lu: f64,
    #[arg(long, default_value_t = 0.8)]
    pub rho12: f64,
}

#[derive(Args, Debug)]
pub struct SequenceArgs {
    #[command(flatten)]
    pub limit: LimitArgs,
    #[arg(long, default_value_t = -1.0)]
    pub rho12_offset: f64,
    #[arg(long, value_enum, default_value_t = RoundingArg::Nearest)]
    pub rounding: RoundingArg,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum RoundingArg {
    Nearest,
    Floor,
    Ceil,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file, written atomically; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
