use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

/// Random-field lattice surfaces: solvers, samplers and scaling experiments.
#[derive(Parser, Debug)]
#[command(name = "rfsurf", version)]
struct Cli {
    /// Flat key=value file; explicit flags win over its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Base seed for all randomness.
    #[arg(long, global = true, env = "RF_SURFACE_SEED", default_value_t = 0)]
    seed: u64,

    /// Worker threads for realizations and sweep rows (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output file; stdout if absent. A `.meta.json` sidecar with run
    /// timings is written next to it.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dirichlet Green's function entries and exact Gaussian variances.
    Green(GreenArgs),
    /// Ground state of the real or (d=1) integer model for one disorder sample.
    GroundState(GroundStateArgs),
    /// Langevin time averages, or a coupled pair of chains.
    Langevin(LangevinArgs),
    /// Heat kernel of a random time-dependent environment.
    HeatKernel(HeatKernelArgs),
    /// Integer-valued field: Metropolis or exact enumeration.
    Ivgff(IvgffCommand),
    /// Membrane-model height variance.
    Membrane(MembraneArgs),
    /// Finite-size scaling sweep with an exponent fit.
    Scaling(ScalingArgs),
    /// Efron–Stein bound against the direct variance.
    EfronStein(EfronSteinArgs),
    /// Quick closed-form checks.
    Selftest,
}

#[derive(Args, Debug, Clone)]
struct BoxArgs {
    /// Dimension.
    #[arg(long = "d", default_value_t = 1)]
    d: usize,
    /// Box side: sites are {-L, ..., L}^d.
    #[arg(long = "L", default_value_t = 8)]
    l: usize,
}

#[derive(Args, Debug, Clone)]
struct GreenArgs {
    #[command(flatten)]
    lattice: BoxArgs,
    /// Row site, comma separated (default: origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<i32>>,
    /// Column site (default: origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y: Option<Vec<i32>>,
}

#[derive(Args, Debug, Clone)]
struct DisorderArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// gaussian, rademacher, uniform:W or one-dependent.
    #[arg(long, default_value = "gaussian")]
    distribution: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FieldFormat {
    Bin,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct GroundStateArgs {
    #[command(flatten)]
    lattice: BoxArgs,
    #[command(flatten)]
    disorder: DisorderArgs,
    /// quadratic:K or qsqrt:K.
    #[arg(long, default_value = "quadratic:1")]
    potential: String,
    /// Integer-valued ground state by dynamic programming (d=1 only).
    #[arg(long)]
    integer: bool,
    /// Height band for the integer solver.
    #[arg(long)]
    band: Option<i64>,
    /// Also store the surface.
    #[arg(long, value_name = "PATH")]
    field_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FieldFormat::Bin)]
    field_format: FieldFormat,
    /// Also store the disorder sample.
    #[arg(long, value_name = "PATH")]
    disorder_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct LangevinArgs {
    #[command(flatten)]
    lattice: BoxArgs,
    #[command(flatten)]
    disorder: DisorderArgs,
    #[arg(long, default_value = "quadratic:1")]
    potential: String,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Time step (default: half the stability bound).
    #[arg(long)]
    dt: Option<f64>,
    /// Sampling time after burn-in.
    #[arg(long, default_value_t = 200.0)]
    t_max: f64,
    /// Burn-in time (default: 10 L²).
    #[arg(long)]
    burn_in: Option<f64>,
    /// Record every this many steps.
    #[arg(long, default_value_t = 10)]
    every: usize,
    /// Run two chains with shared noise whose fields differ at one site.
    #[arg(long)]
    coupled: bool,
    /// Site whose disorder is redrawn for the second chain (default: origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    resample_site: Option<Vec<i32>>,
}

#[derive(Args, Debug, Clone)]
struct HeatKernelArgs {
    #[command(flatten)]
    lattice: BoxArgs,
    #[arg(long, default_value_t = 1.0)]
    c_minus: f64,
    #[arg(long, default_value_t = 2.0)]
    c_plus: f64,
    /// Conductances are redrawn every this many time units.
    #[arg(long, default_value_t = 1.0)]
    period: f64,
    #[arg(long, default_value_t = 100.0)]
    t_max: f64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 10)]
    every: usize,
    /// Starting site (default: origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    source: Option<Vec<i32>>,
}

#[derive(Args, Debug, Clone)]
struct IvArgs {
    #[command(flatten)]
    lattice: BoxArgs,
    #[command(flatten)]
    disorder: DisorderArgs,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 10_000)]
    sweeps: usize,
    /// Burn-in sweeps (default: a tenth of the run, at least 100).
    #[arg(long)]
    burn_in: Option<usize>,
    /// Height band K (default from the real ground state and β).
    #[arg(long)]
    band: Option<i64>,
    /// Sum over all banded configurations instead of sampling.
    #[arg(long)]
    exact: bool,
    /// Observed site (default: origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    site: Option<Vec<i32>>,
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true)]
struct IvgffCommand {
    #[command(subcommand)]
    mode: Option<IvMode>,
    #[command(flatten)]
    args: IvArgs,
}

#[derive(Subcommand, Debug)]
enum IvMode {
    /// Adds the D₊/D₋ excursion decomposition at the observed site.
    Peierls(IvArgs),
    /// Connected sets containing a site, as CSV.
    Sets(SetsArgs),
}

#[derive(Args, Debug, Clone)]
struct SetsArgs {
    #[command(flatten)]
    lattice: BoxArgs,
    #[command(flatten)]
    disorder: DisorderArgs,
    /// Largest vertex-boundary size kept.
    #[arg(long, default_value_t = 12)]
    nmax: usize,
    /// Largest set size searched.
    #[arg(long, default_value_t = 6)]
    max_sites: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    site: Option<Vec<i32>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Stencil {
    Variational,
    Clamped,
}

#[derive(Args, Debug, Clone)]
struct MembraneArgs {
    #[arg(long = "d", default_value_t = 1)]
    d: usize,
    /// One or more sides, comma separated.
    #[arg(long = "L", value_delimiter = ',', default_value = "8")]
    l: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = Stencil::Variational)]
    stencil: Stencil,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FitArg {
    Power,
    LogLinear,
    Constant,
}

#[derive(Args, Debug, Clone)]
struct ScalingArgs {
    /// grad_norm_real, height_var_real, grad_norm_iv, height_norm_iv or
    /// membrane_height_var.
    #[arg(long)]
    observable: String,
    #[arg(long = "d", default_value_t = 1)]
    d: usize,
    /// Sides, comma separated and increasing.
    #[arg(long = "L", value_delimiter = ',', required = true)]
    l: Vec<usize>,
    #[command(flatten)]
    disorder: DisorderArgs,
    /// Inverse temperature, or `inf` for ground states.
    #[arg(long, default_value = "inf")]
    beta: String,
    #[arg(long, default_value = "quadratic:1")]
    potential: String,
    /// Closed-form Gaussian values instead of sampled disorder.
    #[arg(long)]
    exact: bool,
    /// Disorder realizations per side.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Stencil::Variational)]
    stencil: Stencil,
    /// Metropolis sweeps for integer observables at finite β.
    #[arg(long, default_value_t = 10_000)]
    sweeps: usize,
    #[arg(long, value_enum, default_value_t = FitArg::Power)]
    fit: FitArg,
    /// Where to write the exponent JSON (default: stdout when --out is
    /// set, stderr otherwise).
    #[arg(long, value_name = "PATH")]
    fit_out: Option<PathBuf>,
    /// Partial table rewritten after every finished side; an existing file
    /// is resumed.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Estimator {
    /// The Gaussian ground state u(x), in closed form.
    Linear,
    /// The nonlinear ground state v(x), by Monte Carlo.
    GroundState,
}

#[derive(Args, Debug, Clone)]
struct EfronSteinArgs {
    #[command(flatten)]
    lattice: BoxArgs,
    #[arg(long, value_enum, default_value_t = Estimator::Linear)]
    estimator: Estimator,
    #[arg(long, default_value = "qsqrt:0.5")]
    potential: String,
    #[command(flatten)]
    disorder: DisorderArgs,
    #[arg(long, default_value_t = 100)]
    n_outer: usize,
    /// Resampled sites per outer sample (default: all).
    #[arg(long)]
    n_sites: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    site: Option<Vec<i32>>,
}

/// Everything that stops a command. Config errors exit with 2, numerical
/// failures with 1.
#[derive(Debug)]
pub enum CliError {
    Config { field: String, reason: String },
    Core(rfsurf::Error),
    Io(std::io::Error),
    Failed(String),
}

impl From<rfsurf::Error> for CliError {
    fn from(e: rfsurf::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        use rfsurf::Error as E;
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(e) => match e {
                E::InvalidConfig { .. }
                | E::LatticeMismatch { .. }
                | E::NotInterior(_)
                | E::UnstableTimeStep { .. }
                | E::StateSpaceTooLarge(_)
                | E::CapExceeded(_)
                | E::Format(_) => 2,
                _ => 1,
            },
            CliError::Io(_) | CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { field, reason } => write!(f, "invalid {field}: {reason}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Failed(msg) => f.write_str(msg),
        }
    }
}

fn override_self(cmd: clap::Command) -> clap::Command {
    cmd.args_override_self(true).mut_subcommands(override_self)
}

fn parse(argv: Vec<String>) -> Result<Cli, clap::Error> {
    let matches = override_self(Cli::command()).try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match parse(argv) {
        Ok(c) => c,
        Err(e) => {
            // help and version are not errors
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: invalid jobs: must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
