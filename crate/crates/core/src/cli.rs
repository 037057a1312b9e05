//! Command-line interface.
//!
//! Every flag can also be set through an environment variable named
//! `ABCPG_` followed by the flag in upper snake case (`--burn-in` is
//! `ABCPG_BURN_IN`). Command-line values win over the environment.
//!
//! Exit status is 0 on success, 2 for usage errors (bad flags, unreadable or
//! malformed input files, invalid configuration) and 1 for failures during a
//! run. Errors are reported on stderr as a single line
//! `error: kind=<kind> msg="<message>"`.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{run_study, write_study, ParticleGibbs, StudyConfig};
use crate::error::{Error, Result};
use crate::filters::FilterKind;
use crate::gibbs::{run_pg, NigState, PgConfig};
use crate::io;
use crate::kernel::{AbcConfig, KernelKind};
use crate::model::{grid_params, simulate, GridPoint, SvmParams};
use crate::seed::{derive, rng_from_seed};
use crate::stable::StableParams;

pub const FIT_REPORT: &str = "fit_report.json";
pub const VOLATILITY_BANDS: &str = "volatility_bands.csv";
pub const RETURN_BANDS: &str = "return_bands.csv";

#[derive(Debug, Parser)]
#[command(name = "abcpg", version, about = "ABC particle Gibbs for stochastic volatility with stable noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate returns and volatilities; writes `t,r,h` CSV.
    Simulate(SimulateArgs),
    /// Fit the model to a returns or price CSV.
    Fit(FitArgs),
    /// Run a simulation study described by a config file.
    Bench(BenchArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Clone, Args)]
pub struct StableArgs {
    #[arg(long, env = "ABCPG_ALPHA", default_value_t = 1.725)]
    pub alpha: f64,
    #[arg(long, env = "ABCPG_BETA", default_value_t = 0.0915, allow_hyphen_values = true)]
    pub beta: f64,
    #[arg(long, env = "ABCPG_STABLE_GAMMA", default_value_t = 1.0)]
    pub stable_gamma: f64,
    #[arg(long, env = "ABCPG_STABLE_DELTA", default_value_t = 0.0, allow_hyphen_values = true)]
    pub stable_delta: f64,
}

impl StableArgs {
    pub fn params(&self) -> Result<StableParams> {
        StableParams::new(self.alpha, self.beta, self.stable_gamma, self.stable_delta)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, env = "ABCPG_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Number of returns.
    #[arg(long = "length", short = 'T', env = "ABCPG_LENGTH", default_value_t = 100)]
    pub length: usize,
    #[arg(long, env = "ABCPG_PHI", default_value_t = 0.9, allow_hyphen_values = true)]
    pub phi: f64,
    /// Stationary coefficient of variation of h_t (ignored with --tau/--sigma2).
    #[arg(long, env = "ABCPG_CV", default_value_t = 10.0)]
    pub cv: f64,
    /// Stationary mean of h_t (ignored with --tau/--sigma2).
    #[arg(long, env = "ABCPG_MEAN_H", default_value_t = 0.0009)]
    pub mean_h: f64,
    #[arg(long, env = "ABCPG_TAU", requires = "sigma2", allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long, env = "ABCPG_SIGMA2", requires = "tau")]
    pub sigma2: Option<f64>,
    #[command(flatten)]
    pub stable: StableArgs,
    /// Output file; stdout when omitted.
    #[arg(long, short, env = "ABCPG_OUT")]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn theta(&self) -> Result<SvmParams> {
        match (self.tau, self.sigma2) {
            (Some(tau), Some(s2)) => SvmParams::new(tau, self.phi, s2),
            _ => Ok(grid_params(&GridPoint::new(self.phi, self.cv, self.mean_h)?)),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Returns CSV (`r` or `return` column) or price CSV (`date,price` or `date,open,close`).
    pub input: PathBuf,
    #[arg(long, env = "ABCPG_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "ABCPG_PARTICLES", default_value_t = 500)]
    pub particles: usize,
    #[arg(long, env = "ABCPG_EPSILON", default_value_t = 0.001)]
    pub epsilon: f64,
    #[arg(long, env = "ABCPG_KERNEL", default_value_t = KernelKind::Gaussian)]
    pub kernel: KernelKind,
    #[arg(long, env = "ABCPG_FILTER", default_value_t = FilterKind::AbcCapf)]
    pub filter: FilterKind,
    #[arg(long, env = "ABCPG_BURN_IN", default_value_t = 2000)]
    pub burn_in: usize,
    #[arg(long, env = "ABCPG_SAMPLES", default_value_t = 5000)]
    pub samples: usize,
    /// Keep every k-th post-burn-in path for the bands.
    #[arg(long, env = "ABCPG_TRAJECTORY_THIN", default_value_t = 5)]
    pub trajectory_thin: usize,
    #[command(flatten)]
    pub stable: StableArgs,
    #[arg(long, env = "ABCPG_PRIOR_A", default_value_t = 2.0)]
    pub prior_a: f64,
    #[arg(long, env = "ABCPG_PRIOR_B", default_value_t = 0.5)]
    pub prior_b: f64,
    #[arg(long, env = "ABCPG_PRIOR_MU0", default_value_t = 0.0, allow_hyphen_values = true)]
    pub prior_mu0: f64,
    #[arg(long, env = "ABCPG_PRIOR_MU1", default_value_t = 0.9, allow_hyphen_values = true)]
    pub prior_mu1: f64,
    /// Diagonal of the prior precision matrix.
    #[arg(long, env = "ABCPG_PRIOR_LAMBDA", default_value_t = 1.0)]
    pub prior_lambda: f64,
    #[arg(long, env = "ABCPG_OUT_DIR", default_value = "fit_out")]
    pub out_dir: PathBuf,
}

impl FitArgs {
    pub fn pg_config(&self) -> Result<PgConfig> {
        self.build_config().map_err(as_usage)
    }

    fn build_config(&self) -> Result<PgConfig> {
        let cfg = PgConfig {
            n_particles: self.particles,
            burn_in: self.burn_in,
            n_samples: self.samples,
            abc: AbcConfig::new(self.epsilon, self.kernel)?,
            stable: self.stable.params()?,
            prior: NigState::new(
                self.prior_a,
                self.prior_b,
                [self.prior_mu0, self.prior_mu1],
                [[self.prior_lambda, 0.0], [0.0, self.prior_lambda]],
            )?,
            filter: self.filter,
            seed: self.seed,
            trajectory_thin: self.trajectory_thin,
        };
        cfg.validate()?;
        if self.trajectory_thin == 0 {
            return Err(Error::Config("--trajectory-thin must be >= 1".into()));
        }
        if self.samples.div_ceil(self.trajectory_thin) < 2 {
            return Err(Error::Config("need at least two stored paths for the bands".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Study config (`key = value` lines).
    pub config: PathBuf,
    /// Override the config's master seed.
    #[arg(long, env = "ABCPG_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for replicates; 0 uses all cores.
    #[arg(long, env = "ABCPG_JOBS", default_value_t = 0)]
    pub jobs: usize,
    /// Write 0 in the wall-time column so outputs are byte-reproducible.
    #[arg(long, env = "ABCPG_NO_TIMING")]
    pub no_timing: bool,
    #[arg(long, env = "ABCPG_OUT_DIR", default_value = "bench_out")]
    pub out_dir: PathBuf,
}

/// Invalid flag values are usage errors, not run failures.
fn as_usage(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    }
}

/// Usage-class errors exit with 2.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Config(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

fn report(kind: &str, msg: &str) {
    let msg = msg.lines().next().unwrap_or("").replace('\\', "\\\\").replace('"', "\\\"");
    eprintln!("error: kind={kind} msg=\"{msg}\"");
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_input<T>(path: &Path, f: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    f(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let theta = a.theta().map_err(as_usage)?;
    let stable = a.stable.params().map_err(as_usage)?;
    if a.length == 0 {
        return Err(Error::Config("--length must be >= 1".into()));
    }
    let mut rng = rng_from_seed(a.seed);
    let (path, obs) = simulate(&theta, &stable, a.length, &mut rng)?;
    let text = io::simulation_csv(&path, &obs);
    match &a.out {
        Some(p) => write_out(p, &text),
        None => Ok(std::io::stdout().write_all(text.as_bytes())?),
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<io::FitReport> {
    let cfg = a.pg_config()?;
    let series = read_input(&a.input, io::load_series)?;
    let sample = run_pg(&series.returns, &cfg)?;
    let summary = io::summarize(&sample)?;
    let vol = io::volatility_bands(&sample.trajectory_draws)?;
    let mut band_rng = rng_from_seed(derive(cfg.seed, &[u64::from_le_bytes(*b"bands\0\0\0")]));
    let ret = io::predictive_bands(&sample.trajectory_draws, &cfg.stable, &mut band_rng)?;
    let report = io::FitReport::new(summary, &cfg, series.returns.len(), sample.theta_draws.len());

    fs::create_dir_all(&a.out_dir)?;
    write_out(&a.out_dir.join(FIT_REPORT), &report.to_json()?)?;
    write_out(&a.out_dir.join(VOLATILITY_BANDS), &io::volatility_csv(&vol, &series))?;
    write_out(&a.out_dir.join(RETURN_BANDS), &io::predictive_csv(&ret, &series))?;
    Ok(report)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let text = read_input(&a.config, |p| Ok(fs::read_to_string(p)?))?;
    let mut cfg = StudyConfig::parse(&text, &a.config.display().to_string())?;
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if a.no_timing {
        cfg.record_wall_time = false;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let tables = pool.install(|| run_study(&cfg, &ParticleGibbs))?;
    write_study(&cfg, &tables, &a.out_dir)
}

/// Runs the CLI on `argv` (including the program name) and returns the exit status.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
                return 2;
            }
            let msg = e.to_string();
            let line = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("")
                .trim_start_matches("error: ");
            report("usage", line);
            return 2;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a).map(|r| {
            println!(
                "tau={} phi={} sigma2={} -> {}",
                r.tau.est,
                r.phi.est,
                r.sigma2.est,
                a.out_dir.display()
            );
        }),
        Command::Bench(a) => cmd_bench(a),
        Command::Version => {
            println!("abcpg {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            report(e.kind(), &e.to_string());
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("abcpg").chain(args.iter().copied()))
    }

    #[test]
    fn fit_defaults() {
        let cli = parse(&["fit", "data.csv"]).unwrap();
        let Command::Fit(a) = cli.command else { panic!() };
        let cfg = a.pg_config().unwrap();
        assert_eq!(cfg.n_particles, 500);
        assert_eq!(cfg.abc.epsilon, 0.001);
        assert_eq!((cfg.stable.alpha, cfg.stable.beta), (1.725, 0.0915));
        assert_eq!((cfg.burn_in, cfg.n_samples), (2000, 5000));
        assert_eq!(cfg.filter, FilterKind::AbcCapf);
        assert_eq!(cfg.prior, NigState::weakly_informative());
    }

    #[test]
    fn flags_parse() {
        let cli = parse(&[
            "fit", "x.csv", "--filter", "abc-cbfas", "--kernel", "uniform", "--beta", "-0.3", "--prior-mu0", "-1",
            "--prior-lambda", "4",
        ])
        .unwrap();
        let Command::Fit(a) = cli.command else { panic!() };
        let cfg = a.pg_config().unwrap();
        assert_eq!(cfg.filter, FilterKind::AbcCbfas);
        assert_eq!(cfg.abc.kind, KernelKind::Uniform);
        assert_eq!(cfg.stable.beta, -0.3);
        assert_eq!(cfg.prior.mu[0], -1.0);
        assert_eq!(cfg.prior.lambda[1][1], 4.0);
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        assert!(parse(&["fit", "x.csv", "--filter", "nope"]).is_err());
        assert!(parse(&["fit", "x.csv", "--particles", "-3"]).is_err());
        assert!(parse(&["simulate", "--tau", "-1"]).is_err());
        let Command::Fit(a) = parse(&["fit", "x.csv", "--alpha", "2.5"]).unwrap().command else { panic!() };
        assert_eq!(exit_code(&a.pg_config().unwrap_err()), 2);
        let Command::Fit(a) = parse(&["fit", "x.csv", "--trajectory-thin", "0"]).unwrap().command else { panic!() };
        assert_eq!(exit_code(&a.pg_config().unwrap_err()), 2);
        assert_eq!(main(["abcpg", "frobnicate"]), 2);
        assert_eq!(main(["abcpg", "version"]), 0);
    }

    #[test]
    fn simulate_theta_sources() {
        let Command::Simulate(a) = parse(&["simulate"]).unwrap().command else { panic!() };
        let th = a.theta().unwrap();
        assert!((th.stationary_cv() - 10.0).abs() < 1e-9);
        let Command::Simulate(a) = parse(&["simulate", "--tau", "-0.5", "--sigma2", "0.2", "--phi", "0.95"])
            .unwrap()
            .command
        else {
            panic!()
        };
        assert_eq!(a.theta().unwrap(), SvmParams::new(-0.5, 0.95, 0.2).unwrap());
    }
}
