//! Simulation-study harness.
//!
//! For every grid cell, stable setting, bandwidth and sampler the harness
//! simulates `n_replicates` datasets from known parameters, fits each with
//! particle Gibbs, and reports the RMSE of the posterior means.
//!
//! Seeds are derived from the master seed and integer coordinates only:
//! data for `(cell, replicate)` is shared by every sampler and bandwidth,
//! and each sampler gets its own chain stream. Results therefore do not
//! depend on how replicates are scheduled across threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::filters::FilterKind;
use crate::gibbs::{run_pg, NigState, PgConfig};
use crate::kernel::{AbcConfig, KernelKind};
use crate::model::{grid_params, simulate, GridPoint, Observations, SvmParams};
use crate::seed::{derive, rng_from_seed};
use crate::stable::StableParams;

pub const CSV_HEADER: &str = "cv,phi,algorithm,rmse_tau,rmse_phi,rmse_sigma2,n_replicates,wall_time_s";

/// Stationary mean of `h_t` used throughout the study grid.
pub const STUDY_MEAN_H: f64 = 0.0009;

pub fn rmse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return domain("rmse of an empty sample");
    }
    let ms = estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / estimates.len() as f64;
    Ok(ms.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub grid: Vec<GridPoint>,
    pub stable_settings: Vec<StableParams>,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub n_particles: usize,
    pub epsilons: Vec<f64>,
    pub kernel: KernelKind,
    pub n_replicates: usize,
    pub algorithms: Vec<FilterKind>,
    pub burn_in: usize,
    pub n_samples: usize,
    pub master_seed: u64,
    pub prior: NigState,
    /// Write measured wall time into tables; when false the column is 0.
    pub record_wall_time: bool,
}

fn default_grid(mean_h: f64) -> Vec<GridPoint> {
    let mut g = Vec::new();
    for cv in [10.0, 1.0, 0.1] {
        for phi in [0.9, 0.95, 0.98] {
            g.push(GridPoint { phi, cv, mean_h });
        }
    }
    g
}

fn default_stable() -> Vec<StableParams> {
    [(1.75, 0.1), (1.7, 0.3), (1.5, -0.3)]
        .iter()
        .map(|&(a, b)| StableParams {
            alpha: a,
            beta: b,
            gamma: 1.0,
            delta: 0.0,
        })
        .collect()
}

impl StudyConfig {
    /// Reduced profile: 20 replicates, 500 burn-in and 1500 kept sweeps.
    pub fn desk() -> Self {
        Self {
            grid: default_grid(STUDY_MEAN_H),
            stable_settings: default_stable(),
            t_len: 100,
            n_particles: 100,
            epsilons: vec![0.001],
            kernel: KernelKind::Gaussian,
            n_replicates: 20,
            algorithms: FilterKind::ALL.to_vec(),
            burn_in: 500,
            n_samples: 1500,
            master_seed: 20240101,
            prior: NigState::weakly_informative(),
            record_wall_time: true,
        }
    }

    /// Full profile: 100 replicates, 2000 burn-in and 5000 kept sweeps.
    pub fn paper() -> Self {
        Self {
            n_replicates: 100,
            burn_in: 2000,
            n_samples: 5000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::Config("n_replicates must be >= 1".into()));
        }
        if self.grid.is_empty() || self.stable_settings.is_empty() {
            return Err(Error::Config("grid and stable_settings must be non-empty".into()));
        }
        if self.epsilons.is_empty() || self.algorithms.is_empty() {
            return Err(Error::Config("epsilons and algorithms must be non-empty".into()));
        }
        if self.t_len == 0 {
            return Err(Error::Config("T must be >= 1".into()));
        }
        for g in &self.grid {
            GridPoint::new(g.phi, g.cv, g.mean_h)?;
        }
        for s in &self.stable_settings {
            s.validate()?;
        }
        for &e in &self.epsilons {
            AbcConfig::new(e, self.kernel)?;
        }
        self.prior.validate()?;
        if self.n_particles == 0 || self.n_samples == 0 {
            return Err(Error::Config("n_particles and n_samples must be >= 1".into()));
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. Blank lines and `#` comments
    /// are ignored; lists are comma-separated. Unknown keys are errors.
    ///
    /// Grid points are written `cv:phi` or `cv:phi:mean_h`; stable settings
    /// `alpha:beta` or `alpha:beta:gamma:delta`. An optional `profile` key
    /// (`desk` or `paper`) chooses the defaults the other keys override and
    /// must come first.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut cfg = Self::desk();
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            msg,
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(line_no, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let wrap = |e: Error| perr(line_no, format!("{key}: {e}"));
            match key {
                "profile" => {
                    cfg = match value {
                        "desk" => Self::desk(),
                        "paper" => Self::paper(),
                        other => return Err(perr(line_no, format!("unknown profile {other:?}"))),
                    }
                }
                "grid" => {
                    cfg.grid = split_list(value)
                        .map(parse_grid_point)
                        .collect::<Result<_>>()
                        .map_err(wrap)?
                }
                "stable_settings" => {
                    cfg.stable_settings = split_list(value)
                        .map(parse_stable)
                        .collect::<Result<_>>()
                        .map_err(wrap)?
                }
                "T" | "t_len" => cfg.t_len = parse_num(value).map_err(wrap)?,
                "n_particles" => cfg.n_particles = parse_num(value).map_err(wrap)?,
                "epsilons" => {
                    cfg.epsilons = split_list(value).map(parse_num).collect::<Result<_>>().map_err(wrap)?
                }
                "kernel" => cfg.kernel = value.parse().map_err(wrap)?,
                "n_replicates" => cfg.n_replicates = parse_num(value).map_err(wrap)?,
                "algorithms" => {
                    cfg.algorithms = split_list(value)
                        .map(str::parse)
                        .collect::<Result<_>>()
                        .map_err(wrap)?
                }
                "burn_in" => cfg.burn_in = parse_num(value).map_err(wrap)?,
                "n_samples" => cfg.n_samples = parse_num(value).map_err(wrap)?,
                "master_seed" => cfg.master_seed = parse_num(value).map_err(wrap)?,
                "prior_a" => cfg.prior.a = parse_num(value).map_err(wrap)?,
                "prior_b" => cfg.prior.b = parse_num(value).map_err(wrap)?,
                "prior_mu0" => cfg.prior.mu[0] = parse_num(value).map_err(wrap)?,
                "prior_mu1" => cfg.prior.mu[1] = parse_num(value).map_err(wrap)?,
                "prior_lambda" => {
                    let d: f64 = parse_num(value).map_err(wrap)?;
                    cfg.prior.lambda = [[d, 0.0], [0.0, d]];
                }
                "record_wall_time" => {
                    cfg.record_wall_time = value
                        .parse()
                        .map_err(|_| perr(line_no, format!("{key}: expected true/false")))?
                }
                other => return Err(perr(line_no, format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `key = value` rendering; `parse` reads it back unchanged.
    pub fn to_config_string(&self) -> String {
        let join = |xs: Vec<String>| xs.join(", ");
        let mut s = String::new();
        let grid = join(self.grid.iter().map(|g| format!("{}:{}:{}", g.cv, g.phi, g.mean_h)).collect());
        let stable = join(
            self.stable_settings
                .iter()
                .map(|p| format!("{}:{}:{}:{}", p.alpha, p.beta, p.gamma, p.delta))
                .collect(),
        );
        let _ = writeln!(s, "grid = {grid}");
        let _ = writeln!(s, "stable_settings = {stable}");
        let _ = writeln!(s, "T = {}", self.t_len);
        let _ = writeln!(s, "n_particles = {}", self.n_particles);
        let _ = writeln!(s, "epsilons = {}", join(self.epsilons.iter().map(|e| e.to_string()).collect()));
        let _ = writeln!(s, "kernel = {}", self.kernel);
        let _ = writeln!(s, "n_replicates = {}", self.n_replicates);
        let _ = writeln!(
            s,
            "algorithms = {}",
            join(self.algorithms.iter().map(|a| a.to_string()).collect())
        );
        let _ = writeln!(s, "burn_in = {}", self.burn_in);
        let _ = writeln!(s, "n_samples = {}", self.n_samples);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "prior_a = {}", self.prior.a);
        let _ = writeln!(s, "prior_b = {}", self.prior.b);
        let _ = writeln!(s, "prior_mu0 = {}", self.prior.mu[0]);
        let _ = writeln!(s, "prior_mu1 = {}", self.prior.mu[1]);
        let _ = writeln!(s, "prior_lambda = {}", self.prior.lambda[0][0]);
        let _ = writeln!(s, "record_wall_time = {}", self.record_wall_time);
        s
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_config_string().as_bytes()))
    }

    /// Index of `(stable setting, grid point)`; shared across algorithms and
    /// bandwidths so that they see the same simulated data.
    pub fn cell_index(&self, stable_idx: usize, grid_idx: usize) -> u64 {
        (stable_idx * self.grid.len() + grid_idx) as u64
    }

    pub fn replicate_seeds(&self, cell_index: u64, algorithm: FilterKind) -> Vec<ReplicateSeeds> {
        let tag = 1 + FilterKind::ALL.iter().position(|&k| k == algorithm).unwrap_or(0) as u64;
        (0..self.n_replicates as u64)
            .map(|rep| ReplicateSeeds {
                replicate: rep,
                data: derive(self.master_seed, &[cell_index, rep, 0]),
                chain: derive(self.master_seed, &[cell_index, rep, tag]),
            })
            .collect()
    }

    fn pg_config(&self, stable: StableParams, algorithm: FilterKind, epsilon: f64, seed: u64) -> PgConfig {
        PgConfig {
            n_particles: self.n_particles,
            burn_in: self.burn_in,
            n_samples: self.n_samples,
            abc: AbcConfig {
                epsilon,
                kind: self.kernel,
            },
            stable,
            prior: self.prior.clone(),
            filter: algorithm,
            seed,
            trajectory_thin: 0,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse number {s:?}")))
}

fn parse_grid_point(item: &str) -> Result<GridPoint> {
    let parts: Vec<f64> = item.split(':').map(parse_num).collect::<Result<_>>()?;
    match parts[..] {
        [cv, phi] => GridPoint::new(phi, cv, STUDY_MEAN_H),
        [cv, phi, mean_h] => GridPoint::new(phi, cv, mean_h),
        _ => Err(Error::Config(format!("grid point must be cv:phi[:mean_h], got {item:?}"))),
    }
}

fn parse_stable(item: &str) -> Result<StableParams> {
    let parts: Vec<f64> = item.split(':').map(parse_num).collect::<Result<_>>()?;
    match parts[..] {
        [a, b] => StableParams::standard(a, b),
        [a, b, g, d] => StableParams::new(a, b, g, d),
        _ => Err(Error::Config(format!(
            "stable setting must be alpha:beta[:gamma:delta], got {item:?}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateSeeds {
    pub replicate: u64,
    pub data: u64,
    pub chain: u64,
}

/// Produces a point estimate of the parameters from one dataset.
pub trait Estimator: Sync {
    fn estimate(&self, r: &Observations, cfg: &PgConfig, truth: &SvmParams) -> Result<SvmParams>;
}

/// Posterior mean of an ABC particle Gibbs chain.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParticleGibbs;

impl Estimator for ParticleGibbs {
    fn estimate(&self, r: &Observations, cfg: &PgConfig, _truth: &SvmParams) -> Result<SvmParams> {
        Ok(run_pg(r, cfg)?.posterior_mean())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub cv: f64,
    pub phi: f64,
    pub algorithm: FilterKind,
    pub rmse_tau: f64,
    pub rmse_phi: f64,
    pub rmse_sigma2: f64,
    pub n_replicates: usize,
    pub wall_time: f64,
}

impl RmseRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.cv,
            self.phi,
            self.algorithm.sampler_name(),
            self.rmse_tau,
            self.rmse_phi,
            self.rmse_sigma2,
            self.n_replicates,
            self.wall_time
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub seeds: ReplicateSeeds,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub row: RmseRow,
    pub truth: SvmParams,
    pub epsilon: f64,
    pub stable: StableParams,
    pub estimates: Vec<(ReplicateSeeds, SvmParams)>,
    pub failures: Vec<ReplicateFailure>,
}

/// Fits every replicate of one cell and aggregates RMSEs.
///
/// Replicates run on the current rayon pool. Failed replicates are dropped
/// and recorded; more than 10% failures is an error.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    g: &GridPoint,
    stable: &StableParams,
    algorithm: FilterKind,
    epsilon: f64,
    cfg: &StudyConfig,
    seeds: &[ReplicateSeeds],
    estimator: &dyn Estimator,
) -> Result<CellResult> {
    if seeds.is_empty() {
        return domain("run_cell needs at least one replicate");
    }
    let truth = grid_params(g);
    let start = Instant::now();
    let outcomes: Vec<(ReplicateSeeds, Result<SvmParams>)> = seeds
        .par_iter()
        .map(|s| {
            let fit = || -> Result<SvmParams> {
                let mut rng = rng_from_seed(s.data);
                let (_, obs) = simulate(&truth, stable, cfg.t_len, &mut rng)?;
                let pg = cfg.pg_config(*stable, algorithm, epsilon, s.chain);
                estimator.estimate(&obs, &pg, &truth)
            };
            (*s, fit())
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();

    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (s, out) in outcomes {
        match out {
            Ok(est) => estimates.push((s, est)),
            Err(e) => failures.push(ReplicateFailure {
                seeds: s,
                error: e.to_string(),
            }),
        }
    }
    if failures.len() * 10 > seeds.len() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: seeds.len(),
        });
    }
    let col = |f: fn(&SvmParams) -> f64| estimates.iter().map(|(_, e)| f(e)).collect::<Vec<_>>();
    let row = RmseRow {
        cv: g.cv,
        phi: g.phi,
        algorithm,
        rmse_tau: rmse(&col(|e| e.tau), truth.tau)?,
        rmse_phi: rmse(&col(|e| e.phi), truth.phi)?,
        rmse_sigma2: rmse(&col(|e| e.sigma2), truth.sigma2)?,
        n_replicates: estimates.len(),
        wall_time: if cfg.record_wall_time { elapsed } else { 0.0 },
    };
    Ok(CellResult {
        row,
        truth,
        epsilon,
        stable: *stable,
        estimates,
        failures,
    })
}

/// One output table: a stable setting at one bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub file_name: String,
    pub stable: StableParams,
    pub epsilon: f64,
    pub cells: Vec<CellResult>,
}

impl StudyTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for c in &self.cells {
            s.push_str(&c.row.to_csv_line());
            s.push('\n');
        }
        s
    }
}

pub fn table_file_name(stable: &StableParams, epsilon: f64) -> String {
    format!("rmse_alpha{}_beta{}_eps{}.csv", stable.alpha, stable.beta, epsilon)
}

#[derive(Debug, Serialize)]
struct ManifestCell<'a> {
    file: &'a str,
    cell_index: u64,
    cv: f64,
    phi: f64,
    mean_h: f64,
    alpha: f64,
    beta: f64,
    epsilon: f64,
    algorithm: FilterKind,
    truth: SvmParams,
    replicate_seeds: Vec<ReplicateSeeds>,
    failures: &'a [ReplicateFailure],
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    crate_version: &'static str,
    config_hash: String,
    master_seed: u64,
    config: &'a StudyConfig,
    tables: Vec<&'a str>,
    cells: Vec<ManifestCell<'a>>,
}

/// Runs every (stable setting, bandwidth, grid point, algorithm) cell.
/// Tables come out in configuration order: grid points in the order given,
/// algorithms as cBF, cBFAS, cAPF.
pub fn run_study(cfg: &StudyConfig, estimator: &dyn Estimator) -> Result<Vec<StudyTable>> {
    cfg.validate()?;
    let algorithms: Vec<FilterKind> = FilterKind::ALL
        .iter()
        .copied()
        .filter(|k| cfg.algorithms.contains(k))
        .collect();
    let mut tables = Vec::new();
    for (si, stable) in cfg.stable_settings.iter().enumerate() {
        for &eps in &cfg.epsilons {
            let mut cells = Vec::new();
            for (gi, g) in cfg.grid.iter().enumerate() {
                for &alg in &algorithms {
                    let seeds = cfg.replicate_seeds(cfg.cell_index(si, gi), alg);
                    cells.push(run_cell(g, stable, alg, eps, cfg, &seeds, estimator)?);
                }
            }
            tables.push(StudyTable {
                file_name: table_file_name(stable, eps),
                stable: *stable,
                epsilon: eps,
                cells,
            });
        }
    }
    Ok(tables)
}

/// Writes one CSV per table plus `manifest.json` into `dir`.
pub fn write_study(cfg: &StudyConfig, tables: &[StudyTable], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for (si, _) in cfg.stable_settings.iter().enumerate() {
        for (gi, g) in cfg.grid.iter().enumerate() {
            index.insert((si as u64, (g.cv.to_bits() ^ g.phi.to_bits())), cfg.cell_index(si, gi));
        }
    }
    let mut cells = Vec::new();
    for t in tables {
        fs::write(dir.join(&t.file_name), t.to_csv())?;
        let si = cfg
            .stable_settings
            .iter()
            .position(|s| *s == t.stable)
            .unwrap_or(0) as u64;
        for c in &t.cells {
            let cell_index = index
                .get(&(si, c.row.cv.to_bits() ^ c.row.phi.to_bits()))
                .copied()
                .unwrap_or(0);
            let g = cfg
                .grid
                .iter()
                .find(|g| g.cv == c.row.cv && g.phi == c.row.phi)
                .copied()
                .unwrap_or(GridPoint {
                    phi: c.row.phi,
                    cv: c.row.cv,
                    mean_h: STUDY_MEAN_H,
                });
            cells.push(ManifestCell {
                file: &t.file_name,
                cell_index,
                cv: g.cv,
                phi: g.phi,
                mean_h: g.mean_h,
                alpha: t.stable.alpha,
                beta: t.stable.beta,
                epsilon: t.epsilon,
                algorithm: c.row.algorithm,
                truth: c.truth,
                replicate_seeds: cfg.replicate_seeds(cell_index, c.row.algorithm),
                failures: &c.failures,
            });
        }
    }
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        config: cfg,
        tables: tables.iter().map(|t| t.file_name.as_str()).collect(),
        cells,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}
