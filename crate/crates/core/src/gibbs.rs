//! Particle Gibbs for the stochastic volatility model.
//!
//! Each sweep replaces the latent path with the output of a conditional ABC
//! filter (run under the current parameters, with the current path as
//! reference) and then draws `(tau, phi, sigma_h^2)` from its conjugate
//! normal-inverse-Gamma conditional, truncated to `|phi| < 1`.
//!
//! The regression behind the conjugate update is `log h_t = tau + phi log
//! h_{t-1} + noise`, so design rows are `(1, log h_{t-1})` and responses are
//! `log h_t` for `t = 1..T`.

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::filters::{abc_filter, FilterKind};
use crate::kernel::AbcConfig;
use crate::model::{emit_return, initial_sample, transition_sample, Observations, SvmParams, Trajectory};
use crate::seed::rng_from_seed;
use crate::stable::StableParams;

/// Rejection attempts allowed when enforcing `|phi| < 1`.
pub const MAX_TRUNCATION_ATTEMPTS: usize = 1_000_000;

type Vec2 = [f64; 2];
type Mat2 = [[f64; 2]; 2];

fn mat_vec(m: &Mat2, v: &Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn dot(a: &Vec2, b: &Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn inverse(m: &Mat2) -> Option<Mat2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

/// Lower Cholesky factor of a symmetric positive-definite 2x2 matrix.
fn cholesky(m: &Mat2) -> Option<Mat2> {
    if !(m[0][0] > 0.0) {
        return None;
    }
    let l00 = m[0][0].sqrt();
    let l10 = m[1][0] / l00;
    let d = m[1][1] - l10 * l10;
    if !(d > 0.0) {
        return None;
    }
    Some([[l00, 0.0], [l10, d.sqrt()]])
}

/// Normal-inverse-Gamma hyperparameters for `(sigma_h^2, (tau, phi))`:
/// `sigma_h^2 ~ IG(a, b)` and `(tau, phi) | sigma_h^2 ~ N(mu, sigma_h^2 lambda^-1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NigState {
    pub a: f64,
    pub b: f64,
    pub mu: Vec2,
    pub lambda: Mat2,
}

impl NigState {
    pub fn new(a: f64, b: f64, mu: Vec2, lambda: Mat2) -> Result<Self> {
        let s = Self { a, b, mu, lambda };
        s.validate()?;
        Ok(s)
    }

    /// `a0 = 2, b0 = 0.5, mu0 = (0, 0.9), lambda0 = I`.
    pub fn weakly_informative() -> Self {
        Self {
            a: 2.0,
            b: 0.5,
            mu: [0.0, 0.9],
            lambda: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) || !(self.b > 0.0 && self.b.is_finite()) {
            return domain(format!("NIG a and b must be > 0, got a={} b={}", self.a, self.b));
        }
        if !self.mu.iter().all(|x| x.is_finite()) {
            return domain("NIG mu must be finite");
        }
        let l = &self.lambda;
        let scale = l[0][1].abs().max(l[1][0].abs()).max(1.0);
        if (l[0][1] - l[1][0]).abs() > 1e-12 * scale {
            return domain("NIG lambda must be symmetric");
        }
        if cholesky(l).is_none() {
            return domain("NIG lambda must be positive definite");
        }
        Ok(())
    }
}

/// Conjugate update of `prior` given the path `h_{0:T}`.
pub fn nig_update(prior: &NigState, h: &[f64]) -> Result<NigState> {
    prior.validate()?;
    if h.is_empty() {
        return domain("nig_update needs at least h_0");
    }
    if let Some(x) = h.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return domain(format!("volatilities must be positive, got {x}"));
    }
    let t_len = h.len() - 1;
    if t_len == 0 {
        return Ok(prior.clone());
    }

    let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let logs: Vec<f64> = h.iter().map(|x| x.ln()).collect();
    for w in logs.windows(2) {
        let (x, y) = (w[0], w[1]);
        sx += x;
        sxx += x * x;
        sy += y;
        sxy += x * y;
    }
    let l0 = &prior.lambda;
    let lambda = [
        [t_len as f64 + l0[0][0], sx + l0[0][1]],
        [sx + l0[1][0], sxx + l0[1][1]],
    ];
    let l0mu0 = mat_vec(l0, &prior.mu);
    let rhs = [l0mu0[0] + sy, l0mu0[1] + sxy];
    let inv = inverse(&lambda).ok_or_else(|| Error::Domain("singular posterior precision".into()))?;
    let mu = mat_vec(&inv, &rhs);

    // b_T = b0 + (y'y + mu0' L0 mu0 - muT' LT muT) / 2, evaluated through
    // the equivalent residual form to avoid cancellation.
    let rss: f64 = logs
        .windows(2)
        .map(|w| {
            let e = w[1] - mu[0] - mu[1] * w[0];
            e * e
        })
        .sum();
    let d = [mu[0] - prior.mu[0], mu[1] - prior.mu[1]];
    let b = prior.b + 0.5 * (rss + dot(&d, &mat_vec(l0, &d)));

    Ok(NigState {
        a: prior.a + t_len as f64 / 2.0,
        b,
        mu,
        lambda,
    })
}

/// Draws from NIG(a, b, mu, lambda) restricted to `|phi| < 1`.
///
/// The whole triple is redrawn until the constraint holds, which samples the
/// truncated joint law exactly.
pub fn sample_truncated_nig<R: Rng + ?Sized>(post: &NigState, rng: &mut R) -> Result<SvmParams> {
    post.validate()?;
    let cov = inverse(&post.lambda).ok_or_else(|| Error::Domain("singular NIG precision".into()))?;
    let chol = cholesky(&cov).ok_or_else(|| Error::Domain("NIG covariance not positive definite".into()))?;
    let gamma = Gamma::new(post.a, 1.0 / post.b)
        .map_err(|e| Error::Domain(format!("inverse-gamma parameters: {e}")))?;
    let mut sigma2 = f64::NAN;
    for _ in 0..MAX_TRUNCATION_ATTEMPTS {
        let g: f64 = gamma.sample(rng);
        sigma2 = 1.0 / g;
        let sd = sigma2.sqrt();
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let tau = post.mu[0] + sd * chol[0][0] * z0;
        let phi = post.mu[1] + sd * (chol[1][0] * z0 + chol[1][1] * z1);
        if phi.abs() < 1.0 && sigma2 > 0.0 && sigma2.is_finite() {
            return Ok(SvmParams { tau, phi, sigma2 });
        }
    }
    Err(Error::TruncationFailure {
        attempts: MAX_TRUNCATION_ATTEMPTS,
        mu_tau: post.mu[0],
        mu_phi: post.mu[1],
        sigma2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgConfig {
    pub n_particles: usize,
    pub burn_in: usize,
    pub n_samples: usize,
    pub abc: AbcConfig,
    pub stable: StableParams,
    pub prior: NigState,
    pub filter: FilterKind,
    pub seed: u64,
    /// Keep every `k`-th post-burn-in trajectory; 0 keeps none.
    pub trajectory_thin: usize,
}

impl PgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return domain("n_particles must be >= 1");
        }
        if self.n_samples == 0 {
            return domain("n_samples must be >= 1");
        }
        self.stable.validate()?;
        self.prior.validate()?;
        AbcConfig::new(self.abc.epsilon, self.abc.kind)?;
        Ok(())
    }
}

/// Post-burn-in draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub theta_draws: Vec<SvmParams>,
    pub trajectory_draws: Vec<Trajectory>,
}

impl PosteriorSample {
    /// Posterior means of `(tau, phi, sigma_h^2)`.
    pub fn posterior_mean(&self) -> SvmParams {
        let n = self.theta_draws.len() as f64;
        let (mut t, mut p, mut s) = (0.0, 0.0, 0.0);
        for th in &self.theta_draws {
            t += th.tau;
            p += th.phi;
            s += th.sigma2;
        }
        SvmParams {
            tau: t / n,
            phi: p / n,
            sigma2: s / n,
        }
    }
}

/// Draws `theta` from the prior and a path of length `t_len` (with auxiliary
/// draws) from the model under that `theta`.
pub fn pg_init<R: Rng + ?Sized>(
    cfg: &PgConfig,
    t_len: usize,
    rng: &mut R,
) -> Result<(SvmParams, Trajectory)> {
    cfg.validate()?;
    let theta = sample_truncated_nig(&cfg.prior, rng)?;
    let sampler = cfg.stable.sampler()?;
    let mut h = Vec::with_capacity(t_len + 1);
    let mut u = Vec::with_capacity(t_len);
    h.push(initial_sample(&theta, rng));
    for t in 1..=t_len {
        let ht = transition_sample(h[t - 1], &theta, rng);
        h.push(ht);
        u.push(emit_return(ht, &sampler, rng));
    }
    Ok((theta, Trajectory { h, u }))
}

/// One particle Gibbs sweep: new path from the filter, then new parameters.
pub fn pg_sweep<R: Rng + ?Sized>(
    theta: &SvmParams,
    reference: &Trajectory,
    r: &Observations,
    cfg: &PgConfig,
    rng: &mut R,
) -> Result<(SvmParams, Trajectory)> {
    let path = abc_filter(
        cfg.filter,
        r,
        reference,
        theta,
        &cfg.stable,
        cfg.abc,
        cfg.n_particles,
        rng,
    )?;
    let post = nig_update(&cfg.prior, &path.h)?;
    let theta = sample_truncated_nig(&post, rng)?;
    Ok((theta, path))
}

/// Runs `burn_in + n_samples` sweeps from a prior initialisation and keeps
/// the last `n_samples` parameter draws.
pub fn run_pg(r: &Observations, cfg: &PgConfig) -> Result<PosteriorSample> {
    cfg.validate()?;
    if r.is_empty() {
        return domain("need at least one observation");
    }
    let mut rng = rng_from_seed(cfg.seed);
    let (mut theta, mut path) = pg_init(cfg, r.len(), &mut rng)?;
    let mut out = PosteriorSample {
        theta_draws: Vec::with_capacity(cfg.n_samples),
        trajectory_draws: Vec::new(),
    };
    for it in 0..cfg.burn_in + cfg.n_samples {
        (theta, path) = pg_sweep(&theta, &path, r, cfg, &mut rng)?;
        if it >= cfg.burn_in {
            out.theta_draws.push(theta);
            let k = it - cfg.burn_in;
            if cfg.trajectory_thin > 0 && k.is_multiple_of(cfg.trajectory_thin) {
                out.trajectory_draws.push(path.clone());
            }
        }
    }
    Ok(out)
}
