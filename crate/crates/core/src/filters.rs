//! Conditional sequential Monte Carlo kernels.
//!
//! Every filter keeps the reference trajectory in the last particle slot
//! (index `N - 1`), runs `N - 1` fresh particles alongside it and finally
//! selects one back-traced path. The variants differ in how the reference
//! slot picks its ancestor and in how particles are resampled:
//!
//! * conditional bootstrap (`cbf`, `abc_cbf`): reference ancestor pinned;
//! * ancestor sampling (`cbfas`, `abc_cbfas`): reference ancestor drawn from
//!   `w_{t-1} g(h*_t | h_{t-1})`;
//! * conditional auxiliary (`abc_capf`): resampling uses tempered weights
//!   `w_{t-1} p~(r_t | h_{t-1})` from a Cauchy approximation of the one-step
//!   predictive, and new weights carry the `w / w~` correction.
//!
//! Weights are stored as log values normalised so the largest entry at each
//! step is exactly zero.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernel::AbcConfig;
use crate::model::{
    emit_return, initial_sample, transition_logdensity, transition_sample, Observations,
    SvmParams, Trajectory,
};
use crate::stable::{StableParams, StableSampler};

/// The ABC conditional filters available to the particle Gibbs driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    #[serde(rename = "abc-cbf")]
    AbcCbf,
    #[serde(rename = "abc-cbfas")]
    AbcCbfas,
    #[serde(rename = "abc-capf")]
    AbcCapf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::AbcCbf, FilterKind::AbcCbfas, FilterKind::AbcCapf];

    pub fn as_str(&self) -> &'static str {
        match self {
            FilterKind::AbcCbf => "abc-cbf",
            FilterKind::AbcCbfas => "abc-cbfas",
            FilterKind::AbcCapf => "abc-capf",
        }
    }

    /// Name of the particle Gibbs sampler built on this filter, as used in
    /// result tables.
    pub fn sampler_name(&self) -> &'static str {
        match self {
            FilterKind::AbcCbf => "ABC-PG-cBF",
            FilterKind::AbcCbfas => "ABC-PG-cBFAS",
            FilterKind::AbcCapf => "ABC-PG-cAPF",
        }
    }

    fn resampling(&self) -> Resampling {
        match self {
            FilterKind::AbcCbf => Resampling::Conditional,
            FilterKind::AbcCbfas => Resampling::AncestorSampling,
            FilterKind::AbcCapf => Resampling::Auxiliary(ReferenceWeight::Kernel),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "abc-cbf" | "cbf" | "abc-pg-cbf" => Ok(FilterKind::AbcCbf),
            "abc-cbfas" | "cbfas" | "abc-pg-cbfas" => Ok(FilterKind::AbcCbfas),
            "abc-capf" | "capf" | "abc-pg-capf" => Ok(FilterKind::AbcCapf),
            other => Err(Error::Config(format!("unknown filter {other:?}"))),
        }
    }
}

/// A likelihood `l(r_t | h_t)` that can be evaluated pointwise.
pub trait TractableLikelihood {
    fn log_density(&self, r: f64, h: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64> TractableLikelihood for F {
    fn log_density(&self, r: f64, h: f64) -> f64 {
        self(r, h)
    }
}

/// `r_t | h_t ~ N(0, h_t)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianLikelihood;

impl TractableLikelihood for GaussianLikelihood {
    fn log_density(&self, r: f64, h: f64) -> f64 {
        -0.5 * (2.0 * PI * h).ln() - r * r / (2.0 * h)
    }
}

/// How new particles are weighted.
#[derive(Clone, Copy)]
pub enum Weighting<'a> {
    Tractable(&'a dyn TractableLikelihood),
    Abc {
        stable: &'a StableParams,
        abc: AbcConfig,
    },
}

/// Weight given to the reference slot by the auxiliary filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceWeight {
    /// `w_t = K(r_t | u_t)`, without the `w / w~` correction.
    #[default]
    Kernel,
    /// `w_t = (w_{t-1} / w~_{t-1}) K(r_t | u_t)`, the same form as the other
    /// slots.
    Corrected,
}

/// Resampling and reference-ancestor scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    Conditional,
    AncestorSampling,
    Auxiliary(ReferenceWeight),
}

/// All particles, weights and ancestor indices generated by one filter pass.
///
/// Storage is time-major: `h(t, n)` for `t in 0..=T`, `u(t, n)` and
/// `ancestor(t, n) = a_{t-1}^{(n)}` for `t in 1..=T`.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    n: usize,
    t_len: usize,
    h: Vec<f64>,
    u: Vec<f64>,
    log_w: Vec<f64>,
    log_w_tempered: Vec<f64>,
    ancestors: Vec<usize>,
}

impl ParticleSystem {
    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn len_t(&self) -> usize {
        self.t_len
    }

    pub fn h(&self, t: usize, n: usize) -> f64 {
        self.h[t * self.n + n]
    }

    /// Auxiliary draw paired with `h(t, n)`, `t >= 1`. `None` for
    /// tractable-likelihood filters.
    pub fn u(&self, t: usize, n: usize) -> Option<f64> {
        if self.u.is_empty() {
            None
        } else {
            Some(self.u[(t - 1) * self.n + n])
        }
    }

    /// Normalised log-weights `log w_t` (max entry is 0).
    pub fn log_weights(&self, t: usize) -> &[f64] {
        &self.log_w[t * self.n..(t + 1) * self.n]
    }

    /// Normalised tempered log-weights `log w~_{t-1}` used to resample at
    /// step `t`. Only populated by the auxiliary filter.
    pub fn tempered_log_weights(&self, t: usize) -> Option<&[f64]> {
        if self.log_w_tempered.is_empty() {
            None
        } else {
            Some(&self.log_w_tempered[(t - 1) * self.n..t * self.n])
        }
    }

    /// Ancestor indices `a_{t-1}^{(.)}` drawn at step `t >= 1`.
    pub fn ancestors(&self, t: usize) -> &[usize] {
        &self.ancestors[(t - 1) * self.n..t * self.n]
    }

    /// Self-normalised weights at step `t`.
    pub fn normalized_weights(&self, t: usize) -> Vec<f64> {
        let w: Vec<f64> = self.log_weights(t).iter().map(|l| l.exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// Composed ancestry `A_{s,T}^{(n)}` for `s = 0..=T`.
    pub fn ancestor_path(&self, n: usize) -> Vec<usize> {
        let mut idx = vec![0; self.t_len + 1];
        idx[self.t_len] = n;
        for t in (1..=self.t_len).rev() {
            idx[t - 1] = self.ancestors(t)[idx[t]];
        }
        idx
    }

    /// Back-traced trajectory ending in particle `n` at time `T`.
    pub fn trajectory(&self, n: usize) -> Trajectory {
        let path = self.ancestor_path(n);
        let h = path.iter().enumerate().map(|(t, &k)| self.h(t, k)).collect();
        let u = if self.u.is_empty() {
            Vec::new()
        } else {
            path.iter()
                .enumerate()
                .skip(1)
                .map(|(t, &k)| self.u[(t - 1) * self.n + k])
                .collect()
        };
        Trajectory { h, u }
    }

    /// Draws the output index `b` from the terminal weights.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let mut cum = Vec::with_capacity(self.n);
        draw_one(self.log_weights(self.t_len), &mut cum, rng, self.t_len)
    }
}

/// I.i.d. categorical draws with probabilities proportional to
/// `exp(log_weights)`.
pub fn multinomial_resample<R: Rng + ?Sized>(
    log_weights: &[f64],
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut out = vec![0; n_draws];
    let mut cum = Vec::with_capacity(log_weights.len());
    fill_multinomial(log_weights, &mut out, &mut cum, rng, 0)?;
    Ok(out)
}

fn cumulative(log_weights: &[f64], cum: &mut Vec<f64>, step: usize) -> Result<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights {
            step,
            n: log_weights.len(),
        });
    }
    cum.clear();
    let mut total = 0.0;
    for &lw in log_weights {
        total += (lw - max).exp();
        cum.push(total);
    }
    Ok(total)
}

#[inline]
fn pick<R: Rng + ?Sized>(cum: &[f64], total: f64, rng: &mut R) -> usize {
    let x = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}

fn fill_multinomial<R: Rng + ?Sized>(
    log_weights: &[f64],
    out: &mut [usize],
    cum: &mut Vec<f64>,
    rng: &mut R,
    step: usize,
) -> Result<()> {
    if out.is_empty() {
        return Ok(());
    }
    let total = cumulative(log_weights, cum, step)?;
    for slot in out.iter_mut() {
        *slot = pick(cum, total, rng);
    }
    Ok(())
}

fn draw_one<R: Rng + ?Sized>(
    log_weights: &[f64],
    cum: &mut Vec<f64>,
    rng: &mut R,
    step: usize,
) -> Result<usize> {
    let total = cumulative(log_weights, cum, step)?;
    Ok(pick(cum, total, rng))
}

/// Subtracts the maximum; errors if every entry is `-inf`. A lone particle
/// has normalised weight one whatever its kernel value.
fn normalize_log(lw: &mut [f64], step: usize) -> Result<()> {
    if let [only] = lw {
        *only = 0.0;
        return Ok(());
    }
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights { step, n: lw.len() });
    }
    for x in lw.iter_mut() {
        *x -= max;
    }
    Ok(())
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log of the Cauchy-based approximation to `p(r_t | h_{t-1})`:
///
/// `-log(1 + (r_t^2)^c exp(-c (tau + phi log h_{t-1})))`,
/// `c = sqrt(pi^2 / (sigma_h^2 + pi^2))`.
pub fn tempered_logweight(r_t: f64, h_prev: f64, theta: &SvmParams) -> f64 {
    if r_t == 0.0 {
        return 0.0;
    }
    let c = tempering_exponent(theta);
    -softplus(c * (2.0 * r_t.abs().ln() - theta.tau - theta.phi * h_prev.ln()))
}

fn tempering_exponent(theta: &SvmParams) -> f64 {
    (PI * PI / (theta.sigma2 + PI * PI)).sqrt()
}

/// Per-step constants for the tempered weight.
struct Tempering {
    c: f64,
    tau: f64,
    phi: f64,
}

impl Tempering {
    fn new(theta: &SvmParams) -> Self {
        Self {
            c: tempering_exponent(theta),
            tau: theta.tau,
            phi: theta.phi,
        }
    }

    #[inline]
    fn log_weight(&self, log_r2: f64, h_prev: f64) -> f64 {
        if log_r2 == f64::NEG_INFINITY {
            return 0.0;
        }
        -softplus(self.c * (log_r2 - self.tau - self.phi * h_prev.ln()))
    }
}

enum Weigher<'a> {
    Tractable(&'a dyn TractableLikelihood),
    Abc {
        sampler: StableSampler,
        abc: AbcConfig,
    },
}

/// Runs one conditional SMC pass and returns every particle it generated.
///
/// The reference trajectory occupies slot `N - 1`. Its `u` (if any) is
/// ignored: ABC filters draw a fresh auxiliary observation for every slot.
pub fn run_conditional_smc<R: Rng + ?Sized>(
    r: &Observations,
    reference: &Trajectory,
    theta: &SvmParams,
    weighting: Weighting<'_>,
    resampling: Resampling,
    n_particles: usize,
    rng: &mut R,
) -> Result<ParticleSystem> {
    if n_particles == 0 {
        return domain("need at least one particle");
    }
    theta.validate()?;
    reference.validate()?;
    let t_len = r.len();
    if reference.h.len() != t_len + 1 {
        return domain(format!(
            "reference has {} volatilities but there are {} observations",
            reference.h.len(),
            t_len
        ));
    }
    let weigher = match weighting {
        Weighting::Tractable(lik) => Weigher::Tractable(lik),
        Weighting::Abc { stable, abc } => Weigher::Abc {
            sampler: stable.sampler()?,
            abc,
        },
    };

    let n = n_particles;
    let last = n - 1;
    let is_abc = matches!(weigher, Weigher::Abc { .. });
    let auxiliary = match resampling {
        Resampling::Auxiliary(rw) => Some(rw),
        _ => None,
    };

    let mut sys = ParticleSystem {
        n,
        t_len,
        h: vec![0.0; (t_len + 1) * n],
        u: if is_abc { vec![0.0; t_len * n] } else { Vec::new() },
        log_w: vec![0.0; (t_len + 1) * n],
        log_w_tempered: if auxiliary.is_some() {
            vec![0.0; t_len * n]
        } else {
            Vec::new()
        },
        ancestors: vec![0; t_len * n],
    };

    for k in 0..last {
        sys.h[k] = initial_sample(theta, rng);
    }
    sys.h[last] = reference.h[0];

    let tempering = Tempering::new(theta);
    let mut cum = Vec::with_capacity(n);
    let mut scratch = vec![0.0; n];
    // log(w_{t-1} / w~_{t-1}) per slot, auxiliary filter only
    let mut correction = vec![0.0; if auxiliary.is_some() { n } else { 0 }];

    for t in 1..=t_len {
        let r_t = r.r[t - 1];
        let (before, after) = sys.h.split_at_mut(t * n);
        let h_prev = &before[(t - 1) * n..];
        let h_cur = &mut after[..n];
        let (w_before, w_after) = sys.log_w.split_at_mut(t * n);
        let lw_prev = &w_before[(t - 1) * n..];
        let lw_cur = &mut w_after[..n];
        let anc = &mut sys.ancestors[(t - 1) * n..t * n];

        // Resample the free slots.
        if auxiliary.is_some() {
            let log_r2 = 2.0 * r_t.abs().ln();
            let lt = &mut sys.log_w_tempered[(t - 1) * n..t * n];
            for k in 0..n {
                let p = tempering.log_weight(log_r2, h_prev[k]);
                correction[k] = -p;
                lt[k] = lw_prev[k] + p;
            }
            normalize_log(lt, t - 1)?;
            fill_multinomial(lt, &mut anc[..last], &mut cum, rng, t - 1)?;
        } else {
            fill_multinomial(lw_prev, &mut anc[..last], &mut cum, rng, t - 1)?;
        }

        // Reference ancestor.
        anc[last] = match resampling {
            Resampling::AncestorSampling if last > 0 => {
                let h_star = reference.h[t];
                for k in 0..n {
                    scratch[k] = lw_prev[k] + transition_logdensity(h_star, h_prev[k], theta);
                }
                draw_one(&scratch, &mut cum, rng, t - 1)?
            }
            _ => last,
        };

        // Propagate.
        for k in 0..last {
            h_cur[k] = transition_sample(h_prev[anc[k]], theta, rng);
        }
        h_cur[last] = reference.h[t];

        // Weight.
        match &weigher {
            Weigher::Tractable(lik) => {
                for k in 0..n {
                    lw_cur[k] = lik.log_density(r_t, h_cur[k]);
                }
            }
            Weigher::Abc { sampler, abc } => {
                let u_cur = &mut sys.u[(t - 1) * n..t * n];
                for k in 0..n {
                    let u = emit_return(h_cur[k], sampler, rng);
                    u_cur[k] = u;
                    lw_cur[k] = abc.log_kernel(r_t, u);
                }
            }
        }
        if let Some(rw) = auxiliary {
            for k in 0..last {
                lw_cur[k] += correction[anc[k]];
            }
            if rw == ReferenceWeight::Corrected {
                lw_cur[last] += correction[last];
            }
        }
        normalize_log(lw_cur, t)?;
    }
    Ok(sys)
}

fn filter_and_select<R: Rng + ?Sized>(
    r: &Observations,
    reference: &Trajectory,
    theta: &SvmParams,
    weighting: Weighting<'_>,
    resampling: Resampling,
    n_particles: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let sys = run_conditional_smc(r, reference, theta, weighting, resampling, n_particles, rng)?;
    let b = sys.select(rng)?;
    Ok(sys.trajectory(b))
}

/// Conditional bootstrap filter with a tractable likelihood.
pub fn cbf<R: Rng + ?Sized>(
    r: &Observations,
    reference: &Trajectory,
    theta: &SvmParams,
    lik: &dyn TractableLikelihood,
    n_particles: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    filter_and_select(
        r,
        reference,
        theta,
        Weighting::Tractable(lik),
        Resampling::Conditional,
        n_particles,
        rng,
    )
}

/// Conditional bootstrap filter with ancestor sampling.
pub fn cbfas<R: Rng + ?Sized>(
    r: &Observations,
    reference: &Trajectory,
    theta: &SvmParams,
    lik: &dyn TractableLikelihood,
    n_particles: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    filter_and_select(
        r,
        reference,
        theta,
        Weighting::Tractable(lik),
        Resampling::AncestorSampling,
        n_particles,
        rng,
    )
}

pub fn abc_cbf<R: Rng + ?Sized>(
    r: &Observations,
    reference: &Trajectory,
    theta: &SvmParams,
    stable: &StableParams,
    abc: AbcConfig,
    n_particles: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    abc_filter(FilterKind::AbcCbf, r, reference, theta, stable, abc, n_particles, rng)
}

pub fn abc_cbfas<R: Rng + ?Sized>(
    r: &Observations,
    reference: &Trajectory,
    theta: &SvmParams,
    stable: &StableParams,
    abc: AbcConfig,
    n_particles: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    abc_filter(FilterKind::AbcCbfas, r, reference, theta, stable, abc, n_particles, rng)
}

/// ABC-based conditional auxiliary particle filter.
pub fn abc_capf<R: Rng + ?Sized>(
    r: &Observations,
    reference: &Trajectory,
    theta: &SvmParams,
    stable: &StableParams,
    abc: AbcConfig,
    n_particles: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    abc_filter(FilterKind::AbcCapf, r, reference, theta, stable, abc, n_particles, rng)
}

/// Runs the ABC filter selected by `kind` and returns the selected path.
#[allow(clippy::too_many_arguments)]
pub fn abc_filter<R: Rng + ?Sized>(
    kind: FilterKind,
    r: &Observations,
    reference: &Trajectory,
    theta: &SvmParams,
    stable: &StableParams,
    abc: AbcConfig,
    n_particles: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    filter_and_select(
        r,
        reference,
        theta,
        Weighting::Abc { stable, abc },
        kind.resampling(),
        n_particles,
        rng,
    )
}
