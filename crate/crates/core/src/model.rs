//! Log-normal stochastic volatility model.
//!
//! ```text
//! log h_t = tau + phi log h_{t-1} + sigma_h eps_t,   eps_t ~ N(0, 1)
//! r_t     = sqrt(h_t) Z_t,                          Z_t ~ stable
//! h_0     ~ LogNormal(tau / (1 - phi), sigma_h^2 / (1 - phi^2))
//! ```
//!
//! Returns `r_t` pair with `h_t` for `t >= 1`; `h_0` is never observed.

use std::f64::consts::PI;

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::stable::{StableParams, StableSampler};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub tau: f64,
    pub phi: f64,
    /// Transition noise variance `sigma_h^2`.
    pub sigma2: f64,
}

impl SvmParams {
    pub fn new(tau: f64, phi: f64, sigma2: f64) -> Result<Self> {
        let p = Self { tau, phi, sigma2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return domain(format!("tau must be finite, got {}", self.tau));
        }
        if !(self.phi.abs() < 1.0) {
            return domain(format!("|phi| must be < 1, got {}", self.phi));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return domain(format!("sigma2 must be > 0, got {}", self.sigma2));
        }
        Ok(())
    }

    /// Mean of the stationary law of `log h`.
    pub fn stationary_log_mean(&self) -> f64 {
        self.tau / (1.0 - self.phi)
    }

    /// Variance of the stationary law of `log h`.
    pub fn stationary_log_var(&self) -> f64 {
        self.sigma2 / (1.0 - self.phi * self.phi)
    }

    /// `E(h_t)` under the stationary law.
    pub fn stationary_mean(&self) -> f64 {
        (self.stationary_log_mean() + 0.5 * self.stationary_log_var()).exp()
    }

    /// Squared coefficient of variation `Var(h_t) / E(h_t)^2`.
    pub fn stationary_cv(&self) -> f64 {
        self.stationary_log_var().exp_m1()
    }
}

/// A latent path `h_{0:T}` together with auxiliary draws `u_{1:T}`.
///
/// `u[t - 1]` pairs with `h[t]`. Paths produced outside the ABC filters may
/// carry an empty `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub h: Vec<f64>,
    pub u: Vec<f64>,
}

impl Trajectory {
    pub fn new(h: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let tr = Self { h, u };
        tr.validate()?;
        Ok(tr)
    }

    pub fn from_h(h: Vec<f64>) -> Result<Self> {
        Self::new(h, Vec::new())
    }

    /// Number of observation steps `T`.
    pub fn len_t(&self) -> usize {
        self.h.len().saturating_sub(1)
    }

    pub fn has_u(&self) -> bool {
        !self.u.is_empty() || self.h.len() == 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.h.is_empty() {
            return domain("trajectory needs at least h_0");
        }
        if let Some(x) = self.h.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return domain(format!("volatilities must be positive and finite, got {x}"));
        }
        if !self.u.is_empty() && self.u.len() + 1 != self.h.len() {
            return domain(format!(
                "trajectory has {} volatilities but {} auxiliary draws",
                self.h.len(),
                self.u.len()
            ));
        }
        Ok(())
    }
}

/// Observed returns `r_{1:T}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub r: Vec<f64>,
}

impl Observations {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if let Some(x) = r.iter().find(|x| !x.is_finite()) {
            return domain(format!("returns must be finite, got {x}"));
        }
        Ok(Self { r })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub phi: f64,
    /// Squared coefficient of variation of `h_t`.
    pub cv: f64,
    /// Stationary mean `E(h_t)`.
    pub mean_h: f64,
}

impl GridPoint {
    pub fn new(phi: f64, cv: f64, mean_h: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return domain(format!("grid phi must satisfy |phi| < 1, got {phi}"));
        }
        if !(cv > 0.0 && cv.is_finite()) {
            return domain(format!("grid cv must be > 0, got {cv}"));
        }
        if !(mean_h > 0.0 && mean_h.is_finite()) {
            return domain(format!("grid mean_h must be > 0, got {mean_h}"));
        }
        Ok(Self { phi, cv, mean_h })
    }
}

/// Inverts `(phi, CV, E h)` into `(tau, phi, sigma_h^2)`.
pub fn grid_params(g: &GridPoint) -> SvmParams {
    let one_m_phi2 = 1.0 - g.phi * g.phi;
    let sigma2 = one_m_phi2 * g.cv.ln_1p();
    let tau = (1.0 - g.phi) * (g.mean_h.ln() - sigma2 / (2.0 * one_m_phi2));
    SvmParams {
        tau,
        phi: g.phi,
        sigma2,
    }
}

pub fn initial_sample<R: Rng + ?Sized>(theta: &SvmParams, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (theta.stationary_log_mean() + theta.stationary_log_var().sqrt() * z).exp()
}

pub fn transition_sample<R: Rng + ?Sized>(h_prev: f64, theta: &SvmParams, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (theta.tau + theta.phi * h_prev.ln() + theta.sigma2.sqrt() * z).exp()
}

/// Log of the log-normal transition density `g(h_t | h_prev)`, including
/// the `1 / h_t` Jacobian.
pub fn transition_logdensity(h_t: f64, h_prev: f64, theta: &SvmParams) -> f64 {
    let log_h = h_t.ln();
    let resid = log_h - theta.tau - theta.phi * h_prev.ln();
    -0.5 * (2.0 * PI * theta.sigma2).ln() - resid * resid / (2.0 * theta.sigma2) - log_h
}

/// `sqrt(h_t) * Z` with `Z` drawn from the stable sampler.
pub fn emit_return<R: Rng + ?Sized>(h_t: f64, stable: &StableSampler, rng: &mut R) -> f64 {
    h_t.sqrt() * stable.sample(rng)
}

/// Simulates `h_{0:T}` and `r_{1:T}`. The returned trajectory has no `u`.
pub fn simulate<R: Rng + ?Sized>(
    theta: &SvmParams,
    stable: &StableParams,
    t_len: usize,
    rng: &mut R,
) -> Result<(Trajectory, Observations)> {
    theta.validate()?;
    let sampler = stable.sampler()?;
    let mut h = Vec::with_capacity(t_len + 1);
    let mut r = Vec::with_capacity(t_len);
    h.push(initial_sample(theta, rng));
    for t in 1..=t_len {
        let ht = transition_sample(h[t - 1], theta, rng);
        h.push(ht);
        r.push(emit_return(ht, &sampler, rng));
    }
    Ok((Trajectory { h, u: Vec::new() }, Observations { r }))
}
