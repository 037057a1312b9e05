//! Likelihood-free particle Gibbs for stochastic volatility models whose
//! return noise follows an alpha-stable law.
//!
//! The crate is organised bottom-up:
//!
//! * [`stable`]: characteristic function and Chambers-Mallows-Stuck sampling.
//! * [`model`]: the log-normal stochastic volatility state space model.
//! * [`kernel`]: ABC comparison kernels in log space.
//! * [`filters`]: conditional SMC kernels (bootstrap, ancestor sampling and
//!   the conditional auxiliary particle filter).
//! * [`gibbs`]: conjugate normal-inverse-Gamma updates and the particle
//!   Gibbs drivers.
//! * [`bench`]: the simulation-study harness producing RMSE tables.
//! * [`io`]: price/return ingestion and posterior reports.
//!
//! ```
//! use abcpg::{gibbs::run_pg, model::simulate, seed::rng_from_seed};
//! use abcpg::{AbcConfig, FilterKind, NigState, PgConfig, StableParams, SvmParams};
//!
//! # fn main() -> abcpg::Result<()> {
//! let theta = SvmParams::new(-0.82, 0.9, 0.456)?;
//! let stable = StableParams::standard(1.75, 0.1)?;
//! let (_, returns) = simulate(&theta, &stable, 50, &mut rng_from_seed(7))?;
//! let cfg = PgConfig {
//!     n_particles: 50,
//!     burn_in: 20,
//!     n_samples: 50,
//!     abc: AbcConfig::gaussian(0.001)?,
//!     stable,
//!     prior: NigState::weakly_informative(),
//!     filter: FilterKind::AbcCapf,
//!     seed: 1,
//!     trajectory_thin: 0,
//! };
//! let posterior = run_pg(&returns, &cfg)?;
//! assert!(posterior.posterior_mean().phi.abs() < 1.0);
//! # Ok(())
//! # }
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod filters;
pub mod gibbs;
pub mod io;
pub mod kernel;
pub mod model;
pub mod seed;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};
pub use filters::FilterKind;
pub use gibbs::{NigState, PgConfig, PosteriorSample};
pub use kernel::{AbcConfig, KernelKind};
pub use model::{GridPoint, Observations, SvmParams, Trajectory};
pub use stable::StableParams;
