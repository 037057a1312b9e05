//! ABC comparison kernels `K_eps(r | u)`, evaluated in log space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    Uniform,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Uniform => "uniform",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelKind::Gaussian),
            "uniform" => Ok(KernelKind::Uniform),
            other => Err(Error::Config(format!("unknown kernel kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub epsilon: f64,
    pub kind: KernelKind,
}

impl AbcConfig {
    pub fn new(epsilon: f64, kind: KernelKind) -> Result<Self> {
        if !(epsilon > 0.0) {
            return domain(format!("ABC epsilon must be > 0, got {epsilon}"));
        }
        Ok(Self { epsilon, kind })
    }

    pub fn gaussian(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, KernelKind::Gaussian)
    }

    /// Unnormalised `log K_eps(r | u)`. The uniform kernel's support is the
    /// open interval `|r - u| < eps`.
    #[inline]
    pub fn log_kernel(&self, r: f64, u: f64) -> f64 {
        let d = r - u;
        match self.kind {
            KernelKind::Gaussian => -(d * d) / (2.0 * self.epsilon * self.epsilon),
            KernelKind::Uniform => {
                if d.abs() < self.epsilon {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let g = AbcConfig::gaussian(0.001).unwrap();
        assert_eq!(g.log_kernel(0.3, 0.3), 0.0);
        assert!((g.log_kernel(0.001, 0.0) + 0.5).abs() < 1e-12);
        let u = AbcConfig::new(0.5, KernelKind::Uniform).unwrap();
        assert_eq!(u.log_kernel(0.0, 0.499), 0.0);
        assert_eq!(u.log_kernel(0.0, 0.5), f64::NEG_INFINITY);
        assert!(AbcConfig::gaussian(0.0).is_err());
        assert!(AbcConfig::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn parse_kind() {
        assert_eq!("Gaussian".parse::<KernelKind>().unwrap(), KernelKind::Gaussian);
        assert_eq!("uniform".parse::<KernelKind>().unwrap(), KernelKind::Uniform);
        assert!("box".parse::<KernelKind>().is_err());
    }

    #[test]
    fn epsilon_limits() {
        let wide = AbcConfig::gaussian(1e12).unwrap();
        assert!(wide.log_kernel(0.05, -0.05).abs() < 1e-20);
        let narrow = AbcConfig::gaussian(1e-6).unwrap();
        let us = [0.3, -0.02, 0.011, 0.5, 0.0099];
        let r = 0.01;
        let lw: Vec<f64> = us.iter().map(|&u| narrow.log_kernel(r, u)).collect();
        let argmax = (0..us.len()).max_by(|&i, &j| lw[i].total_cmp(&lw[j])).unwrap();
        let argmin = (0..us.len())
            .min_by(|&i, &j| (r - us[i]).abs().total_cmp(&(r - us[j]).abs()))
            .unwrap();
        assert_eq!(argmax, argmin);
    }

    proptest! {
        #[test]
        fn symmetric(eps in 1e-4f64..10.0, r in -1.0f64..1.0, u in -1.0f64..1.0, uniform: bool) {
            let kind = if uniform { KernelKind::Uniform } else { KernelKind::Gaussian };
            let k = AbcConfig::new(eps, kind).unwrap();
            prop_assert_eq!(k.log_kernel(r, u), k.log_kernel(u, r));
        }

        #[test]
        fn gaussian_monotone(eps in 1e-3f64..1.0, d1 in 0.0f64..0.5, extra in 1e-6f64..0.5) {
            let k = AbcConfig::gaussian(eps).unwrap();
            prop_assert!(k.log_kernel(d1 + extra, 0.0) < k.log_kernel(d1, 0.0));
        }
    }
}
