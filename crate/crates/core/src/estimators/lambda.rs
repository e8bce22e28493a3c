//! Regularisation level rules.

use serde::{Deserialize, Serialize};

use crate::system::NoiseConfig;

/// `c0·σ_u·(σ̄_w + σ_v)·√(log(Tpn)/N) + ε`.
#[allow(clippy::too_many_arguments)]
pub fn lambda_theorem(sigma_u: f64, sigma_w_bar: f64, sigma_v: f64, horizon: usize, p: usize, n: usize, samples: usize, epsilon: f64, c0: f64) -> f64 {
    c0 * sigma_u * (sigma_w_bar + sigma_v) * log_ratio(horizon * p * n, samples).sqrt() + epsilon
}

/// `0.2·(σ_w + σ_v)·√(log(Tpn)/N) + 0.02·0.8ᵀ`, the default used by the experiments.
pub fn lambda_simulation(sigma_w: f64, sigma_v: f64, horizon: usize, p: usize, n: usize, samples: usize) -> f64 {
    0.2 * (sigma_w + sigma_v) * log_ratio(horizon * p * n, samples).sqrt() + 0.02 * 0.8_f64.powi(horizon as i32)
}

fn log_ratio(dim: usize, samples: usize) -> f64 {
    (dim as f64).ln() / samples as f64
}

/// How an experiment picks λ for each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum LambdaRule {
    Simulation,
    Theorem { c0: f64, epsilon: f64 },
    Fixed { value: f64 },
}

impl LambdaRule {
    /// λ for one cell. `sigma_w_bar` is only read by the theorem rule.
    pub fn value(&self, noise: &NoiseConfig, sigma_w_bar: f64, horizon: usize, p: usize, n: usize, samples: usize) -> f64 {
        match *self {
            LambdaRule::Simulation => lambda_simulation(noise.sigma_w, noise.sigma_v, horizon, p, n, samples),
            LambdaRule::Theorem { c0, epsilon } => lambda_theorem(noise.sigma_u, sigma_w_bar, noise.sigma_v, horizon, p, n, samples, epsilon, c0),
            LambdaRule::Fixed { value } => value,
        }
    }

    /// Initial-state allowance ε built into the rule.
    pub fn epsilon(&self, horizon: usize) -> f64 {
        match *self {
            LambdaRule::Simulation => 0.02 * 0.8_f64.powi(horizon as i32),
            LambdaRule::Theorem { epsilon, .. } => epsilon,
            LambdaRule::Fixed { .. } => 0.0,
        }
    }
}

impl std::fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaRule::Simulation => write!(f, "simulation"),
            LambdaRule::Theorem { c0, epsilon } => write!(f, "theorem:{c0}:{epsilon}"),
            LambdaRule::Fixed { value } => write!(f, "fixed:{value}"),
        }
    }
}

impl std::str::FromStr for LambdaRule {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let bad = || crate::Error::Config(format!("bad lambda rule `{s}` (simulation | theorem:<c0>:<eps> | fixed:<value>)"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["simulation"] => Ok(LambdaRule::Simulation),
            ["theorem", c0, eps] => Ok(LambdaRule::Theorem { c0: num(c0)?, epsilon: num(eps)? }),
            ["fixed", v] => Ok(LambdaRule::Fixed { value: num(v)? }),
            _ => Err(bad()),
        }
    }
}
