use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemState;
use crate::policies::DpPolicy;
use crate::sim::{derive_seed, simulate};

use super::Solution;

/// Monte-Carlo estimate of a policy's expected total reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub half_width: f64,
    pub values: Vec<f64>,
}

impl EvalSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        if !values.is_empty() && values.iter().all(|&v| v == values[0]) {
            return Self { mean: values[0], half_width: 0.0, values };
        }
        let mean = values.iter().sum::<f64>() / n;
        let half_width = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, half_width, values }
    }
}

/// Rolls the solution's policy out from `start` (peak forced to zero) along sampled
/// generation paths. Rollout r uses the path seeded by `derive_seed(seed, 0, r)`.
pub fn policy_eval(solution: &Solution, start: &SystemState, n_rollouts: usize, seed: u64) -> Result<EvalSummary> {
    if n_rollouts == 0 {
        return Err(Error::Input("n_rollouts must be >= 1".into()));
    }
    let horizon = solution.horizon();
    let level = solution.chain.nearest_level(start.gen);
    let policy = DpPolicy { solution };
    let values = (0..n_rollouts)
        .into_par_iter()
        .map(|r| {
            let path = solution.chain.values(&solution.chain.sample_path(level, horizon, derive_seed(seed, 0, r)));
            simulate(&policy, &solution.model, &path, start.soc).map(|tr| tr.total_reward)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_values(values))
}
