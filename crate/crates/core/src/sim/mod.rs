//! Rollouts, scenario construction and policy comparison.

mod compare;
mod scenario;

pub use compare::{derive_seed, run_comparison, surplus_gain_pct, CompareOptions, ComparisonReport, ComparisonRow, GridSpec};
pub use scenario::{
    build_scenarios, default_cases, synthetic_data, Scenario, ScenarioCase, ScenarioData, ScenarioSettings,
};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlAction, ProsumerModel, SystemState};
use crate::policies::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub t: usize,
    pub state: SystemState,
    pub action: ControlAction,
    pub net_consumption: f64,
    pub payment: f64,
    pub utility: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub final_state: SystemState,
    /// γ·s_T.
    pub salvage: f64,
    pub total_utility: f64,
    pub total_payment: f64,
    /// Σ utility − Σ payment + γ·s_T.
    pub total_reward: f64,
}

pub const TRAJECTORY_COLUMNS: [&str; 10] =
    ["t", "s", "g", "c", "e", "d_total", "z", "payment", "utility", "reward"];

impl Trajectory {
    /// Writes one row per step. `comment` lines are emitted first, each prefixed with `# `.
    pub fn write_csv<W: Write>(&self, out: W, comment: &[String]) -> Result<()> {
        let mut out = out;
        for line in comment {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(TRAJECTORY_COLUMNS).map_err(csv_err)?;
        for st in &self.steps {
            let row = [
                st.t.to_string(),
                st.state.soc.to_string(),
                st.state.gen.to_string(),
                st.state.peak.to_string(),
                st.action.battery.to_string(),
                st.action.total_demand().to_string(),
                st.net_consumption.to_string(),
                st.payment.to_string(),
                st.utility.to_string(),
                st.reward.to_string(),
            ];
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// SoC after every step, starting with the initial SoC.
    pub fn soc_path(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.state.soc).chain([self.final_state.soc]).collect()
    }

    /// Peak after every step, starting with the initial peak.
    pub fn peak_path(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.state.peak).chain([self.final_state.peak]).collect()
    }
}

/// Runs `policy` along a realized generation path, starting with a zero peak.
pub fn simulate(policy: &dyn Policy, model: &ProsumerModel, gen_path: &[f64], start_soc: f64) -> Result<Trajectory> {
    let horizon = model.horizon();
    if gen_path.len() != horizon {
        return Err(Error::Input(format!(
            "generation path has {} steps, model horizon is {horizon}",
            gen_path.len()
        )));
    }
    if !(0.0..=model.battery.capacity).contains(&start_soc) {
        return Err(Error::Input(format!("start SoC {start_soc} outside [0, {}]", model.battery.capacity)));
    }
    let mut x = SystemState::new(start_soc, gen_path.first().copied().unwrap_or(0.0), 0.0);
    let mut steps = Vec::with_capacity(horizon);
    let (mut total_utility, mut total_payment) = (0.0, 0.0);
    for (t, &g) in gen_path.iter().enumerate() {
        x.gen = g;
        let action = policy.act(&x, t);
        let out = model.reward(&x, &action, t)?;
        total_utility += out.utility;
        total_payment += out.payment;
        steps.push(TrajectoryStep {
            t,
            state: x,
            action,
            net_consumption: out.net_consumption,
            payment: out.payment,
            utility: out.utility,
            reward: out.reward,
        });
        x = out.next_state;
    }
    let salvage = model.tariff.terminal_reward(x.soc);
    Ok(Trajectory {
        steps,
        final_state: x,
        salvage,
        total_utility,
        total_payment,
        total_reward: total_utility - total_payment + salvage,
    })
}

/// Realized trajectory of `policy` on the path sampled from `scenario` with `seed`.
pub fn trace(policy: &dyn Policy, scenario: &Scenario, seed: u64) -> Result<Trajectory> {
    let path = scenario.sample_generation(seed);
    simulate(policy, &scenario.model, &path, scenario.start_soc)
}
