//! Causal control strategies behind a common `act(state, t)` interface.

use serde::{Deserialize, Serialize};

use crate::dp::{myopic_stage, ActionGrid, ActionSearch, Solution};
use crate::dp::{best_total_demand, SalvageContinuation, Scratch};
use crate::error::{Error, Result};
use crate::model::{ControlAction, ProsumerModel, SystemState};

pub trait Policy: Sync {
    fn name(&self) -> String;
    fn act(&self, state: &SystemState, t: usize) -> ControlAction;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Backup,
    Threshold,
    Myopic,
    Dp,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Backup, PolicyKind::Threshold, PolicyKind::Myopic, PolicyKind::Dp];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Backup => "backup",
            PolicyKind::Threshold => "threshold",
            PolicyKind::Myopic => "myopic",
            PolicyKind::Dp => "dp",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "backup" => Ok(PolicyKind::Backup),
            "threshold" => Ok(PolicyKind::Threshold),
            "myopic" => Ok(PolicyKind::Myopic),
            "dp" => Ok(PolicyKind::Dp),
            other => Err(Error::Input(format!(
                "unknown policy '{other}' (expected backup, threshold, myopic or dp)"
            ))),
        }
    }
}

/// Consumption maximizing U_t(d) − P_t(1ᵀd + e − g, c) for a fixed battery power `e`.
pub fn myopic_demand(state: &SystemState, t: usize, model: &ProsumerModel, e: f64) -> Vec<f64> {
    // The salvage term depends on e only, so it does not move the maximizer.
    let cont = SalvageContinuation { salvage: 0.0 };
    let (_, total) = best_total_demand(model, t, &cont, state, e, &mut Scratch::default());
    model.demand.allocate(t, total)
}

/// Charge toward full at the largest feasible rate; consume myopically.
pub fn backup_act(state: &SystemState, t: usize, model: &ProsumerModel) -> ControlAction {
    let (_, hi) = model.battery.feasible_interval(state.soc);
    ControlAction::new(hi, myopic_demand(state, t, model, hi))
}

/// Rule-based dispatch: cover the deficit 1ᵀd̄ − g from storage, or store the surplus.
///
/// With `strict_paper` the deficit branch uses +ρ·s in place of −ρ·s; the result is then
/// clipped into the feasible interval so that the action can still be applied.
pub fn threshold_act(state: &SystemState, t: usize, model: &ProsumerModel, strict_paper: bool) -> ControlAction {
    let b = &model.battery;
    let s = state.soc.clamp(0.0, b.capacity);
    let deficit = model.demand.total_cap(t) - state.gen;
    let e = if deficit > 0.0 {
        let stored = if strict_paper { b.discharge_eff * s } else { -b.discharge_eff * s };
        (-b.discharge_limit).max(stored).max(-deficit)
    } else {
        let room = if b.charge_eff > 0.0 { (b.capacity - s) / b.charge_eff } else { b.charge_limit };
        b.charge_limit.min(room).min(-deficit)
    };
    let (lo, hi) = b.feasible_interval(s);
    ControlAction::new(e.clamp(lo, hi), model.demand.caps[t].clone())
}

/// One-step lookahead with stored energy valued at the salvage rate.
pub fn myopic_act(
    state: &SystemState,
    t: usize,
    model: &ProsumerModel,
    actions: &ActionGrid,
    search: ActionSearch,
) -> ControlAction {
    myopic_stage(model, actions, search, t).best(state).1
}

#[derive(Debug, Clone)]
pub struct BackupPolicy<'a> {
    pub model: &'a ProsumerModel,
}

impl Policy for BackupPolicy<'_> {
    fn name(&self) -> String {
        "backup".into()
    }

    fn act(&self, state: &SystemState, t: usize) -> ControlAction {
        backup_act(state, t, self.model)
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdPolicy<'a> {
    pub model: &'a ProsumerModel,
    pub strict_paper: bool,
}

impl Policy for ThresholdPolicy<'_> {
    fn name(&self) -> String {
        "threshold".into()
    }

    fn act(&self, state: &SystemState, t: usize) -> ControlAction {
        threshold_act(state, t, self.model, self.strict_paper)
    }
}

#[derive(Debug, Clone)]
pub struct MyopicPolicy<'a> {
    pub model: &'a ProsumerModel,
    pub actions: &'a ActionGrid,
    pub search: ActionSearch,
}

impl Policy for MyopicPolicy<'_> {
    fn name(&self) -> String {
        "myopic".into()
    }

    fn act(&self, state: &SystemState, t: usize) -> ControlAction {
        myopic_act(state, t, self.model, self.actions, self.search)
    }
}

#[derive(Debug, Clone)]
pub struct DpPolicy<'a> {
    pub solution: &'a Solution,
}

impl Policy for DpPolicy<'_> {
    fn name(&self) -> String {
        "dp".into()
    }

    fn act(&self, state: &SystemState, t: usize) -> ControlAction {
        self.solution.act(state, t)
    }
}

/// Replays a fixed action sequence.
#[derive(Debug, Clone)]
pub struct SchedulePolicy<'a> {
    pub schedule: &'a [ControlAction],
}

impl Policy for SchedulePolicy<'_> {
    fn name(&self) -> String {
        "schedule".into()
    }

    fn act(&self, _state: &SystemState, t: usize) -> ControlAction {
        self.schedule[t].clone()
    }
}
