//! Backward induction over the discretized (SoC, generation level, peak) state space.

mod checks;
mod eval;
mod grid;
mod interp;
mod stage;
mod table;

pub use checks::{
    check_bellman, check_concavity, check_monotonicity, check_q_concavity,
    check_threshold_structure, Axis, CheckReport, Violation,
};
pub use eval::{policy_eval, EvalSummary};
pub use grid::{linspace, ActionGrid, StateGrid};
pub use interp::{locate, ConcaveSurface, Profile};
pub use stage::ActionSearch;
pub use table::{PolicyTable, ValueTable};

pub(crate) use stage::{best_total_demand, SalvageContinuation, Scratch, Stage, TableContinuation};

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::generation::GenerationChain;
use crate::model::{ControlAction, ProsumerModel, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolveOptions {
    pub search: ActionSearch,
    /// Worker threads for the per-stage state sweep; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// Solved problem: inputs plus value and policy tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub model: ProsumerModel,
    pub chain: GenerationChain,
    pub grid: StateGrid,
    pub actions: ActionGrid,
    pub search: ActionSearch,
    pub values: ValueTable,
    pub policy: PolicyTable,
    #[serde(skip)]
    surfaces: Surfaces,
}

/// Concave surfaces of the value slices, indexed by t·levels + level; rebuilt on first use
/// after deserialization.
#[derive(Debug, Clone, Default)]
struct Surfaces(OnceLock<Vec<ConcaveSurface>>);

impl PartialEq for Surfaces {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

fn build_surfaces(values: &ValueTable, grid: &StateGrid, t: usize) -> Vec<ConcaveSurface> {
    (0..grid.gen.len())
        .into_par_iter()
        .map(|i_g| ConcaveSurface::new(values.slice(t, i_g), &grid.soc, &grid.peak))
        .collect()
}

pub(crate) fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn check_finite(model: &ProsumerModel, grid: &StateGrid, actions: &ActionGrid) -> Result<()> {
    let any_nan = grid.soc.iter().chain(&grid.peak).chain(&grid.gen).chain(&actions.battery).any(|v| v.is_nan())
        || actions.demand.iter().flatten().any(|v| v.is_nan())
        || model.tariff.buy.iter().chain(&model.tariff.sell).any(|v| v.is_nan());
    if any_nan {
        return Err(Error::Input("NaN in solver inputs".into()));
    }
    Ok(())
}

/// Solves the finite-horizon problem by backward induction.
pub fn solve(
    model: &ProsumerModel,
    chain: &GenerationChain,
    grid: &StateGrid,
    actions: &ActionGrid,
    opts: SolveOptions,
) -> Result<Solution> {
    check_finite(model, grid, actions)?;
    let mut problems = model.violations();
    problems.extend(chain.violations());
    problems.extend(grid.violations(model, chain));
    problems.extend(actions.violations(model));
    if !problems.is_empty() {
        return Err(invalid(problems.join("; ")));
    }

    let horizon = model.horizon();
    let (ns, ng, nc) = grid.dims();
    let mut values = ValueTable::zeros(horizon, grid);
    for i_g in 0..ng {
        for (i_s, &s) in grid.soc.iter().enumerate() {
            for i_c in 0..nc {
                values.set(horizon, i_s, i_g, i_c, model.tariff.terminal_reward(s));
            }
        }
    }

    let mut stages: Vec<Vec<ControlAction>> = Vec::with_capacity(horizon);
    let mut surfaces: Vec<Vec<ConcaveSurface>> = Vec::with_capacity(horizon + 1);
    surfaces.push(run_in_pool(opts.threads, || build_surfaces(&values, grid, horizon))?);
    for t in (0..horizon).rev() {
        let results = {
            let next = surfaces.last().expect("terminal surfaces");
            let solvers: Vec<_> =
                (0..ng).map(|i_g| stage_from_surfaces(model, chain, actions, opts.search, next, t, i_g)).collect();
            run_in_pool(opts.threads, || {
                (0..ng * ns * nc)
                    .into_par_iter()
                    .map(|flat| {
                        let i_g = flat / (ns * nc);
                        let i_s = (flat / nc) % ns;
                        let i_c = flat % nc;
                        let x = SystemState::new(grid.soc[i_s], grid.gen[i_g], grid.peak[i_c]);
                        solvers[i_g].best(&x)
                    })
                    .collect::<Vec<_>>()
            })?
        };
        let out = values.stage_mut(t);
        let mut acts = Vec::with_capacity(results.len());
        for (slot, (v, a)) in out.iter_mut().zip(results) {
            *slot = v;
            acts.push(a);
        }
        stages.push(acts);
        surfaces.push(run_in_pool(opts.threads, || build_surfaces(&values, grid, t))?);
    }
    stages.reverse();
    let policy = PolicyTable { horizon, dims: (ns, ng, nc), actions: stages.into_iter().flatten().collect() };

    Ok(Solution {
        model: model.clone(),
        chain: chain.clone(),
        grid: grid.clone(),
        actions: actions.clone(),
        search: opts.search,
        values,
        policy,
        surfaces: Surfaces(OnceLock::from(surfaces.into_iter().rev().flatten().collect::<Vec<_>>())),
    })
}

fn stage_from_surfaces<'a>(
    model: &'a ProsumerModel,
    chain: &'a GenerationChain,
    actions: &'a ActionGrid,
    search: ActionSearch,
    next: &'a [ConcaveSurface],
    t: usize,
    i_g: usize,
) -> Stage<'a, TableContinuation<'a>> {
    let terms = chain.row(i_g, t).iter().zip(next).filter(|(&w, _)| w > 0.0).map(|(&w, surf)| (w, surf)).collect();
    let terminal = (t + 1 == model.horizon()).then_some(SalvageContinuation { salvage: model.tariff.salvage });
    Stage::new(model, actions, search, t, TableContinuation { terms, terminal })
}

/// Relative size of the battery-power probes placed around an interior refined action.
const PROBE_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Grid,
    Stored,
    Probe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QEntry {
    pub action: ControlAction,
    pub q: f64,
    pub kind: EntryKind,
}

/// Q values at one (t, grid state): every gridded action, the stored action, and (for refined
/// solutions) battery-power probes on either side of the stored action.
#[derive(Debug, Clone, PartialEq)]
pub struct QSlice {
    pub t: usize,
    pub index: (usize, usize, usize),
    pub state: SystemState,
    /// Feasible battery interval at the state.
    pub interval: (f64, f64),
    pub entries: Vec<QEntry>,
    /// Position of the stored action in `entries`.
    pub stored: usize,
}

impl QSlice {
    pub fn max_q(&self) -> f64 {
        self.entries.iter().map(|e| e.q).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn stored_entry(&self) -> &QEntry {
        &self.entries[self.stored]
    }
}

impl Solution {
    pub fn horizon(&self) -> usize {
        self.values.horizon
    }

    fn surfaces(&self, t: usize) -> &[ConcaveSurface] {
        let all = self.surfaces.0.get_or_init(|| {
            (0..=self.horizon()).flat_map(|t| build_surfaces(&self.values, &self.grid, t)).collect()
        });
        let ng = self.grid.gen.len();
        &all[t * ng..(t + 1) * ng]
    }

    /// Concave interpolant of V_t at generation level `i_g`.
    pub fn surface(&self, t: usize, i_g: usize) -> &ConcaveSurface {
        &self.surfaces(t)[i_g]
    }

    pub(crate) fn stage(&self, t: usize, i_g: usize) -> Stage<'_, TableContinuation<'_>> {
        stage_from_surfaces(&self.model, &self.chain, &self.actions, self.search, self.surfaces(t + 1), t, i_g)
    }

    /// Greedy action with respect to V_{t+1} at an arbitrary state. At grid states this
    /// reproduces the stored policy.
    pub fn act(&self, state: &SystemState, t: usize) -> ControlAction {
        let i_g = self.chain.nearest_level(state.gen);
        self.stage(t, i_g).best(state).1
    }

    /// Interpolated V_t at `state` (generation snapped to the nearest level).
    pub fn value_at(&self, state: &SystemState, t: usize) -> f64 {
        let i_g = self.chain.nearest_level(state.gen);
        self.surface(t, i_g).value(state.soc, state.peak)
    }

    pub fn grid_state(&self, i_s: usize, i_g: usize, i_c: usize) -> SystemState {
        SystemState::new(self.grid.soc[i_s], self.grid.gen[i_g], self.grid.peak[i_c])
    }

    /// Q values at grid state `(i_s, i_g, i_c)` and step `t < T`.
    pub fn q_slice(&self, t: usize, i_s: usize, i_g: usize, i_c: usize) -> Result<QSlice> {
        if t >= self.horizon() {
            return Err(Error::Input(format!("q_slice needs t < {}, got {t}", self.horizon())));
        }
        let x = self.grid_state(i_s, i_g, i_c);
        let stage = self.stage(t, i_g);
        let interval = self.model.battery.feasible_interval(x.soc);
        let mut entries: Vec<QEntry> = stage
            .grid_actions(&x)
            .into_iter()
            .map(|a| QEntry { q: stage.q(&x, a.battery, &a.demand), action: a, kind: EntryKind::Grid })
            .collect();
        let stored_action = self.policy.get(t, i_s, i_g, i_c).clone();
        let stored = entries.len();
        entries.push(QEntry {
            q: stage.q(&x, stored_action.battery, &stored_action.demand),
            action: stored_action.clone(),
            kind: EntryKind::Stored,
        });
        if self.search == ActionSearch::Refined {
            let (lo, hi) = interval;
            let step = PROBE_FRACTION * (hi - lo).max(f64::MIN_POSITIVE);
            for e in [stored_action.battery - step, stored_action.battery + step] {
                let e = e.clamp(lo, hi);
                if e != stored_action.battery {
                    entries.push(QEntry {
                        q: stage.q(&x, e, &stored_action.demand),
                        action: ControlAction::new(e, stored_action.demand.clone()),
                        kind: EntryKind::Probe,
                    });
                }
            }
        }
        Ok(QSlice { t, index: (i_s, i_g, i_c), state: x, interval, entries, stored })
    }

    /// Q slices for every grid state and step.
    pub fn all_q_slices(&self) -> Vec<QSlice> {
        let (ns, ng, nc) = self.grid.dims();
        let horizon = self.horizon();
        (0..horizon * ng * ns * nc)
            .into_par_iter()
            .map(|flat| {
                let t = flat / (ng * ns * nc);
                let rem = flat % (ng * ns * nc);
                let i_g = rem / (ns * nc);
                let i_s = (rem / nc) % ns;
                let i_c = rem % nc;
                self.q_slice(t, i_s, i_g, i_c).expect("t < T")
            })
            .collect()
    }
}

/// Value of the salvage-valued one-step lookahead; used by the myopic policy.
pub(crate) fn myopic_stage<'a>(
    model: &'a ProsumerModel,
    actions: &'a ActionGrid,
    search: ActionSearch,
    t: usize,
) -> Stage<'a, SalvageContinuation> {
    Stage::new(model, actions, search, t, SalvageContinuation { salvage: model.tariff.salvage })
}
