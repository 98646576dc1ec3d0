//! Perfect-foresight benchmark: the best schedule when the whole generation path is known.

mod qp;
mod refine;

pub use refine::{refine_continuous, RefineResult, MAX_SWEEPS, SWEEP_TOL};

use serde::{Deserialize, Serialize};

use crate::dp::{ActionGrid, ActionSearch, ConcaveSurface, SalvageContinuation, Stage, TableContinuation};
use crate::error::{invalid, Error, Result};
use crate::model::{ControlAction, ProsumerModel, SystemState};
use crate::policies::SchedulePolicy;
use crate::sim::{simulate, Trajectory};

/// Slack allowed when a policy's realized reward is compared with the oracle value.
pub const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterministicInstance {
    pub gen_path: Vec<f64>,
    pub model: ProsumerModel,
    pub initial_soc: f64,
}

impl DeterministicInstance {
    pub fn new(gen_path: Vec<f64>, model: ProsumerModel, initial_soc: f64) -> Result<Self> {
        let inst = Self { gen_path, model, initial_soc };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = self.model.violations();
        if self.gen_path.len() != self.model.horizon() {
            problems.push(format!(
                "generation path has {} steps, model horizon is {}",
                self.gen_path.len(),
                self.model.horizon()
            ));
        }
        if let Some(t) = self.gen_path.iter().position(|g| !(g.is_finite() && *g >= 0.0)) {
            problems.push(format!("generation at step {t} is negative or not finite"));
        }
        if !(0.0..=self.model.battery.capacity).contains(&self.initial_soc) {
            problems.push(format!("initial SoC {} outside [0, {}]", self.initial_soc, self.model.battery.capacity));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(invalid(problems.join("; ")))
        }
    }

    /// Realized trajectory of a fixed schedule.
    pub fn evaluate(&self, schedule: &[ControlAction]) -> Result<Trajectory> {
        if schedule.len() != self.gen_path.len() {
            return Err(Error::Input(format!(
                "schedule has {} steps, path has {}",
                schedule.len(),
                self.gen_path.len()
            )));
        }
        simulate(&SchedulePolicy { schedule }, &self.model, &self.gen_path, self.initial_soc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDpResult {
    /// V₀ at (initial SoC, zero peak), interpolated when off-grid.
    pub value: f64,
    /// Greedy forward pass against the value tables.
    pub schedule: Vec<ControlAction>,
    /// Realized total reward of `schedule`.
    pub realized: f64,
}

/// Backward induction over an (SoC, peak) grid with generation known at every step.
pub fn solve_grid_dp(
    inst: &DeterministicInstance,
    soc: &[f64],
    peak: &[f64],
    actions: &ActionGrid,
    search: ActionSearch,
) -> Result<GridDpResult> {
    inst.validate()?;
    actions.validate(&inst.model)?;
    check_axis("soc", soc, inst.model.battery.capacity)?;
    check_axis("peak", peak, inst.model.peak_cap())?;
    let m = &inst.model;
    let horizon = m.horizon();
    let (ns, nc) = (soc.len(), peak.len());

    let mut surfaces: Vec<ConcaveSurface> = Vec::with_capacity(horizon + 1);
    let terminal: Vec<f64> =
        soc.iter().flat_map(|&s| std::iter::repeat(m.tariff.terminal_reward(s)).take(nc)).collect();
    surfaces.push(ConcaveSurface::new(&terminal, soc, peak));
    for t in (0..horizon).rev() {
        let stage = stage_at(inst, actions, search, surfaces.last().expect("terminal surface"), t);
        let mut v = Vec::with_capacity(ns * nc);
        for &s in soc {
            for &c in peak {
                v.push(stage.best(&SystemState::new(s, inst.gen_path[t], c)).0);
            }
        }
        surfaces.push(ConcaveSurface::new(&v, soc, peak));
    }
    surfaces.reverse();

    let mut x = SystemState::new(inst.initial_soc, inst.gen_path.first().copied().unwrap_or(0.0), 0.0);
    let mut schedule = Vec::with_capacity(horizon);
    for t in 0..horizon {
        x.gen = inst.gen_path[t];
        let action = stage_at(inst, actions, search, &surfaces[t + 1], t).best(&x).1;
        x = m.reward(&x, &action, t)?.next_state;
        schedule.push(action);
    }
    let realized = inst.evaluate(&schedule)?.total_reward;
    let value = surfaces[0].value(inst.initial_soc, 0.0);
    Ok(GridDpResult { value, schedule, realized })
}

fn check_axis(name: &str, points: &[f64], top: f64) -> Result<()> {
    if points.len() < 2 || points.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
        return Err(invalid(format!("{name} grid needs at least two strictly ascending points")));
    }
    if points[0] != 0.0 || points[points.len() - 1] < top - 1e-12 {
        return Err(invalid(format!("{name} grid must span [0, {top}]")));
    }
    Ok(())
}

fn stage_at<'a>(
    inst: &'a DeterministicInstance,
    actions: &'a ActionGrid,
    search: ActionSearch,
    next: &'a ConcaveSurface,
    t: usize,
) -> Stage<'a, TableContinuation<'a>> {
    let terminal = (t + 1 == inst.model.horizon()).then_some(SalvageContinuation { salvage: inst.model.tariff.salvage });
    Stage::new(&inst.model, actions, search, t, TableContinuation { terms: vec![(1.0, next)], terminal })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    /// Realized total reward of `schedule`.
    pub value: f64,
    pub schedule: Vec<ControlAction>,
    pub qp_iterations: usize,
    pub qp_converged: bool,
    pub refine_converged: bool,
}

/// Variable layout of the perfect-foresight QP: per step K demands, charge, discharge and
/// the import part y_t ≥ [z_t]⁺; then the overall peak P.
struct Layout {
    k: usize,
    horizon: usize,
}

impl Layout {
    fn width(&self) -> usize {
        self.k + 3
    }
    fn d(&self, t: usize, i: usize) -> usize {
        t * self.width() + i
    }
    fn ep(&self, t: usize) -> usize {
        t * self.width() + self.k
    }
    fn em(&self, t: usize) -> usize {
        t * self.width() + self.k + 1
    }
    fn y(&self, t: usize) -> usize {
        t * self.width() + self.k + 2
    }
    fn peak(&self) -> usize {
        self.horizon * self.width()
    }
    fn n(&self) -> usize {
        self.peak() + 1
    }
}

/// Smallest upper bound given to a variable, so that every box has an interior.
const MIN_WIDTH: f64 = 1e-9;

fn build_qp(inst: &DeterministicInstance) -> (qp::Qp, Layout) {
    let m = &inst.model;
    let b = &m.battery;
    let tar = &m.tariff;
    let lay = Layout { k: m.devices(), horizon: m.horizon() };
    let n = lay.n();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let (tau, rho) = (b.charge_eff, b.discharge_eff);
    let e_hi = b.charge_limit.max(MIN_WIDTH);
    let e_lo = b.discharge_limit.max(MIN_WIDTH);

    for t in 0..lay.horizon {
        let g = inst.gen_path[t];
        let (buy, sell) = (tar.buy[t], tar.sell[t]);
        let mut z_terms = Vec::new();
        for i in 0..lay.k {
            let u = m.demand.utility[t][i];
            let j = lay.d(t, i);
            h[j] = u.beta;
            c[j] = -u.alpha + sell;
            rows.push((vec![(j, -1.0)], 0.0));
            rows.push((vec![(j, 1.0)], m.demand.caps[t][i].max(MIN_WIDTH)));
            z_terms.push((j, 1.0));
        }
        let (ep, em, y) = (lay.ep(t), lay.em(t), lay.y(t));
        c[ep] = sell - tar.salvage * tau;
        c[em] = -sell + tar.salvage / rho;
        c[y] = buy - sell;
        rows.push((vec![(ep, -1.0)], 0.0));
        rows.push((vec![(ep, 1.0)], e_hi));
        rows.push((vec![(em, -1.0)], 0.0));
        rows.push((vec![(em, 1.0)], e_lo));
        z_terms.push((ep, 1.0));
        z_terms.push((em, -1.0));
        let z_max = m.demand.total_cap(t) + e_hi - g;
        rows.push((vec![(y, -1.0)], 0.0));
        rows.push((vec![(y, 1.0)], z_max.max(0.0) + 1.0));
        let mut y_row = z_terms.clone();
        y_row.push((y, -1.0));
        rows.push((y_row, g));
        let mut p_row = z_terms;
        p_row.push((lay.peak(), -1.0));
        rows.push((p_row, g));

        let mut up = Vec::with_capacity(2 * (t + 1));
        let mut down = Vec::with_capacity(2 * (t + 1));
        for u in 0..=t {
            up.push((lay.ep(u), tau));
            up.push((lay.em(u), -1.0 / rho));
            down.push((lay.ep(u), -tau));
            down.push((lay.em(u), 1.0 / rho));
        }
        rows.push((up, b.capacity - inst.initial_soc));
        rows.push((down, inst.initial_soc));
    }
    c[lay.peak()] = tar.demand_charge;
    rows.push((vec![(lay.peak(), -1.0)], 0.0));
    rows.push((vec![(lay.peak(), 1.0)], m.peak_cap() + 1.0));
    (qp::Qp { h_diag: h, c, rows }, lay)
}

/// Maps a QP point to a feasible schedule by forward simulation with clamping.
fn decode(inst: &DeterministicInstance, lay: &Layout, x: &[f64]) -> Vec<ControlAction> {
    let m = &inst.model;
    let mut s = inst.initial_soc;
    let mut out = Vec::with_capacity(lay.horizon);
    for t in 0..lay.horizon {
        let (lo, hi) = m.battery.feasible_interval(s);
        let e = (x[lay.ep(t)] - x[lay.em(t)]).clamp(lo, hi);
        let d = (0..lay.k).map(|i| x[lay.d(t, i)].clamp(0.0, m.demand.caps[t][i])).collect();
        s = m.battery.soc_after(s, e);
        out.push(ControlAction::new(e, d));
    }
    out
}

/// Best schedule for a known generation path: an interior-point solve of the concave
/// program, mapped to a feasible schedule, then polished by coordinate ascent.
pub fn solve_perfect_foresight(inst: &DeterministicInstance) -> Result<OracleSolution> {
    inst.validate()?;
    let (qp, lay) = build_qp(inst);
    let m = &inst.model;
    let mut x0 = vec![0.0; lay.n()];
    for t in 0..lay.horizon {
        for i in 0..lay.k {
            x0[lay.d(t, i)] = 0.5 * m.demand.caps[t][i];
        }
        x0[lay.ep(t)] = 0.25 * m.battery.charge_limit.max(MIN_WIDTH);
        x0[lay.em(t)] = 0.25 * m.battery.discharge_limit.max(MIN_WIDTH);
        x0[lay.y(t)] = 1.0;
    }
    x0[lay.peak()] = 1.0;
    let res = qp::solve(&qp, &x0);
    let schedule = decode(inst, &lay, &res.x);
    let refined = refine_continuous(inst, &schedule)?;
    Ok(OracleSolution {
        value: refined.value,
        schedule: refined.schedule,
        qp_iterations: res.iterations,
        qp_converged: res.converged,
        refine_converged: refined.converged,
    })
}

/// (oracle − policy)/|oracle|, failing when the policy beats the oracle by more than
/// [`DOMINANCE_TOL`].
pub fn upper_bound_gap(policy_value: f64, oracle_value: f64) -> Result<f64> {
    if policy_value > oracle_value + DOMINANCE_TOL {
        return Err(Error::Invariant(format!(
            "policy value {policy_value} exceeds the oracle value {oracle_value}"
        )));
    }
    if policy_value >= oracle_value {
        return Ok(0.0);
    }
    Ok((oracle_value - policy_value) / oracle_value.abs())
}
