//! Coordinate ascent over a fixed-path schedule.
//!
//! With c₀ = 0 the total reward along a known path is
//! Σ U_t(d_t) − Σ (p⁺[z_t]⁺ − p⁻[z_t]⁻) − p·max(0, max z_t) + γ s_T,
//! which is concave in the schedule. Along a single coordinate it is piecewise
//! quadratic (demand) or piecewise linear (battery) with kinks at z_t = 0, z_t = the peak
//! of the other steps, and e_t = 0; each one-dimensional problem is solved exactly.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ControlAction;
use crate::policies::SchedulePolicy;
use crate::sim::simulate;

use super::DeterministicInstance;

pub const MAX_SWEEPS: usize = 200;
/// Sweeps stop once the objective gains less than this.
pub const SWEEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    /// Realized total reward of `schedule`.
    pub value: f64,
    pub schedule: Vec<ControlAction>,
    /// False when the sweep limit was reached before the improvement fell below tolerance.
    pub converged: bool,
    pub sweeps: usize,
    /// Objective after each sweep, starting with the initial schedule.
    pub history: Vec<f64>,
}

struct Work<'a> {
    inst: &'a DeterministicInstance,
    e: Vec<f64>,
    d: Vec<Vec<f64>>,
    z: Vec<f64>,
    soc: Vec<f64>,
}

impl Work<'_> {
    fn recompute_soc(&mut self) {
        let b = &self.inst.model.battery;
        for t in 0..self.e.len() {
            self.soc[t + 1] = self.soc[t] + b.soc_delta(self.e[t]);
        }
    }

    fn objective(&self) -> f64 {
        let m = &self.inst.model;
        let mut v = 0.0;
        for t in 0..self.e.len() {
            v += m.demand.utility_unchecked(&self.d[t], t) - m.tariff.energy_cost(self.z[t], t);
        }
        let peak = self.z.iter().copied().fold(0.0f64, f64::max);
        v - m.tariff.demand_charge * peak + m.tariff.terminal_reward(self.soc[self.e.len()])
    }

    /// Peak of every step other than `t`, floored at zero.
    fn other_peak(&self, t: usize) -> f64 {
        self.z.iter().enumerate().filter(|&(u, _)| u != t).map(|(_, &z)| z).fold(0.0f64, f64::max)
    }

    fn step_battery(&mut self, t: usize) {
        let m = &self.inst.model;
        let b = &m.battery;
        let p = m.tariff.demand_charge;
        let gamma = m.tariff.salvage;
        let e_old = self.e[t];
        let delta_old = b.soc_delta(e_old);
        let later = &self.soc[t + 1..];
        let lo_s = later.iter().copied().fold(f64::INFINITY, f64::min);
        let hi_s = later.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = b.power_for_delta(delta_old - lo_s).max(-b.discharge_limit).min(e_old);
        let hi = b.power_for_delta(delta_old + b.capacity - hi_s).min(b.charge_limit).max(e_old);
        let rest = self.z[t] - e_old;
        let big_m = self.other_peak(t);
        let f = |e: f64| {
            let z = rest + e;
            -m.tariff.energy_cost(z, t) - p * z.max(big_m) + gamma * b.soc_delta(e)
        };
        let mut best = (f(e_old), e_old);
        for cand in [lo, hi, 0.0, -rest, big_m - rest] {
            let e = cand.clamp(lo, hi);
            let v = f(e);
            if v > best.0 {
                best = (v, e);
            }
        }
        if best.1 != e_old {
            self.e[t] = best.1;
            self.z[t] = rest + best.1;
            self.recompute_soc();
        }
    }

    fn step_demand(&mut self, t: usize, k: usize) {
        let m = &self.inst.model;
        let p = m.tariff.demand_charge;
        let u = m.demand.utility[t][k];
        let cap = m.demand.caps[t][k];
        let d_old = self.d[t][k];
        let rest = self.z[t] - d_old;
        let big_m = self.other_peak(t);
        let f = |d: f64| {
            let z = rest + d;
            u.value(d) - m.tariff.energy_cost(z, t) - p * z.max(big_m)
        };
        let mut knots = vec![0.0, cap];
        for zk in [0.0, big_m] {
            let dk = zk - rest;
            if dk > 0.0 && dk < cap {
                knots.push(dk);
            }
        }
        knots.sort_by(f64::total_cmp);
        let mut best = (f(d_old), d_old);
        for w in knots.windows(2) {
            let (a, bnd) = (w[0], w[1]);
            let mid_z = rest + 0.5 * (a + bnd);
            let price = if mid_z >= 0.0 { m.tariff.buy[t] } else { m.tariff.sell[t] }
                + if mid_z > big_m { p } else { 0.0 };
            let vertex = if u.beta > 0.0 { (u.alpha - price) / u.beta } else { a };
            for d in [a, bnd, vertex.clamp(a, bnd)] {
                let v = f(d);
                if v > best.0 {
                    best = (v, d);
                }
            }
        }
        if best.1 != d_old {
            self.d[t][k] = best.1;
            self.z[t] = rest + best.1;
        }
    }
}

/// Polishes a feasible schedule by exact coordinate maximization over each e_t and d_{t,i}.
///
/// The objective never decreases from sweep to sweep. Fails only if `init` is infeasible.
pub fn refine_continuous(inst: &DeterministicInstance, init: &[ControlAction]) -> Result<RefineResult> {
    inst.validate()?;
    let start = simulate(&SchedulePolicy { schedule: init }, &inst.model, &inst.gen_path, inst.initial_soc)?;
    let horizon = init.len();
    let mut w = Work {
        inst,
        e: init.iter().map(|a| a.battery).collect(),
        d: init.iter().map(|a| a.demand.clone()).collect(),
        z: start.steps.iter().map(|s| s.net_consumption).collect(),
        soc: vec![inst.initial_soc; horizon + 1],
    };
    w.recompute_soc();

    let mut history = vec![w.objective()];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        for t in 0..horizon {
            w.step_battery(t);
            for k in 0..inst.model.devices() {
                w.step_demand(t, k);
            }
        }
        let v = w.objective();
        let gain = v - history[history.len() - 1];
        history.push(v);
        if gain < SWEEP_TOL {
            converged = true;
            break;
        }
    }

    let schedule: Vec<ControlAction> =
        w.e.iter().zip(&w.d).map(|(&e, d)| ControlAction::new(e, d.clone())).collect();
    let realized = simulate(&SchedulePolicy { schedule: &schedule }, &inst.model, &inst.gen_path, inst.initial_soc)?;
    // Keep the starting schedule if rounding made the polished one worse.
    if realized.total_reward < start.total_reward {
        return Ok(RefineResult {
            value: start.total_reward,
            schedule: init.to_vec(),
            converged,
            sweeps,
            history,
        });
    }
    Ok(RefineResult { value: realized.total_reward, schedule, converged, sweeps, history })
}
