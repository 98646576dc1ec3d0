//! One-step Bellman maximization shared by the solver, the DP policy, the myopic policy
//! and the deterministic oracle.

use serde::{Deserialize, Serialize};

use crate::model::{net_consumption, update_peak, ControlAction, ProsumerModel, SystemState};

use super::grid::ActionGrid;
use super::interp::{ConcaveSurface, Profile};

/// How the per-state action maximization is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSearch {
    /// Enumerate the action grid (battery points clipped to the feasible interval).
    Grid,
    /// Enumerate the grid, then also search the battery power continuously and solve the
    /// consumption subproblem exactly; the better of the two is kept.
    #[default]
    Refined,
}

/// Expected next-stage value as a function of the successor (SoC, peak).
pub(crate) trait Continuation: Sync {
    fn value(&self, s: f64, c: f64) -> f64;
    /// Fills `out` with the piecewise-linear restriction of `value(s, ·)`; `tmp` is scratch.
    fn profile(&self, s: f64, out: &mut Profile, tmp: &mut [Profile; 2]);
}

/// Probability-weighted sum of next-stage value surfaces.
pub(crate) struct TableContinuation<'a> {
    pub terms: Vec<(f64, &'a ConcaveSurface)>,
    /// Exact γ·s used in place of the surfaces when the next step is the horizon.
    pub terminal: Option<SalvageContinuation>,
}

impl Continuation for TableContinuation<'_> {
    #[inline]
    fn value(&self, s: f64, c: f64) -> f64 {
        if let Some(term) = &self.terminal {
            return term.value(s, c);
        }
        self.terms.iter().map(|&(w, surf)| w * surf.value(s, c)).sum()
    }

    fn profile(&self, s: f64, out: &mut Profile, tmp: &mut [Profile; 2]) {
        if let Some(term) = &self.terminal {
            return term.profile(s, out, tmp);
        }
        let [one, buf] = tmp;
        out.clear();
        for (n, &(w, surf)) in self.terms.iter().enumerate() {
            if n == 0 {
                surf.profile(s, out);
                out.ys.iter_mut().for_each(|y| *y *= w);
            } else {
                surf.profile(s, one);
                out.add_scaled(one, w, buf);
            }
        }
        if out.xs.is_empty() {
            out.xs.push(0.0);
            out.ys.push(0.0);
        }
    }
}

/// Stored energy valued at the salvage rate.
pub(crate) struct SalvageContinuation {
    pub salvage: f64,
}

impl Continuation for SalvageContinuation {
    #[inline]
    fn value(&self, s: f64, _c: f64) -> f64 {
        self.salvage * s
    }

    fn profile(&self, s: f64, out: &mut Profile, _tmp: &mut [Profile; 2]) {
        out.clear();
        out.xs.push(0.0);
        out.ys.push(self.salvage * s);
    }
}

#[derive(Default)]
pub(crate) struct Scratch {
    profile: Profile,
    tmp: [Profile; 2],
    zs: Vec<f64>,
}

const GOLDEN_MAX_ITERS: usize = 200;
const GOLDEN_REL_TOL: f64 = 1e-12;

pub(crate) struct Stage<'a, C: Continuation> {
    pub model: &'a ProsumerModel,
    pub actions: &'a ActionGrid,
    pub search: ActionSearch,
    pub t: usize,
    pub cont: C,
    demand_grid: Vec<Vec<f64>>,
}

impl<'a, C: Continuation> Stage<'a, C> {
    pub fn new(
        model: &'a ProsumerModel,
        actions: &'a ActionGrid,
        search: ActionSearch,
        t: usize,
        cont: C,
    ) -> Self {
        let demand_grid = actions.demand_candidates(model, t);
        Self { model, actions, search, t, cont, demand_grid }
    }

    /// Q(x, (e, d)) = r_t(x, u) + continuation(s', c'), for an action assumed feasible.
    #[inline]
    pub fn q(&self, x: &SystemState, e: f64, d: &[f64]) -> f64 {
        let m = self.model;
        let z = net_consumption(d, e, x.gen);
        let utility = m.demand.utility_unchecked(d, self.t);
        let payment = m.tariff.payment(z, x.peak, self.t);
        let reward = utility - payment;
        reward + self.cont.value(m.battery.soc_after(x.soc, e), update_peak(z, x.peak))
    }

    /// Grid actions at `x` in tie-break order (smallest |e|, then smallest total demand).
    pub fn grid_actions(&self, x: &SystemState) -> Vec<ControlAction> {
        let (lo, hi) = self.model.battery.feasible_interval(x.soc);
        let mut out = Vec::new();
        for e in self.actions.battery_candidates(lo, hi) {
            for d in &self.demand_grid {
                out.push(ControlAction::new(e, d.clone()));
            }
        }
        out
    }

    /// Maximizing action and its Q value.
    pub fn best(&self, x: &SystemState) -> (f64, ControlAction) {
        let (lo, hi) = self.model.battery.feasible_interval(x.soc);
        let mut best_q = f64::NEG_INFINITY;
        let mut best_e = 0.0;
        let mut best_d: &[f64] = &self.demand_grid[0];
        for e in self.actions.battery_candidates(lo, hi) {
            for d in &self.demand_grid {
                let q = self.q(x, e, d);
                if q > best_q {
                    best_q = q;
                    best_e = e;
                    best_d = d;
                }
            }
        }
        let mut best = (best_q, ControlAction::new(best_e, best_d.to_vec()));
        if self.search == ActionSearch::Refined {
            let mut scratch = Scratch::default();
            let e_star = self.golden(x, lo, hi, &mut scratch);
            for e in [0.0, lo, hi, e_star] {
                let (_, total) = self.best_total_demand(x, e, &mut scratch);
                let d = self.model.demand.allocate(self.t, total);
                let q = self.q(x, e, &d);
                if q > best.0 {
                    best = (q, ControlAction::new(e, d));
                }
            }
        }
        best
    }

    /// Golden-section search over battery power of the demand-optimized Q.
    fn golden(&self, x: &SystemState, lo: f64, hi: f64, scratch: &mut Scratch) -> f64 {
        if hi - lo <= 0.0 {
            return lo;
        }
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let tol = GOLDEN_REL_TOL * (hi - lo).max(1.0);
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = self.best_total_demand(x, x1, scratch).0;
        let mut f2 = self.best_total_demand(x, x2, scratch).0;
        for _ in 0..GOLDEN_MAX_ITERS {
            if b - a <= tol {
                break;
            }
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = self.best_total_demand(x, x2, scratch).0;
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = self.best_total_demand(x, x1, scratch).0;
            }
        }
        if f1 >= f2 {
            x1
        } else {
            x2
        }
    }

    pub(crate) fn best_total_demand(&self, x: &SystemState, e: f64, scratch: &mut Scratch) -> (f64, f64) {
        best_total_demand(self.model, self.t, &self.cont, x, e, scratch)
    }
}

/// Exact maximization over total consumption D for fixed battery power `e`.
///
/// In terms of z = D + e − g the objective is Ū(D) + N(z), where N collects the energy
/// bill, the demand charge and the continuation; N is linear between its kinks at 0, c
/// and the continuation's nodes. On each linear piece the maximizer is the aggregate
/// demand at the piece's marginal price, clipped into the piece. Returns (objective, D).
pub(crate) fn best_total_demand<C: Continuation>(
    m: &ProsumerModel,
    t: usize,
    cont: &C,
    x: &SystemState,
    e: f64,
    scratch: &mut Scratch,
) -> (f64, f64) {
    let s_next = m.battery.soc_after(x.soc, e);
    cont.profile(s_next, &mut scratch.profile, &mut scratch.tmp);
    let prof = &scratch.profile;
    let c = x.peak;
    let p = m.tariff.demand_charge;
    let cap = m.demand.total_cap(t);
    let shift = e - x.gen;
    let (z_lo, z_hi) = (shift, cap + shift);
    let n_of = |z: f64| -> f64 {
        -m.tariff.energy_cost(z, t) - p * (z - c).max(0.0) + prof.eval(z.max(c))
    };
    let value_of = |total: f64| m.demand.aggregate_utility(t, total) + n_of(total + shift);

    if z_hi <= z_lo {
        return (value_of(0.0), 0.0);
    }
    let zs = &mut scratch.zs;
    zs.clear();
    zs.push(z_lo);
    zs.extend(
        [0.0, c].into_iter().chain(prof.xs.iter().copied().filter(|&xk| xk > c)).filter(|&z| z > z_lo && z < z_hi),
    );
    zs.push(z_hi);
    zs.sort_by(f64::total_cmp);
    zs.dedup();

    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut n_a = n_of(zs[0]);
    for w in zs.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n_b = n_of(b);
        let price = -(n_b - n_a) / (b - a);
        n_a = n_b;
        let z = (m.demand.demand_at_price(t, price) + shift).clamp(a, b);
        let total = (z - shift).clamp(0.0, cap);
        let v = value_of(total);
        if v > best.0 {
            best = (v, total);
        }
    }
    best
}

