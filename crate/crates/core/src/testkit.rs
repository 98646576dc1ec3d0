//! Random instance generators and brute-force references for tests.

use rand::Rng;

use crate::dp::{linspace, ActionGrid, StateGrid};
use crate::error::Result;
use crate::generation::{GenerationChain, Matrix, Transitions};
use crate::model::{BatterySpec, DemandBundle, ProsumerModel, QuadraticUtility, SystemState, TariffSchedule};
use crate::oracle::DeterministicInstance;
use crate::policies::Policy;

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub model: ProsumerModel,
    pub chain: GenerationChain,
    pub grid: StateGrid,
    pub actions: ActionGrid,
}

/// Row-stochastic matrix whose rows are ordered by first-order stochastic dominance
/// (higher rows put more mass on higher levels).
pub fn monotone_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    let mut cdfs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-3f64..1.0).ln()).collect();
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            w.iter()
                .map(|x| {
                    acc += x / total;
                    acc
                })
                .collect()
        })
        .collect();
    for j in 0..n {
        let mut col: Vec<f64> = cdfs.iter().map(|r| r[j]).collect();
        col.sort_by(|a, b| b.total_cmp(a));
        for (i, v) in col.into_iter().enumerate() {
            cdfs[i][j] = if j == n - 1 { 1.0 } else { v };
        }
    }
    cdfs.iter()
        .map(|cdf| {
            let mut prev = 0.0;
            cdf.iter()
                .map(|&c| {
                    let p = (c - prev).max(0.0);
                    prev = c;
                    p
                })
                .collect()
        })
        .collect()
}

/// Random valid model over `horizon` steps.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, horizon: usize, devices: usize) -> ProsumerModel {
    let battery = BatterySpec::new(
        rng.gen_range(1.0..8.0),
        rng.gen_range(0.3..2.0),
        rng.gen_range(0.3..2.0),
        rng.gen_range(0.8..=1.0),
        rng.gen_range(0.8..=1.0),
    )
    .expect("valid battery");
    let buy: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.05..0.4)).collect();
    let low = buy.iter().copied().fold(f64::INFINITY, f64::min);
    let sell: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.0..=low)).collect();
    let high = sell.iter().copied().fold(0.0f64, f64::max);
    let salvage = rng.gen_range(high..=low);
    let tariff = TariffSchedule::new(buy, sell, rng.gen_range(0.0..15.0), salvage).expect("valid tariff");
    let caps: Vec<Vec<f64>> = (0..horizon).map(|_| (0..devices).map(|_| rng.gen_range(0.2..2.5)).collect()).collect();
    let utility = (0..horizon)
        .map(|_| {
            (0..devices)
                .map(|_| QuadraticUtility::new(rng.gen_range(0.05..1.5), rng.gen_range(0.01..0.6)))
                .collect()
        })
        .collect();
    ProsumerModel::new(battery, tariff, DemandBundle::new(caps, utility).expect("valid demand")).expect("valid model")
}

/// Random stochastically monotone chain with `n` levels in [0, 3].
pub fn random_chain<R: Rng + ?Sized>(rng: &mut R, n: usize, horizon: usize) -> GenerationChain {
    let mut levels: Vec<f64> = Vec::with_capacity(n);
    let mut g = rng.gen_range(0.0..0.5);
    for _ in 0..n {
        levels.push(g);
        g += rng.gen_range(0.1..1.0);
    }
    let transitions = if rng.gen_bool(0.5) {
        Transitions::Homogeneous(monotone_matrix(rng, n))
    } else {
        Transitions::PerStep((0..horizon).map(|_| monotone_matrix(rng, n)).collect())
    };
    GenerationChain::new(levels, transitions).expect("valid chain")
}

/// Instance within the structural-check size limits: T ≤ 8, grids ≤ 21 × 4 × 9,
/// actions ≤ 9 battery × 5 demand points.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> RandomInstance {
    let horizon = rng.gen_range(2..=8);
    let devices = if rng.gen_bool(0.7) { 1 } else { 2 };
    let model = random_model(rng, horizon, devices);
    let levels = rng.gen_range(2..=4);
    let chain = random_chain(rng, levels, horizon);
    let grid = StateGrid::uniform(&model, &chain, rng.gen_range(5..=21), rng.gen_range(4..=9));
    let demand_points = if devices == 1 { 5 } else { 3 };
    let actions = ActionGrid::uniform(&model.battery, devices, rng.gen_range(3..=9), demand_points);
    RandomInstance { model, chain, grid, actions }
}

/// Deterministic instance on which every successor of a gridded action lands on a grid
/// node, together with those grids.
#[derive(Debug, Clone)]
pub struct AlignedInstance {
    pub inst: DeterministicInstance,
    pub soc: Vec<f64>,
    pub peak: Vec<f64>,
    pub actions: ActionGrid,
    /// The instance's (constant) generation value is `levels[level]`.
    pub levels: Vec<f64>,
    pub level: usize,
}

/// T ≤ 3, 5 SoC × 3 generation × 3 peak states, 3 battery × 2 demand actions, lossless
/// battery and all quantities multiples of one unit.
pub fn aligned_instance<R: Rng + ?Sized>(rng: &mut R) -> AlignedInstance {
    let unit = if rng.gen_bool(0.5) { 0.5 } else { 1.0 };
    let horizon = rng.gen_range(1..=3);
    let battery = BatterySpec::new(4.0 * unit, unit, unit, 1.0, 1.0).expect("valid battery");
    let buy: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.05..0.4)).collect();
    let low = buy.iter().copied().fold(f64::INFINITY, f64::min);
    let sell: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.0..=low)).collect();
    let high = sell.iter().copied().fold(0.0f64, f64::max);
    let tariff = TariffSchedule::new(buy, sell, rng.gen_range(0.0..15.0), rng.gen_range(high..=low)).expect("tariff");
    let utility = (0..horizon)
        .map(|_| vec![QuadraticUtility::new(rng.gen_range(0.05..1.5), rng.gen_range(0.01..0.6))])
        .collect();
    let demand = DemandBundle::new(vec![vec![unit]; horizon], utility).expect("demand");
    let model = ProsumerModel::new(battery, tariff, demand).expect("model");

    let mut multiples: Vec<usize> = (0..4).collect();
    while multiples.len() > 3 {
        let k = rng.gen_range(0..multiples.len());
        multiples.remove(k);
    }
    let levels: Vec<f64> = multiples.iter().map(|&k| k as f64 * unit).collect();
    let level = rng.gen_range(0..levels.len());
    let inst = DeterministicInstance::new(
        vec![levels[level]; horizon],
        model,
        rng.gen_range(0..=4) as f64 * unit,
    )
    .expect("instance");
    AlignedInstance {
        soc: linspace(0.0, 4.0 * unit, 5),
        peak: linspace(0.0, 2.0 * unit, 3),
        actions: ActionGrid::new(vec![-unit, 0.0, unit], vec![vec![0.0, 1.0]]),
        levels,
        level,
        inst,
    }
}

/// Exhaustive maximization of the total reward over every sequence of gridded actions.
/// The total is accumulated as r₀ + (r₁ + (… + γ s_T)).
pub fn enumerate_value(inst: &DeterministicInstance, actions: &ActionGrid) -> Result<f64> {
    let x = SystemState::new(inst.initial_soc, inst.gen_path[0], 0.0);
    enumerate_from(inst, actions, &x, 0)
}

fn enumerate_from(inst: &DeterministicInstance, actions: &ActionGrid, x: &SystemState, t: usize) -> Result<f64> {
    let m = &inst.model;
    if t == m.horizon() {
        return Ok(m.tariff.terminal_reward(x.soc));
    }
    let (lo, hi) = m.battery.feasible_interval(x.soc);
    let mut best = f64::NEG_INFINITY;
    for e in actions.battery_candidates(lo, hi) {
        for d in actions.demand_candidates(m, t) {
            let out = m.reward(x, &crate::model::ControlAction::new(e, d), t)?;
            let mut next = out.next_state;
            if t + 1 < m.horizon() {
                next.gen = inst.gen_path[t + 1];
            }
            let v = out.reward + enumerate_from(inst, actions, &next, t + 1)?;
            best = best.max(v);
        }
    }
    Ok(best)
}

/// Exact expected total reward of `policy` from (`start_soc`, level `start_level`, peak 0),
/// summing over every generation path of the chain weighted by its probability.
pub fn exact_expected_reward(
    policy: &dyn Policy,
    model: &ProsumerModel,
    chain: &GenerationChain,
    start_level: usize,
    start_soc: f64,
) -> Result<f64> {
    expected_from(policy, model, chain, start_level, 0, SystemState::new(start_soc, 0.0, 0.0))
}

fn expected_from(
    policy: &dyn Policy,
    model: &ProsumerModel,
    chain: &GenerationChain,
    level: usize,
    t: usize,
    mut x: SystemState,
) -> Result<f64> {
    x.gen = chain.levels[level];
    let out = model.reward(&x, &policy.act(&x, t), t)?;
    if t + 1 == model.horizon() {
        return Ok(out.reward + model.tariff.terminal_reward(out.next_state.soc));
    }
    let mut future = 0.0;
    for (j, &p) in chain.row(level, t).iter().enumerate() {
        if p > 0.0 {
            future += p * expected_from(policy, model, chain, j, t + 1, out.next_state)?;
        }
    }
    Ok(out.reward + future)
}
