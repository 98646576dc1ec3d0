use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nemflex::dp::{linspace, solve, ActionGrid, ActionSearch, SolveOptions, StateGrid};
use nemflex::generation::GenerationChain;
use nemflex::model::{BatterySpec, ControlAction, DemandBundle, ProsumerModel, QuadraticUtility, TariffSchedule};
use nemflex::oracle::{
    refine_continuous, solve_grid_dp, solve_perfect_foresight, upper_bound_gap, DeterministicInstance, MAX_SWEEPS,
};
use nemflex::policies::{BackupPolicy, DpPolicy, MyopicPolicy, Policy, ThresholdPolicy};
use nemflex::sim::simulate;
use nemflex::testkit::{aligned_instance, enumerate_value, random_instance};
use nemflex::Error;

#[allow(clippy::too_many_arguments)]
fn flat_model(horizon: usize, buy: f64, sell: f64, p: f64, gamma: f64, battery: BatterySpec, cap: f64, a: f64, b: f64) -> ProsumerModel {
    let tariff = TariffSchedule::new(vec![buy; horizon], vec![sell; horizon], p, gamma).unwrap();
    let demand = DemandBundle::stationary(horizon, &[cap], &[QuadraticUtility::new(a, b)]).unwrap();
    ProsumerModel::new(battery, tariff, demand).unwrap()
}

#[test]
fn grid_dp_equals_enumeration_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for k in 0..40 {
        let a = aligned_instance(&mut rng);
        let dp = solve_grid_dp(&a.inst, &a.soc, &a.peak, &a.actions, ActionSearch::Grid).unwrap();
        let brute = enumerate_value(&a.inst, &a.actions).unwrap();
        assert_eq!(dp.value, brute, "instance {k}");
    }
}

#[test]
fn identity_chain_matches_grid_dp() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for k in 0..20 {
        let a = aligned_instance(&mut rng);
        let chain = GenerationChain::identity(a.levels.clone()).unwrap();
        let grid = StateGrid::new(a.soc.clone(), a.levels.clone(), a.peak.clone());
        let opts = SolveOptions { search: ActionSearch::Grid, threads: None };
        let sol = solve(&a.inst.model, &chain, &grid, &a.actions, opts).unwrap();
        let dp = solve_grid_dp(&a.inst, &a.soc, &a.peak, &a.actions, ActionSearch::Grid).unwrap();
        let i_s = a.soc.iter().position(|&s| s == a.inst.initial_soc).unwrap();
        let v = sol.values.get(0, i_s, a.level, 0);
        assert!((v - dp.value).abs() <= 1e-9, "instance {k}: {v} vs {}", dp.value);
    }
}

#[test]
fn single_step_grid_dp_matches_calculus() {
    let m = flat_model(1, 0.12, 0.0, 0.0, 0.0, BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap(), 2.0, 0.24, 0.12);
    let inst = DeterministicInstance::new(vec![0.0], m, 0.0).unwrap();
    let actions = ActionGrid::uniform(&inst.model.battery, 1, 5, 5);
    let dp = solve_grid_dp(&inst, &linspace(0.0, 5.0, 6), &linspace(0.0, 3.0, 4), &actions, ActionSearch::Grid).unwrap();
    assert_abs_diff_eq!(dp.value, 0.24 - 0.06 - 0.12, epsilon = 1e-12);
    assert_abs_diff_eq!(dp.realized, dp.value, epsilon = 1e-12);
}

#[test]
fn energy_abundant_closed_form() {
    // g = 6 ≥ d̄ + ē: every step exports, demand sits at (α − p⁻)/β = 2 and, since γτ > p⁻,
    // the battery charges at its limit.
    let battery = BatterySpec::new(4.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let m = flat_model(3, 0.12, 0.06, 10.0, 0.09, battery, 4.0, 0.46, 0.2);
    let inst = DeterministicInstance::new(vec![6.0; 3], m, 0.0).unwrap();
    let (d, e, g) = (2.0, 1.0, 6.0);
    let step = (0.46 * d - 0.1 * d * d) + 0.06 * (g - d - e);
    let closed = 3.0 * step + 0.09 * 3.0;
    assert_abs_diff_eq!(closed, 2.37, epsilon = 1e-12);

    let actions = ActionGrid::new(vec![-1.0, 0.0, 1.0], vec![linspace(0.0, 1.0, 5)]);
    let dp = solve_grid_dp(&inst, &linspace(0.0, 4.0, 5), &linspace(0.0, 5.0, 6), &actions, ActionSearch::Grid).unwrap();
    assert_abs_diff_eq!(dp.value, closed, epsilon = 1e-12);
    assert_abs_diff_eq!(enumerate_value(&inst, &actions).unwrap(), closed, epsilon = 1e-12);
    let pf = solve_perfect_foresight(&inst).unwrap();
    assert_abs_diff_eq!(pf.value, closed, epsilon = 1e-8);
}

#[test]
fn refine_reaches_single_step_vertex() {
    let m = flat_model(1, 0.12, 0.0, 0.0, 0.0, BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap(), 3.0, 0.4, 0.1);
    let inst = DeterministicInstance::new(vec![0.0], m, 0.0).unwrap();
    let res = refine_continuous(&inst, &[ControlAction::idle(1)]).unwrap();
    assert!(res.converged);
    assert!(res.sweeps <= 5, "{} sweeps", res.sweeps);
    assert_abs_diff_eq!(res.schedule[0].demand[0], (0.4 - 0.12) / 0.1, epsilon = 1e-8);
    assert_eq!(res.schedule[0].battery, 0.0);
}

#[test]
fn refine_ascends_and_stays_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..15 {
        let ri = random_instance(&mut rng);
        let horizon = ri.model.horizon();
        let path: Vec<f64> = (0..horizon).map(|_| ri.chain.levels[rng.gen_range(0..ri.chain.n_levels())]).collect();
        let inst = DeterministicInstance::new(path, ri.model.clone(), rng.gen_range(0.0..=ri.model.battery.capacity)).unwrap();
        let soc = ri.grid.soc.clone();
        let peak = ri.grid.peak.clone();
        let gridded = solve_grid_dp(&inst, &soc, &peak, &ri.actions, ActionSearch::Grid).unwrap();
        let res = refine_continuous(&inst, &gridded.schedule).unwrap();
        assert!(res.value >= gridded.realized - 1e-9);
        assert!(res.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(res.sweeps <= MAX_SWEEPS);
        let tr = inst.evaluate(&res.schedule).unwrap();
        assert_abs_diff_eq!(tr.total_reward, res.value, epsilon = 1e-9);
        for (t, a) in res.schedule.iter().enumerate() {
            inst.model.demand.check(&a.demand, t).unwrap();
        }
        let b = inst.model.battery.capacity;
        assert!(tr.steps.iter().all(|s| (0.0..=b).contains(&s.state.soc)));
        assert!((0.0..=b).contains(&tr.final_state.soc));
    }
}

#[test]
fn upper_bound_gap_examples() {
    assert_eq!(upper_bound_gap(5.0, 5.0).unwrap(), 0.0);
    let gap = upper_bound_gap(10.4, 21.9).unwrap();
    assert_abs_diff_eq!(gap, (21.9 - 10.4) / 21.9, epsilon = 1e-15);
    assert_abs_diff_eq!(gap, 0.525, epsilon = 5e-4);
    assert!(matches!(upper_bound_gap(3.0, 2.0), Err(Error::Invariant(_))));
    for (p, o) in [(0.01, 1.0), (0.5, 2.0), (1.99, 2.0), (2.0, 2.0)] {
        assert!((0.0..1.0).contains(&upper_bound_gap(p, o).unwrap()));
    }
}

#[test]
fn oracle_dominates_causal_policies() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..6 {
        let ri = random_instance(&mut rng);
        let sol = solve(&ri.model, &ri.chain, &ri.grid, &ri.actions, SolveOptions::default()).unwrap();
        let policies: Vec<Box<dyn Policy + '_>> = vec![
            Box::new(BackupPolicy { model: &ri.model }),
            Box::new(ThresholdPolicy { model: &ri.model, strict_paper: false }),
            Box::new(MyopicPolicy { model: &ri.model, actions: &ri.actions, search: ActionSearch::Refined }),
            Box::new(DpPolicy { solution: &sol }),
        ];
        for seed in 0..5 {
            let path = ri.chain.values(&ri.chain.sample_path(0, ri.model.horizon(), seed));
            let s0 = 0.5 * ri.model.battery.capacity;
            let inst = DeterministicInstance::new(path.clone(), ri.model.clone(), s0).unwrap();
            let oracle = solve_perfect_foresight(&inst).unwrap();
            for p in &policies {
                let realized = simulate(p.as_ref(), &ri.model, &path, s0).unwrap().total_reward;
                assert!(oracle.value >= realized - 1e-9, "{}: {realized} > oracle {}", p.name(), oracle.value);
            }
        }
    }
}

#[test]
fn instance_validation() {
    let m = flat_model(2, 0.12, 0.06, 10.0, 0.09, BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap(), 1.0, 0.3, 0.1);
    assert!(DeterministicInstance::new(vec![0.0, -1.0], m.clone(), 1.0).is_err());
    assert!(DeterministicInstance::new(vec![0.0, 1.0], m.clone(), 6.0).is_err());
    assert!(DeterministicInstance::new(vec![0.0], m, 1.0).is_err());
}
