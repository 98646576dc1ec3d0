use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nemflex::dp::{solve, ActionGrid, ActionSearch, SolveOptions, StateGrid};
use nemflex::generation::GenerationChain;
use nemflex::model::{BatterySpec, DemandBundle, ProsumerModel, QuadraticUtility, SystemState, TariffSchedule};
use nemflex::policies::{
    backup_act, myopic_act, myopic_demand, threshold_act, BackupPolicy, DpPolicy, MyopicPolicy, Policy, PolicyKind,
    ThresholdPolicy,
};
use nemflex::sim::simulate;
use nemflex::testkit::{exact_expected_reward, random_instance, random_model};

fn model(horizon: usize, buy: f64, sell: f64, p: f64, gamma: f64, caps: &[f64], utility: &[QuadraticUtility]) -> ProsumerModel {
    let battery = BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap();
    let tariff = TariffSchedule::new(vec![buy; horizon], vec![sell; horizon], p, gamma).unwrap();
    ProsumerModel::new(battery, tariff, DemandBundle::stationary(horizon, caps, utility).unwrap()).unwrap()
}

fn default_model() -> ProsumerModel {
    model(4, 0.12, 0.06, 10.0, 0.09, &[1.5], &[QuadraticUtility::new(0.4, 0.1)])
}

#[test]
fn backup_examples() {
    let m = default_model();
    assert_eq!(backup_act(&SystemState::new(5.0, 0.0, 0.0), 0, &m).battery, 0.0);
    assert_eq!(backup_act(&SystemState::new(0.0, 0.0, 0.0), 0, &m).battery, 1.0f64.min(5.0 / 0.95));
    // Close to full the room (B − s)/τ binds.
    let e = backup_act(&SystemState::new(4.81, 0.0, 0.0), 0, &m).battery;
    assert_abs_diff_eq!(e, 0.19 / 0.95, epsilon = 1e-12);
}

#[test]
fn threshold_examples() {
    let m = default_model();
    // Deficit Δ = 1.5 − 1.2 = 0.3 with plenty stored: e = max(−e̲, −Δ).
    let a = threshold_act(&SystemState::new(4.0, 1.2, 0.0), 0, &m, false);
    assert_abs_diff_eq!(a.battery, -0.3, epsilon = 1e-12);
    assert_eq!(a.demand, vec![1.5]);
    // Large deficit: the discharge limit binds.
    assert_eq!(threshold_act(&SystemState::new(4.0, 0.0, 0.0), 0, &m, false).battery, -1.0);
    // Little stored: −ρs binds.
    assert_abs_diff_eq!(threshold_act(&SystemState::new(0.2, 0.0, 0.0), 0, &m, false).battery, -0.95 * 0.2, epsilon = 1e-15);
    // No deficit.
    assert_eq!(threshold_act(&SystemState::new(2.0, 1.5, 0.0), 0, &m, false).battery, 0.0);
    // Large surplus into an empty battery.
    assert_eq!(threshold_act(&SystemState::new(0.0, 10.0, 0.0), 0, &m, false).battery, 1.0f64.min(5.0 / 0.95));
}

#[test]
fn strict_threshold_charges_during_deficit() {
    let m = default_model();
    let x = SystemState::new(0.5, 1.2, 0.0);
    // As printed: max(−e̲, +ρs, −Δ) = ρs, a charge.
    let strict = threshold_act(&x, 0, &m, true);
    assert_abs_diff_eq!(strict.battery, 0.95 * 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(threshold_act(&x, 0, &m, false).battery, -0.3, epsilon = 1e-12);
    // Near full the printed rule is clipped into the feasible interval.
    let full = threshold_act(&SystemState::new(4.9, 1.2, 0.0), 0, &m, true);
    assert_abs_diff_eq!(full.battery, 0.1 / 0.95, epsilon = 1e-12);
}

#[test]
fn myopic_demand_examples() {
    let utils = [QuadraticUtility::new(0.3, 0.1), QuadraticUtility::new(0.05, 0.2)];
    let m = model(1, 0.12, 0.06, 10.0, 0.09, &[2.0, 2.0], &utils);
    // Always exporting: each device solves α − βd = p⁻.
    let d = myopic_demand(&SystemState::new(2.0, 50.0, 0.0), 0, &m, 0.0);
    assert_abs_diff_eq!(d[0], ((0.3 - 0.06) / 0.1f64).clamp(0.0, 2.0), epsilon = 1e-9);
    assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-12);

    let cheap = [QuadraticUtility::new(0.05, 0.1), QuadraticUtility::new(0.06, 0.3)];
    let m = model(1, 0.12, 0.06, 10.0, 0.09, &[2.0, 2.0], &cheap);
    assert_eq!(myopic_demand(&SystemState::new(2.0, 0.0, 0.0), 0, &m, 0.0), vec![0.0, 0.0]);
}

#[test]
fn myopic_demand_matches_fine_scan() {
    // One device: U(d) − P(d + e − g, c) scanned on a fine grid.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let m = random_model(&mut rng, 1, 1);
        let x = SystemState::new(
            rng.gen_range(0.0..=m.battery.capacity),
            rng.gen_range(0.0..3.0),
            rng.gen_range(0.0..m.peak_cap()),
        );
        let (lo, hi) = m.battery.feasible_interval(x.soc);
        let e = rng.gen_range(lo..=hi);
        let cap = m.demand.caps[0][0];
        let obj = |d: f64| m.demand.utility_unchecked(&[d], 0) - m.tariff.payment(d + e - x.gen, x.peak, 0);
        let d = myopic_demand(&x, 0, &m, e);
        assert!((0.0..=cap).contains(&d[0]));
        let best = (0..=20_000).map(|k| obj(cap * k as f64 / 20_000.0)).fold(f64::NEG_INFINITY, f64::max);
        assert!(obj(d[0]) >= best - 1e-9, "{} < {best}", obj(d[0]));
    }
}

#[test]
fn myopic_never_buys_to_charge_without_salvage() {
    let m = model(2, 0.12, 0.0, 0.0, 0.0, &[1.5], &[QuadraticUtility::new(0.4, 0.1)]);
    let actions = ActionGrid::uniform(&m.battery, 1, 9, 5);
    for s in [0.0, 1.0, 2.5, 4.0] {
        for search in [ActionSearch::Grid, ActionSearch::Refined] {
            let a = myopic_act(&SystemState::new(s, 0.0, 0.0), 0, &m, &actions, search);
            assert!(a.battery <= 0.0, "soc {s}: e = {}", a.battery);
        }
    }
}

#[test]
fn myopic_matches_dp_at_last_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let inst = random_instance(&mut rng);
        let sol = solve(&inst.model, &inst.chain, &inst.grid, &inst.actions, SolveOptions::default()).unwrap();
        let t = sol.horizon() - 1;
        let (ns, ng, nc) = inst.grid.dims();
        for i_s in 0..ns {
            for i_g in 0..ng {
                for i_c in 0..nc {
                    let x = sol.grid_state(i_s, i_g, i_c);
                    let my = myopic_act(&x, t, &inst.model, &inst.actions, ActionSearch::Refined);
                    assert_eq!(&my, sol.policy.get(t, i_s, i_g, i_c));
                }
            }
        }
    }
}

#[test]
fn policy_kind_parses() {
    for k in PolicyKind::ALL {
        assert_eq!(k.as_str().parse::<PolicyKind>().unwrap(), k);
    }
    assert!("ppo".parse::<PolicyKind>().is_err());
}

#[test]
fn fuzz_policies_stay_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut draws = 0;
    while draws < 10_000 {
        let horizon = rng.gen_range(1..=6);
        let devices = rng.gen_range(1..=2);
        let m = random_model(&mut rng, horizon, devices);
        let actions = ActionGrid::uniform(&m.battery, devices, 5, 3);
        let policies: Vec<Box<dyn Policy + '_>> = vec![
            Box::new(BackupPolicy { model: &m }),
            Box::new(ThresholdPolicy { model: &m, strict_paper: false }),
            Box::new(ThresholdPolicy { model: &m, strict_paper: true }),
            Box::new(MyopicPolicy { model: &m, actions: &actions, search: ActionSearch::Refined }),
        ];
        for _ in 0..100 {
            let x = SystemState::new(
                rng.gen_range(0.0..=m.battery.capacity),
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.0..=m.peak_cap()),
            );
            let t = rng.gen_range(0..horizon);
            let p = &policies[rng.gen_range(0..policies.len())];
            let a = p.act(&x, t);
            let out = m.reward(&x, &a, t).unwrap_or_else(|e| panic!("{} infeasible: {e}", p.name()));
            assert!((0.0..=m.battery.capacity).contains(&out.next_state.soc));
            assert!(out.next_state.peak >= x.peak);
            draws += 1;
        }
    }
}

#[test]
fn backup_soc_never_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let m = random_model(&mut rng, 8, 1);
        let path: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..3.0)).collect();
        let tr = simulate(&BackupPolicy { model: &m }, &m, &path, rng.gen_range(0.0..=m.battery.capacity)).unwrap();
        assert!(tr.soc_path().windows(2).all(|w| w[1] >= w[0]));
        assert!(tr.steps.iter().all(|s| s.action.battery >= 0.0));
    }
}

#[test]
fn dp_dominates_baselines_in_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for k in 0..10 {
        let inst = random_instance(&mut rng);
        let sol = solve(&inst.model, &inst.chain, &inst.grid, &inst.actions, SolveOptions::default()).unwrap();
        let m = &inst.model;
        let policies: Vec<Box<dyn Policy + '_>> = vec![
            Box::new(DpPolicy { solution: &sol }),
            Box::new(BackupPolicy { model: m }),
            Box::new(ThresholdPolicy { model: m, strict_paper: false }),
            Box::new(MyopicPolicy { model: m, actions: &inst.actions, search: ActionSearch::Refined }),
        ];
        let s0 = 0.5 * m.battery.capacity;
        let values: Vec<f64> =
            policies.iter().map(|p| exact_expected_reward(p.as_ref(), m, &inst.chain, 0, s0).unwrap()).collect();
        for j in 1..policies.len() {
            assert!(values[0] >= values[j] - 1e-6, "instance {k}: dp {} < {} {}", values[0], policies[j].name(), values[j]);
        }
    }
}

#[test]
fn exact_expectation_matches_sampling() {
    let m = default_model();
    let chain = GenerationChain::homogeneous(vec![0.0, 1.0], vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
    let backup = BackupPolicy { model: &m };
    let exact = exact_expected_reward(&backup, &m, &chain, 0, 1.0).unwrap();
    let n = 20_000;
    let mean: f64 = (0..n)
        .map(|r| simulate(&backup, &m, &chain.values(&chain.sample_path(0, 4, r)), 1.0).unwrap().total_reward)
        .sum::<f64>()
        / n as f64;
    assert!((exact - mean).abs() < 0.05 * exact.abs().max(1.0), "{exact} vs {mean}");
}

#[test]
fn dp_policy_reproduces_table_on_grid_states() {
    let m = default_model();
    let chain = GenerationChain::uniform(vec![0.0, 1.0, 2.0]).unwrap();
    let grid = StateGrid::uniform(&m, &chain, 6, 4);
    let actions = ActionGrid::uniform(&m.battery, 1, 5, 5);
    let sol = solve(&m, &chain, &grid, &actions, SolveOptions::default()).unwrap();
    for t in 0..4 {
        for i_s in 0..6 {
            for i_c in 0..4 {
                let x = sol.grid_state(i_s, 1, i_c);
                assert_eq!(&sol.act(&x, t), sol.policy.get(t, i_s, 1, i_c));
            }
        }
    }
}
