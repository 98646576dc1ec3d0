use approx::assert_abs_diff_eq;

use nemflex::model::peak_charge_decomposition_check;
use nemflex::policies::{BackupPolicy, MyopicPolicy, Policy, PolicyKind, ThresholdPolicy};
use nemflex::sim::{
    build_scenarios, default_cases, run_comparison, surplus_gain_pct, synthetic_data, trace, CompareOptions, GridSpec,
    Scenario, ScenarioCase, ScenarioSettings, TRAJECTORY_COLUMNS,
};
use nemflex::dp::ActionSearch;

fn scenarios(cases: &[ScenarioCase]) -> Vec<Scenario> {
    let data = synthetic_data(60, 3.0, 1.2, 0.3, 7);
    build_scenarios(&data, &ScenarioSettings::default(), cases).unwrap()
}

fn coarse() -> CompareOptions {
    CompareOptions {
        n_rollouts: 8,
        seed: 5,
        grid: GridSpec { soc_step: 1.0, peak_step: 1.0, battery_points: 5, demand_points: 3 },
        ..CompareOptions::default()
    }
}

#[test]
fn default_cases_give_seven_scenarios() {
    let sc = scenarios(&default_cases());
    assert_eq!(sc.len(), 7);
    let caps: Vec<f64> = sc.iter().map(|s| s.model.battery.capacity).collect();
    assert!(caps.contains(&3.0) && caps.contains(&7.0));
    let limits: Vec<f64> = sc.iter().map(|s| s.model.battery.charge_limit).collect();
    assert!(limits.contains(&0.5) && limits.contains(&2.0));
    for s in &sc {
        s.validate().unwrap();
        assert_eq!(s.horizon(), 24);
        let tr = &s.model.tariff;
        assert!(tr.buy.iter().all(|&p| p == 0.12));
        assert!(tr.sell.iter().all(|&p| p == 0.06));
        assert_eq!(tr.demand_charge, 10.0);
        assert_abs_diff_eq!(tr.salvage, 0.09, epsilon = 1e-15);
    }
}

#[test]
fn scenarios_need_enough_days() {
    let data = synthetic_data(2, 3.0, 1.2, 0.3, 7);
    assert!(build_scenarios(&data, &ScenarioSettings::default(), &default_cases()).is_err());
    let data = synthetic_data(30, 3.0, 1.2, 0.3, 7);
    let bad = [ScenarioCase::new(0.0, 50.0, 5.0, 1.0)];
    assert!(build_scenarios(&data, &ScenarioSettings::default(), &bad).is_err());
}

#[test]
fn demand_calibration_puts_myopic_optimum_at_cap() {
    let sc = scenarios(&default_cases()[..1]);
    let m = &sc[0].model;
    let eps = ScenarioSettings::default().elasticity;
    for t in 0..24 {
        let u = m.demand.utility[t][0];
        let cap = m.demand.caps[t][0];
        // Marginal utility equals the buy price at the cap, with elasticity (dd/dp)(p/d) = ε there.
        assert_abs_diff_eq!(u.marginal(cap), 0.12, epsilon = 1e-12);
        if cap > 1e-3 {
            assert_abs_diff_eq!(-1.0 / u.beta * 0.12 / cap, eps, epsilon = 1e-9);
        }
    }
}

#[test]
fn gain_formula() {
    assert_abs_diff_eq!(surplus_gain_pct(11.9, 10.4), 100.0 * 1.5 / 10.4, epsilon = 1e-12);
    assert_abs_diff_eq!(surplus_gain_pct(11.9, 10.4), 14.4, epsilon = 0.05);
    assert_eq!(surplus_gain_pct(10.4, 10.4), 0.0);
    assert!(surplus_gain_pct(-2.0, -4.0) > 0.0);
}

#[test]
fn backup_only_report_has_zero_gain() {
    let sc = scenarios(&default_cases()[..2]);
    let report = run_comparison(&sc, &[PolicyKind::Backup], &coarse()).unwrap();
    let backup: Vec<_> = report.rows.iter().filter(|r| r.policy == "backup").collect();
    assert_eq!(backup.len(), 2);
    assert!(backup.iter().all(|r| r.gain_pct == Some(0.0)));
    assert!(report.rows.iter().all(|r| r.oracle_gap_pct >= 0.0));
}

#[test]
fn comparison_is_reproducible() {
    let sc = scenarios(&default_cases()[..1]);
    let kinds = [PolicyKind::Backup, PolicyKind::Threshold, PolicyKind::Myopic, PolicyKind::Dp];
    let a = run_comparison(&sc, &kinds, &coarse()).unwrap();
    let b = run_comparison(&sc, &kinds, &coarse()).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca, &[]).unwrap();
    b.write_csv(&mut cb, &[]).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(a, b);
    let dp = a.row(&sc[0].label, "dp").unwrap();
    let oracle = a.row(&sc[0].label, "oracle").unwrap();
    assert!(oracle.mean >= dp.mean - 1e-9);
    assert_eq!(a.rows.len(), kinds.len() + 1);
}

fn policies(s: &Scenario, actions: &nemflex::dp::ActionGrid) -> Vec<Box<dyn Policy + 'static>> {
    let m: &'static _ = Box::leak(Box::new(s.model.clone()));
    let a: &'static _ = Box::leak(Box::new(actions.clone()));
    vec![
        Box::new(BackupPolicy { model: m }),
        Box::new(ThresholdPolicy { model: m, strict_paper: false }),
        Box::new(MyopicPolicy { model: m, actions: a, search: ActionSearch::Refined }),
    ]
}

#[test]
fn trace_identities() {
    let sc = scenarios(&default_cases()[..3]);
    for s in &sc {
        let actions = coarse().grid.action_grid(s);
        for p in policies(s, &actions) {
            for seed in 0..4 {
                let tr = trace(p.as_ref(), s, seed).unwrap();
                let b = s.model.battery.capacity;
                assert!(tr.soc_path().iter().all(|v| (0.0..=b).contains(v)));
                let mut running = 0.0f64;
                let mut increments = 0.0;
                for (st, next) in tr.steps.iter().zip(tr.peak_path().iter().skip(1)) {
                    assert_eq!(st.state.peak, running);
                    increments += (st.net_consumption - running).max(0.0);
                    running = running.max(st.net_consumption);
                    assert_eq!(*next, running);
                }
                assert!((running - increments).abs() <= 1e-9);
                let z: Vec<f64> = tr.steps.iter().map(|s| s.net_consumption).collect();
                assert!(peak_charge_decomposition_check(&z, s.model.tariff.demand_charge));
                let (mut u, mut pay) = (0.0, 0.0);
                for st in &tr.steps {
                    u += st.utility;
                    pay += st.payment;
                    assert_eq!(st.reward, st.utility - st.payment);
                }
                assert_eq!(tr.total_reward, u - pay + tr.salvage);
                assert_eq!(tr.salvage, s.model.tariff.terminal_reward(tr.final_state.soc));
                if p.name() == "backup" {
                    assert!(tr.soc_path().windows(2).all(|w| w[1] >= w[0]));
                }
                assert_eq!(tr, trace(p.as_ref(), s, seed).unwrap());
            }
        }
    }
}

#[test]
fn trace_csv_columns() {
    let sc = scenarios(&default_cases()[..1]);
    let tr = trace(&BackupPolicy { model: &sc[0].model }, &sc[0], 3).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf, &["seed=3".to_string()]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# seed=3"));
    assert_eq!(lines.next().unwrap(), TRAJECTORY_COLUMNS.join(","));
    assert_eq!(lines.count(), 24);
}
