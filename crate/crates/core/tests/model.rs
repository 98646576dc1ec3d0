use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use nemflex::model::{
    net_consumption, peak_charge_decomposition_check, update_peak, BatterySpec, ControlAction, DemandBundle,
    ProsumerModel, QuadraticUtility, SystemState, TariffSchedule,
};
use nemflex::{Bound, Error};

fn battery() -> BatterySpec {
    BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap()
}

fn tariff(horizon: usize) -> TariffSchedule {
    TariffSchedule::new(vec![0.12; horizon], vec![0.06; horizon], 10.0, 0.09).unwrap()
}

fn one_device(horizon: usize, cap: f64, alpha: f64, beta: f64) -> DemandBundle {
    DemandBundle::stationary(horizon, &[cap], &[QuadraticUtility::new(alpha, beta)]).unwrap()
}

#[test]
fn step_soc_examples() {
    let b = battery();
    assert_abs_diff_eq!(b.step_soc(2.0, 1.0).unwrap(), 2.0 + 0.95 * 1.0, epsilon = 1e-15);
    assert_eq!(b.step_soc(2.0, 0.0).unwrap(), 2.0);
    assert_abs_diff_eq!(b.step_soc(2.0, -0.95).unwrap(), 1.0, epsilon = 1e-15);
}

#[test]
fn step_soc_names_violated_bound() {
    let b = battery();
    let bound = |r: nemflex::Result<f64>| match r {
        Err(Error::Infeasible { bound, .. }) => bound,
        other => panic!("expected infeasible, got {other:?}"),
    };
    assert_eq!(bound(b.step_soc(2.0, 1.5)), Bound::ChargeLimit);
    assert_eq!(bound(b.step_soc(2.0, -1.5)), Bound::DischargeLimit);
    assert_eq!(bound(b.step_soc(4.9, 1.0)), Bound::SocUpper);
    assert_eq!(bound(b.step_soc(0.1, -1.0)), Bound::SocLower);
}

#[test]
fn net_consumption_examples() {
    assert_abs_diff_eq!(net_consumption(&[1.5], 0.5, 1.0), 1.0, epsilon = 1e-15);
    assert_eq!(net_consumption(&[0.0], 0.0, 0.0), 0.0);
    assert_abs_diff_eq!(net_consumption(&[0.5, 0.5], -1.0, 0.5), -0.5, epsilon = 1e-15);
}

#[test]
fn update_peak_examples() {
    assert_eq!(update_peak(2.0, 1.0), 2.0);
    assert_eq!(update_peak(-1.0, 0.0), 0.0);
    assert_eq!(update_peak(1.0, 1.0), 1.0);
}

#[test]
fn payment_examples() {
    let tr = tariff(1);
    assert_abs_diff_eq!(tr.payment(2.0, 1.0, 0), 0.12 * 2.0 + 10.0 * 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(tr.payment(2.0, 1.0, 0), 10.24, epsilon = 1e-12);
    for c in [0.0, 0.7, 3.0] {
        assert_eq!(tr.payment(0.0, c, 0), 0.0);
    }
    assert_abs_diff_eq!(tr.payment(-1.0, 0.5, 0), -0.06, epsilon = 1e-15);
}

#[test]
fn utility_examples() {
    let u = QuadraticUtility::new(0.24, 0.12);
    let bundle = one_device(1, 5.0, 0.24, 0.12);
    assert_eq!(bundle.utility(&[0.0], 0).unwrap(), 0.0);
    assert_abs_diff_eq!(bundle.utility(&[1.0], 0).unwrap(), 0.24 - 0.06, epsilon = 1e-15);
    let vertex = 0.24 / 0.12;
    assert_abs_diff_eq!(u.value(vertex), 0.24 * 0.24 / (2.0 * 0.12), epsilon = 1e-15);
    assert_abs_diff_eq!(u.marginal(vertex), 0.0, epsilon = 1e-15);
}

#[test]
fn utility_rejects_out_of_range_demand() {
    let bundle = one_device(1, 1.0, 0.24, 0.12);
    assert!(bundle.utility(&[1.5], 0).is_err());
    assert!(bundle.utility(&[-0.1], 0).is_err());
}

#[test]
fn reward_example() {
    let model = ProsumerModel::new(battery(), tariff(1), one_device(1, 2.0, 0.4, 0.1)).unwrap();
    let x = SystemState::new(2.0, 1.0, 0.0);
    let out = model.reward(&x, &ControlAction::new(0.5, vec![1.5]), 0).unwrap();
    let u = 0.4 * 1.5 - 0.5 * 0.1 * 1.5 * 1.5;
    let p = 0.12 * 1.0 + 10.0 * 1.0;
    assert_abs_diff_eq!(out.net_consumption, 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(out.utility, u, epsilon = 1e-15);
    assert_abs_diff_eq!(out.utility, 0.4875, epsilon = 1e-12);
    assert_abs_diff_eq!(out.payment, p, epsilon = 1e-15);
    assert_abs_diff_eq!(out.payment, 10.12, epsilon = 1e-12);
    assert_abs_diff_eq!(out.reward, -9.6325, epsilon = 1e-12);
    assert_eq!(out.reward, out.utility - out.payment);
    assert_abs_diff_eq!(out.next_state.soc, 2.0 + 0.95 * 0.5, epsilon = 1e-15);
    assert_eq!(out.next_state.peak, 1.0);
    assert_eq!(out.next_state.gen, x.gen);
}

#[test]
fn zero_action_reward() {
    let model = ProsumerModel::new(battery(), tariff(1), one_device(1, 2.0, 0.4, 0.1)).unwrap();
    let x = SystemState::new(3.0, 0.0, 0.0);
    let out = model.reward(&x, &ControlAction::idle(1), 0).unwrap();
    assert_eq!(out.reward, 0.0);
    assert_eq!(out.next_state, x);
}

#[test]
fn terminal_reward_examples() {
    let tr = tariff(1);
    assert_eq!(tr.terminal_reward(0.0), 0.0);
    assert_abs_diff_eq!(tr.terminal_reward(5.0), 0.45, epsilon = 1e-15);
    let at_sell = TariffSchedule::new(vec![0.12], vec![0.06], 10.0, 0.06).unwrap();
    assert_abs_diff_eq!(at_sell.terminal_reward(5.0), 0.06 * 5.0, epsilon = 1e-15);
}

#[test]
fn feasible_interval_examples() {
    let b = battery();
    let (lo, hi) = b.feasible_interval(0.0);
    assert_eq!(lo, 0.0);
    assert_eq!(hi, 1.0f64.min(5.0 / 0.95));
    let (lo, hi) = b.feasible_interval(5.0);
    assert_eq!(lo, (-1.0f64).max(-0.95 * 5.0));
    assert_eq!(hi, 0.0);
    assert_eq!(b.feasible_interval(2.0), (-1.0, 1.0));

    let small = BatterySpec::new(2.0, 3.0, 3.0, 0.8, 0.9).unwrap();
    let (lo, hi) = small.feasible_interval(1.0);
    assert_abs_diff_eq!(lo, -0.9, epsilon = 1e-15);
    assert_abs_diff_eq!(hi, 1.0 / 0.8, epsilon = 1e-15);
}

#[test]
fn decomposition_examples() {
    assert!(peak_charge_decomposition_check(&[1.0, 2.0, 1.0], 10.0));
    assert!(peak_charge_decomposition_check(&[-1.0, -2.0], 10.0));
    assert!(peak_charge_decomposition_check(&[2.0, 2.0], 10.0));
}

#[test]
fn tariff_rejects_inverted_prices() {
    assert!(TariffSchedule::new(vec![0.05], vec![0.06], 10.0, 0.055).is_err());
    assert!(TariffSchedule::new(vec![0.12], vec![0.06], 10.0, 0.2).is_err());
    assert!(TariffSchedule::new(vec![0.12], vec![0.06], -1.0, 0.09).is_err());
}

#[test]
fn battery_rejects_bad_parameters() {
    assert!(BatterySpec::new(0.0, 1.0, 1.0, 0.9, 0.9).is_err());
    assert!(BatterySpec::new(5.0, -1.0, 1.0, 0.9, 0.9).is_err());
    assert!(BatterySpec::new(5.0, 1.0, 1.0, 1.1, 0.9).is_err());
    assert!(BatterySpec::new(5.0, 1.0, 1.0, 0.9, 0.0).is_err());
}

fn battery_strategy() -> impl Strategy<Value = BatterySpec> {
    (0.5f64..10.0, 0.0f64..3.0, 0.0f64..3.0, 0.0f64..=1.0, 0.05f64..=1.0)
        .prop_map(|(b, ch, dis, tau, rho)| BatterySpec::new(b, ch, dis, tau, rho).unwrap())
}

fn prices() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0f64..0.5, 0.0f64..1.0, 0.0f64..20.0).prop_map(|(sell, extra, p)| (sell + extra, sell, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn soc_closure(b in battery_strategy(), fs in 0.0f64..=1.0, fe in 0.0f64..=1.0) {
        let s = fs * b.capacity;
        let (lo, hi) = b.feasible_interval(s);
        prop_assert!(lo <= 0.0 && 0.0 <= hi);
        let e = lo + fe * (hi - lo);
        let next = b.step_soc(s, e).unwrap();
        prop_assert!((0.0..=b.capacity).contains(&next));
        for edge in [lo, hi] {
            let next = b.step_soc(s, edge).unwrap();
            prop_assert!((0.0..=b.capacity).contains(&next));
        }
    }

    #[test]
    fn payment_convex_in_z((buy, sell, p) in prices(), z1 in -5.0f64..5.0, z2 in -5.0f64..5.0, c in 0.0f64..4.0) {
        let tr = TariffSchedule::new(vec![buy], vec![sell], p, sell).unwrap();
        let mid = tr.payment(0.5 * (z1 + z2), c, 0);
        prop_assert!(mid <= 0.5 * (tr.payment(z1, c, 0) + tr.payment(z2, c, 0)) + 1e-12);
    }

    #[test]
    fn payment_non_increasing_in_peak((buy, sell, p) in prices(), z in -5.0f64..5.0, c in 0.0f64..4.0, dc in 0.0f64..2.0) {
        let tr = TariffSchedule::new(vec![buy], vec![sell], p, sell).unwrap();
        prop_assert!(tr.payment(z, c + dc, 0) <= tr.payment(z, c, 0));
    }

    #[test]
    fn utility_midpoint_concave(alpha in 0.0f64..2.0, beta in 0.01f64..1.0, f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0) {
        let bundle = one_device(1, 3.0, alpha, beta);
        let (d1, d2) = (3.0 * f1, 3.0 * f2);
        let mid = bundle.utility(&[0.5 * (d1 + d2)], 0).unwrap();
        let avg = 0.5 * (bundle.utility(&[d1], 0).unwrap() + bundle.utility(&[d2], 0).unwrap());
        prop_assert!(mid + 1e-12 >= avg);
    }

    #[test]
    fn zero_prices_pay_nothing(z in -5.0f64..5.0, c in 0.0f64..4.0, d in 0.0f64..=2.0, fe in 0.0f64..=1.0, g in 0.0f64..3.0) {
        let tr = TariffSchedule::new(vec![0.0], vec![0.0], 0.0, 0.0).unwrap();
        prop_assert_eq!(tr.payment(z, c, 0), 0.0);
        let model = ProsumerModel::new(battery(), tr, one_device(1, 2.0, 0.4, 0.1)).unwrap();
        let x = SystemState::new(2.5, g, c);
        let (lo, hi) = model.battery.feasible_interval(x.soc);
        let out = model.reward(&x, &ControlAction::new(lo + fe * (hi - lo), vec![d]), 0).unwrap();
        prop_assert_eq!(out.reward, out.utility);
    }

    #[test]
    fn decomposition_identity(net in prop::collection::vec(-5.0f64..5.0, 1..48), p in 0.0f64..20.0) {
        prop_assert!(peak_charge_decomposition_check(&net, p));
        // Independent form: telescoping sum of the running-max increments.
        let mut running = 0.0f64;
        let mut sum = 0.0;
        for &z in &net {
            let next = running.max(z);
            sum += next - running;
            running = next;
        }
        let peak = net.iter().copied().fold(0.0f64, f64::max);
        prop_assert!((p * peak - p * sum).abs() <= 1e-9);
    }
}
