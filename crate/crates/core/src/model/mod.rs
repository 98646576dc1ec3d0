//! Physical and economic primitives of the prosumer problem.

mod battery;
mod demand;
mod tariff;

pub use battery::{terminal_reward, BatterySpec, FEASIBILITY_TOL};
pub use demand::{DemandBundle, QuadraticUtility};
pub use tariff::{peak_charge_decomposition_check, update_peak, TariffSchedule};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// MDP state x = (s, g, c).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Stored energy (kWh).
    pub soc: f64,
    /// Generation during the current step (kWh).
    pub gen: f64,
    /// Running peak of net consumption (kWh/step).
    pub peak: f64,
}

impl SystemState {
    pub fn new(soc: f64, gen: f64, peak: f64) -> Self {
        Self { soc, gen, peak }
    }
}

/// u = (e, d): signed battery power and per-device consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub battery: f64,
    pub demand: Vec<f64>,
}

impl ControlAction {
    pub fn new(battery: f64, demand: Vec<f64>) -> Self {
        Self { battery, demand }
    }

    pub fn idle(devices: usize) -> Self {
        Self { battery: 0.0, demand: vec![0.0; devices] }
    }

    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Successor state. Its generation field is copied from the current state; the caller
    /// replaces it with the next exogenous draw.
    pub next_state: SystemState,
    pub net_consumption: f64,
    pub payment: f64,
    pub utility: f64,
    pub reward: f64,
}

/// Net consumption z = 1ᵀd + e − g.
#[inline]
pub fn net_consumption(demand: &[f64], battery: f64, gen: f64) -> f64 {
    demand.iter().sum::<f64>() + battery - gen
}

/// Battery, tariff and demand bundle over a common horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsumerModel {
    pub battery: BatterySpec,
    pub tariff: TariffSchedule,
    pub demand: DemandBundle,
}

impl ProsumerModel {
    pub fn new(battery: BatterySpec, tariff: TariffSchedule, demand: DemandBundle) -> Result<Self> {
        let m = Self { battery, tariff, demand };
        m.validate()?;
        Ok(m)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = self.battery.violations();
        v.extend(self.tariff.violations());
        v.extend(self.demand.violations());
        if self.tariff.horizon() != self.demand.horizon() {
            v.push(format!(
                "tariff horizon {} differs from demand horizon {}",
                self.tariff.horizon(),
                self.demand.horizon()
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(invalid(v.join("; ")))
        }
    }

    pub fn horizon(&self) -> usize {
        self.tariff.horizon()
    }

    pub fn devices(&self) -> usize {
        self.demand.devices()
    }

    /// Upper end of the peak axis: K·max(d̄) + ē, the largest possible import.
    pub fn peak_cap(&self) -> f64 {
        self.devices() as f64 * self.demand.max_cap() + self.battery.charge_limit
    }

    /// Applies `u` at state `x` and step `t` after validating feasibility.
    pub fn reward(&self, x: &SystemState, u: &ControlAction, t: usize) -> Result<StepOutcome> {
        if t >= self.horizon() {
            return Err(invalid(format!("step {t} is beyond the horizon {}", self.horizon())));
        }
        let utility = self.demand.utility(&u.demand, t)?;
        let soc = self.battery.step_soc(x.soc, u.battery)?;
        let z = net_consumption(&u.demand, u.battery, x.gen);
        let payment = self.tariff.payment(z, x.peak, t);
        let peak = update_peak(z, x.peak).min(self.peak_cap().max(x.peak));
        Ok(StepOutcome {
            next_state: SystemState { soc, gen: x.gen, peak },
            net_consumption: z,
            payment,
            utility,
            reward: utility - payment,
        })
    }
}
