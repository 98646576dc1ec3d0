use serde::{Deserialize, Serialize};

use crate::error::{invalid, Bound, Error, Result};

/// Slack allowed when validating an action against a physical limit.
/// Results are clamped afterwards so the returned state is always in range.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Battery parameters. One step is one hour, so kW and kWh/step coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    /// Usable capacity B (kWh).
    pub capacity: f64,
    /// Maximum charging power ē (kW).
    pub charge_limit: f64,
    /// Maximum discharging power e̲ (kW).
    pub discharge_limit: f64,
    /// Charging efficiency τ in [0, 1].
    pub charge_eff: f64,
    /// Discharging efficiency ρ in (0, 1].
    pub discharge_eff: f64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        Self {
            capacity: 5.0,
            charge_limit: 1.0,
            discharge_limit: 1.0,
            charge_eff: 0.95,
            discharge_eff: 0.95,
        }
    }
}

impl BatterySpec {
    pub fn new(
        capacity: f64,
        charge_limit: f64,
        discharge_limit: f64,
        charge_eff: f64,
        discharge_eff: f64,
    ) -> Result<Self> {
        let spec = Self { capacity, charge_limit, discharge_limit, charge_eff, discharge_eff };
        spec.validate()?;
        Ok(spec)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            out.push(format!("battery capacity must be > 0 (got {})", self.capacity));
        }
        if !(self.charge_limit.is_finite() && self.charge_limit >= 0.0) {
            out.push(format!("charge limit must be >= 0 (got {})", self.charge_limit));
        }
        if !(self.discharge_limit.is_finite() && self.discharge_limit >= 0.0) {
            out.push(format!("discharge limit must be >= 0 (got {})", self.discharge_limit));
        }
        if !(0.0..=1.0).contains(&self.charge_eff) {
            out.push(format!("charge efficiency must lie in [0, 1] (got {})", self.charge_eff));
        }
        if !(self.discharge_eff > 0.0 && self.discharge_eff <= 1.0) {
            out.push(format!(
                "discharge efficiency must lie in (0, 1] (got {})",
                self.discharge_eff
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(invalid(v.join("; ")))
        }
    }

    /// Change in stored energy caused by battery power `e`.
    #[inline]
    pub fn soc_delta(&self, e: f64) -> f64 {
        if e >= 0.0 {
            self.charge_eff * e
        } else {
            e / self.discharge_eff
        }
    }

    /// Battery power that changes the stored energy by `delta`.
    /// With zero charging efficiency any positive delta is unreachable and maps to +inf.
    #[inline]
    pub fn power_for_delta(&self, delta: f64) -> f64 {
        if delta >= 0.0 {
            if self.charge_eff > 0.0 {
                delta / self.charge_eff
            } else if delta == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            delta * self.discharge_eff
        }
    }

    /// SoC after applying `e`, clamped to [0, B] without feasibility checks.
    #[inline]
    pub fn soc_after(&self, s: f64, e: f64) -> f64 {
        (s + self.soc_delta(e)).clamp(0.0, self.capacity)
    }

    /// Efficiency-aware interval of battery actions that keep the SoC in [0, B].
    pub fn feasible_interval(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, self.capacity);
        let lo = (-self.discharge_limit).max(-self.discharge_eff * s);
        let hi = if self.charge_eff > 0.0 {
            self.charge_limit.min((self.capacity - s) / self.charge_eff)
        } else {
            self.charge_limit
        };
        (lo.min(0.0), hi.max(0.0))
    }

    /// Checked SoC update.
    pub fn step_soc(&self, s: f64, e: f64) -> Result<f64> {
        if !e.is_finite() {
            return Err(Error::Input(format!("battery action is not finite: {e}")));
        }
        if e > self.charge_limit + FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                bound: Bound::ChargeLimit,
                detail: format!("e = {e} > {}", self.charge_limit),
            });
        }
        if e < -self.discharge_limit - FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                bound: Bound::DischargeLimit,
                detail: format!("e = {e} < -{}", self.discharge_limit),
            });
        }
        let raw = s + self.soc_delta(e);
        if raw > self.capacity + FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                bound: Bound::SocUpper,
                detail: format!("s + tau*e = {raw} > B = {}", self.capacity),
            });
        }
        if raw < -FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                bound: Bound::SocLower,
                detail: format!("s + e/rho = {raw} < 0"),
            });
        }
        Ok(raw.clamp(0.0, self.capacity))
    }
}

/// Terminal value of leftover energy.
#[inline]
pub fn terminal_reward(s_final: f64, salvage: f64) -> f64 {
    salvage * s_final
}
