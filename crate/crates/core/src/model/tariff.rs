use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// NEM tariff with a demand charge on the horizon peak and a salvage rate for stored energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    /// Per-step retail (import) price p⁺ ($/kWh).
    pub buy: Vec<f64>,
    /// Per-step export compensation p⁻ ($/kWh).
    pub sell: Vec<f64>,
    /// Demand-charge rate p ($/kW) applied to the horizon peak.
    pub demand_charge: f64,
    /// Salvage rate γ ($/kWh) for energy left at the end of the horizon.
    pub salvage: f64,
}

impl TariffSchedule {
    pub fn new(buy: Vec<f64>, sell: Vec<f64>, demand_charge: f64, salvage: f64) -> Result<Self> {
        let t = Self { buy, sell, demand_charge, salvage };
        t.validate()?;
        Ok(t)
    }

    /// Flat prices over `horizon` steps; salvage defaults to the midpoint of buy and sell.
    pub fn flat(horizon: usize, buy: f64, sell: f64, demand_charge: f64) -> Result<Self> {
        Self::new(vec![buy; horizon], vec![sell; horizon], demand_charge, 0.5 * (buy + sell))
    }

    /// Midpoint of the first step's buy and sell prices.
    pub fn default_salvage(buy: &[f64], sell: &[f64]) -> f64 {
        match (buy.first(), sell.first()) {
            (Some(b), Some(s)) => 0.5 * (b + s),
            _ => 0.0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.buy.len()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.buy.is_empty() {
            out.push("tariff horizon must be at least one step".to_string());
        }
        if self.buy.len() != self.sell.len() {
            out.push(format!(
                "buy and sell price arrays differ in length ({} vs {})",
                self.buy.len(),
                self.sell.len()
            ));
        }
        for (t, (&b, &s)) in self.buy.iter().zip(&self.sell).enumerate() {
            if !(b.is_finite() && s.is_finite()) {
                out.push(format!("step {t}: prices must be finite"));
                continue;
            }
            if s < 0.0 {
                out.push(format!("step {t}: sell price {s} must be >= 0"));
            }
            if b < s {
                out.push(format!("step {t}: buy price {b} must be >= sell price {s}"));
            }
            if self.salvage > b || self.salvage < s {
                out.push(format!(
                    "step {t}: salvage rate {} must lie in [sell, buy] = [{s}, {b}]",
                    self.salvage
                ));
            }
        }
        if !(self.demand_charge.is_finite() && self.demand_charge >= 0.0) {
            out.push(format!("demand charge must be >= 0 (got {})", self.demand_charge));
        }
        if !self.salvage.is_finite() {
            out.push("salvage rate must be finite".to_string());
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

    /// Energy part of the bill: p⁺[z]⁺ − p⁻[z]⁻.
    #[inline]
    pub fn energy_cost(&self, z: f64, t: usize) -> f64 {
        if z >= 0.0 {
            self.buy[t] * z
        } else {
            self.sell[t] * z
        }
    }

    /// Per-step payment p⁺[z]⁺ − p⁻[z]⁻ + p[z − c]⁺.
    #[inline]
    pub fn payment(&self, z: f64, c: f64, t: usize) -> f64 {
        self.energy_cost(z, t) + self.demand_charge * (z - c).max(0.0)
    }

    #[inline]
    pub fn terminal_reward(&self, s_final: f64) -> f64 {
        super::battery::terminal_reward(s_final, self.salvage)
    }
}

/// Running peak update c' = max(z, c).
#[inline]
pub fn update_peak(z: f64, c: f64) -> f64 {
    z.max(c)
}

/// Checks that the demand charge on the final peak equals the sum of per-step increments,
/// starting from a zero peak.
pub fn peak_charge_decomposition_check(net: &[f64], demand_charge: f64) -> bool {
    let mut c = 0.0f64;
    let mut increments = 0.0;
    for &z in net {
        increments += (z - c).max(0.0);
        c = update_peak(z, c);
    }
    let peak = net.iter().copied().fold(0.0f64, f64::max);
    (demand_charge * peak - demand_charge * increments).abs() <= 1e-9
}
