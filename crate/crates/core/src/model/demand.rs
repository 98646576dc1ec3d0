use serde::{Deserialize, Serialize};

use crate::error::{invalid, Bound, Error, Result};

use super::battery::FEASIBILITY_TOL;

/// Concave quadratic utility αd − ½βd².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticUtility {
    pub alpha: f64,
    pub beta: f64,
}

impl QuadraticUtility {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    #[inline]
    pub fn value(&self, d: f64) -> f64 {
        self.alpha * d - 0.5 * self.beta * d * d
    }

    #[inline]
    pub fn marginal(&self, d: f64) -> f64 {
        self.alpha - self.beta * d
    }

    /// Consumption that equates marginal utility with `price`, clipped to [0, cap].
    #[inline]
    pub fn demand_at_price(&self, price: f64, cap: f64) -> f64 {
        ((self.alpha - price) / self.beta).clamp(0.0, cap)
    }
}

/// K flexible devices with per-step caps and quadratic utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandBundle {
    /// `caps[t][i]`: upper limit d̄ of device i at step t (kWh/step).
    pub caps: Vec<Vec<f64>>,
    /// `utility[t][i]`: utility parameters of device i at step t.
    pub utility: Vec<Vec<QuadraticUtility>>,
}

impl DemandBundle {
    pub fn new(caps: Vec<Vec<f64>>, utility: Vec<Vec<QuadraticUtility>>) -> Result<Self> {
        let b = Self { caps, utility };
        b.validate()?;
        Ok(b)
    }

    /// Same caps and utilities at every step.
    pub fn stationary(horizon: usize, caps: &[f64], utility: &[QuadraticUtility]) -> Result<Self> {
        Self::new(vec![caps.to_vec(); horizon], vec![utility.to_vec(); horizon])
    }

    pub fn horizon(&self) -> usize {
        self.caps.len()
    }

    pub fn devices(&self) -> usize {
        self.caps.first().map_or(0, Vec::len)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let k = self.devices();
        if self.caps.is_empty() {
            out.push("demand bundle horizon must be at least one step".to_string());
        }
        if k == 0 {
            out.push("demand bundle needs at least one device".to_string());
        }
        if self.utility.len() != self.caps.len() {
            out.push(format!(
                "demand caps cover {} steps but utilities cover {}",
                self.caps.len(),
                self.utility.len()
            ));
        }
        for (t, row) in self.caps.iter().enumerate() {
            if row.len() != k {
                out.push(format!("step {t}: expected {k} device caps, got {}", row.len()));
            }
            for (i, &c) in row.iter().enumerate() {
                if !(c.is_finite() && c >= 0.0) {
                    out.push(format!("step {t} device {i}: cap must be >= 0 (got {c})"));
                }
            }
        }
        for (t, row) in self.utility.iter().enumerate() {
            if row.len() != k {
                out.push(format!("step {t}: expected {k} device utilities, got {}", row.len()));
            }
            for (i, u) in row.iter().enumerate() {
                if !u.alpha.is_finite() {
                    out.push(format!("step {t} device {i}: alpha must be finite"));
                }
                if !(u.beta.is_finite() && u.beta > 0.0) {
                    out.push(format!("step {t} device {i}: beta must be > 0 (got {})", u.beta));
                }
            }
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

    #[inline]
    pub fn total_cap(&self, t: usize) -> f64 {
        self.caps[t].iter().sum()
    }

    /// Largest single-device cap over all steps.
    pub fn max_cap(&self) -> f64 {
        self.caps.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Checks `d` against the caps at step `t`.
    pub fn check(&self, d: &[f64], t: usize) -> Result<()> {
        if d.len() != self.devices() {
            return Err(Error::Input(format!(
                "demand vector has {} entries, bundle has {} devices",
                d.len(),
                self.devices()
            )));
        }
        for (i, (&x, &cap)) in d.iter().zip(&self.caps[t]).enumerate() {
            if !x.is_finite() {
                return Err(Error::Input(format!("device {i}: demand is not finite")));
            }
            if x < -FEASIBILITY_TOL {
                return Err(Error::Infeasible {
                    bound: Bound::DemandFloor,
                    detail: format!("device {i} at step {t}: d = {x}"),
                });
            }
            if x > cap + FEASIBILITY_TOL {
                return Err(Error::Infeasible {
                    bound: Bound::DemandCap,
                    detail: format!("device {i} at step {t}: d = {x} > {cap}"),
                });
            }
        }
        Ok(())
    }

    /// Σᵢ (αᵢ dᵢ − ½ βᵢ dᵢ²) after checking the demand box.
    pub fn utility(&self, d: &[f64], t: usize) -> Result<f64> {
        self.check(d, t)?;
        Ok(self.utility_unchecked(d, t))
    }

    #[inline]
    pub fn utility_unchecked(&self, d: &[f64], t: usize) -> f64 {
        d.iter().zip(&self.utility[t]).map(|(&x, u)| u.value(x)).sum()
    }

    /// Total consumption when every device faces marginal price `price`.
    pub fn demand_at_price(&self, t: usize, price: f64) -> f64 {
        self.utility[t]
            .iter()
            .zip(&self.caps[t])
            .map(|(u, &cap)| u.demand_at_price(price, cap))
            .sum()
    }

    /// Utility-maximizing split of a total consumption `total` across devices.
    ///
    /// All interior devices share one marginal utility λ; the split is found exactly by
    /// locating λ between consecutive kinks of the piecewise-linear map λ ↦ Σ dᵢ(λ).
    pub fn allocate(&self, t: usize, total: f64) -> Vec<f64> {
        let caps = &self.caps[t];
        let utils = &self.utility[t];
        let cap_sum: f64 = caps.iter().sum();
        if total <= 0.0 {
            return vec![0.0; caps.len()];
        }
        if total >= cap_sum {
            return caps.clone();
        }
        if caps.len() == 1 {
            return vec![total];
        }
        let mut kinks: Vec<f64> = utils
            .iter()
            .zip(caps)
            .flat_map(|(u, &cap)| [u.alpha, u.alpha - u.beta * cap])
            .collect();
        kinks.sort_by(|a, b| b.total_cmp(a));
        kinks.dedup();
        // kinks descend; demand ascends along the list.
        let mut lambda = kinks[kinks.len() - 1];
        let mut prev = (kinks[0], self.demand_at_price(t, kinks[0]));
        for &k in &kinks[1..] {
            let dk = self.demand_at_price(t, k);
            if dk >= total {
                let (lp, dp) = prev;
                lambda = if dk > dp { lp + (total - dp) * (k - lp) / (dk - dp) } else { k };
                break;
            }
            prev = (k, dk);
        }
        let mut d: Vec<f64> =
            utils.iter().zip(caps).map(|(u, &cap)| u.demand_at_price(lambda, cap)).collect();
        // Push the rounding residue onto a device with room to absorb it.
        let residue = total - d.iter().sum::<f64>();
        if residue != 0.0 {
            if let Some(i) = (0..d.len())
                .find(|&i| d[i] + residue >= 0.0 && d[i] + residue <= caps[i] && d[i] > 0.0)
            {
                d[i] += residue;
            }
        }
        d
    }

    /// Best achievable utility from a total consumption `total` at step `t`.
    pub fn aggregate_utility(&self, t: usize, total: f64) -> f64 {
        if self.devices() == 1 {
            return self.utility[t][0].value(total);
        }
        let d = self.allocate(t, total);
        self.utility_unchecked(&d, t)
    }
}
