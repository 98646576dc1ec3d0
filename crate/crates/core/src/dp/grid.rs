use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::generation::GenerationChain;
use crate::model::{BatterySpec, ProsumerModel};

const GRID_TOL: f64 = 1e-12;

/// Discretized state space: SoC points, generation levels and peak points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub soc: Vec<f64>,
    pub gen: Vec<f64>,
    pub peak: Vec<f64>,
}

/// `n` evenly spaced points from `lo` to `hi` inclusive, with exact endpoints.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn strictly_ascending(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|x| x.is_finite())
}

impl StateGrid {
    pub fn new(soc: Vec<f64>, gen: Vec<f64>, peak: Vec<f64>) -> Self {
        Self { soc, gen, peak }
    }

    /// Uniform SoC and peak axes spanning [0, B] and [0, c_max]; levels taken from the chain.
    pub fn uniform(model: &ProsumerModel, chain: &GenerationChain, n_soc: usize, n_peak: usize) -> Self {
        let c_max = model.peak_cap();
        let c_top = if c_max > 0.0 { c_max } else { 1.0 };
        Self {
            soc: linspace(0.0, model.battery.capacity, n_soc),
            gen: chain.levels.clone(),
            peak: linspace(0.0, c_top, n_peak),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.soc.len(), self.gen.len(), self.peak.len())
    }

    pub fn n_states(&self) -> usize {
        self.soc.len() * self.gen.len() * self.peak.len()
    }

    /// Checks the grid against the model and chain it will be used with.
    pub fn violations(&self, model: &ProsumerModel, chain: &GenerationChain) -> Vec<String> {
        let mut out = Vec::new();
        let b = model.battery.capacity;
        if self.soc.len() < 2 || !strictly_ascending(&self.soc) {
            out.push("SoC grid needs at least 2 strictly ascending points".to_string());
        } else {
            if self.soc[0].abs() > GRID_TOL {
                out.push(format!("SoC grid must start at 0 (starts at {})", self.soc[0]));
            }
            if (self.soc[self.soc.len() - 1] - b).abs() > GRID_TOL * b.max(1.0) {
                out.push(format!(
                    "SoC grid must end at the capacity {b} (ends at {})",
                    self.soc[self.soc.len() - 1]
                ));
            }
        }
        if self.peak.len() < 2 || !strictly_ascending(&self.peak) {
            out.push("peak grid needs at least 2 strictly ascending points".to_string());
        } else {
            if self.peak[0].abs() > GRID_TOL {
                out.push(format!("peak grid must start at 0 (starts at {})", self.peak[0]));
            }
            let c_max = model.peak_cap();
            if self.peak[self.peak.len() - 1] < c_max - GRID_TOL * c_max.max(1.0) {
                out.push(format!(
                    "peak grid must reach the peak cap {c_max} (ends at {})",
                    self.peak[self.peak.len() - 1]
                ));
            }
        }
        if self.gen != chain.levels {
            out.push("generation axis must equal the chain levels".to_string());
        }
        out
    }

    pub fn validate(&self, model: &ProsumerModel, chain: &GenerationChain) -> Result<()> {
        let v = self.violations(model, chain);
        if v.is_empty() {
            Ok(())
        } else {
            Err(invalid(v.join("; ")))
        }
    }
}

/// Discretized actions. Demand points are fractions of each device's cap at the current step,
/// so one grid serves time-varying caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    /// Battery power points, ascending, containing 0.
    pub battery: Vec<f64>,
    /// Per device: ascending fractions in [0, 1] containing both endpoints.
    pub demand: Vec<Vec<f64>>,
}

impl ActionGrid {
    pub fn new(battery: Vec<f64>, demand: Vec<Vec<f64>>) -> Self {
        Self { battery, demand }
    }

    /// `n_battery` points over [−e̲, ē] with 0 included, `n_demand` even fractions per device.
    pub fn uniform(battery: &BatterySpec, devices: usize, n_battery: usize, n_demand: usize) -> Self {
        let n = n_battery.max(1);
        let (lo, hi) = (battery.discharge_limit, battery.charge_limit);
        let (n_neg, n_pos) = match (lo > 0.0, hi > 0.0) {
            (true, true) => ((n - 1) / 2, n - 1 - (n - 1) / 2),
            (true, false) => (n - 1, 0),
            (false, true) => (0, n - 1),
            (false, false) => (0, 0),
        };
        let mut pts: Vec<f64> = (0..n_neg).map(|k| -lo * (n_neg - k) as f64 / n_neg as f64).collect();
        pts.push(0.0);
        pts.extend((1..=n_pos).map(|k| if k == n_pos { hi } else { hi * k as f64 / n_pos as f64 }));
        let fractions = linspace(0.0, 1.0, n_demand.max(2));
        Self { battery: pts, demand: vec![fractions; devices] }
    }

    pub fn violations(&self, model: &ProsumerModel) -> Vec<String> {
        let mut out = Vec::new();
        let spec = &model.battery;
        if self.battery.is_empty() || !strictly_ascending(&self.battery) {
            out.push("battery action grid must be non-empty and strictly ascending".to_string());
        }
        if !self.battery.contains(&0.0) {
            out.push("battery action grid must contain 0".to_string());
        }
        if self.battery.iter().any(|&e| e < -spec.discharge_limit - GRID_TOL || e > spec.charge_limit + GRID_TOL) {
            out.push("battery action grid must lie within the power limits".to_string());
        }
        if self.demand.len() != model.devices() {
            out.push(format!(
                "demand grid has {} devices, model has {}",
                self.demand.len(),
                model.devices()
            ));
        }
        for (i, f) in self.demand.iter().enumerate() {
            if f.len() < 2
                || !strictly_ascending(f)
                || f[0] != 0.0
                || f[f.len() - 1] != 1.0
            {
                out.push(format!(
                    "demand grid of device {i} must ascend strictly from 0 to 1 (fractions of the cap)"
                ));
            }
        }
        if model.devices() > 2 {
            log::warn!(
                "{} flexible devices: gridded action enumeration grows exponentially with the device count",
                model.devices()
            );
        }
        out
    }

    pub fn validate(&self, model: &ProsumerModel) -> Result<()> {
        let v = self.violations(model);
        if v.is_empty() {
            Ok(())
        } else {
            Err(invalid(v.join("; ")))
        }
    }

    /// Grid battery points clipped to `[lo, hi]`, deduplicated, ordered by |e| then e.
    pub fn battery_candidates(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts: Vec<f64> = self.battery.iter().map(|&e| e.clamp(lo, hi)).collect();
        pts.dedup();
        pts.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        pts
    }

    /// All demand combinations at step `t`, ordered by total consumption.
    pub fn demand_candidates(&self, model: &ProsumerModel, t: usize) -> Vec<Vec<f64>> {
        let caps = &model.demand.caps[t];
        let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
        for (i, fracs) in self.demand.iter().enumerate() {
            let mut pts: Vec<f64> = fracs.iter().map(|&f| f * caps[i]).collect();
            pts.dedup();
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    pts.iter().map(move |&p| {
                        let mut c = c.clone();
                        c.push(p);
                        c
                    })
                })
                .collect();
        }
        combos.sort_by(|a, b| {
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            sa.total_cmp(&sb).then_with(|| {
                a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        combos
    }
}
