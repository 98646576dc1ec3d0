use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::{fit_chain_per_step, synth_demand_series, synth_solar_series, GenerationChain, GenerationSeries};
use crate::model::{BatterySpec, DemandBundle, ProsumerModel, QuadraticUtility, TariffSchedule};

const HOURS: usize = 24;
const MIN_DAYS: usize = 3;
/// Demand levels below this are treated as this value when calibrating β.
const DEMAND_FLOOR: f64 = 1e-3;

/// One evaluation setting: model, generation chain and initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub gen_percentile: Option<f64>,
    pub demand_percentile: Option<f64>,
    pub model: ProsumerModel,
    pub chain: GenerationChain,
    pub start_soc: f64,
    /// Chain level at t = 0.
    pub start_level: usize,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.model.horizon()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.chain.validate()?;
        for (name, p) in [("generation", self.gen_percentile), ("demand", self.demand_percentile)] {
            if let Some(p) = p {
                if !(p > 0.0 && p < 100.0) {
                    return Err(Error::InvalidParameter(format!("{name} percentile {p} outside (0, 100)")));
                }
            }
        }
        if !(0.0..=self.model.battery.capacity).contains(&self.start_soc) {
            return Err(Error::InvalidParameter(format!("start SoC {} outside [0, B]", self.start_soc)));
        }
        if self.start_level >= self.chain.n_levels() {
            return Err(Error::InvalidParameter(format!("start level {} out of range", self.start_level)));
        }
        Ok(())
    }

    /// Generation values along the chain path drawn with `seed`.
    pub fn sample_generation(&self, seed: u64) -> Vec<f64> {
        self.chain.values(&self.chain.sample_path(self.start_level, self.horizon(), seed))
    }
}

/// Hourly generation and demand readings; index 0 is midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioData {
    pub generation: Vec<f64>,
    pub demand: Vec<f64>,
}

impl ScenarioData {
    /// Uses the series' demand column; leading readings before the first midnight are dropped.
    pub fn from_series(series: &GenerationSeries) -> Result<Self> {
        let demand = series
            .demand_max
            .as_ref()
            .ok_or_else(|| Error::Input(format!("series '{}' has no demand_max_kwh column", series.label)))?;
        let skip = (HOURS - series.start_hour % HOURS) % HOURS;
        Ok(Self {
            generation: series.values.iter().skip(skip).copied().collect(),
            demand: demand.iter().skip(skip).copied().collect(),
        })
    }

    pub fn days(&self) -> usize {
        self.generation.len().min(self.demand.len()) / HOURS
    }
}

/// Synthetic year of solar and demand readings.
pub fn synthetic_data(days: usize, solar_peak_kw: f64, demand_base_kw: f64, noise: f64, seed: u64) -> ScenarioData {
    ScenarioData {
        generation: synth_solar_series(days, solar_peak_kw, noise, seed).values,
        demand: synth_demand_series(days, demand_base_kw, noise, seed),
    }
}

/// Settings shared by every scenario built from one data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSettings {
    pub buy: f64,
    pub sell: f64,
    pub demand_charge: f64,
    /// Salvage rate; the buy/sell midpoint when absent.
    pub salvage: Option<f64>,
    pub charge_eff: f64,
    pub discharge_eff: f64,
    pub n_levels: usize,
    pub smoothing: f64,
    /// Days within this many percentile points (as a fraction) of the target are selected.
    pub day_window: f64,
    /// Price elasticity of demand at the calibration point.
    pub elasticity: f64,
    /// Identical flexible devices sharing the demand profile.
    pub devices: usize,
    /// Initial SoC as a fraction of capacity.
    pub start_soc_fraction: f64,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        Self {
            buy: 0.12,
            sell: 0.06,
            demand_charge: 10.0,
            salvage: None,
            charge_eff: 0.95,
            discharge_eff: 0.95,
            n_levels: 8,
            smoothing: 0.0,
            day_window: 0.1,
            elasticity: -0.1,
            devices: 1,
            start_soc_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioCase {
    pub label: String,
    pub gen_percentile: f64,
    pub demand_percentile: f64,
    pub capacity: f64,
    pub power_limit: f64,
}

impl ScenarioCase {
    pub fn new(gen_percentile: f64, demand_percentile: f64, capacity: f64, power_limit: f64) -> Self {
        Self {
            label: format!("gen{gen_percentile}-dem{demand_percentile}-{capacity}kWh-{power_limit}kW"),
            gen_percentile,
            demand_percentile,
            capacity,
            power_limit,
        }
    }
}

/// The seven default cases: three generation/demand pairings at 5 kWh / 1 kW, then
/// capacity 3 and 7 kWh, then power limits 0.5 and 2 kW.
pub fn default_cases() -> Vec<ScenarioCase> {
    vec![
        ScenarioCase::new(25.0, 75.0, 5.0, 1.0),
        ScenarioCase::new(50.0, 50.0, 5.0, 1.0),
        ScenarioCase::new(75.0, 25.0, 5.0, 1.0),
        ScenarioCase::new(50.0, 50.0, 3.0, 1.0),
        ScenarioCase::new(50.0, 50.0, 7.0, 1.0),
        ScenarioCase::new(50.0, 50.0, 5.0, 0.5),
        ScenarioCase::new(50.0, 50.0, 5.0, 2.0),
    ]
}

/// Indices of the days whose daily total is closest in rank to the `percentile`.
fn select_days(series: &[f64], days: usize, percentile: f64, window: f64) -> Vec<usize> {
    let totals: Vec<f64> = (0..days).map(|d| series[d * HOURS..(d + 1) * HOURS].iter().sum()).collect();
    let mut order: Vec<usize> = (0..days).collect();
    order.sort_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(a.cmp(&b)));
    let target = percentile / 100.0 * (days - 1) as f64;
    let count = ((2.0 * window * days as f64).round() as usize).clamp(MIN_DAYS, days);
    let mut ranks: Vec<usize> = (0..days).collect();
    ranks.sort_by(|&a, &b| (a as f64 - target).abs().total_cmp(&(b as f64 - target).abs()).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = ranks[..count].iter().map(|&r| order[r]).collect();
    chosen.sort_unstable();
    chosen
}

fn check_settings(s: &ScenarioSettings) -> Result<()> {
    if !(s.elasticity < 0.0 && s.elasticity.is_finite()) {
        return Err(Error::InvalidParameter(format!("elasticity must be negative, got {}", s.elasticity)));
    }
    if !(s.day_window > 0.0 && s.day_window <= 0.5) {
        return Err(Error::InvalidParameter(format!("day_window must be in (0, 0.5], got {}", s.day_window)));
    }
    if s.devices == 0 {
        return Err(Error::InvalidParameter("devices must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&s.start_soc_fraction) {
        return Err(Error::InvalidParameter("start_soc_fraction must be in [0, 1]".into()));
    }
    Ok(())
}

/// Builds one scenario per case from hourly data.
///
/// Generation: the days around the case's generation percentile (by daily total) are
/// concatenated and an hour-of-day chain is fitted to them. Demand: the hourly profile
/// averaged over the days around the demand percentile sets the caps d̄_t, and the utility
/// is calibrated so that the unconstrained optimum at price p⁺ equals d̄_t with the
/// configured elasticity there: β_t = p⁺ / (|ε| d̄_t), α_t = p⁺ + β_t d̄_t.
pub fn build_scenarios(data: &ScenarioData, settings: &ScenarioSettings, cases: &[ScenarioCase]) -> Result<Vec<Scenario>> {
    check_settings(settings)?;
    let days = data.days();
    if days < MIN_DAYS {
        return Err(Error::Input(format!("need at least {MIN_DAYS} whole days of data, got {days}")));
    }
    let salvage = settings.salvage.unwrap_or(0.5 * (settings.buy + settings.sell));
    let tariff = TariffSchedule::new(
        vec![settings.buy; HOURS],
        vec![settings.sell; HOURS],
        settings.demand_charge,
        salvage,
    )?;
    let k = settings.devices;

    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        for p in [case.gen_percentile, case.demand_percentile] {
            if !(p > 0.0 && p < 100.0) {
                return Err(Error::InvalidParameter(format!("percentile {p} outside (0, 100) in '{}'", case.label)));
            }
        }
        let gen_days = select_days(&data.generation, days, case.gen_percentile, settings.day_window);
        let gen: Vec<f64> =
            gen_days.iter().flat_map(|&d| data.generation[d * HOURS..(d + 1) * HOURS].iter().copied()).collect();
        let chain = fit_chain_per_step(&gen, settings.n_levels, settings.smoothing, HOURS, 0)?;
        let midnight = gen_days.iter().map(|&d| data.generation[d * HOURS]).sum::<f64>()
            / gen_days.len() as f64;
        let start_level = chain.nearest_level(midnight);

        let dem_days = select_days(&data.demand, days, case.demand_percentile, settings.day_window);
        let mut caps = Vec::with_capacity(HOURS);
        let mut utility = Vec::with_capacity(HOURS);
        for h in 0..HOURS {
            let mean = dem_days.iter().map(|&d| data.demand[d * HOURS + h]).sum::<f64>() / dem_days.len() as f64;
            let per_device = mean / k as f64;
            let beta = settings.buy / (settings.elasticity.abs() * per_device.max(DEMAND_FLOOR));
            let alpha = settings.buy + beta * per_device;
            caps.push(vec![per_device; k]);
            utility.push(vec![QuadraticUtility::new(alpha, beta); k]);
        }
        let battery = BatterySpec::new(
            case.capacity,
            case.power_limit,
            case.power_limit,
            settings.charge_eff,
            settings.discharge_eff,
        )?;
        let model = ProsumerModel::new(battery, tariff.clone(), DemandBundle::new(caps, utility)?)?;
        let scenario = Scenario {
            label: case.label.clone(),
            gen_percentile: Some(case.gen_percentile),
            demand_percentile: Some(case.demand_percentile),
            start_soc: settings.start_soc_fraction * case.capacity,
            model,
            chain,
            start_level,
        };
        scenario.validate()?;
        out.push(scenario);
    }
    Ok(out)
}
