//! Run configuration: TOML (or JSON) with a versioned schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nemflex::dp::ActionSearch;
use nemflex::generation::{fit_chain, fit_chain_per_step, read_series_csv, GenerationChain};
use nemflex::model::{BatterySpec, DemandBundle, ProsumerModel, QuadraticUtility, TariffSchedule};
use nemflex::policies::PolicyKind;
use nemflex::sim::{
    build_scenarios, default_cases, synthetic_data, CompareOptions, GridSpec, Scenario, ScenarioCase, ScenarioData,
    ScenarioSettings,
};

use crate::artifact::read_chain;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Label of the single scenario defined by an explicit `[model]` block.
pub const MODEL_LABEL: &str = "model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Explicit problem; when present it replaces the scenario set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub scenario: ScenarioSettings,
    #[serde(default = "default_cases")]
    pub cases: Vec<ScenarioCase>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub execution: ExecutionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: None,
            data: DataConfig::default(),
            scenario: ScenarioSettings::default(),
            cases: default_cases(),
            grid: GridSpec::default(),
            execution: ExecutionConfig::default(),
        }
    }
}

/// A scalar applied to every step, or one value per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Flat(f64),
    Hourly(Vec<f64>),
}

impl Profile {
    fn expand(&self, horizon: usize) -> Vec<f64> {
        match self {
            Profile::Flat(v) => vec![*v; horizon],
            Profile::Hourly(v) => v.clone(),
        }
    }

    fn check_len(&self, horizon: usize, name: &str, out: &mut Vec<String>) {
        if let Profile::Hourly(v) = self {
            if v.len() != horizon {
                out.push(format!("{name} has {} values, horizon is {horizon}", v.len()));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffConfig {
    pub buy: Profile,
    pub sell: Profile,
    pub demand_charge: f64,
    /// Salvage rate; the first step's buy/sell midpoint when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salvage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub cap: Profile,
    pub alpha: Profile,
    pub beta: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainConfig {
    Explicit {
        levels: Vec<f64>,
        matrix: Vec<Vec<f64>>,
    },
    /// Chain artifact written by `fit-gen`.
    File {
        path: PathBuf,
    },
    /// Fit from an hourly CSV.
    Csv {
        path: PathBuf,
        levels: usize,
        #[serde(default)]
        smoothing: f64,
        /// Fit one matrix per hour of day instead of a single matrix.
        #[serde(default)]
        per_step: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: usize,
    pub battery: BatterySpec,
    pub tariff: TariffConfig,
    pub devices: Vec<DeviceConfig>,
    pub chain: ChainConfig,
    #[serde(default)]
    pub start_soc: f64,
    #[serde(default)]
    pub start_level: usize,
}

impl ModelConfig {
    fn tariff(&self) -> TariffSchedule {
        let buy = self.tariff.buy.expand(self.horizon);
        let sell = self.tariff.sell.expand(self.horizon);
        let salvage = self.tariff.salvage.unwrap_or_else(|| TariffSchedule::default_salvage(&buy, &sell));
        TariffSchedule { buy, sell, demand_charge: self.tariff.demand_charge, salvage }
    }

    fn demand(&self) -> DemandBundle {
        let cols: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = self
            .devices
            .iter()
            .map(|d| (d.cap.expand(self.horizon), d.alpha.expand(self.horizon), d.beta.expand(self.horizon)))
            .collect();
        let caps = (0..self.horizon).map(|t| cols.iter().map(|c| c.0[t]).collect()).collect();
        let utility = (0..self.horizon)
            .map(|t| cols.iter().map(|c| QuadraticUtility::new(c.1[t], c.2[t])).collect())
            .collect();
        DemandBundle { caps, utility }
    }

    fn violations(&self, out: &mut Vec<String>) {
        let h = self.horizon;
        if h == 0 {
            out.push("model.horizon must be at least 1".into());
            return;
        }
        let mut shape = Vec::new();
        self.tariff.buy.check_len(h, "model.tariff.buy", &mut shape);
        self.tariff.sell.check_len(h, "model.tariff.sell", &mut shape);
        if self.devices.is_empty() {
            shape.push("model.devices must list at least one device".into());
        }
        for (i, d) in self.devices.iter().enumerate() {
            d.cap.check_len(h, &format!("model.devices[{i}].cap"), &mut shape);
            d.alpha.check_len(h, &format!("model.devices[{i}].alpha"), &mut shape);
            d.beta.check_len(h, &format!("model.devices[{i}].beta"), &mut shape);
        }
        let shaped = shape.is_empty();
        out.extend(shape);
        out.extend(self.battery.violations().into_iter().map(|v| format!("model.battery: {v}")));
        if shaped {
            out.extend(self.tariff().violations().into_iter().map(|v| format!("model.tariff: {v}")));
            out.extend(self.demand().violations().into_iter().map(|v| format!("model.devices: {v}")));
        }
        if !(0.0..=self.battery.capacity).contains(&self.start_soc) {
            out.push(format!("model.start_soc {} outside [0, {}]", self.start_soc, self.battery.capacity));
        }
        if let ChainConfig::Explicit { levels, matrix } = &self.chain {
            match GenerationChain::homogeneous(levels.clone(), matrix.clone()) {
                Ok(_) if self.start_level >= levels.len() => {
                    out.push(format!("model.start_level {} out of range for {} levels", self.start_level, levels.len()))
                }
                Ok(_) => {}
                Err(e) => out.push(format!("model.chain: {e}")),
            }
        }
        if let ChainConfig::Csv { levels, smoothing, .. } = &self.chain {
            if *levels < 2 {
                out.push("model.chain.levels must be >= 2".into());
            }
            if !(smoothing.is_finite() && *smoothing >= 0.0) {
                out.push("model.chain.smoothing must be >= 0".into());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic { days: usize, solar_peak_kw: f64, demand_base_kw: f64, noise: f64, seed: u64 },
    /// Hourly CSV with `generation_kwh` and `demand_max_kwh` columns.
    Csv { path: PathBuf },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic { days: 365, solar_peak_kw: 3.0, demand_base_kw: 1.2, noise: 0.3, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionConfig {
    pub seed: u64,
    pub rollouts: usize,
    /// Worker threads for solves and rollouts; the global pool when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub policies: Vec<PolicyKind>,
    pub search: ActionSearch,
    pub strict_paper_threshold: bool,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rollouts: 200,
            threads: None,
            policies: PolicyKind::ALL.to_vec(),
            search: ActionSearch::default(),
            strict_paper_threshold: false,
        }
    }
}

/// A parsed config and the directory its relative paths are resolved against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string().trim().to_string()]))
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Parses `path` (JSON when the extension is `.json`, TOML otherwise) and validates it.
    pub fn load(path: &Path) -> CliResult<LoadedConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let config = if is_json { Self::from_json(&text)? } else { Self::from_toml(&text)? };
        config.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn validate(&self) -> CliResult<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(v))
        }
    }

    /// Every violated invariant, prefixed with the block it belongs to.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if let Some(m) = &self.model {
            m.violations(&mut out);
        } else {
            self.scenario_violations(&mut out);
        }
        if let Err(e) = self.grid.validate() {
            out.push(format!("grid: {e}"));
        }
        let x = &self.execution;
        if x.rollouts == 0 {
            out.push("execution.rollouts must be >= 1".into());
        }
        if x.threads == Some(0) {
            out.push("execution.threads must be >= 1".into());
        }
        if x.policies.is_empty() {
            out.push("execution.policies must name at least one policy".into());
        }
        out
    }

    fn scenario_violations(&self, out: &mut Vec<String>) {
        let s = &self.scenario;
        let salvage = s.salvage.unwrap_or(0.5 * (s.buy + s.sell));
        let tariff = TariffSchedule { buy: vec![s.buy], sell: vec![s.sell], demand_charge: s.demand_charge, salvage };
        out.extend(tariff.violations().into_iter().map(|v| format!("scenario tariff: {v}")));
        if !(s.elasticity < 0.0 && s.elasticity.is_finite()) {
            out.push(format!("scenario.elasticity must be negative, got {}", s.elasticity));
        }
        if !(s.day_window > 0.0 && s.day_window <= 0.5) {
            out.push(format!("scenario.day_window must be in (0, 0.5], got {}", s.day_window));
        }
        if s.n_levels < 2 {
            out.push("scenario.n_levels must be >= 2".into());
        }
        if !(s.smoothing.is_finite() && s.smoothing >= 0.0) {
            out.push("scenario.smoothing must be >= 0".into());
        }
        if s.devices == 0 {
            out.push("scenario.devices must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&s.start_soc_fraction) {
            out.push("scenario.start_soc_fraction must be in [0, 1]".into());
        }
        if self.cases.is_empty() {
            out.push("cases must list at least one scenario".into());
        }
        let mut labels: Vec<&str> = Vec::new();
        for c in &self.cases {
            if labels.contains(&c.label.as_str()) {
                out.push(format!("cases: duplicate label '{}'", c.label));
            }
            labels.push(&c.label);
            for (name, p) in [("gen_percentile", c.gen_percentile), ("demand_percentile", c.demand_percentile)] {
                if !(p > 0.0 && p < 100.0) {
                    out.push(format!("case '{}': {name} {p} outside (0, 100)", c.label));
                }
            }
            let battery = BatterySpec {
                capacity: c.capacity,
                charge_limit: c.power_limit,
                discharge_limit: c.power_limit,
                charge_eff: s.charge_eff,
                discharge_eff: s.discharge_eff,
            };
            out.extend(battery.violations().into_iter().map(|v| format!("case '{}': {v}", c.label)));
        }
        if let DataConfig::Synthetic { days, solar_peak_kw, demand_base_kw, noise, .. } = &self.data {
            if *days < 3 {
                out.push(format!("data.days must be >= 3, got {days}"));
            }
            for (name, v) in [("solar_peak_kw", solar_peak_kw), ("demand_base_kw", demand_base_kw), ("noise", noise)] {
                if !(v.is_finite() && *v >= 0.0) {
                    out.push(format!("data.{name} must be >= 0"));
                }
            }
        }
    }

    /// Comparison settings taken from the grid and execution blocks.
    pub fn compare_options(&self) -> CompareOptions {
        CompareOptions {
            n_rollouts: self.execution.rollouts,
            seed: self.execution.seed,
            grid: self.grid.clone(),
            search: self.execution.search,
            strict_paper_threshold: self.execution.strict_paper_threshold,
            threads: self.execution.threads,
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

impl LoadedConfig {
    pub fn new(config: RunConfig) -> CliResult<Self> {
        config.validate()?;
        Ok(Self { config, base_dir: PathBuf::new() })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn open(&self, p: &Path) -> CliResult<std::fs::File> {
        let path = self.resolve(p);
        std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))
    }

    /// The scenarios described by the config: the explicit model, or one per case.
    pub fn scenarios(&self) -> CliResult<Vec<Scenario>> {
        match &self.config.model {
            Some(m) => Ok(vec![self.model_scenario(m)?]),
            None => {
                let data = match &self.config.data {
                    DataConfig::Synthetic { days, solar_peak_kw, demand_base_kw, noise, seed } => {
                        synthetic_data(*days, *solar_peak_kw, *demand_base_kw, *noise, *seed)
                    }
                    DataConfig::Csv { path } => {
                        let series = read_series_csv(self.open(path)?, &path.display().to_string())?;
                        ScenarioData::from_series(&series)?
                    }
                };
                Ok(build_scenarios(&data, &self.config.scenario, &self.config.cases)?)
            }
        }
    }

    /// The scenario labelled `label`, or the first one.
    pub fn scenario(&self, label: Option<&str>) -> CliResult<Scenario> {
        let all = self.scenarios()?;
        match label {
            None => Ok(all.into_iter().next().expect("validated configs have a scenario")),
            Some(l) => {
                let known: Vec<String> = all.iter().map(|s| s.label.clone()).collect();
                all.into_iter()
                    .find(|s| s.label == l)
                    .ok_or_else(|| CliError::Usage(format!("unknown scenario '{l}' (known: {})", known.join(", "))))
            }
        }
    }

    fn model_scenario(&self, m: &ModelConfig) -> CliResult<Scenario> {
        let model = ProsumerModel::new(m.battery, m.tariff(), m.demand())?;
        let chain = match &m.chain {
            ChainConfig::Explicit { levels, matrix } => GenerationChain::homogeneous(levels.clone(), matrix.clone())?,
            ChainConfig::File { path } => read_chain(&self.resolve(path))?,
            ChainConfig::Csv { path, levels, smoothing, per_step } => {
                let series = read_series_csv(self.open(path)?, &path.display().to_string())?;
                if *per_step {
                    fit_chain_per_step(&series.values, *levels, *smoothing, 24, series.start_hour)?
                } else {
                    fit_chain(&series.values, *levels, *smoothing)?
                }
            }
        };
        let scenario = Scenario {
            label: MODEL_LABEL.into(),
            gen_percentile: None,
            demand_percentile: None,
            model,
            chain,
            start_soc: m.start_soc,
            start_level: m.start_level,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
