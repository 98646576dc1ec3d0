//! One function per subcommand. Each returns its result so callers other than `main`
//! can inspect it; files are written as a side effect.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nemflex::dp::{
    self, check_bellman, check_concavity, check_monotonicity, check_threshold_structure, Axis, CheckReport,
    SolveOptions,
};
use nemflex::generation::{
    fit_chain, fit_chain_per_step, read_series_csv, synth_demand_series, synth_solar_series, write_series_csv,
    GenerationChain,
};
use nemflex::model::SystemState;
use nemflex::oracle::{solve_perfect_foresight, DeterministicInstance, OracleSolution};
use nemflex::policies::{BackupPolicy, DpPolicy, MyopicPolicy, Policy, PolicyKind, ThresholdPolicy};
use nemflex::sim::{run_comparison, trace as trace_path, ComparisonReport, Scenario, Trajectory};

use crate::artifact::{create, read_json, read_tables, write_json, ChainArtifact, Provenance, TablesArtifact};
use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};

pub const CONCAVITY_TOL: f64 = 1e-6;
pub const MONOTONICITY_TOL: f64 = 1e-9;
pub const THRESHOLD_TOL: f64 = 1e-9;
pub const BELLMAN_TOL: f64 = 1e-9;

pub const TABLES_JSON: &str = "tables.json";
pub const TABLES_CSV: &str = "tables.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

fn hash_bytes(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub chain: GenerationChain,
    pub readings: usize,
}

pub fn fit_gen(csv: &Path, levels: usize, smoothing: f64, per_step: bool, out: &Path) -> CliResult<FitSummary> {
    let bytes = std::fs::read(csv).map_err(io_err(csv))?;
    let series = read_series_csv(bytes.as_slice(), &csv.display().to_string())?;
    let chain = if per_step {
        fit_chain_per_step(&series.values, levels, smoothing, 24, series.start_hour)?
    } else {
        fit_chain(&series.values, levels, smoothing)?
    };
    let settings = format!("levels={levels} smoothing={smoothing} per_step={per_step}");
    let provenance = Provenance::new("chain", &hash_bytes(&[&bytes, settings.as_bytes()]), None);
    write_json(out, &ChainArtifact { provenance, chain: chain.clone() })?;
    Ok(FitSummary { chain, readings: series.values.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSummary {
    pub scenario: String,
    pub v0: f64,
    pub states: usize,
    pub tables_json: PathBuf,
    pub tables_csv: PathBuf,
}

fn start_state(s: &Scenario) -> SystemState {
    SystemState::new(s.start_soc, s.chain.levels[s.start_level], 0.0)
}

fn solve_scenario(cfg: &LoadedConfig, s: &Scenario) -> CliResult<dp::Solution> {
    let grid = cfg.config.grid.state_grid(s);
    let actions = cfg.config.grid.action_grid(s);
    let opts = SolveOptions { search: cfg.config.execution.search, threads: cfg.config.execution.threads };
    log::info!("solving '{}' on {} states", s.label, grid.n_states());
    Ok(dp::solve(&s.model, &s.chain, &grid, &actions, opts)?)
}

pub fn solve(cfg: &LoadedConfig, scenario: Option<&str>, out_dir: &Path) -> CliResult<SolveSummary> {
    let s = cfg.scenario(scenario)?;
    let solution = solve_scenario(cfg, &s)?;
    let v0 = solution.value_at(&start_state(&s), 0);
    let provenance = Provenance::new("tables", &cfg.config.hash(), Some(cfg.config.execution.seed));

    let tables_csv = out_dir.join(TABLES_CSV);
    let mut w = create(&tables_csv)?;
    write_tables_csv(&mut w, &solution, &provenance).map_err(io_err(&tables_csv))?;

    let tables_json = out_dir.join(TABLES_JSON);
    let states = solution.grid.n_states();
    let artifact = TablesArtifact {
        provenance,
        scenario: s.label.clone(),
        start_soc: s.start_soc,
        start_level: s.start_level,
        solution,
    };
    write_json(&tables_json, &artifact)?;
    Ok(SolveSummary { scenario: s.label, v0, states, tables_json, tables_csv })
}

fn write_tables_csv<W: Write>(mut w: W, sol: &dp::Solution, provenance: &Provenance) -> std::io::Result<()> {
    writeln!(w, "# {}", provenance.header())?;
    writeln!(w, "t,soc,gen,peak,value,battery,demand_total")?;
    let (ns, ng, nc) = sol.grid.dims();
    for t in 0..=sol.horizon() {
        for i_g in 0..ng {
            for i_s in 0..ns {
                for i_c in 0..nc {
                    let (s, g, c) = (sol.grid.soc[i_s], sol.grid.gen[i_g], sol.grid.peak[i_c]);
                    let v = sol.values.get(t, i_s, i_g, i_c);
                    if t < sol.horizon() {
                        let a = sol.policy.get(t, i_s, i_g, i_c);
                        writeln!(w, "{t},{s},{g},{c},{v},{},{}", a.battery, a.total_demand())?;
                    } else {
                        writeln!(w, "{t},{s},{g},{c},{v},,")?;
                    }
                }
            }
        }
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub reports: Vec<CheckReport>,
    /// Checks that do not apply to these tables, with the reason.
    pub skipped: Vec<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(CheckReport::passed)
    }
}

pub fn check(tables: &Path) -> CliResult<CheckOutcome> {
    let artifact = read_tables(tables)?;
    let sol = &artifact.solution;
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for axis in [Axis::Soc, Axis::Peak] {
        reports.push(check_concavity(&sol.values, &sol.grid, axis, CONCAVITY_TOL)?);
    }
    for axis in [Axis::Soc, Axis::Peak] {
        reports.push(check_monotonicity(&sol.values, axis, MONOTONICITY_TOL)?);
    }
    if sol.chain.is_stochastically_monotone(1e-12) {
        reports.push(check_monotonicity(&sol.values, Axis::Gen, MONOTONICITY_TOL)?);
    } else {
        skipped.push("monotonicity along gen: chain is not stochastically monotone".into());
    }
    let slices = sol.all_q_slices();
    reports.push(check_threshold_structure(&slices, THRESHOLD_TOL));
    reports.push(check_bellman(sol, &slices, BELLMAN_TOL));
    Ok(CheckOutcome { reports, skipped })
}

pub fn compare(cfg: &LoadedConfig, policies: Option<&[PolicyKind]>, out_dir: &Path) -> CliResult<ComparisonReport> {
    let scenarios = cfg.scenarios()?;
    let kinds = policies.unwrap_or(&cfg.config.execution.policies);
    log::info!("comparing {} policies on {} scenarios", kinds.len(), scenarios.len());
    let report = run_comparison(&scenarios, kinds, &cfg.config.compare_options())?;
    let provenance = Provenance::new("report", &cfg.config.hash(), Some(cfg.config.execution.seed));

    let csv = out_dir.join(REPORT_CSV);
    let mut w = create(&csv)?;
    report.write_csv(&mut w, &[provenance.header()])?;
    w.flush().map_err(io_err(&csv))?;

    #[derive(Serialize)]
    struct Wrapped<'a> {
        provenance: Provenance,
        report: &'a ComparisonReport,
    }
    write_json(&out_dir.join(REPORT_JSON), &Wrapped { provenance, report: &report })?;
    Ok(report)
}

pub fn trace(cfg: &LoadedConfig, kind: PolicyKind, seed: u64, scenario: Option<&str>, out: &Path) -> CliResult<Trajectory> {
    let s = cfg.scenario(scenario)?;
    let actions = cfg.config.grid.action_grid(&s);
    let solution = if kind == PolicyKind::Dp { Some(solve_scenario(cfg, &s)?) } else { None };
    let policy: Box<dyn Policy + '_> = match kind {
        PolicyKind::Backup => Box::new(BackupPolicy { model: &s.model }),
        PolicyKind::Threshold => {
            Box::new(ThresholdPolicy { model: &s.model, strict_paper: cfg.config.execution.strict_paper_threshold })
        }
        PolicyKind::Myopic => {
            Box::new(MyopicPolicy { model: &s.model, actions: &actions, search: cfg.config.execution.search })
        }
        PolicyKind::Dp => Box::new(DpPolicy { solution: solution.as_ref().expect("solved above") }),
    };
    let tr = trace_path(policy.as_ref(), &s, seed)?;
    let provenance = Provenance::new("trace", &cfg.config.hash(), Some(seed));
    let comment = [provenance.header(), format!("scenario={} policy={kind}", s.label)];
    let mut w = create(out)?;
    tr.write_csv(&mut w, &comment)?;
    w.flush().map_err(io_err(out))?;
    Ok(tr)
}

pub fn oracle(instance: &Path, out: &Path) -> CliResult<OracleSolution> {
    let inst: DeterministicInstance = read_json(instance)?;
    inst.validate()?;
    let solution = solve_perfect_foresight(&inst)?;
    let tr = inst.evaluate(&solution.schedule)?;
    let bytes = serde_json::to_vec(&inst).expect("instance serializes");
    let provenance = Provenance::new("oracle", &hash_bytes(&[&bytes]), None);
    let mut w = create(out)?;
    tr.write_csv(&mut w, &[provenance.header(), format!("value={}", solution.value)])?;
    w.flush().map_err(io_err(out))?;
    Ok(solution)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub days: usize,
    pub solar_peak_kw: f64,
    pub demand_base_kw: f64,
    pub noise: f64,
    pub seed: u64,
}

pub fn synth(settings: &SynthSettings, out: &Path) -> CliResult<usize> {
    let SynthSettings { days, solar_peak_kw, demand_base_kw, noise, seed } = *settings;
    if days == 0 {
        return Err(CliError::Usage("--days must be >= 1".into()));
    }
    for (name, v) in [("--solar-peak", solar_peak_kw), ("--demand-base", demand_base_kw), ("--noise", noise)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(CliError::Usage(format!("{name} must be >= 0")));
        }
    }
    let mut series = synth_solar_series(days, solar_peak_kw, noise, seed);
    series.demand_max = Some(synth_demand_series(days, demand_base_kw, noise, seed));
    let params = format!("days={days} solar_peak={solar_peak_kw} demand_base={demand_base_kw} noise={noise}");
    let provenance = Provenance::new("series", &hash_bytes(&[params.as_bytes()]), Some(seed));
    let mut w = create(out)?;
    write_series_csv(&mut w, &series, &[provenance.header()])?;
    w.flush().map_err(io_err(out))?;
    Ok(series.values.len())
}
