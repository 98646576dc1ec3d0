use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{self, ActionGrid, ActionSearch, EvalSummary, SolveOptions, StateGrid};
use crate::error::{Error, Result};
use crate::oracle::{solve_perfect_foresight, upper_bound_gap, DeterministicInstance};
use crate::policies::{BackupPolicy, DpPolicy, MyopicPolicy, Policy, PolicyKind, ThresholdPolicy};

use super::{simulate, Scenario};

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of rollout `rollout` in scenario `scenario`, shared by every policy.
pub fn derive_seed(seed: u64, scenario: usize, rollout: usize) -> u64 {
    mix(mix(seed ^ mix(scenario as u64)) ^ rollout as u64)
}

/// Percentage improvement of `value` over `baseline`: 100·(R − R_b)/|R_b|.
pub fn surplus_gain_pct(value: f64, baseline: f64) -> f64 {
    if value == baseline {
        0.0
    } else {
        100.0 * (value - baseline) / baseline.abs()
    }
}

/// Resolution of the DP and action grids used inside a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// SoC spacing (kWh); the axis gets ⌈B / step⌉ + 1 points.
    pub soc_step: f64,
    /// Peak spacing (kWh); the axis gets ⌈c_max / step⌉ + 1 points.
    pub peak_step: f64,
    pub battery_points: usize,
    pub demand_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { soc_step: 0.125, peak_step: 0.25, battery_points: 9, demand_points: 5 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.soc_step > 0.0 && self.peak_step > 0.0) {
            return Err(Error::InvalidParameter("grid steps must be positive".into()));
        }
        if self.battery_points < 2 || self.demand_points < 2 {
            return Err(Error::InvalidParameter("action grids need at least 2 points per axis".into()));
        }
        Ok(())
    }

    pub fn state_grid(&self, scenario: &Scenario) -> StateGrid {
        let points = |hi: f64, step: f64| ((hi / step - 1e-9).ceil() as usize + 1).max(2);
        let m = &scenario.model;
        StateGrid::uniform(
            m,
            &scenario.chain,
            points(m.battery.capacity, self.soc_step),
            points(m.peak_cap(), self.peak_step),
        )
    }

    pub fn action_grid(&self, scenario: &Scenario) -> ActionGrid {
        ActionGrid::uniform(&scenario.model.battery, scenario.model.devices(), self.battery_points, self.demand_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareOptions {
    pub n_rollouts: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub search: ActionSearch,
    pub strict_paper_threshold: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            n_rollouts: 200,
            seed: 0,
            grid: GridSpec::default(),
            search: ActionSearch::default(),
            strict_paper_threshold: false,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    /// Policy name, or `oracle` for the perfect-foresight benchmark.
    pub policy: String,
    pub mean: f64,
    pub ci_half_width: f64,
    /// 100·(R − R_backup)/|R_backup|; absent without a backup row.
    pub gain_pct: Option<f64>,
    /// 100·(R_oracle − R)/|R_oracle|.
    pub oracle_gap_pct: f64,
    pub n_rollouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub n_rollouts: usize,
    pub rows: Vec<ComparisonRow>,
}

pub const REPORT_COLUMNS: [&str; 7] =
    ["scenario", "policy", "mean_reward", "ci_half_width", "gain_pct", "oracle_gap_pct", "n_rollouts"];

impl ComparisonReport {
    pub fn row(&self, scenario: &str, policy: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.policy == policy)
    }

    pub fn scenarios(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.scenario.as_str()) {
                out.push(&r.scenario);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W, comment: &[String]) -> Result<()> {
        let mut out = out;
        for line in comment {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(REPORT_COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.policy.clone(),
                format!("{:.6}", r.mean),
                format!("{:.6}", r.ci_half_width),
                r.gain_pct.map_or_else(String::new, |g| format!("{g:.4}")),
                format!("{:.4}", r.oracle_gap_pct),
                r.n_rollouts.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Realized totals of every policy (in `policies` order) and the oracle on one path.
fn rollout(
    scenario: &Scenario,
    policies: &[Box<dyn Policy + '_>],
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let path = scenario.sample_generation(seed);
    let totals = policies
        .iter()
        .map(|p| simulate(p.as_ref(), &scenario.model, &path, scenario.start_soc).map(|t| t.total_reward))
        .collect::<Result<Vec<_>>>()?;
    let inst = DeterministicInstance::new(path, scenario.model.clone(), scenario.start_soc)?;
    let oracle = solve_perfect_foresight(&inst)?.value;
    for (p, &v) in policies.iter().zip(&totals) {
        upper_bound_gap(v, oracle).map_err(|e| Error::Invariant(format!("{e}; policy {}, seed {seed}", p.name())))?;
    }
    Ok((totals, oracle))
}

/// Paired-seed Monte-Carlo comparison of `policies` and the perfect-foresight oracle.
///
/// Every policy sees the same generation paths; rollout r of scenario i uses
/// `derive_seed(seed, i, r)`. Gains are relative to the backup policy when it is included.
pub fn run_comparison(scenarios: &[Scenario], policies: &[PolicyKind], opts: &CompareOptions) -> Result<ComparisonReport> {
    if opts.n_rollouts == 0 {
        return Err(Error::Input("n_rollouts must be >= 1".into()));
    }
    opts.grid.validate()?;
    let mut kinds: Vec<PolicyKind> = Vec::new();
    for &k in policies {
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    let mut rows = Vec::new();
    for (i, sc) in scenarios.iter().enumerate() {
        sc.validate()?;
        let actions = opts.grid.action_grid(sc);
        let solution = if kinds.contains(&PolicyKind::Dp) {
            let grid = opts.grid.state_grid(sc);
            let solve_opts = SolveOptions { search: opts.search, threads: opts.threads };
            Some(dp::solve(&sc.model, &sc.chain, &grid, &actions, solve_opts)?)
        } else {
            None
        };
        let boxed: Vec<Box<dyn Policy + '_>> = kinds
            .iter()
            .map(|k| -> Box<dyn Policy + '_> {
                match k {
                    PolicyKind::Backup => Box::new(BackupPolicy { model: &sc.model }),
                    PolicyKind::Threshold => {
                        Box::new(ThresholdPolicy { model: &sc.model, strict_paper: opts.strict_paper_threshold })
                    }
                    PolicyKind::Myopic => {
                        Box::new(MyopicPolicy { model: &sc.model, actions: &actions, search: opts.search })
                    }
                    PolicyKind::Dp => Box::new(DpPolicy { solution: solution.as_ref().expect("solved above") }),
                }
            })
            .collect();
        let results = dp::run_in_pool(opts.threads, || {
            (0..opts.n_rollouts)
                .into_par_iter()
                .map(|r| rollout(sc, &boxed, derive_seed(opts.seed, i, r)))
                .collect::<Result<Vec<_>>>()
        })??;

        let oracle_vals: Vec<f64> = results.iter().map(|(_, o)| *o).collect();
        let oracle = EvalSummary::from_values(oracle_vals);
        let mut summaries: Vec<(String, EvalSummary)> = kinds
            .iter()
            .enumerate()
            .map(|(j, k)| (k.to_string(), EvalSummary::from_values(results.iter().map(|(t, _)| t[j]).collect())))
            .collect();
        summaries.push(("oracle".into(), oracle.clone()));
        let backup = kinds.iter().position(|&k| k == PolicyKind::Backup).map(|j| summaries[j].1.mean);
        for (name, s) in summaries {
            let gain_pct = backup.map(|b| surplus_gain_pct(s.mean, b));
            let oracle_gap_pct =
                if oracle.mean == s.mean { 0.0 } else { 100.0 * (oracle.mean - s.mean) / oracle.mean.abs() };
            rows.push(ComparisonRow {
                scenario: sc.label.clone(),
                policy: name,
                mean: s.mean,
                ci_half_width: s.half_width,
                gain_pct,
                oracle_gap_pct,
                n_rollouts: opts.n_rollouts,
            });
        }
    }
    Ok(ComparisonReport { seed: opts.seed, n_rollouts: opts.n_rollouts, rows })
}
