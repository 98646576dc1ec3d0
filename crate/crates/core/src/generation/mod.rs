//! Discrete-level Markov model of renewable generation.

mod csv_io;
mod fit;
mod synth;

pub use csv_io::{read_series_csv, write_series_csv};
pub use fit::{fit_chain, fit_chain_per_step, Binning};
pub use synth::{synth_demand_series, synth_solar_series};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row sums must match 1 to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "matrices", rename_all = "snake_case")]
pub enum Transitions {
    /// One matrix used at every step.
    Homogeneous(Matrix),
    /// `matrices[t % len]` moves the chain from step t to t + 1.
    PerStep(Vec<Matrix>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationChain {
    /// Generation value of each level (kWh/step), strictly increasing.
    pub levels: Vec<f64>,
    pub transitions: Transitions,
}

impl GenerationChain {
    pub fn new(levels: Vec<f64>, transitions: Transitions) -> Result<Self> {
        let c = Self { levels, transitions };
        c.validate()?;
        Ok(c)
    }

    pub fn homogeneous(levels: Vec<f64>, matrix: Matrix) -> Result<Self> {
        Self::new(levels, Transitions::Homogeneous(matrix))
    }

    /// Chain that never leaves its starting level.
    pub fn identity(levels: Vec<f64>) -> Result<Self> {
        let n = levels.len();
        let m = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::homogeneous(levels, m)
    }

    pub fn uniform(levels: Vec<f64>) -> Result<Self> {
        let n = levels.len();
        Self::homogeneous(levels, vec![vec![1.0 / n as f64; n]; n])
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn is_per_step(&self) -> bool {
        matches!(self.transitions, Transitions::PerStep(_))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.levels.len();
        if n == 0 {
            out.push("generation chain needs at least one level".to_string());
        }
        if self.levels.iter().any(|&g| !(g.is_finite() && g >= 0.0)) {
            out.push("generation levels must be finite and >= 0".to_string());
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            out.push("generation levels must be strictly increasing".to_string());
        }
        match &self.transitions {
            Transitions::Homogeneous(m) => check_matrix(m, n, "transition matrix", &mut out),
            Transitions::PerStep(ms) => {
                if ms.is_empty() {
                    out.push("per-step transitions need at least one matrix".to_string());
                }
                for (t, m) in ms.iter().enumerate() {
                    check_matrix(m, n, &format!("transition matrix {t}"), &mut out);
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

    /// Distribution of the next level given level `i` at step `t`, without bounds checks.
    #[inline]
    pub fn row(&self, i: usize, t: usize) -> &[f64] {
        match &self.transitions {
            Transitions::Homogeneous(m) => &m[i],
            Transitions::PerStep(ms) => &ms[t % ms.len()][i],
        }
    }

    pub fn next_distribution(&self, i: usize, t: usize) -> Result<&[f64]> {
        if i >= self.n_levels() {
            return Err(Error::Input(format!(
                "level index {i} out of range for a {}-level chain",
                self.n_levels()
            )));
        }
        Ok(self.row(i, t))
    }

    /// Whether higher levels lead to stochastically larger next levels at every step: each
    /// row's upper-tail sums are non-decreasing in the current level, up to `tol`.
    pub fn is_stochastically_monotone(&self, tol: f64) -> bool {
        let steps = match &self.transitions {
            Transitions::Homogeneous(_) => 1,
            Transitions::PerStep(ms) => ms.len(),
        };
        let n = self.n_levels();
        (0..steps).all(|t| {
            (1..n).all(|i| {
                let (lo, hi) = (self.row(i - 1, t), self.row(i, t));
                (1..n).all(|j| hi[j..].iter().sum::<f64>() >= lo[j..].iter().sum::<f64>() - tol)
            })
        })
    }

    /// Index of the level closest to `g`.
    pub fn nearest_level(&self, g: f64) -> usize {
        let mut best = 0;
        for (i, &l) in self.levels.iter().enumerate() {
            if (l - g).abs() < (self.levels[best] - g).abs() {
                best = i;
            }
        }
        best
    }

    /// Level-index path of length `horizon` starting at `start`.
    pub fn sample_path(&self, start: usize, horizon: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_path_with(start, horizon, &mut rng)
    }

    pub fn sample_path_with<R: Rng + ?Sized>(
        &self,
        start: usize,
        horizon: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let mut path = Vec::with_capacity(horizon);
        if horizon == 0 {
            return path;
        }
        path.push(start);
        for t in 1..horizon {
            let row = self.row(path[t - 1], t - 1);
            path.push(sample_index(row, rng));
        }
        path
    }

    pub fn values(&self, path: &[usize]) -> Vec<f64> {
        path.iter().map(|&i| self.levels[i]).collect()
    }
}

fn check_matrix(m: &Matrix, n: usize, label: &str, out: &mut Vec<String>) {
    if m.len() != n {
        out.push(format!("{label}: expected {n} rows, got {}", m.len()));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            out.push(format!("{label} row {i}: expected {n} entries, got {}", row.len()));
            continue;
        }
        if row.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
            out.push(format!("{label} row {i}: probabilities must be finite and >= 0"));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            out.push(format!("{label} row {i}: sums to {s}, not 1"));
        }
    }
}

fn sample_index<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

/// Hourly series with an optional demand-limit column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSeries {
    pub label: String,
    /// Hour of day of the first reading.
    pub start_hour: usize,
    pub values: Vec<f64>,
    pub demand_max: Option<Vec<f64>>,
}

impl GenerationSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let s = Self { label: label.into(), start_hour: 0, values, demand_max: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::Input(format!(
                "series '{}' needs at least 2 readings, got {}",
                self.label,
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::Input(format!(
                "series '{}': reading {i} is negative or not finite",
                self.label
            )));
        }
        if let Some(d) = &self.demand_max {
            if d.len() != self.values.len() {
                return Err(Error::Input("demand column length differs from generation".into()));
            }
            if let Some(i) = d.iter().position(|&v| !(v.is_finite() && v >= 0.0)) {
                return Err(Error::Input(format!("demand reading {i} is negative or not finite")));
            }
        }
        Ok(())
    }
}
