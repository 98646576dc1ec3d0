use crate::error::{Error, Result};

use super::{GenerationChain, Matrix, Transitions};

/// Equal-mass quantile binning of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    /// Upper edges of all but the last raw bin.
    edges: Vec<f64>,
    /// Raw bin index to level index (empty raw bins are dropped).
    remap: Vec<usize>,
    /// Mean of the members of each non-empty bin.
    pub levels: Vec<f64>,
}

impl Binning {
    pub fn fit(values: &[f64], n_levels: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("cannot bin an empty series".into()));
        }
        if n_levels == 0 {
            return Err(Error::Input("number of levels must be >= 1".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut edges: Vec<f64> =
            (1..n_levels).map(|k| quantile(&sorted, k as f64 / n_levels as f64)).collect();
        edges.dedup();

        let raw_bins = edges.len() + 1;
        let mut sums = vec![0.0; raw_bins];
        let mut counts = vec![0usize; raw_bins];
        for &v in values {
            let b = raw_bin(&edges, v);
            sums[b] += v;
            counts[b] += 1;
        }
        let mut remap = vec![usize::MAX; raw_bins];
        let mut levels = Vec::new();
        for b in 0..raw_bins {
            if counts[b] > 0 {
                remap[b] = levels.len();
                levels.push(sums[b] / counts[b] as f64);
            }
        }
        // Empty raw bins inherit the nearest non-empty bin below (or above for the first).
        let first = remap.iter().copied().find(|&r| r != usize::MAX).unwrap_or(0);
        let mut last = first;
        for r in remap.iter_mut() {
            if *r == usize::MAX {
                *r = last;
            } else {
                last = *r;
            }
        }
        Ok(Self { edges, remap, levels })
    }

    pub fn assign(&self, v: f64) -> usize {
        self.remap[raw_bin(&self.edges, v)]
    }
}

fn raw_bin(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e < v)
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

fn normalize_rows(counts: &[Vec<f64>], smoothing: f64) -> Vec<Option<Vec<f64>>> {
    counts
        .iter()
        .map(|row| {
            let smoothed: Vec<f64> = row.iter().map(|&c| c + smoothing).collect();
            let total: f64 = smoothed.iter().sum();
            (total > 0.0).then(|| smoothed.iter().map(|&c| c / total).collect())
        })
        .collect()
}

fn self_loop(n: usize, i: usize) -> Vec<f64> {
    (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
}

fn check_inputs(values: &[f64], n_levels: usize, smoothing: f64) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::Input(format!(
            "fitting needs at least 2 readings, got {}",
            values.len()
        )));
    }
    if n_levels < 2 {
        return Err(Error::Input(format!("n_levels must be >= 2, got {n_levels}")));
    }
    if !(smoothing.is_finite() && smoothing >= 0.0) {
        return Err(Error::Input(format!("smoothing must be >= 0, got {smoothing}")));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Input("readings must be finite and >= 0".into()));
    }
    Ok(())
}

/// Time-homogeneous chain from consecutive pairs of `values`.
///
/// Rows that see no transitions and get no smoothing become self-loops.
pub fn fit_chain(values: &[f64], n_levels: usize, smoothing: f64) -> Result<GenerationChain> {
    check_inputs(values, n_levels, smoothing)?;
    let binning = Binning::fit(values, n_levels)?;
    let n = binning.levels.len();
    let idx: Vec<usize> = values.iter().map(|&v| binning.assign(v)).collect();
    let mut counts = vec![vec![0.0; n]; n];
    for w in idx.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    let matrix: Matrix = normalize_rows(&counts, smoothing)
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.unwrap_or_else(|| self_loop(n, i)))
        .collect();
    GenerationChain::new(binning.levels, Transitions::Homogeneous(matrix))
}

/// Chain with one matrix per position in a `period`-step cycle (hour of day for 24).
///
/// `phase` is the cycle position of `values[0]`. Rows with no data at a given position fall
/// back to the pooled row across positions, then to a self-loop.
pub fn fit_chain_per_step(
    values: &[f64],
    n_levels: usize,
    smoothing: f64,
    period: usize,
    phase: usize,
) -> Result<GenerationChain> {
    check_inputs(values, n_levels, smoothing)?;
    if period == 0 {
        return Err(Error::Input("period must be >= 1".into()));
    }
    let binning = Binning::fit(values, n_levels)?;
    let n = binning.levels.len();
    let idx: Vec<usize> = values.iter().map(|&v| binning.assign(v)).collect();
    let mut pooled = vec![vec![0.0; n]; n];
    let mut per = vec![vec![vec![0.0; n]; n]; period];
    for (k, w) in idx.windows(2).enumerate() {
        per[(k + phase) % period][w[0]][w[1]] += 1.0;
        pooled[w[0]][w[1]] += 1.0;
    }
    let pooled = normalize_rows(&pooled, smoothing);
    let matrices = per
        .iter()
        .map(|counts| {
            let has_data: Vec<bool> = counts.iter().map(|r| r.iter().sum::<f64>() > 0.0).collect();
            normalize_rows(counts, smoothing)
                .into_iter()
                .enumerate()
                .map(|(i, r)| match r {
                    Some(r) if has_data[i] => r,
                    _ => pooled[i].clone().unwrap_or_else(|| self_loop(n, i)),
                })
                .collect()
        })
        .collect();
    GenerationChain::new(binning.levels, Transitions::PerStep(matrices))
}
