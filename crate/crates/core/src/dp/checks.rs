//! Executable checks of the structural properties of solved tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::grid::StateGrid;
use super::table::ValueTable;
use super::{EntryKind, QSlice, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Soc,
    Gen,
    Peak,
    /// SoC and peak increasing together.
    Diagonal,
    /// SoC increasing while peak decreases.
    AntiDiagonal,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Axis::Soc => "soc",
            Axis::Gen => "gen",
            Axis::Peak => "peak",
            Axis::Diagonal => "diagonal",
            Axis::AntiDiagonal => "anti-diagonal",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    /// (soc, gen, peak) grid indices.
    pub index: (usize, usize, usize),
    /// Amount by which the tolerance was exceeded.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl CheckReport {
    fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), checked: 0, violations: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn worst(&self) -> Option<&Violation> {
        self.violations.iter().max_by(|a, b| a.excess.total_cmp(&b.excess))
    }

    fn record(&mut self, t: usize, index: (usize, usize, usize), excess: f64) {
        self.checked += 1;
        if excess > 0.0 {
            self.violations.push(Violation { t, index, excess });
        }
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} checked, {} violations", self.name, self.checked, self.violations.len())?;
        if let Some(w) = self.worst() {
            write!(
                f,
                " (worst {:.3e} at t={} soc={} gen={} peak={})",
                w.excess, w.t, w.index.0, w.index.1, w.index.2
            )?;
        }
        Ok(())
    }
}

fn is_uniform(points: &[f64]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let h = points[1] - points[0];
    points.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1e-300))
}

/// Discrete midpoint concavity V(x−h) + V(x+h) ≤ 2V(x) + tol along `axis`, at every step
/// and every fixed value of the other coordinates.
pub fn check_concavity(values: &ValueTable, grid: &StateGrid, axis: Axis, tol: f64) -> Result<CheckReport> {
    let (ns, ng, nc) = values.dims;
    let (ds, dc): (isize, isize) = match axis {
        Axis::Soc => (1, 0),
        Axis::Peak => (0, 1),
        Axis::Diagonal => (1, 1),
        Axis::AntiDiagonal => (1, -1),
        Axis::Gen => {
            return Err(Error::UnsupportedGrid("concavity is only defined along soc and peak".into()))
        }
    };
    if (ds != 0 && !is_uniform(&grid.soc)) || (dc != 0 && !is_uniform(&grid.peak)) {
        return Err(Error::UnsupportedGrid(format!("{axis} concavity check needs uniform spacing")));
    }
    let mut report = CheckReport::new(format!("concavity[{axis}]"));
    for t in 0..=values.horizon {
        for i_g in 0..ng {
            for i_s in 0..ns as isize {
                for i_c in 0..nc as isize {
                    let (s0, c0, s2, c2) = (i_s - ds, i_c - dc, i_s + ds, i_c + dc);
                    let inside = |s: isize, c: isize| s >= 0 && c >= 0 && s < ns as isize && c < nc as isize;
                    if !inside(s0, c0) || !inside(s2, c2) {
                        continue;
                    }
                    let v = |s: isize, c: isize| values.get(t, s as usize, i_g, c as usize);
                    let excess = v(s0, c0) + v(s2, c2) - 2.0 * v(i_s, i_c) - tol;
                    report.record(t, (i_s as usize, i_g, i_c as usize), excess);
                }
            }
        }
    }
    Ok(report)
}

/// Flags adjacent grid points where V decreases by more than `tol` along `axis`.
pub fn check_monotonicity(values: &ValueTable, axis: Axis, tol: f64) -> Result<CheckReport> {
    let (ns, ng, nc) = values.dims;
    let step = match axis {
        Axis::Soc => (1, 0, 0),
        Axis::Gen => (0, 1, 0),
        Axis::Peak => (0, 0, 1),
        _ => return Err(Error::UnsupportedGrid("monotonicity is checked along soc, gen or peak".into())),
    };
    let mut report = CheckReport::new(format!("monotonicity[{axis}]"));
    for t in 0..=values.horizon {
        for i_g in 0..ng - step.1 {
            for i_s in 0..ns - step.0 {
                for i_c in 0..nc - step.2 {
                    let lo = values.get(t, i_s, i_g, i_c);
                    let hi = values.get(t, i_s + step.0, i_g + step.1, i_c + step.2);
                    report.record(t, (i_s, i_g, i_c), lo - hi - tol);
                }
            }
        }
    }
    Ok(report)
}

/// Boundary-or-stationary test of the stored battery action.
///
/// A stored action passes if it sits on the feasible interval's boundary, or if Q at the
/// nearest evaluated battery powers on either side (same consumption) is not higher than Q
/// at the stored action by more than `tol`, i.e. the discrete gradient along e changes sign.
pub fn check_threshold_structure(slices: &[QSlice], tol: f64) -> CheckReport {
    const BOUNDARY_TOL: f64 = 1e-9;
    let mut report = CheckReport::new("threshold structure");
    for sl in slices {
        let stored = sl.stored_entry();
        let e = stored.action.battery;
        let (lo, hi) = sl.interval;
        if (e - lo).abs() <= BOUNDARY_TOL || (e - hi).abs() <= BOUNDARY_TOL {
            report.record(sl.t, sl.index, 0.0);
            continue;
        }
        let mut below: Option<(f64, f64)> = None;
        let mut above: Option<(f64, f64)> = None;
        for (k, en) in sl.entries.iter().enumerate() {
            if k == sl.stored || en.action.demand != stored.action.demand {
                continue;
            }
            let x = en.action.battery;
            if x < e && below.map_or(true, |(b, _)| x > b) {
                below = Some((x, en.q));
            }
            if x > e && above.map_or(true, |(a, _)| x < a) {
                above = Some((x, en.q));
            }
        }
        let rise = [below, above]
            .iter()
            .flatten()
            .map(|&(_, q)| q - stored.q)
            .fold(f64::NEG_INFINITY, f64::max);
        report.record(sl.t, sl.index, rise - tol);
    }
    report
}

/// Concavity of Q in the action along each battery and per-device demand line of the grid.
pub fn check_q_concavity(slices: &[QSlice], tol: f64) -> CheckReport {
    let mut report = CheckReport::new("q concavity");
    for sl in slices {
        let grid: Vec<_> = sl.entries.iter().filter(|e| e.kind == EntryKind::Grid).collect();
        let k = grid.first().map_or(0, |e| e.action.demand.len());
        // Lines along e (demand fixed) and along each device's demand (everything else fixed).
        let mut lines: Vec<Vec<(f64, f64)>> = Vec::new();
        for axis in 0..=k {
            let key = |a: &crate::model::ControlAction| -> Vec<u64> {
                let mut v: Vec<u64> = a.demand.iter().map(|x| x.to_bits()).collect();
                v.push(a.battery.to_bits());
                if axis == 0 {
                    v.pop();
                } else {
                    v.remove(axis - 1);
                }
                v
            };
            let mut groups: std::collections::BTreeMap<Vec<u64>, Vec<(f64, f64)>> = Default::default();
            for en in &grid {
                let pos = if axis == 0 { en.action.battery } else { en.action.demand[axis - 1] };
                groups.entry(key(&en.action)).or_default().push((pos, en.q));
            }
            lines.extend(groups.into_values());
        }
        let mut worst = f64::NEG_INFINITY;
        for mut line in lines {
            line.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in line.windows(3) {
                let (x1, q1) = w[0];
                let (x2, q2) = w[1];
                let (x3, q3) = w[2];
                let chord = q1 + (x2 - x1) / (x3 - x1) * (q3 - q1);
                worst = worst.max(chord - q2 - tol);
            }
        }
        report.record(sl.t, sl.index, worst);
    }
    report
}

/// |V_t(x) − max_u Q_t(x, u)| ≤ tol, with the stored action attaining V_t(x).
pub fn check_bellman(solution: &Solution, slices: &[QSlice], tol: f64) -> CheckReport {
    let mut report = CheckReport::new("bellman consistency");
    for sl in slices {
        let (i_s, i_g, i_c) = sl.index;
        let v = solution.values.get(sl.t, i_s, i_g, i_c);
        let gap = (v - sl.max_q()).abs().max((v - sl.stored_entry().q).abs());
        report.record(sl.t, sl.index, gap - tol);
    }
    report
}
