use serde::{Deserialize, Serialize};

use crate::model::ControlAction;

use super::grid::StateGrid;

/// V_t over (t, soc, gen, peak) for t = 0..=T. Stored as `[t][gen][soc][peak]` so each
/// (t, gen) slice is contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub horizon: usize,
    pub dims: (usize, usize, usize),
    pub data: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(horizon: usize, grid: &StateGrid) -> Self {
        let dims = grid.dims();
        Self { horizon, dims, data: vec![0.0; (horizon + 1) * dims.0 * dims.1 * dims.2] }
    }

    #[inline]
    pub fn index(&self, t: usize, i_s: usize, i_g: usize, i_c: usize) -> usize {
        let (ns, ng, nc) = self.dims;
        ((t * ng + i_g) * ns + i_s) * nc + i_c
    }

    #[inline]
    pub fn get(&self, t: usize, i_s: usize, i_g: usize, i_c: usize) -> f64 {
        self.data[self.index(t, i_s, i_g, i_c)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i_s: usize, i_g: usize, i_c: usize, v: f64) {
        let k = self.index(t, i_s, i_g, i_c);
        self.data[k] = v;
    }

    /// Values at step `t` and generation level `i_g`, row-major over (soc, peak).
    #[inline]
    pub fn slice(&self, t: usize, i_g: usize) -> &[f64] {
        let (ns, _, nc) = self.dims;
        let start = self.index(t, 0, i_g, 0);
        &self.data[start..start + ns * nc]
    }

    pub(crate) fn stage_mut(&mut self, t: usize) -> &mut [f64] {
        let (ns, ng, nc) = self.dims;
        let len = ns * ng * nc;
        &mut self.data[t * len..(t + 1) * len]
    }
}

/// Maximizing action for every (t, soc, gen, peak) with t < T, same layout as [`ValueTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub horizon: usize,
    pub dims: (usize, usize, usize),
    pub actions: Vec<ControlAction>,
}

impl PolicyTable {
    #[inline]
    pub fn index(&self, t: usize, i_s: usize, i_g: usize, i_c: usize) -> usize {
        let (ns, ng, nc) = self.dims;
        ((t * ng + i_g) * ns + i_s) * nc + i_c
    }

    #[inline]
    pub fn get(&self, t: usize, i_s: usize, i_g: usize, i_c: usize) -> &ControlAction {
        &self.actions[self.index(t, i_s, i_g, i_c)]
    }
}
