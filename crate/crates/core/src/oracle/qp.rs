//! Primal-dual interior-point method (Mehrotra predictor-corrector) for
//! min ½xᵀHx + cᵀx subject to Ax ≤ b, with diagonal H and sparse rows of A.

use nalgebra::{DMatrix, DVector};

pub(crate) struct Qp {
    pub h_diag: Vec<f64>,
    pub c: Vec<f64>,
    /// Rows (aᵢ, bᵢ) of aᵢᵀx ≤ bᵢ, with aᵢ given as (column, coefficient) pairs.
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
}

pub(crate) struct QpResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITERS: usize = 200;
const STEP_FRACTION: f64 = 0.995;
const RESIDUAL_TOL: f64 = 1e-11;
const GAP_TOL: f64 = 1e-14;

impl Qp {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|(a, _)| a.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    fn at_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for ((a, _), &yi) in self.rows.iter().zip(y) {
            for &(j, v) in a {
                out[j] += v * yi;
            }
        }
        out
    }

    fn normal_matrix(&self, w: &[f64], shift: f64) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            m[(j, j)] = self.h_diag[j] + shift;
        }
        for ((a, _), &wi) in self.rows.iter().zip(w) {
            for &(j, vj) in a {
                for &(k, vk) in a {
                    m[(j, k)] += wi * vj * vk;
                }
            }
        }
        m
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).filter(|(_, &d)| d < 0.0).map(|(&x, &d)| -x / d).fold(1.0, f64::min)
}

pub(crate) fn solve(qp: &Qp, x0: &[f64]) -> QpResult {
    let n = qp.n();
    let m = qp.rows.len();
    let b: Vec<f64> = qp.rows.iter().map(|(_, bi)| *bi).collect();
    let mut x = x0.to_vec();
    let ax = qp.a_mul(&x);
    let mut s: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).max(1.0)).collect();
    let mut lam = vec![1.0; m];
    let scale = 1.0 + qp.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERS {
        let atl = qp.at_mul(&lam);
        let r_d: Vec<f64> = (0..n).map(|j| qp.h_diag[j] * x[j] + qp.c[j] + atl[j]).collect();
        let ax = qp.a_mul(&x);
        let r_p: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - b[i]).collect();
        let mu = s.iter().zip(&lam).map(|(a, b)| a * b).sum::<f64>() / m as f64;
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if inf(&r_p) <= RESIDUAL_TOL && inf(&r_d) <= RESIDUAL_TOL * scale && mu <= GAP_TOL * scale {
            converged = true;
            break;
        }
        iterations += 1;

        let w: Vec<f64> = (0..m).map(|i| lam[i] / s[i]).collect();
        let chol = {
            let mut shift = 0.0;
            loop {
                if let Some(c) = qp.normal_matrix(&w, shift).cholesky() {
                    break Some(c);
                }
                shift = if shift == 0.0 { 1e-12 } else { shift * 100.0 };
                if shift > 1e-2 {
                    break None;
                }
            }
        };
        let Some(chol) = chol else { break };

        // Newton direction for complementarity residual r_c (= SΛe − target).
        let direction = |r_c: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            let y: Vec<f64> = (0..m).map(|i| (r_c[i] - lam[i] * r_p[i]) / s[i]).collect();
            let aty = qp.at_mul(&y);
            let rhs = DVector::from_iterator(n, (0..n).map(|j| -r_d[j] + aty[j]));
            let dx: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
            let adx = qp.a_mul(&dx);
            let ds: Vec<f64> = (0..m).map(|i| -r_p[i] - adx[i]).collect();
            let dl: Vec<f64> = (0..m).map(|i| (-r_c[i] - lam[i] * ds[i]) / s[i]).collect();
            (dx, ds, dl)
        };

        let rc_aff: Vec<f64> = (0..m).map(|i| s[i] * lam[i]).collect();
        let (_, ds_a, dl_a) = direction(&rc_aff);
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&lam, &dl_a));
        let mu_aff = (0..m)
            .map(|i| (s[i] + alpha_aff * ds_a[i]) * (lam[i] + alpha_aff * dl_a[i]))
            .sum::<f64>()
            / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc: Vec<f64> = (0..m).map(|i| s[i] * lam[i] + ds_a[i] * dl_a[i] - sigma * mu).collect();
        let (dx, ds, dl) = direction(&rc);
        let alpha = STEP_FRACTION * max_step(&s, &ds).min(max_step(&lam, &dl));
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..m {
            s[i] = (s[i] + alpha * ds[i]).max(1e-300);
            lam[i] = (lam[i] + alpha * dl[i]).max(1e-300);
        }
    }
    QpResult { x, iterations, converged }
}
