//! Low-rank plus sparse comparison estimator:
//!
//! ```text
//! min_{L,S} (1/n) sum_i (y_i - (L + S)[row_i, col_i])^2 + lambda1 ||L||_* + lambda2 ||S||_1
//! ```
//!
//! solved with the same accelerated proximal gradient scheme as
//! [`crate::solver`], stepping both blocks jointly: nuclear prox on `L`,
//! entrywise soft-thresholding on `S`. The gradient in `S` vanishes off the
//! observed cells, so `S` is kept only on the observed support.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ObservationSet, ParameterMatrix};
use crate::prox::{project_box, prox_nuclear_with_spectrum, shrink, singular_values, ProxOutput};
use crate::solver::SolverConfig;
use crate::Matrix;

const RESIDUAL_CHECK_EVERY: usize = 10;

/// Sparse `p x q` matrix given by its non-zero cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCells {
    pub p: usize,
    pub q: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseCells {
    pub fn to_dense(&self) -> Matrix {
        let mut m = DMatrix::zeros(self.p, self.q);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
        }
        m
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.2.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.2.abs()))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone)]
pub struct LrpsResult {
    pub l_hat: ParameterMatrix,
    pub s_hat: SparseCells,
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    pub final_residual_l: f64,
    pub final_residual_s: f64,
    pub final_step_curvature: f64,
}

/// Observed cells in first-appearance order, and the slot of every entry.
struct Support {
    cells: Vec<(usize, usize)>,
    slot_of_entry: Vec<usize>,
}

impl Support {
    fn new(obs: &ObservationSet) -> Self {
        let mut index = HashMap::new();
        let mut cells = Vec::new();
        let slot_of_entry = obs
            .iter()
            .map(|e| {
                *index.entry((e.row, e.col)).or_insert_with(|| {
                    cells.push((e.row, e.col));
                    cells.len() - 1
                })
            })
            .collect();
        Self { cells, slot_of_entry }
    }
}

struct Problem<'a> {
    obs: &'a ObservationSet,
    support: Support,
    lambda1: f64,
    lambda2: f64,
}

impl Problem<'_> {
    fn loss(&self, l: &Matrix, s: &[f64]) -> f64 {
        let total: f64 = self
            .obs
            .iter()
            .zip(&self.support.slot_of_entry)
            .map(|(e, &k)| {
                let r = e.value - l[(e.row, e.col)] - s[k];
                r * r
            })
            .sum();
        total / self.obs.n() as f64
    }

    /// Gradient of the loss; identical in both blocks, returned once as a
    /// dense matrix and once on the support.
    fn gradient(&self, l: &Matrix, s: &[f64]) -> (Matrix, Vec<f64>) {
        let scale = -2.0 / self.obs.n() as f64;
        let mut g = DMatrix::zeros(self.obs.p(), self.obs.q());
        let mut gs = vec![0.0; s.len()];
        for (e, &k) in self.obs.iter().zip(&self.support.slot_of_entry) {
            let d = scale * (e.value - l[(e.row, e.col)] - s[k]);
            g[(e.row, e.col)] += d;
            gs[k] += d;
        }
        (g, gs)
    }

    fn objective(&self, l: &Matrix, nuc_l: f64, s: &[f64]) -> f64 {
        self.loss(l, s) + self.lambda1 * nuc_l + self.lambda2 * s.iter().map(|x| x.abs()).sum::<f64>()
    }

    fn residuals(&self, l: &Matrix, s: &[f64], curvature: f64) -> Result<(f64, f64)> {
        let (g, gs) = self.gradient(l, s);
        let next_l = prox_nuclear_with_spectrum(&(l - g / curvature), self.lambda1 / curvature)?;
        let res_l = (l - next_l.matrix).norm();
        let res_s = s
            .iter()
            .zip(&gs)
            .map(|(x, d)| {
                let next = shrink(x - d / curvature, self.lambda2 / curvature);
                (x - next).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        Ok((res_l, res_s))
    }
}

fn l_step(w: &Matrix, gamma: f64, config: &SolverConfig) -> Result<ProxOutput> {
    let out = prox_nuclear_with_spectrum(w, gamma)?;
    if !config.box_projection {
        return Ok(out);
    }
    let clipped = project_box(&out.matrix, config.eta)?;
    let sv = singular_values(&clipped)?;
    Ok(ProxOutput {
        matrix: clipped,
        singular_values: sv,
    })
}

/// Fits `(L, S)` from zero. `config.lambda` is ignored in favour of
/// `lambda1` / `lambda2`.
pub fn solve_lrps(obs: &ObservationSet, lambda1: f64, lambda2: f64, config: &SolverConfig) -> Result<LrpsResult> {
    config.validate()?;
    for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::arg(format!("{name} must be nonnegative, got {v}")));
        }
    }
    if obs.is_empty() {
        return Err(Error::arg("no observations"));
    }
    let problem = Problem {
        obs,
        support: Support::new(obs),
        lambda1,
        lambda2,
    };
    let (p, q) = (obs.p(), obs.q());
    let m = problem.support.cells.len();

    let mut l = DMatrix::zeros(p, q);
    let mut s = vec![0.0; m];
    let mut nuc_l = 0.0;
    let mut vl = l.clone();
    let mut vs = s.clone();
    let mut curvature = config.l_init;
    let mut objective_trace = Vec::with_capacity(config.max_iter);
    let mut iterations_run = 0;

    for t in 1..=config.max_iter {
        let obj = problem.objective(&l, nuc_l, &s);
        if !obj.is_finite() {
            return Err(Error::numeric(format!("non-finite objective at iteration {t}")));
        }
        let (l_prev, s_prev) = (l, s);
        let (g_prev, gs_prev) = problem.gradient(&l_prev, &s_prev);
        let (g_v, gs_v) = problem.gradient(&vl, &vs);

        let mut backtracks = 0;
        let (l_new, s_new, new_obj) = loop {
            let step_l = l_step(&(&vl - &g_v / curvature), lambda1 / curvature, config)?;
            let mut s_try: Vec<f64> = vs
                .iter()
                .zip(&gs_v)
                .map(|(x, d)| shrink(x - d / curvature, lambda2 / curvature))
                .collect();
            if config.box_projection {
                for x in &mut s_try {
                    *x = x.clamp(-config.eta, config.eta);
                }
            }
            let dl = &step_l.matrix - &l_prev;
            let ds: Vec<f64> = s_try.iter().zip(&s_prev).map(|(a, b)| a - b).collect();
            let new_obj = problem.objective(&step_l.matrix, step_l.nuclear_norm(), &s_try);
            let linear = g_prev.dot(&dl) + gs_prev.iter().zip(&ds).map(|(g, d)| g * d).sum::<f64>();
            let dist2 = dl.norm_squared() + ds.iter().map(|d| d * d).sum::<f64>();
            let delta = new_obj - obj - linear - 0.5 * curvature * dist2;
            if !delta.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite backtracking criterion at iteration {t}"
                )));
            }
            curvature *= config.beta;
            backtracks += 1;
            if delta <= config.bt_tolerance {
                nuc_l = step_l.nuclear_norm();
                break (step_l.matrix, s_try, new_obj);
            }
            if backtracks >= config.max_backtracks {
                return Err(Error::numeric(format!(
                    "backtracking did not terminate at iteration {t} (curvature {curvature:e})"
                )));
            }
        };
        curvature /= config.beta;

        let momentum = t as f64 / (t as f64 + 3.0);
        vl = &l_new + (&l_new - &l_prev) * momentum;
        vs = s_new
            .iter()
            .zip(&s_prev)
            .map(|(a, b)| a + momentum * (a - b))
            .collect();
        l = l_new;
        s = s_new;
        objective_trace.push(new_obj);
        iterations_run = t;

        if config.fixed_point_tol > 0.0 && t % RESIDUAL_CHECK_EVERY == 0 {
            let (rl, rs) = problem.residuals(&l, &s, curvature)?;
            if rl.max(rs) <= config.fixed_point_tol {
                break;
            }
        }
    }

    let (final_residual_l, final_residual_s) = problem.residuals(&l, &s, curvature)?;
    let entries = problem
        .support
        .cells
        .iter()
        .zip(&s)
        .filter(|(_, v)| **v != 0.0)
        .map(|(&(r, c), &v)| (r, c, v))
        .collect();
    Ok(LrpsResult {
        l_hat: ParameterMatrix::new(l, config.eta)?,
        s_hat: SparseCells { p, q, entries },
        objective_trace,
        iterations_run,
        final_residual_l,
        final_residual_s,
        final_step_curvature: curvature,
    })
}

/// Objective of the low-rank plus sparse problem at a given `(L, S)`.
pub fn lrps_objective(obs: &ObservationSet, l: &Matrix, s: &Matrix, lambda1: f64, lambda2: f64) -> Result<f64> {
    obs.check_shape(l)?;
    obs.check_shape(s)?;
    let loss: f64 = obs
        .iter()
        .map(|e| (e.value - l[(e.row, e.col)] - s[(e.row, e.col)]).powi(2))
        .sum::<f64>()
        / obs.n() as f64;
    let nuc: f64 = singular_values(l)?.iter().sum();
    let l1: f64 = s.iter().map(|x| x.abs()).sum();
    Ok(loss + lambda1 * nuc + lambda2 * l1)
}
