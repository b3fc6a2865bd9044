//! Accelerated proximal gradient with backtracking for
//!
//! ```text
//! min_B  F(B) + lambda * ||B||_*,   F(B) = (1/n) sum_i rho(y_i - B[row_i, col_i])
//! ```
//!
//! One outer iteration `t`:
//!
//! ```text
//! obj    <- F(B) + lambda ||B||_*
//! B_prev <- B
//! repeat
//!     B     <- prox_{lambda/L}(v - grad F(v) / L)
//!     delta <- F(B) + lambda ||B||_* - obj - <grad F(B_prev), B - B_prev> - L/2 ||B - B_prev||_F^2
//!     L     <- beta L
//! until delta <= bt_tolerance
//! L <- L / beta
//! v <- B + t/(t+3) (B - B_prev)
//! ```
//!
//! The sufficient-decrease test linearizes at `B_prev`, not at `v`, and the
//! curvature estimate never decreases.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::losses::{empirical_risk, risk_gradient, LossSpec};
use crate::model::{ObservationSet, ParameterMatrix};
use crate::prox::{project_box, prox_nuclear_with_spectrum, singular_values, ProxOutput};
use crate::Matrix;

/// How often (in outer iterations) the fixed-point residual is evaluated when
/// early stopping is enabled.
const RESIDUAL_CHECK_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Nuclear-norm penalty.
    pub lambda: f64,
    /// Initial curvature estimate `L`.
    pub l_init: f64,
    /// Backtracking growth factor, `> 1`.
    pub beta: f64,
    /// A step is accepted once `delta <= bt_tolerance`.
    pub bt_tolerance: f64,
    pub max_iter: usize,
    /// Stop once the fixed-point residual drops to this value; 0 runs the
    /// full `max_iter` budget.
    pub fixed_point_tol: f64,
    /// Clip iterates to `[-eta, eta]` after each prox step.
    pub box_projection: bool,
    /// Box bound carried by the estimate.
    pub eta: f64,
    /// Backtracking steps allowed in one outer iteration before giving up.
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            l_init: 0.1,
            beta: 1.2,
            bt_tolerance: 1e-3,
            max_iter: 1000,
            fixed_point_tol: 0.0,
            box_projection: false,
            eta: 10.0,
            max_backtracks: 1000,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::arg(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.l_init > 0.0) || !self.l_init.is_finite() {
            return Err(Error::arg(format!("l_init must be positive, got {}", self.l_init)));
        }
        if !(self.beta > 1.0) || !self.beta.is_finite() {
            return Err(Error::arg(format!("beta must exceed 1, got {}", self.beta)));
        }
        if self.bt_tolerance.is_nan() {
            return Err(Error::arg("bt_tolerance is NaN"));
        }
        if self.max_iter == 0 {
            return Err(Error::arg("max_iter must be positive"));
        }
        if !(self.fixed_point_tol >= 0.0) {
            return Err(Error::arg("fixed_point_tol must be nonnegative"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::arg(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_backtracks == 0 {
            return Err(Error::arg("max_backtracks must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub estimate: ParameterMatrix,
    /// `F(B) + lambda ||B||_*` after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Largest backtracking `delta` accepted in each outer iteration.
    pub accepted_deltas: Vec<f64>,
    pub iterations_run: usize,
    pub final_fixed_point_residual: f64,
    pub final_step_curvature: f64,
}

/// `F(B) + lambda ||B||_*`.
pub fn penalized_objective(spec: &LossSpec, obs: &ObservationSet, b: &Matrix, lambda: f64) -> Result<f64> {
    let nuc: f64 = singular_values(b)?.iter().sum();
    Ok(empirical_risk(spec, obs, b)? + lambda * nuc)
}

/// `|| B - prox_{lambda/c}(B - grad F(B) / c) ||_F` for curvature `c`; zero
/// exactly at minimizers.
pub fn fixed_point_residual(
    spec: &LossSpec,
    obs: &ObservationSet,
    b: &Matrix,
    lambda: f64,
    curvature: f64,
) -> Result<f64> {
    if !(curvature > 0.0) {
        return Err(Error::arg(format!("curvature must be positive, got {curvature}")));
    }
    let g = risk_gradient(spec, obs, b)?;
    let step = b - g / curvature;
    let next = prox_nuclear_with_spectrum(&step, lambda / curvature)?;
    Ok((b - next.matrix).norm())
}

fn prox_step(w: &Matrix, gamma: f64, config: &SolverConfig) -> Result<ProxOutput> {
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

/// Solves the penalized problem for a differentiable loss (Huber or
/// quadratic). Starts from `init`, or from zero when none is given.
pub fn solve(
    spec: &LossSpec,
    obs: &ObservationSet,
    config: &SolverConfig,
    init: Option<&ParameterMatrix>,
) -> Result<SolveResult> {
    config.validate()?;
    if !spec.is_differentiable() {
        return Err(Error::arg("solve needs a differentiable loss; use solve_absolute"));
    }
    if obs.is_empty() {
        return Err(Error::arg("no observations"));
    }
    let (p, q) = (obs.p(), obs.q());
    let mut b = match init {
        Some(m) => {
            obs.check_shape(&m.data)?;
            m.data.clone()
        }
        None => DMatrix::zeros(p, q),
    };
    let lambda = config.lambda;
    let mut nuc_b: f64 = singular_values(&b)?.iter().sum();
    let mut v = b.clone();
    let mut curvature = config.l_init;

    let mut objective_trace = Vec::with_capacity(config.max_iter);
    let mut accepted_deltas = Vec::with_capacity(config.max_iter);
    let mut iterations_run = 0;

    for t in 1..=config.max_iter {
        let obj = empirical_risk(spec, obs, &b)? + lambda * nuc_b;
        if !obj.is_finite() {
            return Err(Error::numeric(format!("non-finite objective at iteration {t}")));
        }
        let b_prev = b;
        let grad_prev = risk_gradient(spec, obs, &b_prev)?;
        let grad_v = risk_gradient(spec, obs, &v)?;

        let mut backtracks = 0;
        let (b_new, new_obj, delta) = loop {
            let w = &v - &grad_v / curvature;
            let step = prox_step(&w, lambda / curvature, config)?;
            let diff = &step.matrix - &b_prev;
            let new_obj = empirical_risk(spec, obs, &step.matrix)? + lambda * step.nuclear_norm();
            let delta =
                new_obj - obj - grad_prev.dot(&diff) - 0.5 * curvature * diff.norm_squared();
            if !delta.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite backtracking criterion at iteration {t}"
                )));
            }
            curvature *= config.beta;
            backtracks += 1;
            if delta <= config.bt_tolerance {
                nuc_b = step.nuclear_norm();
                break (step.matrix, new_obj, delta);
            }
            if backtracks >= config.max_backtracks {
                return Err(Error::numeric(format!(
                    "backtracking did not terminate at iteration {t} (curvature {curvature:e})"
                )));
            }
        };
        curvature /= config.beta;

        let momentum = t as f64 / (t as f64 + 3.0);
        v = &b_new + (&b_new - &b_prev) * momentum;
        b = b_new;
        objective_trace.push(new_obj);
        accepted_deltas.push(delta);
        iterations_run = t;

        if config.fixed_point_tol > 0.0
            && t % RESIDUAL_CHECK_EVERY == 0
            && fixed_point_residual(spec, obs, &b, lambda, curvature)? <= config.fixed_point_tol
        {
            break;
        }
    }

    let final_fixed_point_residual = fixed_point_residual(spec, obs, &b, lambda, curvature)?;
    Ok(SolveResult {
        estimate: ParameterMatrix::new(b, config.eta)?,
        objective_trace,
        accepted_deltas,
        iterations_run,
        final_fixed_point_residual,
        final_step_curvature: curvature,
    })
}

/// Default smoothing schedule for [`solve_absolute`].
pub const DEFAULT_ABSOLUTE_SCHEDULE: [f64; 5] = [1.0, 0.3, 0.1, 0.03, 0.01];

/// Absolute-value loss by Huber continuation: solves with `Huber(kappa_j)`
/// for each `kappa_j` of the decreasing schedule, warm-starting every stage
/// from the previous estimate.
///
/// `Huber(kappa) / (2 kappa)` tends to the absolute loss, so each stage runs
/// with `lambda * 2 kappa_j` and `bt_tolerance * 2 kappa_j` to stay on the
/// absolute-loss scale.
pub fn solve_absolute(
    obs: &ObservationSet,
    config: &SolverConfig,
    schedule: &[f64],
    init: Option<&ParameterMatrix>,
) -> Result<SolveResult> {
    if schedule.is_empty() {
        return Err(Error::arg("smoothing schedule is empty"));
    }
    if schedule.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
        return Err(Error::arg("smoothing parameters must be positive and finite"));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::arg("smoothing schedule must be strictly decreasing"));
    }
    let mut current = init.cloned();
    let mut last: Option<SolveResult> = None;
    let mut objective_trace = Vec::new();
    let mut accepted_deltas = Vec::new();
    let mut iterations = 0;
    for &kappa in schedule {
        let stage_config = SolverConfig {
            lambda: config.lambda * 2.0 * kappa,
            bt_tolerance: config.bt_tolerance * 2.0 * kappa,
            ..config.clone()
        };
        let res = solve(&LossSpec::Huber { kappa }, obs, &stage_config, current.as_ref())?;
        objective_trace.extend(res.objective_trace.iter().map(|o| o / (2.0 * kappa)));
        accepted_deltas.extend_from_slice(&res.accepted_deltas);
        iterations += res.iterations_run;
        current = Some(res.estimate.clone());
        last = Some(res);
    }
    let last = last.expect("schedule is non-empty");
    Ok(SolveResult {
        estimate: last.estimate,
        objective_trace,
        accepted_deltas,
        iterations_run: iterations,
        final_fixed_point_residual: last.final_fixed_point_residual,
        final_step_curvature: last.final_step_curvature,
    })
}

/// Dispatches to [`solve`] or [`solve_absolute`] (default schedule).
pub fn solve_any(
    spec: &LossSpec,
    obs: &ObservationSet,
    config: &SolverConfig,
    init: Option<&ParameterMatrix>,
) -> Result<SolveResult> {
    match spec {
        LossSpec::Absolute => solve_absolute(obs, config, &DEFAULT_ABSOLUTE_SCHEDULE, init),
        _ => solve(spec, obs, config, init),
    }
}
