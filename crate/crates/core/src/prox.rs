//! Singular-value soft-thresholding and box projection.
//!
//! `prox_nuclear(W, gamma) = argmin_B gamma * ||B||_* + 0.5 * ||B - W||_F^2`
//! is computed in closed form from a full SVD of `W`. In the solver the box
//! projection, when enabled, is applied after the nuclear prox; the two
//! operators do not commute.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::Matrix;

/// Thin SVD `W = U diag(sigma) Vt` with singular values in nonincreasing order.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(&self.singular_values)
    }

    /// `U diag(values) Vt` for replacement singular values.
    pub fn reconstruct_with(&self, values: &[f64]) -> Matrix {
        let mut scaled_u = self.u.clone();
        for (k, &s) in values.iter().enumerate() {
            scaled_u.column_mut(k).scale_mut(s);
        }
        scaled_u * &self.vt
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

fn check_finite(a: &Matrix) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric("matrix has non-finite entries"))
    }
}

fn to_faer(a: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Full thin SVD, with singular values nonincreasing.
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    check_finite(a)?;
    let (p, q) = a.shape();
    let m = p.min(q);
    if m == 0 {
        return Ok(SvdFactors {
            u: DMatrix::zeros(p, 0),
            singular_values: Vec::new(),
            vt: DMatrix::zeros(0, q),
        });
    }
    let dec = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::numeric(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (dec.U(), dec.S().column_vector(), dec.V());
    Ok(SvdFactors {
        u: DMatrix::from_fn(p, m, |i, k| u[(i, k)]),
        singular_values: (0..m).map(|k| s[k]).collect(),
        vt: DMatrix::from_fn(m, q, |k, j| v[(j, k)]),
    })
}

/// Singular values only, nonincreasing.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    check_finite(a)?;
    if a.nrows().min(a.ncols()) == 0 {
        return Ok(Vec::new());
    }
    to_faer(a)
        .singular_values()
        .map_err(|e| Error::numeric(format!("SVD did not converge: {e:?}")))
}

#[inline]
pub(crate) fn shrink(x: f64, gamma: f64) -> f64 {
    if x > gamma {
        x - gamma
    } else if x < -gamma {
        x + gamma
    } else {
        0.0
    }
}

/// Scalar soft-threshold `S_gamma(x)`.
pub fn soft_threshold(x: f64, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::arg(format!("threshold must be nonnegative, got {gamma}")));
    }
    Ok(shrink(x, gamma))
}

/// Output of the nuclear prox together with its singular values, which the
/// solver reuses as the nuclear norm of the new iterate.
#[derive(Debug, Clone)]
pub struct ProxOutput {
    pub matrix: Matrix,
    pub singular_values: Vec<f64>,
}

impl ProxOutput {
    pub fn nuclear_norm(&self) -> f64 {
        self.singular_values.iter().sum()
    }
}

pub fn prox_nuclear_with_spectrum(w: &Matrix, gamma: f64) -> Result<ProxOutput> {
    if !(gamma >= 0.0) {
        return Err(Error::arg(format!("prox threshold must be nonnegative, got {gamma}")));
    }
    let f = svd(w)?;
    let shrunk: Vec<f64> = f.singular_values.iter().map(|&s| shrink(s, gamma)).collect();
    let matrix = f.reconstruct_with(&shrunk);
    Ok(ProxOutput {
        matrix,
        singular_values: shrunk,
    })
}

pub fn prox_nuclear(w: &Matrix, gamma: f64) -> Result<Matrix> {
    prox_nuclear_with_spectrum(w, gamma).map(|o| o.matrix)
}

/// Entrywise clip to `[-eta, eta]`.
pub fn project_box(b: &Matrix, eta: f64) -> Result<Matrix> {
    if !(eta > 0.0) {
        return Err(Error::arg(format!("box bound eta must be positive, got {eta}")));
    }
    Ok(b.map(|x| x.clamp(-eta, eta)))
}

/// `gamma * ||B||_* + 0.5 * ||B - W||_F^2`.
pub fn prox_objective(b: &Matrix, w: &Matrix, gamma: f64) -> Result<f64> {
    let nuc: f64 = singular_values(b)?.iter().sum();
    Ok(gamma * nuc + 0.5 * (b - w).norm_squared())
}

/// Result of [`prox_self_check`].
#[derive(Debug, Clone)]
pub struct ProxCheckReport {
    pub cases: usize,
    pub max_spectrum_error: f64,
    pub perturbation_violations: usize,
}

impl ProxCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_spectrum_error <= tol && self.perturbation_violations == 0
    }
}

/// Runs the prox on random `rows x cols` matrices for each threshold in
/// `gammas`: checks that output singular values are the shrunk input
/// singular values and that the prox objective is not beaten by
/// `perturbations` random perturbations of the output.
pub fn prox_self_check(
    trials: usize,
    rows: usize,
    cols: usize,
    gammas: &[f64],
    perturbations: usize,
    seed: u64,
) -> Result<ProxCheckReport> {
    use rand::Rng;
    use rand_distr::StandardNormal;

    let mut rng = crate::model::rng_from_seed(seed);
    let mut report = ProxCheckReport {
        cases: 0,
        max_spectrum_error: 0.0,
        perturbation_violations: 0,
    };
    for _ in 0..trials {
        let w = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma_w = singular_values(&w)?;
        for &gamma in gammas {
            let b = prox_nuclear(&w, gamma)?;
            let sigma_b = singular_values(&b)?;
            for (sb, sw) in sigma_b.iter().zip(&sigma_w) {
                let err = (sb - (sw - gamma).max(0.0)).abs();
                report.max_spectrum_error = report.max_spectrum_error.max(err);
            }
            let best = prox_objective(&b, &w, gamma)?;
            for k in 0..perturbations {
                let scale = 10f64.powi(-((k % 4) as i32) - 1);
                let delta = DVector::from_fn(rows * cols, |_, _| rng.sample::<f64, _>(StandardNormal));
                let perturbed = &b + DMatrix::from_column_slice(rows, cols, delta.as_slice()) * scale;
                if prox_objective(&perturbed, &w, gamma)? < best - 1e-12 {
                    report.perturbation_violations += 1;
                }
            }
            report.cases += 1;
        }
    }
    Ok(report)
}
