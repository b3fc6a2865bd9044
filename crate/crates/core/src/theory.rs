//! Theoretical quantities of the nuclear-norm penalized estimators.
//!
//! * matrix norms and the active / non-active split `B = B+ + B-` at a
//!   singular index `s`, with the semi-norms `Omega+` and `Omega-`;
//! * checks for the triangle property, its extended form, Hoelder's
//!   inequality for the nuclear / spectral pair and the dual bound;
//! * noise levels `lambda_eps`, `lambda_*` and the oracle rates;
//! * weak-sparsity bounds for approximately low-rank spectra;
//! * margin constants `C1`, `C2` computed from the noise distribution;
//! * a Monte-Carlo estimate of `E Lambda_max(sum_i eps_i X_i) / n` for
//!   Rademacher signs and uniform masks.
//!
//! Constants left unspecified by the theory (the universal `C0`, the
//! constants hidden in `O_P`) are parameters or fixed to 1.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::model::{derive_seed, rng_from_seed, NoiseKind};
use crate::prox::{singular_values, svd};
use crate::Matrix;

/// Slack allowed before an inequality check counts as violated.
pub const SLACK_TOL: f64 = 1e-9;

/// Grid resolution used to minimize over `u` in the margin constants.
pub const MARGIN_GRID_POINTS: usize = 10_000;

pub fn nuclear_norm(a: &Matrix) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

pub fn frobenius_norm(a: &Matrix) -> Result<f64> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("matrix has non-finite entries"));
    }
    Ok(a.norm())
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> Result<usize> {
    let s = singular_values(a)?;
    let Some(&top) = s.first() else { return Ok(0) };
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel_tol * top).count())
}

/// Split of a matrix at singular index `s` into its active part
/// `B+ = sum_{k<=s} Lambda_k P_k Q_k^T` and the remainder `B-`.
#[derive(Debug, Clone)]
pub struct ActiveDecomposition {
    pub s: usize,
    /// `p x s`, orthonormal columns.
    pub p_plus: Matrix,
    /// `q x s`, orthonormal columns.
    pub q_plus: Matrix,
    pub b_plus: Matrix,
    pub b_minus: Matrix,
}

pub fn decompose_active(b: &Matrix, s: usize) -> Result<ActiveDecomposition> {
    let m = b.nrows().min(b.ncols());
    if s == 0 || s > m {
        return Err(Error::arg(format!("active index s = {s} must lie in [1, {m}]")));
    }
    let f = svd(b)?;
    let p_plus = f.u.columns(0, s).into_owned();
    let q_plus = f.vt.rows(0, s).transpose();
    let mut head = f.singular_values.clone();
    for x in head.iter_mut().skip(s) {
        *x = 0.0;
    }
    let b_plus = f.reconstruct_with(&head);
    let b_minus = b - &b_plus;
    Ok(ActiveDecomposition {
        s,
        p_plus,
        q_plus,
        b_plus,
        b_minus,
    })
}

impl ActiveDecomposition {
    fn check(&self, bp: &Matrix) -> Result<()> {
        let shape = (self.p_plus.nrows(), self.q_plus.nrows());
        if bp.shape() != shape {
            return Err(Error::dim(format!(
                "matrix is {:?} but the decomposition is {:?}",
                bp.shape(),
                shape
            )));
        }
        Ok(())
    }

    /// `P+ P+^T A`.
    fn left_projection(&self, a: &Matrix) -> Matrix {
        &self.p_plus * (self.p_plus.transpose() * a)
    }

    /// `A Q+ Q+^T`.
    fn right_projection(&self, a: &Matrix) -> Matrix {
        (a * &self.q_plus) * self.q_plus.transpose()
    }

    /// `sqrt(s) (||P+P+^T B'||_F + ||B'Q+Q+^T||_F + ||P+P+^T B' Q+Q+^T||_F)`.
    pub fn omega_plus(&self, bp: &Matrix) -> Result<f64> {
        self.check(bp)?;
        let left = self.left_projection(bp);
        let both = self.right_projection(&left);
        let right = self.right_projection(bp);
        Ok((self.s as f64).sqrt() * (left.norm() + right.norm() + both.norm()))
    }

    /// `||(I - P+P+^T) B' (I - Q+Q+^T)||_*`.
    pub fn omega_minus(&self, bp: &Matrix) -> Result<f64> {
        self.check(bp)?;
        let residual_left = bp - self.left_projection(bp);
        let residual = &residual_left - self.right_projection(&residual_left);
        nuclear_norm(&residual)
    }

    /// `Omega+ + Omega-`, a norm.
    pub fn omega_sum(&self, bp: &Matrix) -> Result<f64> {
        Ok(self.omega_plus(bp)? + self.omega_minus(bp)?)
    }
}

pub fn omega_plus(dec: &ActiveDecomposition, bp: &Matrix) -> Result<f64> {
    dec.omega_plus(bp)
}

pub fn omega_minus(dec: &ActiveDecomposition, bp: &Matrix) -> Result<f64> {
    dec.omega_minus(bp)
}

/// Both sides of an inequality `lhs <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.slack() >= -SLACK_TOL
    }
}

/// `||B+||_* - ||B'||_* <= Omega+(B' - B+) - Omega-(B')`.
pub fn check_triangle_property(dec: &ActiveDecomposition, bp: &Matrix) -> Result<InequalityCheck> {
    dec.check(bp)?;
    let lhs = nuclear_norm(&dec.b_plus)? - nuclear_norm(bp)?;
    let rhs = dec.omega_plus(&(bp - &dec.b_plus))? - dec.omega_minus(bp)?;
    Ok(InequalityCheck { lhs, rhs })
}

/// `||B||_* - ||B'||_* <= Omega+(B' - B) - Omega-(B' - B) + 2 ||B-||_*`,
/// with the semi-norms taken at the active part of `B = B+ + B-`.
pub fn check_extended_triangle(dec: &ActiveDecomposition, bp: &Matrix) -> Result<InequalityCheck> {
    dec.check(bp)?;
    let b = &dec.b_plus + &dec.b_minus;
    let diff = bp - &b;
    let lhs = nuclear_norm(&b)? - nuclear_norm(bp)?;
    let rhs = dec.omega_plus(&diff)? - dec.omega_minus(&diff)? + 2.0 * nuclear_norm(&dec.b_minus)?;
    Ok(InequalityCheck { lhs, rhs })
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

/// `trace(A^T B) <= Lambda_max(A) ||B||_*`.
pub fn check_hoelder(a: &Matrix, b: &Matrix) -> Result<InequalityCheck> {
    check_same_shape(a, b)?;
    Ok(InequalityCheck {
        lhs: a.dot(b),
        rhs: spectral_norm(a)? * nuclear_norm(b)?,
    })
}

/// `trace(A^T B) <= Lambda_max(A) (Omega+(B) + Omega-(B))`: the dual norm of
/// `Omega+ + Omega-` is at most the spectral norm.
pub fn check_dual_bound(dec: &ActiveDecomposition, a: &Matrix, b: &Matrix) -> Result<InequalityCheck> {
    check_same_shape(a, b)?;
    Ok(InequalityCheck {
        lhs: a.dot(b),
        rhs: spectral_norm(a)? * dec.omega_sum(b)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningLevels {
    pub lambda_eps: f64,
    pub lambda_star: f64,
    pub c0: f64,
}

fn check_problem_size(p: usize, q: usize, n: usize) -> Result<()> {
    if p == 0 || q == 0 || n == 0 {
        return Err(Error::arg(format!("need p, q, n >= 1, got p={p} q={q} n={n}")));
    }
    Ok(())
}

/// `(8 C0 + sqrt 2) sqrt(log(p+q)/(nq)) + 8 C0 sqrt(log(1+q)) log(p+q)/n`,
/// shared by both noise levels.
fn empirical_process_level(p: usize, q: usize, n: usize, c0: f64) -> f64 {
    let (p, q, n) = (p as f64, q as f64, n as f64);
    let lpq = (p + q).ln();
    (8.0 * c0 + 2f64.sqrt()) * (lpq / (n * q)).sqrt() + 8.0 * c0 * (1.0 + q).ln().sqrt() * lpq / n
}

/// Noise levels for the Huber estimator (Lipschitz constant `2 kappa`).
pub fn lambda_eps_huber(p: usize, q: usize, n: usize, kappa: f64, c0: f64, eta: f64) -> Result<TuningLevels> {
    check_problem_size(p, q, n)?;
    if !(kappa > 0.0) || !(c0 >= 0.0) || !(eta > 0.0) {
        return Err(Error::arg("need kappa > 0, c0 >= 0, eta > 0"));
    }
    let lambda_eps = 4.0 * kappa * empirical_process_level(p, q, n, c0);
    let lambda_star = 16.0 * eta * kappa * p as f64 * ((p + q) as f64).ln() / (3.0 * n as f64) + lambda_eps;
    Ok(TuningLevels { lambda_eps, lambda_star, c0 })
}

/// Noise levels for the absolute-value estimator (Lipschitz constant 1).
pub fn lambda_eps_absolute(p: usize, q: usize, n: usize, c0: f64, eta: f64) -> Result<TuningLevels> {
    check_problem_size(p, q, n)?;
    if !(c0 >= 0.0) || !(eta > 0.0) {
        return Err(Error::arg("need c0 >= 0, eta > 0"));
    }
    let lambda_eps = 2.0 * empirical_process_level(p, q, n, c0);
    let lambda_star = 8.0 * eta * p as f64 * ((p + q) as f64).ln() / (3.0 * n as f64) + lambda_eps;
    Ok(TuningLevels { lambda_eps, lambda_star, c0 })
}

fn rate_core(p: usize, q: usize, n: usize, s0: usize) -> f64 {
    let (pf, qf) = (p as f64, q as f64);
    pf * pf * qf * s0 as f64 * (pf + qf).ln() / n as f64
}

/// `kappa^2 C1^4 p^2 q s0 log(p+q) / n`, the squared-Frobenius rate of the
/// Huber estimator with its `O_P` constant set to 1.
pub fn oracle_rate_sharp(p: usize, q: usize, n: usize, s0: usize, kappa: f64, c1: f64) -> Result<f64> {
    check_problem_size(p, q, n)?;
    Ok(kappa * kappa * c1.powi(4) * rate_core(p, q, n, s0))
}

/// `C2^4 p^2 q s0 log(p+q) / n`, the rate of the absolute-loss estimator.
pub fn oracle_rate_nonsharp(p: usize, q: usize, n: usize, s0: usize, c2: f64) -> Result<f64> {
    check_problem_size(p, q, n)?;
    Ok(c2.powi(4) * rate_core(p, q, n, s0))
}

/// Weak-sparsity quantities for a spectrum and threshold `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakSparsity {
    /// `rho_r^r = sum_k Lambda_k^r`.
    pub rho_r_pow_r: f64,
    /// `sigma^(1-r) rho_r^r`.
    pub nuclear_tail_bound: f64,
    /// `sigma^(-r) rho_r^r`.
    pub s_bound: f64,
    /// Sum of the singular values at or below `sigma`.
    pub actual_tail: f64,
    /// Number of singular values above `sigma`.
    pub actual_s: usize,
}

impl WeakSparsity {
    pub fn holds(&self) -> bool {
        self.actual_tail <= self.nuclear_tail_bound + SLACK_TOL && self.actual_s as f64 <= self.s_bound + SLACK_TOL
    }
}

pub fn weak_sparsity_bounds(singular_values: &[f64], r: f64, sigma: f64) -> Result<WeakSparsity> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::arg(format!("r must lie in (0, 1), got {r}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    if singular_values.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::arg("singular values must be finite and nonnegative"));
    }
    let rho = singular_values.iter().map(|x| x.powf(r)).sum::<f64>();
    let actual_s = singular_values.iter().filter(|&&x| x > sigma).count();
    let actual_tail = singular_values.iter().filter(|&&x| x <= sigma).sum();
    Ok(WeakSparsity {
        rho_r_pow_r: rho,
        nuclear_tail_bound: sigma.powf(1.0 - r) * rho,
        s_bound: sigma.powf(-r) * rho,
        actual_tail,
        actual_s,
    })
}

enum NoiseDist {
    Gaussian(Normal),
    StudentT(StudentsT),
}

impl NoiseDist {
    fn new(kind: &NoiseKind) -> Result<Self> {
        kind.validate()?;
        match *kind {
            NoiseKind::Gaussian { stddev } => Normal::new(0.0, stddev)
                .map(NoiseDist::Gaussian)
                .map_err(|e| Error::arg(e.to_string())),
            NoiseKind::StudentT { dof } => StudentsT::new(0.0, 1.0, dof)
                .map(NoiseDist::StudentT)
                .map_err(|e| Error::arg(e.to_string())),
            NoiseKind::None => Err(Error::arg("noiseless model has no density")),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match self {
            NoiseDist::Gaussian(d) => d.cdf(x),
            NoiseDist::StudentT(d) => d.cdf(x),
        }
    }

    fn sf(&self, x: f64) -> f64 {
        match self {
            NoiseDist::Gaussian(d) => d.sf(x),
            NoiseDist::StudentT(d) => d.sf(x),
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            NoiseDist::Gaussian(d) => d.pdf(x),
            NoiseDist::StudentT(d) => d.pdf(x),
        }
    }

    /// `F(b) - F(a)` for `a <= b`, from whichever tail keeps precision.
    fn mass(&self, a: f64, b: f64) -> f64 {
        if a >= 0.0 {
            self.sf(a) - self.sf(b)
        } else {
            self.cdf(b) - self.cdf(a)
        }
    }
}

/// CDF of the noise distribution.
pub fn noise_cdf(kind: &NoiseKind, x: f64) -> Result<f64> {
    Ok(NoiseDist::new(kind)?.cdf(x))
}

/// Density of the noise distribution.
pub fn noise_density(kind: &NoiseKind, x: f64) -> Result<f64> {
    Ok(NoiseDist::new(kind)?.pdf(x))
}

fn margin_grid(half_width: f64) -> impl Iterator<Item = f64> {
    let step = 2.0 * half_width / (MARGIN_GRID_POINTS - 1) as f64;
    (0..MARGIN_GRID_POINTS).map(move |i| {
        if i == MARGIN_GRID_POINTS - 1 {
            half_width
        } else {
            -half_width + i as f64 * step
        }
    })
}

fn grid_argmin(half_width: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    margin_grid(half_width)
        .map(|u| (u, f(u)))
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Two-point margin constant of the Huber loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginC1 {
    pub c1: f64,
    /// `min_{|u| <= eta} F(u + kappa) - F(u - kappa)` over the grid.
    pub min_mass: f64,
    pub argmin_u: f64,
    /// Set when `kappa > eta`, outside the range the constant is meant for.
    pub kappa_exceeds_eta: bool,
}

/// `C1 = 1 / sqrt(min_{|u| <= eta} F(u + kappa) - F(u - kappa))` for a
/// user-supplied probability of intervals `mass(a, b) = F(b) - F(a)`.
pub fn margin_constant_c1_for(mass: impl Fn(f64, f64) -> f64, kappa: f64, eta: f64) -> Result<MarginC1> {
    if !(kappa > 0.0) || !(eta > 0.0) {
        return Err(Error::arg("need kappa > 0 and eta > 0"));
    }
    let (argmin_u, min_mass) = grid_argmin(eta, |u| mass(u - kappa, u + kappa));
    if !(min_mass > 0.0) {
        return Err(Error::numeric(format!(
            "interval probability underflows to {min_mass} at u = {argmin_u}"
        )));
    }
    Ok(MarginC1 {
        c1: 1.0 / min_mass.sqrt(),
        min_mass,
        argmin_u,
        kappa_exceeds_eta: kappa > eta,
    })
}

pub fn margin_constant_c1(noise: &NoiseKind, kappa: f64, eta: f64) -> Result<MarginC1> {
    let dist = NoiseDist::new(noise)?;
    let out = margin_constant_c1_for(|a, b| dist.mass(a, b), kappa, eta)?;
    if out.kappa_exceeds_eta {
        log::warn!("kappa = {kappa} exceeds eta = {eta}; C1 is outside its intended range");
    }
    Ok(out)
}

/// One-point margin constant of the absolute loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginC2 {
    pub c2: f64,
    /// `min_{|u| <= 2 eta} f(u)` over the grid.
    pub min_density: f64,
    pub argmin_u: f64,
}

/// `C2 = 1 / sqrt(min_{|u| <= 2 eta} f(u))` for a user-supplied density.
pub fn margin_constant_c2_for(density: impl Fn(f64) -> f64, eta: f64) -> Result<MarginC2> {
    if !(eta > 0.0) {
        return Err(Error::arg("need eta > 0"));
    }
    let (argmin_u, min_density) = grid_argmin(2.0 * eta, density);
    if !(min_density > 0.0) {
        return Err(Error::numeric(format!("density vanishes at u = {argmin_u}")));
    }
    Ok(MarginC2 {
        c2: 1.0 / min_density.sqrt(),
        min_density,
        argmin_u,
    })
}

pub fn margin_constant_c2(noise: &NoiseKind, eta: f64) -> Result<MarginC2> {
    let dist = NoiseDist::new(noise)?;
    margin_constant_c2_for(|u| dist.pdf(u), eta)
}

/// Second derivative in `b` of the one-cell Huber risk `E rho_H(eps - b)`:
/// `2 (F(b + kappa) - F(b - kappa))`.
pub fn huber_risk_second_derivative(noise: &NoiseKind, kappa: f64, b: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::arg("need kappa > 0"));
    }
    let dist = NoiseDist::new(noise)?;
    Ok(2.0 * dist.mass(b - kappa, b + kappa))
}

/// Envelope `sqrt(log(p+q)/(nq)) + sqrt(log(q+1)) log(p+q)/n` bounding the
/// expected spectral norm of the Rademacher sum up to a constant.
pub fn rademacher_envelope(p: usize, q: usize, n: usize) -> f64 {
    let (p, q, n) = (p as f64, q as f64, n as f64);
    let lpq = (p + q).ln();
    (lpq / (n * q)).sqrt() + (q + 1.0).ln().sqrt() * lpq / n
}

#[derive(Debug, Clone)]
pub struct MonteCarloSummary {
    pub mean: f64,
    pub std_dev: f64,
    /// One value per repetition, in repetition order.
    pub values: Vec<f64>,
}

const RADEMACHER_STREAM: u64 = 0x5241_4445;

/// Monte-Carlo mean of `Lambda_max(sum_i eps_i X_i) / n` over `reps`
/// repetitions, each drawing `n` uniform masks with Rademacher signs.
/// Repetitions run in parallel with seeds derived from `seed`.
pub fn rademacher_lambda_max_mc(p: usize, q: usize, n: usize, reps: usize, seed: u64) -> Result<MonteCarloSummary> {
    check_problem_size(p, q, n)?;
    if reps == 0 {
        return Err(Error::arg("need at least one repetition"));
    }
    let values = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_from_seed(derive_seed(seed, RADEMACHER_STREAM, rep as u64));
            let mut sum = DMatrix::<f64>::zeros(p, q);
            for _ in 0..n {
                let row = rng.random_range(0..p);
                let col = rng.random_range(0..q);
                sum[(row, col)] += if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            }
            Ok(spectral_norm(&sum)? / n as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let std_dev = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloSummary { mean, std_dev, values })
}

/// Outcome of one randomized invariant family.
#[derive(Debug, Clone)]
pub struct InvariantReport {
    pub name: &'static str,
    pub trials: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen; negative beyond `-SLACK_TOL` is a violation.
    pub worst_slack: f64,
}

impl InvariantReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            trials: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
        }
    }

    fn record(&mut self, slack: f64) {
        self.trials += 1;
        self.worst_slack = self.worst_slack.min(slack);
        if slack < -SLACK_TOL {
            self.violations += 1;
        }
    }

    fn record_check(&mut self, c: InequalityCheck) {
        self.record(c.slack());
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random matrix of the given rank with a spread of singular values.
fn random_rank_matrix(rng: &mut impl Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    let u = gaussian_matrix(rng, rows, rank);
    let v = gaussian_matrix(rng, cols, rank);
    let scale = 10f64.powf(rng.random_range(-1.0..1.5));
    u * v.transpose() * scale
}

fn random_orthonormal(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    gaussian_matrix(rng, rows, cols).qr().q().columns(0, cols).into_owned()
}

/// Runs every randomized inequality family `trials` times from `seed`:
/// triangle property, its extended form, `Omega+(B-) = 0`, the norm sandwich,
/// projection contraction, Hoelder, the dual bound and weak sparsity.
pub fn run_invariant_suite(trials: usize, seed: u64) -> Result<Vec<InvariantReport>> {
    let mut rng = rng_from_seed(seed);
    let mut triangle = InvariantReport::new("triangle property");
    let mut extended = InvariantReport::new("extended triangle property");
    let mut omega_minus_part = InvariantReport::new("omega+ of non-active part is zero");
    let mut sandwich = InvariantReport::new("nuclear/frobenius norm sandwich");
    let mut contraction = InvariantReport::new("projection contraction");
    let mut hoelder = InvariantReport::new("hoelder dual-norm inequality");
    let mut dual = InvariantReport::new("dual bound of omega+ + omega-");
    let mut weak = InvariantReport::new("weak sparsity bounds");

    for _ in 0..trials {
        let p = rng.random_range(2..=8);
        let q = rng.random_range(2..=8);
        let m = p.min(q);

        let rank_b = rng.random_range(1..=m);
        let b = random_rank_matrix(&mut rng, p, q, rank_b);
        let s = rng.random_range(1..=m);
        let dec = decompose_active(&b, s)?;
        let bp = if rng.random_bool(0.5) {
            let rank_bp = rng.random_range(1..=m);
            random_rank_matrix(&mut rng, p, q, rank_bp)
        } else {
            // nearby point, so the inequalities are tested close to tight
            &b + random_rank_matrix(&mut rng, p, q, m) * 0.01
        };

        triangle.record_check(check_triangle_property(&dec, &bp)?);
        extended.record_check(check_extended_triangle(&dec, &bp)?);
        omega_minus_part.record(-dec.omega_plus(&dec.b_minus)?.abs());

        let nuc = nuclear_norm(&bp)?;
        let fro = bp.norm();
        let rank = numerical_rank(&bp, 1e-12)? as f64;
        sandwich.record((nuc - fro).min(rank.sqrt() * fro - nuc));

        let k = rng.random_range(1..=p);
        let proj = random_orthonormal(&mut rng, p, k);
        let projected = &proj * (proj.transpose() * &bp);
        let pnorm = projected.norm();
        contraction.record((fro - pnorm).min((k as f64).sqrt() * spectral_norm(&bp)? - pnorm));

        let a = gaussian_matrix(&mut rng, p, q);
        hoelder.record_check(check_hoelder(&a, &bp)?);
        dual.record_check(check_dual_bound(&dec, &a, &bp)?);

        let len = rng.random_range(1..=12);
        let spectrum: Vec<f64> = (0..len).map(|_| 10f64.powf(rng.random_range(-3.0..1.5))).collect();
        let r = rng.random_range(1..=9) as f64 / 10.0;
        let sigma = 10f64.powf(rng.random_range(-2.0..=1.0));
        let ws = weak_sparsity_bounds(&spectrum, r, sigma)?;
        weak.record(
            (ws.nuclear_tail_bound - ws.actual_tail).min(ws.s_bound - ws.actual_s as f64),
        );
    }

    Ok(vec![triangle, extended, omega_minus_part, sandwich, contraction, hoelder, dual, weak])
}
