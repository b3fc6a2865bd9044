//! Simulation and real-data experiments.
//!
//! Every replicate `r` uses the seed `base_seed + r`. From it the replicate
//! draws one truth and one stream of noisy uniform samples of the largest grid
//! size; the sample at a smaller `n` is the first `n` draws of that stream, so
//! all losses and all grid points of a replicate see nested, identical data.
//! Corruption is drawn independently per grid point.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::lrps::solve_lrps;
use crate::model::{
    corrupt, derive_seed, generate_low_rank, rng_from_seed, sample_uniform, CorruptionModel, GroundTruth,
    NoiseKind, NoiseModel, Observation, ObservationSet, ParameterMatrix,
};
use crate::solver::{solve_any, SolverConfig};
use crate::theory::{oracle_rate_nonsharp, oracle_rate_sharp};
use crate::Matrix;

pub const REPLICATE_HEADER: [&str; 11] = [
    "p", "q", "s0", "n", "replicate", "loss", "kappa", "lambda", "error", "iterations", "seed",
];
pub const CURVE_HEADER: [&str; 9] = [
    "p", "q", "s0", "n", "loss", "mean_error", "stderr", "oracle_value", "scaled_oracle",
];

/// Replicates may fail numerically as long as fewer than this fraction do.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

const STREAM_TRUTH: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_MASK: u64 = 2;
const STREAM_CORRUPTION: u64 = 3;

/// Choice of the nuclear-norm penalty as a function of the problem size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// `2 sqrt(log(p + q) / (n q))`
    PaperSim,
    /// `1 / sqrt(n)`
    OneOverSqrtN,
    Explicit(f64),
}

impl LambdaRule {
    pub fn lambda(&self, p: usize, q: usize, n: usize) -> f64 {
        match *self {
            LambdaRule::PaperSim => lambda_paper_sim(p, q, n),
            LambdaRule::OneOverSqrtN => 1.0 / (n as f64).sqrt(),
            LambdaRule::Explicit(v) => v,
        }
    }
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaRule::PaperSim => f.write_str("paper_sim"),
            LambdaRule::OneOverSqrtN => f.write_str("one_over_sqrt_n"),
            LambdaRule::Explicit(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for LambdaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "paper_sim" => Ok(LambdaRule::PaperSim),
            "one_over_sqrt_n" => Ok(LambdaRule::OneOverSqrtN),
            other => match other.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaRule::Explicit(v)),
                _ => Err(Error::arg(format!(
                    "lambda rule '{other}' is not paper_sim, one_over_sqrt_n or a nonnegative number"
                ))),
            },
        }
    }
}

/// Sparse gross errors added on top of the noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub fraction: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub p: usize,
    pub q: usize,
    pub s0: usize,
    pub eta: f64,
    /// Huber constant used by the oracle overlay and the comparison runs.
    pub kappa: f64,
    pub noise: NoiseKind,
    pub corruption: Option<Corruption>,
    pub losses: Vec<LossSpec>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    pub lambda_rule: LambdaRule,
    pub solver: SolverConfig,
}

impl ExperimentSpec {
    /// Simulation defaults: `eta = 10`, `kappa = 1.345`, 25 replicates, the
    /// default grid, Huber against quadratic.
    pub fn new(p: usize, q: usize, s0: usize, noise: NoiseKind) -> Self {
        Self {
            p,
            q,
            s0,
            eta: 10.0,
            kappa: 1.345,
            noise,
            corruption: None,
            losses: vec![LossSpec::Huber { kappa: 1.345 }, LossSpec::Quadratic],
            n_grid: default_n_grid(p, q, s0),
            replicates: 25,
            base_seed: 0,
            lambda_rule: LambdaRule::PaperSim,
            solver: default_solver(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::arg(format!("p and q must be positive, got {}x{}", self.p, self.q)));
        }
        if self.s0 == 0 || self.s0 > self.p.min(self.q) {
            return Err(Error::arg(format!("s0 = {} must lie in [1, min(p, q)]", self.s0)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::arg(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::arg(format!("kappa must be positive, got {}", self.kappa)));
        }
        self.noise.validate()?;
        if let Some(c) = self.corruption {
            if !(0.0..=1.0).contains(&c.fraction) || !c.magnitude.is_finite() {
                return Err(Error::arg("corruption needs a fraction in [0, 1] and a finite magnitude"));
            }
        }
        if self.losses.is_empty() {
            return Err(Error::arg("no losses given"));
        }
        if self.n_grid.is_empty() {
            return Err(Error::arg("empty sample-size grid"));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("sample-size grid must be positive and strictly increasing"));
        }
        if *self.n_grid.last().unwrap() > self.p * self.q {
            return Err(Error::arg("sample sizes must not exceed p * q"));
        }
        if self.replicates == 0 {
            return Err(Error::arg("replicates must be at least 1"));
        }
        self.solver.validate()
    }

    fn lambda(&self, n: usize) -> f64 {
        self.lambda_rule.lambda(self.p, self.q, n)
    }

    fn solver_for(&self, n: usize) -> SolverConfig {
        SolverConfig {
            lambda: self.lambda(n),
            eta: self.eta,
            ..self.solver.clone()
        }
    }
}

/// Solver settings used by the simulations: the default step parameters with
/// early stopping on the fixed-point residual.
pub fn default_solver() -> SolverConfig {
    SolverConfig {
        max_iter: 3000,
        fixed_point_tol: 1e-6,
        ..SolverConfig::default()
    }
}

/// Ten evenly spaced sample sizes from `ceil(3 p ln(p) s0)` to `p q`.
pub fn default_n_grid(p: usize, q: usize, s0: usize) -> Vec<usize> {
    let hi = p * q;
    let lo = ((3.0 * p as f64 * (p as f64).ln() * s0 as f64).ceil() as usize).clamp(1, hi.max(1));
    let grid: BTreeSet<usize> = (0..10)
        .map(|i| (lo as f64 + (hi - lo) as f64 * i as f64 / 9.0).round() as usize)
        .collect();
    grid.into_iter().collect()
}

/// `2 sqrt(log(p + q) / (n q))`.
pub fn lambda_paper_sim(p: usize, q: usize, n: usize) -> f64 {
    2.0 * (((p + q) as f64).ln() / (n as f64 * q as f64)).sqrt()
}

/// Mean squared entrywise error `||estimate - truth||_F^2 / (p q)`.
pub fn compute_error(estimate: &Matrix, truth: &Matrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::dim(format!(
            "estimate is {:?}, truth is {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::dim("empty matrices"));
    }
    Ok((estimate - truth).norm_squared() / estimate.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub p: usize,
    pub q: usize,
    pub s0: usize,
    pub n: usize,
    pub replicate: usize,
    pub loss: LossSpec,
    pub lambda: f64,
    pub error: f64,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub n: usize,
    pub loss: LossSpec,
    pub mean_error: f64,
    pub stderr: f64,
    pub oracle_value: f64,
    pub scaled_oracle: f64,
}

#[derive(Debug, Clone)]
pub struct CurveResult {
    pub spec: ExperimentSpec,
    /// Successful solves, ordered by (loss, n, replicate).
    pub records: Vec<ReplicateRecord>,
    /// Ordered by (loss, n).
    pub points: Vec<CurvePoint>,
    /// Display constant applied to the oracle overlay of each loss.
    pub display_constants: Vec<(LossSpec, f64)>,
    pub failures: usize,
}

impl CurveResult {
    pub fn curve(&self, loss: &LossSpec) -> Vec<&CurvePoint> {
        self.points.iter().filter(|pt| &pt.loss == loss).collect()
    }
}

/// Mean and standard error of the mean (0 for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Oracle rate divided by `p q`, with unit constants.
pub fn oracle_value(spec: &ExperimentSpec, loss: &LossSpec, n: usize) -> Result<f64> {
    let pq = (spec.p * spec.q) as f64;
    let rate = match loss {
        LossSpec::Absolute => oracle_rate_nonsharp(spec.p, spec.q, n, spec.s0, 1.0)?,
        LossSpec::Huber { kappa } => oracle_rate_sharp(spec.p, spec.q, n, spec.s0, *kappa, 1.0)?,
        LossSpec::Quadratic => oracle_rate_sharp(spec.p, spec.q, n, spec.s0, spec.kappa, 1.0)?,
    };
    Ok(rate / pq)
}

/// Least-squares `c` in `error ~ c * oracle` over the largest third of the
/// grid.
pub fn fit_display_constant(points: &[&CurvePoint]) -> f64 {
    let k = points.len().div_ceil(3);
    let top = &points[points.len() - k..];
    let num: f64 = top.iter().map(|pt| pt.mean_error * pt.oracle_value).sum();
    let den: f64 = top.iter().map(|pt| pt.oracle_value * pt.oracle_value).sum();
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

fn fixed_display_constant(spec: &ExperimentSpec) -> Option<f64> {
    if spec.lambda_rule != LambdaRule::PaperSim {
        return None;
    }
    match spec.noise {
        NoiseKind::StudentT { .. } => Some(1.68),
        NoiseKind::Gaussian { .. } => Some(1.1),
        NoiseKind::None => None,
    }
}

/// Seeds of one replicate: `(replicate seed, truth, noise, mask)`.
fn replicate_seeds(base_seed: u64, replicate: usize) -> (u64, u64, u64, u64) {
    let rs = base_seed.wrapping_add(replicate as u64);
    (
        rs,
        derive_seed(rs, STREAM_TRUTH, 0),
        derive_seed(rs, STREAM_NOISE, 0),
        derive_seed(rs, STREAM_MASK, 0),
    )
}

/// The truth and the nested samples (one per grid point) of one replicate.
fn replicate_data(spec: &ExperimentSpec, replicate: usize) -> Result<(GroundTruth, Vec<ObservationSet>, u64)> {
    let (rs, truth_seed, noise_seed, mask_seed) = replicate_seeds(spec.base_seed, replicate);
    let truth = generate_low_rank(spec.p, spec.q, spec.s0, spec.eta, truth_seed)?;
    let n_max = *spec.n_grid.last().expect("validated grid");
    let full = sample_uniform(&truth, n_max, &NoiseModel::new(spec.noise, noise_seed), mask_seed)?;
    let mut samples = Vec::with_capacity(spec.n_grid.len());
    for (i, &n) in spec.n_grid.iter().enumerate() {
        let prefix = ObservationSet::new(spec.p, spec.q, full.entries()[..n].to_vec())?;
        let obs = match spec.corruption {
            Some(c) => corrupt(
                &prefix,
                &CorruptionModel {
                    fraction: c.fraction,
                    magnitude: c.magnitude,
                    seed: derive_seed(rs, STREAM_CORRUPTION, i as u64),
                },
            )?,
            None => prefix,
        };
        samples.push(obs);
    }
    Ok((truth, samples, rs))
}

/// Outcome of one solve: `Ok(Some)` on success, `Ok(None)` on a numeric
/// failure that the failure policy may absorb.
type Attempt = Result<Option<(f64, usize)>>;

fn absorb_numeric(res: Result<(f64, usize)>, what: &str) -> Attempt {
    match res {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_numeric() => {
            warn!("{what}: {e}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Applies the failure policy to one cell of the (loss, n) table and returns
/// the surviving values.
fn surviving(attempts: &[Option<(f64, usize)>], replicates: usize, label: &str) -> Result<Vec<f64>> {
    let failed = attempts.iter().filter(|a| a.is_none()).count();
    if failed > 0 {
        if failed as f64 >= MAX_FAILED_FRACTION * replicates as f64 {
            return Err(Error::numeric(format!(
                "{label}: {failed} of {replicates} replicates failed"
            )));
        }
        warn!("{label}: excluding {failed} failed replicate(s)");
    }
    Ok(attempts.iter().flatten().map(|a| a.0).collect())
}

fn warn_kappa_scope(spec: &ExperimentSpec) {
    for loss in &spec.losses {
        if let LossSpec::Huber { kappa } = loss {
            if *kappa > spec.eta {
                warn!("huber kappa {kappa} exceeds eta {}; the margin assumption does not cover it", spec.eta);
            }
        }
    }
}

/// Error curves of every loss over the grid.
pub fn run_error_curve(spec: &ExperimentSpec) -> Result<CurveResult> {
    spec.validate()?;
    warn_kappa_scope(spec);
    info!(
        "error curve p={} q={} s0={} noise={} replicates={} grid={:?}",
        spec.p, spec.q, spec.s0, spec.noise, spec.replicates, spec.n_grid
    );

    // per replicate: [loss][grid] attempts
    let per_rep: Vec<(u64, Vec<Vec<Option<(f64, usize)>>>)> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let (truth, samples, rs) = replicate_data(spec, r)?;
            let table = spec
                .losses
                .iter()
                .map(|loss| {
                    samples
                        .iter()
                        .map(|obs| {
                            let config = spec.solver_for(obs.n());
                            let res = solve_any(loss, obs, &config, None).and_then(|s| {
                                Ok((compute_error(&s.estimate.data, &truth.b_star.data)?, s.iterations_run))
                            });
                            absorb_numeric(res, &format!("replicate {r}, {loss}, n = {}", obs.n()))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((rs, table))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut points = Vec::new();
    let mut display_constants = Vec::new();
    let mut failures = 0;
    for (li, loss) in spec.losses.iter().enumerate() {
        let first = points.len();
        for (gi, &n) in spec.n_grid.iter().enumerate() {
            let attempts: Vec<_> = per_rep.iter().map(|(_, t)| t[li][gi]).collect();
            failures += attempts.iter().filter(|a| a.is_none()).count();
            let values = surviving(&attempts, spec.replicates, &format!("{loss} at n = {n}"))?;
            for (r, (rs, table)) in per_rep.iter().enumerate() {
                if let Some((error, iterations)) = table[li][gi] {
                    records.push(ReplicateRecord {
                        p: spec.p,
                        q: spec.q,
                        s0: spec.s0,
                        n,
                        replicate: r,
                        loss: *loss,
                        lambda: spec.lambda(n),
                        error,
                        iterations,
                        seed: *rs,
                    });
                }
            }
            let (mean_error, stderr) = mean_stderr(&values);
            points.push(CurvePoint {
                n,
                loss: *loss,
                mean_error,
                stderr,
                oracle_value: oracle_value(spec, loss, n)?,
                scaled_oracle: f64::NAN,
            });
        }
        let curve: Vec<&CurvePoint> = points[first..].iter().collect();
        let c = fixed_display_constant(spec).unwrap_or_else(|| fit_display_constant(&curve));
        for pt in &mut points[first..] {
            pt.scaled_oracle = c * pt.oracle_value;
        }
        display_constants.push((*loss, c));
        info!(
            "{loss}: mean error {:.4} at n = {} -> {:.4} at n = {}",
            points[first].mean_error,
            spec.n_grid[0],
            points.last().unwrap().mean_error,
            spec.n_grid.last().unwrap()
        );
    }
    Ok(CurveResult {
        spec: spec.clone(),
        records,
        points,
        display_constants,
        failures,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(csv::Writer::from_path(path)?)
}

fn kappa_field(loss: &LossSpec) -> String {
    loss.kappa().map(|k| k.to_string()).unwrap_or_default()
}

pub fn write_replicates_csv(path: &Path, records: &[ReplicateRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(REPLICATE_HEADER)?;
    for r in records {
        w.write_record([
            r.p.to_string(),
            r.q.to_string(),
            r.s0.to_string(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.loss.to_string(),
            kappa_field(&r.loss),
            r.lambda.to_string(),
            r.error.to_string(),
            r.iterations.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve_csv(path: &Path, spec: &ExperimentSpec, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(CURVE_HEADER)?;
    for pt in points {
        w.write_record([
            spec.p.to_string(),
            spec.q.to_string(),
            spec.s0.to_string(),
            pt.n.to_string(),
            pt.loss.to_string(),
            pt.mean_error.to_string(),
            pt.stderr.to_string(),
            pt.oracle_value.to_string(),
            pt.scaled_oracle.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `n / (3 p s0 ln p)`, the abscissa on which curves of different sizes
/// line up.
pub fn rescaled_n(n: usize, p: usize, s0: usize) -> f64 {
    n as f64 / (3.0 * p as f64 * s0 as f64 * (p as f64).ln())
}

#[derive(Debug, Clone)]
pub struct SizeStudy {
    pub curves: Vec<CurveResult>,
}

impl SizeStudy {
    /// Rows `(p, q, n, rescaled n, loss, mean error, stderr)`.
    pub fn rescaled_rows(&self) -> Vec<(usize, usize, usize, f64, LossSpec, f64, f64)> {
        self.curves
            .iter()
            .flat_map(|c| {
                c.points.iter().map(move |pt| {
                    (
                        c.spec.p,
                        c.spec.q,
                        pt.n,
                        rescaled_n(pt.n, c.spec.p, c.spec.s0),
                        pt.loss,
                        pt.mean_error,
                        pt.stderr,
                    )
                })
            })
            .collect()
    }

    pub fn write_rescaled_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["p", "q", "s0", "n", "rescaled_n", "loss", "mean_error", "stderr"])?;
        for (c, row) in self
            .curves
            .iter()
            .flat_map(|c| std::iter::repeat(c).take(c.points.len()))
            .zip(self.rescaled_rows())
        {
            w.write_record([
                row.0.to_string(),
                row.1.to_string(),
                c.spec.s0.to_string(),
                row.2.to_string(),
                row.3.to_string(),
                row.4.to_string(),
                row.5.to_string(),
                row.6.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `template` once per size with the size's default grid.
pub fn run_problem_size_study(sizes: &[(usize, usize)], template: &ExperimentSpec) -> Result<SizeStudy> {
    if sizes.is_empty() {
        return Err(Error::arg("no problem sizes given"));
    }
    let curves = sizes
        .iter()
        .map(|&(p, q)| {
            let spec = ExperimentSpec {
                p,
                q,
                n_grid: default_n_grid(p, q, template.s0),
                ..template.clone()
            };
            run_error_curve(&spec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SizeStudy { curves })
}

/// Penalties of the low-rank plus sparse estimator:
/// `lambda1 = 2 sqrt(log(p + q) / (n q))`, `lambda2 = 2 log(p + q) / n`.
pub fn lrps_lambdas(p: usize, q: usize, n: usize) -> (f64, f64) {
    let l = ((p + q) as f64).ln();
    (2.0 * (l / (n as f64 * q as f64)).sqrt(), 2.0 * l / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonPoint {
    pub n: usize,
    pub huber_mean: f64,
    pub huber_stderr: f64,
    pub lrps_mean: f64,
    pub lrps_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonResult {
    pub spec: ExperimentSpec,
    pub corrupted: bool,
    pub points: Vec<ComparisonPoint>,
}

impl ComparisonResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record([
            "p", "q", "s0", "n", "corrupted", "huber_mean", "huber_stderr", "lrps_mean", "lrps_stderr",
        ])?;
        for pt in &self.points {
            w.write_record([
                self.spec.p.to_string(),
                self.spec.q.to_string(),
                self.spec.s0.to_string(),
                pt.n.to_string(),
                self.corrupted.to_string(),
                pt.huber_mean.to_string(),
                pt.huber_stderr.to_string(),
                pt.lrps_mean.to_string(),
                pt.lrps_stderr.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Huber estimator (with `spec.kappa`) against the low-rank plus sparse
/// estimator on identical data. With `corrupted`, 5% of the observations get
/// `+-eta` added.
pub fn run_klopp_comparison(spec: &ExperimentSpec, corrupted: bool) -> Result<ComparisonResult> {
    let spec = ExperimentSpec {
        corruption: corrupted.then_some(Corruption {
            fraction: 0.05,
            magnitude: spec.eta,
        }),
        losses: vec![LossSpec::huber(spec.kappa)?],
        ..spec.clone()
    };
    spec.validate()?;
    info!(
        "comparison p={} q={} noise={} corrupted={corrupted} replicates={}",
        spec.p, spec.q, spec.noise, spec.replicates
    );
    let huber = spec.losses[0];
    let per_rep: Vec<Vec<(Option<(f64, usize)>, Option<(f64, usize)>)>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let (truth, samples, _) = replicate_data(&spec, r)?;
            samples
                .iter()
                .map(|obs| {
                    let n = obs.n();
                    let h = solve_any(&huber, obs, &spec.solver_for(n), None).and_then(|s| {
                        Ok((compute_error(&s.estimate.data, &truth.b_star.data)?, s.iterations_run))
                    });
                    let (l1, l2) = lrps_lambdas(spec.p, spec.q, n);
                    let config = SolverConfig {
                        eta: spec.eta,
                        ..spec.solver.clone()
                    };
                    let l = solve_lrps(obs, l1, l2, &config).and_then(|s| {
                        Ok((compute_error(&s.l_hat.data, &truth.b_star.data)?, s.iterations_run))
                    });
                    Ok((
                        absorb_numeric(h, &format!("replicate {r}, huber, n = {n}"))?,
                        absorb_numeric(l, &format!("replicate {r}, lrps, n = {n}"))?,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    for (gi, &n) in spec.n_grid.iter().enumerate() {
        let h: Vec<_> = per_rep.iter().map(|t| t[gi].0).collect();
        let l: Vec<_> = per_rep.iter().map(|t| t[gi].1).collect();
        let (huber_mean, huber_stderr) = mean_stderr(&surviving(&h, spec.replicates, &format!("huber at n = {n}"))?);
        let (lrps_mean, lrps_stderr) = mean_stderr(&surviving(&l, spec.replicates, &format!("lrps at n = {n}"))?);
        points.push(ComparisonPoint {
            n,
            huber_mean,
            huber_stderr,
            lrps_mean,
            lrps_stderr,
        });
    }
    Ok(ComparisonResult {
        spec,
        corrupted,
        points,
    })
}

/// Ratings with users and items reindexed to `0..p` and `0..q` in ascending
/// id order.
#[derive(Debug, Clone)]
pub struct Ratings {
    pub obs: ObservationSet,
    /// Original id of each row.
    pub users: Vec<u64>,
    /// Original id of each column.
    pub items: Vec<u64>,
    pub warnings: Vec<String>,
}

impl Ratings {
    /// Writes the index-to-id maps as `kind,index,id` rows.
    pub fn write_dimension_map(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["kind", "index", "id"])?;
        for (kind, ids) in [("user", &self.users), ("item", &self.items)] {
            for (i, id) in ids.iter().enumerate() {
                w.write_record([kind, &i.to_string(), &id.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses `user item rating [timestamp]` records separated by tabs or by
/// `::`. Blank lines are skipped; anything else that does not parse is an
/// error carrying its 1-based line number.
pub fn parse_ratings_str(text: &str) -> Result<Ratings> {
    let mut raw = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains("::") {
            line.split("::").collect()
        } else {
            line.split('\t').collect()
        };
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        let id = |s: &str, what: &str| {
            s.trim().parse::<u64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("{what} '{s}' is not a non-negative integer"),
            })
        };
        let user = id(fields[0], "user id")?;
        let item = id(fields[1], "item id")?;
        let rating = fields[2]
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|r| r.is_finite())
            .ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("rating '{}' is not a finite number", fields[2]),
            })?;
        if let Some(ts) = fields.get(3) {
            id(ts, "timestamp")?;
        }
        if !seen.insert((user, item)) {
            warnings.push(format!("line {lineno}: duplicate rating of item {item} by user {user}, keeping the first"));
            continue;
        }
        if !(1.0..=5.0).contains(&rating) {
            warnings.push(format!("line {lineno}: rating {rating} outside [1, 5]"));
        }
        raw.push((user, item, rating));
    }
    if raw.is_empty() {
        return Err(Error::arg("no ratings found"));
    }
    let users: Vec<u64> = raw.iter().map(|r| r.0).collect::<BTreeSet<_>>().into_iter().collect();
    let items: Vec<u64> = raw.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
    let user_index: BTreeMap<u64, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let item_index: BTreeMap<u64, usize> = items.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let entries = raw
        .iter()
        .map(|&(u, it, v)| Observation {
            row: user_index[&u],
            col: item_index[&it],
            value: v,
        })
        .collect();
    for w in &warnings {
        warn!("{w}");
    }
    Ok(Ratings {
        obs: ObservationSet::new(users.len(), items.len(), entries)?,
        users,
        items,
        warnings,
    })
}

pub fn parse_ratings(path: &Path) -> Result<Ratings> {
    let text = fs::read_to_string(path)?;
    parse_ratings_str(&text)
}

/// Random partition into `n_train` training and `n - n_train` test
/// observations, drawn without replacement. Both parts keep file order.
pub fn split_train_test(obs: &ObservationSet, n_train: usize, seed: u64) -> Result<(ObservationSet, ObservationSet)> {
    let n = obs.n();
    if n_train == 0 || n_train > n {
        return Err(Error::arg(format!("training size {n_train} must lie in [1, {n}]")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let mut in_train = vec![false; n];
    for &i in &idx[..n_train] {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = obs
        .entries()
        .iter()
        .zip(&in_train)
        .partition(|(_, t)| **t);
    let strip = |v: Vec<(&Observation, &bool)>| v.into_iter().map(|(o, _)| *o).collect();
    Ok((
        ObservationSet::new(obs.p(), obs.q(), strip(train))?,
        ObservationSet::new(obs.p(), obs.q(), strip(test))?,
    ))
}

/// Mean squared prediction error on the test observations.
pub fn test_error(estimate: &Matrix, test: &ObservationSet) -> Result<f64> {
    test.check_shape(estimate)?;
    if test.is_empty() {
        return Err(Error::arg("empty test set"));
    }
    Ok(test
        .iter()
        .map(|e| (e.value - estimate[(e.row, e.col)]).powi(2))
        .sum::<f64>()
        / test.n() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealDataConfig {
    pub n_train: usize,
    pub max_iter: usize,
    pub kappa: f64,
    pub lambda_rule: LambdaRule,
    pub seed: u64,
    pub l_init: f64,
    pub beta: f64,
}

impl Default for RealDataConfig {
    fn default() -> Self {
        Self {
            n_train: 25_000,
            max_iter: 6000,
            kappa: 2.0,
            lambda_rule: LambdaRule::OneOverSqrtN,
            seed: 0,
            l_init: 0.1,
            beta: 1.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RealDataReport {
    pub path: String,
    pub config: RealDataConfig,
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub n_test: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub warnings: usize,
}

impl RealDataReport {
    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("path", &self.path);
        kv("p", &self.p);
        kv("q", &self.q);
        kv("n", &self.n);
        kv("n_train", &c.n_train);
        kv("n_test", &self.n_test);
        kv("seed", &c.seed);
        kv("loss", &LossSpec::Huber { kappa: c.kappa });
        kv("kappa", &c.kappa);
        kv("lambda_rule", &c.lambda_rule);
        kv("lambda", &self.lambda);
        kv("l_init", &c.l_init);
        kv("beta", &c.beta);
        kv("max_iter", &c.max_iter);
        kv("iterations", &self.iterations);
        kv("final_residual", &self.final_residual);
        kv("parse_warnings", &self.warnings);
        kv("train_error", &self.train_error);
        kv("test_error", &self.test_error);
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_key_value().as_bytes())?;
        Ok(())
    }
}

/// Parse, split, fit the Huber estimator from the matrix of observed training
/// ratings (zeros elsewhere), and score on the held-out part.
pub fn run_real_data(path: &Path, config: &RealDataConfig) -> Result<RealDataReport> {
    let ratings = parse_ratings(path)?;
    run_real_data_on(&ratings, &path.display().to_string(), config)
}

pub fn run_real_data_on(ratings: &Ratings, label: &str, config: &RealDataConfig) -> Result<RealDataReport> {
    let obs = &ratings.obs;
    let (train, test) = split_train_test(obs, config.n_train, config.seed)?;
    if test.is_empty() {
        return Err(Error::arg("training size leaves no test observations"));
    }
    let lambda = config.lambda_rule.lambda(obs.p(), obs.q(), train.n());
    let spec = LossSpec::huber(config.kappa)?;
    let init_data = train.observed_matrix();
    let eta = init_data.amax().max(1.0);
    let init = ParameterMatrix::new(init_data, eta)?;
    let solver = SolverConfig {
        lambda,
        l_init: config.l_init,
        beta: config.beta,
        max_iter: config.max_iter,
        eta,
        ..SolverConfig::default()
    };
    info!(
        "real data {label}: {}x{}, n_train={} n_test={} lambda={lambda}",
        obs.p(),
        obs.q(),
        train.n(),
        test.n()
    );
    let res = solve_any(&spec, &train, &solver, Some(&init))?;
    Ok(RealDataReport {
        path: label.to_string(),
        config: config.clone(),
        p: obs.p(),
        q: obs.q(),
        n: obs.n(),
        n_test: test.n(),
        lambda,
        iterations: res.iterations_run,
        final_residual: res.final_fixed_point_residual,
        train_error: test_error(&res.estimate.data, &train)?,
        test_error: test_error(&res.estimate.data, &test)?,
        warnings: ratings.warnings.len(),
    })
}
