//! Uniform-sampling trace regression data: low-rank truths, observation sets,
//! noise and sparse corruptions.
//!
//! Every generator takes an explicit seed and draws from [`Rng64`], so equal
//! seeds give bit-identical output on every platform.

use std::fmt;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::error::{Error, Result};
use crate::Matrix;

/// Random number generator used by every sampler in the crate.
pub type Rng64 = ChaCha8Rng;

/// Name of [`Rng64`], echoed into experiment metadata.
pub const RNG_NAME: &str = "ChaCha8Rng";

pub fn rng_from_seed(seed: u64) -> Rng64 {
    Rng64::seed_from_u64(seed)
}

/// Mixes a base seed with a stream label and an index (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A single sampled entry: the mask selects `(row, col)` and `value` is the
/// noisy response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Observed entries of a `p x q` matrix. The same cell may appear more than
/// once.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    p: usize,
    q: usize,
    entries: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(p: usize, q: usize, entries: Vec<Observation>) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::dim(format!("observation set needs p, q > 0, got {p}x{q}")));
        }
        if let Some(bad) = entries.iter().position(|e| e.row >= p || e.col >= q) {
            let e = entries[bad];
            return Err(Error::dim(format!(
                "entry {bad} at ({}, {}) is outside a {p}x{q} matrix",
                e.row, e.col
            )));
        }
        Ok(Self { p, q, entries })
    }

    pub fn from_triples(p: usize, q: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let entries = triples
            .iter()
            .map(|&(row, col, value)| Observation { row, col, value })
            .collect();
        Self::new(p, q, entries)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.entries.iter()
    }

    pub fn check_shape(&self, b: &Matrix) -> Result<()> {
        if b.nrows() != self.p || b.ncols() != self.q {
            return Err(Error::dim(format!(
                "matrix is {}x{} but observations index a {}x{} matrix",
                b.nrows(),
                b.ncols(),
                self.p,
                self.q
            )));
        }
        Ok(())
    }

    /// Largest number of times any single cell is observed.
    pub fn max_multiplicity(&self) -> usize {
        let mut counts = vec![0usize; self.p * self.q];
        for e in &self.entries {
            counts[e.row * self.q + e.col] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    /// Dense matrix holding the observed values and zeros elsewhere. When a
    /// cell is observed more than once the later value wins.
    pub fn observed_matrix(&self) -> Matrix {
        let mut m = DMatrix::zeros(self.p, self.q);
        for e in &self.entries {
            m[(e.row, e.col)] = e.value;
        }
        m
    }
}

/// Dense `p x q` parameter with its box bound `eta` (`max |entry| <= eta`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMatrix {
    pub data: Matrix,
    pub eta: f64,
}

impl ParameterMatrix {
    pub fn new(data: Matrix, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::arg(format!("eta must be positive and finite, got {eta}")));
        }
        Ok(Self { data, eta })
    }

    pub fn zeros(p: usize, q: usize, eta: f64) -> Result<Self> {
        Self::new(DMatrix::zeros(p, q), eta)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.amax()
    }

    pub fn within_box(&self) -> bool {
        self.max_abs() <= self.eta
    }
}

/// Low-rank truth `B0` of known rank.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub b_star: ParameterMatrix,
    pub rank: usize,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.b_star.data.nrows()
    }

    pub fn q(&self) -> usize {
        self.b_star.data.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Gaussian { stddev: f64 },
    StudentT { dof: f64 },
    None,
}

impl NoiseKind {
    /// Variance of the noise, `None` when it is infinite (Student-t with
    /// `dof <= 2`).
    pub fn variance(&self) -> Option<f64> {
        match *self {
            NoiseKind::Gaussian { stddev } => Some(stddev * stddev),
            NoiseKind::StudentT { dof } if dof > 2.0 => Some(dof / (dof - 2.0)),
            NoiseKind::StudentT { .. } => None,
            NoiseKind::None => Some(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Gaussian { stddev } if !(stddev > 0.0) || !stddev.is_finite() => {
                Err(Error::arg(format!("gaussian stddev must be positive, got {stddev}")))
            }
            NoiseKind::StudentT { dof } if !(dof > 0.0) || !dof.is_finite() => Err(Error::arg(
                format!("student-t degrees of freedom must be positive, got {dof}"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Gaussian { stddev } => write!(f, "gaussian:{stddev}"),
            NoiseKind::StudentT { dof } => write!(f, "student-t:{dof}"),
            NoiseKind::None => write!(f, "none"),
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    /// Parses `none`, `gaussian:<stddev>` (or bare `gaussian` for stddev 1)
    /// and `student-t:<dof>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let parse_param = |what: &str| -> Result<f64> {
            param
                .ok_or_else(|| Error::arg(format!("noise '{s}' needs a {what}")))?
                .parse::<f64>()
                .map_err(|_| Error::arg(format!("noise '{s}': {what} is not a number")))
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "none" => NoiseKind::None,
            "gaussian" | "normal" => NoiseKind::Gaussian {
                stddev: if param.is_some() { parse_param("stddev")? } else { 1.0 },
            },
            "student-t" | "studentt" | "t" => NoiseKind::StudentT {
                dof: parse_param("degrees of freedom")?,
            },
            other => return Err(Error::arg(format!("unknown noise model '{other}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    /// Draws `count` noise values from the model's own stream.
    pub fn draw(&self, count: usize) -> Result<Vec<f64>> {
        self.kind.validate()?;
        let mut rng = rng_from_seed(self.seed);
        let out = match self.kind {
            NoiseKind::None => vec![0.0; count],
            NoiseKind::Gaussian { stddev } => {
                let d = Normal::new(0.0, stddev).map_err(|e| Error::arg(e.to_string()))?;
                (0..count).map(|_| d.sample(&mut rng)).collect()
            }
            NoiseKind::StudentT { dof } => {
                let d = StudentT::new(dof).map_err(|e| Error::arg(e.to_string()))?;
                (0..count).map(|_| d.sample(&mut rng)).collect()
            }
        };
        Ok(out)
    }
}

/// Entrywise sparse corruption: a fraction of the observations get
/// `+-magnitude` added.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionModel {
    pub fraction: f64,
    pub magnitude: f64,
    pub seed: u64,
}

/// Builds `B0 = U V^T` from Gaussian factors, rescaled so the largest entry
/// has magnitude `eta / 2`.
pub fn generate_low_rank(p: usize, q: usize, s0: usize, eta: f64, seed: u64) -> Result<GroundTruth> {
    if p == 0 || q == 0 {
        return Err(Error::dim(format!("truth needs p, q >= 1, got {p}x{q}")));
    }
    if s0 == 0 || s0 > p.min(q) {
        return Err(Error::dim(format!("rank s0 = {s0} must lie in [1, {}]", p.min(q))));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::arg(format!("eta must be positive, got {eta}")));
    }
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let u = DMatrix::from_fn(p, s0, |_, _| normal.sample(&mut rng));
    let v = DMatrix::from_fn(q, s0, |_, _| normal.sample(&mut rng));
    let mut b = &u * v.transpose();
    let max = b.amax();
    if !(max > 0.0) {
        return Err(Error::numeric("degenerate low-rank factors"));
    }
    b *= 0.5 * eta / max;
    Ok(GroundTruth {
        b_star: ParameterMatrix::new(b, eta)?,
        rank: s0,
    })
}

/// Draws `n` cells independently and uniformly from the `p x q` grid and adds
/// noise to the true entries.
pub fn sample_uniform(
    truth: &GroundTruth,
    n: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<ObservationSet> {
    if n == 0 {
        return Err(Error::arg("sample size n must be positive"));
    }
    let (p, q) = truth.b_star.shape();
    let mut rng = rng_from_seed(seed);
    let eps = noise.draw(n)?;
    let entries = eps
        .into_iter()
        .map(|e| {
            let row = rng.random_range(0..p);
            let col = rng.random_range(0..q);
            Observation {
                row,
                col,
                value: truth.b_star.data[(row, col)] + e,
            }
        })
        .collect();
    ObservationSet::new(p, q, entries)
}

/// Observes every cell exactly once, in row-major order.
pub fn sample_exhaustive(truth: &GroundTruth, noise: &NoiseModel) -> Result<ObservationSet> {
    let (p, q) = truth.b_star.shape();
    let eps = noise.draw(p * q)?;
    let entries = (0..p)
        .flat_map(|row| (0..q).map(move |col| (row, col)))
        .zip(eps)
        .map(|((row, col), e)| Observation {
            row,
            col,
            value: truth.b_star.data[(row, col)] + e,
        })
        .collect();
    ObservationSet::new(p, q, entries)
}

/// Adds `+-magnitude` (random sign) to `round(fraction * n)` observations
/// chosen without replacement.
pub fn corrupt(obs: &ObservationSet, model: &CorruptionModel) -> Result<ObservationSet> {
    if !(0.0..=1.0).contains(&model.fraction) {
        return Err(Error::arg(format!(
            "corruption fraction must lie in [0, 1], got {}",
            model.fraction
        )));
    }
    if !model.magnitude.is_finite() {
        return Err(Error::arg("corruption magnitude must be finite"));
    }
    let n = obs.n();
    let count = (model.fraction * n as f64).round() as usize;
    let mut rng = rng_from_seed(model.seed);
    let mut out = obs.clone();
    let mut picked = index::sample(&mut rng, n, count.min(n)).into_vec();
    // index::sample's output order depends on the algorithm it picks
    picked.sort_unstable();
    for i in picked {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        out.entries[i].value += sign * model.magnitude;
    }
    Ok(out)
}
