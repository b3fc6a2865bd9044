//! Loss functions, empirical risk and its gradient over the observed entries.
//!
//! The Huber loss uses the `x^2` scaling (not `x^2 / 2`):
//!
//! ```text
//! rho(x) = x^2                   |x| <= kappa
//!        = 2 kappa |x| - kappa^2 |x| >  kappa
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::ObservationSet;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    Huber { kappa: f64 },
    Absolute,
    Quadratic,
}

impl LossSpec {
    pub fn huber(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::arg(format!("huber kappa must be positive, got {kappa}")));
        }
        Ok(LossSpec::Huber { kappa })
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            LossSpec::Huber { kappa } => {
                let a = x.abs();
                if a <= kappa {
                    x * x
                } else {
                    2.0 * kappa * a - kappa * kappa
                }
            }
            LossSpec::Absolute => x.abs(),
            LossSpec::Quadratic => x * x,
        }
    }

    /// Derivative in the residual. For the absolute loss this is the
    /// minimum-norm subgradient, so 0 at the origin.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            LossSpec::Huber { kappa } => {
                if x.abs() <= kappa {
                    2.0 * x
                } else {
                    2.0 * kappa * x.signum()
                }
            }
            LossSpec::Absolute => {
                if x == 0.0 {
                    0.0
                } else {
                    x.signum()
                }
            }
            LossSpec::Quadratic => 2.0 * x,
        }
    }

    /// Global Lipschitz constant of the loss; the quadratic loss has none.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            LossSpec::Huber { kappa } => Some(2.0 * kappa),
            LossSpec::Absolute => Some(1.0),
            LossSpec::Quadratic => None,
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, LossSpec::Absolute)
    }

    pub fn kappa(&self) -> Option<f64> {
        match *self {
            LossSpec::Huber { kappa } => Some(kappa),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Huber { .. } => "huber",
            LossSpec::Absolute => "absolute",
            LossSpec::Quadratic => "quadratic",
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Huber { kappa } => write!(f, "huber:{kappa}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once(':') {
            Some((name, k)) if name.eq_ignore_ascii_case("huber") => {
                let kappa = k
                    .parse::<f64>()
                    .map_err(|_| Error::arg(format!("loss '{s}': kappa is not a number")))?;
                LossSpec::huber(kappa)
            }
            None if s.eq_ignore_ascii_case("huber") => LossSpec::huber(1.345),
            None if s.eq_ignore_ascii_case("quadratic") => Ok(LossSpec::Quadratic),
            None if s.eq_ignore_ascii_case("absolute") => Ok(LossSpec::Absolute),
            _ => Err(Error::arg(format!("unknown loss '{s}'"))),
        }
    }
}

/// `(1/n) sum_i rho(y_i - B[row_i, col_i])`, summed in entry order.
pub fn empirical_risk(spec: &LossSpec, obs: &ObservationSet, b: &Matrix) -> Result<f64> {
    obs.check_shape(b)?;
    if obs.is_empty() {
        return Err(Error::arg("empirical risk of an empty observation set"));
    }
    let total: f64 = obs
        .iter()
        .map(|e| spec.value(e.value - b[(e.row, e.col)]))
        .sum();
    Ok(total / obs.n() as f64)
}

/// Gradient of [`empirical_risk`] in `B`. Only observed cells are non-zero;
/// repeated observations of a cell add up.
pub fn risk_gradient(spec: &LossSpec, obs: &ObservationSet, b: &Matrix) -> Result<Matrix> {
    obs.check_shape(b)?;
    if obs.is_empty() {
        return Err(Error::arg("gradient of an empty observation set"));
    }
    let scale = -1.0 / obs.n() as f64;
    let mut g = DMatrix::zeros(obs.p(), obs.q());
    for e in obs.iter() {
        g[(e.row, e.col)] += scale * spec.derivative(e.value - b[(e.row, e.col)]);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_low_rank, sample_exhaustive, sample_uniform, NoiseKind, NoiseModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: LossSpec = LossSpec::Huber { kappa: 1.345 };

    #[test]
    fn huber_values() {
        assert_eq!(H.value(0.0), 0.0);
        assert!((H.value(1.345) - 1.809025).abs() < 1e-12);
        assert!((H.value(3.0) - 6.260975).abs() < 1e-12);
        assert!((H.value(-3.0) - 6.260975).abs() < 1e-12);
        assert_eq!(LossSpec::Absolute.value(-2.5), 2.5);
        assert_eq!(LossSpec::Quadratic.value(-3.0), 9.0);
    }

    #[test]
    fn huber_derivatives() {
        assert!((H.derivative(0.5) - 1.0).abs() < 1e-15);
        assert!((H.derivative(-5.0) + 2.69).abs() < 1e-12);
        assert_eq!(LossSpec::Absolute.derivative(0.0), 0.0);
        assert_eq!(LossSpec::Absolute.derivative(-0.1), -1.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = 1e-6;
        for spec in [H, LossSpec::Quadratic, LossSpec::Absolute] {
            let mut checked = 0;
            while checked < 100 {
                let x: f64 = rng.random_range(-6.0..6.0);
                let knots: &[f64] = match spec {
                    LossSpec::Huber { kappa } => &[kappa, -kappa],
                    LossSpec::Absolute => &[0.0],
                    LossSpec::Quadratic => &[],
                };
                if knots.iter().any(|k| (x - k).abs() < 1e-3) {
                    continue;
                }
                let fd = (spec.value(x + h) - spec.value(x - h)) / (2.0 * h);
                assert!((fd - spec.derivative(x)).abs() < 1e-6, "{spec} at {x}: fd {fd}");
                checked += 1;
            }
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["huber:1.345", "quadratic", "absolute", "huber:2"] {
            let spec: LossSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("huber:-1".parse::<LossSpec>().is_err());
        assert!("hinge".parse::<LossSpec>().is_err());
    }

    #[test]
    fn single_observation_risk() {
        let obs = ObservationSet::from_triples(2, 2, &[(0, 0, 4.0)]).unwrap();
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 0)] = 1.0;
        assert_eq!(empirical_risk(&LossSpec::Quadratic, &obs, &b).unwrap(), 9.0);
        assert!((empirical_risk(&H, &obs, &b).unwrap() - 6.260975).abs() < 1e-12);
        let wrong = DMatrix::zeros(3, 2);
        assert!(matches!(empirical_risk(&H, &obs, &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn risk_and_gradient_vanish_at_noiseless_truth() {
        let t = generate_low_rank(6, 5, 2, 10.0, 4).unwrap();
        let obs = sample_exhaustive(&t, &NoiseModel::new(NoiseKind::None, 0)).unwrap();
        for spec in [H, LossSpec::Quadratic, LossSpec::Absolute] {
            assert_eq!(empirical_risk(&spec, &obs, &t.b_star.data).unwrap(), 0.0);
            assert_eq!(risk_gradient(&spec, &obs, &t.b_star.data).unwrap().amax(), 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_and_is_zero_off_support() {
        let t = generate_low_rank(6, 5, 2, 10.0, 8).unwrap();
        let noise = NoiseModel::new(NoiseKind::StudentT { dof: 3.0 }, 3);
        let obs = sample_uniform(&t, 20, &noise, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = DMatrix::from_fn(6, 5, |_, _| rng.random_range(-5.0..5.0));
        let g = risk_gradient(&H, &obs, &b).unwrap();
        let h = 1e-6;
        let mut seen = vec![false; 30];
        for e in obs.iter() {
            seen[e.row * 5 + e.col] = true;
        }
        for j in 0..6 {
            for k in 0..5 {
                let mut plus = b.clone();
                plus[(j, k)] += h;
                let mut minus = b.clone();
                minus[(j, k)] -= h;
                let fd = (empirical_risk(&H, &obs, &plus).unwrap()
                    - empirical_risk(&H, &obs, &minus).unwrap())
                    / (2.0 * h);
                assert!((fd - g[(j, k)]).abs() < 1e-5, "cell ({j},{k})");
                if !seen[j * 5 + k] {
                    assert_eq!(g[(j, k)], 0.0);
                }
            }
        }
    }

    #[test]
    fn huber_gradient_is_smooth() {
        // every cell observed exactly once, so the gradient is (2/n)-Lipschitz
        let t = generate_low_rank(6, 5, 2, 10.0, 8).unwrap();
        let obs = sample_exhaustive(&t, &NoiseModel::new(NoiseKind::StudentT { dof: 3.0 }, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let b1 = DMatrix::from_fn(6, 5, |_, _| rng.random_range(-10.0..10.0));
            let b2 = DMatrix::from_fn(6, 5, |_, _| rng.random_range(-10.0..10.0));
            let g1 = risk_gradient(&H, &obs, &b1).unwrap();
            let g2 = risk_gradient(&H, &obs, &b2).unwrap();
            let bound = 2.0 / obs.n() as f64 * (&b1 - &b2).norm();
            assert!((&g1 - &g2).norm() <= bound + 1e-12);
        }
    }

    fn any_spec() -> impl Strategy<Value = LossSpec> {
        prop_oneof![
            (0.05f64..5.0).prop_map(|kappa| LossSpec::Huber { kappa }),
            Just(LossSpec::Absolute),
            Just(LossSpec::Quadratic),
        ]
    }

    proptest! {
        #[test]
        fn losses_are_convex(spec in any_spec(), x in -50.0f64..50.0, y in -50.0f64..50.0, t in 0.0f64..=1.0) {
            let lhs = spec.value(t * x + (1.0 - t) * y);
            let rhs = t * spec.value(x) + (1.0 - t) * spec.value(y);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn robust_losses_are_lipschitz(spec in any_spec(), x in -50.0f64..50.0, y in -50.0f64..50.0) {
            if let Some(l) = spec.lipschitz() {
                let d = (spec.value(x) - spec.value(y)).abs();
                prop_assert!(d <= l * (x - y).abs() * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
