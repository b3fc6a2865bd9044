//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Pass criterion ids (e.g. `cargo test --test acceptance -- 1 5 7`) to run a
//! subset. Criterion 11 runs on the MovieLens-100k `u.data` file named by
//! `ROBUSTMC_MOVIELENS` and is skipped when that variable is unset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use robustmc::harness::{
    self, run_error_curve, run_klopp_comparison, write_curve_csv, write_replicates_csv, CurveResult,
    ExperimentSpec, RealDataConfig,
};
use robustmc::losses::{empirical_risk, risk_gradient};
use robustmc::model::{generate_low_rank, sample_exhaustive, sample_uniform};
use robustmc::prox::prox_nuclear;
use robustmc::solver::{solve, solve_absolute, DEFAULT_ABSOLUTE_SCHEDULE};
use robustmc::theory::{
    huber_risk_second_derivative, margin_constant_c1, margin_constant_c2, rademacher_envelope,
    rademacher_lambda_max_mc, run_invariant_suite,
};
use robustmc::{LossSpec, Matrix, NoiseKind, NoiseModel, ObservationSet, SolverConfig};

type Check = Result<String, String>;

const T3: NoiseKind = NoiseKind::StudentT { dof: 3.0 };
const GAUSS: NoiseKind = NoiseKind::Gaussian { stddev: 1.0 };
const SIM_SEED: u64 = 42;
const SIM_REPLICATES: usize = 10;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- oracles

/// Singular values by nalgebra's SVD, independent of the crate's SVD backend.
fn sv_oracle(a: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn nuclear_oracle(a: &Matrix) -> f64 {
    sv_oracle(a).iter().sum()
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Adaptive Simpson quadrature to absolute tolerance `eps`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, eps, 50)
}

fn gauss_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Student-t(3) density and CDF in closed form.
fn t3_pdf(x: f64) -> f64 {
    2.0 / (std::f64::consts::PI * 3f64.sqrt()) / (1.0 + x * x / 3.0).powi(2)
}

fn t3_cdf(x: f64) -> f64 {
    let th = (x / 3f64.sqrt()).atan();
    0.5 + (th + th.sin() * th.cos()) / std::f64::consts::PI
}

fn huber(kappa: f64, x: f64) -> f64 {
    if x.abs() <= kappa {
        x * x
    } else {
        2.0 * kappa * x.abs() - kappa * kappa
    }
}

/// `E rho_H(eps - b)` integrated over the fixed window `[center - w, center + w]`.
/// Outside the window the integrand is linear in `b`, so second differences in
/// `b` are unaffected by the truncation.
fn one_cell_risk(pdf: &dyn Fn(f64) -> f64, kappa: f64, b: f64, center: f64, w: f64) -> f64 {
    let mut knots = vec![center - w, b - kappa, b, b + kappa, center + w];
    knots.sort_by(f64::total_cmp);
    knots
        .windows(2)
        .map(|k| simpson(&|x| huber(kappa, x - b) * pdf(x), k[0], k[1], 1e-14))
        .sum()
}

// ---------------------------------------------------------------- criteria

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gammas = [0.0, 0.1, 1.0, 10.0];
    let mut max_err: f64 = 0.0;
    let mut beaten = 0;
    for _ in 0..100 {
        let w = gaussian(&mut rng, 10, 8);
        let sw = sv_oracle(&w);
        for &g in &gammas {
            let x = prox_nuclear(&w, g).map_err(|e| e.to_string())?;
            let sx = sv_oracle(&x);
            for (a, b) in sx.iter().zip(&sw) {
                max_err = max_err.max((a - (b - g).max(0.0)).abs());
            }
            let obj = |m: &Matrix| 0.5 * (m - &w).norm_squared() + g * nuclear_oracle(m);
            let best = obj(&x);
            for _ in 0..50 {
                let scale = 10f64.powf(rng.random_range(-4.0..0.0));
                let y = &x + gaussian(&mut rng, 10, 8) * scale;
                if obj(&y) < best - 1e-12 * (1.0 + best) {
                    beaten += 1;
                }
            }
        }
    }
    ensure(
        max_err <= 1e-8 && beaten == 0,
        format!("400 cases, max singular-value error {max_err:.1e} (tol 1e-8), {beaten} perturbations beat the prox"),
    )
}

fn criterion_2() -> Check {
    let spec = LossSpec::Huber { kappa: 1.345 };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let truth = generate_low_rank(6, 5, 2, 10.0, 100 + inst).map_err(|e| e.to_string())?;
        let obs = sample_uniform(&truth, 20, &NoiseModel::new(T3, 200 + inst), 300 + inst).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(400 + inst);
        let b = DMatrix::from_fn(6, 5, |_, _| rng.random_range(-6.0..6.0));
        let g = risk_gradient(&spec, &obs, &b).map_err(|e| e.to_string())?;
        for j in 0..6 {
            for k in 0..5 {
                let mut bp = b.clone();
                bp[(j, k)] += h;
                let mut bm = b.clone();
                bm[(j, k)] -= h;
                let fd = (empirical_risk(&spec, &obs, &bp).unwrap() - empirical_risk(&spec, &obs, &bm).unwrap()) / (2.0 * h);
                worst = worst.max((fd - g[(j, k)]).abs());
            }
        }
    }
    ensure(worst <= 1e-5, format!("20 instances, max |fd - grad| = {worst:.1e} (tol 1e-5)"))
}

fn scalar_obs(values: &[f64]) -> ObservationSet {
    let t: Vec<_> = values.iter().map(|&v| (0, 0, v)).collect();
    ObservationSet::from_triples(1, 1, &t).unwrap()
}

fn criterion_3() -> Check {
    let config = |lambda| SolverConfig {
        lambda,
        max_iter: 5000,
        fixed_point_tol: 1e-10,
        ..SolverConfig::default()
    };
    // quadratic: (1/2) sum (y - b)^2 + |b|, grid search over [-10, 10] step 1e-4
    let obs = scalar_obs(&[2.0, 4.0]);
    let bq = solve(&LossSpec::Quadratic, &obs, &config(1.0), None).map_err(|e| e.to_string())?.estimate.data[(0, 0)];
    let grid_q = (0..=200_000)
        .map(|i| -10.0 + i as f64 * 1e-4)
        .min_by(|a, b| {
            let f = |x: f64| 0.5 * ((2.0 - x).powi(2) + (4.0 - x).powi(2)) + x.abs();
            f(*a).total_cmp(&f(*b))
        })
        .unwrap();
    let ok_q = (bq - 2.5).abs() < 1e-6 && (grid_q - 2.5).abs() < 1e-4;

    // Huber on {0, 10}: every b in [kappa, 10 - kappa] attains the minimum
    let kappa = 1.345;
    let obs = scalar_obs(&[0.0, 10.0]);
    let bh = solve(&LossSpec::Huber { kappa }, &obs, &config(0.0), None).map_err(|e| e.to_string())?.estimate.data[(0, 0)];
    let risk = |x: f64| 0.5 * (huber(kappa, -x) + huber(kappa, 10.0 - x));
    let ok_h = (risk(bh) - risk(5.0)).abs() < 1e-9 && (kappa - 1e-6..=10.0 - kappa + 1e-6).contains(&bh);

    // absolute on {1, 2, 9}
    let obs = scalar_obs(&[1.0, 2.0, 9.0]);
    let ba = solve_absolute(&obs, &config(0.0), &DEFAULT_ABSOLUTE_SCHEDULE, None)
        .map_err(|e| e.to_string())?
        .estimate
        .data[(0, 0)];
    let ok_a = (ba - 2.0).abs() < 0.02;

    ensure(
        ok_q && ok_h && ok_a,
        format!(
            "quadratic {bq:.8} (want 2.5), huber {bh:.6} (minimizer set [{kappa}, {}], center 5), absolute {ba:.5} (want 2 +- 0.02)",
            10.0 - kappa
        ),
    )
}

fn criterion_4() -> Check {
    let truth = generate_low_rank(20, 15, 2, 10.0, 7).map_err(|e| e.to_string())?;
    let obs = sample_exhaustive(&truth, &NoiseModel::new(NoiseKind::None, 0)).map_err(|e| e.to_string())?;
    let config = SolverConfig {
        lambda: 1e-10,
        max_iter: 20_000,
        fixed_point_tol: 1e-11,
        ..SolverConfig::default()
    };
    let res = solve(&LossSpec::Quadratic, &obs, &config, None).map_err(|e| e.to_string())?;
    let rel = (&res.estimate.data - &truth.b_star.data).norm() / truth.b_star.data.norm();
    ensure(
        rel < 1e-4,
        format!("20x15 rank 2, relative Frobenius error {rel:.2e} (tol 1e-4) after {} iterations", res.iterations_run),
    )
}

fn criterion_5() -> Check {
    let reports = run_invariant_suite(1000, 5).map_err(|e| e.to_string())?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed() || r.trials < 1000)
        .map(|r| format!("{} ({} violations)", r.name, r.violations))
        .collect();
    let worst = reports.iter().map(|r| r.worst_slack).fold(f64::INFINITY, f64::min);
    ensure(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} families x 1000 instances, worst slack {worst:.2e}", reports.len())
        } else {
            format!("failing families: {}", failed.join(", "))
        },
    )
}

fn criterion_6() -> Check {
    let kappa = 1.345;
    let mut worst_second: f64 = 0.0;
    let h = 1e-3;
    for (noise, pdf) in [(GAUSS, &gauss_pdf as &dyn Fn(f64) -> f64), (T3, &t3_pdf)] {
        for i in 0..20 {
            let b = -3.0 + 6.0 * i as f64 / 19.0;
            let r = |x: f64| one_cell_risk(pdf, kappa, x, b, 60.0);
            let fd = (r(b + h) - 2.0 * r(b) + r(b - h)) / (h * h);
            let lib = huber_risk_second_derivative(&noise, kappa, b).map_err(|e| e.to_string())?;
            worst_second = worst_second.max((fd - lib).abs());
        }
    }

    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    // C1, Gaussian: the interval mass at u = eta, integrated directly
    let mass_g = simpson(&gauss_pdf, 10.0 - kappa, 10.0 + kappa, 1e-30);
    let c1_g = margin_constant_c1(&GAUSS, kappa, 10.0).map_err(|e| e.to_string())?.c1;
    let e1 = rel(c1_g, 1.0 / mass_g.sqrt());
    // C1, Student-t(3): closed-form CDF
    let c1_t = margin_constant_c1(&T3, kappa, 10.0).map_err(|e| e.to_string())?.c1;
    let e2 = rel(c1_t, 1.0 / (t3_cdf(10.0 + kappa) - t3_cdf(10.0 - kappa)).sqrt());
    // C2: density at 2 eta
    let c2_t = margin_constant_c2(&T3, 10.0).map_err(|e| e.to_string())?.c2;
    let e3 = rel(c2_t, 1.0 / t3_pdf(20.0).sqrt());
    let c2_g = margin_constant_c2(&GAUSS, 0.5).map_err(|e| e.to_string())?.c2;
    let e4 = rel(c2_g, 1.0 / gauss_pdf(1.0).sqrt());
    let worst_c = e1.max(e2).max(e3).max(e4);
    ensure(
        worst_second <= 1e-4 && worst_c <= 1e-6,
        format!(
            "second derivative max error {worst_second:.1e} (tol 1e-4, 40 points); margin constants max relative error {worst_c:.1e} (tol 1e-6)"
        ),
    )
}

struct CurvePair {
    t3: CurveResult,
    gauss: CurveResult,
    elapsed: Duration,
}

fn curve_spec(noise: NoiseKind) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(30, 30, 2, noise);
    spec.replicates = SIM_REPLICATES;
    spec.base_seed = SIM_SEED;
    spec
}

fn run_curves() -> robustmc::Result<CurvePair> {
    let start = Instant::now();
    let t3 = run_error_curve(&curve_spec(T3))?;
    let gauss = run_error_curve(&curve_spec(GAUSS))?;
    Ok(CurvePair {
        t3,
        gauss,
        elapsed: start.elapsed(),
    })
}

fn means(curve: &CurveResult, loss: &LossSpec) -> Vec<(usize, f64)> {
    curve.curve(loss).iter().map(|pt| (pt.n, pt.mean_error)).collect()
}

const HUBER: LossSpec = LossSpec::Huber { kappa: 1.345 };

fn criterion_7a(f: &CurvePair) -> Check {
    let h = means(&f.t3, &HUBER);
    let q = means(&f.t3, &LossSpec::Quadratic);
    let k = h.len();
    let pairs: Vec<String> = (k - 2..k)
        .map(|i| format!("n={}: huber {:.4} vs quadratic {:.4}", h[i].0, h[i].1, q[i].1))
        .collect();
    ensure((k - 2..k).all(|i| h[i].1 < q[i].1), format!("student-t(3) {}", pairs.join("; ")))
}

fn criterion_7b(f: &CurvePair) -> Check {
    let h = *means(&f.gauss, &HUBER).last().unwrap();
    let q = *means(&f.gauss, &LossSpec::Quadratic).last().unwrap();
    let ratio = h.1.max(q.1) / h.1.min(q.1);
    ensure(
        ratio <= 1.5,
        format!("gaussian n={}: huber {:.4} vs quadratic {:.4}, ratio {ratio:.3} (limit 1.5)", h.0, h.1, q.1),
    )
}

fn criterion_7c(f: &CurvePair) -> Check {
    let h = means(&f.t3, &HUBER);
    let (first, last) = (h[0], *h.last().unwrap());
    let factor = first.1 / last.1;
    ensure(
        factor >= 3.0 && f.elapsed < Duration::from_secs(15 * 60),
        format!(
            "student-t(3) huber {:.4} at n={} -> {:.4} at n={}, factor {factor:.2} (need 3); both curves took {:.0} s (limit 900 s)",
            first.1, first.0, last.1, last.0,
            f.elapsed.as_secs_f64()
        ),
    )
}

/// Least-squares line `y = a + b x`; returns `(b, R^2)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}

fn criterion_8(f: &CurvePair) -> Check {
    let pts = f.t3.curve(&HUBER);
    let top = &pts[pts.len() - 5..];
    let x: Vec<f64> = top.iter().map(|pt| (pt.n as f64).ln()).collect();
    let y: Vec<f64> = top.iter().map(|pt| pt.mean_error.ln()).collect();
    let (slope, r2) = linear_fit(&x, &y);
    let c = top.iter().map(|pt| pt.mean_error * pt.oracle_value).sum::<f64>()
        / top.iter().map(|pt| pt.oracle_value.powi(2)).sum::<f64>();
    ensure(
        r2 >= 0.8 && (-1.4..=-0.6).contains(&slope),
        format!("student-t(3) huber, top 5 n: exponent {slope:.3} (need [-1.4, -0.6]), R^2 {r2:.4} (need 0.8), fitted constant {c:.3}"),
    )
}

fn criterion_9() -> Vec<(String, Check)> {
    let start = Instant::now();
    let spec = curve_spec(T3);
    let corrupted = run_klopp_comparison(&spec, true);
    let clean = run_klopp_comparison(&spec, false);
    let elapsed = start.elapsed();
    let time_ok = elapsed < Duration::from_secs(20 * 60);
    let timing = format!("{:.0} s for both (limit 1200 s)", elapsed.as_secs_f64());
    let a = corrupted.map_err(|e| e.to_string()).and_then(|r| {
        let pt = r.points.last().unwrap();
        ensure(
            pt.huber_mean <= pt.lrps_mean && time_ok,
            format!(
                "corrupted student-t(3) n={}: huber {:.4} vs lrps {:.4}; {timing}",
                pt.n, pt.huber_mean, pt.lrps_mean
            ),
        )
    });
    let b = clean.map_err(|e| e.to_string()).and_then(|r| {
        let pt = r.points.last().unwrap();
        let ratio = pt.huber_mean.max(pt.lrps_mean) / pt.huber_mean.min(pt.lrps_mean);
        ensure(
            ratio <= 1.5 && time_ok,
            format!(
                "uncorrupted student-t(3) n={}: huber {:.4} vs lrps {:.4}, ratio {ratio:.3} (limit 1.5)",
                pt.n, pt.huber_mean, pt.lrps_mean
            ),
        )
    });
    vec![("9a".into(), a), ("9b".into(), b)]
}

fn criterion_10() -> Check {
    let single = rademacher_lambda_max_mc(30, 30, 1, 50, 1).map_err(|e| e.to_string())?;
    let exact = single.values.iter().all(|v| (v - 1.0).abs() < 1e-12);

    let reps = 200;
    let small = rademacher_lambda_max_mc(30, 30, 225, reps, 2).map_err(|e| e.to_string())?;
    let large = rademacher_lambda_max_mc(30, 30, 900, reps, 3).map_err(|e| e.to_string())?;
    let se = (small.std_dev.powi(2) / reps as f64 + large.std_dev.powi(2) / reps as f64).sqrt();
    let decreasing = large.mean < small.mean + 2.0 * se;

    let env = rademacher_envelope(30, 30, 900);
    let ratios: Vec<f64> = (0..5)
        .map(|s| rademacher_lambda_max_mc(30, 30, 900, reps, 10 + s).map(|m| m.mean / env))
        .collect::<robustmc::Result<_>>()
        .map_err(|e| e.to_string())?;
    let m = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let sd = (ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (ratios.len() - 1) as f64).sqrt();
    let cv = sd / m;
    ensure(
        exact && decreasing && cv < 0.1 && m.is_finite(),
        format!(
            "n=1 exact: {exact}; mean {:.4} (n=225) -> {:.4} (n=900); envelope ratio {m:.3} with CV {cv:.4} over 5 seeds (limit 0.1)",
            small.mean, large.mean
        ),
    )
}

fn criterion_11() -> (String, Check) {
    let Ok(path) = std::env::var("ROBUSTMC_MOVIELENS") else {
        return ("11".into(), Ok("SKIP".into()));
    };
    let ratings = match harness::parse_ratings(Path::new(&path)) {
        Ok(r) => r,
        Err(e) => return ("11".into(), Err(e.to_string())),
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for (n_train, target) in [(25_000, 1.48), (50_000, 1.09), (75_000, 0.96)] {
        let config = RealDataConfig {
            n_train,
            ..RealDataConfig::default()
        };
        match harness::run_real_data_on(&ratings, &path, &config) {
            Ok(r) => {
                let rel = (r.test_error - target) / target;
                ok &= rel.abs() <= 0.15;
                parts.push(format!("{n_train}: {:.3} vs {target} ({:+.1}%)", r.test_error, 100.0 * rel));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{n_train}: {e}"));
            }
        }
    }
    ("11".into(), ensure(ok, format!("movielens test errors {}", parts.join("; "))))
}

fn criterion_12(first: &CurvePair) -> Check {
    let second = run_curves().map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut identical = true;
    let mut files = 0;
    for (tag, a, b) in [("t3", &first.t3, &second.t3), ("gauss", &first.gauss, &second.gauss)] {
        for (run, curve) in [("a", a), ("b", b)] {
            let d = dir.path().join(run);
            write_curve_csv(&d.join(format!("curve_{tag}.csv")), &curve.spec, &curve.points).map_err(|e| e.to_string())?;
            write_replicates_csv(&d.join(format!("replicates_{tag}.csv")), &curve.records).map_err(|e| e.to_string())?;
        }
        for name in [format!("curve_{tag}.csv"), format!("replicates_{tag}.csv")] {
            let x = std::fs::read(dir.path().join("a").join(&name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(dir.path().join("b").join(&name)).map_err(|e| e.to_string())?;
            identical &= x == y;
            files += 1;
        }
    }
    ensure(identical, format!("{files} CSV files compared byte for byte, identical: {identical}"))
}

// ---------------------------------------------------------------- driver

struct Suite {
    selected: Vec<String>,
    failures: usize,
}

impl Suite {
    fn wants(&self, id: &str) -> bool {
        // "7" selects 7a, 7b and 7c but "1" does not select 10
        self.selected.is_empty()
            || self.selected.iter().any(|s| {
                id.strip_prefix(s.as_str())
                    .is_some_and(|rest| rest.chars().all(|c| c.is_ascii_alphabetic()))
            })
    }

    fn report(&mut self, id: &str, title: &str, elapsed: Duration, limit: Option<u64>, check: Check) {
        let over = limit.is_some_and(|l| elapsed > Duration::from_secs(l));
        let (status, detail) = match check {
            Ok(d) if d == "SKIP" => ("SKIP", "set ROBUSTMC_MOVIELENS to the path of u.data to run".to_string()),
            Ok(d) if over => ("FAIL", format!("{d}; over the {} s limit", limit.unwrap())),
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            self.failures += 1;
        }
        println!(
            "criterion {id:<3} {status}  {title}: {detail} [{:.1} s]",
            elapsed.as_secs_f64()
        );
    }

    fn run(&mut self, id: &str, title: &str, limit: Option<u64>, f: impl FnOnce() -> Check) {
        if !self.wants(id) {
            return;
        }
        let start = Instant::now();
        let check = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        self.report(id, title, start.elapsed(), limit, check);
    }
}

fn main() {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut suite = Suite { selected, failures: 0 };

    suite.run("1", "prox correctness", Some(10), criterion_1);
    suite.run("2", "gradient correctness", Some(5), criterion_2);
    suite.run("3", "solver exactness", Some(5), criterion_3);
    suite.run("4", "noiseless recovery", Some(30), criterion_4);
    suite.run("5", "theory invariant suite", Some(60), criterion_5);
    suite.run("6", "margin machinery", Some(30), criterion_6);

    let needs_curves = ["7", "8", "12"].iter().any(|id| suite.wants(id));
    if needs_curves {
        let start = Instant::now();
        match run_curves() {
            Ok(curves) => {
                println!("(criterion 7 curves computed in {:.1} s)", start.elapsed().as_secs_f64());
                suite.run("7a", "huber beats quadratic under student-t", None, || criterion_7a(&curves));
                suite.run("7b", "huber close to quadratic under gaussian", None, || criterion_7b(&curves));
                suite.run("7c", "huber error falls with n", None, || criterion_7c(&curves));
                suite.run("8", "rate tracking", None, || criterion_8(&curves));
                suite.run("12", "determinism", None, || criterion_12(&curves));
            }
            Err(e) => {
                for id in ["7a", "7b", "7c", "8", "12"] {
                    suite.report(id, "error curves", start.elapsed(), None, Err(e.to_string()));
                }
            }
        }
    }

    if suite.wants("9") {
        let start = Instant::now();
        let results = catch_unwind(criterion_9).unwrap_or_else(|_| {
            vec![("9a".into(), Err("panicked".into())), ("9b".into(), Err("panicked".into()))]
        });
        let elapsed = start.elapsed();
        for (id, check) in results {
            suite.report(&id, "comparison with low-rank plus sparse", elapsed, None, check);
        }
    }
    suite.run("10", "monte-carlo tail bound", Some(60), criterion_10);
    if suite.wants("11") {
        let start = Instant::now();
        let (id, check) = criterion_11();
        suite.report(&id, "movielens table", start.elapsed(), None, check);
    }

    if suite.failures > 0 {
        println!("acceptance: {} criterion line(s) failed", suite.failures);
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
