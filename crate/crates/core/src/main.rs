use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use robustmc::harness::{
    self, default_n_grid, default_solver, Corruption, ExperimentSpec, LambdaRule, RealDataConfig,
};
use robustmc::prox::prox_self_check;
use robustmc::theory::run_invariant_suite;
use robustmc::{Error, LossSpec, NoiseKind};

const SEED_ENV: &str = "ROBUSTMC_SEED";

#[derive(Parser, Debug)]
#[command(name = "robustmc", version, about = "Robust nuclear-norm penalized matrix completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Error curves of several losses over a sample-size grid.
    Simulate(SimulateArgs),
    /// Error curves for several square problem sizes, raw and rescaled.
    SizeStudy(SizeStudyArgs),
    /// Huber estimator against the low-rank plus sparse estimator.
    CompareLrps(CompareArgs),
    /// Fit and score on a ratings file.
    RealData(RealDataArgs),
    /// Randomized checks of the norm inequalities.
    TheoryCheck(TheoryArgs),
    /// Randomized checks of the nuclear-norm proximal operator.
    ProxCheck(ProxArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Base seed; the ROBUSTMC_SEED environment variable overrides it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for replicate parallelism (default: logical cores).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    s0: u64,
    /// Noise law: student-t:DOF, gaussian[:SD] or none.
    #[arg(long, default_value = "student-t:3")]
    noise: NoiseKind,
    /// Box bound on the entries.
    #[arg(long, default_value_t = 10.0)]
    eta: f64,
    /// Huber constant of the oracle overlay and the comparison runs.
    #[arg(long, default_value_t = 1.345)]
    kappa: f64,
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    replicates: u64,
    /// paper_sim, one_over_sqrt_n or a number.
    #[arg(long, default_value = "paper_sim")]
    lambda_rule: LambdaRule,
    #[arg(long, default_value_t = 3000, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
    /// Early-stopping threshold on the fixed-point residual (0 disables).
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Clip iterates to [-eta, eta].
    #[arg(long)]
    box_projection: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    p: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    q: u64,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated losses: huber[:KAPPA], quadratic, absolute.
    #[arg(long, value_delimiter = ',', default_value = "huber:1.345,quadratic")]
    losses: Vec<LossSpec>,
    /// Comma-separated sample sizes (default: ten points from 3 p ln(p) s0 to p q).
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Fraction of observations hit by gross errors.
    #[arg(long)]
    corruption_fraction: Option<f64>,
    /// Size of the gross errors (default: eta).
    #[arg(long)]
    corruption_magnitude: Option<f64>,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SizeStudyArgs {
    /// Comma-separated sizes p = q.
    #[arg(long, value_delimiter = ',', default_value = "30,50,80")]
    sizes: Vec<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "huber:1.345")]
    losses: Vec<LossSpec>,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    p: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    q: u64,
    #[command(flatten)]
    model: ModelArgs,
    /// Add 5% gross errors of size eta.
    #[arg(long)]
    corrupted: bool,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RealDataArgs {
    /// Ratings file, tab- or '::'-separated.
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n_train: u64,
    #[arg(long, default_value_t = 6000, value_parser = clap::value_parser!(u64).range(1..))]
    max_iter: u64,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value = "one_over_sqrt_n")]
    lambda_rule: LambdaRule,
    #[arg(long, default_value_t = 0.1)]
    l_init: f64,
    #[arg(long, default_value_t = 1.2)]
    beta: f64,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[command(flatten)]
    common: Common,
    /// Also write the summary to DIR/theory_check.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProxArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    rows: u64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    cols: u64,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,1,10")]
    gammas: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    perturbations: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    common: Common,
    /// Also write the summary to DIR/prox_check.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numeric() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn check_failed(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type Outcome = std::result::Result<(), Failure>;

fn resolve_seed(flag: u64) -> std::result::Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn echo(pairs: &[(&str, String)]) {
    for (k, v) in pairs {
        println!("{k}={v}");
    }
}

fn with_jobs<T: Send>(jobs: Option<u64>, f: impl FnOnce() -> T + Send) -> std::result::Result<T, Failure> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j as usize)
                .build()
                .map_err(|e| invalid(format!("--jobs: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn build_spec(
    p: u64,
    q: u64,
    model: &ModelArgs,
    losses: Vec<LossSpec>,
    seed: u64,
) -> std::result::Result<ExperimentSpec, Failure> {
    if !(model.eta > 0.0) || !model.eta.is_finite() {
        return Err(invalid(format!("--eta must be positive, got {}", model.eta)));
    }
    if !(model.kappa > 0.0) || !model.kappa.is_finite() {
        return Err(invalid(format!("--kappa must be positive, got {}", model.kappa)));
    }
    if !(model.tol >= 0.0) {
        return Err(invalid(format!("--tol must be nonnegative, got {}", model.tol)));
    }
    if model.s0 > p.min(q) {
        return Err(invalid(format!("--s0 {} exceeds min(--p, --q) = {}", model.s0, p.min(q))));
    }
    let (p, q, s0) = (p as usize, q as usize, model.s0 as usize);
    let mut spec = ExperimentSpec::new(p, q, s0, model.noise);
    spec.eta = model.eta;
    spec.kappa = model.kappa;
    spec.losses = losses;
    spec.replicates = model.replicates as usize;
    spec.base_seed = seed;
    spec.lambda_rule = model.lambda_rule;
    spec.n_grid = default_n_grid(p, q, s0);
    spec.solver = robustmc::SolverConfig {
        max_iter: model.max_iter as usize,
        fixed_point_tol: model.tol,
        box_projection: model.box_projection,
        eta: model.eta,
        ..default_solver()
    };
    Ok(spec)
}

fn echo_spec(command: &str, spec: &ExperimentSpec, out: &Path, jobs: Option<u64>) {
    let losses: Vec<String> = spec.losses.iter().map(|l| l.to_string()).collect();
    let grid: Vec<String> = spec.n_grid.iter().map(|n| n.to_string()).collect();
    let corruption = spec
        .corruption
        .map(|c| format!("{}@{}", c.fraction, c.magnitude))
        .unwrap_or_else(|| "none".into());
    echo(&[
        ("command", command.into()),
        ("p", spec.p.to_string()),
        ("q", spec.q.to_string()),
        ("s0", spec.s0.to_string()),
        ("eta", spec.eta.to_string()),
        ("kappa", spec.kappa.to_string()),
        ("noise", spec.noise.to_string()),
        ("corruption", corruption),
        ("losses", losses.join(",")),
        ("n_grid", grid.join(",")),
        ("replicates", spec.replicates.to_string()),
        ("seed", spec.base_seed.to_string()),
        ("rng", robustmc::model::RNG_NAME.into()),
        ("lambda_rule", spec.lambda_rule.to_string()),
        ("l_init", spec.solver.l_init.to_string()),
        ("beta", spec.solver.beta.to_string()),
        ("bt_tolerance", spec.solver.bt_tolerance.to_string()),
        ("max_iter", spec.solver.max_iter.to_string()),
        ("tol", spec.solver.fixed_point_tol.to_string()),
        ("box_projection", spec.solver.box_projection.to_string()),
        ("jobs", jobs.map(|j| j.to_string()).unwrap_or_else(|| "auto".into())),
        ("out", out.display().to_string()),
    ]);
}

fn simulate(a: SimulateArgs) -> Outcome {
    let seed = resolve_seed(a.common.seed)?;
    let mut spec = build_spec(a.p, a.q, &a.model, a.losses, seed)?;
    if let Some(grid) = a.n_grid {
        spec.n_grid = grid;
    }
    if let Some(fraction) = a.corruption_fraction {
        spec.corruption = Some(Corruption {
            fraction,
            magnitude: a.corruption_magnitude.unwrap_or(spec.eta),
        });
    } else if a.corruption_magnitude.is_some() {
        return Err(invalid("--corruption-magnitude needs --corruption-fraction"));
    }
    spec.validate()?;
    echo_spec("simulate", &spec, &a.out, a.common.jobs);
    let res = with_jobs(a.common.jobs, || harness::run_error_curve(&spec))??;
    harness::write_replicates_csv(&a.out.join("replicates.csv"), &res.records)?;
    harness::write_curve_csv(&a.out.join("curve.csv"), &spec, &res.points)?;
    for (loss, c) in &res.display_constants {
        println!("display_constant[{loss}]={c}");
    }
    println!("failed_replicates={}", res.failures);
    Ok(())
}

fn size_study(a: SizeStudyArgs) -> Outcome {
    let seed = resolve_seed(a.common.seed)?;
    if a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(invalid("--sizes must list positive sizes"));
    }
    let smallest = *a.sizes.iter().min().unwrap() as u64;
    let template = build_spec(smallest, smallest, &a.model, a.losses, seed)?;
    template.validate()?;
    echo_spec("size-study", &template, &a.out, a.common.jobs);
    println!(
        "sizes={}",
        a.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
    );
    let sizes: Vec<(usize, usize)> = a.sizes.iter().map(|&s| (s, s)).collect();
    let study = with_jobs(a.common.jobs, || harness::run_problem_size_study(&sizes, &template))??;
    for c in &study.curves {
        let tag = format!("p{}_q{}", c.spec.p, c.spec.q);
        harness::write_replicates_csv(&a.out.join(format!("replicates_{tag}.csv")), &c.records)?;
        harness::write_curve_csv(&a.out.join(format!("curve_{tag}.csv")), &c.spec, &c.points)?;
    }
    study.write_rescaled_csv(&a.out.join("rescaled.csv"))?;
    Ok(())
}

fn compare(a: CompareArgs) -> Outcome {
    let seed = resolve_seed(a.common.seed)?;
    let spec = build_spec(a.p, a.q, &a.model, vec![LossSpec::huber(a.model.kappa)?], seed)?;
    spec.validate()?;
    echo_spec("compare-lrps", &spec, &a.out, a.common.jobs);
    println!("corrupted={}", a.corrupted);
    let res = with_jobs(a.common.jobs, || harness::run_klopp_comparison(&spec, a.corrupted))??;
    let name = if a.corrupted { "comparison_corrupted.csv" } else { "comparison_clean.csv" };
    res.write_csv(&a.out.join(name))?;
    Ok(())
}

fn real_data(a: RealDataArgs) -> Outcome {
    let seed = resolve_seed(a.common.seed)?;
    let config = RealDataConfig {
        n_train: a.n_train as usize,
        max_iter: a.max_iter as usize,
        kappa: a.kappa,
        lambda_rule: a.lambda_rule,
        seed,
        l_init: a.l_init,
        beta: a.beta,
    };
    echo(&[
        ("command", "real-data".into()),
        ("ratings", a.ratings.display().to_string()),
        ("out", a.out.display().to_string()),
    ]);
    let ratings = harness::parse_ratings(&a.ratings)?;
    let report = with_jobs(a.common.jobs, || {
        harness::run_real_data_on(&ratings, &a.ratings.display().to_string(), &config)
    })??;
    print!("{}", report.to_key_value());
    report.write(&a.out.join("report.txt"))?;
    ratings.write_dimension_map(&a.out.join("dimension_map.csv"))?;
    Ok(())
}

fn write_summary(out: Option<&PathBuf>, name: &str, text: &str) -> Outcome {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        std::fs::write(dir.join(name), text).map_err(Error::from)?;
    }
    Ok(())
}

fn theory_check(a: TheoryArgs) -> Outcome {
    let seed = resolve_seed(a.common.seed)?;
    echo(&[
        ("command", "theory-check".into()),
        ("trials", a.trials.to_string()),
        ("seed", seed.to_string()),
    ]);
    let reports = run_invariant_suite(a.trials as usize, seed)?;
    let mut text = String::new();
    for r in &reports {
        text += &format!(
            "{} {}: trials={} violations={} worst_slack={:e}\n",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.trials,
            r.violations,
            r.worst_slack
        );
    }
    let ok = reports.iter().all(|r| r.passed());
    text += &format!("summary={}\n", if ok { "all passed" } else { "violations found" });
    print!("{text}");
    write_summary(a.out.as_ref(), "theory_check.txt", &text)?;
    if ok {
        Ok(())
    } else {
        Err(check_failed("theory invariant violations"))
    }
}

fn prox_check(a: ProxArgs) -> Outcome {
    let seed = resolve_seed(a.common.seed)?;
    echo(&[
        ("command", "prox-check".into()),
        ("trials", a.trials.to_string()),
        ("rows", a.rows.to_string()),
        ("cols", a.cols.to_string()),
        ("gammas", a.gammas.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(",")),
        ("perturbations", a.perturbations.to_string()),
        ("tol", a.tol.to_string()),
        ("seed", seed.to_string()),
    ]);
    let r = prox_self_check(
        a.trials as usize,
        a.rows as usize,
        a.cols as usize,
        &a.gammas,
        a.perturbations as usize,
        seed,
    )?;
    let ok = r.passed(a.tol);
    let text = format!(
        "cases={}\nmax_spectrum_error={:e}\nperturbation_violations={}\nsummary={}\n",
        r.cases,
        r.max_spectrum_error,
        r.perturbation_violations,
        if ok { "passed" } else { "failed" }
    );
    print!("{text}");
    write_summary(a.out.as_ref(), "prox_check.txt", &text)?;
    if ok {
        Ok(())
    } else {
        Err(check_failed("prox check failed"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::SizeStudy(a) => size_study(a),
        Command::CompareLrps(a) => compare(a),
        Command::RealData(a) => real_data(a),
        Command::TheoryCheck(a) => theory_check(a),
        Command::ProxCheck(a) => prox_check(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
