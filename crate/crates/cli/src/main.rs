use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sparse_intensity::dictionary::{BernsteinConfig, DictionaryConfig, HawkesFeatureConfig, SigmoidConfig};
use sparse_intensity::eval::{oos_lr_test, time_rescaling_residuals, EvalReport, RescalingResult, TestResult};
use sparse_intensity::experiment::{run_benchmark, BenchmarkConfig, DictionaryKind};
use sparse_intensity::fw::{fit, FitConfig, InitialOffset, StepRule};
use sparse_intensity::hawkes::{fit_hawkes_joint, hawkes_residuals, HawkesFitConfig};
use sparse_intensity::model_io::{read_timeline, write_covariates, write_events, write_json, write_trace, ModelFile};
use sparse_intensity::select::{aic_select, validation_select, BudgetReport};
use sparse_intensity::sim::{
    centering_gamma, manifest, simulate_cox, simulate_hawkes_cov, HawkesDesign, Profile, SimDesign, Truth,
};
use sparse_intensity::timeline::{winsorize_standardize, PreprocessTransform};
use sparse_intensity::Error;

#[derive(Parser)]
#[command(name = "spint", version, about = "Sparse additive intensity models for event data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write events.csv, covariates.csv and manifest.json.
    Simulate(SimulateArgs),
    /// Fit a model and write model.json and trace.jsonl.
    Fit(FitArgs),
    /// Score fitted models on held-out data.
    Evaluate(EvaluateArgs),
    /// Replicated simulate/fit/score loop with loss quartiles.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TruthArg {
    Linear,
    Convex,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Fewlarge,
    Manysmall,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long = "K", default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, value_enum, default_value = "linear")]
    truth: TruthArg,
    #[arg(long, value_enum, default_value = "fewlarge")]
    profile: ProfileArg,
    /// Self-exciting design with baseline and decay `c0,a0`.
    #[arg(long, value_name = "C0,A0")]
    hawkes: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo draws for the centering constant of self-exciting designs.
    #[arg(long, default_value_t = 200_000)]
    gamma_draws: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value_t = 1100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    replication: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectArg {
    Aic,
    Validation,
}

#[derive(Clone, Copy, ValueEnum)]
enum F0Arg {
    Zero,
    Lograte,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    covariates: PathBuf,
    /// End of the observation window; defaults to the last event time.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Single budget.
    #[arg(long = "B", conflicts_with = "grid")]
    budget: Option<f64>,
    /// Budget grid, e.g. `1,4,8,16`.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "aic")]
    select: SelectArg,
    /// Share of the latest events held out for validation selection.
    #[arg(long, default_value_t = 0.2)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long)]
    no_line_search: bool,
    /// Comma list of intercept, linear, poly, trig, sigmoid, bernstein, hawkes.
    #[arg(long, value_delimiter = ',', default_value = "intercept,linear")]
    families: Vec<String>,
    #[arg(long, default_value_t = 3)]
    poly_degree: u32,
    #[arg(long, default_value_t = 2)]
    trig_frequency: u32,
    #[arg(long, default_value_t = 5)]
    bernstein_order: usize,
    /// Coordinate (0-based) driving the sigmoid transition.
    #[arg(long, default_value_t = 0)]
    sigmoid_threshold: usize,
    #[arg(long)]
    unit_weights: bool,
    #[arg(long, value_enum, default_value = "lograte")]
    f0: F0Arg,
    /// Winsorize and standardize covariates at this quantile before fitting.
    #[arg(long)]
    winsorize: Option<f64>,
    /// Fit a self-exciting baseline jointly with the covariate part.
    #[arg(long)]
    self_exciting: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Competing model for the likelihood-ratio test.
    #[arg(long)]
    against: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Training events per replication.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    test_jumps: usize,
    #[arg(long, default_value_t = 200)]
    replications: usize,
    /// Worker threads across replications; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,4,8,16")]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Comma list of lin, poly.
    #[arg(long, value_delimiter = ',', default_value = "lin,poly")]
    dictionaries: Vec<String>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

/// Failure with its exit code: 2 usage, 3 data, 4 numeric.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error.chain().find_map(|e| e.downcast_ref::<Error>()).map_or(3, exit_code);
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), error: e.into() }
    }
}

fn usage(msg: String) -> Failure {
    Failure { code: 2, error: anyhow::anyhow!(msg) }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) => 2,
        Error::NumericOverflow { .. }
        | Error::NonFiniteLikelihood
        | Error::CholeskyFailure { .. }
        | Error::ExplosionGuard { .. }
        | Error::TimeResolution { .. }
        | Error::ZeroVariance
        | Error::DegenerateDenominator => 4,
        _ => 3,
    }
}

fn design_from(args: &DesignArgs, n: usize) -> Result<SimDesign, Failure> {
    if args.rho.is_nan() || args.rho.abs() >= 1.0 {
        return Err(usage(format!("--rho must lie in (-1, 1), got {}", args.rho)));
    }
    if args.k == 0 {
        return Err(usage("--K must be positive".into()));
    }
    if n == 0 {
        return Err(usage("--n must be positive".into()));
    }
    let truth = match args.truth {
        TruthArg::Linear => Truth::Linear,
        TruthArg::Convex => Truth::Convex,
        TruthArg::Zero => Truth::Zero,
    };
    let profile = match args.profile {
        ProfileArg::Fewlarge => Profile::FewLarge,
        ProfileArg::Manysmall => Profile::ManySmall,
    };
    Ok(match &args.hawkes {
        None => SimDesign::cox(args.k, args.rho, truth, profile, n, args.seed),
        Some(spec) => {
            let parts: Vec<&str> = spec.split(',').collect();
            let parsed: Vec<f64> = parts.iter().filter_map(|p| p.trim().parse().ok()).collect();
            if parts.len() != 2 || parsed.len() != 2 || !(parsed[0] > 0.0 && parsed[1] > 0.0) {
                return Err(usage(format!("--hawkes expects two positive numbers `c0,a0`, got {spec:?}")));
            }
            SimDesign::hawkes(args.k, args.rho, truth, profile, n, HawkesDesign::new(parsed[0], parsed[1]), args.seed)
        }
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let design = design_from(&args.design, args.n)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let (path, gamma) = match design.hawkes {
        Some(_) => {
            let g = centering_gamma(&design, args.design.gamma_draws)?;
            (simulate_hawkes_cov(&design, g.gamma, args.replication)?, Some(g))
        }
        None => (simulate_cox(&design, args.replication)?, None),
    };
    write_events(&args.out.join("events.csv"), path.timeline.jump_times())?;
    write_covariates(&args.out.join("covariates.csv"), &path.timeline)?;
    write_json(&args.out.join("manifest.json"), &manifest(&design, args.replication, gamma))?;
    Ok(())
}

fn dictionary_from(args: &FitArgs) -> Result<DictionaryConfig, Failure> {
    let mut cfg = DictionaryConfig { intercept: false, linear: false, ..DictionaryConfig::default() };
    for fam in &args.families {
        match fam.trim() {
            "intercept" => cfg.intercept = true,
            "linear" => cfg.linear = true,
            "poly" => cfg.monomial_powers = (1..=args.poly_degree).collect(),
            "trig" => cfg.trig_max_frequency = args.trig_frequency,
            "sigmoid" => cfg.sigmoid = Some(SigmoidConfig { threshold: args.sigmoid_threshold, grid: 21 }),
            "bernstein" => cfg.bernstein = Some(BernsteinConfig { order: args.bernstein_order, alpha: None }),
            "hawkes" => cfg.hawkes_feature = Some(HawkesFeatureConfig::default()),
            other => return Err(usage(format!("--families: unknown family {other:?}"))),
        }
    }
    if args.unit_weights {
        cfg.weights = sparse_intensity::dictionary::WeightScheme::Unit;
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct FitReport {
    budget: f64,
    loglik: f64,
    n_active: usize,
    reports: Vec<BudgetReport>,
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let raw = read_timeline(&args.data.events, &args.data.covariates, args.data.horizon)?;
    let (timeline, transform) = match args.winsorize {
        Some(q) => winsorize_standardize(&raw, q)?,
        None => (raw.clone(), PreprocessTransform::identity(raw.dim())),
    };
    let dict = dictionary_from(&args)?;
    dict.validate(timeline.dim())?;
    let f0_rule = match args.f0 {
        F0Arg::Zero => InitialOffset::Zero,
        F0Arg::Lograte => InitialOffset::LogRate,
    };
    let cfg = FitConfig {
        budget: args.budget.unwrap_or(FitConfig::default().budget),
        iterations: args.iters,
        step: if args.no_line_search { StepRule::Deterministic } else { StepRule::LineSearch },
        f0: f0_rule,
        gap_tolerance: None,
        seed: args.seed,
    };
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let (model, trace, hawkes, reports) = if args.self_exciting {
        if args.grid.is_some() {
            return Err(usage("--self-exciting takes a single --B".into()));
        }
        let f = fit_hawkes_joint(&timeline, &dict, &cfg, &HawkesFitConfig::default())?;
        (f.model, f.trace, Some(f.params), Vec::new())
    } else {
        match &args.grid {
            None => {
                let (m, t) = fit(&timeline, &dict, &cfg)?;
                (m, t, None, Vec::new())
            }
            Some(grid) => {
                let sel = match args.select {
                    SelectArg::Aic => aic_select(&timeline, grid, &dict, &cfg)?,
                    SelectArg::Validation => {
                        let f = args.validation_fraction;
                        if !(f > 0.0 && f < 1.0) {
                            return Err(usage(format!("--validation-fraction must be in (0, 1), got {f}")));
                        }
                        let n = timeline.n_jumps();
                        let n_train = ((1.0 - f) * n as f64).round() as usize;
                        if n_train == 0 || n_train >= n {
                            return Err(Error::EmptyValidation.into());
                        }
                        let train = timeline.head_jumps(n_train)?;
                        let valid = timeline.window(train.horizon(), timeline.horizon())?;
                        validation_select(&train, &valid, grid, &dict, &cfg)?
                    }
                };
                (sel.model, sel.trace, None, sel.reports)
            }
        }
    };
    let file = ModelFile::new(&model, f0_rule, transform, hawkes);
    file.write(&args.out.join("model.json"))?;
    write_trace(&args.out.join("trace.jsonl"), &trace)?;
    let report = FitReport { budget: model.budget, loglik: trace.final_loglik(), n_active: model.n_active(), reports };
    write_json(&args.out.join("fit_report.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluateOutput {
    rescaling: RescalingResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<TestResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<EvalReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

fn load_model(path: &Path, dim: usize) -> Result<ModelFile, Failure> {
    let file = ModelFile::read(path).with_context(|| format!("reading {}", path.display()))?;
    if file.dim != dim {
        return Err(Failure {
            code: 3,
            error: anyhow::anyhow!("{} has K = {} but the data has K = {}", path.display(), file.dim, dim),
        });
    }
    Ok(file)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let raw = read_timeline(&args.data.events, &args.data.covariates, args.data.horizon)?;
    let main = load_model(&args.model, raw.dim())?;
    let data = main.preprocessing.apply(&raw)?;
    let model = main.model()?;
    let rescaling = match main.hawkes {
        Some(params) => {
            let residuals = hawkes_residuals(&data, params, &model)?;
            let (ks, p_value) = sparse_intensity::eval::ks_exp1(&residuals);
            RescalingResult { residuals, ks, p_value }
        }
        None => time_rescaling_residuals(&model, &data)?,
    };
    let mut out = EvaluateOutput { rescaling, test: None, summary: None, warnings: Vec::new() };
    if let Some(path) = &args.against {
        let other = load_model(path, raw.dim())?;
        if main.hawkes.is_some() || other.hawkes.is_some() {
            return Err(usage("the likelihood-ratio test compares models without a self-exciting part".into()));
        }
        if other.preprocessing != main.preprocessing {
            return Err(usage("models were fitted with different preprocessing".into()));
        }
        match oos_lr_test(&model, &other.model()?, &data) {
            Ok(t) => {
                out.summary = Some(EvalReport::from(&t));
                out.test = Some(t);
            }
            Err(Error::ZeroVariance) => {
                let msg = "models agree on every event; test statistic undefined".to_string();
                eprintln!("warning: {msg}");
                out.warnings.push(msg);
            }
            Err(e) => return Err(e.into()),
        }
    }
    write_json(&args.out, &out)?;
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), Failure> {
    let design = design_from(&args.design, args.n)?;
    let mut dictionaries = Vec::new();
    for d in &args.dictionaries {
        dictionaries.push(match d.trim().to_ascii_lowercase().as_str() {
            "lin" => DictionaryKind::Lin,
            "poly" => DictionaryKind::Poly,
            other => return Err(usage(format!("--dictionaries: unknown dictionary {other:?}"))),
        });
    }
    if args.replications == 0 {
        return Err(usage("--replications must be positive".into()));
    }
    let mut cfg = BenchmarkConfig::new(design, dictionaries, args.replications);
    cfg.test_jumps = args.test_jumps;
    cfg.grid = args.grid;
    cfg.iterations = args.iters;
    cfg.gamma_draws = args.design.gamma_draws;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build().context("building the worker pool")?;
    let report = pool.install(|| run_benchmark(&cfg))?;
    for s in &report.summaries {
        eprintln!(
            "{:<4} median {:8.2}  q25 {:8.2}  q75 {:8.2}  (x100, {} reps)",
            s.dictionary.label(),
            s.median_x100,
            s.q25_x100,
            s.q75_x100,
            s.replications
        );
    }
    write_json(&args.out, &report)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
