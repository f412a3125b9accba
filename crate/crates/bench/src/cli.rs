//! `tkpen` command line. Exit codes: 0 success, 1 usage error, 2 runtime
//! error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tkpen_core::data::rng::{self, derive_seed};
use tkpen_core::data::{
    add_intercept, counterexample_1d, gen_robust_instance, gen_sparse_ls_instance, Instance,
    InstanceMetadata,
};
use tkpen_core::linalg::count_nonzero;
use tkpen_core::objective::CompositeObjective;
use tkpen_core::penalty::{
    active_set_enumerate, prox_top_k_penalty, Penalty, SubgradientPolicy, DEFAULT_ACTIVE_SET_CAP,
};
use tkpen_core::solvers::{solve, SolverConfig, SolverKind};
use tkpen_core::stationarity::{classify, DEFAULT_TOLERANCE};

use crate::config::{ExperimentConfig, SCHEMA};
use crate::experiment::run_experiment;
use crate::oracle;
use crate::report::{emit_csv, emit_summary_csv, write_outputs};

// stdout may be a closed pipe (`tkpen ... | head`); losing output is fine
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

macro_rules! say_raw {
    ($($arg:tt)*) => {{
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser, Debug)]
#[command(name = "tkpen", version, about = "Sparse regression with the T_K penalty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem with one solver and print its certificate.
    Solve(SolveArgs),
    /// Run an experiment file.
    Bench(BenchArgs),
    /// Write a synthetic instance (LIBSVM plus JSON sidecar).
    Gen(GenArgs),
    /// Classify a point against a problem.
    Certify(CertifyArgs),
    /// Compare the prox and active-set routines with brute force.
    ProxOracle(OracleArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for random start points and generators.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Certificate tolerance.
    #[arg(long, global = true, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
    /// Wall-clock limit in seconds.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    /// Output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LossArg {
    Ls,
    Logistic,
}

#[derive(Args, Debug)]
struct ProblemArgs {
    /// `fig1` or a LIBSVM file.
    #[arg(long)]
    problem: String,
    /// Sparsity level (defaults to the sidecar's).
    #[arg(long)]
    k: Option<usize>,
    /// Penalty weight (defaults to the sidecar's).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "ls")]
    loss: LossArg,
    /// Prepend a ones column and leave it unpenalized.
    #[arg(long)]
    intercept: bool,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    solver: String,
    /// canonical, extreme_negative or index_order.
    #[arg(long)]
    subgrad: Option<SubgradientPolicy>,
    /// Start: comma-separated values (one value is broadcast), `planted`,
    /// or a file. Defaults to 0.1·U[-1,1]^p drawn from --seed.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Negative disables the displacement test.
    #[arg(long, allow_hyphen_values = true)]
    stop_tol: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Experiment file (TOML).
    #[arg(long, required_unless_present = "print_schema")]
    config: Option<PathBuf>,
    /// Print the experiment file format and exit.
    #[arg(long)]
    print_schema: bool,
    /// Overrides the file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the file's certificate tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    time_limit: Option<f64>,
    /// Output directory (overrides the file's `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum GenKind {
    /// Least squares with a planted critical, non-d-stationary point.
    Planted {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        lambda: f64,
    },
    /// Sparse regression with outliers; the truth goes to `<out>.truth.json`.
    Robust {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        kappa: usize,
        #[arg(long, default_value_t = 10.0)]
        outlier_magnitude: f64,
        #[arg(long, default_value_t = 0.01)]
        noise_sd: f64,
    },
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated values, `planted`, or a file.
    #[arg(long, allow_hyphen_values = true)]
    point: String,
    #[arg(long, default_value_t = DEFAULT_ACTIVE_SET_CAP)]
    cap: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Single query: comma-separated y.
    #[arg(long, allow_hyphen_values = true, requires_all = ["tau", "k"])]
    y: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Random trials when no --y is given.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 8)]
    max_p: usize,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<crate::error::BenchError> for Failure {
    fn from(e: crate::error::BenchError) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

impl From<tkpen_core::Error> for Failure {
    fn from(e: tkpen_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let res = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Certify(a) => cmd_certify(a),
        Command::ProxOracle(a) => cmd_oracle(a),
    };
    match res {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

struct Loaded {
    obj: CompositeObjective,
    instance: Option<Instance>,
}

fn load_problem(args: &ProblemArgs) -> Result<Loaded, Failure> {
    if args.problem == "fig1" {
        return Ok(Loaded {
            obj: counterexample_1d(),
            instance: None,
        });
    }
    let path = Path::new(&args.problem);
    if !path.exists() {
        return Err(usage(format!(
            "problem `{}` is neither `fig1` nor an existing file",
            args.problem
        )));
    }
    let mut inst = Instance::read(path).with_context(|| format!("reading {}", path.display()))?;
    if args.intercept && !inst.metadata.intercept {
        inst = add_intercept(&inst)?.0;
    }
    let k = args
        .k
        .or(inst.metadata.k)
        .ok_or_else(|| usage("--k is required (the instance has no sidecar value)"))?;
    let lambda = args
        .lambda
        .or(inst.metadata.lambda)
        .ok_or_else(|| usage("--lambda is required (the instance has no sidecar value)"))?;
    let loss = match args.loss {
        LossArg::Ls => inst.least_squares()?,
        LossArg::Logistic => inst.logistic()?,
    };
    let penalty = Penalty::top_k(lambda, k, inst.p(), inst.excluded()).map_err(|e| usage(e.to_string()))?;
    Ok(Loaded {
        obj: CompositeObjective::new(loss, penalty)?,
        instance: Some(inst),
    })
}

fn parse_values(text: &str) -> Option<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect()
}

/// Comma list (a single value is broadcast), `planted`, or a file holding
/// a JSON array or whitespace-separated numbers.
fn parse_point(spec: &str, p: usize, inst: Option<&Instance>) -> Result<Vec<f64>, Failure> {
    let v = if spec == "planted" {
        inst.and_then(|i| i.metadata.planted.clone())
            .ok_or_else(|| usage("the problem has no planted point"))?
    } else if Path::new(spec).is_file() {
        let text = fs::read_to_string(spec).map_err(|e| usage(format!("{spec}: {e}")))?;
        serde_json::from_str::<Vec<f64>>(&text)
            .ok()
            .or_else(|| parse_values(&text))
            .ok_or_else(|| usage(format!("{spec}: expected a list of numbers")))?
    } else {
        parse_values(spec).ok_or_else(|| usage(format!("cannot parse point `{spec}`")))?
    };
    match v.len() {
        1 if p != 1 => Ok(vec![v[0]; p]),
        n if n == p => Ok(v),
        n => Err(usage(format!("point has {n} entries, the problem has {p}"))),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let bytes = serde_json::to_vec_pretty(value).map_err(anyhow::Error::from)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Result<(), Failure> {
    let kind: SolverKind = a.solver.parse().map_err(|e: tkpen_core::Error| usage(e.to_string()))?;
    if kind.is_two_block() {
        return Err(usage(format!(
            "{kind} needs a two-block problem; use `bench` with a robust problem"
        )));
    }
    let loaded = load_problem(&a.problem)?;
    let p = loaded.obj.dim();
    let x0 = match &a.x0 {
        Some(s) => parse_point(s, p, loaded.instance.as_ref())?,
        None => {
            let mut r = rng::seeded(derive_seed(a.common.seed, u64::MAX));
            (0..p).map(|_| 0.1 * rng::uniform(&mut r, -1.0, 1.0)).collect()
        }
    };
    let mut cfg = SolverConfig::for_solver(kind);
    cfg.seed = a.common.seed;
    cfg.time_limit_sec = a.common.time_limit;
    if let Some(policy) = a.subgrad {
        cfg.subgradient_policy = policy;
    }
    if let Some(m) = a.max_iters {
        cfg.max_iters = m;
    }
    if let Some(t) = a.stop_tol {
        cfg.stop_tol = t;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let mut res = solve(kind, &loaded.obj, &x0, &cfg)?;
    let cert = classify(&loaded.obj, &res.x, a.common.tol, DEFAULT_ACTIVE_SET_CAP)?;
    say!(
        "solver={} status={} iterations={} F={:?} nnz={} time_sec={:.6}",
        kind,
        res.status,
        res.iterations,
        res.objective,
        count_nonzero(&res.x),
        res.elapsed_sec
    );
    if p <= 20 {
        say!("x={:?}", res.x);
    }
    say!(
        "{}",
        serde_json::to_string_pretty(&cert).map_err(anyhow::Error::from)?
    );
    res.certificate = Some(cert);
    if let Some(out) = &a.common.out {
        write_json(out, &res)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    if a.print_schema {
        say_raw!("{SCHEMA}");
        return Ok(());
    }
    let path = a.config.expect("clap enforces --config");
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.tol {
        cfg.tol = t;
    }
    if let Some(t) = a.time_limit {
        cfg.time_limit = Some(t);
    }
    if let Some(out) = a.out {
        cfg.out_dir = Some(out);
    }
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    match &cfg.out_dir {
        Some(dir) => {
            write_outputs(&report, dir)?;
            eprintln!("wrote {}", dir.display());
        }
        None => {
            say_raw!("{}", String::from_utf8_lossy(&emit_csv(&report.rows)?));
            say!();
            say_raw!("{}", String::from_utf8_lossy(&emit_summary_csv(&report.summary)?));
        }
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<(), Failure> {
    let out = a
        .common
        .out
        .clone()
        .ok_or_else(|| usage("--out is required"))?;
    match a.kind {
        GenKind::Planted { p, n, k, lambda } => {
            let inst = gen_sparse_ls_instance(p, n, k, lambda, a.common.seed).map_err(|e| match e {
                tkpen_core::Error::InvalidData(m) => usage(m),
                e => e.into(),
            })?;
            inst.write(&out)?;
            eprintln!(
                "wrote {} ({}x{}, planted point after {} attempt(s))",
                out.display(),
                n,
                p,
                inst.metadata.attempts.unwrap_or(1)
            );
        }
        GenKind::Robust {
            p,
            n,
            k,
            kappa,
            outlier_magnitude,
            noise_sd,
        } => {
            let r = gen_robust_instance(p, n, k, kappa, outlier_magnitude, noise_sd, a.common.seed)
                .map_err(|e| usage(e.to_string()))?;
            let inst = Instance::new(
                (*r.a).clone(),
                r.b.clone(),
                InstanceMetadata {
                    name: format!("robust-p{p}-n{n}-k{k}"),
                    source: "synthetic".into(),
                    seed: Some(a.common.seed),
                    k: Some(k),
                    ..Default::default()
                },
            )?;
            inst.write(&out)?;
            let truth = serde_json::json!({
                "x_true": r.x_true,
                "z_true": r.z_true(),
                "outliers": r.outliers,
                "kappa": kappa,
                "noise_sd": noise_sd,
                "outlier_magnitude": outlier_magnitude,
            });
            write_json(&out.with_extension("truth.json"), &truth)?;
            eprintln!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn cmd_certify(a: CertifyArgs) -> Result<(), Failure> {
    let loaded = load_problem(&a.problem)?;
    let x = parse_point(&a.point, loaded.obj.dim(), loaded.instance.as_ref())?;
    let cert = classify(&loaded.obj, &x, a.common.tol, a.cap)?;
    say!(
        "critical={} d_stationary={}",
        fmt_opt(cert.critical),
        fmt_opt(cert.d_stationary)
    );
    say!(
        "{}",
        serde_json::to_string_pretty(&cert).map_err(anyhow::Error::from)?
    );
    if let Some(out) = &a.common.out {
        write_json(out, &cert)?;
    }
    Ok(())
}

fn fmt_opt(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_else(|| "unknown".into())
}

/// Absolute gap allowed between the prox and the brute-force optimum.
const ORACLE_TOL: f64 = 1e-12;

fn cmd_oracle(a: OracleArgs) -> Result<(), Failure> {
    if let Some(ys) = &a.y {
        let y = parse_values(ys).ok_or_else(|| usage(format!("cannot parse `{ys}`")))?;
        let (tau, k) = (a.tau.expect("clap requires tau"), a.k.expect("clap requires k"));
        if k > y.len() {
            return Err(usage(format!("k = {k} exceeds the length of y")));
        }
        let (bx, bv) = oracle::brute_force_prox(&y, tau, k);
        let x = prox_top_k_penalty(&y, tau, k, &[])?;
        let v = oracle::prox_objective(&x, &y, tau, k);
        say!("prox={x:?} value={v:?}");
        say!("brute={bx:?} value={bv:?}");
        if (v - bv).abs() > ORACLE_TOL {
            return Err(anyhow!("prox value exceeds the brute-force optimum by {:e}", v - bv).into());
        }
        return Ok(());
    }
    if a.max_p == 0 || a.max_p > 12 {
        return Err(usage("--max-p must be between 1 and 12"));
    }
    let mut r = rng::seeded(a.common.seed);
    let (mut worst, mut mismatches) = (0.0f64, 0usize);
    for _ in 0..a.trials {
        let p = 1 + rng::index(&mut r, a.max_p);
        let k = rng::index(&mut r, p + 1);
        let tau = rng::uniform(&mut r, 0.0, 3.0);
        let y: Vec<f64> = (0..p).map(|_| 2.0 * rng::normal(&mut r)).collect();
        let (_, bv) = oracle::brute_force_prox(&y, tau, k);
        let x = prox_top_k_penalty(&y, tau, k, &[])?;
        worst = worst.max(oracle::prox_objective(&x, &y, tau, k) - bv);

        // snap some entries to zero so ties occur
        let xs: Vec<f64> = y.iter().map(|v| if v.abs() < 1.0 { 0.0 } else { *v }).collect();
        let k = k.max(1).min(p);
        let mut lib: Vec<Vec<i8>> = active_set_enumerate(&xs, k, &[], 0.0, usize::MAX)?
            .iter()
            .map(|s| s.entries().to_vec())
            .collect();
        lib.sort();
        if lib != oracle::active_patterns(&xs, k, 0.0) {
            mismatches += 1;
        }
    }
    say!(
        "trials={} max_prox_gap={worst:e} active_set_mismatches={mismatches}",
        a.trials
    );
    if worst > ORACLE_TOL || mismatches > 0 {
        return Err(anyhow!("oracle disagreement").into());
    }
    Ok(())
}
