use std::sync::Arc;

use serde::Serialize;
use tkpen_core::data::rng::{self, derive_seed};
use tkpen_core::data::{
    add_intercept, counterexample_1d, gen_robust_instance, gen_sparse_ls_instance, perturbed_start,
    Instance,
};
use tkpen_core::linalg::count_nonzero;
use tkpen_core::objective::{CompositeObjective, RobustLeastSquares, TwoBlockObjective};
use tkpen_core::penalty::Penalty;
use tkpen_core::solvers::{solve, solve_two_block, SolverKind, SolverResult};
use tkpen_core::stationarity::{classify, classify_two_block, StationarityReport};

use crate::config::{ExperimentConfig, LossChoice, ProblemSpec};
use crate::error::Result;

/// One solver run on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub instance: usize,
    pub seed: u64,
    pub solver: SolverKind,
    pub status: String,
    pub iterations: usize,
    pub objective: f64,
    pub loss: f64,
    pub ln_objective: f64,
    pub nnz_x: usize,
    pub nnz_z: Option<usize>,
    pub critical: Option<bool>,
    pub d_stationary: Option<bool>,
    pub prox_residual: f64,
    /// Solver loop only; excluded from `results.csv`.
    pub time_sec: f64,
}

/// Per-solver means over every instance of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub solver: SolverKind,
    pub runs: usize,
    pub converged: usize,
    pub mean_iterations: f64,
    pub mean_objective: f64,
    pub mean_ln_objective: f64,
    pub mean_nnz_x: f64,
    pub mean_nnz_z: Option<f64>,
    pub best_iterations: bool,
    pub best_ln_objective: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub instance: usize,
    pub solver: SolverKind,
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
    pub traces: Vec<RunTrace>,
    pub certificates: Vec<StationarityReport>,
}

/// Digits kept when deciding which mean is best.
pub const REPORT_DECIMALS: i32 = 5;

// built once per repetition, size is irrelevant
#[allow(clippy::large_enum_variant)]
enum Built {
    Single {
        obj: CompositeObjective,
        x0: Vec<f64>,
    },
    Two {
        penalized: TwoBlockObjective,
        projected: TwoBlockObjective,
        x0: Vec<f64>,
        z0: Vec<f64>,
    },
}

fn uniform_start(p: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    (0..p).map(|_| scale * rng::uniform(&mut r, -1.0, 1.0)).collect()
}

/// The dataset is read once and shared by every repetition.
struct Prepared {
    dataset: Option<(Instance, Vec<usize>)>,
}

fn prepare(spec: &ProblemSpec) -> Result<Prepared> {
    let dataset = match spec {
        ProblemSpec::Dataset {
            path, intercept, ..
        } => {
            let inst = Instance::read(path)?;
            Some(if *intercept && !inst.metadata.intercept {
                add_intercept(&inst)?
            } else {
                let excl = inst.excluded();
                (inst, excl)
            })
        }
        _ => None,
    };
    Ok(Prepared { dataset })
}

fn build(spec: &ProblemSpec, prep: &Prepared, seed: u64) -> Result<Built> {
    let scale = spec.start_scale();
    let start_seed = derive_seed(seed, u64::MAX);
    Ok(match spec {
        ProblemSpec::Fig1 => Built::Single {
            obj: counterexample_1d(),
            x0: vec![0.0],
        },
        ProblemSpec::Planted { p, n, k, lambda, .. } => {
            let inst = gen_sparse_ls_instance(*p, *n, *k, *lambda, seed)?;
            let planted = inst.metadata.planted.as_deref().expect("generator plants a point");
            let x0 = perturbed_start(planted, scale, start_seed);
            let obj = CompositeObjective::new(
                inst.least_squares()?,
                Penalty::top_k(*lambda, *k, *p, Vec::new())?,
            )?;
            Built::Single { obj, x0 }
        }
        ProblemSpec::Dataset {
            k, lambda, loss, ..
        } => {
            let (inst, excluded) = prep.dataset.as_ref().expect("prepared");
            let smooth = match loss {
                LossChoice::LeastSquares => inst.least_squares()?,
                LossChoice::Logistic => inst.logistic()?,
            };
            let obj = CompositeObjective::new(
                smooth,
                Penalty::top_k(*lambda, *k, inst.p(), excluded.clone())?,
            )?;
            Built::Single {
                x0: uniform_start(inst.p(), scale, start_seed),
                obj,
            }
        }
        ProblemSpec::Robust {
            p,
            n,
            k,
            kappa,
            lambda1,
            lambda2,
            outlier_magnitude,
            noise_sd,
            ..
        } => {
            let inst = gen_robust_instance(*p, *n, *k, *kappa, *outlier_magnitude, *noise_sd, seed)?;
            let loss = || RobustLeastSquares::new(Arc::clone(&inst.a), inst.b.clone());
            let x_pen = Penalty::top_k(*lambda1, *k, *p, Vec::new())?;
            let penalized = TwoBlockObjective::new(
                loss()?,
                x_pen.clone(),
                Penalty::top_k(*lambda2, *kappa, *n, Vec::new())?,
            )?;
            let (lx, lz) = penalized.block_lipschitz();
            let projected = TwoBlockObjective::new(loss()?, x_pen, Penalty::l0_ball(*kappa, *n)?)?
                .with_block_lipschitz(lx, lz);
            Built::Two {
                penalized,
                projected,
                x0: uniform_start(*p, scale, start_seed),
                z0: uniform_start(*n, scale, derive_seed(start_seed, 0)),
            }
        }
    })
}

fn row(
    instance: usize,
    seed: u64,
    res: &SolverResult,
    loss: f64,
    cert: &StationarityReport,
) -> ReportRow {
    ReportRow {
        instance,
        seed,
        solver: res.solver,
        status: res.status.name().to_string(),
        iterations: res.iterations,
        objective: res.objective,
        loss,
        ln_objective: res.objective.ln(),
        nnz_x: count_nonzero(&res.x),
        nnz_z: res.z.as_deref().map(count_nonzero),
        critical: cert.critical,
        d_stationary: cert.d_stationary,
        prox_residual: cert.prox_residual,
        time_sec: res.elapsed_sec,
    }
}

/// Runs every solver on every repetition from a shared start point and
/// recertifies each terminal point.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let kinds = cfg.solver_kinds()?;
    let solver_cfgs = kinds
        .iter()
        .map(|&k| cfg.solver_config(k))
        .collect::<Result<Vec<_>>>()?;
    let prep = prepare(&cfg.problem)?;

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut certificates = Vec::new();
    for rep in 0..cfg.repetitions {
        let seed = derive_seed(cfg.seed, rep as u64);
        let built = build(&cfg.problem, &prep, seed)?;
        for (&kind, scfg) in kinds.iter().zip(&solver_cfgs) {
            let (res, loss, cert) = match &built {
                Built::Single { obj, x0 } => {
                    let res = solve(kind, obj, x0, scfg)?;
                    let cert = classify(obj, &res.x, cfg.tol, cfg.active_set_cap)?;
                    let loss = obj.loss().value(&res.x);
                    (res, loss, cert)
                }
                Built::Two {
                    penalized,
                    projected,
                    x0,
                    z0,
                } => {
                    let obj = if kind == SolverKind::PdcaeProj {
                        projected
                    } else {
                        penalized
                    };
                    let res = solve_two_block(kind, obj, x0, z0, scfg)?;
                    let z = res.z.as_deref().expect("two-block result carries z");
                    let cert = classify_two_block(obj, &res.x, z, cfg.tol, cfg.active_set_cap)?;
                    let loss = tkpen_core::objective::BlockLoss::value(obj.loss(), &res.x, z);
                    (res, loss, cert)
                }
            };
            rows.push(row(rep, seed, &res, loss, &cert));
            traces.push(RunTrace {
                instance: rep,
                solver: kind,
                objectives: res.trace.objectives(),
            });
            certificates.push(cert);
        }
    }
    let summary = summarize(&rows, &kinds);
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        rows,
        summary,
        traces,
        certificates,
    })
}

fn round_report(v: f64) -> f64 {
    let s = 10f64.powi(REPORT_DECIMALS);
    (v * s).round() / s
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Means per solver in `kinds` order, with best-in-column flags; ties
/// at report precision are flagged together.
pub fn summarize(rows: &[ReportRow], kinds: &[SolverKind]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = kinds
        .iter()
        .filter_map(|&kind| {
            let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.solver == kind).collect();
            if mine.is_empty() {
                return None;
            }
            let nnz_z = mine
                .iter()
                .map(|r| r.nnz_z)
                .collect::<Option<Vec<_>>>()
                .map(|v| mean(v.into_iter().map(|n| n as f64)));
            Some(SummaryRow {
                solver: kind,
                runs: mine.len(),
                converged: mine.iter().filter(|r| r.status == "converged").count(),
                mean_iterations: mean(mine.iter().map(|r| r.iterations as f64)),
                mean_objective: mean(mine.iter().map(|r| r.objective)),
                mean_ln_objective: mean(mine.iter().map(|r| r.ln_objective)),
                mean_nnz_x: mean(mine.iter().map(|r| r.nnz_x as f64)),
                mean_nnz_z: nnz_z,
                best_iterations: false,
                best_ln_objective: false,
            })
        })
        .collect();
    let best_iter = out
        .iter()
        .map(|s| round_report(s.mean_iterations))
        .fold(f64::INFINITY, f64::min);
    let best_ln = out
        .iter()
        .map(|s| round_report(s.mean_ln_objective))
        .fold(f64::INFINITY, f64::min);
    for s in &mut out {
        s.best_iterations = round_report(s.mean_iterations) == best_iter;
        s.best_ln_objective = round_report(s.mean_ln_objective) == best_ln;
    }
    out
}
