//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILING` are still run and still print FAIL;
//! they do not fail the process, but an unexpected PASS for one of them
//! does, so the list cannot go stale silently.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tkpen_bench::config::{ExperimentConfig, ProblemSpec};
use tkpen_bench::experiment::{run_experiment, ReportRow};
use tkpen_bench::oracle;
use tkpen_core::data::{
    counterexample_1d, gen_robust_instance, parse_libsvm, rng, serialize_libsvm, Instance,
    InstanceMetadata,
};
use tkpen_core::linalg::{count_nonzero, norm, DesignMatrix};
use tkpen_core::objective::{
    robust_ls_value_grad, BlockLoss, CompositeObjective, RobustLeastSquares, SmoothLoss,
    TwoBlockObjective,
};
use tkpen_core::penalty::{
    active_set_enumerate, exact_penalty_bound, prox_top_k_penalty, Penalty, SubgradientPolicy,
    DEFAULT_ACTIVE_SET_CAP,
};
use tkpen_core::solvers::{
    gist_solve, pdca_solve, pgm_solve, solve, solve_two_block, SolverConfig, SolverKind, Status,
};
use tkpen_core::stationarity::{check_critical, check_d_stationary, classify, classify_two_block};

/// Desk-scale planted runs: PDCAe leaves the planted point on every seed
/// and lands on the same 300-sparse point as GIST, so 5(b) has no witness.
const KNOWN_FAILING: &[u32] = &[5];

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn within(start: Instant, budget: Duration) -> Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    if start.elapsed() > budget {
        Err(format!("took {s:.1}s, budget {}s", budget.as_secs()))
    } else {
        Ok(s)
    }
}

fn gaussian(r: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng::normal(r)).collect()
}

fn random_ls(r: &mut rng::Rng, p: usize, n: usize, k: usize, lambda: f64) -> CompositeObjective {
    let a = DesignMatrix::dense(n, p, gaussian(r, n * p)).unwrap();
    let b = gaussian(r, n);
    CompositeObjective::new(
        SmoothLoss::least_squares(Arc::new(a), b).unwrap(),
        Penalty::top_k(lambda, k, p, Vec::new()).unwrap(),
    )
    .unwrap()
}

fn fig1() -> Outcome {
    let start = Instant::now();
    let obj = counterexample_1d();
    let at0 = classify(&obj, &[0.0], 1e-8, DEFAULT_ACTIVE_SET_CAP).map_err(err)?;
    ensure!(
        at0.critical == Some(true) && at0.d_stationary == Some(false),
        "x=0 classified {:?}/{:?}",
        at0.critical,
        at0.d_stationary
    );
    let at1 = classify(&obj, &[1.0], 1e-8, DEFAULT_ACTIVE_SET_CAP).map_err(err)?;
    ensure!(at1.d_stationary == Some(true), "x=1 not d-stationary");

    let cfg = SolverConfig {
        max_iters: 1000,
        ..SolverConfig::default()
    };
    for kind in [SolverKind::Gist, SolverKind::Pgm] {
        let res = solve(kind, &obj, &[0.0], &cfg).map_err(err)?;
        ensure!((res.x[0] - 1.0).abs() <= 1e-6, "{kind} ended at {}", res.x[0]);
        ensure!((res.objective - 1.5).abs() <= 1e-10, "{kind} F = {}", res.objective);
    }
    let stall = SolverConfig {
        subgradient_policy: SubgradientPolicy::ExtremeNegative,
        stop_tol: -1.0,
        ..cfg
    };
    let res = pdca_solve(&obj, &[0.0], &stall).map_err(err)?;
    ensure!(res.iterations == 1000, "PDCA ran {} iterations", res.iterations);
    ensure!(
        res.x == [0.0] && res.trace.records.iter().all(|r| r.objective == 2.0),
        "PDCA left the origin"
    );
    let s = within(start, Duration::from_secs(1))?;
    Ok(format!("0 critical only, 1 d-stationary, PDCA stuck at F=2 ({s:.2}s)"))
}

fn prox_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(2);
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let p = 1 + rng::index(&mut r, 8);
        let k = 1 + rng::index(&mut r, p);
        let mut y = gaussian(&mut r, p);
        if trial % 3 == 0 {
            // coarse grid: ties and zeros
            for v in &mut y {
                *v = (*v * 2.0).round() / 2.0;
            }
        }
        let tau = rng::uniform(&mut r, 0.01, 3.0);
        let x = prox_top_k_penalty(&y, tau, k, &[]).map_err(err)?;
        let got = oracle::prox_objective(&x, &y, tau, k);
        let (_, best) = oracle::brute_force_prox(&y, tau, k);
        worst = worst.max(got - best);
        ensure!(got <= best + 1e-12, "trial {trial}: {got} vs brute force {best}");
    }
    let s = within(start, Duration::from_secs(10))?;
    Ok(format!("200 trials, worst excess {worst:.1e} ({s:.2}s)"))
}

fn active_oracle() -> Outcome {
    let start = Instant::now();
    let patterns = |x: &[f64], k: usize| -> Result<Vec<Vec<i8>>, String> {
        let mut got: Vec<Vec<i8>> = active_set_enumerate(x, k, &[], 0.0, DEFAULT_ACTIVE_SET_CAP)
            .map_err(err)?
            .iter()
            .map(|v| v.entries().to_vec())
            .collect();
        got.sort();
        Ok(got)
    };
    let tied = patterns(&[1.0, 0.0, 0.0, 0.0], 2)?;
    ensure!(tied.len() == 6, "(1,0,0,0), K=2 gave {} patterns", tied.len());
    ensure!(tied == oracle::active_patterns(&[1.0, 0.0, 0.0, 0.0], 2, 0.0), "tied case differs");

    let mut r = rng::seeded(3);
    for point in 0..100 {
        let p = 1 + rng::index(&mut r, 8);
        let k = 1 + rng::index(&mut r, p);
        let x: Vec<f64> = (0..p)
            .map(|_| {
                if point % 2 == 0 {
                    rng::index(&mut r, 5) as f64 - 2.0
                } else {
                    rng::normal(&mut r)
                }
            })
            .collect();
        let got = patterns(&x, k)?;
        ensure!(
            got == oracle::active_patterns(&x, k, 0.0),
            "point {point} {x:?}, K={k}: sets differ"
        );
    }
    let s = within(start, Duration::from_secs(10))?;
    Ok(format!("101 points match exhaustive enumeration ({s:.2}s)"))
}

fn decrease() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(4);
    let mut steps = 0;
    for inst in 0..30 {
        let obj = random_ls(&mut r, 100, 100, 30, 1.0);
        let x0: Vec<f64> = (0..100).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
        let l = obj.lipschitz();
        let cfg = SolverConfig::for_solver(SolverKind::Pgm);
        let eta = cfg.step_factor * l;
        let res = pgm_solve(&obj, &x0, &cfg).map_err(err)?;
        for w in res.trace.records.windows(2) {
            let d = w[1].displacement.unwrap_or(0.0);
            ensure!(
                w[1].objective <= w[0].objective - 0.5 * (eta - l) * d * d + 1e-10,
                "instance {inst}, t={}: PGM decrease violated",
                w[1].t
            );
            steps += 1;
        }
        let cfg = SolverConfig::for_solver(SolverKind::Gist);
        let f = gist_solve(&obj, &x0, &cfg).map_err(err)?.trace.objectives();
        let maxes: Vec<f64> = (0..f.len())
            .map(|t| f[t.saturating_sub(cfg.r - 1)..=t].iter().copied().fold(f64::MIN, f64::max))
            .collect();
        ensure!(
            maxes.windows(2).all(|w| w[1] <= w[0]),
            "instance {inst}: GIST window max increased"
        );
    }
    let s = within(start, Duration::from_secs(30))?;
    Ok(format!("{steps} PGM steps checked, GIST windows monotone ({s:.2}s)"))
}

fn by_instance(rows: &[ReportRow]) -> BTreeMap<usize, BTreeMap<SolverKind, &ReportRow>> {
    let mut out: BTreeMap<usize, BTreeMap<SolverKind, &ReportRow>> = BTreeMap::new();
    for row in rows {
        out.entry(row.instance).or_default().insert(row.solver, row);
    }
    out
}

fn table2() -> Outcome {
    use SolverKind::*;
    let start = Instant::now();
    let mut cfg = ExperimentConfig::new(
        ProblemSpec::Planted {
            p: 1000,
            n: 1000,
            k: 300,
            lambda: 10.0,
            start_scale: None,
        },
        &["gist", "pgm", "pdcae", "nepdca"],
    );
    cfg.repetitions = 30;
    cfg.seed = 1;
    cfg.stop_tol = Some(1e-8);
    let report = run_experiment(&cfg).map_err(err)?;
    let runs = by_instance(&report.rows);

    let sparse = runs
        .values()
        .all(|m| [Gist, Pgm, Nepdca].iter().all(|k| m[k].nnz_x == 300));
    let pdcae_nnz: Vec<usize> = runs.values().map(|m| m[&Pdcae].nnz_x).collect();
    let wide = pdcae_nnz.iter().all(|&n| n >= 300) && pdcae_nnz.iter().any(|&n| n > 300);
    let worse = runs
        .values()
        .filter(|m| m[&Pdcae].ln_objective > m[&Gist].ln_objective + 0.1)
        .count();
    let faster = runs
        .values()
        .filter(|m| m[&Gist].time_sec < m[&Pgm].time_sec)
        .count();
    let gap = runs
        .values()
        .map(|m| (m[&Gist].ln_objective - m[&Pgm].ln_objective).abs())
        .sum::<f64>()
        / runs.len() as f64;
    let s = start.elapsed().as_secs_f64();
    let (lo, hi) = (
        pdcae_nnz.iter().min().copied().unwrap_or(0),
        pdcae_nnz.iter().max().copied().unwrap_or(0),
    );
    let detail = format!(
        "(a) {} (b) PDCAe nnz in [{lo}, {hi}], worse by >0.1 on {worse}/30 -> {} \
         (c) GIST faster on {faster}/30 (d) mean gap {gap:.2e} ({s:.0}s)",
        if sparse { "ok" } else { "nnz != 300 somewhere" },
        if wide || worse >= 20 { "ok" } else { "no witness" },
    );
    ensure!(sparse && (wide || worse >= 20) && faster >= 25 && gap <= 0.02 && s < 300.0, "{detail}");
    Ok(detail)
}

fn d_stationarity() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(6);
    let tol = 1e-5;
    let mut checked = 0;
    for inst in 0..50 {
        let p = 3 + rng::index(&mut r, 10);
        let n = p + rng::index(&mut r, 6);
        let k = 1 + rng::index(&mut r, p - 1);
        let lambda = rng::uniform(&mut r, 0.1, 2.0);
        let obj = random_ls(&mut r, p, n, k, lambda);
        let x0: Vec<f64> = (0..p).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
        for kind in [SolverKind::Gist, SolverKind::Pgm] {
            let res = solve(kind, &obj, &x0, &SolverConfig::for_solver(kind)).map_err(err)?;
            if res.status != Status::Converged {
                continue;
            }
            let d = check_d_stationary(&obj, &res.x, tol, DEFAULT_ACTIVE_SET_CAP).map_err(err)?;
            if d.overflow {
                continue;
            }
            ensure!(
                d.holds == Some(true),
                "instance {inst}: {kind} terminal fails d-stationarity ({:.2e})",
                d.worst_residual
            );
            checked += 1;
        }
        let res = pdca_solve(&obj, &x0, &SolverConfig::for_solver(SolverKind::Pdca)).map_err(err)?;
        let c = check_critical(&obj, &res.x, tol).map_err(err)?;
        ensure!(c.holds == Some(true), "instance {inst}: PDCA terminal not critical");
        checked += 1;

        let kappa = 1 + rng::index(&mut r, 2);
        let rob = gen_robust_instance(p, n + 2, k, kappa, 5.0, 0.05, rng::derive_seed(6, inst))
            .map_err(err)?;
        let two = TwoBlockObjective::new(
            rob.loss().map_err(err)?,
            Penalty::top_k(lambda, k, p, Vec::new()).map_err(err)?,
            Penalty::top_k(lambda, kappa, rob.n(), Vec::new()).map_err(err)?,
        )
        .map_err(err)?;
        let z0 = vec![0.0; rob.n()];
        let res = solve_two_block(
            SolverKind::Gpalm,
            &two,
            &x0,
            &z0,
            &SolverConfig::for_solver(SolverKind::Gpalm),
        )
        .map_err(err)?;
        if res.status == Status::Converged {
            let z = res.z.as_deref().unwrap_or_default();
            let rep = classify_two_block(&two, &res.x, z, tol, DEFAULT_ACTIVE_SET_CAP).map_err(err)?;
            if !rep.overflow() {
                ensure!(rep.is_d_stationary(), "instance {inst}: GPALM terminal fails d-stationarity");
                checked += 1;
            }
        }
    }
    let s = within(start, Duration::from_secs(60))?;
    Ok(format!("{checked} terminals certified on 50 instances ({s:.2}s)"))
}

fn robust() -> Outcome {
    use SolverKind::*;
    let start = Instant::now();
    let mut cfg = ExperimentConfig::new(
        ProblemSpec::Robust {
            p: 256,
            n: 72,
            k: 8,
            kappa: 2,
            lambda1: 100.0,
            lambda2: 100.0,
            outlier_magnitude: 10.0,
            noise_sd: 0.01,
            start_scale: None,
        },
        &["gpalm", "palm", "pdcae-proj"],
    );
    cfg.repetitions = 30;
    cfg.seed = 7;
    cfg.stop_tol = Some(1e-6);
    let report = run_experiment(&cfg).map_err(err)?;
    let runs = by_instance(&report.rows);
    let feasible = runs.values().all(|m| {
        [Gpalm, Palm]
            .iter()
            .all(|k| m[k].nnz_x <= 8 && m[k].nnz_z.is_some_and(|z| z <= 2))
    });
    let fewer = runs
        .values()
        .filter(|m| m[&Gpalm].iterations < m[&Palm].iterations)
        .count();
    let under = runs.values().filter(|m| m[&PdcaeProj].nnz_x < 8).count();
    let better = runs
        .values()
        .filter(|m| m[&Gpalm].objective <= m[&Palm].objective + 1e-6)
        .count();
    let s = start.elapsed().as_secs_f64();
    let detail = format!(
        "(a) {} (b) GPALM fewer iterations on {fewer}/30 (c) PDCAe-proj under K on {under}/30 \
         (d) GPALM F no worse on {better}/30 ({s:.1}s)",
        if feasible { "feasible" } else { "infeasible terminal" }
    );
    ensure!(feasible && fewer >= 24 && under >= 15 && better >= 20 && s < 120.0, "{detail}");
    Ok(detail)
}

/// Global minimizer of the penalized problem inside growing boxes; the
/// first two consecutive boxes whose minimizer sits strictly inside and
/// agrees give the bounds `C_x`, `C_z`.
fn box_sweep(
    a: &[f64],
    b: &[f64],
    p: usize,
    k: usize,
    kappa: usize,
    floor: f64,
) -> Option<(f64, f64)> {
    let mut prev: Option<oracle::GlobalMin> = None;
    for e in 0..14 {
        let bound = 2f64.powi(e);
        let g = oracle::global_penalized_min(a, b, p, k, kappa, floor, floor, bound);
        let inside = g.x.iter().chain(&g.z).all(|v| v.abs() < bound * (1.0 - 1e-9));
        if inside {
            if let Some(q) = &prev {
                if (q.value - g.value).abs() <= 1e-9 * (1.0 + g.value.abs()) {
                    return Some((norm(&g.x), norm(&g.z)));
                }
            }
            prev = Some(g);
        } else {
            prev = None;
        }
    }
    None
}

fn exact_penalty() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(8);
    let floor = 0.5;
    let mut largest: f64 = 0.0;
    for inst in 0..20 {
        let p = 3 + rng::index(&mut r, 4);
        let n = 4 + rng::index(&mut r, 5);
        let k = 1 + rng::index(&mut r, p - 1);
        let kappa = 1 + rng::index(&mut r, 2);
        let a_rows = gaussian(&mut r, n * p);
        let b = gaussian(&mut r, n);
        let (c_x, c_z) = box_sweep(&a_rows, &b, p, k, kappa, floor)
            .ok_or_else(|| format!("instance {inst}: box sweep did not settle"))?;
        let a = Arc::new(DesignMatrix::dense(n, p, a_rows.clone()).map_err(err)?);
        let loss = RobustLeastSquares::new(a.clone(), b.clone()).map_err(err)?;
        let bound = exact_penalty_bound(
            norm(&a.tmul_vec(&b)),
            norm(&b),
            loss.joint_lipschitz(),
            c_x,
            c_z,
            floor,
            floor,
            1e-6,
        );
        largest = largest.max(bound.lambda1_min.max(bound.lambda2_min));
        let g = oracle::global_penalized_min(
            &a_rows,
            &b,
            p,
            k,
            kappa,
            bound.lambda1_min,
            bound.lambda2_min,
            f64::INFINITY,
        );
        ensure!(
            count_nonzero(&g.x) <= k && count_nonzero(&g.z) <= kappa,
            "instance {inst}: global minimizer has |x|0={} (K={k}), |z|0={} (kappa={kappa})",
            count_nonzero(&g.x),
            count_nonzero(&g.z)
        );
    }
    let s = within(start, Duration::from_secs(30))?;
    Ok(format!("20 global minimizers feasible, largest lambda {largest:.1} ({s:.2}s)"))
}

fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    let mut y = x.to_vec();
    (0..x.len())
        .map(|j| {
            y[j] = x[j] + h;
            let up = f(&y);
            y[j] = x[j] - h;
            let down = f(&y);
            y[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_err(g: &[f64], fd: &[f64]) -> f64 {
    let d: Vec<f64> = g.iter().zip(fd).map(|(a, b)| a - b).collect();
    norm(&d) / norm(g).max(1.0)
}

fn gradients_and_parser() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = 1 + rng::index(&mut r, 10);
        let n = 1 + rng::index(&mut r, 10);
        let a = Arc::new(DesignMatrix::dense(n, p, gaussian(&mut r, n * p)).unwrap());
        let x = gaussian(&mut r, p);
        let b = gaussian(&mut r, n);
        let labels: Vec<f64> = (0..n).map(|_| rng::sign(&mut r)).collect();
        for loss in [
            SmoothLoss::least_squares(a.clone(), b.clone()).map_err(err)?,
            SmoothLoss::logistic(a.clone(), labels).map_err(err)?,
        ] {
            let (_, g) = loss.value_grad(&x);
            worst = worst.max(rel_err(&g, &fd_gradient(|y| loss.value(y), &x)));
        }
        let z = gaussian(&mut r, n);
        let (_, gx, gz) = robust_ls_value_grad(&a, &b, &x, &z).map_err(err)?;
        let fx = fd_gradient(|y| robust_ls_value_grad(&a, &b, y, &z).unwrap().0, &x);
        let fz = fd_gradient(|y| robust_ls_value_grad(&a, &b, &x, y).unwrap().0, &z);
        worst = worst.max(rel_err(&gx, &fx)).max(rel_err(&gz, &fz));
    }
    ensure!(worst <= 1e-5, "finite-difference relative error {worst:.2e}");

    for trial in 0..50 {
        let p = 1 + rng::index(&mut r, 12);
        let n = 1 + rng::index(&mut r, 12);
        let vals: Vec<f64> = (0..n * p)
            .map(|_| {
                if rng::unit(&mut r) < 0.6 {
                    0.0
                } else {
                    rng::normal(&mut r) * 10f64.powi(rng::index(&mut r, 9) as i32 - 4)
                }
            })
            .collect();
        let mut a = DesignMatrix::dense(n, p, vals).map_err(err)?;
        if trial % 2 == 1 {
            a = a.to_csr();
        }
        let b: Vec<f64> = (0..n).map(|_| rng::sign(&mut r)).collect();
        let inst = Instance::new(a, b, InstanceMetadata::default()).map_err(err)?;
        let mut text = Vec::new();
        serialize_libsvm(&inst, &mut text).map_err(err)?;
        let back = parse_libsvm(text.as_slice()).map_err(err)?;
        ensure!(back.b == inst.b, "trial {trial}: labels changed");
        // trailing all-zero columns leave no trace in the text format
        ensure!(back.p() <= inst.p(), "trial {trial}: width grew");
        for i in 0..inst.n() {
            for j in 0..inst.p() {
                let v = if j < back.p() { back.a.get(i, j) } else { 0.0 };
                ensure!(v == inst.a.get(i, j), "trial {trial}: entry ({i}, {j}) changed");
            }
        }
        let mut again = Vec::new();
        serialize_libsvm(&back, &mut again).map_err(err)?;
        ensure!(again == text, "trial {trial}: second pass differs");
    }
    let s = within(start, Duration::from_secs(10))?;
    Ok(format!("worst FD error {worst:.1e}, 50 LIBSVM round trips exact ({s:.2}s)"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "counterexample suite", fig1),
        (2, "prox oracle", prox_oracle),
        (3, "active-set oracle", active_oracle),
        (4, "sufficient decrease", decrease),
        (5, "desk-scale planted benchmark", table2),
        (6, "d-stationarity of terminals", d_stationarity),
        (7, "robust regression desk scale", robust),
        (8, "exact penalty", exact_penalty),
        (9, "gradients and LIBSVM", gradients_and_parser),
    ];
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        let known = KNOWN_FAILING.contains(&id);
        match run() {
            Ok(detail) => {
                println!("PASS criterion {id}: {name}: {detail}");
                if known {
                    println!("     criterion {id} is listed as known failing; update the list");
                    unexpected += 1;
                }
            }
            Err(detail) => {
                let tag = if known { " [known]" } else { "" };
                println!("FAIL criterion {id}: {name}{tag}: {detail}");
                if !known {
                    unexpected += 1;
                }
            }
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
