use crate::error::{Error, Result};
use crate::linalg::{dist, dist_sq, dot, norm_sq};
use crate::objective::{CompositeObjective, LossEval};
use crate::penalty::{DcPenalty, SignPattern};

use super::{
    bb_step, dc_view, diff, BetaSchedule, Run, SolverConfig, SolverKind, SolverResult, Status,
    Window, LINE_SEARCH_CAP,
};

/// `Prox_{g₁/η}(y − (∇f(y) − ξ)/η)`
fn dc_step(dc: &dyn DcPenalty, y: &[f64], grad: &[f64], xi: &[f64], eta: f64) -> Vec<f64> {
    let arg: Vec<f64> = y
        .iter()
        .zip(grad)
        .zip(xi)
        .map(|((yj, gj), sj)| yj - (gj - sj) / eta)
        .collect();
    dc.prox_g1(&arg, eta)
}

/// Proximal DC algorithm with step `1/L`.
pub fn pdca_solve(obj: &CompositeObjective, x0: &[f64], cfg: &SolverConfig) -> Result<SolverResult> {
    let cfg = SolverConfig {
        beta_schedule: BetaSchedule::Zero,
        ..cfg.clone()
    };
    extrapolated_dca(SolverKind::Pdca, obj, x0, &cfg)
}

/// PDCA with extrapolation `y_t = x_t + β_t(x_t − x_{t−1})`.
pub fn pdcae_solve(obj: &CompositeObjective, x0: &[f64], cfg: &SolverConfig) -> Result<SolverResult> {
    extrapolated_dca(SolverKind::Pdcae, obj, x0, cfg)
}

/// Momentum weights for the extrapolation step.
pub(super) struct Momentum {
    schedule: BetaSchedule,
    theta_prev: f64,
    theta: f64,
    since_restart: usize,
}

impl Momentum {
    pub(super) fn new(schedule: BetaSchedule) -> Self {
        Self {
            schedule,
            theta_prev: 1.0,
            theta: 1.0,
            since_restart: 0,
        }
    }

    pub(super) fn beta(&self) -> f64 {
        match self.schedule {
            BetaSchedule::Fista { .. } => (self.theta_prev - 1.0) / self.theta,
            BetaSchedule::Constant { beta } => beta,
            BetaSchedule::Zero => 0.0,
        }
    }

    /// Advances after an iteration whose objective moved from `before` to
    /// `after`.
    pub(super) fn advance(&mut self, before: f64, after: f64) {
        if let BetaSchedule::Fista {
            restart_every,
            adaptive,
        } = self.schedule
        {
            self.since_restart += 1;
            if (adaptive && after > before) || self.since_restart >= restart_every.max(1) {
                self.theta_prev = 1.0;
                self.theta = 1.0;
                self.since_restart = 0;
            } else {
                let next = 0.5 * (1.0 + (1.0 + 4.0 * self.theta * self.theta).sqrt());
                self.theta_prev = self.theta;
                self.theta = next;
            }
        }
    }
}

fn extrapolated_dca(
    kind: SolverKind,
    obj: &CompositeObjective,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    obj.check_point(x0)?;
    let dc = dc_view(obj, kind)?;
    let mut run = Run::new(kind, cfg)?;
    let loss = obj.loss();
    let pen = obj.penalty();
    let l = obj.lipschitz();

    let mut x = x0.to_vec();
    let mut x_prev = x.clone();
    let mut ev = loss.eval(&x);
    let mut ev_prev: Option<LossEval> = None;
    let mut f_x = run.record(0, ev.value, pen.value(&x), None, None, None, 0, None)?;
    let mut momentum = Momentum::new(cfg.beta_schedule);
    let mut grad = vec![0.0; x.len()];
    let mut t = 0;
    let status = loop {
        if let Some(s) = run.should_stop(t) {
            break s;
        }
        t += 1;
        let beta = momentum.beta();
        let xi = dc.subgradient(&x, cfg.subgradient_policy);
        let xn = match (&ev_prev, beta) {
            (Some(prev), b) if b != 0.0 => {
                let ev_y = loss.extrapolate(&ev, prev, b);
                loss.gradient_into(&ev_y, &mut grad);
                let y: Vec<f64> = x
                    .iter()
                    .zip(&x_prev)
                    .map(|(c, p)| c + b * (c - p))
                    .collect();
                dc_step(dc, &y, &grad, &xi, l)
            }
            _ => {
                loss.gradient_into(&ev, &mut grad);
                dc_step(dc, &x, &grad, &xi, l)
            }
        };
        let evn = loss.eval(&xn);
        let disp = dist(&x, &xn);
        let f_new = run.record(t, evn.value, pen.value(&xn), Some(disp), Some(l), None, 0, None)?;
        momentum.advance(f_x, f_new);
        f_x = f_new;
        x_prev = std::mem::replace(&mut x, xn);
        ev_prev = Some(std::mem::replace(&mut ev, evn));
        if run.converged(disp) {
            break Status::Converged;
        }
    };
    Ok(run.finish(status, x, None))
}

/// Deterministic nonmonotone enhanced PDCA: every piece of the
/// `δ`-active set proposes a candidate, the best one is accepted once it
/// beats the nonmonotone reference for all pieces.
pub fn nepdca_solve(obj: &CompositeObjective, x0: &[f64], cfg: &SolverConfig) -> Result<SolverResult> {
    obj.check_point(x0)?;
    let dc = dc_view(obj, SolverKind::Nepdca)?;
    let mut run = Run::new(SolverKind::Nepdca, cfg)?;
    let loss = obj.loss();
    let pen = obj.penalty();
    let lambda = dc.lambda();
    let c = cfg.c.unwrap_or_else(|| 0.49 * obj.lipschitz().min(1.0));

    let mut x = x0.to_vec();
    let ev = loss.eval(&x);
    let f0 = run.record(0, ev.value, pen.value(&x), None, None, None, 0, None)?;
    // F(x_j) for max(t − r, 0) ≤ j ≤ t
    let mut window = Window::new(cfg.r + 1, f0);
    let mut g = loss.gradient(&ev);
    let mut f_x = ev.value;
    let mut eta_hat = cfg.eta0.clamp(cfg.eta_underline, cfg.eta_overline);
    let mut t = 0;
    let status = loop {
        if let Some(s) = run.should_stop(t) {
            break s;
        }
        let size = match dc.visit_active(&x, cfg.delta, cfg.active_set_cap, &mut |_| {}) {
            Ok(n) => n,
            Err(Error::ActiveSetOverflow { .. }) => break Status::ActiveSetOverflow,
            Err(e) => return Err(e),
        };
        t += 1;
        let base = f_x + dc.g1(&x);
        let reference = window.max();

        let mut eta = eta_hat;
        let mut backtracks = 0;
        let accepted = loop {
            let mut gammas = Vec::with_capacity(size);
            let mut dists = Vec::with_capacity(size);
            let mut best: Option<Candidate> = None;
            dc.visit_active(&x, cfg.delta, usize::MAX, &mut |v: &SignPattern| {
                let xi: Vec<f64> = v.to_f64().iter().map(|e| lambda * e).collect();
                let cand = dc_step(dc, &x, &g, &xi, eta);
                let d = dist_sq(&cand, &x);
                let ev_c = loss.eval(&cand);
                let p_c = pen.value(&cand);
                let score = ev_c.value + p_c + 0.5 * c * d;
                gammas.push(lambda * v.dot(&x));
                dists.push(d);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(Candidate {
                        x: cand,
                        ev: ev_c,
                        penalty: p_c,
                        dist_sq: d,
                        score,
                    });
                }
            })?;
            let best = best.expect("active set is never empty");
            let f_best = best.ev.value + best.penalty;
            let ok = gammas.iter().zip(&dists).all(|(gamma, d)| {
                f_best <= (base - gamma).max(reference) - 0.5 * c * best.dist_sq - 0.5 * c * d
            });
            if ok {
                break best;
            }
            if backtracks == LINE_SEARCH_CAP {
                return Err(Error::LineSearch(LINE_SEARCH_CAP));
            }
            eta *= cfg.rho;
            backtracks += 1;
        };

        let disp = accepted.dist_sq.sqrt();
        let f_new = run.record(
            t,
            accepted.ev.value,
            accepted.penalty,
            Some(disp),
            Some(eta),
            None,
            backtracks,
            Some(size),
        )?;
        window.push(f_new);
        let g_new = loss.gradient(&accepted.ev);
        let s = diff(&accepted.x, &x);
        let y = diff(&g_new, &g);
        eta_hat = bb_step(dot(&s, &y), norm_sq(&s), eta, cfg);
        g = g_new;
        x = accepted.x;
        f_x = accepted.ev.value;
        if run.converged(disp) {
            break Status::Converged;
        }
    };
    Ok(run.finish(status, x, None))
}

struct Candidate {
    x: Vec<f64>,
    ev: LossEval,
    penalty: f64,
    dist_sq: f64,
    score: f64,
}
