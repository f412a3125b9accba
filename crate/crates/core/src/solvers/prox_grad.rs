use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm_sq};
use crate::objective::CompositeObjective;

use super::{bb_step, diff, gradient_step, Run, SolverConfig, SolverKind, SolverResult, Status, Window, LINE_SEARCH_CAP};

/// Proximal gradient with the fixed step `η = step_factor·L`.
pub fn pgm_solve(obj: &CompositeObjective, x0: &[f64], cfg: &SolverConfig) -> Result<SolverResult> {
    obj.check_point(x0)?;
    let mut run = Run::new(SolverKind::Pgm, cfg)?;
    let loss = obj.loss();
    let pen = obj.penalty();
    let eta = cfg.step_factor * obj.lipschitz();

    let mut x = x0.to_vec();
    let mut ev = loss.eval(&x);
    run.record(0, ev.value, pen.value(&x), None, None, None, 0, None)?;
    let mut g = loss.gradient(&ev);
    let mut t = 0;
    let status = loop {
        if let Some(s) = run.should_stop(t) {
            break s;
        }
        t += 1;
        let xn = pen.prox(&gradient_step(&x, &g, eta), eta);
        let evn = loss.eval(&xn);
        let disp = dist(&x, &xn);
        run.record(t, evn.value, pen.value(&xn), Some(disp), Some(eta), None, 0, None)?;
        x = xn;
        ev = evn;
        if run.converged(disp) {
            break Status::Converged;
        }
        loss.gradient_into(&ev, &mut g);
    };
    Ok(run.finish(status, x, None))
}

/// Proximal gradient with BB initial steps and nonmonotone backtracking.
pub fn gist_solve(obj: &CompositeObjective, x0: &[f64], cfg: &SolverConfig) -> Result<SolverResult> {
    obj.check_point(x0)?;
    let mut run = Run::new(SolverKind::Gist, cfg)?;
    let loss = obj.loss();
    let pen = obj.penalty();

    let mut x = x0.to_vec();
    let ev = loss.eval(&x);
    let f0 = run.record(0, ev.value, pen.value(&x), None, None, None, 0, None)?;
    let mut window = Window::new(cfg.r, f0);
    let mut g = loss.gradient(&ev);
    let mut g_next = vec![0.0; g.len()];
    let mut eta_hat = cfg.eta0.clamp(cfg.eta_underline, cfg.eta_overline);
    let mut t = 0;
    let status = loop {
        if let Some(s) = run.should_stop(t) {
            break s;
        }
        t += 1;
        let reference = window.max();
        let mut eta = eta_hat;
        let mut backtracks = 0;
        let (xn, evn, f_new, gn) = loop {
            let xn = pen.prox(&gradient_step(&x, &g, eta), eta);
            let evn = loss.eval(&xn);
            let gn = pen.value(&xn);
            let f_new = evn.value + gn;
            if f_new <= reference - 0.5 * cfg.sigma * eta * crate::linalg::dist_sq(&xn, &x) {
                break (xn, evn, f_new, gn);
            }
            if backtracks == LINE_SEARCH_CAP {
                return Err(Error::LineSearch(LINE_SEARCH_CAP));
            }
            eta *= cfg.rho;
            backtracks += 1;
        };
        let disp = dist(&x, &xn);
        run.record(t, evn.value, gn, Some(disp), Some(eta), None, backtracks, None)?;
        window.push(f_new);

        loss.gradient_into(&evn, &mut g_next);
        let s = diff(&xn, &x);
        let y = diff(&g_next, &g);
        eta_hat = bb_step(dot(&s, &y), norm_sq(&s), eta, cfg);
        std::mem::swap(&mut g, &mut g_next);
        x = xn;
        if run.converged(disp) {
            break Status::Converged;
        }
    };
    Ok(run.finish(status, x, None))
}
