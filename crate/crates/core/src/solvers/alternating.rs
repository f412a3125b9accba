use crate::error::{Error, Result};
use crate::linalg::{dist, dist_sq, dot, norm_sq};
use crate::objective::{BlockLoss, TwoBlockObjective};
use crate::penalty::{project_l0_ball, Penalty};

use super::dca::Momentum;
use super::{
    bb_step, diff, gradient_step, Run, SolverConfig, SolverKind, SolverResult, Status, Window,
    LINE_SEARCH_CAP,
};

struct Blocks<'a, B> {
    obj: &'a TwoBlockObjective<B>,
    px: usize,
    pz: usize,
}

impl<B: BlockLoss> Blocks<'_, B> {
    fn grad_x(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.px];
        self.obj.loss().grad_x(x, z, &mut g);
        g
    }

    fn grad_z(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.pz];
        self.obj.loss().grad_z(x, z, &mut g);
        g
    }

    fn split_value(&self, x: &[f64], z: &[f64]) -> (f64, f64) {
        (
            self.obj.loss().value(x, z),
            self.obj.x_penalty().value(x) + self.obj.z_penalty().value(z),
        )
    }
}

fn start<'a, B: BlockLoss>(
    obj: &'a TwoBlockObjective<B>,
    x0: &[f64],
    z0: &[f64],
) -> Result<Blocks<'a, B>> {
    obj.check_point(x0, z0)?;
    let (px, pz) = obj.dims();
    Ok(Blocks { obj, px, pz })
}

/// Alternating prox-gradient steps with fixed `η^x = step_factor·L_x`,
/// `η^z = step_factor·L_z`.
pub fn palm_solve<B: BlockLoss>(
    obj: &TwoBlockObjective<B>,
    x0: &[f64],
    z0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let blocks = start(obj, x0, z0)?;
    let mut run = Run::new(SolverKind::Palm, cfg)?;
    let (lx, lz) = obj.block_lipschitz();
    let (ex, ez) = (cfg.step_factor * lx, cfg.step_factor * lz);

    let (mut x, mut z) = (x0.to_vec(), z0.to_vec());
    let (f, p) = blocks.split_value(&x, &z);
    run.record(0, f, p, None, None, None, 0, None)?;
    let mut t = 0;
    let status = loop {
        if let Some(s) = run.should_stop(t) {
            break s;
        }
        t += 1;
        let gx = blocks.grad_x(&x, &z);
        let xn = obj.x_penalty().prox(&gradient_step(&x, &gx, ex), ex);
        let gz = blocks.grad_z(&xn, &z);
        let zn = obj.z_penalty().prox(&gradient_step(&z, &gz, ez), ez);
        let disp = dist(&x, &xn) + dist(&z, &zn);
        let (f, p) = blocks.split_value(&xn, &zn);
        run.record(t, f, p, Some(disp), Some(ex), Some(ez), 0, None)?;
        x = xn;
        z = zn;
        if run.converged(disp) {
            break Status::Converged;
        }
    };
    Ok(run.finish(status, x, Some(z)))
}

/// PALM with per-block BB steps and a joint nonmonotone line search.
pub fn gpalm_solve<B: BlockLoss>(
    obj: &TwoBlockObjective<B>,
    x0: &[f64],
    z0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let blocks = start(obj, x0, z0)?;
    let mut run = Run::new(SolverKind::Gpalm, cfg)?;

    let (mut x, mut z) = (x0.to_vec(), z0.to_vec());
    let (f, p) = blocks.split_value(&x, &z);
    let f0 = run.record(0, f, p, None, None, None, 0, None)?;
    let mut window = Window::new(cfg.r, f0);
    let mut gx = blocks.grad_x(&x, &z);
    let eta_init = cfg.eta0.clamp(cfg.eta_underline, cfg.eta_overline);
    let (mut hat_x, mut hat_z) = (eta_init, eta_init);
    let mut t = 0;
    let status = loop {
        if let Some(s) = run.should_stop(t) {
            break s;
        }
        t += 1;
        let reference = window.max();
        let (mut ex, mut ez) = (hat_x, hat_z);
        let mut backtracks = 0;
        let (xn, zn, gz_half, f, p) = loop {
            let xn = obj.x_penalty().prox(&gradient_step(&x, &gx, ex), ex);
            let gz_half = blocks.grad_z(&xn, &z);
            let zn = obj.z_penalty().prox(&gradient_step(&z, &gz_half, ez), ez);
            let (f, p) = blocks.split_value(&xn, &zn);
            let decrease = 0.5 * cfg.sigma1 * ex * dist_sq(&xn, &x)
                + 0.5 * cfg.sigma2 * ez * dist_sq(&zn, &z);
            if f + p <= reference - decrease {
                break (xn, zn, gz_half, f, p);
            }
            if backtracks == LINE_SEARCH_CAP {
                return Err(Error::LineSearch(LINE_SEARCH_CAP));
            }
            ex *= cfg.rho1;
            ez *= cfg.rho2;
            backtracks += 1;
        };
        let disp = dist(&x, &xn) + dist(&z, &zn);
        let f_new = run.record(t, f, p, Some(disp), Some(ex), Some(ez), backtracks, None)?;
        window.push(f_new);

        let gx_new = blocks.grad_x(&xn, &zn);
        let gz_new = blocks.grad_z(&xn, &zn);
        let sx = diff(&xn, &x);
        let sz = diff(&zn, &z);
        hat_x = bb_step(dot(&sx, &diff(&gx_new, &gx)), norm_sq(&sx), ex, cfg);
        hat_z = bb_step(dot(&sz, &diff(&gz_new, &gz_half)), norm_sq(&sz), ez, cfg);
        gx = gx_new;
        x = xn;
        z = zn;
        if run.converged(disp) {
            break Status::Converged;
        }
    };
    Ok(run.finish(status, x, Some(z)))
}

/// One PDCAe step in `x`, then `z` projected onto the ℓ0 ball. `z0` is
/// projected first, so a dense start shared with the penalized methods is
/// accepted.
pub fn pdcae_proj_solve<B: BlockLoss>(
    obj: &TwoBlockObjective<B>,
    x0: &[f64],
    z0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let blocks = start(obj, x0, z0)?;
    let dc = obj.x_penalty().as_dc().ok_or_else(|| {
        Error::Unsupported("pdcae-proj needs the x penalty in l1-minus-polyhedral form".into())
    })?;
    let kappa = match obj.z_penalty() {
        Penalty::L0Ball(b) => b.kappa(),
        _ => {
            return Err(Error::Unsupported(
                "pdcae-proj needs an l0-ball constraint on z".into(),
            ))
        }
    };
    let mut run = Run::new(SolverKind::PdcaeProj, cfg)?;
    let (lx, lz) = obj.block_lipschitz();

    let (mut x, mut z) = (x0.to_vec(), project_l0_ball(z0, kappa));
    let mut x_prev = x.clone();
    let (f, p) = blocks.split_value(&x, &z);
    let mut f_cur = run.record(0, f, p, None, None, None, 0, None)?;
    let mut momentum = Momentum::new(cfg.beta_schedule);
    let mut t = 0;
    let status = loop {
        if let Some(s) = run.should_stop(t) {
            break s;
        }
        t += 1;
        let beta = momentum.beta();
        let y: Vec<f64> = x
            .iter()
            .zip(&x_prev)
            .map(|(c, q)| c + beta * (c - q))
            .collect();
        let gy = blocks.grad_x(&y, &z);
        let xi = dc.subgradient(&x, cfg.subgradient_policy);
        let arg: Vec<f64> = y
            .iter()
            .zip(&gy)
            .zip(&xi)
            .map(|((yj, gj), sj)| yj - (gj - sj) / lx)
            .collect();
        let xn = dc.prox_g1(&arg, lx);
        let gz = blocks.grad_z(&xn, &z);
        let zn = project_l0_ball(&gradient_step(&z, &gz, lz), kappa);
        let disp = dist(&x, &xn) + dist(&z, &zn);
        let (f, p) = blocks.split_value(&xn, &zn);
        let f_new = run.record(t, f, p, Some(disp), Some(lx), Some(lz), 0, None)?;
        momentum.advance(f_cur, f_new);
        f_cur = f_new;
        x_prev = std::mem::replace(&mut x, xn);
        z = zn;
        if run.converged(disp) {
            break Status::Converged;
        }
    };
    Ok(run.finish(status, x, Some(z)))
}
