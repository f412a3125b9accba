//! Certificates for the stationarity hierarchy of `f + λ(‖·‖₁ − |||·|||_K)`:
//! critical points, d-stationary points, and the prox fixed-point residual.
//!
//! For a sign pattern `v` the distance `dist(0, ∇f + λ∂‖·‖₁ − λv)` splits
//! across coordinates:
//!
//! * excluded `j`: `|g_j|`
//! * `x_j ≠ 0`: `|g_j + λ·sign(x_j) − λv_j|`
//! * `x_j = 0`: `max(0, |g_j − λv_j| − λ)`
//!
//! A point is critical when some active pattern has residual `≤ tol`, and
//! d-stationary when every active pattern does.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::{BlockLoss, CompositeObjective, TwoBlockObjective};
use crate::penalty::{DcPenalty, Penalty, PolyhedralPenalty, SignPattern, TopKPenalty};

pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// Step parameter used for the prox residual in reports, relative to `L`.
pub const REPORT_ETA_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalCheck {
    /// `None` when the active set overflowed before a witness was found.
    pub holds: Option<bool>,
    /// Smallest residual over the inspected patterns.
    pub residual: f64,
    pub witness: Option<SignPattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DStationaryCheck {
    /// `None` when the active set overflowed without exposing a violation.
    pub holds: Option<bool>,
    pub worst_residual: f64,
    pub worst_pattern: Option<SignPattern>,
    /// `|A₀(x)|`, `None` when it does not fit in 64 bits.
    pub active_set_size: Option<u64>,
    pub overflow: bool,
}

/// Both certificates for one block of variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCertificate {
    pub block: String,
    pub critical: CriticalCheck,
    pub d_stationary: DStationaryCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub tolerance: f64,
    pub prox_eta: f64,
    pub prox_residual: f64,
    pub gradient_norm: f64,
    pub critical: Option<bool>,
    pub d_stationary: Option<bool>,
    pub blocks: Vec<BlockCertificate>,
}

impl StationarityReport {
    pub fn is_critical(&self) -> bool {
        self.critical == Some(true)
    }

    pub fn is_d_stationary(&self) -> bool {
        self.d_stationary == Some(true)
    }

    pub fn overflow(&self) -> bool {
        self.blocks.iter().any(|b| b.d_stationary.overflow)
    }
}

/// `‖x − Prox_{g/η}(x − ∇f(x)/η)‖`
pub fn prox_residual(obj: &CompositeObjective, x: &[f64], eta: f64) -> Result<f64> {
    obj.check_point(x)?;
    let (_, g) = obj.loss().value_grad(x);
    Ok(block_prox_residual(obj.penalty(), x, &g, eta))
}

fn block_prox_residual(penalty: &Penalty, x: &[f64], g: &[f64], eta: f64) -> f64 {
    let y: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - gi / eta).collect();
    linalg::dist(x, &penalty.prox(&y, eta))
}

pub fn check_critical(obj: &CompositeObjective, x: &[f64], tol: f64) -> Result<CriticalCheck> {
    obj.check_point(x)?;
    let (_, g) = obj.loss().value_grad(x);
    Ok(certify_block("x", obj.penalty(), x, &g, tol, usize::MAX)?.critical)
}

pub fn check_d_stationary(
    obj: &CompositeObjective,
    x: &[f64],
    tol: f64,
    cap: usize,
) -> Result<DStationaryCheck> {
    obj.check_point(x)?;
    let (_, g) = obj.loss().value_grad(x);
    Ok(certify_block("x", obj.penalty(), x, &g, tol, cap)?.d_stationary)
}

pub fn classify(
    obj: &CompositeObjective,
    x: &[f64],
    tol: f64,
    cap: usize,
) -> Result<StationarityReport> {
    obj.check_point(x)?;
    let (_, g) = obj.loss().value_grad(x);
    let eta = REPORT_ETA_FACTOR * obj.lipschitz();
    let block = certify_block("x", obj.penalty(), x, &g, tol, cap)?;
    Ok(StationarityReport {
        tolerance: tol,
        prox_eta: eta,
        prox_residual: block_prox_residual(obj.penalty(), x, &g, eta),
        gradient_norm: linalg::norm(&g),
        critical: block.critical.holds,
        d_stationary: block.d_stationary.holds,
        blocks: vec![block],
    })
}

/// Blockwise certificates for `f(x, z) + g(x) + h(z)`. The point passes a
/// level when both blocks do.
pub fn classify_two_block<B: BlockLoss>(
    obj: &TwoBlockObjective<B>,
    x: &[f64],
    z: &[f64],
    tol: f64,
    cap: usize,
) -> Result<StationarityReport> {
    obj.check_point(x, z)?;
    let (px, pz) = obj.dims();
    let mut gx = vec![0.0; px];
    let mut gz = vec![0.0; pz];
    obj.loss().grad_x(x, z, &mut gx);
    obj.loss().grad_z(x, z, &mut gz);
    let (lx, lz) = obj.block_lipschitz();
    let (ex, ez) = (REPORT_ETA_FACTOR * lx, REPORT_ETA_FACTOR * lz);
    let rx = block_prox_residual(obj.x_penalty(), x, &gx, ex);
    let rz = block_prox_residual(obj.z_penalty(), z, &gz, ez);
    let bx = certify_block("x", obj.x_penalty(), x, &gx, tol, cap)?;
    let bz = certify_block("z", obj.z_penalty(), z, &gz, tol, cap)?;
    Ok(StationarityReport {
        tolerance: tol,
        prox_eta: ex,
        prox_residual: rx.hypot(rz),
        gradient_norm: linalg::norm(&gx).hypot(linalg::norm(&gz)),
        critical: both(bx.critical.holds, bz.critical.holds),
        d_stationary: both(bx.d_stationary.holds, bz.d_stationary.holds),
        blocks: vec![bx, bz],
    })
}

fn both(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

/// Certificates for one block given its partial gradient `g`.
pub fn certify_block(
    name: &str,
    penalty: &Penalty,
    x: &[f64],
    g: &[f64],
    tol: f64,
    cap: usize,
) -> Result<BlockCertificate> {
    crate::error::check_dim("gradient dimension", x.len(), g.len())?;
    let (critical, d_stationary) = match penalty {
        Penalty::TopK(p) => top_k_certificate(p, x, g, tol),
        Penalty::Polyhedral(p) => polyhedral_certificate(p, x, g, tol, cap)?,
        Penalty::L0Ball(p) => {
            let r = l0_ball_residual(x, g, p.kappa());
            if !r.is_finite() {
                return Err(Error::InvalidData("non-finite gradient".into()));
            }
            (
                CriticalCheck {
                    holds: Some(r <= tol && p.value(x) == 0.0),
                    residual: r,
                    witness: None,
                },
                DStationaryCheck {
                    holds: Some(r <= tol && p.value(x) == 0.0),
                    worst_residual: r,
                    worst_pattern: None,
                    active_set_size: None,
                    overflow: false,
                },
            )
        }
    };
    Ok(BlockCertificate {
        block: name.to_string(),
        critical,
        d_stationary,
    })
}

/// Stationarity of `f` over `{‖z‖₀ ≤ κ}`: the gradient must vanish on the
/// support, or everywhere when the budget is not exhausted.
fn l0_ball_residual(z: &[f64], g: &[f64], kappa: usize) -> f64 {
    let free = linalg::count_nonzero(z) < kappa;
    z.iter()
        .zip(g)
        .filter(|(zi, _)| free || **zi != 0.0)
        .map(|(_, gi)| gi.abs())
        .fold(0.0, f64::max)
}

fn residual_with(xj: f64, gj: f64, lambda: f64, vj: f64) -> f64 {
    if xj != 0.0 {
        (gj + lambda * xj.signum() - lambda * vj).abs()
    } else {
        ((gj - lambda * vj).abs() - lambda).max(0.0)
    }
}

fn pattern_residual(pen: &dyn DcPenalty, x: &[f64], g: &[f64], v: &SignPattern) -> f64 {
    let lambda = pen.lambda();
    (0..x.len())
        .map(|j| {
            if pen.is_penalized(j) {
                residual_with(x[j], g[j], lambda, f64::from(v.entries()[j]))
            } else {
                g[j].abs()
            }
        })
        .fold(0.0, f64::max)
}

fn polyhedral_certificate(
    p: &PolyhedralPenalty,
    x: &[f64],
    g: &[f64],
    tol: f64,
    cap: usize,
) -> Result<(CriticalCheck, DStationaryCheck)> {
    let mut best: Option<(f64, SignPattern)> = None;
    let mut worst: Option<(f64, SignPattern)> = None;
    let visited = p.visit_active(x, 0.0, cap, &mut |v| {
        let r = pattern_residual(p, x, g, v);
        if best.as_ref().is_none_or(|(b, _)| r < *b) {
            best = Some((r, v.clone()));
        }
        if worst.as_ref().is_none_or(|(w, _)| r > *w) {
            worst = Some((r, v.clone()));
        }
    });
    let overflow = match visited {
        Ok(_) => false,
        Err(Error::ActiveSetOverflow { .. }) => true,
        Err(e) => return Err(e),
    };
    let (min_r, witness) = best.unzip();
    let (max_r, worst_pattern) = worst.unzip();
    let min_r = min_r.unwrap_or(f64::INFINITY);
    let max_r = max_r.unwrap_or(0.0);
    let critical = CriticalCheck {
        holds: match (min_r <= tol, overflow) {
            (true, _) => Some(true),
            (false, false) => Some(false),
            (false, true) => None,
        },
        residual: min_r,
        witness: witness.filter(|_| min_r <= tol),
    };
    let d = DStationaryCheck {
        holds: match (max_r <= tol, overflow) {
            (false, _) => Some(false),
            (true, false) => Some(true),
            (true, true) => None,
        },
        worst_residual: max_r,
        worst_pattern,
        active_set_size: visited.ok().map(|n| n as u64),
        overflow,
    };
    Ok((critical, d))
}

/// Certificates for `λT_K` without enumerating `A₀(x)`.
///
/// Every pattern in `A₀(x)` contains the coordinates strictly above the
/// K-th magnitude `m`, avoids those strictly below it, and picks `r` of
/// the coordinates tied at `m` (with a free sign when `m = 0`). Since the
/// residual is a max over coordinates, the worst pattern is the per
/// coordinate worst case, and the best pattern solves a small bottleneck
/// selection over the tied group.
fn top_k_certificate(
    p: &TopKPenalty,
    x: &[f64],
    g: &[f64],
    tol: f64,
) -> (CriticalCheck, DStationaryCheck) {
    let lambda = p.lambda();
    let pen = p.penalized();
    let k = p.k();
    let dim = x.len();

    let m = if k == 0 {
        f64::INFINITY
    } else {
        let mut mags: Vec<f64> = pen.iter().map(|&j| x[j].abs()).collect();
        let (_, kth, _) = mags.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        *kth
    };
    let above: Vec<usize> = pen.iter().copied().filter(|&j| x[j].abs() > m).collect();
    let tied: Vec<usize> = pen.iter().copied().filter(|&j| x[j].abs() == m).collect();
    let r = k.saturating_sub(above.len()).min(tied.len());

    // residual of every coordinate whose role is fixed
    let mut fixed = 0.0f64;
    let mut base = SignPattern::zeros(dim);
    for j in 0..dim {
        let res = if !p.is_penalized(j) {
            g[j].abs()
        } else if x[j].abs() > m {
            base.set(j, x[j].signum() as i8);
            residual_with(x[j], g[j], lambda, x[j].signum())
        } else if x[j].abs() < m || k == 0 {
            residual_with(x[j], g[j], lambda, 0.0)
        } else {
            continue;
        };
        fixed = fixed.max(res);
    }

    struct Tied {
        j: usize,
        out: f64,
        in_best: f64,
        in_best_sign: i8,
        in_worst: f64,
        in_worst_sign: i8,
    }
    let tied_info: Vec<Tied> = if k == 0 {
        Vec::new()
    } else {
        tied.iter()
            .map(|&j| {
                let out = residual_with(x[j], g[j], lambda, 0.0);
                if x[j] != 0.0 {
                    let s = x[j].signum();
                    let res = residual_with(x[j], g[j], lambda, s);
                    Tied {
                        j,
                        out,
                        in_best: res,
                        in_best_sign: s as i8,
                        in_worst: res,
                        in_worst_sign: s as i8,
                    }
                } else {
                    let neg = residual_with(0.0, g[j], lambda, -1.0);
                    let pos = residual_with(0.0, g[j], lambda, 1.0);
                    let (bs, b, ws, w) = if pos <= neg {
                        (1, pos, -1, neg)
                    } else {
                        (-1, neg, 1, pos)
                    };
                    Tied {
                        j,
                        out,
                        in_best: b,
                        in_best_sign: bs,
                        in_worst: w,
                        in_worst_sign: ws,
                    }
                }
            })
            .collect()
    };

    // best pattern: smallest t such that exactly r tied coordinates can be
    // switched on with every tied residual ≤ t
    let feasible = |t: f64| {
        let mut only_in = 0;
        let mut flexible = 0;
        for c in &tied_info {
            match (c.in_best <= t, c.out <= t) {
                (true, true) => flexible += 1,
                (true, false) => only_in += 1,
                (false, true) => {}
                (false, false) => return false,
            }
        }
        only_in <= r && r <= only_in + flexible
    };
    let mut candidates: Vec<f64> = tied_info
        .iter()
        .flat_map(|c| [c.in_best, c.out])
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let t_star = if tied_info.is_empty() {
        0.0
    } else {
        let idx = candidates.partition_point(|&t| !feasible(t));
        candidates[idx.min(candidates.len() - 1)]
    };
    let best_residual = fixed.max(t_star);
    let mut witness = base.clone();
    let forced = tied_info.iter().filter(|c| c.in_best <= t_star && c.out > t_star);
    let optional = tied_info.iter().filter(|c| c.in_best <= t_star && c.out <= t_star);
    for c in forced.chain(optional).take(r) {
        witness.set(c.j, c.in_best_sign);
    }

    // worst pattern: each tied coordinate independently takes its worst
    // admissible role
    let can_in = r >= 1;
    let can_out = r < tied_info.len();
    let mut worst = fixed;
    let mut worst_choice: Option<(usize, Option<i8>)> = None;
    for (idx, c) in tied_info.iter().enumerate() {
        if can_in && c.in_worst > worst {
            worst = c.in_worst;
            worst_choice = Some((idx, Some(c.in_worst_sign)));
        }
        if can_out && c.out > worst {
            worst = c.out;
            worst_choice = Some((idx, None));
        }
    }
    let mut worst_pattern = base;
    let mut need = r;
    let skip = worst_choice.map(|(idx, _)| idx);
    if let Some((idx, Some(s))) = worst_choice {
        worst_pattern.set(tied_info[idx].j, s);
        need -= 1;
    }
    for (i, c) in tied_info.iter().enumerate() {
        if need == 0 {
            break;
        }
        if Some(i) != skip {
            worst_pattern.set(c.j, c.in_worst_sign);
            need -= 1;
        }
    }

    let size = if k == 0 {
        Some(1)
    } else {
        let signs = if m == 0.0 { r } else { 0 };
        binomial(tied_info.len() as u64, r as u64)
            .and_then(|c| c.checked_mul(1u128.checked_shl(signs as u32)?))
            .and_then(|c| u64::try_from(c).ok())
    };

    (
        CriticalCheck {
            holds: Some(best_residual <= tol),
            residual: best_residual,
            witness: (best_residual <= tol).then_some(witness),
        },
        DStationaryCheck {
            holds: Some(worst <= tol),
            worst_residual: worst,
            worst_pattern: Some(worst_pattern),
            active_set_size: size,
            overflow: false,
        },
    )
}

fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(u128::from(n - i))? / u128::from(i + 1);
    }
    Some(acc)
}
