//! Smooth losses, their gradients, Lipschitz estimates, and the composite
//! objectives `f + g` (one block) and `f(x, z) + g(x) + h(z)` (two blocks).
//!
//! Losses evaluate through a cached inner vector (`Ax - b` for least
//! squares, `Ax` for logistic). The gradient reuses it. Inner vectors are
//! affine in `x`, so an extrapolated point can be evaluated by combining
//! cached vectors instead of another product with `A`.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{self, DesignMatrix};
use crate::penalty::Penalty;

/// Relative tolerance used when an objective estimates its own `L`.
pub const DEFAULT_LIPSCHITZ_TOL: f64 = 1e-8;
/// Gram matrices up to this order are diagonalized directly.
pub const EXACT_SMALL_MAX_DIM: usize = 400;
const POWER_ITERATION_CAP: usize = 10_000;
const POWER_ITERATION_SEED: u64 = 0x7e57_5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    LeastSquares,
    Logistic,
    RobustLeastSquares,
}

/// `½‖Ax − b‖²`
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: Arc<DesignMatrix>,
    b: Vec<f64>,
}

impl LeastSquares {
    pub fn new(a: Arc<DesignMatrix>, b: Vec<f64>) -> Result<Self> {
        check_dim("response length", a.n_rows(), b.len())?;
        check_data(&a, &b)?;
        Ok(Self { a, b })
    }

    pub fn design(&self) -> &Arc<DesignMatrix> {
        &self.a
    }

    pub fn response(&self) -> &[f64] {
        &self.b
    }
}

/// `(1/N) Σ ln(1 + exp(−bᵢ⟨aᵢ, x⟩))` with labels in `{−1, +1}`.
#[derive(Debug, Clone)]
pub struct Logistic {
    a: Arc<DesignMatrix>,
    labels: Vec<f64>,
}

impl Logistic {
    pub fn new(a: Arc<DesignMatrix>, labels: Vec<f64>) -> Result<Self> {
        check_dim("label count", a.n_rows(), labels.len())?;
        check_data(&a, &labels)?;
        if let Some((i, l)) = labels
            .iter()
            .enumerate()
            .find(|(_, l)| **l != 1.0 && **l != -1.0)
        {
            return Err(Error::InvalidData(format!(
                "logistic label {i} is {l}, expected -1 or +1"
            )));
        }
        Ok(Self { a, labels })
    }

    pub fn design(&self) -> &Arc<DesignMatrix> {
        &self.a
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// `½‖Ax − b − z‖²`, the two-block loss of sparse robust regression.
#[derive(Debug, Clone)]
pub struct RobustLeastSquares {
    a: Arc<DesignMatrix>,
    b: Vec<f64>,
    /// Use `λ_max(AᵀA) + 1` instead of power iteration on `[A, −I]`.
    pub closed_form_joint_bound: bool,
}

impl RobustLeastSquares {
    pub fn new(a: Arc<DesignMatrix>, b: Vec<f64>) -> Result<Self> {
        check_dim("response length", a.n_rows(), b.len())?;
        check_data(&a, &b)?;
        Ok(Self {
            a,
            b,
            closed_form_joint_bound: false,
        })
    }

    pub fn design(&self) -> &Arc<DesignMatrix> {
        &self.a
    }

    pub fn response(&self) -> &[f64] {
        &self.b
    }

    /// `r = Ax − b − z`
    pub fn residual(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let mut r = self.a.mul_vec(x);
        for ((ri, bi), zi) in r.iter_mut().zip(&self.b).zip(z) {
            *ri -= bi + zi;
        }
        r
    }
}

fn check_data(a: &DesignMatrix, b: &[f64]) -> Result<()> {
    if !a.all_finite() {
        return Err(Error::InvalidData("design matrix has non-finite entries".into()));
    }
    check_finite("response", b)
}

#[derive(Debug, Clone)]
pub enum SmoothLoss {
    LeastSquares(LeastSquares),
    Logistic(Logistic),
    RobustLeastSquares(RobustLeastSquares),
}

/// Value of a single-block loss together with its cached inner vector.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    inner: Vec<f64>,
}

impl SmoothLoss {
    pub fn least_squares(a: Arc<DesignMatrix>, b: Vec<f64>) -> Result<Self> {
        LeastSquares::new(a, b).map(Self::LeastSquares)
    }

    pub fn logistic(a: Arc<DesignMatrix>, labels: Vec<f64>) -> Result<Self> {
        Logistic::new(a, labels).map(Self::Logistic)
    }

    pub fn robust_least_squares(a: Arc<DesignMatrix>, b: Vec<f64>) -> Result<Self> {
        RobustLeastSquares::new(a, b).map(Self::RobustLeastSquares)
    }

    pub fn kind(&self) -> LossKind {
        match self {
            Self::LeastSquares(_) => LossKind::LeastSquares,
            Self::Logistic(_) => LossKind::Logistic,
            Self::RobustLeastSquares(_) => LossKind::RobustLeastSquares,
        }
    }

    pub fn design(&self) -> &Arc<DesignMatrix> {
        match self {
            Self::LeastSquares(l) => &l.a,
            Self::Logistic(l) => &l.a,
            Self::RobustLeastSquares(l) => &l.a,
        }
    }

    /// Coefficient dimension `p`.
    pub fn dim(&self) -> usize {
        self.design().n_cols()
    }

    pub fn sample_count(&self) -> usize {
        self.design().n_rows()
    }

    /// Evaluates the loss at `x`. For the robust loss this is the `z = 0`
    /// slice, which coincides with least squares.
    pub fn eval(&self, x: &[f64]) -> LossEval {
        let mut inner = self.design().mul_vec(x);
        match self {
            Self::LeastSquares(LeastSquares { b, .. })
            | Self::RobustLeastSquares(RobustLeastSquares { b, .. }) => {
                for (r, bi) in inner.iter_mut().zip(b) {
                    *r -= bi;
                }
            }
            Self::Logistic(_) => {}
        }
        LossEval {
            value: self.value_from_inner(&inner),
            inner,
        }
    }

    fn value_from_inner(&self, inner: &[f64]) -> f64 {
        match self {
            Self::LeastSquares(_) | Self::RobustLeastSquares(_) => 0.5 * linalg::norm_sq(inner),
            Self::Logistic(l) => {
                let n = l.labels.len();
                if n == 0 {
                    return 0.0;
                }
                let total: f64 = inner
                    .iter()
                    .zip(&l.labels)
                    .map(|(m, y)| softplus(-y * m))
                    .sum();
                total / n as f64
            }
        }
    }

    pub fn gradient_into(&self, ev: &LossEval, grad: &mut [f64]) {
        match self {
            Self::LeastSquares(l) => l.a.tmul_vec_into(&ev.inner, grad),
            Self::RobustLeastSquares(l) => l.a.tmul_vec_into(&ev.inner, grad),
            Self::Logistic(l) => {
                let n = l.labels.len() as f64;
                let weights: Vec<f64> = ev
                    .inner
                    .iter()
                    .zip(&l.labels)
                    .map(|(m, y)| -y * sigmoid(-y * m) / n)
                    .collect();
                l.a.tmul_vec_into(&weights, grad);
            }
        }
    }

    pub fn gradient(&self, ev: &LossEval) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(ev, &mut g);
        g
    }

    pub fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let ev = self.eval(x);
        let g = self.gradient(&ev);
        (ev.value, g)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).value
    }

    /// Evaluation at `x + β(x − x_prev)` from the evaluations at `x` and
    /// `x_prev`.
    pub fn extrapolate(&self, at: &LossEval, prev: &LossEval, beta: f64) -> LossEval {
        let inner: Vec<f64> = at
            .inner
            .iter()
            .zip(&prev.inner)
            .map(|(c, p)| c + beta * (c - p))
            .collect();
        LossEval {
            value: self.value_from_inner(&inner),
            inner,
        }
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn validate_point(a: &DesignMatrix, x: &[f64]) -> Result<()> {
    check_dim("point dimension", a.n_cols(), x.len())?;
    check_finite("point", x)
}

/// Value and gradient of `½‖Ax − b‖²`.
pub fn ls_value_grad(a: &Arc<DesignMatrix>, b: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    validate_point(a, x)?;
    let loss = SmoothLoss::least_squares(a.clone(), b.to_vec())?;
    Ok(loss.value_grad(x))
}

/// Value and gradient of the `1/N`-scaled logistic loss.
pub fn logistic_value_grad(
    a: &Arc<DesignMatrix>,
    labels: &[f64],
    x: &[f64],
) -> Result<(f64, Vec<f64>)> {
    validate_point(a, x)?;
    let loss = SmoothLoss::logistic(a.clone(), labels.to_vec())?;
    Ok(loss.value_grad(x))
}

/// Value and the two partial gradients of `½‖Ax − b − z‖²`.
pub fn robust_ls_value_grad(
    a: &Arc<DesignMatrix>,
    b: &[f64],
    x: &[f64],
    z: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    validate_point(a, x)?;
    check_dim("z dimension", a.n_rows(), z.len())?;
    check_finite("z", z)?;
    let loss = RobustLeastSquares::new(a.clone(), b.to_vec())?;
    let r = loss.residual(x, z);
    let gx = a.tmul_vec(&r);
    let gz = r.iter().map(|v| -v).collect();
    Ok((0.5 * linalg::norm_sq(&r), gx, gz))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzMethod {
    PowerIteration,
    ExactSmall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub method: LipschitzMethod,
    pub iterations_used: usize,
    pub relative_tolerance: f64,
    /// False when power iteration hit its cap; `value` is then the best
    /// Rayleigh quotient seen, inflated as usual.
    pub converged: bool,
    /// The operator is zero; `value` is the machine-epsilon floor.
    pub degenerate: bool,
}

/// Upper estimate of the gradient Lipschitz constant of `loss`.
///
/// Small problems are diagonalized exactly; larger ones use power
/// iteration until successive Rayleigh quotients differ by less than
/// `tol` (relative), after which the estimate is inflated by `1 + 10·tol`.
pub fn lipschitz_upper_bound(loss: &SmoothLoss, tol: f64) -> LipschitzEstimate {
    let a = loss.design();
    let method = if a.n_rows().min(a.n_cols()) <= EXACT_SMALL_MAX_DIM {
        LipschitzMethod::ExactSmall
    } else {
        LipschitzMethod::PowerIteration
    };
    lipschitz_with_method(loss, tol, method)
}

pub fn lipschitz_with_method(
    loss: &SmoothLoss,
    tol: f64,
    method: LipschitzMethod,
) -> LipschitzEstimate {
    let a = loss.design();
    let mut est = match (loss, method) {
        (SmoothLoss::RobustLeastSquares(r), LipschitzMethod::PowerIteration)
            if !r.closed_form_joint_bound =>
        {
            power_iteration(a.n_cols() + a.n_rows(), tol, |v, out| {
                // out = [A, −I]ᵀ [A, −I] v
                let (x, z) = v.split_at(a.n_cols());
                let mut u = a.mul_vec(x);
                linalg::axpy(-1.0, z, &mut u);
                let (ox, oz) = out.split_at_mut(a.n_cols());
                a.tmul_vec_into(&u, ox);
                for (o, ui) in oz.iter_mut().zip(&u) {
                    *o = -ui;
                }
            })
        }
        _ => gram_lambda_max(a, tol, method),
    };
    match loss {
        SmoothLoss::LeastSquares(_) => {}
        SmoothLoss::Logistic(l) => {
            if !est.degenerate {
                est.value /= 4.0 * l.labels.len().max(1) as f64;
            }
        }
        SmoothLoss::RobustLeastSquares(r) => {
            // λ_max([A, −I][A, −I]ᵀ) = λ_max(AAᵀ + I) = λ_max(AᵀA) + 1
            if method == LipschitzMethod::ExactSmall || r.closed_form_joint_bound {
                est.value = if est.degenerate { 1.0 } else { est.value + 1.0 };
                est.degenerate = false;
            }
        }
    }
    est
}

/// `λ_max(AᵀA)` as an upper estimate.
pub fn gram_lambda_max(a: &DesignMatrix, tol: f64, method: LipschitzMethod) -> LipschitzEstimate {
    match method {
        LipschitzMethod::ExactSmall => {
            let (n, g) = a.small_gram();
            let top = if n == 0 {
                0.0
            } else {
                nalgebra::DMatrix::from_row_slice(n, n, &g)
                    .symmetric_eigenvalues()
                    .max()
            };
            if top <= 0.0 {
                return degenerate(LipschitzMethod::ExactSmall, tol, 0);
            }
            LipschitzEstimate {
                // absorbs eigensolver rounding
                value: top * (1.0 + 64.0 * f64::EPSILON),
                method,
                iterations_used: 0,
                relative_tolerance: tol,
                converged: true,
                degenerate: false,
            }
        }
        LipschitzMethod::PowerIteration => {
            let mut scratch = vec![0.0; a.n_rows()];
            power_iteration(a.n_cols(), tol, |v, out| {
                a.mul_vec_into(v, &mut scratch);
                a.tmul_vec_into(&scratch, out);
            })
        }
    }
}

fn degenerate(method: LipschitzMethod, tol: f64, iterations: usize) -> LipschitzEstimate {
    LipschitzEstimate {
        value: f64::EPSILON,
        method,
        iterations_used: iterations,
        relative_tolerance: tol,
        converged: true,
        degenerate: true,
    }
}

/// Power iteration for the top eigenvalue of a PSD operator.
fn power_iteration(
    n: usize,
    tol: f64,
    mut apply: impl FnMut(&[f64], &mut [f64]),
) -> LipschitzEstimate {
    if n == 0 {
        return degenerate(LipschitzMethod::PowerIteration, tol, 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| 1.0 + 0.01 * rng.gen_range(-1.0..1.0)).collect();
    let nv = linalg::norm(&v);
    v.iter_mut().for_each(|e| *e /= nv);
    let mut w = vec![0.0; n];
    let mut best = 0.0f64;
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=POWER_ITERATION_CAP {
        iterations = it;
        apply(&v, &mut w);
        let rq = linalg::dot(&v, &w);
        best = best.max(rq);
        let nw = linalg::norm(&w);
        if nw == 0.0 || !nw.is_finite() {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if let Some(p) = prev {
            if (rq - p).abs() <= tol * rq.abs() {
                converged = true;
                break;
            }
        }
        prev = Some(rq);
    }
    if best <= 0.0 {
        return degenerate(LipschitzMethod::PowerIteration, tol, iterations);
    }
    LipschitzEstimate {
        value: best * (1.0 + 10.0 * tol),
        method: LipschitzMethod::PowerIteration,
        iterations_used: iterations,
        relative_tolerance: tol,
        converged,
        degenerate: false,
    }
}

/// `F(x) = f(x) + g(x)` with a single block of variables.
#[derive(Debug)]
pub struct CompositeObjective {
    loss: SmoothLoss,
    penalty: Penalty,
    lipschitz: OnceLock<f64>,
}

impl Clone for CompositeObjective {
    fn clone(&self) -> Self {
        let lipschitz = OnceLock::new();
        if let Some(l) = self.lipschitz.get() {
            let _ = lipschitz.set(*l);
        }
        Self {
            loss: self.loss.clone(),
            penalty: self.penalty.clone(),
            lipschitz,
        }
    }
}

impl CompositeObjective {
    pub fn new(loss: SmoothLoss, penalty: Penalty) -> Result<Self> {
        if loss.kind() == LossKind::RobustLeastSquares {
            return Err(Error::Unsupported(
                "the robust loss has two blocks; use TwoBlockObjective".into(),
            ));
        }
        check_dim("penalty dimension", loss.dim(), penalty.dim())?;
        Ok(Self {
            loss,
            penalty,
            lipschitz: OnceLock::new(),
        })
    }

    /// Pins `L` instead of estimating it on first use.
    pub fn with_lipschitz(self, l: f64) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(l);
        Self {
            lipschitz: cell,
            ..self
        }
    }

    pub fn loss(&self) -> &SmoothLoss {
        &self.loss
    }

    pub fn penalty(&self) -> &Penalty {
        &self.penalty
    }

    pub fn dim(&self) -> usize {
        self.loss.dim()
    }

    pub fn lipschitz(&self) -> f64 {
        *self
            .lipschitz
            .get_or_init(|| lipschitz_upper_bound(&self.loss, DEFAULT_LIPSCHITZ_TOL).value)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.loss.value(x) + self.penalty.value(x)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        check_dim("point dimension", self.dim(), x.len())?;
        check_finite("point", x)
    }
}

/// Smooth part of a two-block problem.
pub trait BlockLoss {
    /// `(dim x, dim z)`
    fn dims(&self) -> (usize, usize);
    fn value(&self, x: &[f64], z: &[f64]) -> f64;
    fn grad_x(&self, x: &[f64], z: &[f64], out: &mut [f64]);
    fn grad_z(&self, x: &[f64], z: &[f64], out: &mut [f64]);
    /// Per-block gradient Lipschitz constants `(L_x, L_z)`.
    fn block_lipschitz(&self) -> (f64, f64);
    /// Joint constant `M` over the stacked variable `(x, z)`.
    fn joint_lipschitz(&self) -> f64;
}

impl BlockLoss for RobustLeastSquares {
    fn dims(&self) -> (usize, usize) {
        (self.a.n_cols(), self.a.n_rows())
    }

    fn value(&self, x: &[f64], z: &[f64]) -> f64 {
        0.5 * linalg::norm_sq(&self.residual(x, z))
    }

    fn grad_x(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        let r = self.residual(x, z);
        self.a.tmul_vec_into(&r, out);
    }

    fn grad_z(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(self.residual(x, z)) {
            *o = -r;
        }
    }

    fn block_lipschitz(&self) -> (f64, f64) {
        let a = &self.a;
        let method = if a.n_rows().min(a.n_cols()) <= EXACT_SMALL_MAX_DIM {
            LipschitzMethod::ExactSmall
        } else {
            LipschitzMethod::PowerIteration
        };
        (gram_lambda_max(a, DEFAULT_LIPSCHITZ_TOL, method).value, 1.0)
    }

    fn joint_lipschitz(&self) -> f64 {
        lipschitz_upper_bound(
            &SmoothLoss::RobustLeastSquares(self.clone()),
            DEFAULT_LIPSCHITZ_TOL,
        )
        .value
    }
}

/// `F(x, z) = f(x, z) + g(x) + h(z)`
#[derive(Debug)]
pub struct TwoBlockObjective<B = RobustLeastSquares> {
    loss: B,
    x_penalty: Penalty,
    z_penalty: Penalty,
    block_lipschitz: OnceLock<(f64, f64)>,
}

impl<B: BlockLoss> TwoBlockObjective<B> {
    pub fn new(loss: B, x_penalty: Penalty, z_penalty: Penalty) -> Result<Self> {
        let (px, pz) = loss.dims();
        check_dim("x penalty dimension", px, x_penalty.dim())?;
        check_dim("z penalty dimension", pz, z_penalty.dim())?;
        Ok(Self {
            loss,
            x_penalty,
            z_penalty,
            block_lipschitz: OnceLock::new(),
        })
    }

    pub fn with_block_lipschitz(self, lx: f64, lz: f64) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set((lx, lz));
        Self {
            block_lipschitz: cell,
            ..self
        }
    }

    pub fn loss(&self) -> &B {
        &self.loss
    }

    pub fn x_penalty(&self) -> &Penalty {
        &self.x_penalty
    }

    pub fn z_penalty(&self) -> &Penalty {
        &self.z_penalty
    }

    pub fn dims(&self) -> (usize, usize) {
        self.loss.dims()
    }

    pub fn block_lipschitz(&self) -> (f64, f64) {
        *self
            .block_lipschitz
            .get_or_init(|| self.loss.block_lipschitz())
    }

    pub fn value(&self, x: &[f64], z: &[f64]) -> f64 {
        self.loss.value(x, z) + self.x_penalty.value(x) + self.z_penalty.value(z)
    }

    pub fn check_point(&self, x: &[f64], z: &[f64]) -> Result<()> {
        let (px, pz) = self.dims();
        check_dim("x dimension", px, x.len())?;
        check_dim("z dimension", pz, z.len())?;
        check_finite("x", x)?;
        check_finite("z", z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(rows: &[Vec<f64>]) -> Arc<DesignMatrix> {
        Arc::new(DesignMatrix::from_rows(rows).unwrap())
    }

    #[test]
    fn least_squares_identity() {
        let a = Arc::new(DesignMatrix::identity(2));
        let (v, g) = ls_value_grad(&a, &[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!(v, 12.5);
        assert_eq!(g, vec![3.0, 4.0]);
        let (v, g) = ls_value_grad(&a, &[3.0, 4.0], &[3.0, 4.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn least_squares_hand_example() {
        let a = mat(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        let (v, g) = ls_value_grad(&a, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn dimension_and_data_errors() {
        let a = Arc::new(DesignMatrix::identity(2));
        assert!(matches!(
            ls_value_grad(&a, &[0.0, 0.0], &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            ls_value_grad(&a, &[0.0], &[1.0, 1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            ls_value_grad(&a, &[0.0, f64::NAN], &[1.0, 1.0]),
            Err(Error::InvalidData(_))
        ));
        assert!(matches!(
            ls_value_grad(&a, &[0.0, 0.0], &[f64::INFINITY, 1.0]),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn logistic_at_origin() {
        let a = mat(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.0]]);
        let labels = [1.0, -1.0, 1.0];
        let (v, g) = logistic_value_grad(&a, &labels, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(v, std::f64::consts::LN_2, max_relative = 1e-15);
        // −(1/N) Σ bᵢ aᵢ / 2
        let expect = [-(1.0 + 1.0 + 0.3) / 6.0, -(2.0 - 0.5) / 6.0];
        assert_relative_eq!(g[0], expect[0], max_relative = 1e-14);
        assert_relative_eq!(g[1], expect[1], max_relative = 1e-14);
    }

    #[test]
    fn logistic_limits_are_stable() {
        let a = mat(&[vec![1.0]]);
        let (v, g) = logistic_value_grad(&a, &[1.0], &[1e3]).unwrap();
        assert!((0.0..1e-300).contains(&v));
        assert!(g[0].abs() < 1e-300);
        let (v, _) = logistic_value_grad(&a, &[1.0], &[-1e3]).unwrap();
        assert_relative_eq!(v, 1e3, max_relative = 1e-15);
        let (v, _) = logistic_value_grad(&a, &[1.0], &[40.0]).unwrap();
        assert!(v > 0.0 && v < 1e-17);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        let a = mat(&[vec![1.0], vec![2.0]]);
        assert!(matches!(
            logistic_value_grad(&a, &[1.0, 0.0], &[0.0]),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn robust_residual_absorbed_and_reduction() {
        let a = mat(&[vec![1.0, 2.0], vec![0.0, 1.0], vec![3.0, -1.0]]);
        let b = [1.0, -2.0, 0.5];
        let x = [0.7, -0.2];
        let z: Vec<f64> = a
            .mul_vec(&x)
            .iter()
            .zip(&b)
            .map(|(ax, bi)| ax - bi)
            .collect();
        let (v, gx, gz) = robust_ls_value_grad(&a, &b, &x, &z).unwrap();
        assert!(v.abs() < 1e-24);
        assert!(gx.iter().chain(&gz).all(|g| g.abs() < 1e-12));

        let (v0, gx0, _) = robust_ls_value_grad(&a, &b, &x, &[0.0; 3]).unwrap();
        let (vl, gl) = ls_value_grad(&a, &b, &x).unwrap();
        assert_eq!(v0, vl);
        assert_eq!(gx0, gl);
    }

    #[test]
    fn robust_hand_example() {
        let a = Arc::new(DesignMatrix::identity(2));
        let (v, gx, gz) =
            robust_ls_value_grad(&a, &[1.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(gx, vec![-2.0, 0.0]);
        assert_eq!(gz, vec![2.0, 0.0]);
    }

    #[test]
    fn extrapolated_evaluation_matches_direct() {
        let a = mat(&[vec![1.0, 2.0], vec![0.5, -1.0]]);
        let loss = SmoothLoss::least_squares(a, vec![0.3, 1.0]).unwrap();
        let x = [1.0, -1.0];
        let xp = [0.5, 0.25];
        let beta = 0.4;
        let y: Vec<f64> = x.iter().zip(&xp).map(|(c, p)| c + beta * (c - p)).collect();
        let ext = loss.extrapolate(&loss.eval(&x), &loss.eval(&xp), beta);
        assert_relative_eq!(ext.value, loss.value(&y), max_relative = 1e-14);
    }

    #[test]
    fn lipschitz_identity_and_diagonal() {
        let ls = SmoothLoss::least_squares(Arc::new(DesignMatrix::identity(4)), vec![0.0; 4])
            .unwrap();
        for method in [LipschitzMethod::ExactSmall, LipschitzMethod::PowerIteration] {
            let est = lipschitz_with_method(&ls, 1e-10, method);
            assert!(est.value >= 1.0 && est.value <= 1.0 + 1e-8, "{est:?}");
        }
        let tol = 1e-10;
        let d = SmoothLoss::least_squares(Arc::new(DesignMatrix::diagonal(&[3.0, 1.0])), vec![0.0; 2])
            .unwrap();
        for method in [LipschitzMethod::ExactSmall, LipschitzMethod::PowerIteration] {
            let est = lipschitz_with_method(&d, tol, method);
            assert!(est.value >= 9.0 && est.value <= 9.0 * (1.0 + 10.0 * tol), "{est:?}");
        }
    }

    #[test]
    fn lipschitz_zero_matrix_is_degenerate() {
        let z = SmoothLoss::least_squares(
            Arc::new(DesignMatrix::dense(3, 2, vec![0.0; 6]).unwrap()),
            vec![0.0; 3],
        )
        .unwrap();
        for method in [LipschitzMethod::ExactSmall, LipschitzMethod::PowerIteration] {
            let est = lipschitz_with_method(&z, 1e-8, method);
            assert!(est.degenerate);
            assert_eq!(est.value, f64::EPSILON);
        }
    }

    #[test]
    fn robust_joint_constant_routes_agree() {
        let a = mat(&[vec![1.0, 2.0, 0.0], vec![0.0, 1.0, -1.0]]);
        let mut r = RobustLeastSquares::new(a, vec![0.0, 0.0]).unwrap();
        let loss = SmoothLoss::RobustLeastSquares(r.clone());
        let power = lipschitz_with_method(&loss, 1e-12, LipschitzMethod::PowerIteration);
        let exact = lipschitz_with_method(&loss, 1e-12, LipschitzMethod::ExactSmall);
        assert_relative_eq!(power.value, exact.value, max_relative = 1e-9);
        r.closed_form_joint_bound = true;
        let closed = lipschitz_with_method(
            &SmoothLoss::RobustLeastSquares(r),
            1e-12,
            LipschitzMethod::PowerIteration,
        );
        assert_relative_eq!(closed.value, exact.value, max_relative = 1e-9);
    }

    #[test]
    fn logistic_constant_is_scaled() {
        let a = mat(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let l = SmoothLoss::logistic(a, vec![1.0, -1.0]).unwrap();
        let est = lipschitz_with_method(&l, 1e-12, LipschitzMethod::ExactSmall);
        assert_relative_eq!(est.value, 4.0 / 8.0, max_relative = 1e-12);
    }
}
