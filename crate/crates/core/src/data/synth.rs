use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;
use crate::objective::{CompositeObjective, RobustLeastSquares};
use crate::penalty::Penalty;
use crate::stationarity::{check_critical, check_d_stationary};

use super::rng::{self, derive_seed, Rng};
use super::{Instance, InstanceMetadata};

pub const MAX_GENERATION_ATTEMPTS: usize = 100;

const CERTIFY_TOL: f64 = 1e-8;
// off-support gradients must stay this far inside the λ box
const OFF_SUPPORT_SLACK: f64 = 0.9;

fn normalized_gaussian(rng: &mut Rng, n: usize, p: usize) -> Result<DesignMatrix> {
    let values = (0..n * p).map(|_| rng::normal(rng)).collect();
    let mut a = DesignMatrix::dense(n, p, values)?;
    a.normalize_columns();
    Ok(a)
}

/// Least-squares data with a planted point `x̃` that is critical but not
/// d-stationary for `λT_K`.
///
/// `x̃` has `K+1` nonzeros; the `K`-th and `(K+1)`-th magnitudes tie at `λ/2`
/// while the others are drawn from `[λ, 2λ]`. The residual `w = Ax̃ − b` is
/// solved for so that `Aᵀw` vanishes on the support except at one tied
/// coordinate `b`, where it equals `−λ·sign(x̃_b)`. Choosing the other tied
/// coordinate as the top-K member then leaves a residual of `λ`.
pub fn gen_sparse_ls_instance(p: usize, n: usize, k: usize, lambda: f64, seed: u64) -> Result<Instance> {
    if k == 0 || k >= p {
        return Err(Error::InvalidData(format!("need 1 <= K < p, got K={k}, p={p}")));
    }
    if n < k + 1 {
        return Err(Error::InvalidData(format!(
            "need N >= K+1 for a full-rank support, got N={n}, K={k}"
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidData(format!("lambda must be positive, got {lambda}")));
    }
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let s = if attempt == 0 { seed } else { derive_seed(seed, attempt as u64) };
        if let Some(mut inst) = try_plant(p, n, k, lambda, s)? {
            inst.metadata.seed = Some(seed);
            inst.metadata.attempts = Some(attempt + 1);
            return Ok(inst);
        }
    }
    Err(Error::Generation(format!(
        "no certified planted point after {MAX_GENERATION_ATTEMPTS} attempts (p={p}, N={n}, K={k})"
    )))
}

fn try_plant(p: usize, n: usize, k: usize, lambda: f64, seed: u64) -> Result<Option<Instance>> {
    let mut rng = rng::seeded(seed);
    let a = normalized_gaussian(&mut rng, n, p)?;
    let support = rng::sample_indices(&mut rng, p, k + 1);
    let mut x = vec![0.0; p];
    // the last two support entries form the tied pair (a, b)
    for (pos, &j) in support.iter().enumerate() {
        // magnitudes scale with λ: with unit columns the escape step from x̃
        // is about λ long and must not drive other support entries through 0
        let mag = if pos + 2 >= support.len() {
            0.5 * lambda
        } else {
            rng::uniform(&mut rng, lambda, 2.0 * lambda)
        };
        x[j] = rng::sign(&mut rng) * mag;
    }
    let jb = support[k];
    let mut target = vec![0.0; k + 1];
    target[k] = -lambda * x[jb].signum();

    let w0: Vec<f64> = (0..n).map(|_| 0.1 * lambda.min(1.0) * rng::normal(&mut rng)).collect();
    let block = DMatrix::from_row_slice(n, k + 1, &a.column_block(&support));
    let w0v = DVector::from_vec(w0);
    let gram = block.transpose() * &block;
    let Some(chol) = gram.cholesky() else {
        return Ok(None);
    };
    let rhs = DVector::from_vec(target) - block.transpose() * &w0v;
    let w = w0v + &block * chol.solve(&rhs);
    let w = w.as_slice();

    let g = a.tmul_vec(w);
    let on_support: Vec<bool> = {
        let mut m = vec![false; p];
        support.iter().for_each(|&j| m[j] = true);
        m
    };
    if (0..p).any(|j| !on_support[j] && g[j].abs() > OFF_SUPPORT_SLACK * lambda) {
        return Ok(None);
    }
    let ax = a.mul_vec(&x);
    let b: Vec<f64> = ax.iter().zip(w).map(|(axi, wi)| axi - wi).collect();

    let a = Arc::new(a);
    let obj = CompositeObjective::new(
        crate::objective::SmoothLoss::least_squares(a.clone(), b.clone())?,
        Penalty::top_k(lambda, k, p, Vec::new())?,
    )?
    // certificates never read L
    .with_lipschitz(1.0);
    let critical = check_critical(&obj, &x, CERTIFY_TOL)?.holds == Some(true);
    let d_stat = check_d_stationary(&obj, &x, CERTIFY_TOL, usize::MAX)?.holds;
    if !critical || d_stat != Some(false) {
        return Ok(None);
    }
    let a = Arc::try_unwrap(a).unwrap_or_else(|a| (*a).clone());
    Instance::new(
        a,
        b,
        InstanceMetadata {
            name: format!("planted-p{p}-n{n}-k{k}"),
            source: "synthetic".into(),
            k: Some(k),
            lambda: Some(lambda),
            planted: Some(x),
            ..Default::default()
        },
    )
    .map(Some)
}

/// `x̃ + scale·ν` with `ν` uniform on `[−1, 1]^p`.
pub fn perturbed_start(planted: &[f64], scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    planted
        .iter()
        .map(|v| v + scale * rng::uniform(&mut rng, -1.0, 1.0))
        .collect()
}

/// Sparse regression data with a few grossly corrupted responses.
#[derive(Debug, Clone)]
pub struct RobustInstance {
    pub a: Arc<DesignMatrix>,
    pub b: Vec<f64>,
    pub x_true: Vec<f64>,
    /// Sorted.
    pub outliers: Vec<usize>,
    pub noise_sd: f64,
    pub outlier_magnitude: f64,
    pub seed: u64,
}

impl RobustInstance {
    pub fn p(&self) -> usize {
        self.a.n_cols()
    }

    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    pub fn loss(&self) -> Result<RobustLeastSquares> {
        RobustLeastSquares::new(self.a.clone(), self.b.clone())
    }

    /// Shifts the true `z` would need to absorb the outliers exactly.
    pub fn z_true(&self) -> Vec<f64> {
        let ax = self.a.mul_vec(&self.x_true);
        let mut z = vec![0.0; self.n()];
        for &i in &self.outliers {
            z[i] = ax[i] - self.b[i];
        }
        z
    }
}

/// Column-normalized Gaussian design, `K` coefficients `±U[1, 2]`,
/// Gaussian noise and `κ` responses shifted by `±outlier_magnitude`.
pub fn gen_robust_instance(
    p: usize,
    n: usize,
    k: usize,
    kappa: usize,
    outlier_magnitude: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<RobustInstance> {
    if k >= p {
        return Err(Error::InvalidData(format!("need K < p, got K={k}, p={p}")));
    }
    if kappa >= n {
        return Err(Error::InvalidData(format!("need kappa < N, got kappa={kappa}, N={n}")));
    }
    let mut rng = rng::seeded(seed);
    let a = normalized_gaussian(&mut rng, n, p)?;
    let mut x_true = vec![0.0; p];
    for j in rng::sample_indices(&mut rng, p, k) {
        x_true[j] = rng::sign(&mut rng) * rng::uniform(&mut rng, 1.0, 2.0);
    }
    let mut b = a.mul_vec(&x_true);
    for bi in b.iter_mut() {
        *bi += noise_sd * rng::normal(&mut rng);
    }
    let mut outliers = rng::sample_indices(&mut rng, n, kappa);
    for &i in &outliers {
        b[i] += rng::sign(&mut rng) * outlier_magnitude;
    }
    outliers.sort_unstable();
    Ok(RobustInstance {
        a: Arc::new(a),
        b,
        x_true,
        outliers,
        noise_sd,
        outlier_magnitude,
        seed,
    })
}
