//! Exhaustive reference computations for tiny problems. Nothing here calls
//! the library's own prox or active-set code; these are the yardsticks it
//! is measured against.

/// All `k`-subsets of `0..p` in lexicographic order.
pub fn subsets(p: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..p {
            if p - j < k - cur.len() {
                break;
            }
            cur.push(j);
            rec(j + 1, p, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= p {
        rec(0, p, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// `T_K(x)` by sorting magnitudes.
pub fn t_k(x: &[f64], k: usize) -> f64 {
    let mut m: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    m.sort_by(|a, b| b.total_cmp(a));
    m[k.min(m.len())..].iter().sum()
}

pub fn prox_objective(x: &[f64], y: &[f64], tau: f64, k: usize) -> f64 {
    let q: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    tau * t_k(x, k) + 0.5 * q
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Minimizer of `τT_K(x) + ½‖x − y‖²` over every size-`K` support: keep
/// `y` on the support, soft-threshold elsewhere, take the best.
pub fn brute_force_prox(y: &[f64], tau: f64, k: usize) -> (Vec<f64>, f64) {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in subsets(y.len(), k) {
        let x: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(j, &v)| if s.contains(&j) { v } else { soft(v, tau) })
            .collect();
        let val = prox_objective(&x, y, tau, k);
        if best.as_ref().is_none_or(|b| val < b.1) {
            best = Some((x, val));
        }
    }
    best.expect("at least one support")
}

/// Every `(S, σ)` with `|S| = K`, `σ ∈ {±1}^S` and `Σ σ_j x_j` within
/// `δ` of the top-K sum, as dense `{−1, 0, 1}` vectors, sorted. For
/// `δ = 0` the test is exact: signs agree with `x` and the selected
/// magnitudes are the top-K multiset, so summation order cannot matter.
pub fn active_patterns(x: &[f64], k: usize, delta: f64) -> Vec<Vec<i8>> {
    let p = x.len();
    let mut m: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    m.sort_by(|a, b| b.total_cmp(a));
    let top_mags = &m[..k];
    let top: f64 = top_mags.iter().sum();
    let mut out = Vec::new();
    for s in subsets(p, k) {
        for bits in 0u32..(1 << k) {
            let mut v = vec![0i8; p];
            let mut sum = 0.0;
            let mut signs_agree = true;
            for (i, &j) in s.iter().enumerate() {
                let sign: i8 = if bits >> i & 1 == 1 { -1 } else { 1 };
                v[j] = sign;
                sum += sign as f64 * x[j];
                signs_agree &= sign as f64 * x[j] >= 0.0;
            }
            let active = if delta == 0.0 {
                let mut sel: Vec<f64> = s.iter().map(|&j| x[j].abs()).collect();
                sel.sort_by(|a, b| b.total_cmp(a));
                signs_agree && sel == top_mags
            } else {
                sum >= top - delta
            };
            if active {
                out.push(v);
            }
        }
    }
    out.sort();
    out
}

/// A global minimizer of
/// `½‖Ax − b − z‖² + λ₁T_K(x) + λ₂T_κ(z)`, optionally inside the box
/// `‖(x, z)‖_∞ ≤ bound`.
#[derive(Debug, Clone)]
pub struct GlobalMin {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub value: f64,
}

/// `a` is row-major `n × p`. Since `T_K(x) = min_{|S|=K} Σ_{j∉S}|x_j|`,
/// the problem splits into one convex weighted-ℓ1 problem per pair of
/// supports, each solved by coordinate descent.
#[allow(clippy::too_many_arguments)]
pub fn global_penalized_min(
    a: &[f64],
    b: &[f64],
    p: usize,
    k: usize,
    kappa: usize,
    lambda1: f64,
    lambda2: f64,
    bound: f64,
) -> GlobalMin {
    let n = b.len();
    let mut best: Option<GlobalMin> = None;
    for sx in subsets(p, k) {
        for sz in subsets(n, kappa) {
            let wx: Vec<f64> = (0..p).map(|j| if sx.contains(&j) { 0.0 } else { lambda1 }).collect();
            let wz: Vec<f64> = (0..n).map(|i| if sz.contains(&i) { 0.0 } else { lambda2 }).collect();
            let (x, z) = weighted_l1_cd(a, b, p, &wx, &wz, bound);
            let r = residual(a, b, p, &x, &z);
            let value = 0.5 * r.iter().map(|v| v * v).sum::<f64>()
                + lambda1 * t_k(&x, k)
                + lambda2 * t_k(&z, kappa);
            if best.as_ref().is_none_or(|g| value < g.value) {
                best = Some(GlobalMin { x, z, value });
            }
        }
    }
    best.expect("at least one support pair")
}

fn residual(a: &[f64], b: &[f64], p: usize, x: &[f64], z: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|i| (0..p).map(|j| a[i * p + j] * x[j]).sum::<f64>() - b[i] - z[i])
        .collect()
}

fn weighted_l1_cd(a: &[f64], b: &[f64], p: usize, wx: &[f64], wz: &[f64], bound: f64) -> (Vec<f64>, Vec<f64>) {
    let n = b.len();
    let col_sq: Vec<f64> = (0..p).map(|j| (0..n).map(|i| a[i * p + j].powi(2)).sum()).collect();
    let mut x = vec![0.0; p];
    let mut z = vec![0.0; n];
    let mut r: Vec<f64> = b.iter().map(|v| -v).collect();
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let g: f64 = (0..n).map(|i| a[i * p + j] * r[i]).sum();
            let new = soft(x[j] - g / col_sq[j], wx[j] / col_sq[j]).clamp(-bound, bound);
            let d = new - x[j];
            if d != 0.0 {
                for i in 0..n {
                    r[i] += a[i * p + j] * d;
                }
                x[j] = new;
                change = change.max(d.abs());
            }
        }
        for i in 0..n {
            let new = soft(z[i] + r[i], wz[i]).clamp(-bound, bound);
            let d = new - z[i];
            if d != 0.0 {
                r[i] -= d;
                z[i] = new;
                change = change.max(d.abs());
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    (x, z)
}
