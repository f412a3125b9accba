//! The `T_K` exact penalty and everything built on the largest-K norm:
//! proximal maps, DC subgradients, active sign patterns, the ℓ0-ball
//! projection, and the exact-penalty threshold for the two-block model.
//!
//! Ordering convention used throughout: coordinates are ranked by
//! `(|x_j| descending, j ascending)`. Excluded coordinates (an intercept,
//! say) are never ranked, thresholded or counted in `K`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on enumerated sign patterns.
pub const DEFAULT_ACTIVE_SET_CAP: usize = 100_000;

/// Scalar soft-thresholding, the prox of `lambda·|·|`.
pub fn soft_threshold(xi: f64, lambda: f64) -> f64 {
    if xi >= lambda {
        xi - lambda
    } else if xi <= -lambda {
        xi + lambda
    } else {
        0.0
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn rank_cmp(x: &[f64], i: usize, j: usize) -> Ordering {
    x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j))
}

/// Indices of the `k` top-ranked coordinates among `candidates`, in rank
/// order.
fn top_indices(x: &[f64], candidates: &[usize], k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let mut idx = candidates.to_vec();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&i, &j| rank_cmp(x, i, j));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&i, &j| rank_cmp(x, i, j));
    idx
}

fn penalized_indices(dim: usize, excluded: &[usize]) -> Result<Vec<usize>> {
    let mut mask = vec![true; dim];
    for &j in excluded {
        if j >= dim {
            return Err(Error::InvalidData(format!(
                "excluded index {j} out of range for dimension {dim}"
            )));
        }
        mask[j] = false;
    }
    Ok((0..dim).filter(|&j| mask[j]).collect())
}

fn check_k(k: usize, available: usize) -> Result<()> {
    if k > available {
        Err(Error::KOutOfRange { k, available })
    } else {
        Ok(())
    }
}

fn sum_top(x: &[f64], top: &[usize]) -> f64 {
    top.iter().map(|&j| x[j].abs()).fold(0.0, |acc, v| acc + v)
}

/// Sum of the `k` largest magnitudes among non-excluded coordinates.
pub fn top_k_norm(x: &[f64], k: usize, excluded: &[usize]) -> Result<f64> {
    let pen = penalized_indices(x.len(), excluded)?;
    check_k(k, pen.len())?;
    Ok(sum_top(x, &top_indices(x, &pen, k)))
}

/// `T_K(x) = ‖x‖₁ − |||x|||_K` over the non-excluded coordinates.
pub fn t_k_value(x: &[f64], k: usize, excluded: &[usize]) -> Result<f64> {
    let pen = penalized_indices(x.len(), excluded)?;
    check_k(k, pen.len())?;
    Ok(t_k_on(x, &pen, k))
}

/// Sum of the magnitudes outside the top `k`. Computed directly from the
/// tail rather than as `‖x‖₁ − |||x|||_K`, so it is exactly zero when at
/// most `k` coordinates are nonzero.
fn t_k_on(x: &[f64], pen: &[usize], k: usize) -> f64 {
    if k >= pen.len() {
        return 0.0;
    }
    let mut idx = pen.to_vec();
    if k > 0 {
        idx.select_nth_unstable_by(k - 1, |&i, &j| rank_cmp(x, i, j));
    }
    idx[k..].iter().map(|&j| x[j].abs()).sum()
}

/// Proximal map of `tau·T_K`: top-K coordinates kept verbatim, the other
/// penalized ones soft-thresholded by `tau`, excluded ones untouched.
pub fn prox_top_k_penalty(y: &[f64], tau: f64, k: usize, excluded: &[usize]) -> Result<Vec<f64>> {
    let pen = penalized_indices(y.len(), excluded)?;
    check_k(k, pen.len())?;
    Ok(prox_on(y, tau, &pen, k))
}

fn prox_on(y: &[f64], tau: f64, pen: &[usize], k: usize) -> Vec<f64> {
    let mut out = y.to_vec();
    if tau == 0.0 || k >= pen.len() {
        return out;
    }
    let mut keep = vec![false; y.len()];
    for j in top_indices(y, pen, k) {
        keep[j] = true;
    }
    for &j in pen {
        if !keep[j] {
            out[j] = soft_threshold(y[j], tau);
        }
    }
    out
}

/// Which element of `∂|||·|||_K` a DC method linearizes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgradientPolicy {
    /// `sign(x_j)` on the top-K set; zero-valued members get 0.
    #[default]
    Canonical,
    /// Zero-valued members of the top-K set get −1.
    ExtremeNegative,
    /// `sign(x_j)` with `sign(0) = +1`.
    IndexOrder,
}

impl SubgradientPolicy {
    pub fn name(self) -> &'static str {
        match self {
            Self::Canonical => "canonical",
            Self::ExtremeNegative => "extreme_negative",
            Self::IndexOrder => "index_order",
        }
    }
}

impl fmt::Display for SubgradientPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubgradientPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "canonical" => Ok(Self::Canonical),
            "extreme_negative" => Ok(Self::ExtremeNegative),
            "index_order" => Ok(Self::IndexOrder),
            _ => Err(Error::InvalidData(format!(
                "unknown subgradient policy `{s}` (canonical, extreme_negative, index_order)"
            ))),
        }
    }
}

/// `λ·v` with `v ∈ ∂|||x|||_K` chosen by `policy`.
pub fn subgradient_top_k(
    x: &[f64],
    k: usize,
    excluded: &[usize],
    lambda: f64,
    policy: SubgradientPolicy,
) -> Result<Vec<f64>> {
    let pen = penalized_indices(x.len(), excluded)?;
    check_k(k, pen.len())?;
    Ok(subgradient_on(x, &pen, k, lambda, policy))
}

fn subgradient_on(
    x: &[f64],
    pen: &[usize],
    k: usize,
    lambda: f64,
    policy: SubgradientPolicy,
) -> Vec<f64> {
    let mut v = vec![0.0; x.len()];
    for j in top_indices(x, pen, k) {
        v[j] = lambda
            * match (policy, x[j] == 0.0) {
                (_, false) => sign(x[j]),
                (SubgradientPolicy::Canonical, true) => 0.0,
                (SubgradientPolicy::ExtremeNegative, true) => -1.0,
                (SubgradientPolicy::IndexOrder, true) => 1.0,
            };
    }
    v
}

/// A vector in `{0, ±1}^p`: one linear piece `x ↦ ⟨v, x⟩` of a polyhedral
/// convex function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignPattern {
    entries: Vec<i8>,
}

impl SignPattern {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !(-1..=1).contains(*e)) {
            return Err(Error::InvalidData(format!("sign pattern entry {e} not in {{-1, 0, 1}}")));
        }
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: vec![0; dim],
        }
    }

    pub fn from_f64(v: &[f64]) -> Result<Self> {
        Self::new(v.iter().map(|e| *e as i8).collect())
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub(crate) fn set(&mut self, j: usize, s: i8) {
        debug_assert!((-1..=1).contains(&s));
        self.entries[j] = s;
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn support_size(&self) -> usize {
        self.entries.iter().filter(|e| **e != 0).count()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&j| self.entries[j] != 0)
            .collect()
    }

    /// `⟨v, x⟩`, summed in rank order of `x` so that patterns selecting the
    /// same magnitudes produce bit-identical sums.
    pub fn dot(&self, x: &[f64]) -> f64 {
        let mut support = self.support();
        support.sort_unstable_by(|&i, &j| rank_cmp(x, i, j));
        support
            .iter()
            .map(|&j| f64::from(self.entries[j]) * x[j])
            .fold(0.0, |acc, v| acc + v)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|e| f64::from(*e)).collect()
    }

    fn sort_key(&self) -> (Vec<usize>, Vec<i8>) {
        let s = self.support();
        let signs = s.iter().map(|&j| self.entries[j]).collect();
        (s, signs)
    }
}

/// All sign patterns `v` with `Σ|v_j| = K` on non-excluded coordinates and
/// `⟨v, x⟩ ≥ |||x|||_K − delta`, ordered lexicographically by chosen index
/// set and then by signs. Fails with an overflow once more than `cap`
/// patterns exist.
pub fn active_set_enumerate(
    x: &[f64],
    k: usize,
    excluded: &[usize],
    delta: f64,
    cap: usize,
) -> Result<Vec<SignPattern>> {
    let pen = penalized_indices(x.len(), excluded)?;
    check_k(k, pen.len())?;
    let mut out = Vec::new();
    visit_active_on(x, &pen, k, delta, cap, &mut |v| out.push(v.clone()))?;
    out.sort_by_cached_key(SignPattern::sort_key);
    Ok(out)
}

/// Depth-first enumeration of the active patterns; returns the count.
/// `visit` may have been called up to `cap` times when overflow is
/// reported.
fn visit_active_on(
    x: &[f64],
    pen: &[usize],
    k: usize,
    delta: f64,
    cap: usize,
    visit: &mut dyn FnMut(&SignPattern),
) -> Result<usize> {
    let mut order = pen.to_vec();
    order.sort_unstable_by(|&i, &j| rank_cmp(x, i, j));
    let mags: Vec<f64> = order.iter().map(|&j| x[j].abs()).collect();
    let mut prefix = Vec::with_capacity(mags.len() + 1);
    prefix.push(0.0);
    for m in &mags {
        prefix.push(prefix.last().unwrap() + m);
    }
    let top = mags[..k].iter().fold(0.0, |acc, v| acc + v);
    let mut walk = ActiveWalk {
        x,
        order: &order,
        mags: &mags,
        prefix: &prefix,
        threshold: top - delta,
        prune_slack: 1e-12 * (1.0 + top),
        cap,
        count: 0,
        chosen: Vec::with_capacity(k),
        pattern: SignPattern::zeros(x.len()),
        visit,
    };
    walk.choose(0, k, 0.0)?;
    Ok(walk.count)
}

struct ActiveWalk<'a> {
    x: &'a [f64],
    order: &'a [usize],
    mags: &'a [f64],
    prefix: &'a [f64],
    threshold: f64,
    prune_slack: f64,
    cap: usize,
    count: usize,
    chosen: Vec<usize>,
    pattern: SignPattern,
    visit: &'a mut dyn FnMut(&SignPattern),
}

impl ActiveWalk<'_> {
    /// Picks `remaining` more positions from `order[start..]`.
    fn choose(&mut self, start: usize, remaining: usize, sum: f64) -> Result<()> {
        if remaining == 0 {
            if sum >= self.threshold {
                return self.signs(0, sum - self.threshold);
            }
            return Ok(());
        }
        let n = self.order.len();
        for q in start..=(n - remaining) {
            let best = sum + (self.prefix[q + remaining] - self.prefix[q]);
            if best < self.threshold - self.prune_slack {
                // magnitudes are sorted, later starts can only do worse
                break;
            }
            self.chosen.push(q);
            self.choose(q + 1, remaining - 1, sum + self.mags[q])?;
            self.chosen.pop();
        }
        Ok(())
    }

    /// Assigns signs to `chosen[pos..]`. Zero coordinates take either sign
    /// for free; flipping a nonzero one costs `2|x_j|` of the slack.
    fn signs(&mut self, pos: usize, slack: f64) -> Result<()> {
        if pos == self.chosen.len() {
            self.count += 1;
            if self.count > self.cap {
                return Err(Error::ActiveSetOverflow { cap: self.cap });
            }
            (self.visit)(&self.pattern);
            return Ok(());
        }
        let j = self.order[self.chosen[pos]];
        let xj = self.x[j];
        if xj == 0.0 {
            for s in [-1, 1] {
                self.pattern.entries[j] = s;
                self.signs(pos + 1, slack)?;
            }
        } else {
            let natural: i8 = if xj > 0.0 { 1 } else { -1 };
            self.pattern.entries[j] = natural;
            self.signs(pos + 1, slack)?;
            let cost = 2.0 * xj.abs();
            if cost <= slack {
                self.pattern.entries[j] = -natural;
                self.signs(pos + 1, slack - cost)?;
            }
        }
        self.pattern.entries[j] = 0;
        Ok(())
    }
}

/// Euclidean projection onto `{z : ‖z‖₀ ≤ kappa}`: keeps the `kappa`
/// largest magnitudes (lowest index on ties).
pub fn project_l0_ball(z: &[f64], kappa: usize) -> Vec<f64> {
    if kappa >= z.len() {
        return z.to_vec();
    }
    let all: Vec<usize> = (0..z.len()).collect();
    let mut out = vec![0.0; z.len()];
    for j in top_indices(z, &all, kappa) {
        out[j] = z[j];
    }
    out
}

/// `λ·T_K` restricted to non-excluded coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKPenalty {
    lambda: f64,
    k: usize,
    dim: usize,
    excluded: Vec<usize>,
    #[serde(skip)]
    penalized: Vec<usize>,
}

impl TopKPenalty {
    pub fn new(lambda: f64, k: usize, dim: usize, mut excluded: Vec<usize>) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidData(format!(
                "penalty weight must be finite and nonnegative, got {lambda}"
            )));
        }
        excluded.sort_unstable();
        excluded.dedup();
        let penalized = penalized_indices(dim, &excluded)?;
        check_k(k, penalized.len())?;
        Ok(Self {
            lambda,
            k,
            dim,
            excluded,
            penalized,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn penalized(&self) -> &[usize] {
        &self.penalized
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.lambda * t_k_on(x, &self.penalized, self.k)
    }

    pub fn top_k_norm(&self, x: &[f64]) -> f64 {
        sum_top(x, &top_indices(x, &self.penalized, self.k))
    }

    /// `Prox_{g/η}(y)` for `g = λ·T_K`.
    pub fn prox(&self, y: &[f64], eta: f64) -> Vec<f64> {
        prox_on(y, self.lambda / eta, &self.penalized, self.k)
    }

    pub fn subgradient(&self, x: &[f64], policy: SubgradientPolicy) -> Vec<f64> {
        subgradient_on(x, &self.penalized, self.k, self.lambda, policy)
    }

    pub fn active_set(&self, x: &[f64], delta: f64, cap: usize) -> Result<Vec<SignPattern>> {
        let mut out = Vec::new();
        visit_active_on(x, &self.penalized, self.k, delta, cap, &mut |v| {
            out.push(v.clone())
        })?;
        out.sort_by_cached_key(SignPattern::sort_key);
        Ok(out)
    }
}

/// `λ(‖x‖₁ − max_i ⟨v_i, x⟩)` for an explicit finite list of pieces.
///
/// With the pieces `{0, −1}` in one dimension and `λ = 1` this is the
/// classic `|x| − max{0, −x} = max{0, x}` whose origin is critical but
/// not d-stationary for `½(x − 2)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedralPenalty {
    lambda: f64,
    pieces: Vec<SignPattern>,
    dim: usize,
}

impl PolyhedralPenalty {
    pub fn new(lambda: f64, pieces: Vec<SignPattern>) -> Result<Self> {
        let dim = pieces
            .first()
            .map(SignPattern::dim)
            .ok_or_else(|| Error::InvalidData("polyhedral penalty needs at least one piece".into()))?;
        if pieces.iter().any(|p| p.dim() != dim) {
            return Err(Error::InvalidData("pieces differ in dimension".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidData(format!(
                "penalty weight must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(Self { lambda, pieces, dim })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn pieces(&self) -> &[SignPattern] {
        &self.pieces
    }

    fn max_piece(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|v| v.dot(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.lambda * (l1(x) - self.max_piece(x))
    }

    /// Exact prox: the best of the per-piece convex proxes.
    pub fn prox(&self, y: &[f64], eta: f64) -> Vec<f64> {
        let tau = self.lambda / eta;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for v in &self.pieces {
            let cand: Vec<f64> = y
                .iter()
                .zip(v.entries())
                .map(|(yj, vj)| soft_threshold(yj + tau * f64::from(*vj), tau))
                .collect();
            let obj = tau * (l1(&cand) - v.dot(&cand)) + 0.5 * crate::linalg::dist_sq(&cand, y);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, cand));
            }
        }
        best.map(|(_, c)| c).unwrap_or_else(|| y.to_vec())
    }
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Indicator of `{z : ‖z‖₀ ≤ kappa}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorL0Ball {
    kappa: usize,
    dim: usize,
}

impl IndicatorL0Ball {
    pub fn new(kappa: usize, dim: usize) -> Result<Self> {
        check_k(kappa, dim)?;
        Ok(Self { kappa, dim })
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        if crate::linalg::count_nonzero(z) <= self.kappa {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// The nonsmooth term of a composite objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    TopK(TopKPenalty),
    Polyhedral(PolyhedralPenalty),
    L0Ball(IndicatorL0Ball),
}

impl Penalty {
    pub fn top_k(lambda: f64, k: usize, dim: usize, excluded: Vec<usize>) -> Result<Self> {
        TopKPenalty::new(lambda, k, dim, excluded).map(Self::TopK)
    }

    pub fn l0_ball(kappa: usize, dim: usize) -> Result<Self> {
        IndicatorL0Ball::new(kappa, dim).map(Self::L0Ball)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::TopK(p) => p.dim,
            Self::Polyhedral(p) => p.dim,
            Self::L0Ball(p) => p.dim,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::TopK(p) => p.value(x),
            Self::Polyhedral(p) => p.value(x),
            Self::L0Ball(p) => p.value(x),
        }
    }

    /// An element of `Prox_{g/η}(y)`, deterministic under ties.
    pub fn prox(&self, y: &[f64], eta: f64) -> Vec<f64> {
        match self {
            Self::TopK(p) => p.prox(y, eta),
            Self::Polyhedral(p) => p.prox(y, eta),
            Self::L0Ball(p) => project_l0_ball(y, p.kappa),
        }
    }

    /// The `ℓ1 − polyhedral` view used by DC methods, when there is one.
    pub fn as_dc(&self) -> Option<&dyn DcPenalty> {
        match self {
            Self::TopK(p) => Some(p),
            Self::Polyhedral(p) => Some(p),
            Self::L0Ball(_) => None,
        }
    }

    /// Sparsity budget (`K` or `κ`), if the penalty has one.
    pub fn budget(&self) -> Option<usize> {
        match self {
            Self::TopK(p) => Some(p.k),
            Self::L0Ball(p) => Some(p.kappa),
            Self::Polyhedral(_) => None,
        }
    }
}

/// `g = g₁ − g₂` with `g₁ = λ‖·‖₁` on the penalized coordinates and `g₂`
/// the pointwise maximum of the linear pieces `λ⟨v, ·⟩`.
pub trait DcPenalty {
    fn lambda(&self) -> f64;
    fn dim(&self) -> usize;
    fn is_penalized(&self, j: usize) -> bool;
    fn g1(&self, x: &[f64]) -> f64;
    /// `Prox_{g₁/η}(y)`
    fn prox_g1(&self, y: &[f64], eta: f64) -> Vec<f64>;
    /// `ξ ∈ ∂g₂(x)` (already scaled by `λ`).
    fn subgradient(&self, x: &[f64], policy: SubgradientPolicy) -> Vec<f64>;
    /// Calls `visit` on each pattern of `A_δ(x)`; returns how many there
    /// are, or overflow past `cap`.
    fn visit_active(
        &self,
        x: &[f64],
        delta: f64,
        cap: usize,
        visit: &mut dyn FnMut(&SignPattern),
    ) -> Result<usize>;
}

impl DcPenalty for TopKPenalty {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn is_penalized(&self, j: usize) -> bool {
        self.excluded.binary_search(&j).is_err()
    }

    fn g1(&self, x: &[f64]) -> f64 {
        self.lambda * self.penalized.iter().map(|&j| x[j].abs()).sum::<f64>()
    }

    fn prox_g1(&self, y: &[f64], eta: f64) -> Vec<f64> {
        let tau = self.lambda / eta;
        let mut out = y.to_vec();
        for &j in &self.penalized {
            out[j] = soft_threshold(y[j], tau);
        }
        out
    }

    fn subgradient(&self, x: &[f64], policy: SubgradientPolicy) -> Vec<f64> {
        TopKPenalty::subgradient(self, x, policy)
    }

    fn visit_active(
        &self,
        x: &[f64],
        delta: f64,
        cap: usize,
        visit: &mut dyn FnMut(&SignPattern),
    ) -> Result<usize> {
        visit_active_on(x, &self.penalized, self.k, delta, cap, visit)
    }
}

impl DcPenalty for PolyhedralPenalty {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn is_penalized(&self, _j: usize) -> bool {
        true
    }

    fn g1(&self, x: &[f64]) -> f64 {
        self.lambda * l1(x)
    }

    fn prox_g1(&self, y: &[f64], eta: f64) -> Vec<f64> {
        let tau = self.lambda / eta;
        y.iter().map(|v| soft_threshold(*v, tau)).collect()
    }

    /// Among the maximizing pieces: fewest nonzeros (canonical), smallest
    /// entry sum (extreme_negative), or first listed (index_order).
    fn subgradient(&self, x: &[f64], policy: SubgradientPolicy) -> Vec<f64> {
        let top = self.max_piece(x);
        let active = self.pieces.iter().filter(|v| v.dot(x) == top);
        let pick = match policy {
            SubgradientPolicy::IndexOrder => active.into_iter().next(),
            SubgradientPolicy::Canonical => active.min_by_key(|v| v.support_size()),
            SubgradientPolicy::ExtremeNegative => {
                active.min_by_key(|v| v.entries().iter().map(|e| i64::from(*e)).sum::<i64>())
            }
        };
        pick.map(|v| v.to_f64().iter().map(|e| self.lambda * e).collect())
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    fn visit_active(
        &self,
        x: &[f64],
        delta: f64,
        cap: usize,
        visit: &mut dyn FnMut(&SignPattern),
    ) -> Result<usize> {
        let top = self.max_piece(x);
        let mut count = 0;
        for v in &self.pieces {
            if v.dot(x) >= top - delta {
                count += 1;
                if count > cap {
                    return Err(Error::ActiveSetOverflow { cap });
                }
                visit(v);
            }
        }
        Ok(count)
    }
}

/// Thresholds above which the two-block penalty is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPenaltyBound {
    pub lambda1_min: f64,
    pub lambda2_min: f64,
    pub grad_x_at_origin_norm: f64,
    pub grad_z_at_origin_norm: f64,
    pub m: f64,
    pub c_x: f64,
    pub c_z: f64,
    pub lambda1_floor: f64,
    pub lambda2_floor: f64,
    pub margin: f64,
}

/// `λ₁ = (1+margin)·max{‖∇ₓf(0,0)‖ + M(1.5·C_x + C_z), λ̲₁}` and the
/// symmetric `λ₂`. The multiplicative margin stands in for the strict
/// inequality. Whether the minimizer set at the returned weights stays
/// inside the one at the floor weights cannot be checked here and is
/// left to the caller.
#[allow(clippy::too_many_arguments)]
pub fn exact_penalty_bound(
    grad_x_at_origin_norm: f64,
    grad_z_at_origin_norm: f64,
    m: f64,
    c_x: f64,
    c_z: f64,
    lambda1_floor: f64,
    lambda2_floor: f64,
    margin: f64,
) -> ExactPenaltyBound {
    debug_assert!(
        [grad_x_at_origin_norm, grad_z_at_origin_norm, m, c_x, c_z, lambda1_floor, lambda2_floor, margin]
            .iter()
            .all(|v| *v >= 0.0),
        "exact penalty inputs must be nonnegative"
    );
    let t1 = grad_x_at_origin_norm + m * (1.5 * c_x + c_z);
    let t2 = grad_z_at_origin_norm + m * (c_x + 1.5 * c_z);
    ExactPenaltyBound {
        lambda1_min: (1.0 + margin) * t1.max(lambda1_floor),
        lambda2_min: (1.0 + margin) * t2.max(lambda2_floor),
        grad_x_at_origin_norm,
        grad_z_at_origin_norm,
        m,
        c_x,
        c_z,
        lambda1_floor,
        lambda2_floor,
        margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pats(v: &[Vec<i8>]) -> Vec<SignPattern> {
        v.iter().map(|e| SignPattern::new(e.clone()).unwrap()).collect()
    }

    #[test]
    fn top_k_norm_examples() {
        assert_eq!(top_k_norm(&[3.0, -1.0, 2.0], 2, &[]).unwrap(), 5.0);
        assert_eq!(top_k_norm(&[3.0, -1.0, 2.0], 0, &[]).unwrap(), 0.0);
        assert_eq!(top_k_norm(&[1.0, 1.0, 1.0], 3, &[]).unwrap(), 3.0);
        assert_eq!(top_k_norm(&[9.0, -1.0, 2.0], 1, &[0]).unwrap(), 2.0);
        assert!(matches!(
            top_k_norm(&[1.0, 2.0], 3, &[]),
            Err(Error::KOutOfRange { k: 3, available: 2 })
        ));
        assert!(top_k_norm(&[1.0, 2.0], 2, &[0]).is_err());
    }

    #[test]
    fn t_k_examples() {
        assert_eq!(t_k_value(&[3.0, -1.0, 2.0], 2, &[]).unwrap(), 1.0);
        assert_eq!(t_k_value(&[0.0, 4.0, 0.0, -2.0], 2, &[]).unwrap(), 0.0);
        assert_eq!(t_k_value(&[0.0; 5], 1, &[]).unwrap(), 0.0);
        assert_eq!(t_k_value(&[0.0; 5], 0, &[]).unwrap(), 0.0);
        // the intercept is never penalized
        assert_eq!(t_k_value(&[7.0, 1.0, 2.0], 1, &[0]).unwrap(), 1.0);
    }

    #[test]
    fn soft_threshold_arms() {
        assert_eq!(soft_threshold(2.5, 1.0), 1.5);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(-0.2, 0.0), -0.2);
    }

    #[test]
    fn prox_examples() {
        assert_eq!(
            prox_top_k_penalty(&[3.0, 0.5, -2.0], 1.0, 1, &[]).unwrap(),
            vec![3.0, 0.0, -1.0]
        );
        let y = [0.3, -4.0, 1.2];
        assert_eq!(prox_top_k_penalty(&y, 0.0, 1, &[]).unwrap(), y.to_vec());
        assert_eq!(prox_top_k_penalty(&y, 5.0, 3, &[]).unwrap(), y.to_vec());
        // intercept untouched, remaining coordinates ranked without it
        assert_eq!(
            prox_top_k_penalty(&[0.1, 3.0, 0.5, -2.0], 1.0, 1, &[0]).unwrap(),
            vec![0.1, 3.0, 0.0, -1.0]
        );
    }

    #[test]
    fn prox_ties_keep_lowest_index() {
        assert_eq!(
            prox_top_k_penalty(&[2.0, -2.0, 2.0], 0.5, 1, &[]).unwrap(),
            vec![2.0, -1.5, 1.5]
        );
    }

    #[test]
    fn subgradient_examples() {
        let lam = 2.0;
        let g = subgradient_top_k(&[3.0, -1.0, 2.0], 2, &[], lam, SubgradientPolicy::Canonical)
            .unwrap();
        assert_eq!(g, vec![2.0, 0.0, 2.0]);
        let g = subgradient_top_k(&[0.0; 3], 2, &[], lam, SubgradientPolicy::Canonical).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        let g = subgradient_top_k(&[5.0, 5.0, 0.0], 1, &[], 1.0, SubgradientPolicy::IndexOrder)
            .unwrap();
        assert_eq!(g, vec![1.0, 0.0, 0.0]);
        let g = subgradient_top_k(&[0.0, 1.0, 0.0], 2, &[], 1.0, SubgradientPolicy::ExtremeNegative)
            .unwrap();
        assert_eq!(g, vec![-1.0, 1.0, 0.0]);
        let g = subgradient_top_k(&[0.0, 1.0, 0.0], 2, &[], 1.0, SubgradientPolicy::IndexOrder)
            .unwrap();
        assert_eq!(g, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn active_set_examples() {
        assert_eq!(
            active_set_enumerate(&[3.0, 1.0, 0.5], 1, &[], 0.0, 10).unwrap(),
            pats(&[vec![1, 0, 0]])
        );
        assert_eq!(
            active_set_enumerate(&[2.0, 2.0, 1.0], 1, &[], 0.0, 10).unwrap(),
            pats(&[vec![1, 0, 0], vec![0, 1, 0]])
        );
        let tied = active_set_enumerate(&[1.0, 0.0, 0.0, 0.0], 2, &[], 0.0, 100).unwrap();
        assert_eq!(
            tied,
            pats(&[
                vec![1, -1, 0, 0],
                vec![1, 1, 0, 0],
                vec![1, 0, -1, 0],
                vec![1, 0, 1, 0],
                vec![1, 0, 0, -1],
                vec![1, 0, 0, 1],
            ])
        );
    }

    #[test]
    fn active_set_overflow_and_relaxation() {
        assert!(matches!(
            active_set_enumerate(&[1.0, 0.0, 0.0, 0.0], 2, &[], 0.0, 5),
            Err(Error::ActiveSetOverflow { cap: 5 })
        ));
        // δ large enough to admit swapping in the runner-up and flipping it
        let pats = active_set_enumerate(&[3.0, 1.0, 0.5], 1, &[], 2.6, 100).unwrap();
        assert_eq!(
            pats,
            self::pats(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]])
        );
        let pats = active_set_enumerate(&[3.0, -1.0], 1, &[], 6.0, 100).unwrap();
        assert_eq!(pats.len(), 4);
    }

    #[test]
    fn active_set_skips_excluded() {
        let pats = active_set_enumerate(&[10.0, 2.0, 2.0], 1, &[0], 0.0, 10).unwrap();
        assert_eq!(pats, self::pats(&[vec![0, 1, 0], vec![0, 0, 1]]));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_l0_ball(&[3.0, -1.0, 2.0], 2), vec![3.0, 0.0, 2.0]);
        assert_eq!(project_l0_ball(&[3.0, -1.0, 2.0], 3), vec![3.0, -1.0, 2.0]);
        assert_eq!(project_l0_ball(&[0.0; 4], 2), vec![0.0; 4]);
        assert_eq!(project_l0_ball(&[1.0, -1.0, 1.0], 1), vec![1.0, 0.0, 0.0]);
        assert_eq!(project_l0_ball(&[1.0, 2.0], 0), vec![0.0, 0.0]);
    }

    #[test]
    fn exact_penalty_examples() {
        let b = exact_penalty_bound(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.01);
        assert_eq!((b.lambda1_min, b.lambda2_min), (0.0, 0.0));
        let b = exact_penalty_bound(1.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(b.lambda1_min, 4.0);
        assert_eq!(b.lambda2_min, 2.0);
        let b = exact_penalty_bound(1.0, 0.0, 2.0, 1.0, 0.0, 10.0, 0.0, 0.5);
        assert_eq!(b.lambda1_min, 15.0);
    }

    #[test]
    fn polyhedral_counterexample_prox() {
        let p = PolyhedralPenalty::new(1.0, pats(&[vec![0], vec![-1]])).unwrap();
        assert_eq!(p.value(&[0.7]), 0.7);
        assert_eq!(p.value(&[-3.0]), 0.0);
        // one-sided shrink: prox of max{0, x}
        assert_eq!(p.prox(&[2.0], 1.0), vec![1.0]);
        assert_eq!(p.prox(&[0.25], 1.0), vec![0.0]);
        assert_eq!(p.prox(&[-0.25], 1.0), vec![-0.25]);
        assert_eq!(p.subgradient(&[0.0], SubgradientPolicy::Canonical), vec![0.0]);
        assert_eq!(
            p.subgradient(&[0.0], SubgradientPolicy::ExtremeNegative),
            vec![-1.0]
        );
        let mut seen = 0;
        assert_eq!(p.visit_active(&[0.0], 0.0, 10, &mut |_| seen += 1).unwrap(), 2);
        assert_eq!(seen, 2);
        assert_eq!(p.visit_active(&[1.0], 0.0, 10, &mut |_| {}).unwrap(), 1);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [
            SubgradientPolicy::Canonical,
            SubgradientPolicy::ExtremeNegative,
            SubgradientPolicy::IndexOrder,
        ] {
            assert_eq!(p.name().parse::<SubgradientPolicy>().unwrap(), p);
        }
        assert!("nope".parse::<SubgradientPolicy>().is_err());
        assert_eq!(
            "extreme-negative".parse::<SubgradientPolicy>().unwrap(),
            SubgradientPolicy::ExtremeNegative
        );
    }
}
