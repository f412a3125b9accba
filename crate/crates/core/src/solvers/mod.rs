//! Iterative solvers sharing one configuration, trace and result format.
//!
//! Single-block methods minimize `f(x) + g(x)`; the DC methods additionally
//! need `g` in the form `λ‖·‖₁ − λ|||·|||_K` (or another polyhedral
//! maximum). Two-block methods minimize `f(x, z) + g(x) + h(z)`.

mod alternating;
mod dca;
mod prox_grad;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{BlockLoss, CompositeObjective, TwoBlockObjective};
use crate::penalty::{DcPenalty, SubgradientPolicy, DEFAULT_ACTIVE_SET_CAP};
use crate::stationarity::StationarityReport;

pub use alternating::{gpalm_solve, palm_solve, pdcae_proj_solve};
pub use dca::{nepdca_solve, pdca_solve, pdcae_solve};
pub use prox_grad::{gist_solve, pgm_solve};

/// Hard cap on step-size increases within one line search.
pub const LINE_SEARCH_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Pgm,
    Gist,
    Pdca,
    Pdcae,
    Nepdca,
    Palm,
    Gpalm,
    PdcaeProj,
}

impl SolverKind {
    pub const ALL: [SolverKind; 8] = [
        Self::Pgm,
        Self::Gist,
        Self::Pdca,
        Self::Pdcae,
        Self::Nepdca,
        Self::Palm,
        Self::Gpalm,
        Self::PdcaeProj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pgm => "pgm",
            Self::Gist => "gist",
            Self::Pdca => "pdca",
            Self::Pdcae => "pdcae",
            Self::Nepdca => "nepdca",
            Self::Palm => "palm",
            Self::Gpalm => "gpalm",
            Self::PdcaeProj => "pdcae-proj",
        }
    }

    pub fn is_two_block(self) -> bool {
        matches!(self, Self::Palm | Self::Gpalm | Self::PdcaeProj)
    }

    pub fn needs_dc(self) -> bool {
        matches!(self, Self::Pdca | Self::Pdcae | Self::Nepdca | Self::PdcaeProj)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidData(format!("unknown solver `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Extrapolation weights for PDCAe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `β_t = (θ_{t−1} − 1)/θ_t` with `θ₋₁ = θ₀ = 1` and
    /// `θ_{t+1} = (1 + √(1 + 4θ_t²))/2`, reset every `restart_every`
    /// iterations and, if `adaptive`, whenever `F` increases.
    Fista { restart_every: usize, adaptive: bool },
    Constant { beta: f64 },
    Zero,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self::Fista {
            restart_every: 200,
            adaptive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Wall-clock limit checked once per outer iteration.
    pub time_limit_sec: Option<f64>,
    /// Tolerance on `‖x_{t+1} − x_t‖` (plus `‖z_{t+1} − z_t‖` for two
    /// blocks). A negative value disables the test.
    pub stop_tol: f64,
    /// Fixed steps of PGM and PALM are `step_factor·L`.
    pub step_factor: f64,
    pub eta_underline: f64,
    pub eta_overline: f64,
    pub eta0: f64,
    pub sigma: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// Nonmonotone window length.
    pub r: usize,
    pub delta: f64,
    /// NEPDCA proximal constant; `0.49·min(L, 1)` when unset.
    pub c: Option<f64>,
    pub subgradient_policy: SubgradientPolicy,
    pub beta_schedule: BetaSchedule,
    pub active_set_cap: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            time_limit_sec: None,
            stop_tol: 1e-8,
            step_factor: 1.1,
            eta_underline: 1e-8,
            eta_overline: 1e8,
            eta0: 1.0,
            sigma: 1e-3,
            sigma1: 1e-3,
            sigma2: 1e-3,
            rho: 2.0,
            rho1: 2.0,
            rho2: 2.0,
            r: 4,
            delta: 1e-6,
            c: None,
            subgradient_policy: SubgradientPolicy::Canonical,
            beta_schedule: BetaSchedule::default(),
            active_set_cap: DEFAULT_ACTIVE_SET_CAP,
            seed: 0,
        }
    }
}

impl SolverConfig {
    /// Defaults with the window length each method is usually run with.
    pub fn for_solver(kind: SolverKind) -> Self {
        let r = match kind {
            SolverKind::Nepdca => 5,
            SolverKind::Gpalm => 6,
            _ => 4,
        };
        Self {
            r,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidData(format!("solver config: {msg}")));
        if !(self.eta_underline > 0.0 && self.eta_underline < self.eta_overline) {
            return bad("need 0 < eta_underline < eta_overline");
        }
        if !(self.rho > 1.0 && self.rho1 > 1.0 && self.rho2 > 1.0) {
            return bad("backtracking factors must exceed 1");
        }
        for s in [self.sigma, self.sigma1, self.sigma2] {
            if !(s > 0.0 && s < 1.0) {
                return bad("sufficient-decrease constants must lie in (0, 1)");
            }
        }
        if self.r == 0 {
            return bad("window length r must be at least 1");
        }
        if self.stop_tol.is_nan() {
            return bad("stop_tol must be a number");
        }
        if !(self.step_factor > 0.0 && self.eta0 > 0.0) {
            return bad("step parameters must be positive");
        }
        if !(self.delta >= 0.0) {
            return bad("delta must be nonnegative");
        }
        if self.c.is_some_and(|c| !(c > 0.0)) {
            return bad("c must be positive");
        }
        if let BetaSchedule::Constant { beta } = self.beta_schedule {
            if !(0.0..1.0).contains(&beta) {
                return bad("constant beta must lie in [0, 1)");
            }
        }
        if self.time_limit_sec.is_some_and(|t| !(t >= 0.0)) {
            return bad("time limit must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    IterLimit,
    TimeLimit,
    ActiveSetOverflow,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::IterLimit => "iter_limit",
            Self::TimeLimit => "time_limit",
            Self::ActiveSetOverflow => "active_set_overflow",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// State after iteration `t` (`t = 0` is the starting point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub objective: f64,
    pub loss: f64,
    pub penalty: f64,
    /// `‖x_t − x_{t−1}‖` (plus the z-block term); absent at `t = 0`.
    pub displacement: Option<f64>,
    pub eta: Option<f64>,
    pub eta_z: Option<f64>,
    pub backtracks: usize,
    pub active_set_size: Option<usize>,
    pub time_sec: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub records: Vec<TraceRecord>,
}

impl IterateTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub solver: SolverKind,
    pub status: Status,
    pub iterations: usize,
    pub x: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub objective: f64,
    pub elapsed_sec: f64,
    pub trace: IterateTrace,
    /// Filled in by callers that certify the terminal point.
    pub certificate: Option<StationarityReport>,
}

/// Runs a single-block solver by kind.
pub fn solve(
    kind: SolverKind,
    obj: &CompositeObjective,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    match kind {
        SolverKind::Pgm => pgm_solve(obj, x0, cfg),
        SolverKind::Gist => gist_solve(obj, x0, cfg),
        SolverKind::Pdca => pdca_solve(obj, x0, cfg),
        SolverKind::Pdcae => pdcae_solve(obj, x0, cfg),
        SolverKind::Nepdca => nepdca_solve(obj, x0, cfg),
        _ => Err(Error::Unsupported(format!(
            "{kind} works on two-block problems"
        ))),
    }
}

/// Runs a two-block solver by kind.
pub fn solve_two_block<B: BlockLoss>(
    kind: SolverKind,
    obj: &TwoBlockObjective<B>,
    x0: &[f64],
    z0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    match kind {
        SolverKind::Palm => palm_solve(obj, x0, z0, cfg),
        SolverKind::Gpalm => gpalm_solve(obj, x0, z0, cfg),
        SolverKind::PdcaeProj => pdcae_proj_solve(obj, x0, z0, cfg),
        _ => Err(Error::Unsupported(format!(
            "{kind} works on single-block problems"
        ))),
    }
}

fn dc_view(obj: &CompositeObjective, kind: SolverKind) -> Result<&dyn DcPenalty> {
    obj.penalty().as_dc().ok_or_else(|| {
        Error::Unsupported(format!("{kind} needs a penalty in l1-minus-polyhedral form"))
    })
}

/// Per-run bookkeeping shared by every method.
struct Run {
    kind: SolverKind,
    start: Instant,
    limit: Option<Duration>,
    max_iters: usize,
    stop_tol: f64,
    trace: Vec<TraceRecord>,
}

impl Run {
    fn new(kind: SolverKind, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            kind,
            start: Instant::now(),
            limit: cfg.time_limit_sec.map(Duration::from_secs_f64),
            max_iters: cfg.max_iters,
            stop_tol: cfg.stop_tol,
            trace: Vec::new(),
        })
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Status that ends the run before iteration `t` starts, if any.
    fn should_stop(&self, t: usize) -> Option<Status> {
        if t >= self.max_iters {
            Some(Status::IterLimit)
        } else if self.limit.is_some_and(|l| self.start.elapsed() >= l) {
            Some(Status::TimeLimit)
        } else {
            None
        }
    }

    fn converged(&self, displacement: f64) -> bool {
        displacement <= self.stop_tol
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        t: usize,
        loss: f64,
        penalty: f64,
        displacement: Option<f64>,
        eta: Option<f64>,
        eta_z: Option<f64>,
        backtracks: usize,
        active_set_size: Option<usize>,
    ) -> Result<f64> {
        let objective = loss + penalty;
        if !objective.is_finite() {
            return Err(Error::Divergence(t));
        }
        let time_sec = self.elapsed();
        self.trace.push(TraceRecord {
            t,
            objective,
            loss,
            penalty,
            displacement,
            eta,
            eta_z,
            backtracks,
            active_set_size,
            time_sec,
        });
        Ok(objective)
    }

    fn finish(self, status: Status, x: Vec<f64>, z: Option<Vec<f64>>) -> SolverResult {
        let elapsed_sec = self.elapsed();
        let last = self.trace.last().expect("initial point is always recorded");
        SolverResult {
            solver: self.kind,
            status,
            iterations: last.t,
            objective: last.objective,
            x,
            z,
            elapsed_sec,
            trace: IterateTrace {
                records: self.trace,
            },
            certificate: None,
        }
    }
}

/// Sliding window of the last `r` objective values.
struct Window {
    values: std::collections::VecDeque<f64>,
    r: usize,
}

impl Window {
    fn new(r: usize, first: f64) -> Self {
        let mut values = std::collections::VecDeque::with_capacity(r);
        values.push_back(first);
        Self { values, r }
    }

    fn push(&mut self, v: f64) {
        if self.values.len() == self.r {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Barzilai–Borwein curvature `⟨s, y⟩/‖s‖²`, clipped. A zero step keeps
/// `previous`.
fn bb_step(s_dot_y: f64, s_sq: f64, previous: f64, cfg: &SolverConfig) -> f64 {
    if s_sq == 0.0 {
        return previous;
    }
    let ratio = s_dot_y / s_sq;
    if !ratio.is_finite() {
        return previous;
    }
    ratio.clamp(cfg.eta_underline, cfg.eta_overline)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn gradient_step(x: &[f64], g: &[f64], eta: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(xi, gi)| xi - gi / eta).collect()
}
