//! Experiment files are TOML. `tkpen bench --print-schema` prints
//! [`SCHEMA`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tkpen_core::solvers::{SolverConfig, SolverKind};

use crate::error::{BenchError, Result};

pub const SCHEMA: &str = r#"# tkpen experiment file (TOML)
#
# name          string   label used in output file names          (default "experiment")
# repetitions   integer  instances per run, >= 1                   (default 1)
# seed          integer  base seed; instance i uses derive_seed(seed, i)  (default 0)
# solvers       array    solver names, at least one:
#                        pgm gist pdca pdcae nepdca | palm gpalm pdcae-proj
# stop_tol      float    optional, overrides every solver's stop_tol
# time_limit    float    optional seconds per solver run
# tol           float    certificate tolerance                     (default 1e-5)
# active_set_cap integer certificate enumeration cap               (default 100000)
# out_dir       string   optional output directory (relative to the file)
#
# [problem]     one of:
#   kind = "fig1"                                  one-dimensional example, x0 = 0
#   kind = "planted"  p, n, k, lambda              planted critical point,
#                                                  x0 = x~ + 0.01 nu
#   kind = "dataset"  path, k, lambda,             LIBSVM file, x0 = 0.1 nu
#                     loss = "least_squares" | "logistic",
#                     intercept = false
#   kind = "robust"   p, n, k, kappa, lambda1, lambda2,
#                     outlier_magnitude = 10.0, noise_sd = 0.01
#                                                  x0 = 0.01 nu_x, z0 = 0.01 nu_z
#   start_scale (float) optionally replaces the nu multiplier.
#
# [solver.<name>]  optional per-solver overrides of any solver parameter:
#   max_iters time_limit_sec stop_tol step_factor eta_underline eta_overline
#   eta0 sigma sigma1 sigma2 rho rho1 rho2 r delta c subgradient_policy
#   beta_schedule active_set_cap seed
#
# Example:
#   name = "planted-l1"
#   repetitions = 30
#   seed = 7
#   solvers = ["gist", "pgm", "pdcae", "nepdca"]
#   stop_tol = 1e-8
#   [problem]
#   kind = "planted"
#   p = 1000
#   n = 1000
#   k = 300
#   lambda = 10.0
#   [solver.nepdca]
#   active_set_cap = 5000
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossChoice {
    #[default]
    LeastSquares,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Fig1,
    Planted {
        p: usize,
        n: usize,
        k: usize,
        lambda: f64,
        start_scale: Option<f64>,
    },
    Dataset {
        path: PathBuf,
        k: usize,
        lambda: f64,
        #[serde(default)]
        loss: LossChoice,
        #[serde(default)]
        intercept: bool,
        start_scale: Option<f64>,
    },
    Robust {
        p: usize,
        n: usize,
        k: usize,
        kappa: usize,
        lambda1: f64,
        lambda2: f64,
        #[serde(default = "default_outlier")]
        outlier_magnitude: f64,
        #[serde(default = "default_noise")]
        noise_sd: f64,
        start_scale: Option<f64>,
    },
}

fn default_outlier() -> f64 {
    10.0
}

fn default_noise() -> f64 {
    0.01
}

impl ProblemSpec {
    pub fn is_two_block(&self) -> bool {
        matches!(self, Self::Robust { .. })
    }

    pub fn start_scale(&self) -> f64 {
        match self {
            Self::Fig1 => 0.0,
            Self::Planted { start_scale, .. } => start_scale.unwrap_or(0.01),
            Self::Dataset { start_scale, .. } => start_scale.unwrap_or(0.1),
            Self::Robust { start_scale, .. } => start_scale.unwrap_or(0.01),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    pub solvers: Vec<String>,
    pub stop_tol: Option<f64>,
    pub time_limit: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_cap")]
    pub active_set_cap: usize,
    pub out_dir: Option<PathBuf>,
    pub problem: ProblemSpec,
    /// Raw per-solver overrides, merged over the solver's defaults.
    #[serde(default)]
    pub solver: BTreeMap<String, toml::Table>,
}

fn parse_kind(name: &str) -> Result<SolverKind> {
    name.parse().map_err(|e: tkpen_core::Error| BenchError::Config(e.to_string()))
}

fn default_name() -> String {
    "experiment".into()
}

fn one() -> usize {
    1
}

fn default_tol() -> f64 {
    tkpen_core::stationarity::DEFAULT_TOLERANCE
}

fn default_cap() -> usize {
    tkpen_core::penalty::DEFAULT_ACTIVE_SET_CAP
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec, solvers: &[&str]) -> Self {
        Self {
            name: default_name(),
            repetitions: 1,
            seed: 0,
            solvers: solvers.iter().map(|s| s.to_string()).collect(),
            stop_tol: None,
            time_limit: None,
            tol: default_tol(),
            active_set_cap: default_cap(),
            out_dir: None,
            problem,
            solver: BTreeMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; a relative `out_dir` or dataset path is resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::ConfigRead {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(dir) = cfg.out_dir.as_mut() {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        if let ProblemSpec::Dataset { path: data, .. } = &mut cfg.problem {
            if data.is_relative() {
                *data = base.join(&*data);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(BenchError::Config("repetitions must be at least 1".into()));
        }
        let kinds = self.solver_kinds()?;
        if kinds.is_empty() {
            return Err(BenchError::Config("at least one solver is required".into()));
        }
        let two = self.problem.is_two_block();
        if let Some(k) = kinds.iter().find(|k| k.is_two_block() != two) {
            return Err(BenchError::Config(format!(
                "solver {k} does not apply to this problem kind"
            )));
        }
        for name in self.solver.keys() {
            let kind = parse_kind(name)?;
            if !kinds.contains(&kind) {
                return Err(BenchError::Config(format!(
                    "overrides given for {name}, which is not in the solver list"
                )));
            }
        }
        for kind in kinds {
            self.solver_config(kind)?;
        }
        Ok(())
    }

    pub fn solver_kinds(&self) -> Result<Vec<SolverKind>> {
        let mut out = Vec::new();
        for name in &self.solvers {
            let kind = parse_kind(name)?;
            if out.contains(&kind) {
                return Err(BenchError::Config(format!("solver {kind} listed twice")));
            }
            out.push(kind);
        }
        Ok(out)
    }

    /// Defaults for `kind`, then the global stop/time settings, then the
    /// `[solver.<name>]` table.
    pub fn solver_config(&self, kind: SolverKind) -> Result<SolverConfig> {
        let mut base = SolverConfig::for_solver(kind);
        if let Some(tol) = self.stop_tol {
            base.stop_tol = tol;
        }
        if let Some(t) = self.time_limit {
            base.time_limit_sec = Some(t);
        }
        let over = self
            .solver
            .iter()
            .find(|(name, _)| name.parse::<SolverKind>().ok() == Some(kind))
            .map(|(_, t)| t);
        let Some(over) = over else {
            base.validate()?;
            return Ok(base);
        };
        let mut table = toml::Table::try_from(&base).map_err(|e| BenchError::Config(e.to_string()))?;
        for (k, v) in over {
            table.insert(k.clone(), v.clone());
        }
        let cfg: SolverConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| BenchError::Config(format!("[solver.{kind}]: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
