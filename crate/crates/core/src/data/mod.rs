//! Problem data: LIBSVM files, JSON metadata sidecars, synthetic
//! generators and the built-in one-dimensional counterexample.

pub mod libsvm;
pub mod rng;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;
use crate::objective::{CompositeObjective, SmoothLoss};
use crate::penalty::{Penalty, PolyhedralPenalty, SignPattern};

pub use libsvm::{parse_libsvm, serialize_libsvm};
pub use synth::{
    gen_robust_instance, gen_sparse_ls_instance, perturbed_start, RobustInstance,
    MAX_GENERATION_ATTEMPTS,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceMetadata {
    pub name: String,
    pub p: usize,
    pub n: usize,
    pub source: String,
    pub seed: Option<u64>,
    /// Column 0 is an all-ones intercept column.
    pub intercept: bool,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    /// Critical but not d-stationary point built into synthetic data.
    pub planted: Option<Vec<f64>>,
    pub attempts: Option<usize>,
}

/// A design matrix with its response and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub a: Arc<DesignMatrix>,
    pub b: Vec<f64>,
    pub metadata: InstanceMetadata,
}

impl Instance {
    pub fn new(a: DesignMatrix, b: Vec<f64>, metadata: InstanceMetadata) -> Result<Self> {
        crate::error::check_dim("response length", a.n_rows(), b.len())?;
        let metadata = InstanceMetadata {
            p: a.n_cols(),
            n: a.n_rows(),
            ..metadata
        };
        Ok(Self {
            a: Arc::new(a),
            b,
            metadata,
        })
    }

    pub fn p(&self) -> usize {
        self.a.n_cols()
    }

    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    /// Coordinates kept out of the penalty.
    pub fn excluded(&self) -> Vec<usize> {
        if self.metadata.intercept {
            vec![0]
        } else {
            Vec::new()
        }
    }

    pub fn least_squares(&self) -> Result<SmoothLoss> {
        SmoothLoss::least_squares(self.a.clone(), self.b.clone())
    }

    pub fn logistic(&self) -> Result<SmoothLoss> {
        SmoothLoss::logistic(self.a.clone(), self.b.clone())
    }

    /// Reads a LIBSVM file and, when present, its `.json` sidecar.
    pub fn read(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        let mut inst = parse_libsvm(std::io::BufReader::new(file))?;
        let sidecar = sidecar_path(path);
        if sidecar.exists() {
            let meta: InstanceMetadata = serde_json::from_slice(&fs::read(&sidecar)?)?;
            if meta.p > inst.p() {
                inst = inst.with_columns(meta.p)?;
            }
            if meta.p != inst.p() || meta.n != inst.n() {
                return Err(Error::InvalidData(format!(
                    "{} describes a {}x{} instance but the data is {}x{}",
                    sidecar.display(),
                    meta.n,
                    meta.p,
                    inst.n(),
                    inst.p()
                )));
            }
            inst.metadata = meta;
        } else {
            inst.metadata.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            inst.metadata.source = format!("libsvm:{}", path.display());
        }
        Ok(inst)
    }

    /// Writes `path` in LIBSVM format plus the `.json` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        serialize_libsvm(self, &mut out)?;
        std::io::Write::flush(&mut out)?;
        fs::write(sidecar_path(path), serde_json::to_vec_pretty(&self.metadata)?)?;
        Ok(())
    }

    /// Pads the column count (LIBSVM cannot express trailing empty columns).
    fn with_columns(self, n_cols: usize) -> Result<Self> {
        let csr = self.a.to_csr();
        let crate::linalg::Storage::Csr {
            offsets,
            indices,
            values,
        } = csr.storage().clone()
        else {
            unreachable!("to_csr returns CSR storage")
        };
        let a = DesignMatrix::csr(self.n(), n_cols, offsets, indices, values)?;
        Instance::new(a, self.b, self.metadata)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Prepends an all-ones column; the returned exclusion set is `{0}`.
pub fn add_intercept(inst: &Instance) -> Result<(Instance, Vec<usize>)> {
    if inst.metadata.intercept {
        return Err(Error::InterceptPresent);
    }
    let a = inst.a.prepend_ones_column();
    let planted = inst.metadata.planted.as_ref().map(|x| {
        let mut v = Vec::with_capacity(x.len() + 1);
        v.push(0.0);
        v.extend_from_slice(x);
        v
    });
    let metadata = InstanceMetadata {
        intercept: true,
        planted,
        ..inst.metadata.clone()
    };
    Ok((Instance::new(a, inst.b.clone(), metadata)?, vec![0]))
}

/// `½(x − 2)² + |x| − max{0, −x}`: the origin is critical but not
/// d-stationary, and `x = 1` is the unique minimizer with value 1.5.
pub fn counterexample_1d() -> CompositeObjective {
    let a = Arc::new(DesignMatrix::identity(1));
    let pieces = vec![
        SignPattern::new(vec![0]).expect("valid pattern"),
        SignPattern::new(vec![-1]).expect("valid pattern"),
    ];
    let penalty = PolyhedralPenalty::new(1.0, pieces).expect("valid pieces");
    CompositeObjective::new(
        SmoothLoss::least_squares(a, vec![2.0]).expect("valid data"),
        Penalty::Polyhedral(penalty),
    )
    .expect("consistent dimensions")
}
