//! Design matrices (dense or CSR) and the handful of vector kernels the
//! solvers need.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum Storage {
    /// Row-major values, `n_rows * n_cols` long.
    Dense { values: Vec<f64> },
    Csr {
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

/// The data matrix `A` behind every loss. Rows are samples, columns are
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    n_rows: usize,
    n_cols: usize,
    storage: Storage,
}

impl DesignMatrix {
    pub fn dense(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        check_dim("dense matrix values", n_rows * n_cols, values.len())?;
        Ok(Self {
            n_rows,
            n_cols,
            storage: Storage::Dense { values },
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            check_dim("row length", n_cols, row.len())?;
            values.extend_from_slice(row);
        }
        Self::dense(rows.len(), n_cols, values)
    }

    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self {
            n_rows: n,
            n_cols: n,
            storage: Storage::Dense { values },
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::identity(n);
        if let Storage::Dense { values } = &mut m.storage {
            for (i, d) in diag.iter().enumerate() {
                values[i * n + i] = *d;
            }
        }
        m
    }

    /// Builds a CSR matrix, validating offsets and column indices. Stored
    /// zeros are allowed.
    pub fn csr(
        n_rows: usize,
        n_cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_dim("csr offsets", n_rows + 1, offsets.len())?;
        check_dim("csr values", indices.len(), values.len())?;
        if offsets[0] != 0 {
            return Err(Error::InvalidData("csr offsets must start at 0".into()));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidData("csr offsets must be nondecreasing".into()));
        }
        if offsets[n_rows] != indices.len() {
            return Err(Error::InvalidData(format!(
                "last csr offset {} differs from nnz {}",
                offsets[n_rows],
                indices.len()
            )));
        }
        if let Some(&j) = indices.iter().find(|&&j| j >= n_cols) {
            return Err(Error::InvalidData(format!(
                "csr column index {j} out of range for {n_cols} columns"
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            storage: Storage::Csr {
                offsets,
                indices,
                values,
            },
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Csr { .. })
    }

    /// Stored entries (for dense storage, every entry).
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense { values } => values.len(),
            Storage::Csr { values, .. } => values.len(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense { values } => values[i * self.n_cols + j],
            Storage::Csr {
                offsets,
                indices,
                values,
            } => {
                let (lo, hi) = (offsets[i], offsets[i + 1]);
                indices[lo..hi]
                    .iter()
                    .zip(&values[lo..hi])
                    .filter(|(&c, _)| c == j)
                    .map(|(_, v)| *v)
                    .sum()
            }
        }
    }

    /// Visits the stored entries of row `i` as `(column, value)`.
    pub fn for_each_in_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        match &self.storage {
            Storage::Dense { values } => {
                let row = &values[i * self.n_cols..(i + 1) * self.n_cols];
                for (j, v) in row.iter().enumerate() {
                    f(j, *v);
                }
            }
            Storage::Csr {
                offsets,
                indices,
                values,
            } => {
                for k in offsets[i]..offsets[i + 1] {
                    f(indices[k], values[k]);
                }
            }
        }
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        match &self.storage {
            Storage::Dense { values } => dot(&values[i * self.n_cols..(i + 1) * self.n_cols], x),
            Storage::Csr {
                offsets,
                indices,
                values,
            } => {
                let mut acc = 0.0;
                for k in offsets[i]..offsets[i + 1] {
                    acc += values[k] * x[indices[k]];
                }
                acc
            }
        }
    }

    /// `out = A x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row_dot(i, x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `out = Aᵀ r`
    pub fn tmul_vec_into(&self, r: &[f64], out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.n_rows);
        debug_assert_eq!(out.len(), self.n_cols);
        out.fill(0.0);
        match &self.storage {
            Storage::Dense { values } => {
                for (i, &ri) in r.iter().enumerate() {
                    if ri != 0.0 {
                        axpy(ri, &values[i * self.n_cols..(i + 1) * self.n_cols], out);
                    }
                }
            }
            Storage::Csr {
                offsets,
                indices,
                values,
            } => {
                for (i, &ri) in r.iter().enumerate() {
                    for k in offsets[i]..offsets[i + 1] {
                        out[indices[k]] += values[k] * ri;
                    }
                }
            }
        }
    }

    pub fn tmul_vec(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        self.tmul_vec_into(r, &mut out);
        out
    }

    pub fn all_finite(&self) -> bool {
        match &self.storage {
            Storage::Dense { values } | Storage::Csr { values, .. } => {
                values.iter().all(|v| v.is_finite())
            }
        }
    }

    pub fn to_dense(&self) -> DesignMatrix {
        match &self.storage {
            Storage::Dense { .. } => self.clone(),
            Storage::Csr { .. } => {
                let mut values = vec![0.0; self.n_rows * self.n_cols];
                for i in 0..self.n_rows {
                    self.for_each_in_row(i, |j, v| values[i * self.n_cols + j] += v);
                }
                DesignMatrix {
                    n_rows: self.n_rows,
                    n_cols: self.n_cols,
                    storage: Storage::Dense { values },
                }
            }
        }
    }

    /// CSR copy keeping only nonzero entries.
    pub fn to_csr(&self) -> DesignMatrix {
        let mut offsets = Vec::with_capacity(self.n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for i in 0..self.n_rows {
            self.for_each_in_row(i, |j, v| {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            });
            offsets.push(indices.len());
        }
        DesignMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            storage: Storage::Csr {
                offsets,
                indices,
                values,
            },
        }
    }

    /// New matrix with a column of ones in front (column 0).
    pub fn prepend_ones_column(&self) -> DesignMatrix {
        let n_cols = self.n_cols + 1;
        match &self.storage {
            Storage::Dense { values } => {
                let n = self.n_cols;
                let mut out = Vec::with_capacity(self.n_rows * n_cols);
                for i in 0..self.n_rows {
                    out.push(1.0);
                    out.extend_from_slice(&values[i * n..(i + 1) * n]);
                }
                DesignMatrix {
                    n_rows: self.n_rows,
                    n_cols,
                    storage: Storage::Dense { values: out },
                }
            }
            Storage::Csr {
                offsets,
                indices,
                values,
            } => {
                let mut new_offsets = Vec::with_capacity(offsets.len());
                let mut new_indices = Vec::with_capacity(indices.len() + self.n_rows);
                let mut new_values = Vec::with_capacity(values.len() + self.n_rows);
                new_offsets.push(0);
                for i in 0..self.n_rows {
                    new_indices.push(0);
                    new_values.push(1.0);
                    for k in offsets[i]..offsets[i + 1] {
                        new_indices.push(indices[k] + 1);
                        new_values.push(values[k]);
                    }
                    new_offsets.push(new_indices.len());
                }
                DesignMatrix {
                    n_rows: self.n_rows,
                    n_cols,
                    storage: Storage::Csr {
                        offsets: new_offsets,
                        indices: new_indices,
                        values: new_values,
                    },
                }
            }
        }
    }

    /// Euclidean norm of every column.
    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            self.for_each_in_row(i, |j, v| sq[j] += v * v);
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// Scales every nonzero column to unit Euclidean norm.
    pub fn normalize_columns(&mut self) {
        let norms = self.column_norms();
        let n_cols = self.n_cols;
        let scale = |j: usize| if norms[j] > 0.0 { 1.0 / norms[j] } else { 1.0 };
        match &mut self.storage {
            Storage::Dense { values } => {
                for (k, v) in values.iter_mut().enumerate() {
                    *v *= scale(k % n_cols);
                }
            }
            Storage::Csr {
                indices, values, ..
            } => {
                for (j, v) in indices.iter().zip(values.iter_mut()) {
                    *v *= scale(*j);
                }
            }
        }
    }

    /// Gram matrix `AᵀA` when `n_cols <= n_rows`, otherwise `AAᵀ`; both
    /// share the nonzero spectrum. Row-major, `min(n_rows, n_cols)` square.
    pub fn small_gram(&self) -> (usize, Vec<f64>) {
        let dense = self.to_dense();
        let Storage::Dense { values } = &dense.storage else {
            unreachable!()
        };
        let (m, n) = (self.n_rows, self.n_cols);
        if n <= m {
            let mut g = vec![0.0; n * n];
            for row in values.chunks_exact(n.max(1)).take(m) {
                for a in 0..n {
                    let ra = row[a];
                    if ra == 0.0 {
                        continue;
                    }
                    let g_row = &mut g[a * n..(a + 1) * n];
                    for b in a..n {
                        g_row[b] += ra * row[b];
                    }
                }
            }
            for a in 0..n {
                for b in 0..a {
                    g[a * n + b] = g[b * n + a];
                }
            }
            (n, g)
        } else {
            let mut g = vec![0.0; m * m];
            for a in 0..m {
                for b in a..m {
                    let v = dot(&values[a * n..(a + 1) * n], &values[b * n..(b + 1) * n]);
                    g[a * m + b] = v;
                    g[b * m + a] = v;
                }
            }
            (m, g)
        }
    }

    /// Dense copy of the columns in `cols`, as an `n_rows × cols.len()`
    /// row-major block.
    pub fn column_block(&self, cols: &[usize]) -> Vec<f64> {
        let mut pos = vec![usize::MAX; self.n_cols];
        for (k, &j) in cols.iter().enumerate() {
            pos[j] = k;
        }
        let w = cols.len();
        let mut out = vec![0.0; self.n_rows * w];
        for i in 0..self.n_rows {
            self.for_each_in_row(i, |j, v| {
                if pos[j] != usize::MAX {
                    out[i * w + pos[j]] += v;
                }
            });
        }
        out
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
/// The summation order is fixed, so results are reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn count_nonzero(x: &[f64]) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}
