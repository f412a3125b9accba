//! The LIBSVM sparse text format: one sample per line,
//! `label idx:val idx:val ...` with 1-based, strictly increasing indices.
//! Indices are converted to 0-based columns on input.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;

use super::{Instance, InstanceMetadata};

/// Parses LIBSVM text into a CSR instance with as many columns as the
/// largest index seen. Blank lines and `#` comments are skipped.
pub fn parse_libsvm<R: BufRead>(source: R) -> Result<Instance> {
    let mut labels = Vec::new();
    let mut offsets = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut n_cols = 0;
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("bad label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(err(format!("label `{label_tok}` is not finite")));
        }
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected index:value, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad index in `{tok}`")))?;
            if idx == 0 {
                return Err(err("indices are 1-based".into()));
            }
            if idx <= last {
                return Err(err(format!(
                    "index {idx} does not increase (previous {last})"
                )));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad value in `{tok}`")))?;
            if !val.is_finite() {
                return Err(err(format!("value in `{tok}` is not finite")));
            }
            last = idx;
            n_cols = n_cols.max(idx);
            indices.push(idx - 1);
            values.push(val);
        }
        labels.push(label);
        offsets.push(indices.len());
    }
    let a = DesignMatrix::csr(labels.len(), n_cols, offsets, indices, values)?;
    Instance::new(
        a,
        labels,
        InstanceMetadata {
            source: "libsvm".into(),
            ..Default::default()
        },
    )
}

/// Writes every stored entry (dense zeros are skipped) using the shortest
/// representation that parses back to the same float.
pub fn serialize_libsvm<W: Write>(inst: &Instance, out: &mut W) -> Result<()> {
    for i in 0..inst.n() {
        write!(out, "{:?}", inst.b[i])?;
        let dense = !inst.a.is_sparse();
        let mut io_err = None;
        inst.a.for_each_in_row(i, |j, v| {
            if dense && v == 0.0 || io_err.is_some() {
                return;
            }
            if let Err(e) = write!(out, " {}:{:?}", j + 1, v) {
                io_err = Some(e);
            }
        });
        if let Some(e) = io_err {
            return Err(e.into());
        }
        writeln!(out)?;
    }
    Ok(())
}
