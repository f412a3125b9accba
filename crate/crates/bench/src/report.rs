//! CSV output. Floats are written in shortest round-trip form, so a
//! standard reader gets the exact values back; wall times live in their own
//! file to keep `results.csv` byte-for-byte reproducible.

use std::fs;
use std::path::Path;

use crate::error::{BenchError, Result};
use crate::experiment::{ExperimentReport, ReportRow, SummaryRow};
use crate::plot::emit_plot;

pub const RESULTS_HEADER: [&str; 13] = [
    "instance",
    "seed",
    "solver",
    "status",
    "iterations",
    "objective",
    "loss",
    "ln_objective",
    "nnz_x",
    "nnz_z",
    "critical",
    "d_stationary",
    "prox_residual",
];

pub const SUMMARY_HEADER: [&str; 10] = [
    "solver",
    "runs",
    "converged",
    "mean_iterations",
    "mean_objective",
    "mean_ln_objective",
    "mean_nnz_x",
    "mean_nnz_z",
    "best_iterations",
    "best_ln_objective",
];

pub const TIMINGS_HEADER: [&str; 3] = ["instance", "solver", "time_sec"];

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_records<I>(header: &[&str], records: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.into_inner()
        .map_err(|e| BenchError::Io(e.into_error()))
}

/// Per-run results; empty input is an error.
pub fn emit_csv(rows: &[ReportRow]) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Err(BenchError::EmptyOutput);
    }
    write_records(
        &RESULTS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.instance.to_string(),
                r.seed.to_string(),
                r.solver.to_string(),
                r.status.clone(),
                r.iterations.to_string(),
                float(r.objective),
                float(r.loss),
                float(r.ln_objective),
                r.nnz_x.to_string(),
                opt(r.nnz_z),
                opt(r.critical),
                opt(r.d_stationary),
                float(r.prox_residual),
            ]
        }),
    )
}

pub fn emit_summary_csv(summary: &[SummaryRow]) -> Result<Vec<u8>> {
    if summary.is_empty() {
        return Err(BenchError::EmptyOutput);
    }
    write_records(
        &SUMMARY_HEADER,
        summary.iter().map(|s| {
            vec![
                s.solver.to_string(),
                s.runs.to_string(),
                s.converged.to_string(),
                float(s.mean_iterations),
                float(s.mean_objective),
                float(s.mean_ln_objective),
                float(s.mean_nnz_x),
                opt(s.mean_nnz_z.map(float)),
                s.best_iterations.to_string(),
                s.best_ln_objective.to_string(),
            ]
        }),
    )
}

pub fn emit_timings_csv(rows: &[ReportRow]) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Err(BenchError::EmptyOutput);
    }
    write_records(
        &TIMINGS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.instance.to_string(),
                r.solver.to_string(),
                float(r.time_sec),
            ]
        }),
    )
}

/// Writes `results.csv`, `summary.csv`, `timings.csv`,
/// `certificates.json` and one `convergence-<i>.svg` per instance.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), emit_csv(&report.rows)?)?;
    fs::write(dir.join("summary.csv"), emit_summary_csv(&report.summary)?)?;
    fs::write(dir.join("timings.csv"), emit_timings_csv(&report.rows)?)?;
    let certs: Vec<_> = report
        .rows
        .iter()
        .zip(&report.certificates)
        .map(|(r, c)| {
            serde_json::json!({
                "instance": r.instance,
                "solver": r.solver,
                "certificate": c,
            })
        })
        .collect();
    fs::write(
        dir.join("certificates.json"),
        serde_json::to_vec_pretty(&certs).map_err(std::io::Error::from)?,
    )?;
    let n_inst = report.rows.iter().map(|r| r.instance + 1).max().unwrap_or(0);
    for i in 0..n_inst {
        let traces: Vec<(String, &[f64])> = report
            .traces
            .iter()
            .filter(|t| t.instance == i)
            .map(|t| (t.solver.to_string(), t.objectives.as_slice()))
            .collect();
        fs::write(dir.join(format!("convergence-{i}.svg")), emit_plot(&traces)?)?;
    }
    Ok(())
}
