//! Test-set error and the metrics CSV format.

use std::io::{Read, Write};

use nalgebra::DVector;

use super::config::{ExperimentKind, ProblemKind};
use super::datagen::Entry;
use crate::defw::IterRecord;
use crate::error::{Error, Result};

/// Mean squared deviation of the vectorised estimate on the test entries.
pub fn mse_test(theta: &DVector<f64>, rows: usize, test: &[Entry]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut sum = 0.0;
    for e in test {
        let idx = e.row + e.col * rows;
        if e.row >= rows || idx >= theta.len() {
            return Err(Error::ContractViolation(format!(
                "test entry ({}, {}) out of range",
                e.row, e.col
            )));
        }
        let r = theta[idx] - e.value;
        sum += r * r;
    }
    Ok(sum / test.len() as f64)
}

/// Largest per-agent test MSE.
pub fn mse_worst(thetas: &[DVector<f64>], rows: usize, test: &[Entry]) -> Result<f64> {
    thetas
        .iter()
        .map(|t| mse_test(t, rows, test))
        .try_fold(f64::NEG_INFINITY, |acc, m| m.map(|m| acc.max(m)))
}

pub const COMMON_COLUMNS: [&str; 13] = [
    "iter",
    "objective",
    "suboptimality",
    "gap",
    "consensus_err",
    "grad_consensus_err",
    "tracking_err",
    "bound_cp",
    "bound_cg",
    "nnz_or_rank",
    "comm_reals",
    "comm_indices",
    "wall_ms",
];

/// Header of the CSV written for a run.
pub fn csv_columns(kind: ExperimentKind, problem: ProblemKind) -> Vec<&'static str> {
    let mut cols = COMMON_COLUMNS.to_vec();
    if kind == ExperimentKind::SparsifiedLasso {
        cols.extend(["lemma4_err", "ell_t", "omega_size"]);
    }
    if problem != ProblemKind::Lasso {
        cols.extend(["mse_test", "mse_worst"]);
    }
    cols
}

fn float(v: f64) -> String {
    format!("{v:e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn cell(rec: &IterRecord, column: &str) -> Result<String> {
    Ok(match column {
        "iter" => rec.iter.to_string(),
        "objective" => float(rec.objective),
        "suboptimality" => opt_float(rec.suboptimality),
        "gap" => opt_float(rec.gap),
        "consensus_err" => float(rec.consensus_err),
        "grad_consensus_err" => opt_float(rec.grad_consensus_err),
        "tracking_err" => opt_float(rec.tracking_err),
        "bound_cp" => opt_float(rec.bound_cp),
        "bound_cg" => opt_float(rec.bound_cg),
        "nnz_or_rank" => rec.nnz_or_rank.to_string(),
        "comm_reals" => float(rec.comm_reals),
        "comm_indices" => float(rec.comm_indices),
        "wall_ms" => float(rec.wall_ms),
        "lemma4_err" => opt_float(rec.lemma4_err),
        "ell_t" => rec.ell_t.map(|v| v.to_string()).unwrap_or_default(),
        "omega_size" => rec.omega_size.map(|v| v.to_string()).unwrap_or_default(),
        "mse_test" => opt_float(rec.mse_test),
        "mse_worst" => opt_float(rec.mse_worst),
        other => return Err(Error::InvalidConfig(format!("unknown metrics column {other:?}"))),
    })
}

pub fn write_metrics_csv<W: Write>(out: W, columns: &[&str], records: &[IterRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns).map_err(csv_err)?;
    for rec in records {
        let row = columns.iter().map(|c| cell(rec, c)).collect::<Result<Vec<_>>>()?;
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(iter, value)` pairs of one column; empty cells are skipped.
pub fn read_series<R: Read>(input: R, column: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidConfig(format!("CSV has no column {name:?}")))
    };
    let it = find("iter")?;
    let iv = find(column)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let parse = |idx: usize| -> Result<f64> {
            rec[idx].trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {:?}", &rec[idx]),
            })
        };
        if rec[iv].trim().is_empty() {
            continue;
        }
        out.push((parse(it)?, parse(iv)?));
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
