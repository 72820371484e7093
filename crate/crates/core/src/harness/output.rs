//! Plot-ready CSV and JSON summaries.

use std::path::Path;

use serde::Serialize;

use super::{effective_level, CalibrationReport};
use crate::error::{Error, Result};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One CSV row per serialized record.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow<'a> {
    pub gene: &'a str,
    pub method: String,
    pub nominal: f64,
    pub evaluated_level: f64,
    pub coverage: f64,
}

/// Calibration curves, one row per (gene, method, grid point).
pub fn curve_rows(reports: &[CalibrationReport]) -> Vec<CurveRow<'_>> {
    reports
        .iter()
        .flat_map(|r| {
            r.grid
                .iter()
                .zip(&r.empirical_coverage)
                .map(move |(&g, &c)| CurveRow {
                    gene: &r.gene,
                    method: r.method.to_string(),
                    nominal: g,
                    evaluated_level: effective_level(g),
                    coverage: c,
                })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MaceRow<'a> {
    pub gene: &'a str,
    pub method: String,
    pub mace_x100: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_width: f64,
    pub n_folds: usize,
}

pub fn mace_rows(reports: &[CalibrationReport]) -> Vec<MaceRow<'_>> {
    reports
        .iter()
        .map(|r| MaceRow {
            gene: &r.gene,
            method: r.method.to_string(),
            mace_x100: r.mace_x100,
            ci_lo: r.mace_ci[0],
            ci_hi: r.mace_ci[1],
            mean_width: r.mean_width,
            n_folds: r.n_folds,
        })
        .collect()
}
