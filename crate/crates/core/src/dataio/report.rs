//! JSON reports and plot-ready CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::csv::write_text;
use crate::error::{HdError, Result};
use crate::evaluation::EvalReport;
use crate::generalization::EvolutionPoint;
use crate::hybrid::SelectionCurve;
use crate::similarity::SimilarityMatrices;

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HdError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HdError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_reports(reports: &[EvalReport], path: &Path) -> Result<()> {
    write_json(reports, path)
}

pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    read_json(path)
}

/// One row per report, one column per metric key.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let keys: Vec<&String> = reports
        .first()
        .map(|r| r.metrics.keys().collect())
        .unwrap_or_default();
    let mut out = String::from("subject_id,model_kind");
    for k in &keys {
        let _ = write!(out, ",{k}");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{},{}", r.subject_id, r.model_kind);
        for k in &keys {
            let _ = write!(out, ",{}", r.metrics.get(*k).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

/// Square matrix with subject IDs as header row and first column.
pub fn matrix_csv(subjects: &[String], m: &[Vec<f64>]) -> String {
    let mut out = String::from("subject");
    for s in subjects {
        let _ = write!(out, ",{s}");
    }
    out.push('\n');
    for (s, row) in subjects.iter().zip(m) {
        out.push_str(s);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrices(mats: &SimilarityMatrices, dir: &Path) -> Result<()> {
    for (name, m) in [
        ("s_to_s.csv", &mats.s_to_s),
        ("ns_to_ns.csv", &mats.ns_to_ns),
        ("s_to_ns.csv", &mats.s_to_ns),
    ] {
        write_text(&dir.join(name), &matrix_csv(&mats.subjects, m))?;
    }
    Ok(())
}

pub fn evolution_csv(curve: &[EvolutionPoint]) -> String {
    let mut out = String::from("step,simSS,simNSNS,simSNS,simNSS,separability\n");
    for p in curve {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.subjects_merged, p.sim_ss, p.sim_nsns, p.sim_sns, p.sim_nss, p.separability
        );
    }
    out
}

pub fn selection_csv(curve: &SelectionCurve) -> String {
    let mut out = String::from("threshold,fractionGen,meanF1E,meanF1D,oracleF1E,oracleF1D\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.threshold, p.fraction_gen, p.mean_f1e, p.mean_f1d, curve.oracle_f1e, curve.oracle_f1d
        );
    }
    out
}
