//! Synthetic cohorts and on-disk formats.
//!
//! Cohort directories hold one subdirectory per subject; each record is a
//! `<record>.csv` signal file and, after feature extraction, a
//! `<record>.features.csv` file next to it.

mod csv;
mod model;
mod report;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

pub use csv::{read_features, read_record, write_features, write_record};
pub use model::{
    decode_model, encode_model, load_model, save_model, MODEL_HEADER_LEN, MODEL_MAGIC,
    MODEL_VERSION,
};
pub use report::{
    evolution_csv, matrix_csv, read_json, read_reports, reports_csv, selection_csv, write_json,
    write_matrices, write_reports,
};
pub use synth::{generate_synthetic_cohort, CohortSpec, SyntheticSubject};

pub use csv::write_text;

use crate::error::{HdError, Result};
use crate::evaluation::SubjectData;
use crate::features::{extract_features, FeatureConfig};
use crate::filter::SosFilter;

pub const SIGNAL_SUFFIX: &str = ".csv";
pub const FEATURE_SUFFIX: &str = ".features.csv";
pub const COHORT_MANIFEST: &str = "cohort.json";

/// Write every record as `<dir>/<subject>/<record>.csv` plus a manifest.
pub fn write_cohort(spec: &CohortSpec, subjects: &[SyntheticSubject], dir: &Path) -> Result<()> {
    write_json(spec, &dir.join(COHORT_MANIFEST))?;
    for s in subjects {
        for r in &s.records {
            write_record(
                r,
                &dir.join(&s.subject_id)
                    .join(format!("{}{SIGNAL_SUFFIX}", r.record_id)),
            )?;
        }
    }
    Ok(())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HdError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| HdError::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn is_signal_file(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(SIGNAL_SUFFIX) && !n.ends_with(FEATURE_SUFFIX))
}

fn is_feature_file(p: &Path) -> bool {
    p.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(FEATURE_SUFFIX))
}

/// `(subject directory, sorted files)` pairs for files matching `keep`.
fn cohort_files(dir: &Path, keep: fn(&Path) -> bool) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let mut out = Vec::new();
    for sub in sorted_entries(dir)? {
        if !sub.is_dir() {
            continue;
        }
        let files: Vec<PathBuf> = sorted_entries(&sub)?
            .into_iter()
            .filter(|p| keep(p))
            .collect();
        if !files.is_empty() {
            let name = sub
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            out.push((name, files));
        }
    }
    if out.is_empty() {
        return Err(HdError::InsufficientData(format!(
            "no subject directories with records in {}",
            dir.display()
        )));
    }
    Ok(out)
}

pub fn signal_files(dir: &Path) -> Result<Vec<(String, Vec<PathBuf>)>> {
    cohort_files(dir, is_signal_file)
}

pub fn feature_files(dir: &Path) -> Result<Vec<(String, Vec<PathBuf>)>> {
    cohort_files(dir, is_feature_file)
}

/// Load every subject's feature matrices. The cohort name comes from the
/// manifest if present, else the directory name.
pub fn load_feature_cohort(dir: &Path) -> Result<Vec<SubjectData>> {
    let manifest = dir.join(COHORT_MANIFEST);
    let cohort = if manifest.exists() {
        read_json::<CohortSpec>(&manifest)?.name
    } else {
        dir.file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("cohort")
            .to_string()
    };
    feature_files(dir)?
        .into_iter()
        .map(|(subject_id, files)| {
            let records = files
                .iter()
                .map(|p| read_features(p))
                .collect::<Result<Vec<_>>>()?;
            Ok(SubjectData {
                subject_id,
                cohort: cohort.clone(),
                records,
            })
        })
        .collect()
}

/// Extract features for every record of synthetic subjects.
pub fn synthetic_features(
    spec: &CohortSpec,
    subjects: &[SyntheticSubject],
    cfg: &FeatureConfig,
) -> Result<Vec<SubjectData>> {
    subjects
        .iter()
        .map(|s| {
            Ok(SubjectData {
                subject_id: s.subject_id.clone(),
                cohort: spec.name.clone(),
                records: s
                    .records
                    .iter()
                    .map(|r| extract_features(r, cfg))
                    .collect::<Result<Vec<_>>>()?,
            })
        })
        .collect()
}

/// Anti-aliased downsampling by an integer factor (zero-phase Butterworth
/// low-pass at 80% of the new Nyquist, then every `factor`-th sample).
pub fn decimate(x: &[f64], fs: f64, factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(HdError::invalid("decimation factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(x.to_vec());
    }
    let cutoff = 0.8 * fs / (2.0 * factor as f64);
    let lp = SosFilter::butter_lowpass(8, cutoff, fs)?;
    Ok(lp.filtfilt(x)?.into_iter().step_by(factor).collect())
}
