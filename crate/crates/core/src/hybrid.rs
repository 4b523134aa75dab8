//! Hybrid models (one personalized and one generalized prototype) and
//! threshold-driven choice between generalized and personalized models.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, HdError, Result};
use crate::evaluation::{EvalReport, Level, Post};
use crate::training::{ClassModel, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HybridMode {
    /// Generalized non-seizure prototype, personalized seizure prototype.
    #[serde(rename = "nsgen-spers")]
    NsGenSPers,
    /// Personalized non-seizure prototype, generalized seizure prototype.
    #[serde(rename = "nspers-sgen")]
    NsPersSGen,
}

impl HybridMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HybridMode::NsGenSPers => "nsgen-spers",
            HybridMode::NsPersSGen => "nspers-sgen",
        }
    }
}

impl std::str::FromStr for HybridMode {
    type Err = HdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nsgen-spers" => Ok(HybridMode::NsGenSPers),
            "nspers-sgen" => Ok(HybridMode::NsPersSGen),
            other => Err(HdError::Config(format!("unknown hybrid mode '{other}'"))),
        }
    }
}

pub fn compose_hybrid(pers: &ClassModel, gen: &ClassModel, mode: HybridMode) -> Result<ClassModel> {
    check_dims(pers.dim(), gen.dim())?;
    if pers.kind != ModelKind::Personalized || gen.kind != ModelKind::Generalized {
        return Err(HdError::invalid(format!(
            "hybrid needs a personalized and a generalized model, got {} and {}",
            pers.kind.as_str(),
            gen.kind.as_str()
        )));
    }
    let (seizure, non_seizure) = match mode {
        HybridMode::NsGenSPers => (pers.seizure.clone(), gen.non_seizure.clone()),
        HybridMode::NsPersSGen => (gen.seizure.clone(), pers.non_seizure.clone()),
    };
    let mut out = ClassModel::new(seizure, non_seizure, ModelKind::Hybrid)?;
    out.source_cohort = pers.source_cohort.clone();
    out.subject_id = pers.subject_id.clone();
    out.codebook_ref = pers.codebook_ref.clone();
    out.sources = vec![mode.as_str().to_string(), pers.describe(), gen.describe()];
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    Generalized,
    Personalized,
}

/// Generalized where its score reaches `threshold`, personalized otherwise.
pub fn select_models(
    gen_scores: &[f64],
    pers_scores: &[f64],
    threshold: f64,
) -> Result<(Vec<Assignment>, f64)> {
    if gen_scores.len() != pers_scores.len() {
        return Err(HdError::invalid(format!(
            "{} generalized scores vs {} personalized",
            gen_scores.len(),
            pers_scores.len()
        )));
    }
    let assignment: Vec<Assignment> = gen_scores
        .iter()
        .map(|&g| {
            if g >= threshold {
                Assignment::Generalized
            } else {
                Assignment::Personalized
            }
        })
        .collect();
    let n_gen = assignment
        .iter()
        .filter(|a| **a == Assignment::Generalized)
        .count();
    let fraction = if assignment.is_empty() {
        0.0
    } else {
        n_gen as f64 / assignment.len() as f64
    };
    Ok((assignment, fraction))
}

/// Per-subject score used for selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSelector {
    F1e,
    F1d,
    Gmean,
}

impl ScoreSelector {
    pub fn score(self, report: &EvalReport, post: Post) -> f64 {
        let e = report.metric(Level::Episode, post, "f1");
        let d = report.metric(Level::Duration, post, "f1");
        match self {
            ScoreSelector::F1e => e,
            ScoreSelector::F1d => d,
            ScoreSelector::Gmean => (e * d).sqrt(),
        }
    }
}

impl std::str::FromStr for ScoreSelector {
    type Err = HdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1e" => Ok(ScoreSelector::F1e),
            "f1d" => Ok(ScoreSelector::F1d),
            "gmean" => Ok(ScoreSelector::Gmean),
            other => Err(HdError::Config(format!(
                "unknown selection score '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPoint {
    pub threshold: f64,
    pub fraction_gen: f64,
    pub mean_f1e: f64,
    pub mean_f1d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCurve {
    pub post: Post,
    pub points: Vec<SelectionPoint>,
    /// Mean of the per-subject best F1E over both model kinds.
    pub oracle_f1e: f64,
    /// Mean of the per-subject best F1D over both model kinds.
    pub oracle_f1d: f64,
}

/// Sweep the selection threshold over paired per-subject reports.
pub fn sweep_selection(
    gen: &[EvalReport],
    pers: &[EvalReport],
    thresholds: &[f64],
    selector: ScoreSelector,
    post: Post,
) -> Result<SelectionCurve> {
    if gen.len() != pers.len() {
        return Err(HdError::invalid(format!(
            "{} generalized reports vs {} personalized",
            gen.len(),
            pers.len()
        )));
    }
    if gen.is_empty() {
        return Err(HdError::invalid("no reports to sweep"));
    }
    for (g, p) in gen.iter().zip(pers) {
        if g.subject_id != p.subject_id {
            return Err(HdError::invalid(format!(
                "reports not aligned: {} vs {}",
                g.subject_id, p.subject_id
            )));
        }
    }
    let f1e = |r: &EvalReport| r.metric(Level::Episode, post, "f1");
    let f1d = |r: &EvalReport| r.metric(Level::Duration, post, "f1");
    let gen_scores: Vec<f64> = gen.iter().map(|r| selector.score(r, post)).collect();
    let pers_scores: Vec<f64> = pers.iter().map(|r| selector.score(r, post)).collect();
    let n = gen.len() as f64;

    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let (assign, fraction_gen) = select_models(&gen_scores, &pers_scores, t)?;
        let (mut e, mut d) = (0.0, 0.0);
        for ((a, g), p) in assign.iter().zip(gen).zip(pers) {
            let chosen = if *a == Assignment::Generalized { g } else { p };
            e += f1e(chosen);
            d += f1d(chosen);
        }
        points.push(SelectionPoint {
            threshold: t,
            fraction_gen,
            mean_f1e: e / n,
            mean_f1d: d / n,
        });
    }
    let oracle = |f: &dyn Fn(&EvalReport) -> f64| {
        gen.iter()
            .zip(pers)
            .map(|(g, p)| f(g).max(f(p)))
            .sum::<f64>()
            / n
    };
    Ok(SelectionCurve {
        post,
        points,
        oracle_f1e: oracle(&f1e),
        oracle_f1d: oracle(&f1d),
    })
}

/// `steps + 1` evenly spaced thresholds over [0, 1].
pub fn default_thresholds(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}
