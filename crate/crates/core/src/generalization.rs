//! Merging personalized class models into generalized ones (plain averaging,
//! weighted subtraction, weighted addition and subtraction), plus model
//! evolution curves as subjects accrue.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, HdError, Result};
use crate::hypervector::{tie_break_vector, Accumulator, Hypervector};
use crate::similarity::class_similarities;
use crate::training::{Class, ClassModel, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMethod {
    Avrg,
    WSub,
    WAddSub,
}

impl MergeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MergeMethod::Avrg => "avrg",
            MergeMethod::WSub => "wsub",
            MergeMethod::WAddSub => "waddsub",
        }
    }
}

impl std::str::FromStr for MergeMethod {
    type Err = HdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "avrg" | "avg" => Ok(MergeMethod::Avrg),
            "wsub" => Ok(MergeMethod::WSub),
            "waddsub" | "wadd&sub" => Ok(MergeMethod::WAddSub),
            other => Err(HdError::Config(format!("unknown merge method '{other}'"))),
        }
    }
}

/// How the opposite-class weight depends on its Hamming distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WrongWeightConvention {
    /// `alpha * distance`, the formula as usually printed.
    Distance,
    /// `alpha * (1 - distance)`: similar opposite-class vectors weigh more.
    Similarity,
}

impl std::str::FromStr for WrongWeightConvention {
    type Err = HdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "distance" => Ok(WrongWeightConvention::Distance),
            "similarity" => Ok(WrongWeightConvention::Similarity),
            other => Err(HdError::Config(format!(
                "unknown wrong-weight convention '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub method: MergeMethod,
    pub alpha_corr: f64,
    pub alpha_wrong: f64,
    pub iterations: usize,
    pub wrong_convention: WrongWeightConvention,
    /// Multiplies every accumulation weight. Has no effect on the binarized
    /// output for positive values; exposed for testing.
    pub scale: f64,
    /// Shuffle subjects with this seed before merging; `None` keeps input order.
    pub order_seed: Option<u64>,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            method: MergeMethod::WAddSub,
            alpha_corr: 1.0,
            alpha_wrong: 1.0,
            iterations: 1,
            wrong_convention: WrongWeightConvention::Distance,
            scale: 1.0,
            order_seed: None,
        }
    }
}

impl MergeConfig {
    pub fn with_method(method: MergeMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha_corr.is_finite() || !self.alpha_wrong.is_finite() {
            return Err(HdError::invalid("merge alphas must be finite"));
        }
        if self.iterations == 0 {
            return Err(HdError::invalid("iterations must be >= 1"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(HdError::invalid("weight scale must be positive"));
        }
        Ok(())
    }

    fn wrong_weight(&self, distance: f64) -> f64 {
        match self.wrong_convention {
            WrongWeightConvention::Distance => weight_wrong(distance, self.alpha_wrong),
            WrongWeightConvention::Similarity => self.alpha_wrong * (1.0 - distance),
        }
    }
}

/// Weight for adding a subject's correct-class vector.
pub fn weight_correct(hamm_dist_corr: f64, alpha: f64) -> f64 {
    alpha * (1.0 - hamm_dist_corr)
}

/// Weight for subtracting a subject's opposite-class vector.
pub fn weight_wrong(hamm_dist_wrong: f64, alpha: f64) -> f64 {
    alpha * hamm_dist_wrong
}

struct ClassState {
    acc: Accumulator,
    current: Hypervector,
}

/// Incremental merger: feed personalized models one at a time.
pub struct Generalizer {
    cfg: MergeConfig,
    tie: Hypervector,
    states: [ClassState; 2],
    merged: usize,
}

impl Generalizer {
    pub fn new(dim: usize, cfg: MergeConfig, tie_break_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let tie = tie_break_vector(tie_break_seed, dim)?;
        let state = || -> Result<ClassState> {
            Ok(ClassState {
                acc: Accumulator::new(dim)?,
                current: tie.clone(),
            })
        };
        Ok(Self {
            cfg,
            states: [state()?, state()?],
            tie,
            merged: 0,
        })
    }

    pub fn merged(&self) -> usize {
        self.merged
    }

    pub fn dim(&self) -> usize {
        self.tie.dim()
    }

    pub fn merge(&mut self, model: &ClassModel) -> Result<()> {
        check_dims(self.dim(), model.dim())?;
        let cfg = self.cfg;
        let first = self.merged == 0;
        for (state, target) in self
            .states
            .iter_mut()
            .zip([Class::Seizure, Class::NonSeizure])
        {
            let corr = model.vector(target);
            let wrong = model.vector(target.opposite());
            if first {
                state.acc.accumulate(corr, cfg.scale)?;
            } else {
                let d_corr = corr.hamming(&state.current)?;
                let d_wrong = wrong.hamming(&state.current)?;
                match cfg.method {
                    MergeMethod::Avrg => state.acc.accumulate(corr, cfg.scale)?,
                    MergeMethod::WSub => {
                        state.acc.accumulate(corr, cfg.scale)?;
                        state
                            .acc
                            .accumulate(wrong, -cfg.scale * cfg.wrong_weight(d_wrong))?;
                    }
                    MergeMethod::WAddSub => {
                        state
                            .acc
                            .accumulate(corr, cfg.scale * weight_correct(d_corr, cfg.alpha_corr))?;
                        state
                            .acc
                            .accumulate(wrong, -cfg.scale * cfg.wrong_weight(d_wrong))?;
                    }
                }
            }
            state.current = state.acc.normalize_with(&self.tie);
        }
        self.merged += 1;
        Ok(())
    }

    pub fn current(&self, class: Class) -> &Hypervector {
        match class {
            Class::Seizure => &self.states[0].current,
            Class::NonSeizure => &self.states[1].current,
        }
    }

    /// Binarized model; errors if a class accumulated non-positive total weight.
    pub fn finish(&self) -> Result<ClassModel> {
        if self.merged == 0 {
            return Err(HdError::invalid("no models merged"));
        }
        for (state, class) in self.states.iter().zip([Class::Seizure, Class::NonSeizure]) {
            if state.acc.total_weight() <= 0.0 {
                return Err(HdError::DegenerateCohort(format!(
                    "{} accumulator total weight {} is not positive",
                    class.name(),
                    state.acc.total_weight()
                )));
            }
        }
        ClassModel::new(
            self.states[0].current.clone(),
            self.states[1].current.clone(),
            ModelKind::Generalized,
        )
    }
}

fn ordered(cohort: &[ClassModel], order_seed: Option<u64>) -> Vec<&ClassModel> {
    let mut order: Vec<&ClassModel> = cohort.iter().collect();
    if let Some(seed) = order_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
}

fn check_cohort(cohort: &[ClassModel]) -> Result<usize> {
    let first = cohort
        .first()
        .ok_or_else(|| HdError::invalid("cannot generalize an empty cohort"))?;
    for m in cohort {
        check_dims(first.dim(), m.dim())?;
        if m.codebook_ref != first.codebook_ref {
            return Err(HdError::IncompatibleModels(format!(
                "codebooks {} and {} differ",
                first.codebook_ref, m.codebook_ref
            )));
        }
    }
    Ok(first.dim())
}

pub fn generalize(
    cohort: &[ClassModel],
    cfg: &MergeConfig,
    tie_break_seed: u64,
) -> Result<ClassModel> {
    let dim = check_cohort(cohort)?;
    let mut g = Generalizer::new(dim, *cfg, tie_break_seed)?;
    let order = ordered(cohort, cfg.order_seed);
    for _ in 0..cfg.iterations {
        for m in &order {
            g.merge(m)?;
        }
    }
    let mut out = g.finish()?;
    let cohorts: std::collections::BTreeSet<&str> =
        cohort.iter().map(|m| m.source_cohort.as_str()).collect();
    out.source_cohort = if cohorts.len() == 1 {
        cohort[0].source_cohort.clone()
    } else {
        "mixed".to_string()
    };
    out.codebook_ref = cohort[0].codebook_ref.clone();
    out.sources = order
        .iter()
        .map(|m| m.subject_id.clone().unwrap_or_else(|| m.describe()))
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionPoint {
    pub subjects_merged: usize,
    pub sim_ss: f64,
    pub sim_nsns: f64,
    pub sim_sns: f64,
    pub sim_nss: f64,
    pub separability: f64,
}

impl EvolutionPoint {
    fn stats(&self) -> [f64; 5] {
        [
            self.sim_ss,
            self.sim_nsns,
            self.sim_sns,
            self.sim_nss,
            self.separability,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub repetitions: Vec<Vec<EvolutionPoint>>,
    pub mean: Vec<EvolutionPoint>,
}

impl Evolution {
    pub fn plateau_onset(&self, tolerance: f64) -> Option<usize> {
        plateau_onset(&self.mean, tolerance)
    }
}

/// Merge the cohort one subject at a time in `repetitions` shuffled orders,
/// recording similarity of the running model to every personalized model.
/// Each repetition makes a single merging pass.
pub fn evolution_curve(
    cohort: &[ClassModel],
    cfg: &MergeConfig,
    repetitions: usize,
    seed: u64,
) -> Result<Evolution> {
    let dim = check_cohort(cohort)?;
    if cohort.len() < 2 {
        return Err(HdError::InsufficientData(
            "evolution curve needs at least 2 subjects".into(),
        ));
    }
    if repetitions == 0 {
        return Err(HdError::invalid("repetitions must be >= 1"));
    }
    cfg.validate()?;
    let curves = (0..repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Vec<EvolutionPoint>> {
            let mut order: Vec<&ClassModel> = cohort.iter().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            order.shuffle(&mut rng);
            let mut g = Generalizer::new(dim, *cfg, seed)?;
            let mut points = Vec::with_capacity(order.len());
            for m in order {
                g.merge(m)?;
                let s = g.current(Class::Seizure);
                let ns = g.current(Class::NonSeizure);
                let c = class_similarities(s, ns, cohort)?;
                points.push(EvolutionPoint {
                    subjects_merged: g.merged(),
                    sim_ss: c.ss,
                    sim_nsns: c.nsns,
                    sim_sns: c.sns,
                    sim_nss: c.nss,
                    separability: c.separability(),
                });
            }
            Ok(points)
        })
        .collect::<Result<Vec<_>>>()?;

    let steps = cohort.len();
    let r = repetitions as f64;
    let mean = (0..steps)
        .map(|i| {
            let avg =
                |f: fn(&EvolutionPoint) -> f64| curves.iter().map(|c| f(&c[i])).sum::<f64>() / r;
            EvolutionPoint {
                subjects_merged: i + 1,
                sim_ss: avg(|p| p.sim_ss),
                sim_nsns: avg(|p| p.sim_nsns),
                sim_sns: avg(|p| p.sim_sns),
                sim_nss: avg(|p| p.sim_nss),
                separability: avg(|p| p.separability),
            }
        })
        .collect();
    Ok(Evolution {
        repetitions: curves,
        mean,
    })
}

/// Smallest number of merged subjects after which no statistic moves by
/// `tolerance` or more between consecutive steps. `None` if the last step
/// still moves.
pub fn plateau_onset(curve: &[EvolutionPoint], tolerance: f64) -> Option<usize> {
    let moving = |i: usize| {
        curve[i - 1]
            .stats()
            .iter()
            .zip(curve[i].stats())
            .any(|(a, b)| (b - a).abs() >= tolerance)
    };
    match (1..curve.len()).rev().find(|&i| moving(i)) {
        None => curve.first().map(|p| p.subjects_merged),
        Some(i) if i + 1 == curve.len() => None,
        Some(i) => Some(curve[i].subjects_merged),
    }
}
