//! Inter-model similarity matrices, class separability and the Wilcoxon
//! signed-rank test.

use statrs::function::erf::erfc;

use crate::error::{check_dims, HdError, Result};
use crate::hypervector::Hypervector;
use crate::training::ClassModel;

/// Largest sample size for which Wilcoxon p-values are enumerated exactly.
pub const WILCOXON_EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrices {
    pub subjects: Vec<String>,
    pub s_to_s: Vec<Vec<f64>>,
    pub ns_to_ns: Vec<Vec<f64>>,
    /// `s_to_ns[i][j]` compares subject i's seizure vector to subject j's
    /// non-seizure vector; not symmetric.
    pub s_to_ns: Vec<Vec<f64>>,
}

impl SimilarityMatrices {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Off-diagonal samples over unordered pairs `i < j`, aligned so they can
    /// be compared pairwise: (S-S, NS-NS, S-NS). The S-NS entry of a pair is
    /// the mean of both cross directions.
    pub fn paired_offdiagonal(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut ss = Vec::new();
        let mut nsns = Vec::new();
        let mut sns = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                ss.push(self.s_to_s[i][j]);
                nsns.push(self.ns_to_ns[i][j]);
                sns.push(0.5 * (self.s_to_ns[i][j] + self.s_to_ns[j][i]));
            }
        }
        (ss, nsns, sns)
    }
}

fn label(m: &ClassModel, i: usize) -> String {
    m.subject_id.clone().unwrap_or_else(|| format!("model{i}"))
}

pub fn pairwise_matrices(cohort: &[ClassModel]) -> Result<SimilarityMatrices> {
    if cohort.len() < 2 {
        return Err(HdError::invalid(
            "similarity matrices need at least 2 models",
        ));
    }
    let dim = cohort[0].dim();
    for m in cohort {
        check_dims(dim, m.dim())?;
    }
    let n = cohort.len();
    let grid = |f: &dyn Fn(&ClassModel, &ClassModel) -> Result<f64>| -> Result<Vec<Vec<f64>>> {
        cohort
            .iter()
            .map(|a| cohort.iter().map(|b| f(a, b)).collect())
            .collect()
    };
    let s_to_s = grid(&|a, b| a.seizure.similarity(&b.seizure))?;
    let ns_to_ns = grid(&|a, b| a.non_seizure.similarity(&b.non_seizure))?;
    let s_to_ns = grid(&|a, b| a.seizure.similarity(&b.non_seizure))?;
    Ok(SimilarityMatrices {
        subjects: (0..n).map(|i| label(&cohort[i], i)).collect(),
        s_to_s,
        ns_to_ns,
        s_to_ns,
    })
}

/// Mean similarities of a (generalized) S/NS pair to a cohort of models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSimilarities {
    /// general S vs personal S
    pub ss: f64,
    /// general NS vs personal NS
    pub nsns: f64,
    /// general S vs personal NS
    pub sns: f64,
    /// general NS vs personal S
    pub nss: f64,
}

impl ClassSimilarities {
    pub fn correct(&self) -> f64 {
        0.5 * (self.ss + self.nsns)
    }

    pub fn opposite(&self) -> f64 {
        0.5 * (self.sns + self.nss)
    }

    pub fn separability(&self) -> f64 {
        self.correct() - self.opposite()
    }
}

pub fn class_similarities(
    seizure: &Hypervector,
    non_seizure: &Hypervector,
    cohort: &[ClassModel],
) -> Result<ClassSimilarities> {
    if cohort.is_empty() {
        return Err(HdError::invalid("empty cohort"));
    }
    let mut acc = [0.0f64; 4];
    for m in cohort {
        acc[0] += seizure.similarity(&m.seizure)?;
        acc[1] += non_seizure.similarity(&m.non_seizure)?;
        acc[2] += seizure.similarity(&m.non_seizure)?;
        acc[3] += non_seizure.similarity(&m.seizure)?;
    }
    let n = cohort.len() as f64;
    Ok(ClassSimilarities {
        ss: acc[0] / n,
        nsns: acc[1] / n,
        sns: acc[2] / n,
        nss: acc[3] / n,
    })
}

/// Correct-class minus opposite-class mean similarity.
pub fn separability(general: &ClassModel, cohort: &[ClassModel]) -> Result<f64> {
    class_similarities(&general.seizure, &general.non_seizure, cohort).map(|c| c.separability())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// min(T+, T-)
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub exact: bool,
}

/// Average ranks of `values` (1-based), doubled so they stay integral.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // positions i..=j share rank (i+1 + j+1)/2
        let doubled = (i + 1 + j + 1) as u64;
        for &k in &idx[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Paired two-sided signed-rank test.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(HdError::invalid(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(HdError::invalid("non-finite sample"));
    }
    if diffs.is_empty() {
        return Err(HdError::degenerate("all paired differences are zero"));
    }
    let n = diffs.len();
    if n < 5 {
        return Err(HdError::degenerate(format!(
            "only {n} non-zero differences, need at least 5"
        )));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let total: u64 = ranks.iter().sum();
    let t_plus: u64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let w2 = t_plus.min(total - t_plus);
    let statistic = w2 as f64 / 2.0;

    if n <= WILCOXON_EXACT_MAX_N {
        // counts[s] = number of sign assignments with doubled T+ == s
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        for &r in &ranks {
            for s in (r as usize..=total as usize).rev() {
                counts[s] += counts[s - r as usize];
            }
        }
        let tail: u64 = counts[..=w2 as usize].iter().sum();
        let p = (2.0 * tail as f64 / (1u64 << n) as f64).min(1.0);
        return Ok(WilcoxonResult {
            statistic,
            p_value: p,
            n,
            exact: true,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return Err(HdError::degenerate(
            "zero variance in signed-rank statistic",
        ));
    }
    let z = (statistic - mean) / var.sqrt();
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(WilcoxonResult {
        statistic,
        p_value: p,
        n,
        exact: false,
    })
}
