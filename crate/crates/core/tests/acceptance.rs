//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fail.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hdseiz::dataio::{generate_synthetic_cohort, synthetic_features, CohortSpec};
use hdseiz::evaluation::{
    bayes_postprocess, cohort_average, cv_personalized, duration_metrics, episode_metrics,
    generalized_from_cohort, moving_average_postprocess, personalized_cohort, transfer_eval,
    EvalConfig, EvalReport, Post, SubjectData, TransferMode, TransferSource,
};
use hdseiz::features::FeatureConfig;
use hdseiz::filter::SosFilter;
use hdseiz::generalization::{
    evolution_curve, generalize, weight_correct, weight_wrong, MergeConfig, MergeMethod,
};
use hdseiz::hybrid::{default_thresholds, sweep_selection, HybridMode, ScoreSelector};
use hdseiz::hypervector::{bundle, tie_break_vector, Accumulator, Hypervector, TIE_TOLERANCE};
use hdseiz::similarity::{class_similarities, pairwise_matrices, wilcoxon_signed_rank};
use hdseiz::training::{ClassModel, ModelKind};

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

// ---------- naive references ----------

fn rand_bits(rng: &mut ChaCha8Rng, dim: usize) -> Vec<bool> {
    (0..dim).map(|_| rng.random::<bool>()).collect()
}

fn hv(bits: &[bool]) -> Hypervector {
    Hypervector::from_bits(bits).unwrap()
}

fn naive_hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn naive_xor(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

/// Sign of per-dimension weighted bipolar sums; zero takes the tie bit.
fn naive_normalize(vs: &[Vec<bool>], weights: &[f64], tie: &[bool]) -> Vec<bool> {
    (0..tie.len())
        .map(|i| {
            let mut s = 0.0;
            for (v, w) in vs.iter().zip(weights) {
                s += if v[i] { *w } else { -*w };
            }
            if s > 0.0 {
                true
            } else if s < 0.0 {
                false
            } else {
                tie[i]
            }
        })
        .collect()
}

// ---------- criteria ----------

fn c1_kernels() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dims = [64usize, 128, 10_000];
    for case in 0..1000 {
        let dim = dims[case % dims.len()];
        let a = rand_bits(&mut rng, dim);
        let b = rand_bits(&mut rng, dim);
        let (ha, hb) = (hv(&a), hv(&b));
        let count = naive_hamming(&a, &b);
        ensure!(
            ha.hamming_count(&hb).unwrap() == count,
            "case {case}: hamming count"
        );
        ensure!(
            ha.hamming(&hb).unwrap() == count as f64 / dim as f64,
            "case {case}: normalized hamming"
        );
        ensure!(
            ha.bind(&hb).unwrap().to_bits() == naive_xor(&a, &b),
            "case {case}: bind"
        );

        let k = rng.random_range(1..=8usize);
        let vs: Vec<Vec<bool>> = (0..k).map(|_| rand_bits(&mut rng, dim)).collect();
        let seed = rng.random::<u64>();
        let tie = tie_break_vector(seed, dim).unwrap().to_bits();
        let hvs: Vec<Hypervector> = vs.iter().map(|v| hv(v)).collect();
        let ones = vec![1.0; k];
        ensure!(
            bundle(&hvs, seed).unwrap().to_bits() == naive_normalize(&vs, &ones, &tie),
            "case {case}: bundle of {k}"
        );

        // Integer-valued weights keep the reference sums exact.
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(-3i32..=3) as f64).collect();
        let mut acc = Accumulator::new(dim).unwrap();
        for (v, w) in hvs.iter().zip(&weights) {
            acc.accumulate(v, *w).unwrap();
        }
        ensure!(
            acc.normalize(seed).to_bits() == naive_normalize(&vs, &weights, &tie),
            "case {case}: weighted normalize"
        );
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(30), "took {t:?}");
    Ok(format!(
        "1000 cases at dims {dims:?} match, {:.1} s",
        t.as_secs_f64()
    ))
}

fn c2_orthogonality() -> Outcome {
    let mut sum = 0.0;
    let (mut lo, mut hi) = (1.0f64, 0.0f64);
    for i in 0..1000u64 {
        let a = Hypervector::random(2024, 2 * i, 10_000).unwrap();
        let b = Hypervector::random(2024, 2 * i + 1, 10_000).unwrap();
        let d = a.hamming(&b).unwrap();
        sum += d;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let mean = sum / 1000.0;
    ensure!((0.49..=0.51).contains(&mean), "mean {mean}");
    ensure!(lo >= 0.45 && hi <= 0.55, "range [{lo}, {hi}]");
    Ok(format!("mean {mean:.4}, range [{lo:.4}, {hi:.4}]"))
}

fn model_from_bits(s: &[bool], ns: &[bool]) -> ClassModel {
    ClassModel::new(hv(s), hv(ns), ModelKind::Personalized).unwrap()
}

/// Straight-line weighted merge over bit vectors. Sums within the tie
/// tolerance of the accumulated absolute weight count as ties.
fn reference_merge(
    cohort: &[(Vec<bool>, Vec<bool>)],
    method: MergeMethod,
    tie: &[bool],
) -> (Vec<bool>, Vec<bool>) {
    let dim = tie.len();
    let mut out = Vec::new();
    for class in 0..2 {
        let pick = |m: &(Vec<bool>, Vec<bool>), own: bool| -> Vec<bool> {
            if (class == 0) == own {
                m.0.clone()
            } else {
                m.1.clone()
            }
        };
        let mut sums = vec![0.0f64; dim];
        let mut abs_weight = 0.0f64;
        let mut current = tie.to_vec();
        for (idx, m) in cohort.iter().enumerate() {
            let corr = pick(m, true);
            let wrong = pick(m, false);
            let d_corr = naive_hamming(&corr, &current) as f64 / dim as f64;
            let d_wrong = naive_hamming(&wrong, &current) as f64 / dim as f64;
            let (wc, ww) = match (idx, method) {
                (0, _) | (_, MergeMethod::Avrg) => (1.0, 0.0),
                (_, MergeMethod::WSub) => (1.0, d_wrong),
                (_, MergeMethod::WAddSub) => (1.0 - d_corr, d_wrong),
            };
            for i in 0..dim {
                sums[i] += if corr[i] { wc } else { -wc };
                sums[i] -= if wrong[i] { ww } else { -ww };
            }
            abs_weight += wc + ww;
            let tol = TIE_TOLERANCE * abs_weight;
            current = sums
                .iter()
                .zip(tie)
                .map(|(&s, &t)| {
                    if s > tol {
                        true
                    } else if s < -tol {
                        false
                    } else {
                        t
                    }
                })
                .collect();
        }
        out.push(current);
    }
    let ns = out.pop().unwrap();
    (out.pop().unwrap(), ns)
}

fn c3_merge_rules() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let cases_c = [(0.0, 1.0, 1.0), (0.5, 1.0, 0.5), (1.0, 2.0, 0.0)];
    for (d, a, want) in cases_c {
        ensure!(
            close(weight_correct(d, a), want),
            "weight_correct({d}, {a})"
        );
    }
    let cases_w = [(0.0, 1.0, 0.0), (0.5, 1.0, 0.5), (1.0, 0.5, 0.5)];
    for (d, a, want) in cases_w {
        ensure!(close(weight_wrong(d, a), want), "weight_wrong({d}, {a})");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for trial in 0..50 {
        let one = model_from_bits(&rand_bits(&mut rng, 10_000), &rand_bits(&mut rng, 10_000));
        let g = generalize(
            std::slice::from_ref(&one),
            &MergeConfig::with_method(MergeMethod::Avrg),
            trial,
        )
        .unwrap();
        ensure!(
            g.seizure == one.seizure && g.non_seizure == one.non_seizure,
            "avrg identity, trial {trial}"
        );
    }

    let dim = 64;
    let mut checked = 0;
    for trial in 0..200u64 {
        let n = rng.random_range(2..=12usize);
        // Correlated classes so the weights vary across subjects.
        let base_s = rand_bits(&mut rng, dim);
        let base_ns = rand_bits(&mut rng, dim);
        let flip = |rng: &mut ChaCha8Rng, v: &[bool], p: f64| -> Vec<bool> {
            v.iter().map(|&b| b ^ (rng.random::<f64>() < p)).collect()
        };
        let cohort: Vec<(Vec<bool>, Vec<bool>)> = (0..n)
            .map(|_| {
                let p = rng.random_range(0.05..0.45);
                (flip(&mut rng, &base_s, p), flip(&mut rng, &base_ns, p))
            })
            .collect();
        let models: Vec<ClassModel> = cohort
            .iter()
            .map(|(s, ns)| model_from_bits(s, ns))
            .collect();
        let tie = tie_break_vector(trial, dim).unwrap().to_bits();
        for method in [MergeMethod::WSub, MergeMethod::WAddSub] {
            let (rs, rns) = reference_merge(&cohort, method, &tie);
            match generalize(&models, &MergeConfig::with_method(method), trial) {
                Ok(g) => {
                    ensure!(
                        g.seizure.to_bits() == rs,
                        "{method:?} trial {trial}: seizure vector"
                    );
                    ensure!(
                        g.non_seizure.to_bits() == rns,
                        "{method:?} trial {trial}: non-seizure vector"
                    );
                    checked += 1;
                }
                Err(e) => return Err(format!("{method:?} trial {trial}: {e}")),
            }
        }
    }
    Ok(format!(
        "weight closed forms, avrg identity x50, {checked} wsub/waddsub merges at dim 64 match"
    ))
}

struct BigCohort {
    models: Vec<ClassModel>,
    build: Duration,
}

fn big_cohort() -> &'static BigCohort {
    static CELL: OnceLock<BigCohort> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let spec = CohortSpec {
            channels: 4,
            seizure_sec_per_record: 30.0,
            non_seizure_sec_per_record: 30.0,
            ..CohortSpec::balanced(100)
        };
        let subjects = generate_synthetic_cohort(&spec).unwrap();
        let data = synthetic_features(&spec, &subjects, &FeatureConfig::default()).unwrap();
        let refs: Vec<&SubjectData> = data.iter().collect();
        let (_, models) = personalized_cohort(&refs, &EvalConfig::default()).unwrap();
        BigCohort {
            models,
            build: t.elapsed(),
        }
    })
}

fn c4_separability() -> Outcome {
    let t = Instant::now();
    let cohort = big_cohort();
    let mut sep = BTreeMap::new();
    let mut correct = BTreeMap::new();
    let mut msgs = Vec::new();
    for method in [MergeMethod::Avrg, MergeMethod::WSub, MergeMethod::WAddSub] {
        let stats = |iterations| {
            let cfg = MergeConfig {
                iterations,
                ..MergeConfig::with_method(method)
            };
            let g = generalize(&cohort.models, &cfg, 1).unwrap();
            class_similarities(&g.seizure, &g.non_seizure, &cohort.models).unwrap()
        };
        let one = stats(1);
        let two = stats(2);
        for (name, a, b) in [
            ("ss", one.ss, two.ss),
            ("nsns", one.nsns, two.nsns),
            ("sns", one.sns, two.sns),
            ("nss", one.nss, two.nss),
            ("separability", one.separability(), two.separability()),
        ] {
            ensure!(
                (a - b).abs() < 0.01,
                "{method:?} {name} moved {:.4} with iterations=2",
                (a - b).abs()
            );
        }
        sep.insert(method.as_str(), one.separability());
        correct.insert(method.as_str(), one.correct());
        msgs.push(format!(
            "{} sep {:.4} corr {:.4}",
            method.as_str(),
            one.separability(),
            one.correct()
        ));
    }
    ensure!(
        sep["waddsub"] >= sep["wsub"] && sep["wsub"] >= sep["avrg"],
        "separability order broken: {}",
        msgs.join(", ")
    );
    ensure!(
        correct["avrg"] >= correct["wsub"] && correct["avrg"] >= correct["waddsub"],
        "avrg not highest correct-class similarity: {}",
        msgs.join(", ")
    );
    // Includes building the shared cohort when this criterion runs first.
    let total = t.elapsed().max(cohort.build);
    ensure!(total < Duration::from_secs(300), "took {total:?}");
    Ok(format!(
        "{}; iterations=2 deltas < 0.01; {:.0} s",
        msgs.join(", "),
        total.as_secs_f64()
    ))
}

fn c5_plateau() -> Outcome {
    let cohort = big_cohort();
    let mut onsets = Vec::new();
    for seed in [1u64, 2, 3] {
        let evo = evolution_curve(&cohort.models, &MergeConfig::default(), 10, seed).unwrap();
        match evo.plateau_onset(0.005) {
            Some(n) if n < 100 => onsets.push(n),
            other => return Err(format!("seed {seed}: plateau onset {other:?}")),
        }
    }
    let (lo, hi) = (*onsets.iter().min().unwrap(), *onsets.iter().max().unwrap());
    ensure!(hi - lo <= 10, "onsets {onsets:?} spread more than 10");
    Ok(format!(
        "plateau onset N = {onsets:?} over seeds 1..3 (10 shuffles each)"
    ))
}

/// Two-sided exact p-value by enumerating all sign assignments.
fn enumerated_wilcoxon_p(x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    // average ranks, doubled
    let rank2: Vec<u64> = abs
        .iter()
        .map(|&a| {
            let below = abs.iter().filter(|&&b| b < a).count() as u64;
            let equal = abs.iter().filter(|&&b| b == a).count() as u64;
            2 * below + equal + 1
        })
        .collect();
    let total: u64 = rank2.iter().sum();
    let t_plus: u64 = rank2
        .iter()
        .zip(&d)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, _)| r)
        .sum();
    let w = t_plus.min(total - t_plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let t: u64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| rank2[i])
            .sum();
        if t <= w {
            hits += 1;
        }
    }
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

fn c6_similarity_ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for trial in 0..500 {
        let n = rng.random_range(5..=10usize);
        // Coarse values so ties in |d| occur.
        let x: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-4i32..=4) as f64 * 0.25)
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-4i32..=4) as f64 * 0.25)
            .collect();
        let nonzero = x.iter().zip(&y).filter(|(a, b)| a != b).count();
        let got = wilcoxon_signed_rank(&x, &y);
        if nonzero < 5 {
            ensure!(
                got.is_err(),
                "trial {trial}: expected a degenerate-input error"
            );
            continue;
        }
        let got = got.map_err(|e| format!("trial {trial}: {e}"))?;
        let want = enumerated_wilcoxon_p(&x, &y);
        ensure!(
            got.exact && got.p_value == want,
            "trial {trial}: p {} vs enumeration {want}",
            got.p_value
        );
    }

    let cohort = big_cohort();
    let mats = pairwise_matrices(&cohort.models).unwrap();
    let (ss, nsns, sns) = mats.paired_offdiagonal();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m_ss, m_nsns, m_sns) = (mean(&ss), mean(&nsns), mean(&sns));
    ensure!(
        m_nsns > m_ss && m_ss > m_sns,
        "means NS-NS {m_nsns:.4}, S-S {m_ss:.4}, S-NS {m_sns:.4}"
    );
    let mut ps = Vec::new();
    for (name, a, b) in [
        ("NSNS/SS", &nsns, &ss),
        ("SS/SNS", &ss, &sns),
        ("NSNS/SNS", &nsns, &sns),
    ] {
        let p = wilcoxon_signed_rank(a, b)
            .map_err(|e| e.to_string())?
            .p_value;
        ensure!(p < 0.01, "{name} p = {p}");
        ps.push(format!("{name} p={p:.1e}"));
    }
    Ok(format!(
        "NS-NS {m_nsns:.4} > S-S {m_ss:.4} > S-NS {m_sns:.4} ({}); exact Wilcoxon matches enumeration",
        ps.join(", ")
    ))
}

fn rand_labels(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    // Runs of random length so episodes vary in size.
    let mut out = Vec::with_capacity(len);
    let mut v = rng.random::<bool>();
    while out.len() < len {
        let run = rng.random_range(1..=6usize);
        out.extend(std::iter::repeat_n(u8::from(v), run.min(len - out.len())));
        v = !v;
    }
    out
}

fn oracle_runs(seq: &[u8]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < seq.len() {
        if seq[i] == 1 {
            let s = i;
            while i + 1 < seq.len() && seq[i + 1] == 1 {
                i += 1;
            }
            runs.push((s, i));
        }
        i += 1;
    }
    runs
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(tpr: f64, ppv: f64) -> f64 {
    if tpr + ppv == 0.0 {
        0.0
    } else {
        2.0 * tpr * ppv / (tpr + ppv)
    }
}

fn c7_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for case in 0..1000 {
        let len = rng.random_range(1..=80usize);
        let pred = rand_labels(&mut rng, len);
        let truth = rand_labels(&mut rng, len);

        let tp = (0..len).filter(|&i| pred[i] == 1 && truth[i] == 1).count();
        let fp = (0..len).filter(|&i| pred[i] == 1 && truth[i] == 0).count();
        let fnn = (0..len).filter(|&i| pred[i] == 0 && truth[i] == 1).count();
        let (tpr, ppv) = (ratio(tp, tp + fnn), ratio(tp, tp + fp));
        let d = duration_metrics(&pred, &truth).unwrap();
        ensure!(
            (d.tpr, d.ppv, d.f1) == (tpr, ppv, f1(tpr, ppv)),
            "case {case}: duration {d:?}"
        );

        let pr = oracle_runs(&pred);
        let tr = oracle_runs(&truth);
        let hit = |(s, e): (usize, usize), other: &[u8]| (s..=e).any(|i| other[i] == 1);
        let detected = tr.iter().filter(|r| hit(**r, &pred)).count();
        let matched = pr.iter().filter(|r| hit(**r, &truth)).count();
        let (tpr, ppv) = (ratio(detected, tr.len()), ratio(matched, pr.len()));
        let e = episode_metrics(&pred, &truth).unwrap();
        ensure!(
            (e.tpr, e.ppv, e.f1) == (tpr, ppv, f1(tpr, ppv)),
            "case {case}: episode {e:?}"
        );

        let p: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let (win, step, thr) = (
            rng.random_range(1..=8) as f64 * 0.5,
            0.5,
            rng.random_range(0.5..3.0),
        );
        let n = (win / step).ceil() as usize;
        let want: Vec<u8> = (0..len)
            .map(|i| {
                let mut s = 0.0;
                for &v in &p[i.saturating_sub(n - 1)..=i] {
                    let v = v.clamp(1e-6, 1.0 - 1e-6);
                    s += (v / (1.0 - v)).ln();
                }
                u8::from(s >= f64::ln(thr))
            })
            .collect();
        ensure!(
            bayes_postprocess(&p, win, thr, step).unwrap() == want,
            "case {case}: bayes"
        );

        let want: Vec<u8> = (0..len)
            .map(|i| {
                let (mut ones, mut count) = (0, 0);
                for j in 0..len {
                    // window covers i - (n-1)/2 ..= i + n/2
                    if j + (n - 1) / 2 >= i && j <= i + n / 2 {
                        count += 1;
                        ones += usize::from(pred[j] == 1);
                    }
                }
                u8::from(2 * ones > count)
            })
            .collect();
        ensure!(
            moving_average_postprocess(&pred, win, step).unwrap() == want,
            "case {case}: moving average"
        );
    }
    Ok(
        "episode/duration metrics and bayes/moving-average match references on 1000 sequences"
            .into(),
    )
}

fn mean_metric(reports: &[EvalReport], key: &str) -> f64 {
    cohort_average(reports)[key]
}

fn c8_end_to_end() -> Outcome {
    let t = Instant::now();
    let spec = CohortSpec::balanced(20);
    let subjects = generate_synthetic_cohort(&spec).unwrap();
    let data = synthetic_features(&spec, &subjects, &FeatureConfig::default()).unwrap();
    let cfg = EvalConfig::default();
    let run = |cfg: &EvalConfig| -> Vec<EvalReport> {
        data.iter()
            .map(|s| cv_personalized(s, cfg).unwrap())
            .collect()
    };
    let real = run(&cfg);
    let shuffled = run(&EvalConfig {
        shuffle_labels: Some(7),
        ..cfg
    });
    let (f1e, f1d) = (
        mean_metric(&real, "episode.raw.f1"),
        mean_metric(&real, "duration.raw.f1"),
    );
    let f1d_shuf = mean_metric(&shuffled, "duration.raw.f1");
    let elapsed = t.elapsed();
    let detail = format!(
        "F1E {f1e:.3}, F1D {f1d:.3}, shuffled F1D {f1d_shuf:.3} (drop {:.3}), {:.0} s",
        f1d - f1d_shuf,
        elapsed.as_secs_f64()
    );
    ensure!(f1e >= 0.9 && f1d >= 0.8, "{detail}");
    ensure!(f1d - f1d_shuf >= 0.3, "{detail}");
    ensure!(elapsed < Duration::from_secs(600), "{detail}");
    Ok(detail)
}

fn c9_transfer() -> Outcome {
    let base = CohortSpec {
        channels: 4,
        seizure_sec_per_record: 30.0,
        non_seizure_sec_per_record: 30.0,
        seizure_amp_gain: 2.0,
        ..CohortSpec::balanced(10)
    };
    let src_spec = CohortSpec {
        name: "src".into(),
        seizure_freq_range: (3.0, 5.0),
        seed: 11,
        ..base.clone()
    };
    let tgt_spec = CohortSpec {
        name: "tgt".into(),
        seizure_freq_range: (12.0, 16.0),
        seed: 12,
        ..base
    };
    let fc = FeatureConfig::default();
    let load = |s: &CohortSpec| {
        synthetic_features(s, &generate_synthetic_cohort(s).unwrap(), &fc).unwrap()
    };
    let (src, tgt) = (load(&src_spec), load(&tgt_spec));
    let cfg = EvalConfig::default();
    let model = generalized_from_cohort(&src, None, &cfg).unwrap();
    let gen = transfer_eval(
        TransferSource::Model(&model),
        &tgt,
        TransferMode::Generalized,
        &cfg,
    )
    .unwrap();
    let hyb = transfer_eval(
        TransferSource::Model(&model),
        &tgt,
        TransferMode::Hybrid(HybridMode::NsGenSPers),
        &cfg,
    )
    .unwrap();
    let (tpr_gen, tpr_hyb) = (
        mean_metric(&gen, "duration.raw.tpr"),
        mean_metric(&hyb, "duration.raw.tpr"),
    );
    ensure!(
        tpr_hyb - tpr_gen > 0.1,
        "duration TPR generalized {tpr_gen:.3}, NSgen-Spers {tpr_hyb:.3}"
    );

    let pers: Vec<EvalReport> = tgt
        .iter()
        .map(|s| cv_personalized(s, &cfg).unwrap())
        .collect();
    let mut points = 0;
    for post in Post::ALL {
        for selector in [ScoreSelector::F1e, ScoreSelector::F1d, ScoreSelector::Gmean] {
            let curve =
                sweep_selection(&gen, &pers, &default_thresholds(20), selector, post).unwrap();
            for p in &curve.points {
                ensure!(
                    p.mean_f1e <= curve.oracle_f1e && p.mean_f1d <= curve.oracle_f1d,
                    "{post:?}/{selector:?} threshold {} exceeds the oracle",
                    p.threshold
                );
                points += 1;
            }
        }
    }
    Ok(format!(
        "duration TPR generalized {tpr_gen:.3} -> NSgen-Spers {tpr_hyb:.3} (+{:.3}); oracle dominates {points} points",
        tpr_hyb - tpr_gen
    ))
}

fn run_cli(args: &[&str], config: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hdseiz"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

fn collect_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c10_determinism() -> Outcome {
    let mut snapshots = Vec::new();
    let mut dirs = Vec::new();
    for jobs in ["1", "2"] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let root = dir.path();
        let conf = root.join("run.conf");
        std::fs::write(
            &conf,
            format!("dim = 2048\nsubjects = 4\nchannels = 3\nseizure_sec = 20\nnon_seizure_sec = 30\njobs = {jobs}\n"),
        )
        .unwrap();
        let p = |s: &str| root.join(s).to_string_lossy().into_owned();
        let (cohort, models, reports, gen, evo) = (
            p("cohort"),
            p("models"),
            p("reports"),
            p("gen.hdcm"),
            p("evo.csv"),
        );
        run_cli(&["synth", "--out", &cohort], &conf)?;
        run_cli(&["features", "--cohort", &cohort], &conf)?;
        run_cli(&["train", "--cohort", &cohort, "--out", &models], &conf)?;
        run_cli(&["generalize", "--models", &models, "--out", &gen], &conf)?;
        run_cli(&["evolution", "--models", &models, "--out", &evo], &conf)?;
        run_cli(
            &[
                "eval",
                "--cohort",
                &cohort,
                "--out",
                &reports,
                "--emit-curves",
            ],
            &conf,
        )?;
        std::fs::remove_file(&conf).unwrap();
        snapshots.push(collect_files(root));
        dirs.push(dir);
    }
    let (a, b) = (&snapshots[0], &snapshots[1]);
    ensure!(a.keys().eq(b.keys()), "different file sets");
    for (name, bytes) in a {
        ensure!(bytes == &b[name], "{name} differs between runs");
    }
    let n_models = a.keys().filter(|k| k.ends_with(".hdcm")).count();
    Ok(format!(
        "{} files ({n_models} models) byte-identical across two runs (jobs 1 vs 2)",
        a.len()
    ))
}

fn c11_filter() -> Outcome {
    let fs = 256.0;
    let bp = SosFilter::butter_bandpass(4, 1.0, 20.0, fs).unwrap();
    let tone = |f: f64| -> Vec<f64> {
        (0..(fs as usize * 20))
            .map(|i| (std::f64::consts::TAU * f * i as f64 / fs).sin())
            .collect()
    };
    // Steady-state amplitude, edges excluded.
    let amplitude = |y: &[f64]| {
        let mid = &y[y.len() / 4..3 * y.len() / 4];
        mid.iter().map(|v| v * v).sum::<f64>().sqrt() / (mid.len() as f64 / 2.0).sqrt()
    };
    let a10 = amplitude(&bp.filtfilt(&tone(10.0)).unwrap());
    let a40 = amplitude(&bp.filtfilt(&tone(40.0)).unwrap());
    let att_db = -20.0 * a40.log10();
    ensure!((a10 - 1.0).abs() <= 0.05, "10 Hz amplitude {a10}");
    ensure!(att_db > 20.0, "40 Hz attenuation {att_db:.1} dB");

    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let x: Vec<f64> = (0..4096).map(|_| rng.random_range(-100.0..100.0)).collect();
    let mut rev = x.clone();
    rev.reverse();
    let mut y_rev = bp.filtfilt(&rev).unwrap();
    y_rev.reverse();
    let y = bp.filtfilt(&x).unwrap();
    let worst = y
        .iter()
        .zip(&y_rev)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure!(worst <= 1e-9, "reverse symmetry error {worst:e}");
    Ok(format!(
        "10 Hz gain {a10:.4}, 40 Hz attenuation {att_db:.1} dB, reverse symmetry {worst:.1e}"
    ))
}

fn main() {
    let criteria: [(&str, Criterion); 11] = [
        ("hypervector kernel oracles", c1_kernels),
        ("orthogonality statistics", c2_orthogonality),
        ("merge weights and reference merge", c3_merge_rules),
        ("merge method separability", c4_separability),
        ("evolution plateau", c5_plateau),
        ("class similarity ordering", c6_similarity_ordering),
        ("metric and postprocessing oracles", c7_metric_oracles),
        ("end-to-end separable benchmark", c8_end_to_end),
        ("hybrid transfer and oracle selection", c9_transfer),
        ("CLI determinism", c10_determinism),
        ("filter correctness", c11_filter),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| x == &id || name.contains(x.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} [{secs:.1} s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{secs:.1} s]: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
