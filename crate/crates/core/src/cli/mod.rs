//! The `hdseiz` command line.

mod settings;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

pub use settings::{Settings, KEYS, SWITCHES};

use crate::dataio::{
    self, evolution_csv, generate_synthetic_cohort, load_feature_cohort, load_model, read_record,
    read_reports, reports_csv, save_model, selection_csv, signal_files, write_cohort,
    write_features, write_json, write_matrices, write_reports, write_text, FEATURE_SUFFIX,
};
use crate::error::{ErrorCategory, HdError, Result};
use crate::evaluation::{
    cohort_average, cv_generalized, cv_personalized, generalized_from_cohort, personalized_cohort,
    transfer_eval, EvalReport, Post, SubjectData, TransferMode, TransferSource,
};
use crate::features::extract_features;
use crate::generalization::{evolution_curve, generalize};
use crate::hybrid::{
    compose_hybrid, default_thresholds, sweep_selection, HybridMode, ScoreSelector,
};
use crate::similarity::{pairwise_matrices, wilcoxon_signed_rank};
use crate::training::{ModelKind, TrainedModel};

pub const USAGE_EXIT: i32 = 2;

const COMMANDS: &[(&str, &str)] = &[
    ("synth", "generate a synthetic cohort (--out DIR)"),
    ("features", "extract window features for every record (--cohort DIR [--out DIR])"),
    ("train", "train models from features (--cohort DIR --out DIR --mode personalized|generalized)"),
    ("generalize", "merge personalized model files (--models DIR --out FILE --method M)"),
    ("evolution", "model evolution curve as subjects are merged (--models DIR --out CSV)"),
    ("similarity", "inter-subject similarity matrices and tests (--models DIR --out DIR)"),
    ("hybrid", "selection sweep (--gen-reports --pers-reports --out CSV) or hybrid model (--model --source --out)"),
    ("eval", "cross-validated evaluation (--cohort DIR --out DIR [--emit-curves])"),
    ("transfer", "apply a source model or cohort to a target cohort (--source --target --out)"),
];

fn command() -> Command {
    let mut cmd = Command::new("hdseiz")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Hyperdimensional-computing seizure detection")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .global(true)
                .value_name("FILE")
                .help("key = value settings file; flags override it"),
        );
    for (key, default, help) in KEYS {
        let long = key.replace('_', "-");
        let help = if default.is_empty() {
            help.to_string()
        } else {
            format!("{help} [default: {default}]")
        };
        let arg = Arg::new(*key).long(long).global(true).help(help);
        let arg = if SWITCHES.contains(key) {
            arg.action(ArgAction::SetTrue)
        } else {
            arg.value_name("VALUE")
        };
        cmd = cmd.arg(arg);
    }
    for (name, about) in COMMANDS {
        cmd = cmd.subcommand(Command::new(*name).about(*about));
    }
    cmd
}

fn settings_from(m: &ArgMatches) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = m.get_one::<String>("config") {
        s.apply_config_file(Path::new(path))?;
    }
    for (key, _, _) in KEYS {
        if SWITCHES.contains(key) {
            if m.get_flag(key) {
                s.set(key, "true")?;
            }
        } else if let Some(v) = m.get_one::<String>(key) {
            s.set(key, v)?;
        }
    }
    Ok(s)
}

/// Run the CLI; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        settings_from(sub).and_then(|s| {
            s.validate()?;
            let jobs: usize = s.get("jobs")?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| HdError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
            pool.install(|| dispatch(name, &s))
        })
    }));
    let result = match result {
        Ok(r) => r,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unexpected failure".into());
            eprintln!("{}: {msg}", ErrorCategory::Internal.label());
            return ErrorCategory::Internal.exit_code();
        }
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            let cat = e.category();
            eprintln!("{}: {e}", cat.label());
            cat.exit_code()
        }
    }
}

fn dispatch(name: &str, s: &Settings) -> Result<String> {
    match name {
        "synth" => synth(s),
        "features" => features(s),
        "train" => train(s),
        "generalize" => generalize_cmd(s),
        "evolution" => evolution(s),
        "similarity" => similarity(s),
        "hybrid" => hybrid(s),
        "eval" => eval(s),
        "transfer" => transfer(s),
        other => Err(HdError::Config(format!("unknown command '{other}'"))),
    }
}

fn synth(s: &Settings) -> Result<String> {
    let spec = s.cohort()?;
    let out = s.path("out")?;
    let subjects = generate_synthetic_cohort(&spec)?;
    write_cohort(&spec, &subjects, &out)?;
    Ok(format!(
        "synth: wrote {} records for {} subjects to {}",
        subjects.iter().map(|x| x.records.len()).sum::<usize>(),
        subjects.len(),
        out.display()
    ))
}

fn features(s: &Settings) -> Result<String> {
    let cfg = s.features()?;
    let cohort = s.path("cohort")?;
    let out = s.path_opt("out")?.unwrap_or_else(|| cohort.clone());
    if out != cohort {
        let manifest = cohort.join(dataio::COHORT_MANIFEST);
        if manifest.exists() {
            let text = std::fs::read_to_string(&manifest).map_err(|e| HdError::io(&manifest, e))?;
            write_text(&out.join(dataio::COHORT_MANIFEST), &text)?;
        }
    }
    let mut n = 0;
    for (subject, files) in signal_files(&cohort)? {
        for f in files {
            let rec = read_record(&f)?;
            let fm = extract_features(&rec, &cfg)?;
            let dest = out
                .join(&subject)
                .join(format!("{}{FEATURE_SUFFIX}", rec.record_id));
            write_features(&fm, &dest)?;
            n += 1;
        }
    }
    Ok(format!(
        "features: wrote {n} feature files ({} features per channel) to {}",
        cfg.features_per_channel(),
        out.display()
    ))
}

fn model_mode(s: &Settings) -> Result<ModelKind> {
    match s.raw("mode") {
        "personalized" => Ok(ModelKind::Personalized),
        "generalized" => Ok(ModelKind::Generalized),
        other => Err(HdError::Config(format!(
            "unknown mode '{other}' (personalized | generalized)"
        ))),
    }
}

fn model_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.hdcm"))
}

fn train(s: &Settings) -> Result<String> {
    let cfg = s.eval()?;
    let cohort = load_feature_cohort(&s.path("cohort")?)?;
    let out = s.path("out")?;
    match model_mode(s)? {
        ModelKind::Personalized => {
            let refs: Vec<&SubjectData> = cohort.iter().collect();
            let (codebooks, models) = personalized_cohort(&refs, &cfg)?;
            for m in &models {
                let id = m.subject_id.clone().unwrap_or_default();
                save_model(
                    &TrainedModel {
                        model: m.clone(),
                        codebooks: codebooks.clone(),
                    },
                    &model_file(&out, &id),
                )?;
            }
            Ok(format!(
                "train: wrote {} personalized models (encoder {}) to {}",
                models.len(),
                codebooks.fingerprint(),
                out.display()
            ))
        }
        _ => {
            let m = generalized_from_cohort(&cohort, None, &cfg)?;
            let path = model_file(&out, "generalized");
            save_model(&m, &path)?;
            Ok(format!(
                "train: wrote generalized model from {} subjects ({}) to {}",
                cohort.len(),
                cfg.merge.method.as_str(),
                path.display()
            ))
        }
    }
}

/// Load every `.hdcm` file in a directory (sorted) and check they share an encoder.
fn load_models(dir: &Path) -> Result<Vec<TrainedModel>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HdError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "hdcm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(HdError::InsufficientData(format!(
            "no .hdcm model files in {}",
            dir.display()
        )));
    }
    let models = paths
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<Vec<_>>>()?;
    let first = &models[0].codebooks;
    if let Some(bad) = models
        .iter()
        .find(|m| !m.codebooks.compatible_with(first) || m.codebooks.ranges() != first.ranges())
    {
        return Err(HdError::IncompatibleModels(format!(
            "model {} uses a different encoder",
            bad.model.describe()
        )));
    }
    Ok(models)
}

fn generalize_cmd(s: &Settings) -> Result<String> {
    let merge = s.merge()?;
    let models = load_models(&s.path("models")?)?;
    let out = s.path("out")?;
    let class_models: Vec<_> = models.iter().map(|m| m.model.clone()).collect();
    let g = generalize(&class_models, &merge, s.get("seed")?)?;
    let trained = TrainedModel {
        model: g,
        codebooks: models[0].codebooks.clone(),
    };
    save_model(&trained, &out)?;
    Ok(format!(
        "generalize: merged {} models with {} into {}",
        models.len(),
        merge.method.as_str(),
        out.display()
    ))
}

fn evolution(s: &Settings) -> Result<String> {
    let merge = s.merge()?;
    let models: Vec<_> = load_models(&s.path("models")?)?
        .into_iter()
        .map(|m| m.model)
        .collect();
    let out = s.path("out")?;
    let evo = evolution_curve(&models, &merge, s.get("repetitions")?, s.get("seed")?)?;
    write_text(&out, &evolution_csv(&evo.mean))?;
    let tol: f64 = s.get("plateau_tolerance")?;
    let onset = evo
        .plateau_onset(tol)
        .map_or_else(|| "not reached".to_string(), |n| n.to_string());
    Ok(format!(
        "evolution: {} subjects x {} orders, plateau onset {onset}, curve in {}",
        models.len(),
        evo.repetitions.len(),
        out.display()
    ))
}

#[derive(serde::Serialize)]
#[serde(rename_all = "camelCase")]
struct SimilaritySummary {
    subjects: usize,
    mean_ns_ns: f64,
    mean_s_s: f64,
    mean_s_ns: f64,
    p_ns_ns_vs_s_s: f64,
    p_s_s_vs_s_ns: f64,
    p_ns_ns_vs_s_ns: f64,
}

fn similarity(s: &Settings) -> Result<String> {
    let models: Vec<_> = load_models(&s.path("models")?)?
        .into_iter()
        .map(|m| m.model)
        .collect();
    let out = s.path("out")?;
    let mats = pairwise_matrices(&models)?;
    write_matrices(&mats, &out)?;
    let (ss, nsns, sns) = mats.paired_offdiagonal();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let p = |a: &[f64], b: &[f64]| wilcoxon_signed_rank(a, b).map(|r| r.p_value).unwrap_or(1.0);
    let summary = SimilaritySummary {
        subjects: mats.len(),
        mean_ns_ns: mean(&nsns),
        mean_s_s: mean(&ss),
        mean_s_ns: mean(&sns),
        p_ns_ns_vs_s_s: p(&nsns, &ss),
        p_s_s_vs_s_ns: p(&ss, &sns),
        p_ns_ns_vs_s_ns: p(&nsns, &sns),
    };
    write_json(&summary, &out.join("summary.json"))?;
    Ok(format!(
        "similarity: NS-NS {:.4}, S-S {:.4}, S-NS {:.4} over {} subjects, written to {}",
        summary.mean_ns_ns,
        summary.mean_s_s,
        summary.mean_s_ns,
        summary.subjects,
        out.display()
    ))
}

fn hybrid(s: &Settings) -> Result<String> {
    let out = s.path("out")?;
    if let (Some(gen), Some(pers)) = (s.path_opt("gen_reports")?, s.path_opt("pers_reports")?) {
        let curves = selection_curves(s, &read_reports(&gen)?, &read_reports(&pers)?)?;
        write_text(&out, &curves)?;
        return Ok(format!(
            "hybrid: selection sweep written to {}",
            out.display()
        ));
    }
    let pers = load_model(&s.path("model")?)?;
    let gen = load_model(&s.path("source")?)?;
    if !pers.codebooks.compatible_with(&gen.codebooks) {
        return Err(HdError::IncompatibleModels(
            "personalized and generalized encoders differ".into(),
        ));
    }
    let mode: HybridMode = s.raw("hybrid_mode").parse()?;
    let model = compose_hybrid(&pers.model, &gen.model, mode)?;
    save_model(
        &TrainedModel {
            model,
            codebooks: pers.codebooks,
        },
        &out,
    )?;
    Ok(format!(
        "hybrid: wrote {} model to {}",
        mode.as_str(),
        out.display()
    ))
}

/// Selection sweeps for raw and postprocessed scores, one CSV with a `post` column.
fn selection_curves(s: &Settings, gen: &[EvalReport], pers: &[EvalReport]) -> Result<String> {
    let selector: ScoreSelector = s.raw("selector").parse()?;
    let thresholds = default_thresholds(s.get("threshold_steps")?);
    let mut out = String::new();
    for post in Post::ALL {
        let curve = sweep_selection(gen, pers, &thresholds, selector, post)?;
        for (i, line) in selection_csv(&curve).lines().enumerate() {
            if i == 0 {
                if post == Post::Raw {
                    out.push_str(&format!("post,{line}\n"));
                }
            } else {
                out.push_str(&format!("{},{line}\n", post.as_str()));
            }
        }
    }
    Ok(out)
}

fn write_report_set(reports: &[EvalReport], dir: &Path, stem: &str) -> Result<()> {
    write_reports(reports, &dir.join(format!("{stem}.json")))?;
    write_text(&dir.join(format!("{stem}.csv")), &reports_csv(reports))?;
    write_json(
        &cohort_average(reports),
        &dir.join(format!("{stem}_average.json")),
    )
}

fn eval(s: &Settings) -> Result<String> {
    let cfg = s.eval()?;
    let cohort = load_feature_cohort(&s.path("cohort")?)?;
    let out = s.path("out")?;
    let mode = model_mode(s)?;
    let emit = s.flag("emit_curves")?;

    let personal = |c: &[SubjectData]| -> Result<Vec<EvalReport>> {
        c.iter().map(|sub| cv_personalized(sub, &cfg)).collect()
    };
    let (reports, stem) = match mode {
        ModelKind::Personalized => (personal(&cohort)?, "personalized"),
        _ => (cv_generalized(&cohort, &cfg)?, "generalized"),
    };
    write_report_set(&reports, &out, stem)?;
    let avg = cohort_average(&reports);
    let mut summary = format!(
        "eval: {stem} over {} subjects, F1E {:.3}, F1D {:.3}",
        reports.len(),
        avg.get("episode.raw.f1").copied().unwrap_or(f64::NAN),
        avg.get("duration.raw.f1").copied().unwrap_or(f64::NAN)
    );

    if emit {
        let (gen, pers) = match mode {
            ModelKind::Personalized => (cv_generalized(&cohort, &cfg)?, reports),
            _ => (reports, personal(&cohort)?),
        };
        let other = if mode == ModelKind::Personalized {
            (&gen, "generalized")
        } else {
            (&pers, "personalized")
        };
        write_report_set(other.0, &out, other.1)?;
        write_text(
            &out.join("selection.csv"),
            &selection_curves(s, &gen, &pers)?,
        )?;

        let refs: Vec<&SubjectData> = cohort.iter().collect();
        let (_, models) = personalized_cohort(&refs, &cfg)?;
        let evo = evolution_curve(&models, &cfg.merge, s.get("repetitions")?, s.get("seed")?)?;
        write_text(&out.join("evolution.csv"), &evolution_csv(&evo.mean))?;
        summary.push_str(", curves written");
    }
    Ok(format!("{summary}; reports in {}", out.display()))
}

fn transfer(s: &Settings) -> Result<String> {
    let cfg = s.eval()?;
    let target = load_feature_cohort(&s.path("target")?)?;
    let out = s.path("out")?;
    let mode: TransferMode = s.raw("transfer_mode").parse()?;
    let source = s.path("source")?;
    let reports = if source.is_dir() {
        let src = load_feature_cohort(&source)?;
        transfer_eval(TransferSource::Cohort(&src), &target, mode, &cfg)?
    } else {
        let m = load_model(&source)?;
        transfer_eval(TransferSource::Model(&m), &target, mode, &cfg)?
    };
    let stem = format!("transfer_{}", mode.label().replace(':', "_"));
    write_report_set(&reports, &out, &stem)?;
    let avg = cohort_average(&reports);
    Ok(format!(
        "transfer: {} over {} target subjects, duration TPR {:.3}, F1D {:.3}; reports in {}",
        mode.label(),
        reports.len(),
        avg.get("duration.raw.tpr").copied().unwrap_or(f64::NAN),
        avg.get("duration.raw.f1").copied().unwrap_or(f64::NAN),
        out.display()
    ))
}
