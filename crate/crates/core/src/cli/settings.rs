//! Key-value settings shared by the config file and command-line flags.
//!
//! Every key `foo_bar` can be given as `foo_bar = value` in the config file or
//! as `--foo-bar value` on the command line; flags win.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataio::CohortSpec;
use crate::encoding::EncoderConfig;
use crate::error::{HdError, Result};
use crate::evaluation::{EvalConfig, PostprocessConfig};
use crate::features::FeatureConfig;
use crate::generalization::{MergeConfig, MergeMethod, WrongWeightConvention};
use crate::hypervector::MIN_DIM;
use crate::training::{TrainConfig, TrainMode};

/// `(key, default, help)`; an empty default means unset.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "seed",
        "1",
        "seed for codebooks, tie-breaking and synthetic data",
    ),
    ("dim", "10000", "hypervector dimension"),
    ("levels", "20", "quantization levels per feature"),
    ("jobs", "0", "worker threads (0 = all cores)"),
    ("fs", "256", "sampling rate of synthetic records (Hz)"),
    ("window_sec", "4", "feature window length (s)"),
    ("step_sec", "0.5", "feature window step (s)"),
    (
        "filter_order",
        "4",
        "Butterworth prototype order for the AZC band-pass",
    ),
    ("azc_low", "1", "AZC band-pass lower edge (Hz)"),
    ("azc_high", "20", "AZC band-pass upper edge (Hz)"),
    ("trainer", "online", "prototype trainer: online | standard"),
    ("alpha", "1", "online training rate"),
    ("epochs", "1", "online training passes"),
    ("method", "waddsub", "merge method: avrg | wsub | waddsub"),
    ("alpha_corr", "1", "correct-class merge factor"),
    ("alpha_wrong", "1", "opposite-class merge factor"),
    ("iterations", "1", "merge passes over the cohort"),
    (
        "wrong_weight",
        "distance",
        "opposite-class weight convention: distance | similarity",
    ),
    (
        "order_seed",
        "",
        "shuffle subjects before merging with this seed",
    ),
    (
        "bayes_window_sec",
        "5",
        "Bayesian postprocessing window (s)",
    ),
    (
        "bayes_threshold",
        "1.5",
        "Bayesian postprocessing threshold",
    ),
    (
        "movavg_window_sec",
        "5",
        "moving-average postprocessing window (s)",
    ),
    (
        "cohort_name",
        "synth",
        "synthetic cohort name (subject ID prefix)",
    ),
    ("subjects", "20", "synthetic subjects"),
    ("records", "3", "records (seizures) per synthetic subject"),
    ("channels", "18", "synthetic channels"),
    (
        "balance",
        "balanced",
        "synthetic non-seizure amount: balanced | imbalanced",
    ),
    ("seizure_sec", "60", "seizure seconds per synthetic record"),
    (
        "non_seizure_sec",
        "",
        "non-seizure seconds per record (default from balance)",
    ),
    (
        "shared_background",
        "0.7",
        "weight of the population background profile",
    ),
    ("freq_low", "3", "lowest synthetic seizure frequency (Hz)"),
    ("freq_high", "8", "highest synthetic seizure frequency (Hz)"),
    ("amp_gain", "3", "seizure RMS relative to background"),
    (
        "background_seed",
        "0",
        "seed of the population background profile",
    ),
    ("repetitions", "10", "shuffled orders for evolution curves"),
    (
        "plateau_tolerance",
        "0.005",
        "step change below which a curve has plateaued",
    ),
    ("selector", "f1e", "selection score: f1e | f1d | gmean"),
    (
        "threshold_steps",
        "20",
        "selection thresholds between 0 and 1",
    ),
    (
        "mode",
        "personalized",
        "model kind for train/eval: personalized | generalized",
    ),
    (
        "hybrid_mode",
        "nsgen-spers",
        "hybrid composition: nsgen-spers | nspers-sgen",
    ),
    (
        "transfer_mode",
        "generalized",
        "transfer mode: generalized | nsgen-spers | nspers-sgen",
    ),
    (
        "shuffle_labels",
        "",
        "permute training labels with this seed (control runs)",
    ),
    (
        "emit_curves",
        "false",
        "eval: also write evolution and selection curves",
    ),
    ("cohort", "", "cohort directory"),
    ("out", "", "output path"),
    ("models", "", "directory of model files"),
    ("model", "", "model file"),
    ("source", "", "source model file or cohort directory"),
    ("target", "", "target cohort directory"),
    ("gen_reports", "", "generalized reports JSON"),
    ("pers_reports", "", "personalized reports JSON"),
];

/// Keys that are on/off switches on the command line.
pub const SWITCHES: &[&str] = &["emit_curves"];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> HdError {
    HdError::Config(msg.into())
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|(k, d, _)| (k.to_string(), d.to_string()))
                .collect(),
        }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(config_err(format!("unknown setting '{key}'"))),
        }
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                config_err(format!(
                    "{}:{}: expected 'key = value'",
                    origin.display(),
                    i + 1
                ))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| config_err(format!("{}:{}: {e}", origin.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_config_text(&text, path)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| config_err(format!("setting {key} = '{raw}' is not valid")))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            other => Err(config_err(format!(
                "setting {key} = '{other}' is not a boolean"
            ))),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.path_opt(key)?.ok_or_else(|| {
            config_err(format!(
                "missing required setting '{key}' (--{})",
                key.replace('_', "-")
            ))
        })
    }

    pub fn path_opt(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(Some(self.raw(key))
            .filter(|s| !s.is_empty())
            .map(PathBuf::from))
    }

    pub fn encoder(&self) -> Result<EncoderConfig> {
        let cfg = EncoderConfig {
            dim: self.get("dim")?,
            levels: self.get("levels")?,
            seed: self.get("seed")?,
        };
        if cfg.dim < MIN_DIM {
            return Err(config_err(format!(
                "dim must be at least {MIN_DIM}, got {}",
                cfg.dim
            )));
        }
        if cfg.levels < 2 {
            return Err(config_err(format!(
                "levels must be at least 2, got {}",
                cfg.levels
            )));
        }
        Ok(cfg)
    }

    pub fn features(&self) -> Result<FeatureConfig> {
        let cfg = FeatureConfig {
            window_sec: self.get("window_sec")?,
            step_sec: self.get("step_sec")?,
            azc_band: (self.get("azc_low")?, self.get("azc_high")?),
            filter_order: self.get("filter_order")?,
            ..FeatureConfig::default()
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let mode = match self.raw("trainer") {
            "online" => TrainMode::Online,
            "standard" => TrainMode::Standard,
            other => return Err(config_err(format!("unknown trainer '{other}'"))),
        };
        let cfg = TrainConfig {
            mode,
            alpha: self.get("alpha")?,
            epochs: self.get("epochs")?,
            seed: self.get("seed")?,
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn merge(&self) -> Result<MergeConfig> {
        let cfg = MergeConfig {
            method: self.raw("method").parse::<MergeMethod>()?,
            alpha_corr: self.get("alpha_corr")?,
            alpha_wrong: self.get("alpha_wrong")?,
            iterations: self.get("iterations")?,
            wrong_convention: self.raw("wrong_weight").parse::<WrongWeightConvention>()?,
            scale: 1.0,
            order_seed: self.get_opt("order_seed")?,
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn post(&self) -> Result<PostprocessConfig> {
        Ok(PostprocessConfig {
            step_sec: self.get("step_sec")?,
            bayes_window_sec: self.get("bayes_window_sec")?,
            bayes_threshold: self.get("bayes_threshold")?,
            movavg_window_sec: self.get("movavg_window_sec")?,
        })
    }

    pub fn eval(&self) -> Result<EvalConfig> {
        Ok(EvalConfig {
            encoder: self.encoder()?,
            train: self.train()?,
            merge: self.merge()?,
            post: self.post()?,
            shuffle_labels: self.get_opt("shuffle_labels")?,
        })
    }

    /// Build every typed configuration so bad values fail before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.features()?;
        self.eval()?;
        self.cohort()?;
        Ok(())
    }

    pub fn cohort(&self) -> Result<CohortSpec> {
        let base = match self.raw("balance") {
            "balanced" => CohortSpec::balanced(self.get("subjects")?),
            "imbalanced" => CohortSpec::imbalanced(self.get("subjects")?),
            other => return Err(config_err(format!("unknown balance '{other}'"))),
        };
        let spec = CohortSpec {
            name: self.raw("cohort_name").to_string(),
            records_per_subject: self.get("records")?,
            fs: self.get("fs")?,
            channels: self.get("channels")?,
            seizure_sec_per_record: self.get("seizure_sec")?,
            non_seizure_sec_per_record: self
                .get_opt("non_seizure_sec")?
                .unwrap_or(base.non_seizure_sec_per_record),
            shared_background_weight: self.get("shared_background")?,
            seizure_freq_range: (self.get("freq_low")?, self.get("freq_high")?),
            seizure_amp_gain: self.get("amp_gain")?,
            seed: self.get("seed")?,
            background_seed: self.get("background_seed")?,
            ..base
        };
        spec.validate()?;
        Ok(spec)
    }
}
