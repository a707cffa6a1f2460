//! Stage orchestration: configuration, per-stage runners, stage logs and the
//! final report.
//!
//! Stages talk only through files in the output directory, so any stage can
//! be rerun on its own and `run-all` is exactly their composition.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::ErrorPolicy;
use crate::metrics::DEFAULT_THRESHOLD;
use crate::nn::TrainConfig;
use crate::synth::SignalMode;

mod report;
mod stages;

pub use report::{format_report, report_csv, report_text, ModelRow, REPORT_HEADER};
pub use stages::{
    artifacts, run_all, run_cohort, run_describe, run_evaluate, run_featurize, run_synth,
    run_train, StageOutcome,
};

pub const STAGES: [&str; 7] = [
    "synth",
    "describe",
    "cohort",
    "featurize",
    "train",
    "evaluate",
    "run-all",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    /// When set, `run-all` generates data instead of reading `input_dir`.
    pub patients: Option<usize>,
    pub signal_mode: SignalMode,
    pub effect_size: Option<f64>,
    pub mortality_rate: Option<f64>,
    /// Inject dirt after generation.
    pub anomalies: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            patients: None,
            signal_mode: SignalMode::TemporalTrend,
            effect_size: None,
            mortality_rate: None,
            anomalies: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// The seed field is overwritten with the global seed at train time.
    pub train: TrainConfig,
    pub lambda: f64,
    pub threshold: f64,
    /// Population means over all stays instead of the training split.
    pub all_stays_means: bool,
    /// Random pick for urine like every other channel instead of hourly sums.
    pub literal_urine: bool,
    pub no_standardize: bool,
    pub policy: ErrorPolicy,
    pub synth: SynthOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            output_dir: None,
            seed: None,
            train: TrainConfig::new(0),
            lambda: crate::baseline::DEFAULT_LAMBDA,
            threshold: DEFAULT_THRESHOLD,
            all_stays_means: false,
            literal_urine: false,
            no_standardize: false,
            policy: ErrorPolicy::Skip,
            synth: SynthOptions::default(),
        }
    }
}

/// Keys accepted by [`RunConfig::set`] and in config files.
pub const CONFIG_KEYS: [&str; 22] = [
    "input",
    "output",
    "seed",
    "hidden",
    "batch_size",
    "max_epochs",
    "patience",
    "lr",
    "monitor",
    "shuffle",
    "lambda",
    "threshold",
    "all_stays_means",
    "literal_urine",
    "no_standardize",
    "strict",
    "synth_patients",
    "signal_mode",
    "effect_size",
    "mortality_rate",
    "anomalies",
    "literal",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!(
            "invalid value `{value}` for `{key}` (expected true or false)"
        )),
    }
}

impl RunConfig {
    /// Sets one option from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let key = key.trim();
        let value = value.trim();
        match key {
            "input" => self.input_dir = Some(PathBuf::from(value)),
            "output" => self.output_dir = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(parse(key, value)?),
            "hidden" => self.train.hidden = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "max_epochs" => self.train.max_epochs = parse(key, value)?,
            "patience" => self.train.patience = parse(key, value)?,
            "lr" => self.train.adam.lr = parse(key, value)?,
            "monitor" => self.train.monitor = value.parse().map_err(|e: Error| e.to_string())?,
            "shuffle" => self.train.shuffle = parse_bool(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "all_stays_means" => self.all_stays_means = parse_bool(key, value)?,
            "literal_urine" => self.literal_urine = parse_bool(key, value)?,
            "no_standardize" => self.no_standardize = parse_bool(key, value)?,
            "literal" => {
                let on = parse_bool(key, value)?;
                self.all_stays_means = on;
                self.literal_urine = on;
                self.no_standardize = on;
            }
            "strict" => {
                self.policy = if parse_bool(key, value)? {
                    ErrorPolicy::Strict
                } else {
                    ErrorPolicy::Skip
                }
            }
            "synth_patients" => self.synth.patients = Some(parse(key, value)?),
            "signal_mode" => {
                self.synth.signal_mode = value.parse().map_err(|e: Error| e.to_string())?
            }
            "effect_size" => self.synth.effect_size = Some(parse(key, value)?),
            "mortality_rate" => self.synth.mortality_rate = Some(parse(key, value)?),
            "anomalies" => self.synth.anomalies = parse_bool(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::ConfigLine {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, found `{line}`")))?;
            self.set(k, v).map_err(err)?;
        }
        Ok(())
    }

    pub fn require_seed(&self, stage: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config(format!("`{stage}` needs a seed (--seed)")))
    }

    pub fn require_input(&self, stage: &str) -> Result<&Path> {
        self.input_dir
            .as_deref()
            .ok_or_else(|| Error::Config(format!("`{stage}` needs an input directory (--input)")))
    }

    pub fn require_output(&self, stage: &str) -> Result<&Path> {
        let out = self.output_dir.as_deref().ok_or_else(|| {
            Error::Config(format!("`{stage}` needs an output directory (--output)"))
        })?;
        if self.input_dir.as_deref() == Some(out) {
            return Err(Error::Config(format!(
                "input and output directories must differ (both {})",
                out.display()
            )));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.train.adam.lr.is_finite() && self.train.adam.lr > 0.0) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.train.adam.lr
            )));
        }
        Ok(())
    }

    /// Key/value lines describing every setting, for stage logs and manifests.
    pub fn describe(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            ("input".into(), path(&self.input_dir)),
            ("output".into(), path(&self.output_dir)),
            ("seed".into(), opt(self.seed.map(|s| s.to_string()))),
            ("hidden".into(), self.train.hidden.to_string()),
            ("batch_size".into(), self.train.batch_size.to_string()),
            ("max_epochs".into(), self.train.max_epochs.to_string()),
            ("patience".into(), self.train.patience.to_string()),
            ("lr".into(), self.train.adam.lr.to_string()),
            ("monitor".into(), self.train.monitor.to_string()),
            ("shuffle".into(), self.train.shuffle.to_string()),
            ("lambda".into(), self.lambda.to_string()),
            ("threshold".into(), self.threshold.to_string()),
            ("all_stays_means".into(), self.all_stays_means.to_string()),
            ("literal_urine".into(), self.literal_urine.to_string()),
            ("no_standardize".into(), self.no_standardize.to_string()),
            (
                "strict".into(),
                (self.policy == ErrorPolicy::Strict).to_string(),
            ),
            (
                "synth_patients".into(),
                opt(self.synth.patients.map(|n| n.to_string())),
            ),
            ("signal_mode".into(), self.synth.signal_mode.to_string()),
            (
                "effect_size".into(),
                opt(self.synth.effect_size.map(|e| e.to_string())),
            ),
            (
                "mortality_rate".into(),
                opt(self.synth.mortality_rate.map(|e| e.to_string())),
            ),
            ("anomalies".into(), self.synth.anomalies.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests;
