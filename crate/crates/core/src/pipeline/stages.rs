use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde_json::json;

use super::report::{format_report, ModelRow};
use super::RunConfig;
use crate::baseline::{last_hour_features, load_lr, predict_lr, save_lr, train_lr, LrConfig};
use crate::cohort::{
    build_cohort, cohort_rows, read_cohort, split_dataset, write_cohort, CohortConfig,
    CohortTables, Split,
};
use crate::error::{Error, Result};
use crate::featurize::{
    featurize_cohort, load_stay_events, read_population_stats, read_tensors,
    write_population_stats, write_tensors, FeaturizeOptions, LabeledTensor, SEQ_FILE, STATIC_FILE,
    STATS_FILE,
};
use crate::fmt::sig9;
use crate::ingest::{ItemRegistry, N_CHANNELS};
use crate::metrics::{evaluate, write_roc_csv, EvalReport};
use crate::nn::{self, checkpoint, SampleRef};
use crate::seed::derive_seed;
use crate::synth::{self, AnomalyConfig, SynthConfig};

/// File names written into the output directory.
pub mod artifacts {
    pub const DESCRIBE: &str = "describe.txt";
    pub const COHORT: &str = "cohort.csv";
    pub const LSTM_CHECKPOINT: &str = "lstm.ckpt";
    pub const LSTM_MANIFEST: &str = "lstm.manifest.json";
    pub const LR_MODEL: &str = "lr_model.txt";
    pub const HISTORY: &str = "history.csv";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const ROC_LSTM: &str = "roc_lstm.csv";
    pub const ROC_LR: &str = "roc_lr.csv";
    pub const REPORT_TXT: &str = "report.txt";
    pub const REPORT_CSV: &str = "report.csv";
    /// Every report scalar per (model, split).
    pub const METRICS_CSV: &str = "metrics.csv";
    /// Subdirectory `run-all` generates tables into.
    pub const SYNTH_DIR: &str = "data";
}

pub const SYNTH_DEFAULT_PATIENTS: usize = 2000;

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub seed: Option<u64>,
    pub counts: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
    pub wall: Duration,
    pub log: PathBuf,
}

impl StageOutcome {
    pub fn count(&self, key: &str) -> Option<&str> {
        self.counts
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

struct Stage {
    name: &'static str,
    seed: Option<u64>,
    counts: Vec<(String, String)>,
    artifacts: Vec<PathBuf>,
    start: Instant,
}

impl Stage {
    fn new(name: &'static str, seed: Option<u64>) -> Self {
        Self {
            name,
            seed,
            counts: Vec::new(),
            artifacts: Vec::new(),
            start: Instant::now(),
        }
    }

    fn count(&mut self, key: impl Into<String>, value: impl ToString) {
        self.counts.push((key.into(), value.to_string()));
    }

    fn wrote(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    /// Writes `<dir>/<stage>.log` and returns the outcome.
    fn finish(self, dir: &Path) -> Result<StageOutcome> {
        let wall = self.start.elapsed();
        let log = dir.join(format!("{}.log", self.name));
        let mut s = String::new();
        let _ = writeln!(s, "stage: {}", self.name);
        let _ = writeln!(
            s,
            "seed: {}",
            self.seed
                .map(|v| v.to_string())
                .unwrap_or_else(|| "-".into())
        );
        for (k, v) in &self.counts {
            let _ = writeln!(s, "count.{k}: {v}");
        }
        let _ = writeln!(s, "wall_time_s: {:.3}", wall.as_secs_f64());
        for a in &self.artifacts {
            let _ = writeln!(s, "artifact: {}", a.display());
        }
        std::fs::write(&log, s).map_err(|e| Error::io(&log, e))?;
        Ok(StageOutcome {
            stage: self.name,
            seed: self.seed,
            counts: self.counts,
            artifacts: self.artifacts,
            wall,
            log,
        })
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates synthetic tables into the output directory.
pub fn run_synth(config: &RunConfig) -> Result<StageOutcome> {
    let seed = config.require_seed("synth")?;
    let out = config.require_output("synth")?;
    let mut sc = SynthConfig::new(
        config.synth.patients.unwrap_or(SYNTH_DEFAULT_PATIENTS),
        seed,
    );
    sc.signal_mode = config.synth.signal_mode;
    if let Some(e) = config.synth.effect_size {
        sc.effect_size = e;
    }
    if let Some(m) = config.synth.mortality_rate {
        sc.mortality_rate = m;
    }
    let mut stage = Stage::new("synth", Some(seed));
    let counts = synth::generate(&sc, out)?;
    stage.count("patients", counts.patients);
    stage.count("admissions", counts.admissions);
    stage.count("icustays", counts.icustays);
    stage.count("chartevents", counts.chartevents);
    stage.count("labevents", counts.labevents);
    stage.count("outputevents", counts.outputevents);
    stage.count("diagnoses", counts.diagnoses);
    stage.count("services", counts.services);
    stage.count("deaths", counts.deaths);
    stage.count("signal_mode", sc.signal_mode);
    if config.synth.anomalies {
        let m = synth::inject_anomalies(out, &AnomalyConfig::new(seed))?;
        stage.count("anomaly.celsius", m.celsius.len());
        stage.count("anomaly.error_text", m.error_text.len());
        stage.count("anomaly.duplicates", m.duplicates.len());
        stage.count("anomaly.missing_spans", m.missing_spans.len());
    }
    for f in [
        crate::ingest::files::PATIENTS,
        crate::ingest::files::ADMISSIONS,
        crate::ingest::files::ICUSTAYS,
        crate::ingest::files::CHARTEVENTS,
        crate::ingest::files::LABEVENTS,
        crate::ingest::files::OUTPUTEVENTS,
        crate::ingest::files::DIAGNOSES_ICD,
        crate::ingest::files::SERVICES,
        synth::MANIFEST_FILE,
    ] {
        stage.wrote(out.join(f));
    }
    stage.finish(out)
}

pub fn run_describe(config: &RunConfig) -> Result<StageOutcome> {
    let input = config.require_input("describe")?;
    let out = config.require_output("describe")?;
    ensure_dir(out)?;
    let mut stage = Stage::new("describe", config.seed);
    let summary = synth::describe_dir(input, config.policy)?;
    stage.count("patients", summary.patients);
    stage.count("adult_patients", summary.adult_patients);
    stage.count("first_long_stays", summary.first_long_stays);
    stage.count("warnings", summary.warnings.len());
    let path = out.join(artifacts::DESCRIBE);
    write_file(&path, &summary.to_string())?;
    stage.wrote(path);
    stage.finish(out)
}

pub fn run_cohort(config: &RunConfig) -> Result<StageOutcome> {
    let seed = config.require_seed("cohort")?;
    let input = config.require_input("cohort")?;
    let out = config.require_output("cohort")?;
    ensure_dir(out)?;
    let mut stage = Stage::new("cohort", Some(seed));
    let tables = CohortTables::load(input, config.policy)?;
    for (file, s) in &tables.parse_stats {
        stage.count(format!("{file}.rows_read"), s.rows_read);
        stage.count(format!("{file}.rows_dropped"), s.rows_dropped);
    }
    let (stays, report) = build_cohort(&tables, &CohortConfig::default())?;
    if stays.is_empty() {
        return Err(Error::Data(format!(
            "no ICU stay in {} passes inclusion",
            input.display()
        )));
    }
    let ids: Vec<i64> = stays.iter().map(|s| s.subject_id).collect();
    let splits = split_dataset(&ids, derive_seed(seed, "cohort.split", &[]))?;
    let rows = cohort_rows(&stays, &splits)?;
    stage.count("stays_read", report.stays_read);
    stage.count("first_stays", report.first_stays);
    stage.count("excluded_age", report.excluded_age);
    stage.count("excluded_los", report.excluded_los);
    stage.count(
        "excluded_other",
        report.excluded_no_patient + report.excluded_bad_dob + report.excluded_no_outtime,
    );
    stage.count("included", report.included);
    stage.count("deaths", report.deaths);
    stage.count("label_inconsistencies", report.label_inconsistencies);
    for s in Split::ALL {
        stage.count(
            format!("split.{s}"),
            rows.iter().filter(|r| r.split == s).count(),
        );
    }
    let path = out.join(artifacts::COHORT);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_cohort(std::io::BufWriter::new(file), &rows)?;
    stage.wrote(path);
    stage.finish(out)
}

fn featurize_options(config: &RunConfig, seed: u64) -> FeaturizeOptions {
    FeaturizeOptions {
        seed,
        sum_urine: !config.literal_urine,
        standardize: !config.no_standardize,
        all_stays_stats: config.all_stays_means,
    }
}

pub fn run_featurize(config: &RunConfig) -> Result<StageOutcome> {
    let seed = config.require_seed("featurize")?;
    let input = config.require_input("featurize")?;
    let out = config.require_output("featurize")?;
    let cohort_path = out.join(artifacts::COHORT);
    if !cohort_path.exists() {
        return Err(Error::MissingArtifact(cohort_path));
    }
    let mut stage = Stage::new("featurize", Some(seed));
    let file = std::fs::File::open(&cohort_path).map_err(|e| Error::io(&cohort_path, e))?;
    let rows = read_cohort(std::io::BufReader::new(file))?;
    let (events, stats) = load_stay_events(input, &rows, &ItemRegistry::shipped(), config.policy)?;
    for (file, s, kept) in &stats {
        stage.count(format!("{file}.rows_read"), s.rows_read);
        stage.count(format!("{file}.rows_dropped"), s.rows_dropped);
        stage.count(format!("{file}.in_window"), kept);
    }
    let options = featurize_options(config, seed);
    let (tensors, pop) = featurize_cohort(&rows, &events, &options)?;
    let labeled: Vec<LabeledTensor> = tensors
        .into_iter()
        .zip(&rows)
        .map(|(tensor, r)| LabeledTensor {
            tensor,
            split: r.split,
        })
        .collect();
    stage.count("stays", labeled.len());
    stage.count(
        "positives",
        labeled.iter().filter(|t| t.tensor.label).count(),
    );
    stage.count("standardized", options.standardize);
    write_tensors(out, &labeled)?;
    let stats_path = out.join(STATS_FILE);
    write_population_stats(&stats_path, &pop)?;
    stage.wrote(out.join(SEQ_FILE));
    stage.wrote(out.join(STATIC_FILE));
    stage.wrote(stats_path);
    stage.finish(out)
}

fn samples(tensors: &[LabeledTensor], split: Split) -> Vec<SampleRef<'_>> {
    tensors
        .iter()
        .filter(|t| t.split == split)
        .map(|t| t.tensor.as_sample())
        .collect()
}

fn lr_data(tensors: &[LabeledTensor], split: Split) -> (Vec<Vec<f64>>, Vec<bool>) {
    tensors
        .iter()
        .filter(|t| t.split == split)
        .map(|t| (last_hour_features(&t.tensor).to_vec(), t.tensor.label))
        .unzip()
}

pub fn run_train(config: &RunConfig) -> Result<StageOutcome> {
    let seed = config.require_seed("train")?;
    let out = config.require_output("train")?;
    config.validate()?;
    let tensors = read_tensors(out)?;
    let stats = read_population_stats(&out.join(STATS_FILE))?;
    let mut stage = Stage::new("train", Some(seed));
    let train_set = samples(&tensors, Split::Train);
    let val_set = samples(&tensors, Split::Val);
    stage.count("train_stays", train_set.len());
    stage.count("val_stays", val_set.len());

    let mut tc = config.train.clone();
    tc.seed = seed;
    tc.input_size = N_CHANNELS;
    let (model, history) = nn::train(&train_set, &val_set, &tc)?;
    stage.count("epochs", history.epochs.len());
    stage.count("best_epoch", history.best_epoch);
    stage.count("stopped_early", history.stopped_early);

    let (x, y) = lr_data(&tensors, Split::Train);
    let fit = train_lr(
        &x,
        &y,
        config.lambda,
        &LrConfig {
            seed,
            ..LrConfig::default()
        },
    )?;
    stage.count("lr_iterations", fit.iterations);
    stage.count("lr_newton_steps", fit.newton_steps);
    stage.count("lr_grad_norm", sig9(fit.grad_norm));

    let ckpt = out.join(artifacts::LSTM_CHECKPOINT);
    checkpoint::save(&ckpt, &model)?;
    stage.wrote(ckpt);

    let mut hist = String::from("epoch,train_loss,val_loss,val_auc\n");
    for e in &history.epochs {
        let auc = e.val_auc.map(sig9).unwrap_or_default();
        let _ = writeln!(
            hist,
            "{},{},{},{auc}",
            e.epoch,
            sig9(e.train_loss),
            sig9(e.val_loss)
        );
    }
    let hist_path = out.join(artifacts::HISTORY);
    write_file(&hist_path, &hist)?;
    stage.wrote(hist_path);

    let manifest = json!({
        "format": "ICUM1",
        "seed": seed,
        "hidden": model.hidden,
        "input_size": model.input_size,
        "static_size": model.static_size,
        "layers": nn::N_LAYERS,
        "train": {
            "batch_size": tc.batch_size,
            "max_epochs": tc.max_epochs,
            "patience": tc.patience,
            "shuffle": tc.shuffle,
            "monitor": tc.monitor.name(),
            "lr": tc.adam.lr,
            "beta1": tc.adam.beta1,
            "beta2": tc.adam.beta2,
            "eps": tc.adam.eps,
        },
        "history": {
            "best_epoch": history.best_epoch,
            "stopped_early": history.stopped_early,
            "val_loss": history.epochs.iter().map(|e| e.val_loss).collect::<Vec<_>>(),
        },
        "standardization": {
            "channels": crate::ingest::Channel::ALL.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "mean": stats.mean.to_vec(),
            "sd": stats.sd.to_vec(),
            "age_mean": stats.age_mean,
            "age_sd": stats.age_sd,
        },
    });
    let man_path = out.join(artifacts::LSTM_MANIFEST);
    write_file(
        &man_path,
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    stage.wrote(man_path);

    let lr_path = out.join(artifacts::LR_MODEL);
    save_lr(&lr_path, &fit.model)?;
    stage.wrote(lr_path);
    stage.finish(out)
}

pub fn run_evaluate(config: &RunConfig) -> Result<StageOutcome> {
    let out = config.require_output("evaluate")?;
    config.validate()?;
    let tensors = read_tensors(out)?;
    let model = checkpoint::load(&out.join(artifacts::LSTM_CHECKPOINT))?;
    let lr = load_lr(&out.join(artifacts::LR_MODEL))?;
    let mut stage = Stage::new("evaluate", config.seed);

    let test: Vec<&LabeledTensor> = tensors.iter().filter(|t| t.split == Split::Test).collect();
    let refs: Vec<SampleRef<'_>> = test.iter().map(|t| t.tensor.as_sample()).collect();
    let labels: Vec<bool> = test.iter().map(|t| t.tensor.label).collect();
    let lstm_scores = nn::predict(&model, &refs)?;
    let lr_scores: Vec<f64> = test
        .iter()
        .map(|t| predict_lr(&lr, &last_hour_features(&t.tensor)))
        .collect();
    let lstm_eval = evaluate(&lstm_scores, &labels, config.threshold)?;
    let lr_eval = evaluate(&lr_scores, &labels, config.threshold)?;
    stage.count("test_stays", labels.len());
    stage.count("test_positives", lstm_eval.positives);
    stage.count("threshold", config.threshold);

    let mut preds = String::from("stay_id,label,lstm,lr\n");
    for ((t, a), b) in test.iter().zip(&lstm_scores).zip(&lr_scores) {
        let _ = writeln!(
            preds,
            "{},{},{},{}",
            t.tensor.stay_id,
            u8::from(t.tensor.label),
            sig9(*a),
            sig9(*b)
        );
    }
    let pred_path = out.join(artifacts::PREDICTIONS);
    write_file(&pred_path, &preds)?;
    stage.wrote(pred_path);

    for (name, eval) in [
        (artifacts::ROC_LSTM, &lstm_eval),
        (artifacts::ROC_LR, &lr_eval),
    ] {
        let path = out.join(name);
        write_roc_csv(&path, &eval.roc)?;
        stage.wrote(path);
    }
    let mut metrics =
        String::from("model,split,n,positives,threshold,tp,fp,tn,fn,precision,recall,f1,auc\n");
    for split in [Split::Val, Split::Test] {
        let part: Vec<&LabeledTensor> = tensors.iter().filter(|t| t.split == split).collect();
        let y: Vec<bool> = part.iter().map(|t| t.tensor.label).collect();
        let refs: Vec<SampleRef<'_>> = part.iter().map(|t| t.tensor.as_sample()).collect();
        let a = nn::predict(&model, &refs)?;
        let b: Vec<f64> = part
            .iter()
            .map(|t| predict_lr(&lr, &last_hour_features(&t.tensor)))
            .collect();
        for (name, scores) in [("LSTM", &a), ("LR", &b)] {
            let r = evaluate(scores, &y, config.threshold)?;
            let c = r.confusion;
            let _ = writeln!(
                metrics,
                "{name},{split},{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.positives,
                sig9(r.threshold),
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                sig9(r.precision),
                sig9(r.recall),
                sig9(r.f1),
                sig9(r.auc)
            );
        }
    }
    let metrics_path = out.join(artifacts::METRICS_CSV);
    write_file(&metrics_path, &metrics)?;
    stage.wrote(metrics_path);

    let rows = [
        ModelRow::from_report("LSTM", &lstm_eval),
        ModelRow::from_report("LR", &lr_eval),
    ];
    let (table, csv) = format_report(&rows)?;
    let text = format!(
        "{}\n{}\n{table}",
        split_line(&lstm_eval),
        confusion_lines(&[("LSTM", &lstm_eval), ("LR", &lr_eval)]),
    );
    let txt_path = out.join(artifacts::REPORT_TXT);
    write_file(&txt_path, &text)?;
    stage.wrote(txt_path);
    let csv_path = out.join(artifacts::REPORT_CSV);
    write_file(&csv_path, &csv)?;
    stage.wrote(csv_path);
    for r in &rows {
        stage.count(format!("{}.auc", r.model), format!("{:.3}", r.auc));
    }
    stage.finish(out)
}

fn split_line(r: &EvalReport) -> String {
    format!(
        "Test split: {} stays, {} positive, threshold {}",
        r.n, r.positives, r.threshold
    )
}

fn confusion_lines(models: &[(&str, &EvalReport)]) -> String {
    let mut s = String::new();
    for (name, r) in models {
        let c = r.confusion;
        let _ = writeln!(
            s,
            "{name}: tp={} fp={} tn={} fn={}",
            c.tp, c.fp, c.tn, c.fn_
        );
    }
    s
}

/// Every stage in order. With `synth.patients` set, tables are generated into
/// `<output>/data` first and read from there.
pub fn run_all(config: &RunConfig) -> Result<Vec<StageOutcome>> {
    config.require_seed("run-all")?;
    let out = config.require_output("run-all")?.to_path_buf();
    config.validate()?;
    ensure_dir(&out)?;
    let mut outcomes = Vec::new();
    let mut cfg = config.clone();
    if config.synth.patients.is_some() {
        let data = out.join(artifacts::SYNTH_DIR);
        let mut sc = config.clone();
        sc.output_dir = Some(data.clone());
        sc.input_dir = None;
        outcomes.push(run_synth(&sc)?);
        cfg.input_dir = Some(data);
    } else {
        cfg.require_input("run-all")?;
    }
    outcomes.push(run_describe(&cfg)?);
    outcomes.push(run_cohort(&cfg)?);
    outcomes.push(run_featurize(&cfg)?);
    outcomes.push(run_train(&cfg)?);
    outcomes.push(run_evaluate(&cfg)?);
    Ok(outcomes)
}
