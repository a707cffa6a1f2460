use super::*;
use crate::error::Error;

fn quick(out: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.output_dir = Some(out.to_path_buf());
    c.seed = Some(7);
    c.train.hidden = 4;
    c.train.max_epochs = 2;
    c.synth.patients = Some(120);
    c.synth.mortality_rate = Some(0.3);
    c
}

#[test]
fn set_parses_known_keys() {
    let mut c = RunConfig::default();
    c.set("seed", "42").unwrap();
    c.set("hidden", " 16 ").unwrap();
    c.set("monitor", "val_auc").unwrap();
    c.set("literal", "true").unwrap();
    c.set("signal_mode", "none").unwrap();
    assert_eq!(c.seed, Some(42));
    assert_eq!(c.train.hidden, 16);
    assert_eq!(c.train.monitor, crate::nn::Monitor::ValAuc);
    assert!(c.all_stays_means && c.literal_urine && c.no_standardize);
    assert_eq!(c.synth.signal_mode, SignalMode::None);
    assert!(c.set("seed", "x").unwrap_err().contains("seed"));
    assert!(c.set("colour", "red").unwrap_err().contains("unknown key"));
    assert!(c.set("shuffle", "maybe").is_err());
    for key in CONFIG_KEYS {
        let err = c.set(key, "").err().unwrap_or_default();
        assert!(!err.contains("unknown key"), "{key}");
    }
}

#[test]
fn config_file_errors_carry_line_numbers() {
    let mut c = RunConfig::default();
    let text = "# comment\nseed = 3\n\nlambda = 0.5 # trailing\nhidden 12\n";
    let err = c.apply_text(text, Path::new("run.conf")).unwrap_err();
    match err {
        Error::ConfigLine {
            line, ref reason, ..
        } => {
            assert_eq!(line, 5);
            assert!(reason.contains("key = value"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(c.seed, Some(3));
    assert_eq!(c.lambda, 0.5);
    let err = RunConfig::default()
        .apply_text("seed = 1\nthreshold = high\n", Path::new("x"))
        .unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn flags_applied_after_file_win() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, "seed = 3\nlambda = 2\n").unwrap();
    let mut c = RunConfig::default();
    c.apply_file(&path).unwrap();
    c.set("seed", "9").unwrap();
    assert_eq!((c.seed, c.lambda), (Some(9), 2.0));
    assert!(matches!(
        RunConfig::default().apply_file(&dir.path().join("nope.conf")),
        Err(Error::MissingArtifact(_))
    ));
}

#[test]
fn requirements() {
    let mut c = RunConfig::default();
    assert!(c
        .require_seed("train")
        .unwrap_err()
        .to_string()
        .contains("seed"));
    c.input_dir = Some("same".into());
    c.output_dir = Some("same".into());
    assert!(c.require_output("cohort").is_err());
    c.threshold = 1.5;
    assert!(c.validate().is_err());
}

#[test]
fn featurize_needs_cohort_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick(dir.path());
    c.input_dir = Some(dir.path().join("in"));
    let err = run_featurize(&c).unwrap_err();
    assert_eq!(err.kind(), "missing_artifact");
    assert!(err.to_string().contains("cohort.csv"), "{err}");
    let err = run_evaluate(&c).unwrap_err();
    assert!(matches!(err, Error::MissingArtifact(_)));
}

#[test]
fn run_all_matches_stage_composition() {
    let a = tempfile::tempdir().unwrap();
    let outcomes = run_all(&quick(a.path())).unwrap();
    let names: Vec<_> = outcomes.iter().map(|o| o.stage).collect();
    assert_eq!(
        names,
        [
            "synth",
            "describe",
            "cohort",
            "featurize",
            "train",
            "evaluate"
        ]
    );
    for o in &outcomes {
        let log = std::fs::read_to_string(&o.log).unwrap();
        assert!(log.contains("wall_time_s:"));
        for art in &o.artifacts {
            assert!(art.exists(), "{}", art.display());
            assert!(log.contains(&format!("artifact: {}", art.display())));
        }
    }
    let csv = std::fs::read_to_string(a.path().join(artifacts::REPORT_CSV)).unwrap();
    assert!(csv.starts_with("Model,Precision,Recall,F1,AUC\nLSTM,"));

    // Same stages by hand into a second directory.
    let b = tempfile::tempdir().unwrap();
    let data = b.path().join("data");
    let mut c = quick(&data);
    run_synth(&c).unwrap();
    c.input_dir = Some(data);
    c.output_dir = Some(b.path().to_path_buf());
    run_cohort(&c).unwrap();
    run_featurize(&c).unwrap();
    run_train(&c).unwrap();
    let report = std::fs::read(b.path().join(artifacts::REPORT_TXT));
    assert!(report.is_err());
    run_evaluate(&c).unwrap();
    for f in [
        artifacts::COHORT,
        artifacts::LSTM_CHECKPOINT,
        artifacts::LR_MODEL,
        artifacts::REPORT_CSV,
        artifacts::REPORT_TXT,
        artifacts::ROC_LSTM,
        artifacts::ROC_LR,
        artifacts::PREDICTIONS,
    ] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }

    // Evaluating again leaves the report bytes unchanged.
    let before = std::fs::read(b.path().join(artifacts::REPORT_TXT)).unwrap();
    run_evaluate(&c).unwrap();
    assert_eq!(
        before,
        std::fs::read(b.path().join(artifacts::REPORT_TXT)).unwrap()
    );
}
