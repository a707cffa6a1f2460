//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! `cargo test -p icu-mortality --test acceptance -- c4 c6` runs a subset.
//! C8 runs only when `ICU_MIMIC_DIR` points at the real tables.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime};
use icu_mortality::baseline::{objective_and_grad, LrModel};
use icu_mortality::cohort::{build_cohort, cohort_rows, split_dataset, CohortConfig, CohortTables};
use icu_mortality::featurize::{
    bin_stay, destandardize_seq, featurize_cohort, impute, load_stay_events, FeaturizeOptions,
    HourlySeries, HOURS,
};
use icu_mortality::ingest::{
    AdmissionRow, Channel, ErrorPolicy, IcuStayRow, ItemRegistry, PatientRow, ServiceRow,
};
use icu_mortality::metrics::{auc_of_scores, auc_oracle, prf1};
use icu_mortality::nn::gradcheck::{check_random, relative_error};
use icu_mortality::pipeline::{artifacts, run_all, RunConfig};
use icu_mortality::seed::SplitMix64;
use icu_mortality::synth::{
    self, inject_anomalies, AnomalyConfig, SignalMode, SynthConfig, TEMP_F_PLAUSIBLE,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn c1_gradients() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        for hidden in [2, 4] {
            for steps in [3, 6] {
                let g = check_random(seed, hidden, steps, 3).map_err(|e| e.to_string())?;
                ensure(g.max_rel_error < 1e-4, || {
                    format!(
                        "LSTM seed {seed} H={hidden} T={steps}: {:.3e} at {:?}",
                        g.max_rel_error, g.worst
                    )
                })?;
                worst = worst.max(g.max_rel_error);
            }
        }
    }

    let mut lr_worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = SplitMix64::new(seed);
        let mut u = move || 2.0 * rng.next_f64() - 1.0;
        let dim = 20;
        let features: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..dim).map(|_| 2.0 * u()).collect())
            .collect();
        let labels: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let mut model = LrModel::zeros(dim, 0.01 + u().abs());
        model.weights.iter_mut().for_each(|w| *w = 0.5 * u());
        model.bias = u();
        let (_, gw, gb) =
            objective_and_grad(&model, &features, &labels).map_err(|e| e.to_string())?;
        let delta = 1e-5;
        let f = |m: &LrModel| objective_and_grad(m, &features, &labels).unwrap().0;
        for i in 0..=dim {
            let mut plus = model.clone();
            let mut minus = model.clone();
            let analytic = if i < dim {
                plus.weights[i] += delta;
                minus.weights[i] -= delta;
                gw[i]
            } else {
                plus.bias += delta;
                minus.bias -= delta;
                gb
            };
            let numeric = (f(&plus) - f(&minus)) / (2.0 * delta);
            lr_worst = lr_worst.max(relative_error(analytic, numeric));
        }
    }
    ensure(lr_worst < 1e-6, || {
        format!("LR worst relative error {lr_worst:.3e}")
    })?;
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "LSTM max rel {worst:.2e} over 40 cases, LR max rel {lr_worst:.2e}, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn c2_auc_oracle() -> Check {
    let start = Instant::now();
    let mut rng = SplitMix64::new(2);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = 2 + rng.below(99);
        // Few distinct levels so ties are common.
        let levels = 1 + rng.below(12);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.below(levels) as f64 / levels as f64)
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
        labels[0] = true;
        labels[1] = false;
        let a = auc_of_scores(&scores, &labels).map_err(|e| e.to_string())?;
        let b = auc_oracle(&scores, &labels).map_err(|e| e.to_string())?;
        let d = (a - b).abs();
        ensure(d < 1e-12, || {
            format!("case {case}: trapezoid {a} vs pairs {b}")
        })?;
        worst = worst.max(d);
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("200 instances, max |diff| {worst:.1e}"))
}

fn c3_metric_formulas() -> Check {
    let got = prf1(2, 1, 5, 2);
    ensure(got == (2.0 / 3.0, 0.5, 4.0 / 7.0), || {
        format!("prf1(2,1,5,2) = {got:?}")
    })?;
    for (counts, want) in [
        ((0, 0, 9, 0), (0.0, 0.0, 0.0)),
        ((0, 0, 0, 4), (0.0, 0.0, 0.0)),
        ((0, 3, 2, 0), (0.0, 0.0, 0.0)),
        ((4, 0, 0, 0), (1.0, 1.0, 1.0)),
    ] {
        let (tp, fp, tn, fn_) = counts;
        let got = prf1(tp, fp, tn, fn_);
        ensure(got == want, || {
            format!("prf1{counts:?} = {got:?}, want {want:?}")
        })?;
    }
    Ok("exact values and empty-denominator conventions".into())
}

fn present(series: &HourlySeries) -> HourlySeries {
    let mut s = series.clone();
    s.values
        .iter_mut()
        .for_each(|v| *v = Some(v.unwrap_or(0.0)));
    s
}

fn c4_cleaning_fidelity() -> Check {
    let err = |e: icu_mortality::Error| e.to_string();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seed = 11;
    synth::generate(&SynthConfig::new(400, seed), dir.path()).map_err(err)?;
    let manifest = inject_anomalies(dir.path(), &AnomalyConfig::new(seed)).map_err(err)?;

    let tables = CohortTables::load(dir.path(), ErrorPolicy::Skip).map_err(err)?;
    let (stays, _) = build_cohort(&tables, &CohortConfig::default()).map_err(err)?;
    let ids: Vec<i64> = stays.iter().map(|s| s.subject_id).collect();
    let splits = split_dataset(&ids, seed).map_err(err)?;
    let rows = cohort_rows(&stays, &splits).map_err(err)?;
    let registry = ItemRegistry::shipped();
    let (events, _) =
        load_stay_events(dir.path(), &rows, &registry, ErrorPolicy::Skip).map_err(err)?;
    let options = FeaturizeOptions::new(seed);
    let (tensors, stats) = featurize_cohort(&rows, &events, &options).map_err(err)?;

    // Output tensors: finite everywhere, temperatures inside the gates.
    let temp = Channel::TempF.index();
    let (lo, hi) = TEMP_F_PLAUSIBLE;
    for t in &tensors {
        for (h, row) in t.seq.iter().enumerate() {
            if let Some(c) = row.iter().position(|x| !x.is_finite()) {
                return Err(format!(
                    "stay {} hour {h} channel {c} is not finite",
                    t.stay_id
                ));
            }
            let f = destandardize_seq(row[temp], temp, &stats);
            ensure((lo - 1e-9..=hi + 1e-9).contains(&f), || {
                format!("stay {} hour {h}: temperature {f:.3} F", t.stay_id)
            })?;
        }
    }

    let mut bins = HashMap::new();
    for row in &rows {
        let evs = events
            .get(&row.icustay_id)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let b = bin_stay(row.icustay_id, row.intime, evs, &options);
        for (c, series) in b.series.iter().enumerate() {
            let filled = impute(series, stats.mean[c]);
            let mut full = series.clone();
            for (slot, v) in full.values.iter_mut().zip(filled) {
                *slot = Some(v);
            }
            ensure(impute(&full, stats.mean[c]) == filled, || {
                format!("impute not idempotent: stay {} channel {c}", row.icustay_id)
            })?;
            ensure(
                impute(&present(series), stats.mean[c]) == impute(&present(series), 0.0),
                || "fully observed series depends on the mean".into(),
            )?;
        }
        bins.insert(row.icustay_id, b);
    }

    let errored: HashSet<u64> = manifest.error_text.iter().map(|e| e.row_id).collect();
    let mut resolved = [0usize; 4];
    for e in &manifest.celsius {
        let (Some(b), Some(h)) = (bins.get(&e.icustay_id), e.hour) else {
            continue;
        };
        if errored.contains(&e.row_id) {
            continue;
        }
        let got = b.series[temp].values[h];
        ensure(got.is_some_and(|v| (v - e.fahrenheit).abs() < 1e-3), || {
            format!(
                "celsius row {}: binned {got:?}, wrote {} F",
                e.row_id, e.fahrenheit
            )
        })?;
        resolved[0] += 1;
    }
    let unparsed = events
        .values()
        .flatten()
        .filter(|e| e.value.is_none())
        .count();
    ensure(unparsed <= manifest.error_text.len(), || {
        format!(
            "{unparsed} unparseable events, {} injected",
            manifest.error_text.len()
        )
    })?;
    resolved[1] = unparsed;
    for d in &manifest.duplicates {
        let Some(b) = bins.get(&d.icustay_id) else {
            continue;
        };
        let c: Channel = d
            .channel
            .parse()
            .map_err(|_| format!("channel {}", d.channel))?;
        let got = b.series[c.index()].values[d.hour];
        ensure(got.is_some_and(|v| d.values.contains(&v)), || {
            format!(
                "duplicate cell {} {} h{}: {got:?} not in {:?}",
                d.icustay_id, d.channel, d.hour, d.values
            )
        })?;
        resolved[2] += 1;
    }
    for s in &manifest.missing_spans {
        let Some(b) = bins.get(&s.icustay_id) else {
            continue;
        };
        let c: Channel = s
            .channel
            .parse()
            .map_err(|_| format!("channel {}", s.channel))?;
        let series = &b.series[c.index()];
        let filled = impute(series, stats.mean[c.index()]);
        for h in s.start..s.end.min(HOURS) {
            ensure(series.values[h].is_none(), || {
                format!("span {} {} h{h} still observed", s.icustay_id, s.channel)
            })?;
            ensure(filled[h] == filled[s.start - 1], || {
                format!(
                    "span {} {} h{h} not carried forward",
                    s.icustay_id, s.channel
                )
            })?;
        }
        resolved[3] += 1;
    }
    ensure(resolved.iter().all(|&n| n > 0), || {
        format!("some anomaly kind never reached the cohort: {resolved:?}")
    })?;
    Ok(format!(
        "{} stays; in-cohort entries resolved: celsius {}, error text {}, duplicates {}, spans {}",
        tensors.len(),
        resolved[0],
        resolved[1],
        resolved[2],
        resolved[3]
    ))
}

fn ts(day: u32, hour: u32, min: u32, sec: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2150, 1, day)
        .unwrap()
        .and_hms_opt(hour, min, sec)
        .unwrap()
}

fn c5_cohort_rules() -> Check {
    const YEAR_S: i64 = 31_556_952;
    let base = ts(10, 8, 0, 0);
    let secs = chrono::Duration::seconds;
    let hours = |h: i64| secs(h * 3600);
    let mut t = CohortTables::default();
    // (subject, age in seconds before intime of the first stay, stays as (icustay, hadm, intime, los)).
    let mut patient =
        |subject: i64,
         age_s: i64,
         stays: &[(i64, i64, NaiveDateTime, Option<chrono::Duration>)]| {
            let first = stays.iter().map(|s| s.2).min().unwrap_or(base);
            t.patients.push(PatientRow {
                subject_id: subject,
                gender: Some("F".into()),
                dob: first - secs(age_s),
                dod: None,
            });
            for &(icu, hadm, intime, los) in stays {
                if !t.admissions.iter().any(|a| a.hadm_id == hadm) {
                    t.admissions.push(AdmissionRow {
                        subject_id: subject,
                        hadm_id: hadm,
                        admittime: Some(intime - hours(2)),
                        dischtime: Some(intime + hours(400)),
                        deathtime: None,
                        admission_type: "EMERGENCY".into(),
                        hospital_expire_flag: Some(false),
                    });
                }
                t.stays.push(IcuStayRow {
                    subject_id: subject,
                    hadm_id: hadm,
                    icustay_id: icu,
                    intime,
                    outtime: los.map(|d| intime + d),
                });
            }
        };
    let adult = 60 * YEAR_S;
    patient(1, adult, &[(101, 1001, base, Some(hours(72)))]);
    patient(
        2,
        16 * YEAR_S - YEAR_S / 10,
        &[(102, 1002, base, Some(hours(100)))],
    );
    patient(3, 16 * YEAR_S, &[(103, 1003, base, Some(hours(49)))]);
    patient(4, 70 * YEAR_S, &[(104, 1004, base, Some(hours(48)))]);
    patient(5, adult, &[(105, 1005, base, Some(hours(48) + secs(1)))]);
    // Short first stay, long readmission: the readmission never counts.
    patient(
        6,
        adult,
        &[
            (106, 1006, base, Some(hours(30))),
            (206, 1106, base + hours(24 * 90), Some(hours(100))),
        ],
    );
    patient(
        7,
        adult,
        &[
            (207, 1107, base + hours(24 * 40), Some(hours(80))),
            (107, 1007, base, Some(hours(72))),
        ],
    );
    // Second stay within the same admission.
    patient(
        8,
        adult,
        &[
            (108, 1008, base, Some(hours(60))),
            (208, 1008, base + hours(70), Some(hours(60))),
        ],
    );
    // De-identified elderly patient, DOB shifted 300 years.
    patient(9, 300 * YEAR_S, &[(109, 1009, base, Some(hours(50)))]);
    patient(10, adult, &[(110, 1010, base, None)]);
    patient(11, -YEAR_S, &[(111, 1011, base, Some(hours(90)))]);
    patient(12, 16 * YEAR_S - 1, &[(112, 1012, base, Some(hours(200)))]);
    patient(13, adult, &[(113, 1013, base, Some(hours(60)))]);
    patient(14, 0, &[(114, 1014, base, Some(hours(120)))]);
    patient(15, adult, &[(115, 1015, base, Some(hours(48) - secs(1)))]);
    patient(16, 45 * YEAR_S, &[(116, 1016, base, Some(hours(96)))]);
    patient(17, adult, &[(117, 1017, base, Some(hours(1000)))]);
    patient(18, 16 * YEAR_S, &[(118, 1018, base, Some(hours(48)))]);
    // Identical intimes: the lower ICUSTAY_ID is the first stay.
    patient(
        19,
        30 * YEAR_S,
        &[
            (219, 1019, base, Some(hours(20))),
            (119, 1019, base, Some(hours(55))),
        ],
    );
    patient(20, 89 * YEAR_S, &[(120, 1020, base, Some(hours(52)))]);
    // A stay whose subject has no PATIENTS row.
    t.admissions.push(AdmissionRow {
        subject_id: 99,
        hadm_id: 1099,
        admittime: Some(base),
        dischtime: Some(base + hours(300)),
        deathtime: None,
        admission_type: "EMERGENCY".into(),
        hospital_expire_flag: Some(false),
    });
    t.stays.push(IcuStayRow {
        subject_id: 99,
        hadm_id: 1099,
        icustay_id: 199,
        intime: base,
        outtime: Some(base + hours(100)),
    });
    // Patient 13 died in hospital; patient 16 had elective surgery.
    let a13 = t.admissions.iter_mut().find(|a| a.hadm_id == 1013).unwrap();
    a13.deathtime = Some(base + hours(200));
    a13.hospital_expire_flag = Some(true);
    t.admissions
        .iter_mut()
        .find(|a| a.hadm_id == 1016)
        .unwrap()
        .admission_type = "ELECTIVE".into();
    t.services.push(ServiceRow {
        subject_id: 16,
        hadm_id: 1016,
        transfertime: Some(base - hours(3)),
        curr_service: "CSURG".into(),
    });

    let (cohort, report) = build_cohort(&t, &CohortConfig::default()).map_err(|e| e.to_string())?;
    let got: BTreeSet<i64> = cohort.iter().map(|s| s.icustay_id).collect();
    let want: BTreeSet<i64> = [101, 103, 105, 107, 108, 109, 113, 116, 117, 119, 120].into();
    ensure(got == want, || {
        format!("included {got:?}, expected {want:?}")
    })?;
    let died: Vec<i64> = cohort
        .iter()
        .filter(|s| s.label_mortality)
        .map(|s| s.icustay_id)
        .collect();
    ensure(died == [113], || format!("deaths {died:?}"))?;
    let age = |id: i64| {
        cohort
            .iter()
            .find(|s| s.icustay_id == id)
            .unwrap()
            .age_years
    };
    ensure(age(103) == 16.0 && age(109) == 91.4, || {
        format!("ages {} {}", age(103), age(109))
    })?;
    Ok(format!(
        "{} of {} first stays included, matching the hand list",
        report.included, report.first_stays
    ))
}

fn test_aucs(out: &Path) -> Result<(f64, f64), String> {
    let text =
        std::fs::read_to_string(out.join(artifacts::METRICS_CSV)).map_err(|e| e.to_string())?;
    let auc = |model: &str| -> Result<f64, String> {
        text.lines()
            .find(|l| l.starts_with(&format!("{model},test,")))
            .and_then(|l| l.rsplit(',').next())
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("no test AUC for {model} in metrics.csv"))
    };
    Ok((auc("LSTM")?, auc("LR")?))
}

fn synthetic_run(out: &Path, patients: usize, mode: SignalMode) -> Result<(f64, f64), String> {
    let mut c = RunConfig::default();
    c.output_dir = Some(out.to_path_buf());
    c.seed = Some(7);
    c.synth.patients = Some(patients);
    c.synth.signal_mode = mode;
    run_all(&c).map_err(|e| e.to_string())?;
    test_aucs(out)
}

fn c6_ordering() -> Check {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (lstm, lr) = synthetic_run(a.path(), 2000, SignalMode::TemporalTrend)?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (lstm0, lr0) = synthetic_run(b.path(), 2000, SignalMode::None)?;
    let detail = format!(
        "temporal_trend LSTM {lstm:.3} LR {lr:.3}; none LSTM {lstm0:.3} LR {lr0:.3}; {:.0}s",
        start.elapsed().as_secs_f64()
    );
    ensure(lstm >= 0.85, || format!("LSTM AUC below 0.85: {detail}"))?;
    ensure(lstm - lr >= 0.05, || {
        format!("LSTM margin over LR below 0.05: {detail}")
    })?;
    for v in [lstm0, lr0] {
        ensure((0.42..=0.58).contains(&v), || {
            format!("no-signal AUC outside [0.42, 0.58]: {detail}")
        })?;
    }
    within(start.elapsed(), 600.0)?;
    Ok(detail)
}

fn c7_determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    synthetic_run(a.path(), 400, SignalMode::TemporalTrend)?;
    synthetic_run(b.path(), 400, SignalMode::TemporalTrend)?;
    let files = [
        artifacts::REPORT_TXT,
        artifacts::REPORT_CSV,
        artifacts::METRICS_CSV,
        artifacts::ROC_LSTM,
        artifacts::ROC_LR,
        artifacts::PREDICTIONS,
    ];
    for f in files {
        let x = std::fs::read(a.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    Ok(format!(
        "{} artifacts byte-identical across two run-all executions",
        files.len()
    ))
}

fn c8_real_data() -> Option<Check> {
    let dir = std::env::var_os("ICU_MIMIC_DIR")?;
    let dir = Path::new(&dir);
    Some((|| {
        let s = synth::describe_dir(dir, ErrorPolicy::Skip).map_err(|e| e.to_string())?;
        let close = |got: usize, want: f64| (got as f64 - want).abs() <= 0.01 * want;
        ensure(close(s.adult_patients, 38_597.0), || {
            format!("adult patients {}", s.adult_patients)
        })?;
        ensure(close(s.first_long_stays, 38_418.0), || {
            format!("first long stays {}", s.first_long_stays)
        })?;
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut c = RunConfig::default();
        c.input_dir = Some(dir.to_path_buf());
        c.output_dir = Some(out.path().to_path_buf());
        c.seed = Some(7);
        run_all(&c).map_err(|e| e.to_string())?;
        let (lstm, lr) = test_aucs(out.path())?;
        ensure((lstm - 0.600).abs() <= 0.05, || {
            format!("LSTM test AUC {lstm:.3}, LR {lr:.3}")
        })?;
        Ok(format!(
            "adult patients {}, first long stays {}, LSTM {lstm:.3}, LR {lr:.3}",
            s.adult_patients, s.first_long_stays
        ))
    })())
}

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_ascii_lowercase())
        .collect();
    let criteria: [(&str, &str, fn() -> Option<Check>); 8] = [
        ("c1", "gradient correctness", || Some(c1_gradients())),
        ("c2", "AUC oracle equivalence", || Some(c2_auc_oracle())),
        ("c3", "metric formulas", || Some(c3_metric_formulas())),
        ("c4", "cleaning fidelity", || Some(c4_cleaning_fidelity())),
        ("c5", "cohort rules", || Some(c5_cohort_rules())),
        ("c6", "model ordering on synthetic data", || {
            Some(c6_ordering())
        }),
        ("c7", "determinism", || Some(c7_determinism())),
        ("c8", "real-data check", c8_real_data),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let start = Instant::now();
        let line = match run() {
            Some(Ok(detail)) => format!("PASS {id} {name}: {detail}"),
            Some(Err(reason)) => {
                failed += 1;
                format!("FAIL {id} {name}: {reason}")
            }
            None => format!("SKIP {id} {name}: ICU_MIMIC_DIR not set"),
        };
        println!("{line} [{:.1}s]", start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
