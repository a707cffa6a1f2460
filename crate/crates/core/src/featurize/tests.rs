use proptest::prelude::*;

use super::*;
use crate::cohort::AdmissionCategory;
use crate::ingest::parse_timestamp;

fn t(s: &str) -> NaiveDateTime {
    parse_timestamp(s).unwrap()
}

const INTIME: &str = "2101-01-01 00:00:00";

fn at(hour: i64, minute: i64) -> NaiveDateTime {
    t(INTIME) + chrono::Duration::minutes(hour * 60 + minute)
}

fn key(channel: Channel) -> PickKey {
    PickKey {
        seed: 11,
        stay_id: 5,
        channel,
        component: 0,
    }
}

fn series(values: &[(usize, f64)]) -> HourlySeries {
    let mut s = HourlySeries::empty(Channel::HeartRate);
    for &(h, v) in values {
        s.values[h] = Some(v);
    }
    s
}

#[test]
fn fahrenheit_conversion() {
    assert!((to_fahrenheit(37.0, Subrole::TempC) - 98.6).abs() < 1e-12);
    assert_eq!(to_fahrenheit(0.0, Subrole::TempC), 32.0);
    assert_eq!(to_fahrenheit(98.6, Subrole::TempF), 98.6);
}

#[test]
fn single_event_binned() {
    let evs = [TimedValue {
        charttime: at(3, 20),
        value: 80.0,
    }];
    let s = bin_hourly(&evs, t(INTIME), key(Channel::HeartRate));
    assert_eq!(s.values[3], Some(80.0));
    assert_eq!(s.observed().count(), 1);
}

#[test]
fn multiple_events_pick_is_keyed() {
    let evs: Vec<TimedValue> = (0..5)
        .map(|m| TimedValue {
            charttime: at(5, m * 10),
            value: 70.0 + m as f64,
        })
        .collect();
    let a = bin_hourly(&evs, t(INTIME), key(Channel::HeartRate));
    let mut rev = evs.clone();
    rev.reverse();
    let b = bin_hourly(&rev, t(INTIME), key(Channel::HeartRate));
    assert_eq!(a, b);
    let v = a.values[5].unwrap();
    assert!(evs.iter().any(|e| e.value == v));
    // Different stays draw independently; over many keys every value shows up.
    let picks: std::collections::BTreeSet<u64> = (0..200)
        .map(|stay| {
            let k = PickKey {
                stay_id: stay,
                ..key(Channel::HeartRate)
            };
            bin_hourly(&evs, t(INTIME), k).values[5].unwrap() as u64
        })
        .collect();
    assert_eq!(picks.len(), 5);
}

#[test]
fn window_is_half_open() {
    let evs = [
        TimedValue {
            charttime: at(48, 0),
            value: 1.0,
        },
        TimedValue {
            charttime: at(0, -1),
            value: 2.0,
        },
        TimedValue {
            charttime: at(47, 59),
            value: 3.0,
        },
        TimedValue {
            charttime: at(0, 0),
            value: 4.0,
        },
    ];
    let s = bin_hourly(&evs, t(INTIME), key(Channel::HeartRate));
    assert_eq!(s.observed().collect::<Vec<_>>(), vec![4.0, 3.0]);
    assert_eq!(s.values[47], Some(3.0));
}

#[test]
fn gcs_sum_requires_all_components() {
    let v = series(&[(0, 5.0), (1, 1.0)]);
    let m = series(&[(0, 6.0), (1, 1.0), (2, 6.0)]);
    let e = series(&[(0, 4.0), (1, 1.0), (2, 4.0)]);
    let g = aggregate_gcs(&v, &m, &e);
    assert_eq!(g.values[0], Some(15.0));
    assert_eq!(g.values[1], Some(3.0));
    assert_eq!(g.values[2], None);
    assert_eq!(g.channel, Channel::Gcs);
}

#[test]
fn impute_forward_then_backward() {
    let s = series(&[(1, 7.0), (4, 9.0)]);
    let out = impute(&s, 0.0);
    let mut want = [9.0; HOURS];
    want[..4].copy_from_slice(&[7.0, 7.0, 7.0, 7.0]);
    assert_eq!(out, want);
}

#[test]
fn impute_all_missing_uses_mean() {
    assert_eq!(
        impute(&HourlySeries::empty(Channel::Sbp), 80.0),
        [80.0; HOURS]
    );
}

#[test]
fn impute_full_series_unchanged() {
    let vals: Vec<(usize, f64)> = (0..HOURS).map(|h| (h, h as f64 * 1.5)).collect();
    let s = series(&vals);
    let out = impute(&s, -1.0);
    for h in 0..HOURS {
        assert_eq!(out[h], h as f64 * 1.5);
    }
}

fn bins_from(values: &[&[f64]]) -> StayBins {
    let mut series = Vec::new();
    for (c, vals) in values.iter().enumerate() {
        let mut s = HourlySeries::empty(Channel::ALL[c]);
        for (h, &v) in vals.iter().enumerate() {
            s.values[h] = Some(v);
        }
        series.push(s);
    }
    StayBins { series }
}

#[test]
fn population_stats_examples() {
    let mut cols: Vec<&[f64]> = vec![&[1.0]; N_CHANNELS];
    cols[0] = &[10.0, 20.0];
    cols[1] = &[7.0];
    let bins = bins_from(&cols);
    let stats = compute_population_stats([(&bins, 60.0)]).unwrap();
    assert_eq!(stats.mean[0], 15.0);
    assert_eq!(stats.sd[0], 5.0);
    assert_eq!((stats.mean[1], stats.sd[1]), (7.0, 0.0));
    assert_eq!((stats.age_mean, stats.age_sd), (60.0, 0.0));

    cols[4] = &[];
    let bins = bins_from(&cols);
    let err = compute_population_stats([(&bins, 60.0)]).unwrap_err();
    assert!(err.to_string().contains("PaO2"), "{err}");
}

fn stats_fixture() -> PopulationStats {
    PopulationStats {
        mean: std::array::from_fn(|c| 10.0 * (c + 1) as f64),
        sd: std::array::from_fn(|c| if c == 2 { 0.0 } else { 2.0 }),
        age_mean: 60.0,
        age_sd: 10.0,
    }
}

fn row_fixture() -> CohortRow {
    CohortRow {
        icustay_id: 5,
        subject_id: 1,
        hadm_id: 2,
        intime: t(INTIME),
        age_years: 70.0,
        admission_category: AdmissionCategory::Medical,
        aids: true,
        hem_malig: false,
        metastatic: false,
        label: true,
        split: Split::Train,
    }
}

#[test]
fn standardize_rules() {
    let stats = stats_fixture();
    let mut tensor = FeatureTensor {
        stay_id: 1,
        seq: [stats.mean; HOURS],
        static_features: [60.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        label: false,
    };
    let z = standardize(&tensor, &stats);
    assert!(z.seq.iter().flatten().all(|&v| v == 0.0));
    assert_eq!(&z.static_features[1..], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    assert_eq!(z.static_features[0], 0.0);
    tensor.seq[0][0] = stats.mean[0] + 2.0;
    assert_eq!(standardize(&tensor, &stats).seq[0][0], 1.0);
    // Zero-sd channel holding its constant value stays at zero.
    assert_eq!(standardize(&tensor, &stats).seq[0][2], 0.0);
}

fn ev(channel: Channel, subrole: Subrole, h: i64, m: i64, value: Option<f64>) -> StayEvent {
    StayEvent {
        channel,
        subrole,
        charttime: at(h, m),
        value,
    }
}

#[test]
fn empty_stay_is_population_means() {
    let stats = stats_fixture();
    let opts = FeaturizeOptions {
        standardize: false,
        ..FeaturizeOptions::new(1)
    };
    let tensor = build_tensor(&row_fixture(), &[], &stats, &opts);
    assert!(tensor.seq.iter().all(|row| *row == stats.mean));
    assert_eq!(tensor.static_features, [70.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    assert!(tensor.label);
}

/// Hand-placed events and the matrix traced by hand from the cleaning rules.
#[test]
fn golden_matrix() {
    use Channel::*;
    use Subrole as S;
    let events = vec![
        ev(HeartRate, S::Plain, 3, 10, Some(80.0)),
        ev(HeartRate, S::Plain, 10, 30, Some(90.0)),
        ev(HeartRate, S::Plain, 48, 0, Some(200.0)),
        ev(HeartRate, S::Plain, -1, 0, Some(10.0)),
        ev(TempF, S::TempC, 0, 0, Some(37.0)),
        ev(TempF, S::TempF, 20, 5, Some(100.4)),
        ev(Gcs, S::GcsVerbal, 2, 0, Some(5.0)),
        ev(Gcs, S::GcsMotor, 2, 10, Some(6.0)),
        ev(Gcs, S::GcsEyes, 2, 20, Some(4.0)),
        ev(Gcs, S::GcsVerbal, 5, 0, Some(3.0)),
        ev(Gcs, S::GcsMotor, 5, 0, Some(5.0)),
        ev(UrineOutput, S::Plain, 1, 15, Some(100.0)),
        ev(UrineOutput, S::Plain, 1, 45, Some(50.0)),
        ev(UrineOutput, S::UrineOutIrrigant, 6, 0, Some(300.0)),
        ev(UrineOutput, S::UrineInIrrigant, 6, 30, Some(200.0)),
        ev(Sodium, S::Plain, 4, 0, None),
        ev(Bun, S::Plain, 30, 0, Some(25.0)),
    ];
    let stats = stats_fixture();
    let opts = FeaturizeOptions {
        standardize: false,
        ..FeaturizeOptions::new(3)
    };
    let tensor = build_tensor(&row_fixture(), &events, &stats, &opts);

    let mut want = [[0.0; N_CHANNELS]; HOURS];
    for (h, row) in want.iter_mut().enumerate() {
        *row = stats.mean;
        row[Gcs.index()] = 15.0;
        row[HeartRate.index()] = if h < 10 { 80.0 } else { 90.0 };
        row[TempF.index()] = if h < 20 {
            37.0 * 9.0 / 5.0 + 32.0
        } else {
            100.4
        };
        row[UrineOutput.index()] = if h < 6 { 150.0 } else { 100.0 };
        row[Bun.index()] = 25.0;
    }
    for h in 0..HOURS {
        assert_eq!(tensor.seq[h], want[h], "hour {h}");
    }
    assert_eq!(tensor.stay_id, 5);
}

#[test]
fn literal_urine_picks_one_event() {
    let events = vec![
        ev(Channel::UrineOutput, Subrole::Plain, 1, 15, Some(100.0)),
        ev(Channel::UrineOutput, Subrole::Plain, 1, 45, Some(50.0)),
    ];
    let opts = FeaturizeOptions::literal_cleaning(3);
    let bins = bin_stay(5, t(INTIME), &events, &opts);
    let v = bins.series[Channel::UrineOutput.index()].values[1].unwrap();
    assert!(v == 100.0 || v == 50.0);
}

#[test]
fn tensors_round_trip_through_csv() {
    let stats = stats_fixture();
    let opts = FeaturizeOptions::new(3);
    let events = vec![ev(
        Channel::HeartRate,
        Subrole::Plain,
        3,
        0,
        Some(1.0 / 3.0),
    )];
    let tensor = build_tensor(&row_fixture(), &events, &stats, &opts);
    let dir = tempfile::tempdir().unwrap();
    let lt = LabeledTensor {
        tensor: tensor.clone(),
        split: Split::Val,
    };
    write_tensors(dir.path(), std::slice::from_ref(&lt)).unwrap();
    let back = read_tensors(dir.path()).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].split, Split::Val);
    for h in 0..HOURS {
        for c in 0..N_CHANNELS {
            let (a, b) = (tensor.seq[h][c], back[0].tensor.seq[h][c]);
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
    let text = std::fs::read_to_string(dir.path().join(SEQ_FILE)).unwrap();
    assert!(text.starts_with("stay_id,hour,c0,c1,c2,c3,c4,c5,c6,c7,c8,c9,c10,c11,c12\n"));
    let text = std::fs::read_to_string(dir.path().join(STATIC_FILE)).unwrap();
    assert!(text.starts_with("stay_id,age_s,cat_ss,cat_us,cat_med,aids,hem,met,label,split\n"));

    let path = dir.path().join(STATS_FILE);
    write_population_stats(&path, &stats).unwrap();
    assert_eq!(read_population_stats(&path).unwrap(), stats);
}

fn arb_series() -> impl Strategy<Value = HourlySeries> {
    proptest::collection::vec(proptest::option::weighted(0.3, -1e3f64..1e3), HOURS).prop_map(|v| {
        let mut s = HourlySeries::empty(Channel::Sbp);
        s.values.copy_from_slice(&v);
        s
    })
}

proptest! {
    #[test]
    fn impute_is_idempotent_and_preserves_observations(s in arb_series(), mean in -100.0f64..100.0) {
        let once = impute(&s, mean);
        let mut again = HourlySeries::empty(Channel::Sbp);
        for h in 0..HOURS {
            again.values[h] = Some(once[h]);
        }
        prop_assert_eq!(impute(&again, mean), once);
        for h in 0..HOURS {
            prop_assert!(once[h].is_finite());
            if let Some(v) = s.values[h] {
                prop_assert_eq!(once[h], v);
            }
        }
    }

    #[test]
    fn binning_ignores_event_order(
        raw in proptest::collection::vec((0i64..50 * 60, 0.0f64..100.0), 0..60),
        seed in any::<u64>(),
    ) {
        let evs: Vec<TimedValue> = raw
            .iter()
            .map(|&(m, v)| TimedValue { charttime: at(0, m), value: v })
            .collect();
        let mut rev = evs.clone();
        rev.reverse();
        let k = PickKey { seed, ..key(Channel::HeartRate) };
        prop_assert_eq!(bin_hourly(&evs, t(INTIME), k), bin_hourly(&rev, t(INTIME), k));
    }
}
