//! Seeded generator of MIMIC-III-shaped CSV tables.
//!
//! Every patient and stay draws from its own keyed [`SplitMix64`] stream, so
//! the output is a pure function of the configuration. Only the columns the
//! pipeline reads carry values; the remaining MIMIC-III columns are present
//! and empty.
//!
//! Under [`SignalMode::TemporalTrend`] a positive stay's heart rate starts
//! `Δ = effect_size · σ` below the patient's own baseline and climbs back to
//! it over hours 24 to 47, while systolic pressure starts `Δ` above and falls
//! back. At hour 47 both classes share one distribution.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{files, format_timestamp, Channel, N_CHANNELS};
use crate::seed::SplitMix64;

mod anomalies;
mod describe;

pub use anomalies::{
    inject_anomalies, read_anomaly_manifest, AnomalyConfig, AnomalyManifest, CelsiusEntry,
    DuplicateEntry, ErrorTextEntry, MissingSpanEntry,
};
pub use describe::{describe, describe_dir, Summary};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Plausible body temperature in Fahrenheit.
pub const TEMP_F_PLAUSIBLE: (f64, f64) = (86.0, 113.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    None,
    StaticOnly,
    #[default]
    TemporalTrend,
}

impl SignalMode {
    pub fn name(self) -> &'static str {
        match self {
            SignalMode::None => "none",
            SignalMode::StaticOnly => "static_only",
            SignalMode::TemporalTrend => "temporal_trend",
        }
    }
}

impl fmt::Display for SignalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SignalMode::None),
            "static_only" => Ok(SignalMode::StaticOnly),
            "temporal_trend" => Ok(SignalMode::TemporalTrend),
            other => Err(Error::Config(format!(
                "unknown signal mode `{other}` (expected none, static_only or temporal_trend)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub mortality_rate: f64,
    /// Chance that a surviving patient comes back for a second admission.
    pub readmission_rate: f64,
    /// Ages drawn uniformly from this range; 89 and above get the shifted DOB.
    pub age_range: (f64, f64),
    /// Fraction of ICU stays lasting longer than 48 hours.
    pub long_stay_rate: f64,
    /// Per-channel chance that an hour has no measurement, in channel order.
    pub missing_rate: [f64; N_CHANNELS],
    pub signal_mode: SignalMode,
    pub effect_size: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(n_patients: usize, seed: u64) -> Self {
        Self {
            n_patients,
            mortality_rate: 0.115,
            readmission_rate: 0.1,
            age_range: (14.0, 95.0),
            long_stay_rate: 0.9,
            //             GCS  SBP   HR    Temp PaO2  FiO2 Urine BUN  WBC  HCO3  Na    K     Bili
            missing_rate: [
                0.5, 0.1, 0.05, 0.6, 0.85, 0.7, 0.3, 0.9, 0.9, 0.9, 0.9, 0.88, 0.95,
            ],
            signal_mode: SignalMode::TemporalTrend,
            effect_size: 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        if self.n_patients < 5 {
            return Err(Error::Config(format!(
                "n_patients must be at least 5, got {}",
                self.n_patients
            )));
        }
        unit("mortality_rate", self.mortality_rate)?;
        unit("readmission_rate", self.readmission_rate)?;
        unit("long_stay_rate", self.long_stay_rate)?;
        for (c, &r) in Channel::ALL.iter().zip(&self.missing_rate) {
            unit(&format!("missing_rate[{}]", c.name()), r)?;
        }
        let (lo, hi) = self.age_range;
        if !(lo >= 0.0 && hi >= lo && hi < 120.0) {
            return Err(Error::Config(format!(
                "age_range ({lo}, {hi}) is not within [0, 120)"
            )));
        }
        if !self.effect_size.is_finite() || self.effect_size < 0.0 {
            return Err(Error::Config(format!(
                "effect_size must be >= 0, got {}",
                self.effect_size
            )));
        }
        Ok(())
    }
}

/// Row counts per written table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthCounts {
    pub patients: usize,
    pub admissions: usize,
    pub icustays: usize,
    pub chartevents: usize,
    pub labevents: usize,
    pub outputevents: usize,
    pub diagnoses: usize,
    pub services: usize,
    pub deaths: usize,
}

const PATIENT_COLS: [&str; 8] = [
    "ROW_ID",
    "SUBJECT_ID",
    "GENDER",
    "DOB",
    "DOD",
    "DOD_HOSP",
    "DOD_SSN",
    "EXPIRE_FLAG",
];
const ADMISSION_COLS: [&str; 19] = [
    "ROW_ID",
    "SUBJECT_ID",
    "HADM_ID",
    "ADMITTIME",
    "DISCHTIME",
    "DEATHTIME",
    "ADMISSION_TYPE",
    "ADMISSION_LOCATION",
    "DISCHARGE_LOCATION",
    "INSURANCE",
    "LANGUAGE",
    "RELIGION",
    "MARITAL_STATUS",
    "ETHNICITY",
    "EDREGTIME",
    "EDOUTTIME",
    "DIAGNOSIS",
    "HOSPITAL_EXPIRE_FLAG",
    "HAS_CHARTEVENTS_DATA",
];
const ICUSTAY_COLS: [&str; 12] = [
    "ROW_ID",
    "SUBJECT_ID",
    "HADM_ID",
    "ICUSTAY_ID",
    "DBSOURCE",
    "FIRST_CAREUNIT",
    "LAST_CAREUNIT",
    "FIRST_WARDID",
    "LAST_WARDID",
    "INTIME",
    "OUTTIME",
    "LOS",
];
pub(crate) const CHART_COLS: [&str; 15] = [
    "ROW_ID",
    "SUBJECT_ID",
    "HADM_ID",
    "ICUSTAY_ID",
    "ITEMID",
    "CHARTTIME",
    "STORETIME",
    "CGID",
    "VALUE",
    "VALUENUM",
    "VALUEUOM",
    "WARNING",
    "ERROR",
    "RESULTSTATUS",
    "STOPPED",
];
pub(crate) const LAB_COLS: [&str; 9] = [
    "ROW_ID",
    "SUBJECT_ID",
    "HADM_ID",
    "ITEMID",
    "CHARTTIME",
    "VALUE",
    "VALUENUM",
    "VALUEUOM",
    "FLAG",
];
const OUTPUT_COLS: [&str; 13] = [
    "ROW_ID",
    "SUBJECT_ID",
    "HADM_ID",
    "ICUSTAY_ID",
    "CHARTTIME",
    "ITEMID",
    "VALUE",
    "VALUEUOM",
    "STORETIME",
    "CGID",
    "STOPPED",
    "NEWBOTTLE",
    "ISERROR",
];
const DIAGNOSIS_COLS: [&str; 5] = ["ROW_ID", "SUBJECT_ID", "HADM_ID", "SEQ_NUM", "ICD9_CODE"];
const SERVICE_COLS: [&str; 6] = [
    "ROW_ID",
    "SUBJECT_ID",
    "HADM_ID",
    "TRANSFERTIME",
    "PREV_SERVICE",
    "CURR_SERVICE",
];

/// A CSV writer that fills a fixed MIMIC column list by name.
struct Table {
    w: csv::Writer<std::fs::File>,
    cols: &'static [&'static str],
    rows: usize,
    path: std::path::PathBuf,
}

impl Table {
    fn create(dir: &Path, file: &str, cols: &'static [&'static str]) -> Result<Self> {
        let path = dir.join(file);
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(cols)?;
        Ok(Self {
            w,
            cols,
            rows: 0,
            path,
        })
    }

    /// Writes one row; ROW_ID is filled automatically, absent columns stay empty.
    fn row(&mut self, cells: &[(&str, String)]) -> Result<()> {
        self.rows += 1;
        let mut rec = vec![String::new(); self.cols.len()];
        rec[0] = self.rows.to_string();
        for (name, v) in cells {
            let i = self
                .cols
                .iter()
                .position(|c| c == name)
                .unwrap_or_else(|| panic!("column {name} not in table"));
            rec[i] = v.clone();
        }
        self.w.write_record(&rec)?;
        Ok(())
    }

    fn finish(mut self) -> Result<usize> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.rows)
    }
}

struct Writers {
    patients: Table,
    admissions: Table,
    icustays: Table,
    chart: Table,
    lab: Table,
    output: Table,
    diagnoses: Table,
    services: Table,
}

/// Patient-level draws shared by all of a patient's stays.
struct PatientDraw {
    subject_id: i64,
    age: f64,
    died: bool,
    /// Per-channel baselines in raw units.
    baseline: [f64; N_CHANNELS],
    /// GCS component baselines (verbal, motor, eyes).
    gcs: [f64; 3],
    metavision: bool,
    celsius_native: bool,
}

/// (mean, between-patient sd, within-patient sd, min, max) per channel. GCS is
/// handled by components.
const CHANNEL_LAW: [(f64, f64, f64, f64, f64); N_CHANNELS] = [
    (0.0, 0.0, 0.0, 3.0, 15.0),
    (120.0, 15.0, 8.0, 50.0, 230.0),
    (85.0, 12.0, 5.0, 30.0, 200.0),
    (98.6, 0.8, 0.4, 93.0, 106.0),
    (95.0, 20.0, 10.0, 30.0, 500.0),
    (40.0, 10.0, 5.0, 21.0, 100.0),
    (70.0, 20.0, 30.0, 0.0, 1000.0),
    (25.0, 10.0, 3.0, 2.0, 150.0),
    (11.0, 4.0, 1.5, 0.5, 80.0),
    (24.0, 3.0, 1.5, 8.0, 45.0),
    (139.0, 4.0, 1.5, 115.0, 165.0),
    (4.1, 0.5, 0.3, 2.0, 7.5),
    (1.0, 0.8, 0.2, 0.1, 30.0),
];

fn normal(rng: &mut SplitMix64) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn ts(t: NaiveDateTime) -> String {
    format_timestamp(&t)
}

fn num(v: f64) -> String {
    format!("{}", (v * 100.0).round() / 100.0)
}

fn hours(h: f64) -> Duration {
    Duration::seconds((h * 3600.0).round() as i64)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl PatientDraw {
    fn new(config: &SynthConfig, index: usize) -> Self {
        let mut rng = SplitMix64::keyed(config.seed, "synth.patient", &[index as u64]);
        let (lo, hi) = config.age_range;
        let age = lo + (hi - lo) * rng.next_f64();
        let z_static = normal(&mut rng);
        let died = match config.signal_mode {
            SignalMode::StaticOnly => {
                let age_z = (age - 60.0) / 18.0;
                let z = logit(config.mortality_rate.clamp(1e-6, 1.0 - 1e-6))
                    + config.effect_size * (0.8 * age_z + 0.4 * z_static);
                rng.next_f64() < 1.0 / (1.0 + (-z).exp())
            }
            _ => rng.next_f64() < config.mortality_rate,
        };
        let mut baseline = [0.0; N_CHANNELS];
        for (c, law) in CHANNEL_LAW.iter().enumerate() {
            baseline[c] = law.0 + law.1 * normal(&mut rng);
        }
        let consciousness = normal(&mut rng).abs();
        let gcs = [
            5.0 - 1.3 * consciousness,
            6.0 - 1.4 * consciousness,
            4.0 - 1.0 * consciousness,
        ];
        Self {
            subject_id: 10_000 + index as i64,
            age,
            died,
            baseline,
            gcs,
            metavision: rng.next_f64() < 0.5,
            celsius_native: rng.next_f64() < 0.3,
        }
    }

    /// Static-only signal: comorbidity codes tilt toward positives.
    fn comorbidity_probs(&self, config: &SynthConfig) -> [f64; 3] {
        let base = [0.01, 0.03, 0.05];
        if config.signal_mode == SignalMode::StaticOnly && self.died {
            base.map(|p| (p * (1.0 + 2.0 * config.effect_size)).min(0.9))
        } else {
            base
        }
    }
}

struct StayPlan {
    subject_id: i64,
    hadm_id: i64,
    icustay_id: i64,
    intime: NaiveDateTime,
    los_hours: f64,
    /// Trend applies only to the stay whose admission ends in death.
    positive: bool,
}

/// Writes all eight tables plus `manifest.json` into `dir`.
pub fn generate(config: &SynthConfig, dir: &Path) -> Result<SynthCounts> {
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = Writers {
        patients: Table::create(dir, files::PATIENTS, &PATIENT_COLS)?,
        admissions: Table::create(dir, files::ADMISSIONS, &ADMISSION_COLS)?,
        icustays: Table::create(dir, files::ICUSTAYS, &ICUSTAY_COLS)?,
        chart: Table::create(dir, files::CHARTEVENTS, &CHART_COLS)?,
        lab: Table::create(dir, files::LABEVENTS, &LAB_COLS)?,
        output: Table::create(dir, files::OUTPUTEVENTS, &OUTPUT_COLS)?,
        diagnoses: Table::create(dir, files::DIAGNOSES_ICD, &DIAGNOSIS_COLS)?,
        services: Table::create(dir, files::SERVICES, &SERVICE_COLS)?,
    };
    let mut deaths = 0;
    let mut next_hadm = 100_000i64;
    let mut next_stay = 200_000i64;
    for index in 0..config.n_patients {
        let p = PatientDraw::new(config, index);
        let mut rng = SplitMix64::keyed(config.seed, "synth.admission", &[index as u64]);
        let year = 2100 + rng.below(80) as i32;
        let day = rng.below(365) as u64;
        let admit = NaiveDate::from_ymd_opt(year, 1, 1)
            .expect("valid year")
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            + Duration::days(day as i64)
            + Duration::minutes(rng.below(24 * 60) as i64);
        // Ages of 89 and above are hidden behind a ~300-year DOB shift.
        let age_years = if p.age >= 89.0 {
            300.0 + rng.next_f64()
        } else {
            p.age
        };
        let dob = (admit - Duration::seconds((age_years * 365.2425 * 86_400.0) as i64))
            .date()
            .and_hms_opt(0, 0, 0)
            .expect("midnight");

        let mut admissions = vec![(admit, p.died)];
        if !p.died && rng.next_f64() < config.readmission_rate {
            let later = admit + Duration::days(30 + rng.below(400) as i64);
            admissions.push((later, false));
        }

        let mut dod = None;
        for (k, &(admittime, died)) in admissions.iter().enumerate() {
            let hadm_id = next_hadm;
            next_hadm += 1;
            let icustay_id = next_stay;
            next_stay += 1;
            let intime = admittime + Duration::minutes(30 + rng.below(12 * 60) as i64);
            let los_hours = if rng.next_f64() < config.long_stay_rate {
                48.5 + 190.0 * rng.next_f64()
            } else {
                4.0 + 43.0 * rng.next_f64()
            };
            let outtime = intime + hours(los_hours);
            let deathtime = died.then(|| outtime - Duration::minutes(rng.below(120) as i64));
            let dischtime =
                deathtime.unwrap_or(outtime + Duration::hours(12 + rng.below(200) as i64));
            if died {
                dod = deathtime;
                deaths += 1;
            }
            let adm_type = match rng.below(20) {
                0..=2 => "ELECTIVE",
                3 => "URGENT",
                _ => "EMERGENCY",
            };
            w.admissions.row(&[
                ("SUBJECT_ID", p.subject_id.to_string()),
                ("HADM_ID", hadm_id.to_string()),
                ("ADMITTIME", ts(admittime)),
                ("DISCHTIME", ts(dischtime)),
                ("DEATHTIME", deathtime.map(ts).unwrap_or_default()),
                ("ADMISSION_TYPE", adm_type.to_string()),
                ("HOSPITAL_EXPIRE_FLAG", u8::from(died).to_string()),
                ("HAS_CHARTEVENTS_DATA", "1".into()),
            ])?;
            w.icustays.row(&[
                ("SUBJECT_ID", p.subject_id.to_string()),
                ("HADM_ID", hadm_id.to_string()),
                ("ICUSTAY_ID", icustay_id.to_string()),
                (
                    "DBSOURCE",
                    if p.metavision {
                        "metavision"
                    } else {
                        "carevue"
                    }
                    .into(),
                ),
                ("FIRST_CAREUNIT", "MICU".into()),
                ("LAST_CAREUNIT", "MICU".into()),
                ("INTIME", ts(intime)),
                ("OUTTIME", ts(outtime)),
                ("LOS", format!("{:.4}", los_hours / 24.0)),
            ])?;

            // First service decides the category; a later transfer must not.
            let surgical = rng.next_f64() < 0.4;
            let first = if surgical {
                ["SURG", "CSURG", "NSURG", "TSURG", "ORTHO"][rng.below(5)]
            } else {
                ["MED", "CMED", "NMED", "OMED"][rng.below(4)]
            };
            w.services.row(&[
                ("SUBJECT_ID", p.subject_id.to_string()),
                ("HADM_ID", hadm_id.to_string()),
                ("TRANSFERTIME", ts(admittime)),
                ("CURR_SERVICE", first.to_string()),
            ])?;
            if rng.next_f64() < 0.2 {
                w.services.row(&[
                    ("SUBJECT_ID", p.subject_id.to_string()),
                    ("HADM_ID", hadm_id.to_string()),
                    ("TRANSFERTIME", ts(intime + Duration::hours(20))),
                    ("PREV_SERVICE", first.to_string()),
                    (
                        "CURR_SERVICE",
                        if surgical { "MED" } else { "SURG" }.to_string(),
                    ),
                ])?;
            }

            let mut codes: Vec<&str> = Vec::new();
            let probs = p.comorbidity_probs(config);
            for (prob, pool) in probs.iter().zip([
                &["042", "0431", "0449"][..],
                &["2030", "20410", "2024", "20800"][..],
                &["1970", "1983", "1985", "1991"][..],
            ]) {
                if rng.next_f64() < *prob {
                    codes.push(pool[rng.below(pool.len())]);
                }
            }
            let filler = ["4019", "4280", "5849", "25000", "2724", "51881", "V5861"];
            for _ in 0..1 + rng.below(4) {
                codes.push(filler[rng.below(filler.len())]);
            }
            for (seq, code) in codes.iter().enumerate() {
                w.diagnoses.row(&[
                    ("SUBJECT_ID", p.subject_id.to_string()),
                    ("HADM_ID", hadm_id.to_string()),
                    ("SEQ_NUM", (seq + 1).to_string()),
                    ("ICD9_CODE", code.to_string()),
                ])?;
            }

            let plan = StayPlan {
                subject_id: p.subject_id,
                hadm_id,
                icustay_id,
                intime,
                los_hours,
                positive: died && k == 0,
            };
            write_events(config, &p, &plan, &mut w)?;
        }

        w.patients.row(&[
            ("SUBJECT_ID", p.subject_id.to_string()),
            (
                "GENDER",
                if rng.next_f64() < 0.56 { "M" } else { "F" }.into(),
            ),
            ("DOB", ts(dob)),
            ("DOD", dod.map(ts).unwrap_or_default()),
            ("DOD_HOSP", dod.map(ts).unwrap_or_default()),
            ("EXPIRE_FLAG", u8::from(dod.is_some()).to_string()),
        ])?;
    }

    let counts = SynthCounts {
        patients: w.patients.finish()?,
        admissions: w.admissions.finish()?,
        icustays: w.icustays.finish()?,
        chartevents: w.chart.finish()?,
        labevents: w.lab.finish()?,
        outputevents: w.output.finish()?,
        diagnoses: w.diagnoses.finish()?,
        services: w.services.finish()?,
        deaths,
    };
    let manifest = serde_json::json!({
        "generator": "icu-mortality synth",
        "seed": config.seed,
        "config": config,
        "counts": counts,
    });
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(counts)
}

/// Drift at hour `h` for a positive stay: 1 through hour 23, then a linear
/// return to 0 at hour 47.
pub fn trend_weight(h: usize) -> f64 {
    if h < 24 {
        1.0
    } else {
        (47.0 - h as f64).max(0.0) / 23.0
    }
}

fn write_events(
    config: &SynthConfig,
    p: &PatientDraw,
    s: &StayPlan,
    w: &mut Writers,
) -> Result<()> {
    let mut rng = SplitMix64::keyed(config.seed, "synth.events", &[s.icustay_id as u64]);
    let ids = |t: &mut Table, extra: &[(&str, String)]| -> Result<()> {
        let mut cells = vec![
            ("SUBJECT_ID", s.subject_id.to_string()),
            ("HADM_ID", s.hadm_id.to_string()),
        ];
        cells.extend_from_slice(extra);
        t.row(&cells)
    };
    let trend = s.positive && config.signal_mode == SignalMode::TemporalTrend;
    let delta = |c: Channel| config.effect_size * CHANNEL_LAW[c.index()].1;
    // A few hours past the 48-hour window, so the window filter has work to do.
    let last_hour = (s.los_hours.floor() as usize).min(52);
    let mv = p.metavision;

    // One pre-admission-window lab, outside [intime, intime + 48h).
    let early = s.intime - Duration::hours(3);
    ids(
        &mut w.lab,
        &[
            ("ITEMID", "50983".into()),
            ("CHARTTIME", ts(early)),
            ("VALUE", num(p.baseline[Channel::Sodium.index()])),
            ("VALUENUM", num(p.baseline[Channel::Sodium.index()])),
            ("VALUEUOM", "mEq/L".into()),
        ],
    )?;

    let sbp_item = if mv {
        ["220179", "220050"][rng.below(2)]
    } else {
        ["51", "442", "455", "6701"][rng.below(4)]
    };
    let irrigant = mv && rng.next_f64() < 0.05;

    for h in 0..=last_hour {
        let at = |rng: &mut SplitMix64| {
            s.intime + Duration::hours(h as i64) + Duration::minutes(rng.below(60) as i64)
        };
        let observed =
            |rng: &mut SplitMix64, c: Channel| rng.next_f64() >= config.missing_rate[c.index()];
        let value = |rng: &mut SplitMix64, c: Channel| {
            let law = CHANNEL_LAW[c.index()];
            let mut v = p.baseline[c.index()] + law.2 * normal(rng);
            if trend && h < 48 {
                let d = delta(c) * trend_weight(h);
                match c {
                    Channel::HeartRate => v -= d,
                    Channel::Sbp => v += d,
                    _ => {}
                }
            }
            v.clamp(law.3, law.4)
        };
        let chart = |t: &mut Table, item: &str, when: NaiveDateTime, v: String, unit: &str| {
            ids(
                t,
                &[
                    ("ICUSTAY_ID", s.icustay_id.to_string()),
                    ("ITEMID", item.to_string()),
                    ("CHARTTIME", ts(when)),
                    ("VALUE", v.clone()),
                    ("VALUENUM", v),
                    ("VALUEUOM", unit.to_string()),
                ],
            )
        };

        // GCS: three components charted together, now and then one is skipped.
        if observed(&mut rng, Channel::Gcs) {
            let when = at(&mut rng);
            let items = if mv {
                ["223900", "223901", "220739"]
            } else {
                ["723", "454", "184"]
            };
            let skip = if rng.next_f64() < 0.05 {
                rng.below(3)
            } else {
                3
            };
            for (k, item) in items.iter().enumerate() {
                if k == skip {
                    continue;
                }
                let max = [5.0, 6.0, 4.0][k];
                let v = (p.gcs[k] + 0.4 * normal(&mut rng)).round().clamp(1.0, max);
                chart(&mut w.chart, item, when, format!("{v}"), "points")?;
            }
        }
        if observed(&mut rng, Channel::Sbp) {
            let when = at(&mut rng);
            let v = value(&mut rng, Channel::Sbp);
            chart(&mut w.chart, sbp_item, when, num(v), "mmHg")?;
        }
        if observed(&mut rng, Channel::HeartRate) {
            let when = at(&mut rng);
            let v = value(&mut rng, Channel::HeartRate);
            chart(
                &mut w.chart,
                if mv { "220045" } else { "211" },
                when,
                num(v),
                "bpm",
            )?;
        }
        if observed(&mut rng, Channel::TempF) {
            let when = at(&mut rng);
            let f = value(&mut rng, Channel::TempF);
            if p.celsius_native {
                let c = (f - 32.0) * 5.0 / 9.0;
                chart(
                    &mut w.chart,
                    if mv { "223762" } else { "676" },
                    when,
                    num(c),
                    "?C",
                )?;
            } else {
                chart(
                    &mut w.chart,
                    if mv { "223761" } else { "678" },
                    when,
                    num(f),
                    "?F",
                )?;
            }
        }
        if observed(&mut rng, Channel::FiO2) {
            let when = at(&mut rng);
            let v = value(&mut rng, Channel::FiO2);
            if rng.next_f64() < 0.3 {
                ids(
                    &mut w.lab,
                    &[
                        ("ITEMID", "50816".into()),
                        ("CHARTTIME", ts(when)),
                        ("VALUE", num(v)),
                        ("VALUENUM", num(v)),
                        ("VALUEUOM", "%".into()),
                    ],
                )?;
            } else {
                let item = if mv {
                    "223835"
                } else {
                    ["3420", "3422"][rng.below(2)]
                };
                chart(&mut w.chart, item, when, num(v), "%")?;
            }
        }
        if observed(&mut rng, Channel::UrineOutput) {
            let items: &[&str] = if mv {
                &[
                    "226559", "226560", "226561", "226584", "226563", "226564", "226565", "226567",
                    "226557", "226558",
                ]
            } else {
                &[
                    "40055", "43175", "40069", "40094", "40715", "40473", "40085", "40057",
                    "40056", "40405", "40428", "40086", "40096", "40651",
                ]
            };
            let events = if rng.next_f64() < 0.2 { 2 } else { 1 };
            for _ in 0..events {
                let when = at(&mut rng);
                let v = value(&mut rng, Channel::UrineOutput).round();
                ids(
                    &mut w.output,
                    &[
                        ("ICUSTAY_ID", s.icustay_id.to_string()),
                        ("CHARTTIME", ts(when)),
                        ("ITEMID", items[rng.below(items.len())].to_string()),
                        ("VALUE", format!("{v}")),
                        ("VALUEUOM", "ml".into()),
                    ],
                )?;
            }
            if irrigant {
                let when = at(&mut rng);
                let inflow = 100.0 + (20.0 * rng.next_f64()).round();
                let urine = value(&mut rng, Channel::UrineOutput).round();
                for (item, v) in [("227488", inflow), ("227489", inflow + urine)] {
                    ids(
                        &mut w.output,
                        &[
                            ("ICUSTAY_ID", s.icustay_id.to_string()),
                            ("CHARTTIME", ts(when)),
                            ("ITEMID", item.to_string()),
                            ("VALUE", format!("{v}")),
                            ("VALUEUOM", "ml".into()),
                        ],
                    )?;
                }
            }
        }
        for (c, items, unit) in [
            (Channel::PaO2, &["50821"][..], "mm Hg"),
            (Channel::Bun, &["51006"][..], "mg/dL"),
            (Channel::Wbc, &["51300", "51301"][..], "K/uL"),
            (Channel::Bicarbonate, &["50882"][..], "mEq/L"),
            (Channel::Sodium, &["50983"][..], "mEq/L"),
            (Channel::Potassium, &["50971", "50822"][..], "mEq/L"),
            (Channel::Bilirubin, &["50885"][..], "mg/dL"),
        ] {
            if !observed(&mut rng, c) {
                continue;
            }
            let when = at(&mut rng);
            let v = value(&mut rng, c);
            let mut item = items[rng.below(items.len())];
            if c == Channel::Sodium && rng.next_f64() < 0.02 {
                item = "950824";
            }
            ids(
                &mut w.lab,
                &[
                    ("ITEMID", item.to_string()),
                    ("CHARTTIME", ts(when)),
                    ("VALUE", num(v)),
                    ("VALUENUM", num(v)),
                    ("VALUEUOM", unit.to_string()),
                ],
            )?;
        }
    }
    Ok(())
}
