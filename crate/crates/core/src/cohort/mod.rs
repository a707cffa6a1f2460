//! Cohort selection: first ICU stay per patient, adult stays longer than
//! 48 hours, in-hospital mortality label, static features and the
//! patient-level train/validation/test split.

mod icd;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;

pub use icd::{Comorbidities, ComorbidityFlag, IcdFlagRegistry, SHIPPED_ICD9_FLAGS};

use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::ingest::{
    files, format_timestamp, open_table, parse_timestamp, table_path, AdmissionRow, DiagnosisRow,
    ErrorPolicy, IcuStayRow, ParseStats, PatientRow, ServiceRow,
};
use crate::seed::SplitMix64;

/// De-identified ages above 89 come out near 300 years; they are reported as this.
pub const CLAMPED_AGE: f64 = 91.4;
/// Computed ages above this are treated as de-identification artifacts.
pub const AGE_SHIFT_THRESHOLD: f64 = 120.0;
pub const MIN_AGE_YEARS: f64 = 16.0;
pub const MIN_STAY_HOURS: f64 = 48.0;
pub const DAYS_PER_YEAR: f64 = 365.2425;
pub const SECONDS_PER_YEAR: f64 = 31_556_952.0;

pub const DEFAULT_SURGICAL_SERVICES: [&str; 8] = [
    "CSURG", "NSURG", "ORTHO", "PSURG", "SURG", "TSURG", "TRAUM", "VSURG",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdmissionCategory {
    ScheduledSurgical,
    UnscheduledSurgical,
    Medical,
}

impl AdmissionCategory {
    pub fn name(self) -> &'static str {
        match self {
            Self::ScheduledSurgical => "ScheduledSurgical",
            Self::UnscheduledSurgical => "UnscheduledSurgical",
            Self::Medical => "Medical",
        }
    }

    /// One-hot `[scheduled surgical, unscheduled surgical, medical]`.
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Self::ScheduledSurgical => [1.0, 0.0, 0.0],
            Self::UnscheduledSurgical => [0.0, 1.0, 0.0],
            Self::Medical => [0.0, 0.0, 1.0],
        }
    }
}

impl FromStr for AdmissionCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ScheduledSurgical" => Ok(Self::ScheduledSurgical),
            "UnscheduledSurgical" => Ok(Self::UnscheduledSurgical),
            "Medical" => Ok(Self::Medical),
            other => Err(Error::Data(format!("unknown admission category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split `{other}`"))),
        }
    }
}

/// An included first ICU stay.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortStay {
    pub icustay_id: i64,
    pub subject_id: i64,
    pub hadm_id: i64,
    pub intime: NaiveDateTime,
    pub outtime: NaiveDateTime,
    pub age_years: f64,
    pub admission_category: AdmissionCategory,
    pub aids: bool,
    pub hematologic_malignancy: bool,
    pub metastatic_cancer: bool,
    pub label_mortality: bool,
}

impl CohortStay {
    pub fn los_hours(&self) -> f64 {
        hours_between(self.intime, self.outtime)
    }
}

pub fn hours_between(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    (to - from).num_seconds() as f64 / 3600.0
}

/// Patient-level split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub assignments: BTreeMap<i64, Split>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn get(&self, subject_id: i64) -> Option<Split> {
        self.assignments.get(&subject_id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignments.values().filter(|&&s| s == split).count()
    }
}

/// Keeps the earliest stay of every subject; equal intimes go to the smaller
/// icustay_id. Output is ordered by subject_id.
pub fn first_stay_per_patient(stays: &[IcuStayRow]) -> Vec<IcuStayRow> {
    let mut best: BTreeMap<i64, &IcuStayRow> = BTreeMap::new();
    for stay in stays {
        best.entry(stay.subject_id)
            .and_modify(|cur| {
                if (stay.intime, stay.icustay_id) < (cur.intime, cur.icustay_id) {
                    *cur = stay;
                }
            })
            .or_insert(stay);
    }
    best.into_values().cloned().collect()
}

/// Age in years at `intime`, with de-identified elderly clamped to 91.4.
pub fn compute_age(dob: NaiveDateTime, intime: NaiveDateTime) -> Result<f64> {
    if dob > intime {
        return Err(Error::Data(format!(
            "date of birth {} is after ICU admission {}",
            format_timestamp(&dob),
            format_timestamp(&intime)
        )));
    }
    // Whole seconds over a whole-second year: exact at integer-year offsets.
    let age = (intime - dob).num_seconds() as f64 / SECONDS_PER_YEAR;
    Ok(if age > AGE_SHIFT_THRESHOLD {
        CLAMPED_AGE
    } else {
        age
    })
}

/// Adult (≥ 16 years) and strictly longer than 48 hours.
pub fn apply_inclusion(intime: NaiveDateTime, outtime: NaiveDateTime, age_years: f64) -> bool {
    age_years >= MIN_AGE_YEARS && hours_between(intime, outtime) > MIN_STAY_HOURS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MortalityLabel {
    pub died: bool,
    /// The death timestamp and the expire flag disagree.
    pub inconsistent: bool,
}

/// In-hospital death. A recorded death time wins over the expire flag.
pub fn label_mortality(hadm_id: i64, admission: Option<&AdmissionRow>) -> Result<MortalityLabel> {
    let adm =
        admission.ok_or_else(|| Error::Data(format!("no ADMISSIONS row for hadm_id {hadm_id}")))?;
    let died = adm.deathtime.is_some();
    let inconsistent = adm.hospital_expire_flag.is_some_and(|flag| flag != died);
    Ok(MortalityLabel { died, inconsistent })
}

pub fn comorbidity_flags<'a, I>(codes: I, registry: &IcdFlagRegistry) -> Comorbidities
where
    I: IntoIterator<Item = &'a str>,
{
    registry.flags(codes)
}

/// SAPS-II admission category from the admission type and the current service.
pub fn admission_category(
    admission_type: &str,
    curr_service: Option<&str>,
    surgical_services: &BTreeSet<String>,
) -> Result<AdmissionCategory> {
    let surgical = curr_service
        .map(|s| surgical_services.contains(&s.trim().to_ascii_uppercase()))
        .unwrap_or(false);
    match admission_type.trim().to_ascii_uppercase().as_str() {
        "NEWBORN" => Err(Error::Data(
            "NEWBORN admission reached admission categorization".into(),
        )),
        "ELECTIVE" if surgical => Ok(AdmissionCategory::ScheduledSurgical),
        "EMERGENCY" | "URGENT" if surgical => Ok(AdmissionCategory::UnscheduledSurgical),
        "ELECTIVE" | "EMERGENCY" | "URGENT" => Ok(AdmissionCategory::Medical),
        other => Err(Error::Data(format!("unknown admission type `{other}`"))),
    }
}

/// Shuffles a sorted copy of the ids with [`SplitMix64`] seeded by `seed`,
/// then takes ⌊0.2n⌋ for test, the next ⌊0.2n⌋ for validation, the rest for
/// training.
pub fn split_dataset(subject_ids: &[i64], seed: u64) -> Result<SplitAssignment> {
    let mut ids: Vec<i64> = subject_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    if n < 5 {
        return Err(Error::Data(format!(
            "cannot split {n} patients into non-empty train/val/test sets (need at least 5)"
        )));
    }
    SplitMix64::new(seed).shuffle(&mut ids);
    let n_test = n / 5;
    let n_val = n / 5;
    let assignments = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let split = if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
            (id, split)
        })
        .collect();
    Ok(SplitAssignment { assignments, seed })
}

#[derive(Debug, Clone)]
pub struct CohortConfig {
    pub icd: IcdFlagRegistry,
    pub surgical_services: BTreeSet<String>,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            icd: IcdFlagRegistry::default(),
            surgical_services: DEFAULT_SURGICAL_SERVICES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// The tables cohort selection reads.
#[derive(Debug, Clone, Default)]
pub struct CohortTables {
    pub patients: Vec<PatientRow>,
    pub admissions: Vec<AdmissionRow>,
    pub stays: Vec<IcuStayRow>,
    pub diagnoses: Vec<DiagnosisRow>,
    pub services: Vec<ServiceRow>,
    pub parse_stats: BTreeMap<String, ParseStats>,
}

impl CohortTables {
    pub fn load(dir: &Path, policy: ErrorPolicy) -> Result<Self> {
        fn read<T: crate::ingest::TableRecord>(
            dir: &Path,
            file: &str,
            policy: ErrorPolicy,
            stats: &mut BTreeMap<String, ParseStats>,
        ) -> Result<Vec<T>> {
            let path = table_path(dir, file);
            if !path.exists() {
                return Err(Error::MissingArtifact(path));
            }
            let (rows, s) = open_table::<T>(&path, policy)?.collect_all()?;
            stats.insert(file.to_string(), s);
            Ok(rows)
        }
        let mut stats = BTreeMap::new();
        Ok(Self {
            patients: read(dir, files::PATIENTS, policy, &mut stats)?,
            admissions: read(dir, files::ADMISSIONS, policy, &mut stats)?,
            stays: read(dir, files::ICUSTAYS, policy, &mut stats)?,
            diagnoses: read(dir, files::DIAGNOSES_ICD, policy, &mut stats)?,
            services: read(dir, files::SERVICES, policy, &mut stats)?,
            parse_stats: stats,
        })
    }
}

/// Counts from one cohort build.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CohortReport {
    pub stays_read: usize,
    pub first_stays: usize,
    pub excluded_no_patient: usize,
    pub excluded_bad_dob: usize,
    pub excluded_no_outtime: usize,
    pub excluded_age: usize,
    pub excluded_los: usize,
    pub included: usize,
    pub deaths: usize,
    pub label_inconsistencies: usize,
}

pub fn build_cohort(
    tables: &CohortTables,
    config: &CohortConfig,
) -> Result<(Vec<CohortStay>, CohortReport)> {
    let patients: HashMap<i64, &PatientRow> =
        tables.patients.iter().map(|p| (p.subject_id, p)).collect();
    let admissions: HashMap<i64, &AdmissionRow> =
        tables.admissions.iter().map(|a| (a.hadm_id, a)).collect();
    let mut codes: HashMap<i64, Vec<&str>> = HashMap::new();
    for d in &tables.diagnoses {
        if let Some(code) = d.icd9_code.as_deref() {
            codes.entry(d.hadm_id).or_default().push(code);
        }
    }
    // Earliest service of each admission.
    let mut service: HashMap<i64, &ServiceRow> = HashMap::new();
    for s in &tables.services {
        service
            .entry(s.hadm_id)
            .and_modify(|cur| {
                if (s.transfertime, &s.curr_service) < (cur.transfertime, &cur.curr_service) {
                    *cur = s;
                }
            })
            .or_insert(s);
    }

    let mut report = CohortReport {
        stays_read: tables.stays.len(),
        ..Default::default()
    };
    let firsts = first_stay_per_patient(&tables.stays);
    report.first_stays = firsts.len();

    let mut cohort = Vec::new();
    for stay in firsts {
        let Some(patient) = patients.get(&stay.subject_id) else {
            report.excluded_no_patient += 1;
            continue;
        };
        let Ok(age) = compute_age(patient.dob, stay.intime) else {
            report.excluded_bad_dob += 1;
            continue;
        };
        let Some(outtime) = stay.outtime else {
            report.excluded_no_outtime += 1;
            continue;
        };
        if !apply_inclusion(stay.intime, outtime, age) {
            if age < MIN_AGE_YEARS {
                report.excluded_age += 1;
            } else {
                report.excluded_los += 1;
            }
            continue;
        }
        let adm = admissions.get(&stay.hadm_id).copied();
        let label = label_mortality(stay.hadm_id, adm)?;
        let adm = adm.expect("label_mortality checked presence");
        if label.inconsistent {
            report.label_inconsistencies += 1;
        }
        let category = admission_category(
            &adm.admission_type,
            service.get(&stay.hadm_id).map(|s| s.curr_service.as_str()),
            &config.surgical_services,
        )?;
        let flags = comorbidity_flags(
            codes.get(&stay.hadm_id).into_iter().flatten().copied(),
            &config.icd,
        );
        report.deaths += usize::from(label.died);
        cohort.push(CohortStay {
            icustay_id: stay.icustay_id,
            subject_id: stay.subject_id,
            hadm_id: stay.hadm_id,
            intime: stay.intime,
            outtime,
            age_years: age,
            admission_category: category,
            aids: flags.aids,
            hematologic_malignancy: flags.hem_malig,
            metastatic_cancer: flags.metastatic,
            label_mortality: label.died,
        });
    }
    report.included = cohort.len();
    Ok((cohort, report))
}

/// One row of `cohort.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortRow {
    pub icustay_id: i64,
    pub subject_id: i64,
    pub hadm_id: i64,
    pub intime: NaiveDateTime,
    pub age_years: f64,
    pub admission_category: AdmissionCategory,
    pub aids: bool,
    pub hem_malig: bool,
    pub metastatic: bool,
    pub label: bool,
    pub split: Split,
}

impl CohortRow {
    pub fn new(stay: &CohortStay, split: Split) -> Self {
        Self {
            icustay_id: stay.icustay_id,
            subject_id: stay.subject_id,
            hadm_id: stay.hadm_id,
            intime: stay.intime,
            age_years: stay.age_years,
            admission_category: stay.admission_category,
            aids: stay.aids,
            hem_malig: stay.hematologic_malignancy,
            metastatic: stay.metastatic_cancer,
            label: stay.label_mortality,
            split,
        }
    }
}

pub const COHORT_HEADER: [&str; 11] = [
    "icustay_id",
    "subject_id",
    "hadm_id",
    "intime",
    "age_years",
    "admission_category",
    "aids",
    "hem_malig",
    "metastatic",
    "label",
    "split",
];

/// Attaches splits to the cohort, ordered by icustay_id.
pub fn cohort_rows(stays: &[CohortStay], splits: &SplitAssignment) -> Result<Vec<CohortRow>> {
    let mut rows = stays
        .iter()
        .map(|s| {
            let split = splits.get(s.subject_id).ok_or_else(|| {
                Error::Data(format!("subject {} has no split assignment", s.subject_id))
            })?;
            Ok(CohortRow::new(s, split))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.icustay_id);
    Ok(rows)
}

pub fn write_cohort<W: Write>(writer: W, rows: &[CohortRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COHORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.icustay_id.to_string(),
            r.subject_id.to_string(),
            r.hadm_id.to_string(),
            format_timestamp(&r.intime),
            sig9(r.age_years),
            r.admission_category.name().to_string(),
            u8::from(r.aids).to_string(),
            u8::from(r.hem_malig).to_string(),
            u8::from(r.metastatic).to_string(),
            u8::from(r.label).to_string(),
            r.split.name().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("cohort.csv", e))?;
    Ok(())
}

pub fn read_cohort<R: Read>(reader: R) -> Result<Vec<CohortRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(COHORT_HEADER.iter().copied()) {
        return Err(Error::Data(format!(
            "cohort file header is `{}`, expected `{}`",
            headers.iter().collect::<Vec<_>>().join(","),
            COHORT_HEADER.join(",")
        )));
    }
    let flag = |s: &str| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Data(format!("expected 0/1, found `{other}`"))),
    };
    let int = |s: &str| {
        s.parse::<i64>()
            .map_err(|_| Error::Data(format!("expected integer, found `{s}`")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(CohortRow {
            icustay_id: int(&rec[0])?,
            subject_id: int(&rec[1])?,
            hadm_id: int(&rec[2])?,
            intime: parse_timestamp(&rec[3])
                .ok_or_else(|| Error::Data(format!("bad intime `{}`", &rec[3])))?,
            age_years: rec[4]
                .parse()
                .map_err(|_| Error::Data(format!("bad age `{}`", &rec[4])))?,
            admission_category: rec[5].parse()?,
            aids: flag(&rec[6])?,
            hem_malig: flag(&rec[7])?,
            metastatic: flag(&rec[8])?,
            label: flag(&rec[9])?,
            split: rec[10].parse()?,
        });
    }
    Ok(rows)
}
