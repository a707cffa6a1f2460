//! Dataset summary in the layout of the usual MIMIC-III overview table.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::cohort::{compute_age, hours_between};
use crate::error::{Error, Result};
use crate::ingest::{
    files, open_table, table_path, AdmissionRow, ErrorPolicy, IcuStayRow, PatientRow,
};

pub const ADULT_AGE: f64 = 16.0;
pub const LONG_STAY_HOURS: f64 = 4.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub patients: usize,
    pub adult_patients: usize,
    pub median_adult_age: f64,
    /// Share of adult patients who died in a hospital admission holding one
    /// of their adult ICU stays.
    pub adult_mortality: f64,
    pub admissions: usize,
    pub icu_stays: usize,
    pub adult_icu_stays: usize,
    pub adult_long_stays: usize,
    pub first_long_stays: usize,
    pub avg_los_long_days: f64,
    pub avg_los_adult_days: f64,
    pub avg_los_first_long_days: f64,
    pub warnings: Vec<String>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 12] = [
            ("# of patients", self.patients.to_string()),
            ("# of adult patients", self.adult_patients.to_string()),
            (
                "Median age of adult patients",
                format!("{:.1} years", self.median_adult_age),
            ),
            (
                "In-hospital mortality of adult patients",
                format!("{:.1}%", 100.0 * self.adult_mortality),
            ),
            ("# of admissions", self.admissions.to_string()),
            ("# of ICU stays", self.icu_stays.to_string()),
            (
                "# of ICU stays of adult patients",
                self.adult_icu_stays.to_string(),
            ),
            (
                "# of long ICU stays of adult patients",
                self.adult_long_stays.to_string(),
            ),
            (
                "# of the first long ICU stay of adult patients",
                self.first_long_stays.to_string(),
            ),
            (
                "Avg. length of long ICU stays of adult patients",
                format!("{:.2} days", self.avg_los_long_days),
            ),
            (
                "Avg. length of ICU stays of adult patients",
                format!("{:.2} days", self.avg_los_adult_days),
            ),
            (
                "Avg. length of the first long ICU stays of adult patients",
                format!("{:.2} days", self.avg_los_first_long_days),
            ),
        ];
        for (label, value) in rows {
            writeln!(f, "{label:<58} {value}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Summary over parsed tables. Stays without OUTTIME count as ICU stays but
/// never as long stays, and add nothing to LOS averages.
pub fn describe(
    patients: &[PatientRow],
    admissions: &[AdmissionRow],
    stays: &[IcuStayRow],
) -> Result<Summary> {
    let mut s = Summary {
        patients: patients
            .iter()
            .map(|p| p.subject_id)
            .collect::<HashSet<_>>()
            .len(),
        admissions: admissions
            .iter()
            .map(|a| a.hadm_id)
            .collect::<HashSet<_>>()
            .len(),
        icu_stays: stays.len(),
        ..Summary::default()
    };
    if patients.is_empty() && admissions.is_empty() && stays.is_empty() {
        s.warnings.push("all tables are empty".into());
        return Ok(s);
    }
    let dob: HashMap<i64, _> = patients.iter().map(|p| (p.subject_id, p.dob)).collect();
    let died: HashMap<i64, bool> = admissions
        .iter()
        .map(|a| {
            (
                a.hadm_id,
                a.hospital_expire_flag.unwrap_or(false) || a.deathtime.is_some(),
            )
        })
        .collect();

    let mut sorted: Vec<&IcuStayRow> = stays.iter().collect();
    sorted.sort_by_key(|st| (st.subject_id, st.intime, st.icustay_id));
    // Per adult patient: age at first adult stay, death flag, first long stay LOS.
    let mut adults: BTreeMap<i64, (f64, bool, Option<f64>)> = BTreeMap::new();
    let mut los_adult = Vec::new();
    let mut los_long = Vec::new();
    let mut missing_dob = 0usize;
    for st in sorted {
        let Some(&d) = dob.get(&st.subject_id) else {
            missing_dob += 1;
            continue;
        };
        let age = match compute_age(d, st.intime) {
            Ok(a) => a,
            Err(Error::Data(_)) => continue,
            Err(e) => return Err(e),
        };
        if age < ADULT_AGE {
            continue;
        }
        s.adult_icu_stays += 1;
        let entry = adults.entry(st.subject_id).or_insert((age, false, None));
        entry.1 |= died.get(&st.hadm_id).copied().unwrap_or(false);
        let Some(out) = st.outtime else { continue };
        let hours = hours_between(st.intime, out);
        los_adult.push(hours / 24.0);
        if hours >= LONG_STAY_HOURS {
            s.adult_long_stays += 1;
            los_long.push(hours / 24.0);
            entry.2.get_or_insert(hours / 24.0);
        }
    }
    if missing_dob > 0 {
        s.warnings
            .push(format!("{missing_dob} ICU stays have no PATIENTS row"));
    }
    s.adult_patients = adults.len();
    let mut ages: Vec<f64> = adults.values().map(|a| a.0).collect();
    s.median_adult_age = median(&mut ages);
    if !adults.is_empty() {
        s.adult_mortality = adults.values().filter(|a| a.1).count() as f64 / adults.len() as f64;
    }
    let first_long: Vec<f64> = adults.values().filter_map(|a| a.2).collect();
    s.first_long_stays = first_long.len();
    s.avg_los_long_days = mean(&los_long);
    s.avg_los_adult_days = mean(&los_adult);
    s.avg_los_first_long_days = mean(&first_long);
    Ok(s)
}

/// Reads PATIENTS, ADMISSIONS and ICUSTAYS from `dir` and summarizes them.
pub fn describe_dir(dir: &Path, policy: ErrorPolicy) -> Result<Summary> {
    fn read<T: crate::ingest::TableRecord>(
        dir: &Path,
        file: &str,
        policy: ErrorPolicy,
    ) -> Result<Vec<T>> {
        let path = table_path(dir, file);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        Ok(open_table::<T>(&path, policy)?.collect_all()?.0)
    }
    describe(
        &read(dir, files::PATIENTS, policy)?,
        &read(dir, files::ADMISSIONS, policy)?,
        &read(dir, files::ICUSTAYS, policy)?,
    )
}
