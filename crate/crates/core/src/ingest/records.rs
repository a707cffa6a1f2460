use chrono::NaiveDateTime;

use super::table::{cell_i64, cell_time, opt, req, required, TableRecord, TableSchema};

/// One timestamped measurement from CHARTEVENTS, LABEVENTS or OUTPUTEVENTS.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub subject_id: i64,
    pub hadm_id: Option<i64>,
    pub icustay_id: Option<i64>,
    pub item_id: i64,
    pub charttime: NaiveDateTime,
    pub value_num: Option<f64>,
    pub value_text: Option<String>,
    pub unit: Option<String>,
}

impl TableRecord for RawEvent {
    const SCHEMA: TableSchema = TableSchema {
        table: "events",
        columns: &[
            req("SUBJECT_ID"),
            opt("HADM_ID"),
            opt("ICUSTAY_ID"),
            req("ITEMID"),
            req("CHARTTIME"),
            opt("VALUENUM"),
            opt("VALUE"),
            opt("VALUEUOM"),
        ],
    };

    fn from_cells(c: &[Option<&str>]) -> Result<Self, String> {
        let item_id = required(cell_i64(c[3], "ITEMID")?, "ITEMID")?;
        if item_id <= 0 {
            return Err(format!("ITEMID must be positive, got {item_id}"));
        }
        let value_num = c[5]
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite());
        let value_text = c[6].map(str::to_string);
        if value_num.is_none() && value_text.is_none() {
            return Err("no value".into());
        }
        Ok(RawEvent {
            subject_id: required(cell_i64(c[0], "SUBJECT_ID")?, "SUBJECT_ID")?,
            hadm_id: cell_i64(c[1], "HADM_ID")?,
            icustay_id: cell_i64(c[2], "ICUSTAY_ID")?,
            item_id,
            charttime: required(cell_time(c[4], "CHARTTIME")?, "CHARTTIME")?,
            value_num,
            value_text,
            unit: c[7].map(str::to_string),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRow {
    pub subject_id: i64,
    pub gender: Option<String>,
    pub dob: NaiveDateTime,
    pub dod: Option<NaiveDateTime>,
}

impl TableRecord for PatientRow {
    const SCHEMA: TableSchema = TableSchema {
        table: "PATIENTS",
        columns: &[req("SUBJECT_ID"), opt("GENDER"), req("DOB"), opt("DOD")],
    };

    fn from_cells(c: &[Option<&str>]) -> Result<Self, String> {
        Ok(PatientRow {
            subject_id: required(cell_i64(c[0], "SUBJECT_ID")?, "SUBJECT_ID")?,
            gender: c[1].map(str::to_string),
            dob: required(cell_time(c[2], "DOB")?, "DOB")?,
            dod: cell_time(c[3], "DOD")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionRow {
    pub subject_id: i64,
    pub hadm_id: i64,
    pub admittime: Option<NaiveDateTime>,
    pub dischtime: Option<NaiveDateTime>,
    pub deathtime: Option<NaiveDateTime>,
    pub admission_type: String,
    pub hospital_expire_flag: Option<bool>,
}

impl TableRecord for AdmissionRow {
    const SCHEMA: TableSchema = TableSchema {
        table: "ADMISSIONS",
        columns: &[
            req("SUBJECT_ID"),
            req("HADM_ID"),
            opt("ADMITTIME"),
            opt("DISCHTIME"),
            opt("DEATHTIME"),
            req("ADMISSION_TYPE"),
            opt("HOSPITAL_EXPIRE_FLAG"),
        ],
    };

    fn from_cells(c: &[Option<&str>]) -> Result<Self, String> {
        let flag = match c[6] {
            None => None,
            Some("0") => Some(false),
            Some("1") => Some(true),
            Some(other) => return Err(format!("HOSPITAL_EXPIRE_FLAG: `{other}`")),
        };
        Ok(AdmissionRow {
            subject_id: required(cell_i64(c[0], "SUBJECT_ID")?, "SUBJECT_ID")?,
            hadm_id: required(cell_i64(c[1], "HADM_ID")?, "HADM_ID")?,
            admittime: cell_time(c[2], "ADMITTIME")?,
            dischtime: cell_time(c[3], "DISCHTIME")?,
            deathtime: cell_time(c[4], "DEATHTIME")?,
            admission_type: required(c[5], "ADMISSION_TYPE")?.to_ascii_uppercase(),
            hospital_expire_flag: flag,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcuStayRow {
    pub subject_id: i64,
    pub hadm_id: i64,
    pub icustay_id: i64,
    pub intime: NaiveDateTime,
    /// A handful of real stays have no OUTTIME; they never pass inclusion.
    pub outtime: Option<NaiveDateTime>,
}

impl TableRecord for IcuStayRow {
    const SCHEMA: TableSchema = TableSchema {
        table: "ICUSTAYS",
        columns: &[
            req("SUBJECT_ID"),
            req("HADM_ID"),
            req("ICUSTAY_ID"),
            req("INTIME"),
            opt("OUTTIME"),
        ],
    };

    fn from_cells(c: &[Option<&str>]) -> Result<Self, String> {
        Ok(IcuStayRow {
            subject_id: required(cell_i64(c[0], "SUBJECT_ID")?, "SUBJECT_ID")?,
            hadm_id: required(cell_i64(c[1], "HADM_ID")?, "HADM_ID")?,
            icustay_id: required(cell_i64(c[2], "ICUSTAY_ID")?, "ICUSTAY_ID")?,
            intime: required(cell_time(c[3], "INTIME")?, "INTIME")?,
            outtime: cell_time(c[4], "OUTTIME")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisRow {
    pub subject_id: i64,
    pub hadm_id: i64,
    pub icd9_code: Option<String>,
}

impl TableRecord for DiagnosisRow {
    const SCHEMA: TableSchema = TableSchema {
        table: "DIAGNOSES_ICD",
        columns: &[req("SUBJECT_ID"), req("HADM_ID"), opt("ICD9_CODE")],
    };

    fn from_cells(c: &[Option<&str>]) -> Result<Self, String> {
        Ok(DiagnosisRow {
            subject_id: required(cell_i64(c[0], "SUBJECT_ID")?, "SUBJECT_ID")?,
            hadm_id: required(cell_i64(c[1], "HADM_ID")?, "HADM_ID")?,
            icd9_code: c[2].map(str::to_string),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRow {
    pub subject_id: i64,
    pub hadm_id: i64,
    pub transfertime: Option<NaiveDateTime>,
    pub curr_service: String,
}

impl TableRecord for ServiceRow {
    const SCHEMA: TableSchema = TableSchema {
        table: "SERVICES",
        columns: &[
            req("SUBJECT_ID"),
            req("HADM_ID"),
            opt("TRANSFERTIME"),
            req("CURR_SERVICE"),
        ],
    };

    fn from_cells(c: &[Option<&str>]) -> Result<Self, String> {
        Ok(ServiceRow {
            subject_id: required(cell_i64(c[0], "SUBJECT_ID")?, "SUBJECT_ID")?,
            hadm_id: required(cell_i64(c[1], "HADM_ID")?, "HADM_ID")?,
            transfertime: cell_time(c[2], "TRANSFERTIME")?,
            curr_service: required(c[3], "CURR_SERVICE")?.to_ascii_uppercase(),
        })
    }
}
