//! Ingestion of MIMIC-III-shaped CSV tables.

mod records;
mod registry;
mod table;

use std::path::{Path, PathBuf};

pub use records::{AdmissionRow, DiagnosisRow, IcuStayRow, PatientRow, RawEvent, ServiceRow};
pub use registry::{
    Channel, FeatureChannel, ItemMapping, ItemRegistry, SourceTable, Subrole, N_CHANNELS,
    SHIPPED_REGISTRY,
};
pub use table::{
    format_timestamp, open_table, parse_table, parse_timestamp, Column, ErrorPolicy, ParseStats,
    TableReader, TableRecord, TableSchema,
};

/// File names of the MIMIC-III v1.4 tables the pipeline reads.
pub mod files {
    pub const PATIENTS: &str = "PATIENTS.csv";
    pub const ADMISSIONS: &str = "ADMISSIONS.csv";
    pub const ICUSTAYS: &str = "ICUSTAYS.csv";
    pub const CHARTEVENTS: &str = "CHARTEVENTS.csv";
    pub const LABEVENTS: &str = "LABEVENTS.csv";
    pub const OUTPUTEVENTS: &str = "OUTPUTEVENTS.csv";
    pub const DIAGNOSES_ICD: &str = "DIAGNOSES_ICD.csv";
    pub const SERVICES: &str = "SERVICES.csv";

    pub const EVENT_TABLES: [&str; 3] = [CHARTEVENTS, LABEVENTS, OUTPUTEVENTS];
}

/// Locates a table in `dir`, accepting upper- or lower-case file names.
pub fn table_path(dir: &Path, file: &str) -> PathBuf {
    let exact = dir.join(file);
    if exact.exists() {
        return exact;
    }
    let lower = dir.join(file.to_ascii_lowercase());
    if lower.exists() {
        lower
    } else {
        exact
    }
}

/// Numeric value of an event: VALUENUM when present, otherwise a parse of the
/// VALUE text. Error texts and other non-numeric strings yield `None`.
pub fn parse_numeric(value_num: Option<f64>, value_text: Option<&str>) -> Option<f64> {
    if let Some(v) = value_num.filter(|v| v.is_finite()) {
        return Some(v);
    }
    value_text
        .and_then(|t| t.trim().parse::<f64>().ok())
        .filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests;
