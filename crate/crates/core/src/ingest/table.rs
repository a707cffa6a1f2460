//! Streaming CSV table reader for MIMIC-III-shaped files.
//!
//! Column names are matched case-insensitively. Each record type declares the
//! columns it reads; absent optional columns and empty cells both read as
//! `None`.

use std::fs::File;
use std::io::{BufReader, Read};
use std::marker::PhantomData;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// Count and drop malformed rows.
    #[default]
    Skip,
    /// Fail on the first malformed row.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseStats {
    pub rows_read: u64,
    pub rows_kept: u64,
    pub rows_dropped: u64,
}

/// A column a record type reads.
#[derive(Debug, Clone, Copy)]
pub struct Column {
    pub name: &'static str,
    pub required: bool,
}

pub const fn req(name: &'static str) -> Column {
    Column {
        name,
        required: true,
    }
}

pub const fn opt(name: &'static str) -> Column {
    Column {
        name,
        required: false,
    }
}

/// Column layout of one table.
#[derive(Debug, Clone, Copy)]
pub struct TableSchema {
    pub table: &'static str,
    pub columns: &'static [Column],
}

/// A typed row of some table.
pub trait TableRecord: Sized {
    const SCHEMA: TableSchema;

    /// Builds a record from cells in `SCHEMA.columns` order. Empty cells and
    /// missing optional columns are `None`.
    fn from_cells(cells: &[Option<&str>]) -> std::result::Result<Self, String>;
}

/// Iterator over the typed rows of a CSV stream.
pub struct TableReader<R: Read, T: TableRecord> {
    records: csv::StringRecordsIntoIter<R>,
    header_len: usize,
    positions: Vec<Option<usize>>,
    policy: ErrorPolicy,
    stats: ParseStats,
    failed: bool,
    _marker: PhantomData<T>,
}

/// Opens a CSV stream for table `T`, validating the header.
pub fn parse_table<R: Read, T: TableRecord>(
    reader: R,
    policy: ErrorPolicy,
) -> Result<TableReader<R, T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_ascii_uppercase())
        .collect();
    let schema = T::SCHEMA;
    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in schema.columns {
        let pos = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(col.name));
        if pos.is_none() && col.required {
            return Err(Error::MissingColumn {
                table: schema.table.to_string(),
                column: col.name.to_string(),
            });
        }
        positions.push(pos);
    }
    Ok(TableReader {
        header_len: headers.len(),
        records: rdr.into_records(),
        positions,
        policy,
        stats: ParseStats::default(),
        failed: false,
        _marker: PhantomData,
    })
}

/// Opens `path` and parses it as table `T`.
pub fn open_table<T: TableRecord>(
    path: &Path,
    policy: ErrorPolicy,
) -> Result<TableReader<BufReader<File>, T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_table(BufReader::with_capacity(1 << 16, file), policy)
}

impl<R: Read, T: TableRecord> TableReader<R, T> {
    pub fn stats(&self) -> ParseStats {
        self.stats
    }

    /// Drains the reader, returning all records and the final stats.
    pub fn collect_all(mut self) -> Result<(Vec<T>, ParseStats)> {
        let mut out = Vec::new();
        for rec in &mut self {
            out.push(rec?);
        }
        Ok((out, self.stats))
    }

    fn malformed(&mut self, line: u64, reason: String) -> Option<Result<T>> {
        self.stats.rows_dropped += 1;
        match self.policy {
            ErrorPolicy::Skip => None,
            ErrorPolicy::Strict => {
                self.failed = true;
                Some(Err(Error::MalformedRow {
                    table: T::SCHEMA.table.to_string(),
                    line,
                    reason,
                }))
            }
        }
    }
}

impl<R: Read, T: TableRecord> Iterator for TableReader<R, T> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Result<T>> {
        if self.failed {
            return None;
        }
        loop {
            let record = match self.records.next()? {
                Ok(r) => r,
                Err(e) => {
                    // Invalid UTF-8 and similar: the row is unusable.
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    self.stats.rows_read += 1;
                    if let Some(out) = self.malformed(line, e.to_string()) {
                        return Some(out);
                    }
                    continue;
                }
            };
            self.stats.rows_read += 1;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != self.header_len {
                let reason = format!(
                    "expected {} fields, found {}",
                    self.header_len,
                    record.len()
                );
                if let Some(out) = self.malformed(line, reason) {
                    return Some(out);
                }
                continue;
            }
            let cells: Vec<Option<&str>> = self
                .positions
                .iter()
                .map(|p| {
                    p.and_then(|i| record.get(i))
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                })
                .collect();
            let missing = T::SCHEMA
                .columns
                .iter()
                .zip(&cells)
                .find(|(c, v)| c.required && v.is_none())
                .map(|(c, _)| c.name);
            let parsed = match missing {
                Some(name) => Err(format!("empty required field {name}")),
                None => T::from_cells(&cells),
            };
            match parsed {
                Ok(rec) => {
                    self.stats.rows_kept += 1;
                    return Some(Ok(rec));
                }
                Err(reason) => {
                    if let Some(out) = self.malformed(line, reason) {
                        return Some(out);
                    }
                }
            }
        }
    }
}

/// Parses `YYYY-MM-DD HH:MM:SS` (seconds optional) or a bare date.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
        .ok()
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

/// Formats a timestamp the way MIMIC-III stores it.
pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%d %H:%M:%S").to_string()
}

pub(crate) fn cell_i64(cell: Option<&str>, name: &str) -> std::result::Result<Option<i64>, String> {
    match cell {
        None => Ok(None),
        Some(s) => s
            .parse::<i64>()
            .or_else(|_| {
                // Some exports write integer ids as `123.0`.
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0 && v.is_finite())
                    .map(|v| v as i64)
                    .ok_or(())
            })
            .map(Some)
            .map_err(|_| format!("{name}: not an integer: `{s}`")),
    }
}

pub(crate) fn cell_time(
    cell: Option<&str>,
    name: &str,
) -> std::result::Result<Option<NaiveDateTime>, String> {
    match cell {
        None => Ok(None),
        Some(s) => parse_timestamp(s)
            .map(Some)
            .ok_or_else(|| format!("{name}: not a timestamp: `{s}`")),
    }
}

pub(crate) fn required<T>(v: Option<T>, name: &str) -> std::result::Result<T, String> {
    v.ok_or_else(|| format!("empty required field {name}"))
}
