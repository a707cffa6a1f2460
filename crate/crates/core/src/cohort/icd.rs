//! ICD-9 code ranges behind the three comorbidity flags.

use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

pub const SHIPPED_ICD9_FLAGS: &str = include_str!("../../data/icd9_flags.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComorbidityFlag {
    Aids,
    HematologicMalignancy,
    MetastaticCancer,
}

impl ComorbidityFlag {
    fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aids" => Ok(Self::Aids),
            "hem_malig" => Ok(Self::HematologicMalignancy),
            "metastatic" => Ok(Self::MetastaticCancer),
            other => Err(Error::Config(format!("unknown comorbidity flag `{other}`"))),
        }
    }
}

/// Inclusive range over normalized 5-digit code keys.
#[derive(Debug, Clone, PartialEq, Eq)]
struct CodeRange {
    flag: ComorbidityFlag,
    lo: String,
    hi: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Comorbidities {
    pub aids: bool,
    pub hem_malig: bool,
    pub metastatic: bool,
}

#[derive(Debug, Clone)]
pub struct IcdFlagRegistry {
    ranges: Vec<CodeRange>,
}

#[derive(Deserialize)]
struct Row {
    flag: String,
    start: String,
    end: String,
}

impl Default for IcdFlagRegistry {
    fn default() -> Self {
        Self::from_reader(SHIPPED_ICD9_FLAGS.as_bytes()).expect("shipped ICD-9 flags are valid")
    }
}

impl IcdFlagRegistry {
    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    /// Reads `flag,start,end` rows. Bounds are written in dotted ICD-9 form
    /// (`044.9`); an upper bound covers every longer code it prefixes.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut ranges = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let flag = ComorbidityFlag::parse(&row.flag)?;
            let lo = bound_digits(&row.start)?;
            let hi = bound_digits(&row.end)?;
            let range = CodeRange {
                flag,
                lo: pad(&lo, '0'),
                hi: pad(&hi, '9'),
            };
            if range.lo > range.hi {
                return Err(Error::Config(format!(
                    "ICD-9 range {}..{} is empty",
                    row.start, row.end
                )));
            }
            ranges.push(range);
        }
        Ok(Self { ranges })
    }

    /// Flags for the diagnosis codes of one admission (MIMIC stores codes
    /// without the dot, e.g. `1983` for 198.3).
    pub fn flags<'a, I>(&self, codes: I) -> Comorbidities
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut out = Comorbidities::default();
        for code in codes {
            let Some(key) = code_key(code) else { continue };
            for r in &self.ranges {
                if r.lo <= key && key <= r.hi {
                    match r.flag {
                        ComorbidityFlag::Aids => out.aids = true,
                        ComorbidityFlag::HematologicMalignancy => out.hem_malig = true,
                        ComorbidityFlag::MetastaticCancer => out.metastatic = true,
                    }
                }
            }
        }
        out
    }
}

fn bound_digits(s: &str) -> Result<String> {
    let s = s.trim();
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty()
        || int.len() > 3
        || frac.len() > 2
        || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
    {
        return Err(Error::Config(format!("bad ICD-9 bound `{s}`")));
    }
    Ok(format!("{int:0>3}{frac}"))
}

fn pad(digits: &str, fill: char) -> String {
    let mut s = digits.to_string();
    while s.len() < 5 {
        s.push(fill);
    }
    s
}

/// Numeric diagnosis codes only; V and E codes never match a flag.
fn code_key(code: &str) -> Option<String> {
    let code = code.trim().replace('.', "");
    if code.len() < 3 || code.len() > 5 || !code.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Some(pad(&code, '0'))
}
