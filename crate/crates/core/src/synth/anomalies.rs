//! Dirt injection into generated event tables, with a manifest of every change.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::MANIFEST_FILE;
use crate::error::{Error, Result};
use crate::featurize::{hour_slot, HOURS};
use crate::ingest::{
    files, open_table, parse_numeric, parse_timestamp, table_path, Channel, ErrorPolicy,
    IcuStayRow, ItemRegistry,
};
use crate::seed::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyConfig {
    /// Fraction of Fahrenheit temperature rows rewritten as Celsius items.
    pub celsius_rate: f64,
    /// Fraction of chart and lab rows whose value becomes the text `ERROR`.
    pub error_text_rate: f64,
    /// Fraction of in-window SBP and heart-rate rows that gain a same-hour twin.
    pub duplicate_rate: f64,
    /// Fraction of stays losing a 6 to 12 hour span of one vital sign.
    pub missing_span_rate: f64,
    pub seed: u64,
}

impl AnomalyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            celsius_rate: 0.3,
            error_text_rate: 0.02,
            duplicate_rate: 0.1,
            missing_span_rate: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("celsius_rate", self.celsius_rate),
            ("error_text_rate", self.error_text_rate),
            ("duplicate_rate", self.duplicate_rate),
            ("missing_span_rate", self.missing_span_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CelsiusEntry {
    pub row_id: u64,
    pub icustay_id: i64,
    pub item_id: i64,
    /// Hour slot in the 48-hour window, if the row falls inside it.
    pub hour: Option<usize>,
    pub fahrenheit: f64,
    pub celsius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTextEntry {
    pub table: String,
    pub row_id: u64,
    pub item_id: i64,
}

/// A (stay, channel, hour) cell holding more than one parseable value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateEntry {
    pub icustay_id: i64,
    pub channel: String,
    pub hour: usize,
    pub values: Vec<f64>,
}

/// Hours `start..end` of one channel had every row removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSpanEntry {
    pub icustay_id: i64,
    pub channel: String,
    pub start: usize,
    pub end: usize,
    pub rows_removed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnomalyManifest {
    pub celsius: Vec<CelsiusEntry>,
    pub error_text: Vec<ErrorTextEntry>,
    pub duplicates: Vec<DuplicateEntry>,
    pub missing_spans: Vec<MissingSpanEntry>,
}

struct EventTable {
    headers: csv::StringRecord,
    rows: Vec<Vec<String>>,
}

impl EventTable {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self { headers, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn {
                table: "event table".into(),
                column: name.into(),
            })
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

struct Cols {
    row_id: usize,
    stay: Option<usize>,
    item: usize,
    time: usize,
    value: usize,
    valuenum: usize,
    unit: usize,
}

impl Cols {
    fn of(t: &EventTable, has_stay: bool) -> Result<Self> {
        Ok(Self {
            row_id: t.col("ROW_ID")?,
            stay: if has_stay {
                Some(t.col("ICUSTAY_ID")?)
            } else {
                None
            },
            item: t.col("ITEMID")?,
            time: t.col("CHARTTIME")?,
            value: t.col("VALUE")?,
            valuenum: t.col("VALUENUM")?,
            unit: t.col("VALUEUOM")?,
        })
    }
}

fn int(s: &str) -> Option<i64> {
    s.trim().parse().ok()
}

fn value_of(row: &[String], c: &Cols) -> Option<f64> {
    let num = row[c.valuenum].trim().parse().ok();
    let text = Some(row[c.value].as_str()).filter(|s| !s.is_empty());
    parse_numeric(num, text)
}

/// Rewrites CHARTEVENTS and LABEVENTS in `dir` and records the changes under
/// `anomalies` in `manifest.json`.
pub fn inject_anomalies(dir: &Path, config: &AnomalyConfig) -> Result<AnomalyManifest> {
    config.validate()?;
    let stays_path = table_path(dir, files::ICUSTAYS);
    if !stays_path.exists() {
        return Err(Error::MissingArtifact(stays_path));
    }
    let (stays, _) = open_table::<IcuStayRow>(&stays_path, ErrorPolicy::Strict)?.collect_all()?;
    let intimes: HashMap<i64, NaiveDateTime> =
        stays.iter().map(|s| (s.icustay_id, s.intime)).collect();
    let registry = ItemRegistry::shipped();

    let chart_path = table_path(dir, files::CHARTEVENTS);
    let lab_path = table_path(dir, files::LABEVENTS);
    for p in [&chart_path, &lab_path] {
        if !p.exists() {
            return Err(Error::MissingArtifact(p.clone()));
        }
    }
    let mut chart = EventTable::read(&chart_path)?;
    let mut lab = EventTable::read(&lab_path)?;
    let cc = Cols::of(&chart, true)?;
    let lc = Cols::of(&lab, false)?;
    let mut manifest = AnomalyManifest::default();

    let rng = |stage: &str, row: &[String], c: &Cols| {
        SplitMix64::keyed(
            config.seed,
            stage,
            &[row[c.row_id].parse::<u64>().unwrap_or(0)],
        )
    };
    let cell = |row: &[String], c: &Cols| -> Option<(i64, Channel, usize)> {
        let stay = int(&row[c.stay?])?;
        let (channel, _) = registry.resolve(int(&row[c.item])?)?;
        let t = parse_timestamp(&row[c.time])?;
        Some((stay, channel, hour_slot(*intimes.get(&stay)?, t)?))
    };

    // Fahrenheit rows become Celsius items.
    for row in chart.rows.iter_mut() {
        let to = match int(&row[cc.item]) {
            Some(678) => 676,
            Some(223761) => 223762,
            _ => continue,
        };
        if rng("anomaly.celsius", row, &cc).next_f64() >= config.celsius_rate {
            continue;
        }
        let Some(f) = value_of(row, &cc) else {
            continue;
        };
        let c = (f - 32.0) * 5.0 / 9.0;
        let text = format!("{c:.4}");
        manifest.celsius.push(CelsiusEntry {
            row_id: row[cc.row_id].parse().unwrap_or(0),
            icustay_id: int(&row[cc.stay.expect("chart has stays")]).unwrap_or(0),
            item_id: to,
            hour: cell(row, &cc).map(|(_, _, h)| h),
            fahrenheit: f,
            celsius: text.parse().expect("formatted number"),
        });
        row[cc.item] = to.to_string();
        row[cc.value] = text.clone();
        row[cc.valuenum] = text;
        row[cc.unit] = "?C".into();
    }

    // Whole spans of a vital sign disappear.
    let mut spans: HashMap<(i64, Channel), (usize, usize)> = HashMap::new();
    let mut stay_ids: Vec<i64> = intimes.keys().copied().collect();
    stay_ids.sort_unstable();
    for &stay in &stay_ids {
        let mut r = SplitMix64::keyed(config.seed, "anomaly.span", &[stay as u64]);
        if r.next_f64() >= config.missing_span_rate {
            continue;
        }
        let channel = [Channel::Sbp, Channel::HeartRate][r.below(2)];
        let len = 6 + r.below(7);
        let start = 1 + r.below(HOURS - len);
        spans.insert((stay, channel), (start, start + len));
    }
    let mut removed: BTreeMap<(i64, usize), usize> = BTreeMap::new();
    chart.rows.retain(|row| match cell(row, &cc) {
        Some((stay, channel, h)) => match spans.get(&(stay, channel)) {
            Some(&(s, e)) if (s..e).contains(&h) => {
                *removed.entry((stay, channel.index())).or_default() += 1;
                false
            }
            _ => true,
        },
        None => true,
    });
    let mut span_list: Vec<_> = spans.into_iter().collect();
    span_list.sort_by_key(|((stay, c), _)| (*stay, c.index()));
    for ((stay, channel), (start, end)) in span_list {
        manifest.missing_spans.push(MissingSpanEntry {
            icustay_id: stay,
            channel: channel.name().into(),
            start,
            end,
            rows_removed: removed.get(&(stay, channel.index())).copied().unwrap_or(0),
        });
    }

    // Values replaced by error text.
    for (name, table, c) in [
        ("CHARTEVENTS", &mut chart, &cc),
        ("LABEVENTS", &mut lab, &lc),
    ] {
        for row in table.rows.iter_mut() {
            if rng("anomaly.error_text", row, c).next_f64() >= config.error_text_rate {
                continue;
            }
            manifest.error_text.push(ErrorTextEntry {
                table: name.into(),
                row_id: row[c.row_id].parse().unwrap_or(0),
                item_id: int(&row[c.item]).unwrap_or(0),
            });
            row[c.value] = "ERROR".into();
            row[c.valuenum].clear();
        }
    }

    // Same-hour twins of vital signs.
    let mut next_row = chart
        .rows
        .iter()
        .filter_map(|r| r[cc.row_id].parse::<u64>().ok())
        .max()
        .unwrap_or(0);
    let mut duplicated = BTreeSet::new();
    let mut rows = Vec::with_capacity(chart.rows.len());
    for row in std::mem::take(&mut chart.rows) {
        let twin = match cell(&row, &cc) {
            Some((stay, channel @ (Channel::Sbp | Channel::HeartRate), h)) => {
                let mut r = rng("anomaly.duplicate", &row, &cc);
                match value_of(&row, &cc) {
                    Some(v) if r.next_f64() < config.duplicate_rate => {
                        duplicated.insert((stay, channel.index(), h));
                        let at = intimes[&stay]
                            + Duration::hours(h as i64)
                            + Duration::minutes(r.below(60) as i64);
                        let v2 = ((v + 2.0 * (r.next_f64() - 0.5) * 10.0) * 100.0).round() / 100.0;
                        next_row += 1;
                        let mut t = row.clone();
                        t[cc.row_id] = next_row.to_string();
                        t[cc.time] = crate::ingest::format_timestamp(&at);
                        t[cc.value] = v2.to_string();
                        t[cc.valuenum] = v2.to_string();
                        Some(t)
                    }
                    _ => None,
                }
            }
            _ => None,
        };
        rows.push(row);
        rows.extend(twin);
    }
    chart.rows = rows;
    let mut cells: BTreeMap<(i64, usize, usize), Vec<f64>> = BTreeMap::new();
    for row in &chart.rows {
        if let Some((stay, channel, h)) = cell(row, &cc) {
            let key = (stay, channel.index(), h);
            if duplicated.contains(&key) {
                if let Some(v) = value_of(row, &cc) {
                    cells.entry(key).or_default().push(v);
                }
            }
        }
    }
    for ((stay, c, hour), mut values) in cells {
        values.sort_by(f64::total_cmp);
        manifest.duplicates.push(DuplicateEntry {
            icustay_id: stay,
            channel: Channel::ALL[c].name().into(),
            hour,
            values,
        });
    }

    chart.write(&chart_path)?;
    lab.write(&lab_path)?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let mut doc = if manifest_path.exists() {
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        serde_json::from_str(&text)?
    } else {
        serde_json::json!({})
    };
    doc["anomalies"] = serde_json::json!({ "config": config, "entries": manifest });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

/// Reads the anomaly manifest back from `manifest.json`.
pub fn read_anomaly_manifest(dir: &Path) -> Result<AnomalyManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let entries = doc
        .get("anomalies")
        .and_then(|a| a.get("entries"))
        .cloned()
        .ok_or_else(|| Error::Data(format!("{} has no anomalies", path.display())))?;
    Ok(serde_json::from_value(entries)?)
}
