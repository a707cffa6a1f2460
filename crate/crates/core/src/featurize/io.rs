//! `features_seq.csv`, `features_static.csv` and `population_stats.csv`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::cohort::Split;
use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::ingest::{Channel, N_CHANNELS};

use super::{FeatureTensor, PopulationStats, HOURS, N_STATIC, STATIC_NAMES};

pub const SEQ_FILE: &str = "features_seq.csv";
pub const STATIC_FILE: &str = "features_static.csv";
pub const STATS_FILE: &str = "population_stats.csv";

/// A tensor together with the split of its patient.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTensor {
    pub tensor: FeatureTensor,
    pub split: Split,
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn num(s: &str, path: &Path) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Data(format!("{}: bad number `{s}`", path.display())))
}

/// Writes both tensor files into `dir`, in the given order.
pub fn write_tensors(dir: &Path, tensors: &[LabeledTensor]) -> Result<()> {
    let seq_path = dir.join(SEQ_FILE);
    let mut w = writer(&seq_path)?;
    let mut header = vec!["stay_id".to_string(), "hour".to_string()];
    header.extend((0..N_CHANNELS).map(|c| format!("c{c}")));
    w.write_record(&header)?;
    for lt in tensors {
        for (h, row) in lt.tensor.seq.iter().enumerate() {
            let mut rec = vec![lt.tensor.stay_id.to_string(), h.to_string()];
            rec.extend(row.iter().map(|&v| sig9(v)));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(&seq_path, e))?;

    let static_path = dir.join(STATIC_FILE);
    let mut w = writer(&static_path)?;
    let mut header = vec!["stay_id".to_string()];
    header.extend(STATIC_NAMES.iter().map(|s| s.to_string()));
    header.push("label".into());
    header.push("split".into());
    w.write_record(&header)?;
    for lt in tensors {
        let mut rec = vec![lt.tensor.stay_id.to_string()];
        rec.extend(lt.tensor.static_features.iter().map(|&v| sig9(v)));
        rec.push(u8::from(lt.tensor.label).to_string());
        rec.push(lt.split.name().to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&static_path, e))?;
    Ok(())
}

/// Reads tensors back, ordered as in the static file.
pub fn read_tensors(dir: &Path) -> Result<Vec<LabeledTensor>> {
    let static_path = dir.join(STATIC_FILE);
    let mut rdr = reader(&static_path)?;
    let mut out: Vec<LabeledTensor> = Vec::new();
    let mut index: BTreeMap<i64, usize> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 1 + N_STATIC + 2 {
            return Err(Error::Data(format!(
                "{}: expected {} columns, found {}",
                static_path.display(),
                N_STATIC + 3,
                rec.len()
            )));
        }
        let stay_id: i64 = rec[0]
            .parse()
            .map_err(|_| Error::Data(format!("bad stay_id `{}`", &rec[0])))?;
        let mut static_features = [0.0; N_STATIC];
        for (k, slot) in static_features.iter_mut().enumerate() {
            *slot = num(&rec[1 + k], &static_path)?;
        }
        let label = match &rec[1 + N_STATIC] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Data(format!("bad label `{other}`"))),
        };
        let split: Split = rec[2 + N_STATIC].parse()?;
        index.insert(stay_id, out.len());
        out.push(LabeledTensor {
            tensor: FeatureTensor {
                stay_id,
                seq: [[f64::NAN; N_CHANNELS]; HOURS],
                static_features,
                label,
            },
            split,
        });
    }

    let seq_path = dir.join(SEQ_FILE);
    let mut rdr = reader(&seq_path)?;
    let mut seen = vec![0usize; out.len()];
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 + N_CHANNELS {
            return Err(Error::Data(format!(
                "{}: expected {} columns, found {}",
                seq_path.display(),
                N_CHANNELS + 2,
                rec.len()
            )));
        }
        let stay_id: i64 = rec[0]
            .parse()
            .map_err(|_| Error::Data(format!("bad stay_id `{}`", &rec[0])))?;
        let hour: usize = rec[1]
            .parse()
            .ok()
            .filter(|&h| h < HOURS)
            .ok_or_else(|| Error::Data(format!("bad hour `{}`", &rec[1])))?;
        let &i = index.get(&stay_id).ok_or_else(|| {
            Error::Data(format!(
                "stay {stay_id} in {SEQ_FILE} but not in {STATIC_FILE}"
            ))
        })?;
        for c in 0..N_CHANNELS {
            out[i].tensor.seq[hour][c] = num(&rec[2 + c], &seq_path)?;
        }
        seen[i] += 1;
    }
    if let Some(i) = seen.iter().position(|&n| n != HOURS) {
        return Err(Error::Data(format!(
            "stay {} has {} hourly rows, expected {HOURS}",
            out[i].tensor.stay_id, seen[i]
        )));
    }
    Ok(out)
}

pub fn write_population_stats(path: &Path, stats: &PopulationStats) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["feature", "mean", "sd"])?;
    for c in Channel::ALL {
        w.write_record([
            c.name().to_string(),
            format!("{}", stats.mean[c.index()]),
            format!("{}", stats.sd[c.index()]),
        ])?;
    }
    w.write_record([
        "age".to_string(),
        format!("{}", stats.age_mean),
        format!("{}", stats.age_sd),
    ])?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_population_stats(path: &Path) -> Result<PopulationStats> {
    let mut rdr = reader(path)?;
    let mut stats = PopulationStats {
        mean: [f64::NAN; N_CHANNELS],
        sd: [f64::NAN; N_CHANNELS],
        age_mean: f64::NAN,
        age_sd: f64::NAN,
    };
    for rec in rdr.records() {
        let rec = rec?;
        let (mean, sd) = (num(&rec[1], path)?, num(&rec[2], path)?);
        if &rec[0] == "age" {
            stats.age_mean = mean;
            stats.age_sd = sd;
        } else {
            let c: Channel = rec[0].parse()?;
            stats.mean[c.index()] = mean;
            stats.sd[c.index()] = sd;
        }
    }
    let complete = stats
        .mean
        .iter()
        .chain(&stats.sd)
        .chain([&stats.age_mean, &stats.age_sd])
        .all(|v| v.is_finite());
    if !complete {
        return Err(Error::Data(format!(
            "{}: incomplete statistics",
            path.display()
        )));
    }
    Ok(stats)
}
