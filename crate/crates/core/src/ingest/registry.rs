//! The ItemID registry: which raw chart/lab/output items feed which of the
//! 13 hourly channels.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Registry shipped with the crate, one row per ItemID.
pub const SHIPPED_REGISTRY: &str = include_str!("../../data/item_registry.csv");

pub const N_CHANNELS: usize = 13;

/// The 13 sequential channels, in matrix column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Gcs,
    Sbp,
    HeartRate,
    TempF,
    PaO2,
    FiO2,
    UrineOutput,
    Bun,
    Wbc,
    Bicarbonate,
    Sodium,
    Potassium,
    Bilirubin,
}

impl Channel {
    pub const ALL: [Channel; N_CHANNELS] = [
        Channel::Gcs,
        Channel::Sbp,
        Channel::HeartRate,
        Channel::TempF,
        Channel::PaO2,
        Channel::FiO2,
        Channel::UrineOutput,
        Channel::Bun,
        Channel::Wbc,
        Channel::Bicarbonate,
        Channel::Sodium,
        Channel::Potassium,
        Channel::Bilirubin,
    ];

    /// Column of this channel in the 48×13 matrix.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Channel> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Gcs => "GCS",
            Channel::Sbp => "SBP",
            Channel::HeartRate => "HeartRate",
            Channel::TempF => "TempF",
            Channel::PaO2 => "PaO2",
            Channel::FiO2 => "FiO2",
            Channel::UrineOutput => "UrineOutput",
            Channel::Bun => "BUN",
            Channel::Wbc => "WBC",
            Channel::Bicarbonate => "Bicarbonate",
            Channel::Sodium => "Sodium",
            Channel::Potassium => "Potassium",
            Channel::Bilirubin => "Bilirubin",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown channel `{s}`")))
    }
}

/// How a raw item contributes to its channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subrole {
    Plain,
    GcsVerbal,
    GcsMotor,
    GcsEyes,
    TempF,
    TempC,
    UrineInIrrigant,
    UrineOutIrrigant,
}

impl Subrole {
    pub fn name(self) -> &'static str {
        match self {
            Subrole::Plain => "plain",
            Subrole::GcsVerbal => "gcs_verbal",
            Subrole::GcsMotor => "gcs_motor",
            Subrole::GcsEyes => "gcs_eyes",
            Subrole::TempF => "temp_f",
            Subrole::TempC => "temp_c",
            Subrole::UrineInIrrigant => "urine_in_irrigant",
            Subrole::UrineOutIrrigant => "urine_out_irrigant",
        }
    }

    /// Component slot for GCS subroles.
    pub fn gcs_component(self) -> Option<usize> {
        match self {
            Subrole::GcsVerbal => Some(0),
            Subrole::GcsMotor => Some(1),
            Subrole::GcsEyes => Some(2),
            _ => None,
        }
    }
}

impl FromStr for Subrole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "plain" => Subrole::Plain,
            "gcs_verbal" => Subrole::GcsVerbal,
            "gcs_motor" => Subrole::GcsMotor,
            "gcs_eyes" => Subrole::GcsEyes,
            "temp_f" => Subrole::TempF,
            "temp_c" => Subrole::TempC,
            "urine_in_irrigant" => Subrole::UrineInIrrigant,
            "urine_out_irrigant" => Subrole::UrineOutIrrigant,
            other => return Err(Error::Config(format!("unknown subrole `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceTable {
    ChartEvents,
    LabEvents,
    OutputEvents,
}

impl SourceTable {
    pub fn name(self) -> &'static str {
        match self {
            SourceTable::ChartEvents => "chartevents",
            SourceTable::LabEvents => "labevents",
            SourceTable::OutputEvents => "outputevents",
        }
    }
}

impl FromStr for SourceTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chartevents" => Ok(SourceTable::ChartEvents),
            "labevents" => Ok(SourceTable::LabEvents),
            "outputevents" => Ok(SourceTable::OutputEvents),
            other => Err(Error::Config(format!("unknown source table `{other}`"))),
        }
    }
}

/// A channel together with the table its items are listed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureChannel {
    pub channel: Channel,
    pub source_table: SourceTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemMapping {
    pub channel: Channel,
    pub subrole: Subrole,
    pub source_table: SourceTable,
}

#[derive(Debug, Deserialize)]
struct RegistryRow {
    item_id: i64,
    channel: String,
    subrole: String,
    source_table: String,
}

#[derive(Debug, Clone)]
pub struct ItemRegistry {
    entries: BTreeMap<i64, ItemMapping>,
}

impl ItemRegistry {
    /// The registry compiled into the crate.
    pub fn shipped() -> Self {
        Self::from_reader(SHIPPED_REGISTRY.as_bytes()).expect("shipped registry is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    /// Reads `item_id,channel,subrole,source_table` rows; `#` starts a comment line.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut entries = BTreeMap::new();
        for row in rdr.deserialize::<RegistryRow>() {
            let row = row?;
            if row.item_id <= 0 {
                return Err(Error::Config(format!(
                    "registry: invalid item id {}",
                    row.item_id
                )));
            }
            let channel: Channel = row.channel.parse()?;
            let subrole: Subrole = row.subrole.parse()?;
            check_subrole(channel, subrole)?;
            let mapping = ItemMapping {
                channel,
                subrole,
                source_table: row.source_table.parse()?,
            };
            if entries.insert(row.item_id, mapping).is_some() {
                return Err(Error::Config(format!(
                    "registry: item {} listed more than once",
                    row.item_id
                )));
            }
        }
        for channel in Channel::ALL {
            if !entries.values().any(|m| m.channel == channel) {
                return Err(Error::Config(format!(
                    "registry: no items for channel {channel}"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn resolve(&self, item_id: i64) -> Option<(Channel, Subrole)> {
        self.entries.get(&item_id).map(|m| (m.channel, m.subrole))
    }

    pub fn mapping(&self, item_id: i64) -> Option<&ItemMapping> {
        self.entries.get(&item_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &ItemMapping)> {
        self.entries.iter().map(|(&id, m)| (id, m))
    }

    /// Item ids feeding `channel` with the given subrole, ascending.
    pub fn items_for(&self, channel: Channel, subrole: Subrole) -> Vec<i64> {
        self.iter()
            .filter(|(_, m)| m.channel == channel && m.subrole == subrole)
            .map(|(id, _)| id)
            .collect()
    }
}

fn check_subrole(channel: Channel, subrole: Subrole) -> Result<()> {
    let ok = match subrole {
        Subrole::Plain => !matches!(channel, Channel::Gcs | Channel::TempF),
        Subrole::GcsVerbal | Subrole::GcsMotor | Subrole::GcsEyes => channel == Channel::Gcs,
        Subrole::TempF | Subrole::TempC => channel == Channel::TempF,
        Subrole::UrineInIrrigant | Subrole::UrineOutIrrigant => channel == Channel::UrineOutput,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "registry: subrole {} is not valid for channel {channel}",
            subrole.name()
        )))
    }
}
