//! Cleaning and tensor assembly: Fahrenheit conversion, hourly binning with
//! keyed random picks, GCS aggregation, forward/backward imputation with a
//! population-mean fallback, and standardization.

mod io;

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDateTime;

pub use io::{
    read_population_stats, read_tensors, write_population_stats, write_tensors, LabeledTensor,
    SEQ_FILE, STATIC_FILE, STATS_FILE,
};

use crate::cohort::{AdmissionCategory, CohortRow, Split};
use crate::error::{Error, Result};
use crate::ingest::{
    open_table, parse_numeric, table_path, Channel, ErrorPolicy, ItemRegistry, ParseStats,
    RawEvent, Subrole, N_CHANNELS,
};
use crate::seed::SplitMix64;

pub const HOURS: usize = 48;
pub const N_STATIC: usize = 7;
/// Floor on standard deviations during standardization.
pub const SD_EPSILON: f64 = 1e-6;

/// Static vector layout.
pub const STATIC_NAMES: [&str; N_STATIC] =
    ["age_s", "cat_ss", "cat_us", "cat_med", "aids", "hem", "met"];

pub fn to_fahrenheit(value: f64, subrole: Subrole) -> f64 {
    match subrole {
        Subrole::TempC => value * 9.0 / 5.0 + 32.0,
        _ => value,
    }
}

/// A numeric measurement at a time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedValue {
    pub charttime: NaiveDateTime,
    pub value: f64,
}

/// One channel of one stay over the first 48 hours; slot `h` covers
/// `[intime + h, intime + h + 1)` hours.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    pub channel: Channel,
    pub values: [Option<f64>; HOURS],
}

impl HourlySeries {
    pub fn empty(channel: Channel) -> Self {
        Self {
            channel,
            values: [None; HOURS],
        }
    }

    pub fn observed(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }
}

/// Hour slot of `t`, or `None` outside the 48-hour window.
pub fn hour_slot(intime: NaiveDateTime, t: NaiveDateTime) -> Option<usize> {
    let secs = (t - intime).num_seconds();
    if secs < 0 {
        return None;
    }
    let h = (secs / 3600) as usize;
    (h < HOURS).then_some(h)
}

/// Where the random pick for one slot gets its randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PickKey {
    pub seed: u64,
    pub stay_id: i64,
    pub channel: Channel,
    /// Distinguishes GCS components sharing one channel.
    pub component: u64,
}

impl PickKey {
    fn rng(&self, hour: usize) -> SplitMix64 {
        SplitMix64::keyed(
            self.seed,
            "featurize.pick",
            &[
                self.stay_id as u64,
                self.channel.index() as u64,
                self.component,
                hour as u64,
            ],
        )
    }
}

fn group_by_hour(events: &[TimedValue], intime: NaiveDateTime) -> Vec<Vec<TimedValue>> {
    let mut slots: Vec<Vec<TimedValue>> = vec![Vec::new(); HOURS];
    for ev in events {
        if let Some(h) = hour_slot(intime, ev.charttime) {
            slots[h].push(*ev);
        }
    }
    for slot in &mut slots {
        slot.sort_by(|a, b| {
            a.charttime
                .cmp(&b.charttime)
                .then(a.value.total_cmp(&b.value))
        });
    }
    slots
}

/// One value per hour: the only event, or a uniformly random one of several.
/// The pick depends only on `key` and the hour, not on event order.
pub fn bin_hourly(events: &[TimedValue], intime: NaiveDateTime, key: PickKey) -> HourlySeries {
    let mut out = HourlySeries::empty(key.channel);
    for (h, slot) in group_by_hour(events, intime).into_iter().enumerate() {
        out.values[h] = match slot.len() {
            0 => None,
            1 => Some(slot[0].value),
            n => Some(slot[key.rng(h).below(n)].value),
        };
    }
    out
}

/// Hourly sums, for additive volumes.
pub fn bin_hourly_sum(
    events: &[TimedValue],
    intime: NaiveDateTime,
    channel: Channel,
) -> HourlySeries {
    let mut out = HourlySeries::empty(channel);
    for (h, slot) in group_by_hour(events, intime).into_iter().enumerate() {
        if !slot.is_empty() {
            out.values[h] = Some(slot.iter().map(|e| e.value).sum());
        }
    }
    out
}

/// Total GCS per hour; missing whenever any component is missing.
pub fn aggregate_gcs(
    verbal: &HourlySeries,
    motor: &HourlySeries,
    eyes: &HourlySeries,
) -> HourlySeries {
    let mut out = HourlySeries::empty(Channel::Gcs);
    for h in 0..HOURS {
        out.values[h] = match (verbal.values[h], motor.values[h], eyes.values[h]) {
            (Some(v), Some(m), Some(e)) => Some(v + m + e),
            _ => None,
        };
    }
    out
}

/// Forward fill, then backward fill of leading gaps; an empty series becomes
/// the population mean.
pub fn impute(series: &HourlySeries, population_mean: f64) -> [f64; HOURS] {
    let mut out = [population_mean; HOURS];
    let Some(first) = series.values.iter().position(Option::is_some) else {
        return out;
    };
    let mut last = series.values[first].expect("position found a value");
    for h in 0..HOURS {
        if let Some(v) = series.values[h] {
            last = v;
        }
        out[h] = last;
    }
    // Hours before the first observation take it.
    for slot in out.iter_mut().take(first) {
        *slot = series.values[first].expect("first observation");
    }
    out
}

/// Per-channel mean and population standard deviation, plus the same for age.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationStats {
    pub mean: [f64; N_CHANNELS],
    pub sd: [f64; N_CHANNELS],
    pub age_mean: f64,
    pub age_sd: f64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn sd(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

/// Statistics over observed (pre-imputation) hourly values of the given stays.
pub fn compute_population_stats<'a, I>(stays: I) -> Result<PopulationStats>
where
    I: IntoIterator<Item = (&'a StayBins, f64)>,
{
    let mut channels = [Moments::default(); N_CHANNELS];
    let mut age = Moments::default();
    for (bins, age_years) in stays {
        age.push(age_years);
        for (c, series) in bins.series.iter().enumerate() {
            for v in series.observed() {
                channels[c].push(v);
            }
        }
    }
    if age.n == 0 {
        return Err(Error::Config(
            "population statistics need at least one stay".into(),
        ));
    }
    for (c, m) in channels.iter().enumerate() {
        if m.n == 0 {
            return Err(Error::Config(format!(
                "channel {} has no observations in the statistics population",
                Channel::ALL[c]
            )));
        }
    }
    Ok(PopulationStats {
        mean: channels.map(|m| m.mean),
        sd: channels.map(|m| m.sd()),
        age_mean: age.mean,
        age_sd: age.sd(),
    })
}

/// A stay's features: 48×13 hourly matrix, 7 static values, label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub stay_id: i64,
    pub seq: [[f64; N_CHANNELS]; HOURS],
    pub static_features: [f64; N_STATIC],
    pub label: bool,
}

impl FeatureTensor {
    pub fn label_f64(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// Sequential entries and age become z-scores; one-hots and flags are left as-is.
pub fn standardize(tensor: &FeatureTensor, stats: &PopulationStats) -> FeatureTensor {
    let mut out = tensor.clone();
    for row in out.seq.iter_mut() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = (*x - stats.mean[c]) / stats.sd[c].max(SD_EPSILON);
        }
    }
    out.static_features[0] =
        (out.static_features[0] - stats.age_mean) / stats.age_sd.max(SD_EPSILON);
    out
}

/// Inverse of [`standardize`] for the sequential block.
pub fn destandardize_seq(value: f64, channel: usize, stats: &PopulationStats) -> f64 {
    value * stats.sd[channel].max(SD_EPSILON) + stats.mean[channel]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeaturizeOptions {
    pub seed: u64,
    /// Sum urine volumes within an hour; `false` picks one at random like
    /// every other channel.
    pub sum_urine: bool,
    pub standardize: bool,
    /// Compute population means over every stay rather than the training split.
    pub all_stays_stats: bool,
}

impl FeaturizeOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            sum_urine: true,
            standardize: true,
            all_stays_stats: false,
        }
    }

    /// Random pick for urine, means over all stays, raw units.
    pub fn literal_cleaning(seed: u64) -> Self {
        Self {
            seed,
            sum_urine: false,
            standardize: false,
            all_stays_stats: true,
        }
    }
}

/// A registry-resolved event attached to a cohort stay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StayEvent {
    pub channel: Channel,
    pub subrole: Subrole,
    pub charttime: NaiveDateTime,
    /// `None` for error texts and other unparseable values.
    pub value: Option<f64>,
}

/// The 13 binned channels of one stay, before imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct StayBins {
    pub series: Vec<HourlySeries>,
}

pub fn bin_stay(
    stay_id: i64,
    intime: NaiveDateTime,
    events: &[StayEvent],
    options: &FeaturizeOptions,
) -> StayBins {
    let mut per_channel: Vec<Vec<TimedValue>> = vec![Vec::new(); N_CHANNELS];
    let mut gcs: [Vec<TimedValue>; 3] = Default::default();
    for ev in events {
        let Some(value) = ev.value else { continue };
        let value = match ev.subrole {
            Subrole::TempC | Subrole::TempF => to_fahrenheit(value, ev.subrole),
            Subrole::UrineInIrrigant => -value,
            _ => value,
        };
        let tv = TimedValue {
            charttime: ev.charttime,
            value,
        };
        match ev.subrole.gcs_component() {
            Some(k) => gcs[k].push(tv),
            None => per_channel[ev.channel.index()].push(tv),
        }
    }
    let key = |channel: Channel, component: u64| PickKey {
        seed: options.seed,
        stay_id,
        channel,
        component,
    };
    let series = Channel::ALL
        .iter()
        .map(|&channel| match channel {
            Channel::Gcs => {
                let parts: Vec<HourlySeries> = (0..3)
                    .map(|k| bin_hourly(&gcs[k], intime, key(channel, k as u64 + 1)))
                    .collect();
                aggregate_gcs(&parts[0], &parts[1], &parts[2])
            }
            Channel::UrineOutput if options.sum_urine => {
                bin_hourly_sum(&per_channel[channel.index()], intime, channel)
            }
            _ => bin_hourly(&per_channel[channel.index()], intime, key(channel, 0)),
        })
        .collect();
    StayBins { series }
}

/// Unstandardized static vector for a cohort row.
pub fn static_vector(row: &CohortRow) -> [f64; N_STATIC] {
    let one_hot = row.admission_category.one_hot();
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    [
        row.age_years,
        one_hot[0],
        one_hot[1],
        one_hot[2],
        b(row.aids),
        b(row.hem_malig),
        b(row.metastatic),
    ]
}

/// Imputes every channel and attaches the static vector; standardizes when
/// the options ask for it.
pub fn assemble(
    row: &CohortRow,
    bins: &StayBins,
    stats: &PopulationStats,
    options: &FeaturizeOptions,
) -> FeatureTensor {
    let mut seq = [[0.0; N_CHANNELS]; HOURS];
    for (c, series) in bins.series.iter().enumerate() {
        let filled = impute(series, stats.mean[c]);
        for (h, v) in filled.into_iter().enumerate() {
            seq[h][c] = v;
        }
    }
    let tensor = FeatureTensor {
        stay_id: row.icustay_id,
        seq,
        static_features: static_vector(row),
        label: row.label,
    };
    if options.standardize {
        standardize(&tensor, stats)
    } else {
        tensor
    }
}

pub fn build_tensor(
    row: &CohortRow,
    events: &[StayEvent],
    stats: &PopulationStats,
    options: &FeaturizeOptions,
) -> FeatureTensor {
    let bins = bin_stay(row.icustay_id, row.intime, events, options);
    assemble(row, &bins, stats, options)
}

/// Routes event rows to cohort stays and keeps those inside each stay's
/// 48-hour window.
///
/// Rows carrying an ICUSTAY_ID go to that stay. Rows without one (LABEVENTS
/// has no such column) go to the cohort stay of their HADM_ID, or failing
/// that of their SUBJECT_ID.
pub struct EventRouter<'a> {
    registry: &'a ItemRegistry,
    by_stay: HashMap<i64, (usize, NaiveDateTime)>,
    by_hadm: HashMap<i64, i64>,
    by_subject: HashMap<i64, i64>,
    pub events: HashMap<i64, Vec<StayEvent>>,
}

impl<'a> EventRouter<'a> {
    pub fn new(registry: &'a ItemRegistry, cohort: &[CohortRow]) -> Self {
        Self {
            registry,
            by_stay: cohort
                .iter()
                .enumerate()
                .map(|(i, r)| (r.icustay_id, (i, r.intime)))
                .collect(),
            by_hadm: cohort.iter().map(|r| (r.hadm_id, r.icustay_id)).collect(),
            by_subject: cohort
                .iter()
                .map(|r| (r.subject_id, r.icustay_id))
                .collect(),
            events: HashMap::new(),
        }
    }

    /// Returns whether the event was kept.
    pub fn route(&mut self, ev: &RawEvent) -> bool {
        let Some((channel, subrole)) = self.registry.resolve(ev.item_id) else {
            return false;
        };
        let stay = match ev.icustay_id {
            Some(id) => Some(id),
            None => match ev.hadm_id {
                Some(h) => self.by_hadm.get(&h).copied(),
                None => self.by_subject.get(&ev.subject_id).copied(),
            },
        };
        let Some(stay) = stay else { return false };
        let Some(&(_, intime)) = self.by_stay.get(&stay) else {
            return false;
        };
        if hour_slot(intime, ev.charttime).is_none() {
            return false;
        }
        self.events.entry(stay).or_default().push(StayEvent {
            channel,
            subrole,
            charttime: ev.charttime,
            value: parse_numeric(ev.value_num, ev.value_text.as_deref()),
        });
        true
    }
}

/// Streams the three event tables in `dir` and groups in-window events by stay.
pub fn load_stay_events(
    dir: &Path,
    cohort: &[CohortRow],
    registry: &ItemRegistry,
    policy: ErrorPolicy,
) -> Result<(HashMap<i64, Vec<StayEvent>>, Vec<(String, ParseStats, u64)>)> {
    let mut router = EventRouter::new(registry, cohort);
    let mut stats = Vec::new();
    for file in crate::ingest::files::EVENT_TABLES {
        let path = table_path(dir, file);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let mut reader = open_table::<RawEvent>(&path, policy)?;
        let mut kept = 0u64;
        for ev in &mut reader {
            if router.route(&ev?) {
                kept += 1;
            }
        }
        stats.push((file.to_string(), reader.stats(), kept));
    }
    Ok((router.events, stats))
}

/// Bins every stay, derives population statistics, and assembles tensors.
/// Output order follows `cohort`.
pub fn featurize_cohort(
    cohort: &[CohortRow],
    events: &HashMap<i64, Vec<StayEvent>>,
    options: &FeaturizeOptions,
) -> Result<(Vec<FeatureTensor>, PopulationStats)> {
    let bins: Vec<StayBins> = cohort
        .iter()
        .map(|row| {
            let evs = events
                .get(&row.icustay_id)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            bin_stay(row.icustay_id, row.intime, evs, options)
        })
        .collect();
    let stats = compute_population_stats(
        cohort
            .iter()
            .zip(&bins)
            .filter(|(row, _)| options.all_stays_stats || row.split == Split::Train)
            .map(|(row, b)| (b, row.age_years)),
    )?;
    let tensors = cohort
        .iter()
        .zip(&bins)
        .map(|(row, b)| assemble(row, b, &stats, options))
        .collect();
    Ok((tensors, stats))
}

/// Category encoded in a static vector.
pub fn category_of(static_features: &[f64; N_STATIC]) -> Option<AdmissionCategory> {
    match (static_features[1], static_features[2], static_features[3]) {
        (1.0, 0.0, 0.0) => Some(AdmissionCategory::ScheduledSurgical),
        (0.0, 1.0, 0.0) => Some(AdmissionCategory::UnscheduledSurgical),
        (0.0, 0.0, 1.0) => Some(AdmissionCategory::Medical),
        _ => None,
    }
}

#[cfg(test)]
mod tests;
