use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{HistorianRecord, Tag, WeatherRecord};
use crate::error::{Error, Result};
use crate::forecast::{ExogFeatures, ExogRow, TimeSeries};
use crate::learner::Dataset;

pub const DEFAULT_FILL_LIMIT: usize = 3;

/// Historian records resampled onto a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedData {
    pub start: DateTime<Utc>,
    pub step_minutes: u32,
    pub steps: usize,
    pub columns: BTreeMap<Tag, Vec<Option<f64>>>,
    /// Steps still missing after forward-fill, per tag.
    pub missing: BTreeMap<Tag, Vec<usize>>,
    /// Tags with no records at all inside the grid.
    pub absent: Vec<Tag>,
}

impl AlignedData {
    pub fn value(&self, tag: Tag, step: usize) -> Option<f64> {
        self.columns.get(&tag).and_then(|c| c[step])
    }

    /// The complete series for `tag`, or a coverage error naming the gaps.
    pub fn series(&self, tag: Tag) -> Result<TimeSeries> {
        let column = self
            .columns
            .get(&tag)
            .ok_or_else(|| Error::Coverage(format!("no records for tag {tag}")))?;
        if let Some(gaps) = self.missing.get(&tag) {
            return Err(Error::Coverage(format!(
                "tag {tag} has {} unfilled steps (first at {})",
                gaps.len(),
                gaps[0]
            )));
        }
        TimeSeries::new(self.start, self.step_minutes, column.iter().map(|v| v.unwrap_or(0.0)).collect())
    }
}

/// Resample `records` onto `steps` windows `[start + k*step, start + (k+1)*step)`.
///
/// Continuous tags take the window mean, status tags the last observation.
/// Empty windows inherit the previous value for up to `fill_limit`
/// consecutive steps; anything longer stays missing and is reported.
pub fn align_to_grid(
    records: &[HistorianRecord],
    start: DateTime<Utc>,
    step_minutes: u32,
    steps: usize,
    fill_limit: usize,
) -> Result<AlignedData> {
    if step_minutes < 1 || steps < 1 {
        return Err(Error::Config("grid needs a positive step and at least one step".into()));
    }
    let step_secs = i64::from(step_minutes) * 60;
    // (sum, count, last)
    let mut acc: BTreeMap<Tag, Vec<(f64, usize, f64)>> = BTreeMap::new();
    let mut ordered: Vec<&HistorianRecord> = records.iter().collect();
    ordered.sort_by_key(|r| r.timestamp);
    for rec in ordered {
        let offset = (rec.timestamp - start).num_seconds();
        if offset < 0 {
            continue;
        }
        let window = (offset / step_secs) as usize;
        if window >= steps {
            continue;
        }
        let slot = &mut acc.entry(rec.tag).or_insert_with(|| vec![(0.0, 0, 0.0); steps])[window];
        slot.0 += rec.value;
        slot.1 += 1;
        slot.2 = rec.value;
    }

    let mut columns = BTreeMap::new();
    let mut missing = BTreeMap::new();
    let mut absent = Vec::new();
    for tag in Tag::ALL {
        let Some(windows) = acc.get(&tag) else {
            absent.push(tag);
            continue;
        };
        let mut column = Vec::with_capacity(steps);
        let mut gaps = Vec::new();
        let mut last: Option<f64> = None;
        let mut gap_len = 0;
        for (k, &(sum, count, latest)) in windows.iter().enumerate() {
            if count > 0 {
                let v = if tag.is_status() { latest } else { sum / count as f64 };
                last = Some(v);
                gap_len = 0;
                column.push(Some(v));
            } else {
                gap_len += 1;
                match last {
                    Some(v) if gap_len <= fill_limit => column.push(Some(v)),
                    _ => {
                        column.push(None);
                        gaps.push(k);
                    }
                }
            }
        }
        if !gaps.is_empty() {
            missing.insert(tag, gaps);
        }
        columns.insert(tag, column);
    }
    Ok(AlignedData {
        start,
        step_minutes,
        steps,
        columns,
        missing,
        absent,
    })
}

/// One training row per aligned step where the operating point and both
/// outcomes are known and at least one reactor ran.
pub fn build_training_dataset(aligned: &AlignedData) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for k in 0..aligned.steps {
        let running = Tag::REACTOR_STATUS
            .iter()
            .any(|&t| aligned.value(t, k) == Some(1.0));
        if !running {
            continue;
        }
        let get = |t| aligned.value(t, k);
        if let (Some(temp), Some(ds), Some(cycle), Some(energy), Some(quality)) = (
            get(Tag::TempSetpointC),
            get(Tag::DrySolidsFrac),
            get(Tag::CycleMinutes),
            get(Tag::EnergyKwhM3),
            get(Tag::QualityIndex),
        ) {
            features.push(vec![temp, ds, cycle]);
            targets.push(vec![energy, quality]);
        }
    }
    if features.is_empty() {
        return Err(Error::EmptyDataset("no aligned step has a complete operating record".into()));
    }
    Dataset::new(
        features,
        targets,
        vec!["temp_setpoint_c".into(), "dry_solids_frac".into(), "cycle_minutes".into()],
        vec!["energy_kwh_m3".into(), "quality_index".into()],
    )
}

/// Calendar/weather rows for `steps` consecutive grid instants. Each step
/// takes the weather of its calendar date.
pub fn exog_from_weather(
    weather: &[WeatherRecord],
    start: DateTime<Utc>,
    step_minutes: u32,
    steps: usize,
) -> Result<ExogFeatures> {
    let by_date: BTreeMap<_, _> = weather.iter().map(|w| (w.date, w)).collect();
    let step = chrono::Duration::minutes(i64::from(step_minutes));
    let mut rows = Vec::with_capacity(steps);
    for k in 0..steps {
        let ts = start + step * k as i32;
        let day = by_date
            .get(&ts.date_naive())
            .ok_or_else(|| Error::Coverage(format!("no weather for {}", ts.date_naive())))?;
        rows.push(ExogRow::at(ts, day.rainfall_mm, day.temp_max_c));
    }
    Ok(ExogFeatures { rows })
}
