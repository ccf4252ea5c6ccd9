use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use hydrotwin_core::datastore::{
    align_to_grid, exog_from_weather, parse_historian_csv, parse_weather_csv, write_historian_csv, write_weather_csv,
    AlignedData, HistorianRecord, RowIssue, Tag, WeatherRecord, DEFAULT_FILL_LIMIT,
};
use hydrotwin_core::forecast::{ExogFeatures, TimeSeries};
use hydrotwin_core::twin::{step_dynamics, OperatingPoint, PlantConfig, PlantState};
use hydrotwin_core::{Error, Result};

pub const HISTORIAN_FILE: &str = "historian.csv";
pub const WEATHER_FILE: &str = "weather.csv";

/// Plant history: raw historian records and daily weather.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub historian: Vec<HistorianRecord>,
    pub weather: Vec<WeatherRecord>,
}

/// Rows rejected while reading a history from disk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadIssues {
    pub historian: Vec<RowIssue>,
    pub weather: Vec<RowIssue>,
}

impl History {
    /// Read `historian.csv` and, if present, `weather.csv` from `dir`.
    /// `path` may also name a historian CSV directly.
    pub fn load(path: &Path) -> Result<(Self, LoadIssues)> {
        let (historian_path, weather_path) = if path.is_dir() {
            (path.join(HISTORIAN_FILE), path.join(WEATHER_FILE))
        } else {
            (path.to_path_buf(), path.with_file_name(WEATHER_FILE))
        };
        let text = read(&historian_path)?;
        let h = parse_historian_csv(&text)?;
        let mut issues = LoadIssues {
            historian: h.errors,
            weather: Vec::new(),
        };
        let mut history = History {
            historian: h.records,
            weather: Vec::new(),
        };
        if weather_path.is_file() {
            let w = parse_weather_csv(&read(&weather_path)?)?;
            issues.weather = w.errors;
            history.weather = w.records;
        }
        Ok((history, issues))
    }

    pub fn load_if_present(dir: &Path) -> Result<Option<Self>> {
        if !dir.join(HISTORIAN_FILE).is_file() {
            return Ok(None);
        }
        Self::load(dir).map(|(h, _)| Some(h))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(HISTORIAN_FILE), write_historian_csv(&self.historian))?;
        if !self.weather.is_empty() {
            std::fs::write(dir.join(WEATHER_FILE), write_weather_csv(&self.weather))?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.historian.is_empty()
    }

    /// Add records; a later record for the same (timestamp, tag) replaces
    /// an earlier one.
    pub fn merge_historian(&mut self, records: Vec<HistorianRecord>) {
        self.historian.extend(records);
        self.historian.sort_by_key(|r| (r.timestamp, r.tag));
        self.historian.reverse();
        self.historian.dedup_by_key(|r| (r.timestamp, r.tag));
        self.historian.reverse();
    }

    pub fn merge_weather(&mut self, records: Vec<WeatherRecord>) {
        self.weather.extend(records);
        self.weather.sort_by_key(|w| w.date);
        self.weather.reverse();
        self.weather.dedup_by_key(|w| w.date);
        self.weather.reverse();
    }

    /// Grid start (first record floored to the step) and number of steps
    /// up to and including the last record.
    pub fn grid(&self, step_minutes: u32) -> Option<(DateTime<Utc>, usize)> {
        let first = self.historian.first()?.timestamp;
        let last = self.historian.last()?.timestamp;
        let step = i64::from(step_minutes) * 60;
        let start = DateTime::from_timestamp(first.timestamp().div_euclid(step) * step, 0)?;
        let steps = ((last - start).num_seconds() / step) as usize + 1;
        Some((start, steps))
    }

    /// First instant after the recorded history.
    pub fn end(&self, step_minutes: u32) -> Option<DateTime<Utc>> {
        self.grid(step_minutes)
            .map(|(start, steps)| start + Duration::minutes(i64::from(step_minutes) * steps as i64))
    }

    pub fn align(&self, step_minutes: u32) -> Result<AlignedData> {
        let (start, steps) = self
            .grid(step_minutes)
            .ok_or_else(|| Error::InsufficientHistory { needed: 1, available: 0 })?;
        align_to_grid(&self.historian, start, step_minutes, steps, DEFAULT_FILL_LIMIT)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// The gap-free tail of the inflow column, in m³ per step.
pub fn inflow_series(aligned: &AlignedData) -> Result<TimeSeries> {
    let column = aligned
        .columns
        .get(&Tag::InflowM3)
        .ok_or_else(|| Error::InsufficientHistory { needed: 1, available: 0 })?;
    let from = aligned
        .missing
        .get(&Tag::InflowM3)
        .and_then(|gaps| gaps.last())
        .map_or(0, |&k| k + 1);
    let start = aligned.start + Duration::minutes(i64::from(aligned.step_minutes) * from as i64);
    TimeSeries::new(
        start,
        aligned.step_minutes,
        column[from..].iter().map(|v| v.unwrap_or(0.0)).collect(),
    )
}

/// Weather features from the start of `inflow` through `horizon` steps past
/// its end.
pub fn exog_features(weather: &[WeatherRecord], inflow: &TimeSeries, horizon: usize) -> Result<ExogFeatures> {
    exog_from_weather(weather, inflow.start, inflow.step_minutes, inflow.len() + horizon)
}

/// Plant state at the end of the aligned history: the last logged step
/// applied to the last logged level.
pub fn derive_state(plant: &PlantConfig, aligned: &AlignedData) -> Result<PlantState> {
    let k = aligned.steps - 1;
    let need = |tag: Tag| {
        aligned
            .value(tag, k)
            .ok_or_else(|| Error::Coverage(format!("no {tag} for the last history step")))
    };
    let level = need(Tag::TankLevelPct)?;
    let inflow_pct = need(Tag::InflowM3)? * 100.0 / plant.capacity_m3;
    let n = plant.n_reactors();
    let status = |r: usize, step: usize| {
        Tag::REACTOR_STATUS
            .get(r)
            .and_then(|&tag| aligned.value(tag, step))
            .is_some_and(|v| v == 1.0)
    };
    let decisions: Vec<bool> = (0..n).map(|r| status(r, k)).collect();
    let op_point = match (
        aligned.value(Tag::TempSetpointC, k),
        aligned.value(Tag::DrySolidsFrac, k),
        aligned.value(Tag::CycleMinutes, k),
    ) {
        (Some(t), Some(ds), Some(c)) => OperatingPoint::new(t, ds, c).unwrap_or_default(),
        _ => OperatingPoint::default(),
    };
    let mut state = plant.initial_state(level, &decisions, op_point);
    state.t_index = k as u64;
    let mut next = step_dynamics(plant, &state, inflow_pct, &decisions)?.next_state;
    for (r, reactor) in next.reactors.iter_mut().enumerate() {
        let run = (0..=k).rev().take_while(|&s| status(r, s) == decisions[r]).count();
        reactor.steps_in_state = u32::try_from(run).unwrap_or(u32::MAX);
    }
    Ok(next)
}
