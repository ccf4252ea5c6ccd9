//! Seeded generators for weather, inflow realisations, synthetic training
//! samples and full historian logs.

use std::f64::consts::PI;

use chrono::{DateTime, Duration, NaiveDate, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::datastore::{HistorianRecord, Tag, WeatherRecord};
use crate::error::{Error, Result};
use crate::learner::Dataset;
use crate::schedule::{hysteresis_baseline, HysteresisPolicy, ScheduleProblem};
use crate::twin::{
    sample_observation, step_dynamics, GroundTruthParams, OperatingPoint, PlantConfig, PlantState, CYCLE_BOUNDS_MIN,
    DRY_SOLIDS_BOUNDS, TEMP_BOUNDS_C,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherModel {
    pub wet_day_prob: f64,
    pub mean_wet_rain_mm: f64,
    pub mean_temp_max_c: f64,
    pub temp_max_sigma_c: f64,
    pub mean_diurnal_range_c: f64,
}

impl Default for WeatherModel {
    fn default() -> Self {
        Self {
            wet_day_prob: 0.3,
            mean_wet_rain_mm: 8.0,
            mean_temp_max_c: 27.0,
            temp_max_sigma_c: 3.0,
            mean_diurnal_range_c: 9.0,
        }
    }
}

impl WeatherModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.wet_day_prob) {
            return Err(Error::Config("wet_day_prob must lie in [0, 1]".into()));
        }
        if !(self.mean_wet_rain_mm > 0.0) || !(self.temp_max_sigma_c >= 0.0) || !(self.mean_diurnal_range_c >= 0.0) {
            return Err(Error::Config("weather scales must be non-negative".into()));
        }
        Ok(())
    }

    pub fn generate<R: Rng + ?Sized>(&self, first: NaiveDate, days: usize, rng: &mut R) -> Result<Vec<WeatherRecord>> {
        self.validate()?;
        let wet = Bernoulli::new(self.wet_day_prob).map_err(|e| Error::Config(e.to_string()))?;
        let amount = Exp::new(1.0 / self.mean_wet_rain_mm).map_err(|e| Error::Config(e.to_string()))?;
        let temp = Normal::new(self.mean_temp_max_c, self.temp_max_sigma_c).map_err(|e| Error::Config(e.to_string()))?;
        let mut out = Vec::with_capacity(days);
        for d in 0..days {
            let is_wet = wet.sample(rng);
            let mm: f64 = amount.sample(rng);
            let temp_max: f64 = temp.sample(rng);
            let spread: f64 = rng.random_range(0.5..1.5);
            out.push(WeatherRecord {
                date: first + Duration::days(d as i64),
                rainfall_mm: if is_wet { round_to(mm, 1) } else { 0.0 },
                temp_max_c: round_to(temp_max, 1),
                temp_min_c: round_to(temp_max - self.mean_diurnal_range_c * spread, 1),
            });
        }
        Ok(out)
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

/// Upstream inflow in percent of tank capacity per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InflowModel {
    pub base_pct: f64,
    pub diurnal_amp_pct: f64,
    /// Hour of the diurnal peak.
    pub peak_hour: f64,
    pub weekend_factor: f64,
    pub rain_gain_pct_per_mm: f64,
    pub noise_sigma_pct: f64,
}

impl Default for InflowModel {
    fn default() -> Self {
        Self {
            base_pct: 6.0,
            diurnal_amp_pct: 2.0,
            peak_hour: 10.0,
            weekend_factor: 0.9,
            rain_gain_pct_per_mm: 0.06,
            noise_sigma_pct: 0.45,
        }
    }
}

impl InflowModel {
    /// Noise-free inflow at `ts` given that day's rainfall.
    pub fn expected(&self, ts: DateTime<Utc>, rainfall_mm: f64) -> f64 {
        use chrono::Datelike;
        let hour = f64::from(ts.hour()) + f64::from(ts.minute()) / 60.0;
        let weekend = ts.weekday().num_days_from_monday() >= 5;
        let base = if weekend { self.base_pct * self.weekend_factor } else { self.base_pct };
        let diurnal = self.diurnal_amp_pct * (2.0 * PI * (hour - self.peak_hour) / 24.0).cos();
        (base + diurnal + self.rain_gain_pct_per_mm * rainfall_mm).max(0.0)
    }

    /// `steps` realised inflows from `start`; `weather` must cover every date.
    pub fn realise<R: Rng + ?Sized>(
        &self,
        start: DateTime<Utc>,
        step_minutes: u32,
        steps: usize,
        weather: &[WeatherRecord],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let noise = Normal::new(0.0, self.noise_sigma_pct).map_err(|e| Error::Config(e.to_string()))?;
        let mut out = Vec::with_capacity(steps);
        for k in 0..steps {
            let ts = start + Duration::minutes(i64::from(step_minutes) * k as i64);
            let day = weather
                .iter()
                .find(|w| w.date == ts.date_naive())
                .ok_or_else(|| Error::Coverage(format!("no weather for {}", ts.date_naive())))?;
            let z: f64 = noise.sample(rng);
            out.push((self.expected(ts, day.rainfall_mm) + z).max(0.0));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub start: DateTime<Utc>,
    pub step_minutes: u32,
    /// Observed steps before the episode starts.
    pub history_steps: usize,
    pub steps: usize,
    /// Realised steps after the episode end, so forecasts near the end
    /// still have something to be scored against.
    pub lookahead: usize,
    pub inflow: InflowModel,
    pub weather: WeatherModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            start: DateTime::parse_from_rfc3339("2024-03-04T00:00:00Z").unwrap().with_timezone(&Utc),
            step_minutes: 15,
            history_steps: 96,
            steps: 96,
            lookahead: 32,
            inflow: InflowModel::default(),
            weather: WeatherModel::default(),
        }
    }
}

/// One inflow realisation: observed history then the episode itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScenario {
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub step_minutes: u32,
    pub history_pct: Vec<f64>,
    pub steps: usize,
    /// `steps + lookahead` realised inflows from `start`.
    pub inflow_pct: Vec<f64>,
    pub weather: Vec<WeatherRecord>,
}

/// Episodes seeded `base_seed, base_seed + 1, ...`.
pub fn generate_episodes(config: &ScenarioConfig, n: usize, base_seed: u64) -> Result<Vec<EpisodeScenario>> {
    let step = Duration::minutes(i64::from(config.step_minutes));
    let hist_start = config.start - step * config.history_steps as i32;
    let total = config.history_steps + config.steps + config.lookahead;
    let last = hist_start + step * total as i32;
    let days = (last.date_naive() - hist_start.date_naive()).num_days() as usize + 1;
    (0..n as u64)
        .map(|i| {
            let seed = base_seed + i;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weather = config.weather.generate(hist_start.date_naive(), days, &mut rng)?;
            let mut all = config
                .inflow
                .realise(hist_start, config.step_minutes, total, &weather, &mut rng)?;
            let inflow_pct = all.split_off(config.history_steps);
            Ok(EpisodeScenario {
                seed,
                start: config.start,
                step_minutes: config.step_minutes,
                history_pct: all,
                steps: config.steps,
                inflow_pct,
                weather,
            })
        })
        .collect()
}

/// Uniform random operating point, rounded to 1 °C, 0.01 and 1 min.
pub fn random_op_point<R: Rng + ?Sized>(rng: &mut R) -> OperatingPoint {
    OperatingPoint {
        temp_setpoint_c: rng.random_range(TEMP_BOUNDS_C.0..=TEMP_BOUNDS_C.1).round(),
        dry_solids_frac: round_to(rng.random_range(DRY_SOLIDS_BOUNDS.0..=DRY_SOLIDS_BOUNDS.1), 2),
        cycle_minutes: rng.random_range(CYCLE_BOUNDS_MIN.0..=CYCLE_BOUNDS_MIN.1).round(),
    }
}

/// `n` operating points drawn uniformly from the continuous bounds with
/// (energy, quality) observed through the ground truth.
pub fn synthetic_dataset(n: usize, params: &GroundTruthParams, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let op = OperatingPoint {
            temp_setpoint_c: rng.random_range(TEMP_BOUNDS_C.0..=TEMP_BOUNDS_C.1),
            dry_solids_frac: rng.random_range(DRY_SOLIDS_BOUNDS.0..=DRY_SOLIDS_BOUNDS.1),
            cycle_minutes: rng.random_range(CYCLE_BOUNDS_MIN.0..=CYCLE_BOUNDS_MIN.1),
        };
        let (e, q) = sample_observation(&op, params, &mut rng)?;
        features.push(op.features().to_vec());
        targets.push(vec![e, q]);
    }
    Dataset::new(
        features,
        targets,
        vec!["temp_setpoint_c".into(), "dry_solids_frac".into(), "cycle_minutes".into()],
        vec!["energy_kwh_m3".into(), "quality_index".into()],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistoryConfig {
    pub plant: PlantConfig,
    pub truth: GroundTruthParams,
    pub scenario: ScenarioConfig,
    pub initial_level_pct: f64,
    pub deadband: HysteresisPolicy,
    /// Operators move to a new random operating point this often.
    pub op_change_every: usize,
}

impl Default for HistoryConfig {
    fn default() -> Self {
        Self {
            plant: PlantConfig::default(),
            truth: GroundTruthParams::default(),
            scenario: ScenarioConfig {
                history_steps: 0,
                steps: 14 * 96,
                lookahead: 0,
                start: DateTime::parse_from_rfc3339("2024-02-19T00:00:00Z").unwrap().with_timezone(&Utc),
                ..ScenarioConfig::default()
            },
            initial_level_pct: 60.0,
            deadband: HysteresisPolicy::around(60.0, 10.0),
            op_change_every: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleHistory {
    pub historian: Vec<HistorianRecord>,
    pub weather: Vec<WeatherRecord>,
    pub final_state: PlantState,
}

/// A historian log of the plant run under manual deadband operation with
/// operating points that wander across their bounds.
///
/// Each step is logged at its start instant: tank level before the step,
/// inflow volume, reactor statuses and operating point, plus measured
/// energy and quality whenever a reactor ran.
pub fn generate_history(config: &HistoryConfig, seed: u64) -> Result<SampleHistory> {
    config.plant.validate()?;
    let sc = &config.scenario;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Duration::minutes(i64::from(sc.step_minutes));
    let end = sc.start + step * sc.steps as i32;
    let days = (end.date_naive() - sc.start.date_naive()).num_days() as usize + 1;
    let weather = sc.weather.generate(sc.start.date_naive(), days, &mut rng)?;
    let inflows = sc.inflow.realise(sc.start, sc.step_minutes, sc.steps, &weather, &mut rng)?;

    let n = config.plant.n_reactors();
    let problem = ScheduleProblem {
        grid: crate::twin::TimeGrid::new(sc.start, sc.step_minutes, sc.steps)?,
        reactors: config.plant.reactors.clone(),
        initial_status: vec![false; n],
        initial_steps_in_state: None,
        initial_level_pct: config.initial_level_pct,
        target_level_pct: config.initial_level_pct,
        inflow_forecast_pct: inflows.clone(),
        omega: 0.0,
        level_bounds: None,
    };
    let schedule = hysteresis_baseline(&problem, &config.deadband);

    let mut state = config
        .plant
        .initial_state(config.initial_level_pct, &vec![false; n], OperatingPoint::default());
    let mut historian = Vec::new();
    let every = config.op_change_every.max(1);
    for (k, &inflow) in inflows.iter().enumerate() {
        if k % every == 0 {
            state.op_point = random_op_point(&mut rng);
        }
        let ts = sc.start + step * k as i32;
        let decisions = schedule.column(k);
        let mut push = |tag, value| historian.push(HistorianRecord { timestamp: ts, tag, value });
        push(Tag::TankLevelPct, round_to(state.tank.level_pct, 6));
        push(Tag::InflowM3, round_to(inflow * config.plant.capacity_m3 / 100.0, 6));
        for (r, &on) in decisions.iter().enumerate().take(Tag::REACTOR_STATUS.len()) {
            push(Tag::REACTOR_STATUS[r], if on { 1.0 } else { 0.0 });
        }
        let op = state.op_point;
        push(Tag::TempSetpointC, op.temp_setpoint_c);
        push(Tag::DrySolidsFrac, op.dry_solids_frac);
        push(Tag::CycleMinutes, op.cycle_minutes);
        // always draw so the random stream does not depend on the schedule
        let (energy, quality) = sample_observation(&op, &config.truth, &mut rng)?;
        if decisions.iter().any(|&on| on) {
            push(Tag::EnergyKwhM3, round_to(energy, 6));
            push(Tag::QualityIndex, round_to(quality, 6));
        }
        state = step_dynamics(&config.plant, &state, inflow, &decisions)?.next_state;
    }
    historian.sort_by(|a, b| (a.timestamp, a.tag).cmp(&(b.timestamp, b.tag)));
    Ok(SampleHistory {
        historian,
        weather,
        final_state: state,
    })
}
