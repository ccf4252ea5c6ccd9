use std::path::Path;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Duration, Utc};
use hydrotwin_core::datastore::{
    load, parse_historian_csv, ActionKind, HistorianRecord, OperatorAction, RowIssue, RunRecord, RunStore,
    ScheduleEdit, Tag,
};
use hydrotwin_core::decision::{settled_state, GroundTruthOracle, PlanConfig, QualityPolicy, Recommendation, ScenarioGrid};
use hydrotwin_core::learner::{Model, Regressor};
use hydrotwin_core::schedule::Schedule;
use hydrotwin_core::twin::{sample_observation, step_dynamics, OperatingPoint, PlantState};
use hydrotwin_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, Mutex};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::history::{derive_state, History};
use crate::pipeline::plan_from_history;

pub const MODEL_FILE: &str = "model.json";
pub const RUNS_FILE: &str = "runs.jsonl";
const EVENT_BUFFER: usize = 1024;

/// The predictor behind `/plan` and `/whatif`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ServiceModel {
    Learned(Model),
    /// The synthetic plant's own formulas, for demos and tests.
    Oracle(GroundTruthOracle),
}

impl Regressor for ServiceModel {
    fn n_features(&self) -> usize {
        match self {
            ServiceModel::Learned(m) => m.n_features(),
            ServiceModel::Oracle(m) => m.n_features(),
        }
    }

    fn n_outputs(&self) -> usize {
        match self {
            ServiceModel::Learned(m) => m.n_outputs(),
            ServiceModel::Oracle(m) => m.n_outputs(),
        }
    }

    fn predict_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        match self {
            ServiceModel::Learned(m) => m.predict_row(row),
            ServiceModel::Oracle(m) => m.predict_row(row),
        }
    }
}

/// The schedule applied by `/sim/tick`, taken from an operator action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveSchedule {
    pub run_id: u64,
    pub start: DateTime<Utc>,
    pub step_minutes: u32,
    pub schedule: Schedule,
    pub op_points: Vec<Option<OperatingPoint>>,
}

impl ActiveSchedule {
    /// Decisions and operating point for the step starting at `ts`.
    fn at(&self, ts: DateTime<Utc>) -> Option<(Vec<bool>, Option<OperatingPoint>)> {
        let offset = (ts - self.start).num_minutes();
        let step = i64::from(self.step_minutes);
        if offset < 0 || offset % step != 0 {
            return None;
        }
        let k = (offset / step) as usize;
        (k < self.schedule.horizon()).then(|| (self.schedule.column(k), self.op_points[k]))
    }
}

/// A consistent read view; replaced wholesale on every mutation.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub state_version: u64,
    /// Start of the next step to be simulated.
    pub now: DateTime<Utc>,
    pub plant: PlantState,
    pub latest_recommendation: Option<Recommendation>,
    pub active_schedule: Option<ActiveSchedule>,
    pub model_trained: bool,
    #[serde(skip)]
    pub model: Option<Arc<ServiceModel>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Snapshot,
    State,
    Recommendation,
    Action,
    Violation,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Snapshot => "snapshot",
            EventKind::State => "state",
            EventKind::Recommendation => "recommendation",
            EventKind::Action => "action",
            EventKind::Violation => "violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub payload: serde_json::Value,
    pub state_version: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub horizon_steps: usize,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub grid: Option<ScenarioGrid>,
    #[serde(default)]
    pub policy: Option<QualityPolicy>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub op_point: OperatingPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhatIfResponse {
    pub op_point: OperatingPoint,
    pub predicted_energy: f64,
    pub predicted_quality: f64,
    pub feasible: bool,
    pub quality_threshold: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    pub run_id: u64,
    pub kind: ActionKind,
    #[serde(default)]
    pub schedule_edits: Vec<ScheduleEdit>,
    #[serde(default)]
    pub actor: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TickRequest {
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickStep {
    pub timestamp: DateTime<Utc>,
    pub state_version: u64,
    pub inflow_pct: f64,
    pub decisions: Vec<bool>,
    pub run_id: Option<u64>,
    pub op_point: OperatingPoint,
    pub level_pct: f64,
    pub measured_energy_kwh_m3: Option<f64>,
    pub measured_quality: Option<f64>,
    pub overflow: bool,
    pub underflow: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TickFlags {
    /// At least one step ran all-OFF because no accepted schedule covered it.
    pub no_active_schedule: bool,
    pub overflow: bool,
    pub underflow: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickResponse {
    pub state_version: u64,
    pub now: DateTime<Utc>,
    pub plant: PlantState,
    pub steps: Vec<TickStep>,
    pub flags: TickFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestResponse {
    pub accepted_rows: usize,
    pub row_errors: Vec<RowIssue>,
    pub state_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunsPage {
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub runs: Vec<RunRecord>,
}

struct Writer {
    history: History,
    rng: ChaCha8Rng,
}

struct Inner {
    config: ServiceConfig,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<Writer>,
    runs: RwLock<RunStore>,
    events: broadcast::Sender<StreamEvent>,
}

/// The single authoritative twin state.
///
/// Reads clone an `Arc` of the current snapshot and never wait on a
/// mutation in progress. Mutations queue on one async mutex, so they apply
/// in arrival order, and each publishes a fresh snapshot before its event.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

impl Service {
    pub fn new(config: ServiceConfig, history: History, model: Option<ServiceModel>, runs: RunStore) -> Self {
        let derived = history
            .align(config.step_minutes())
            .and_then(|a| derive_state(&config.plant, &a))
            .ok()
            .zip(history.end(config.step_minutes()));
        let (plant, now) = derived.unwrap_or_else(|| {
            let initial = settled_state(&config.closed_loop(), OperatingPoint::default());
            (initial, history.end(config.step_minutes()).unwrap_or(config.scenario.start))
        });
        let latest = runs.list(1, 0).into_iter().next().map(|r| r.recommendation);
        let snapshot = Snapshot {
            state_version: 0,
            now,
            plant,
            latest_recommendation: latest,
            active_schedule: None,
            model_trained: model.is_some(),
            model: model.map(Arc::new),
        };
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let rng = ChaCha8Rng::seed_from_u64(config.seeds.sim);
        Self {
            inner: Arc::new(Inner {
                config,
                snapshot: RwLock::new(Arc::new(snapshot)),
                writer: Mutex::new(Writer { history, rng }),
                runs: RwLock::new(runs),
                events,
            }),
        }
    }

    /// Load history, model and run log from `data_dir`; each is optional.
    pub fn open(config: ServiceConfig, data_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(data_dir)?;
        let history = History::load_if_present(data_dir)?.unwrap_or_default();
        let model_path = data_dir.join(MODEL_FILE);
        let model = if model_path.is_file() {
            Some(ServiceModel::Learned(load::<Model>(&model_path)?))
        } else {
            None
        };
        let runs = RunStore::open(&data_dir.join(RUNS_FILE))?;
        Ok(Self::new(config, history, model, runs))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.inner.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.inner.events.subscribe()
    }

    fn publish(&self, next: Snapshot, events: Vec<(EventKind, serde_json::Value)>) -> Arc<Snapshot> {
        let version = next.state_version;
        let next = Arc::new(next);
        *self.inner.snapshot.write().expect("snapshot lock") = next.clone();
        for (kind, payload) in events {
            // no subscribers is fine
            let _ = self.inner.events.send(StreamEvent {
                kind,
                payload,
                state_version: version,
            });
        }
        next
    }

    fn bump(&self, base: &Snapshot) -> Snapshot {
        Snapshot {
            state_version: base.state_version + 1,
            ..base.clone()
        }
    }

    pub async fn ingest_historian(&self, text: &str) -> std::result::Result<IngestResponse, ApiError> {
        let parsed = parse_historian_csv(text)?;
        let mut w = self.inner.writer.lock().await;
        let accepted_rows = parsed.records.len();
        w.history.merge_historian(parsed.records);
        let base = self.snapshot();
        let mut next = self.bump(&base);
        let step = self.inner.config.step_minutes();
        // newer plant data moves the twin forward
        if let (Some(end), Ok(aligned)) = (w.history.end(step), w.history.align(step)) {
            if end > base.now {
                if let Ok(state) = derive_state(&self.inner.config.plant, &aligned) {
                    next.plant = state;
                    next.now = end;
                }
            }
        }
        let payload = serde_json::json!({ "plant": next.plant, "now": next.now, "ingested_rows": accepted_rows });
        let snap = self.publish(next, vec![(EventKind::State, payload)]);
        Ok(IngestResponse {
            accepted_rows,
            row_errors: parsed.errors,
            state_version: snap.state_version,
        })
    }

    pub async fn plan(&self, req: PlanRequest) -> std::result::Result<RunRecord, ApiError> {
        let w = self.inner.writer.lock().await;
        let base = self.snapshot();
        let model = base.model.clone().ok_or(Error::Untrained)?;
        if req.horizon_steps == 0 {
            return Err(ApiError::invalid("horizon_steps must be at least 1"));
        }
        let mut plan_config: PlanConfig = self.inner.config.plan.clone();
        if let Some(omega) = req.omega {
            plan_config.omega = omega;
        }
        if let Some(grid) = req.grid {
            plan_config.grid = grid;
        }
        if let Some(policy) = req.policy {
            plan_config.policy = policy;
        }
        let history = w.history.clone();
        let config = self.inner.config.clone();
        let state = base.plant.clone();
        let horizon = req.horizon_steps;
        // long computation off the async workers; reads keep serving `base`
        let rec = tokio::task::spawn_blocking(move || {
            plan_from_history(&history, Some(&state), Some(model.as_ref()), &config, &plan_config, horizon)
        })
        .await
        .map_err(|e| ApiError::new(crate::error::ErrorCode::Internal, e.to_string()))??;
        let run = self.inner.runs.write().expect("runs lock").append(rec.clone(), Utc::now())?;
        let mut next = self.bump(&base);
        next.latest_recommendation = Some(rec);
        let payload = serde_json::to_value(&run).map_err(Error::from)?;
        self.publish(next, vec![(EventKind::Recommendation, payload)]);
        drop(w);
        Ok(run)
    }

    pub fn whatif(&self, req: &WhatIfRequest) -> std::result::Result<WhatIfResponse, ApiError> {
        let op = req.op_point;
        op.validate()?;
        let grid = &self.inner.config.plan.grid;
        for (name, v, axis) in [
            ("temp_setpoint_c", op.temp_setpoint_c, grid.temp_setpoint_c),
            ("dry_solids_frac", op.dry_solids_frac, grid.dry_solids_frac),
            ("cycle_minutes", op.cycle_minutes, grid.cycle_minutes),
        ] {
            if v < axis.min || v > axis.max {
                return Err(ApiError::invalid(format!(
                    "{name}={v} outside the scenario grid [{}, {}]",
                    axis.min, axis.max
                )));
            }
        }
        let snap = self.snapshot();
        let model = snap.model.as_ref().ok_or(Error::Untrained)?;
        let p = model.predict_row(&op.features())?;
        let policy = &self.inner.config.plan.policy;
        Ok(WhatIfResponse {
            op_point: op,
            predicted_energy: p[0],
            predicted_quality: p[1],
            feasible: policy.is_feasible(p[1]),
            quality_threshold: policy.threshold(),
        })
    }

    pub async fn operator_action(&self, req: ActionRequest) -> std::result::Result<RunRecord, ApiError> {
        let _w = self.inner.writer.lock().await;
        let action = OperatorAction {
            kind: req.kind,
            schedule_edits: req.schedule_edits,
            actor: req.actor.unwrap_or_else(|| "operator".into()),
            at: Utc::now(),
        };
        let run = self.inner.runs.write().expect("runs lock").record_action(req.run_id, action)?;
        let base = self.snapshot();
        let mut next = self.bump(&base);
        next.active_schedule = Some(ActiveSchedule {
            run_id: run.run_id,
            start: run.recommendation.grid.start,
            step_minutes: run.recommendation.grid.step_minutes,
            schedule: run.active_schedule(),
            op_points: run.recommendation.op_points(),
        });
        let payload = serde_json::to_value(&run).map_err(Error::from)?;
        self.publish(next, vec![(EventKind::Action, payload)]);
        Ok(run)
    }

    pub async fn tick(&self, req: TickRequest) -> std::result::Result<TickResponse, ApiError> {
        if req.steps == 0 {
            return Err(ApiError::invalid("steps must be at least 1"));
        }
        let mut guard = self.inner.writer.lock().await;
        let w = &mut *guard;
        let config = &self.inner.config;
        let step = Duration::minutes(i64::from(config.step_minutes()));
        let mut flags = TickFlags::default();
        let mut steps = Vec::with_capacity(req.steps);
        for _ in 0..req.steps {
            let base = self.snapshot();
            let now = base.now;
            let date = now.date_naive();
            if !w.history.weather.iter().any(|d| d.date == date) {
                let day = config.scenario.weather.generate(date, 1, &mut w.rng)?;
                w.history.merge_weather(day);
            }
            let inflow_pct = config
                .scenario
                .inflow
                .realise(now, config.step_minutes(), 1, &w.history.weather, &mut w.rng)?[0];
            let n = config.plant.n_reactors();
            let (decisions, op, run_id) = match base.active_schedule.as_ref().and_then(|a| a.at(now).map(|d| (d, a.run_id))) {
                Some(((d, op), id)) => (d, op, Some(id)),
                None => {
                    flags.no_active_schedule = true;
                    (vec![false; n], None, None)
                }
            };
            let mut state = base.plant.clone();
            if let Some(op) = op {
                state.op_point = op;
            }
            let active = decisions.iter().any(|&on| on);
            let (energy, quality) = sample_observation(&state.op_point, &config.truth, &mut w.rng)?;
            let mut rows = vec![
                (Tag::TankLevelPct, state.tank.level_pct),
                (Tag::InflowM3, inflow_pct * config.plant.capacity_m3 / 100.0),
                (Tag::TempSetpointC, state.op_point.temp_setpoint_c),
                (Tag::DrySolidsFrac, state.op_point.dry_solids_frac),
                (Tag::CycleMinutes, state.op_point.cycle_minutes),
            ];
            for (r, &on) in decisions.iter().enumerate().take(Tag::REACTOR_STATUS.len()) {
                rows.push((Tag::REACTOR_STATUS[r], if on { 1.0 } else { 0.0 }));
            }
            if active {
                rows.push((Tag::EnergyKwhM3, energy));
                rows.push((Tag::QualityIndex, quality));
            }
            w.history.merge_historian(
                rows.into_iter()
                    .map(|(tag, value)| HistorianRecord { timestamp: now, tag, value })
                    .collect(),
            );
            let result = step_dynamics(&config.plant, &state, inflow_pct, &decisions)?;
            flags.overflow |= result.overflow;
            flags.underflow |= result.underflow;
            let mut next = self.bump(&base);
            next.plant = result.next_state;
            next.now = now + step;
            let record = TickStep {
                timestamp: now,
                state_version: next.state_version,
                inflow_pct,
                decisions,
                run_id,
                op_point: state.op_point,
                level_pct: next.plant.tank.level_pct,
                measured_energy_kwh_m3: active.then_some(energy),
                measured_quality: active.then_some(quality),
                overflow: result.overflow,
                underflow: result.underflow,
            };
            let step_json = serde_json::to_value(&record).map_err(Error::from)?;
            let mut events = vec![(
                EventKind::State,
                serde_json::json!({ "plant": next.plant, "now": next.now, "step": step_json }),
            )];
            if result.overflow || result.underflow {
                events.push((
                    EventKind::Violation,
                    serde_json::json!({
                        "overflow": result.overflow,
                        "underflow": result.underflow,
                        "step": step_json,
                    }),
                ));
            }
            self.publish(next, events);
            steps.push(record);
        }
        let snap = self.snapshot();
        Ok(TickResponse {
            state_version: snap.state_version,
            now: snap.now,
            plant: snap.plant.clone(),
            steps,
            flags,
        })
    }

    pub fn runs(&self, limit: usize, offset: usize) -> RunsPage {
        let store = self.inner.runs.read().expect("runs lock");
        RunsPage {
            total: store.len(),
            limit,
            offset,
            runs: store.list(limit, offset),
        }
    }

    pub fn run(&self, id: u64) -> std::result::Result<RunRecord, ApiError> {
        self.inner
            .runs
            .read()
            .expect("runs lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("run {id}")))
    }

    /// Recorded history, for persistence and tests.
    pub async fn history(&self) -> History {
        self.inner.writer.lock().await.history.clone()
    }
}
