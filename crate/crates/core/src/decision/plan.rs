use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{select_operating_point, QualityPolicy, ScenarioGrid};
use crate::error::{Error, Result};
use crate::forecast::{ExogFeatures, ForecastMethod, ForecastSpec, TimeSeries};
use crate::learner::Regressor;
use crate::schedule::{solve_exact, LevelBounds, Schedule, ScheduleProblem, SolverOptions, DEFAULT_OMEGA};
use crate::twin::{OperatingPoint, PlantConfig, PlantState, TimeGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub target_level_pct: f64,
    pub omega: f64,
    #[serde(default)]
    pub level_bounds: Option<LevelBounds>,
    pub forecast: ForecastSpec,
    pub solver: SolverOptions,
    pub grid: ScenarioGrid,
    pub policy: QualityPolicy,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            target_level_pct: 60.0,
            omega: DEFAULT_OMEGA,
            level_bounds: None,
            forecast: ForecastSpec::SeasonalNaive { period: 96 },
            solver: SolverOptions::default(),
            grid: ScenarioGrid::default(),
            policy: QualityPolicy::default(),
        }
    }
}

/// Everything `plan` reads besides the model and configuration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlanInputs<'a> {
    pub plant: &'a PlantConfig,
    pub state: &'a PlantState,
    /// Inflow volume per step (m³), ending immediately before the plan.
    pub inflow_history_m3: &'a TimeSeries,
    /// Covariates for the history followed by the horizon.
    pub exog: Option<&'a ExogFeatures>,
    pub horizon_steps: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationFlags {
    pub quality_risk: bool,
    pub not_proven_optimal: bool,
    pub level_bound_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub step: usize,
    pub start: DateTime<Utc>,
    pub inflow_forecast_pct: f64,
    /// Predicted (unclamped) level at the end of the step.
    pub predicted_level_pct: f64,
    pub op_point: Option<OperatingPoint>,
    pub predicted_energy_kwh_m3: Option<f64>,
    pub predicted_quality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub grid: TimeGrid,
    pub target_level_pct: f64,
    pub initial_level_pct: f64,
    pub forecast_method: ForecastMethod,
    pub schedule: Schedule,
    pub steps: Vec<StepPlan>,
    pub objective: f64,
    pub switch_count: u64,
    pub predicted_total_energy_kwh: f64,
    /// Lowest predicted quality over active steps.
    pub min_predicted_quality: Option<f64>,
    pub flags: RecommendationFlags,
    pub input_hash: String,
}

impl Recommendation {
    pub fn op_points(&self) -> Vec<Option<OperatingPoint>> {
        self.steps.iter().map(|s| s.op_point).collect()
    }
}

#[derive(Serialize)]
struct HashedInputs<'a, M: ?Sized> {
    inputs: &'a PlanInputs<'a>,
    config: &'a PlanConfig,
    model: &'a M,
}

/// Hex SHA-256 of the JSON encoding of the plan inputs.
pub fn hash_inputs<M: Serialize + ?Sized>(inputs: &PlanInputs<'_>, config: &PlanConfig, model: &M) -> Result<String> {
    let bytes = serde_json::to_vec(&HashedInputs { inputs, config, model })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Forecast, schedule, then pick the operating point for active steps.
///
/// The result is a pure function of the arguments: `id` and `created_at`
/// derive from the input hash and the planning instant (the end of the
/// inflow history) rather than from a clock.
pub fn plan<M: Regressor + Serialize + ?Sized>(
    inputs: &PlanInputs<'_>,
    model: Option<&M>,
    config: &PlanConfig,
) -> Result<Recommendation> {
    let model = model.ok_or(Error::Untrained)?;
    let plant = inputs.plant;
    let state = inputs.state;
    plant.validate()?;
    config.policy.validate()?;
    config.grid.validate()?;
    if inputs.horizon_steps == 0 {
        return Err(Error::Config("horizon_steps must be at least 1".into()));
    }
    if state.reactors.len() != plant.n_reactors() {
        return Err(Error::Dimension(format!(
            "state has {} reactors, plant {}",
            state.reactors.len(),
            plant.n_reactors()
        )));
    }
    let history = inputs.inflow_history_m3;
    let needed = config.forecast.min_history();
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            available: history.len(),
        });
    }
    let input_hash = hash_inputs(inputs, config, model)?;

    let forecast = config.forecast.forecast(history, inputs.exog, inputs.horizon_steps)?;
    let inflow_pct: Vec<f64> = forecast
        .values
        .iter()
        .map(|m3| (m3 / plant.capacity_m3 * 100.0).max(0.0))
        .collect();

    let grid = TimeGrid::new(history.end(), history.step_minutes, inputs.horizon_steps)?;
    let problem = ScheduleProblem {
        grid: grid.clone(),
        reactors: plant.reactors.clone(),
        initial_status: state.running(),
        initial_steps_in_state: Some(state.reactors.iter().map(|r| r.steps_in_state).collect()),
        initial_level_pct: state.tank.level_pct,
        target_level_pct: config.target_level_pct,
        inflow_forecast_pct: inflow_pct.clone(),
        omega: config.omega,
        level_bounds: config.level_bounds,
    };
    let solution = solve_exact(&problem, &config.solver)?;
    let schedule = solution.schedule;

    let any_active = (0..grid.horizon_steps).any(|t| schedule.any_on(t));
    let selection = if any_active {
        Some(select_operating_point(model, &config.grid, &config.policy)?)
    } else {
        None
    };

    let mut steps = Vec::with_capacity(grid.horizon_steps);
    let mut total_energy = 0.0;
    let mut min_quality: Option<f64> = None;
    for t in 0..grid.horizon_steps {
        let chosen = selection.as_ref().filter(|_| schedule.any_on(t)).map(|s| s.chosen);
        if let Some(c) = chosen {
            let throughput_m3 = plant.capacity_m3 * plant.throughput_pct(&schedule.column(t)) / 100.0;
            total_energy += throughput_m3 * c.predicted_energy;
            min_quality = Some(min_quality.map_or(c.predicted_quality, |q| q.min(c.predicted_quality)));
        }
        steps.push(StepPlan {
            step: t,
            start: grid.time_at(t),
            inflow_forecast_pct: inflow_pct[t],
            predicted_level_pct: solution.levels[t + 1],
            op_point: chosen.map(|c| c.op_point),
            predicted_energy_kwh_m3: chosen.map(|c| c.predicted_energy),
            predicted_quality: chosen.map(|c| c.predicted_quality),
        });
    }

    Ok(Recommendation {
        id: format!("rec-{}", &input_hash[..16]),
        created_at: grid.start,
        target_level_pct: config.target_level_pct,
        initial_level_pct: state.tank.level_pct,
        forecast_method: forecast.method,
        flags: RecommendationFlags {
            quality_risk: selection.as_ref().is_some_and(|s| s.quality_risk),
            not_proven_optimal: !solution.optimal,
            level_bound_violation: solution.levels[1..].iter().any(|l| !(0.0..=100.0).contains(l)),
        },
        grid,
        schedule,
        steps,
        objective: solution.objective,
        switch_count: solution.switch_count,
        predicted_total_energy_kwh: total_energy,
        min_predicted_quality: min_quality,
        input_hash,
    })
}
