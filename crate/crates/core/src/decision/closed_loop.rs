use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::datastore::exog_from_weather;
use crate::error::{Error, Result};
use crate::forecast::{ForecastSpec, TimeSeries};
use crate::scenario::EpisodeScenario;
use crate::schedule::{
    hysteresis_baseline, objective_value, solve_exact, HysteresisPolicy, Schedule, ScheduleProblem, SolverOptions,
    DEFAULT_OMEGA,
};
use crate::twin::{simulate_episode, GroundTruthParams, OperatingPoint, PlantConfig, PlantState, TimeGrid};

/// Run length assigned to every reactor at the start of an episode, long
/// enough that no min-up/min-down constraint binds at step 0.
const SETTLED_STEPS: u32 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Re-solve the schedule every step over a rolling forecast window and
    /// apply its first column.
    RecedingHorizon { horizon: usize, forecast: ForecastSpec },
    Hysteresis { deadband: HysteresisPolicy },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub name: String,
    pub kind: PolicyKind,
    /// Operating point used on every active step.
    pub op_point: OperatingPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosedLoopConfig {
    pub plant: PlantConfig,
    pub truth: GroundTruthParams,
    pub target_level_pct: f64,
    pub initial_level_pct: f64,
    pub omega: f64,
    pub solver: SolverOptions,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        Self {
            plant: PlantConfig::default(),
            truth: GroundTruthParams::default().noiseless(),
            target_level_pct: 60.0,
            initial_level_pct: 60.0,
            omega: DEFAULT_OMEGA,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    /// `sqrt(mean (L_t - target)^2)` over the realised levels `L_1..=L_T`.
    pub rms_deviation: f64,
    pub max_abs_deviation: f64,
    pub switches: u64,
    pub total_energy_kwh: f64,
    pub min_quality: Option<f64>,
    /// Ex-post scheduling objective on the realised inflows.
    pub objective: f64,
    pub overflow_steps: usize,
    pub underflow_steps: usize,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub name: String,
    pub episodes: Vec<EpisodeMetrics>,
    /// Pooled over every step of every episode.
    pub rms_deviation: f64,
    pub switches: u64,
    pub total_energy_kwh: f64,
    pub min_quality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    pub a: PolicyReport,
    pub b: PolicyReport,
    /// `a.rms_deviation / b.rms_deviation`.
    pub rms_ratio: f64,
}

/// Episode start: initial level, all reactors OFF and long settled.
pub fn settled_state(config: &ClosedLoopConfig, op: OperatingPoint) -> PlantState {
    let n = config.plant.n_reactors();
    let mut state = config.plant.initial_state(config.initial_level_pct, &vec![false; n], op);
    for r in &mut state.reactors {
        r.steps_in_state = SETTLED_STEPS;
    }
    state
}

/// The scheduling problem over the whole episode with realised inflows as
/// the forecast.
fn episode_problem(episode: &EpisodeScenario, config: &ClosedLoopConfig) -> Result<ScheduleProblem> {
    let n = config.plant.n_reactors();
    Ok(ScheduleProblem {
        grid: TimeGrid::new(episode.start, episode.step_minutes, episode.steps)?,
        reactors: config.plant.reactors.clone(),
        initial_status: vec![false; n],
        initial_steps_in_state: Some(vec![SETTLED_STEPS; n]),
        initial_level_pct: config.initial_level_pct,
        target_level_pct: config.target_level_pct,
        inflow_forecast_pct: episode.inflow_pct[..episode.steps].to_vec(),
        omega: config.omega,
        level_bounds: None,
    })
}

fn receding_horizon(
    episode: &EpisodeScenario,
    config: &ClosedLoopConfig,
    horizon: usize,
    forecast: &ForecastSpec,
    op: OperatingPoint,
) -> Result<Schedule> {
    if horizon == 0 {
        return Err(Error::Config("receding horizon must be at least 1".into()));
    }
    let n = config.plant.n_reactors();
    let step = Duration::minutes(i64::from(episode.step_minutes));
    let hist_start = episode.start - step * episode.history_pct.len() as i32;
    let needs_exog = matches!(forecast, ForecastSpec::FeatureModel { .. });
    let mut history = episode.history_pct.clone();
    let mut state = settled_state(config, op);
    let mut schedule = Schedule::all_off(n, episode.steps);
    for t in 0..episode.steps {
        let series = TimeSeries::new(hist_start, episode.step_minutes, history.clone())?;
        let exog = if needs_exog {
            Some(exog_from_weather(&episode.weather, hist_start, episode.step_minutes, history.len() + horizon)?)
        } else {
            None
        };
        let predicted = forecast.forecast(&series, exog.as_ref(), horizon)?;
        let problem = ScheduleProblem {
            grid: TimeGrid::new(series.end(), episode.step_minutes, horizon)?,
            reactors: config.plant.reactors.clone(),
            initial_status: state.running(),
            initial_steps_in_state: Some(state.reactors.iter().map(|r| r.steps_in_state).collect()),
            initial_level_pct: state.tank.level_pct,
            target_level_pct: config.target_level_pct,
            inflow_forecast_pct: predicted.values.iter().map(|v| v.max(0.0)).collect(),
            omega: config.omega,
            level_bounds: None,
        };
        let decisions = solve_exact(&problem, &config.solver)?.schedule.column(0);
        for (r, &on) in decisions.iter().enumerate() {
            schedule.x[r][t] = on;
        }
        let inflow = episode.inflow_pct[t];
        state = crate::twin::step_dynamics(&config.plant, &state, inflow, &decisions)?.next_state;
        history.push(inflow);
    }
    Ok(schedule)
}

fn policy_schedule(episode: &EpisodeScenario, policy: &PolicySpec, config: &ClosedLoopConfig) -> Result<Schedule> {
    match &policy.kind {
        PolicyKind::RecedingHorizon { horizon, forecast } => {
            receding_horizon(episode, config, *horizon, forecast, policy.op_point)
        }
        PolicyKind::Hysteresis { deadband } => Ok(hysteresis_baseline(&episode_problem(episode, config)?, deadband)),
    }
}

fn run_policy(episodes: &[EpisodeScenario], policy: &PolicySpec, config: &ClosedLoopConfig) -> Result<PolicyReport> {
    let mut metrics = Vec::with_capacity(episodes.len());
    let (mut sq_sum, mut count) = (0.0, 0usize);
    for episode in episodes {
        if episode.inflow_pct.len() < episode.steps {
            return Err(Error::Dimension(format!(
                "episode {} has {} inflows for {} steps",
                episode.seed,
                episode.inflow_pct.len(),
                episode.steps
            )));
        }
        let schedule = policy_schedule(episode, policy, config)?;
        let initial = settled_state(config, policy.op_point);
        let ops = vec![policy.op_point; episode.steps];
        let sim = simulate_episode(
            &config.plant,
            &initial,
            &episode.inflow_pct[..episode.steps],
            &schedule,
            &ops,
            &config.truth,
        )?;
        let deviations: Vec<f64> = sim.levels().iter().map(|l| l - config.target_level_pct).collect();
        let ep_sq: f64 = deviations.iter().map(|d| d * d).sum();
        sq_sum += ep_sq;
        count += deviations.len();
        let ex_post = objective_value(&episode_problem(episode, config)?, &schedule)?;
        metrics.push(EpisodeMetrics {
            seed: episode.seed,
            rms_deviation: (ep_sq / deviations.len() as f64).sqrt(),
            max_abs_deviation: deviations.iter().fold(0.0, |m, d| m.max(d.abs())),
            switches: ex_post.switch_count,
            total_energy_kwh: sim.total_energy_kwh(),
            min_quality: sim.min_quality(),
            objective: ex_post.objective,
            overflow_steps: sim.steps.iter().filter(|s| s.overflow).count(),
            underflow_steps: sim.steps.iter().filter(|s| s.underflow).count(),
            schedule,
        });
    }
    Ok(PolicyReport {
        name: policy.name.clone(),
        rms_deviation: (sq_sum / count.max(1) as f64).sqrt(),
        switches: metrics.iter().map(|m| m.switches).sum(),
        total_energy_kwh: metrics.iter().map(|m| m.total_energy_kwh).sum(),
        min_quality: metrics.iter().filter_map(|m| m.min_quality).reduce(f64::min),
        episodes: metrics,
    })
}

/// Replay both policies through the twin on identical inflow realisations.
pub fn evaluate_closed_loop(
    episodes: &[EpisodeScenario],
    a: &PolicySpec,
    b: &PolicySpec,
    config: &ClosedLoopConfig,
) -> Result<ClosedLoopReport> {
    if episodes.is_empty() {
        return Err(Error::Config("closed-loop evaluation needs at least one episode".into()));
    }
    config.plant.validate()?;
    let a = run_policy(episodes, a, config)?;
    let b = run_policy(episodes, b, config)?;
    Ok(ClosedLoopReport {
        rms_ratio: a.rms_deviation / b.rms_deviation,
        a,
        b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub seed: u64,
    pub optimal_objective: f64,
    pub baseline_objective: f64,
    pub proven_optimal: bool,
}

/// Solve each whole episode with the realised inflows as a perfect
/// forecast and score the deadband schedule on the same problem.
pub fn perfect_foresight_check(
    episodes: &[EpisodeScenario],
    deadband: &HysteresisPolicy,
    config: &ClosedLoopConfig,
) -> Result<Vec<DominanceCheck>> {
    episodes
        .iter()
        .map(|episode| {
            let problem = episode_problem(episode, config)?;
            let options = SolverOptions {
                max_decision_vars: config
                    .solver
                    .max_decision_vars
                    .max(problem.n_reactors() * problem.horizon()),
                ..config.solver.clone()
            };
            let optimal = solve_exact(&problem, &options)?;
            let baseline = objective_value(&problem, &hysteresis_baseline(&problem, deadband))?;
            Ok(DominanceCheck {
                seed: episode.seed,
                optimal_objective: optimal.objective,
                baseline_objective: baseline.objective,
                proven_optimal: optimal.optimal,
            })
        })
        .collect()
}
