use std::path::Path;

use chrono::{DateTime, Utc};
use hydrotwin_core::decision::{ClosedLoopConfig, PlanConfig, PolicyKind, PolicySpec};
use hydrotwin_core::forecast::ForecastSpec;
use hydrotwin_core::learner::{CandidateSpec, TrainConfig};
use hydrotwin_core::scenario::{HistoryConfig, ScenarioConfig};
use hydrotwin_core::schedule::HysteresisPolicy;
use hydrotwin_core::twin::{GroundTruthParams, OperatingPoint, PlantConfig};
use hydrotwin_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "HYDROTWIN_CONFIG";
pub const PORT_ENV: &str = "HYDROTWIN_PORT";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    /// Sample history generator.
    pub sample: u64,
    /// Fold assignment and learner randomness.
    pub train: u64,
    /// Inflow, weather and measurement noise drawn by `/sim/tick`.
    pub sim: u64,
    /// First episode seed for `simulate` and `evaluate`.
    pub evaluate: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            sample: 7,
            train: 0,
            sim: 1,
            evaluate: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub candidates: Vec<CandidateSpec>,
    pub k_folds: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            candidates: vec![
                CandidateSpec::Gbt {
                    name: "gbt".into(),
                    config: TrainConfig::default(),
                },
                CandidateSpec::Knn { name: "knn5".into(), k: 5 },
                CandidateSpec::mean_predictor(),
            ],
            k_folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSettings {
    pub start: DateTime<Utc>,
    pub days: usize,
    pub op_change_every: usize,
}

impl Default for SampleSettings {
    fn default() -> Self {
        let h = HistoryConfig::default();
        Self {
            start: h.scenario.start,
            days: 14,
            op_change_every: h.op_change_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSettings {
    /// Window of the receding-horizon policy.
    pub horizon: usize,
    pub forecast: ForecastSpec,
    pub deadband: HysteresisPolicy,
    pub op_point: OperatingPoint,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            horizon: 16,
            forecast: ForecastSpec::SeasonalNaive { period: 96 },
            deadband: HysteresisPolicy::around(60.0, 10.0),
            op_point: OperatingPoint {
                temp_setpoint_c: 164.0,
                dry_solids_frac: 0.2,
                cycle_minutes: 40.0,
            },
        }
    }
}

/// Everything the service and CLI read from `HYDROTWIN_CONFIG`. Every
/// field is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub plant: PlantConfig,
    pub truth: GroundTruthParams,
    pub plan: PlanConfig,
    pub scenario: ScenarioConfig,
    pub initial_level_pct: f64,
    pub seeds: Seeds,
    pub train: TrainSettings,
    pub sample: SampleSettings,
    pub evaluate: EvaluateSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            plant: PlantConfig::default(),
            truth: GroundTruthParams {
                noise_sigma_energy: 0.5,
                noise_sigma_quality: 0.01,
                ..GroundTruthParams::default()
            },
            plan: PlanConfig::default(),
            scenario: ScenarioConfig::default(),
            initial_level_pct: 60.0,
            seeds: Seeds::default(),
            train: TrainSettings::default(),
            sample: SampleSettings::default(),
            evaluate: EvaluateSettings::default(),
        }
    }
}

impl ServiceConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.truth.validate()?;
        self.plan.grid.validate()?;
        self.plan.policy.validate()?;
        self.scenario.weather.validate()?;
        if self.scenario.step_minutes == 0 {
            return Err(Error::Config("scenario.step_minutes must be positive".into()));
        }
        if !(0.0..=100.0).contains(&self.initial_level_pct) {
            return Err(Error::Config("initial_level_pct must lie in [0, 100]".into()));
        }
        Ok(())
    }

    pub fn step_minutes(&self) -> u32 {
        self.scenario.step_minutes
    }

    pub fn history_config(&self) -> HistoryConfig {
        HistoryConfig {
            plant: self.plant.clone(),
            truth: self.truth.clone(),
            scenario: ScenarioConfig {
                start: self.sample.start,
                history_steps: 0,
                steps: self.sample.days * steps_per_day(self.step_minutes()),
                lookahead: 0,
                ..self.scenario.clone()
            },
            initial_level_pct: self.initial_level_pct,
            deadband: self.evaluate.deadband,
            op_change_every: self.sample.op_change_every,
        }
    }

    pub fn closed_loop(&self) -> ClosedLoopConfig {
        ClosedLoopConfig {
            plant: self.plant.clone(),
            truth: self.truth.noiseless(),
            target_level_pct: self.plan.target_level_pct,
            initial_level_pct: self.initial_level_pct,
            omega: self.plan.omega,
            solver: self.plan.solver.clone(),
        }
    }

    /// The plan-based policy and the deadband baseline, in that order.
    pub fn policies(&self) -> (PolicySpec, PolicySpec) {
        let e = &self.evaluate;
        (
            PolicySpec {
                name: "plan".into(),
                kind: PolicyKind::RecedingHorizon {
                    horizon: e.horizon,
                    forecast: e.forecast.clone(),
                },
                op_point: e.op_point,
            },
            PolicySpec {
                name: "deadband".into(),
                kind: PolicyKind::Hysteresis { deadband: e.deadband },
                op_point: e.op_point,
            },
        )
    }
}

pub fn steps_per_day(step_minutes: u32) -> usize {
    (24 * 60 / step_minutes.max(1)) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c: ServiceConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ServiceConfig::default());
    }

    #[test]
    fn partial_override() {
        let c: ServiceConfig = serde_json::from_str(r#"{"plan": {"omega": 1.5}, "seeds": {"sim": 9}}"#).unwrap();
        assert_eq!(c.plan.omega, 1.5);
        assert_eq!(c.seeds.sim, 9);
        assert_eq!(c.seeds.sample, 7);
    }

    #[test]
    fn sample_covers_two_weeks() {
        assert_eq!(ServiceConfig::default().history_config().scenario.steps, 14 * 96);
    }
}
