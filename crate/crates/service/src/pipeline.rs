use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::Duration;
use hydrotwin_core::datastore::{build_training_dataset, RowIssue, Tag};
use hydrotwin_core::decision::{
    evaluate_closed_loop, plan, settled_state, ClosedLoopReport, PlanConfig, PlanInputs, PolicyReport,
    Recommendation,
};
use hydrotwin_core::forecast::ForecastSpec;
use hydrotwin_core::learner::{evaluate, model_selection, CandidateScore, Model, OutputMetrics, Regressor};
use hydrotwin_core::scenario::{generate_episodes, ScenarioConfig};
use hydrotwin_core::twin::{simulate_episode, PlantState};
use hydrotwin_core::{Error, Result};
use serde::Serialize;

use crate::config::ServiceConfig;
use crate::history::{derive_state, exog_features, inflow_series, History, LoadIssues};

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub rows: usize,
    pub historian_row_errors: Vec<RowIssue>,
    pub weather_row_errors: Vec<RowIssue>,
    /// Aligned steps left empty after forward-fill, per tag.
    pub unfilled_steps: BTreeMap<Tag, usize>,
    pub ranking: Vec<CandidateScore>,
    pub selected: String,
    pub in_sample: Vec<OutputMetrics>,
}

/// Cross-validate the configured candidates on the aligned history and
/// refit the winner on every row.
pub fn train(history: &History, issues: &LoadIssues, config: &ServiceConfig) -> Result<(Model, TrainReport)> {
    let aligned = history.align(config.step_minutes())?;
    let dataset = build_training_dataset(&aligned)?;
    let selection = model_selection(&dataset, &config.train.candidates, config.train.k_folds, config.seeds.train)?;
    let in_sample = evaluate(&selection.best, &dataset)?;
    let report = TrainReport {
        rows: dataset.n_rows(),
        historian_row_errors: issues.historian.clone(),
        weather_row_errors: issues.weather.clone(),
        unfilled_steps: aligned.missing.iter().map(|(t, gaps)| (*t, gaps.len())).collect(),
        ranking: selection.ranking,
        selected: selection.best_name,
        in_sample,
    };
    Ok((selection.best, report))
}

/// Plan from recorded history. Without `state` the plant state is derived
/// from the last logged step.
pub fn plan_from_history<M: Regressor + Serialize + ?Sized>(
    history: &History,
    state: Option<&PlantState>,
    model: Option<&M>,
    config: &ServiceConfig,
    plan_config: &PlanConfig,
    horizon_steps: usize,
) -> Result<Recommendation> {
    let model = model.ok_or(Error::Untrained)?;
    if horizon_steps == 0 {
        return Err(Error::Config("horizon_steps must be at least 1".into()));
    }
    let aligned = history.align(config.step_minutes())?;
    let inflow = inflow_series(&aligned)?;
    let derived;
    let state = match state {
        Some(s) => s,
        None => {
            derived = derive_state(&config.plant, &aligned)?;
            &derived
        }
    };
    let exog = match plan_config.forecast {
        ForecastSpec::FeatureModel { .. } => Some(exog_features(&history.weather, &inflow, horizon_steps)?),
        _ => None,
    };
    let inputs = PlanInputs {
        plant: &config.plant,
        state,
        inflow_history_m3: &inflow,
        exog: exog.as_ref(),
        horizon_steps,
    };
    plan(&inputs, Some(model), plan_config)
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicySummary {
    pub name: String,
    pub rms_deviation: f64,
    pub switches: u64,
    pub total_energy_kwh: f64,
    pub min_quality: Option<f64>,
    pub overflow_steps: usize,
    pub underflow_steps: usize,
}

impl From<&PolicyReport> for PolicySummary {
    fn from(r: &PolicyReport) -> Self {
        Self {
            name: r.name.clone(),
            rms_deviation: r.rms_deviation,
            switches: r.switches,
            total_energy_kwh: r.total_energy_kwh,
            min_quality: r.min_quality,
            overflow_steps: r.episodes.iter().map(|e| e.overflow_steps).sum(),
            underflow_steps: r.episodes.iter().map(|e| e.underflow_steps).sum(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateSummary {
    pub episodes: usize,
    pub steps: usize,
    pub first_seed: u64,
    pub rms_ratio: f64,
    pub policies: Vec<PolicySummary>,
}

impl EvaluateSummary {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>14} {:>9} {:>14} {:>11}\n",
            "policy", "rms_dev_pct", "switches", "energy_kwh", "min_quality"
        );
        for p in &self.policies {
            let q = p.min_quality.map_or("-".to_string(), |q| format!("{q:.4}"));
            let _ = writeln!(
                out,
                "{:<10} {:>14.4} {:>9} {:>14.1} {:>11}",
                p.name, p.rms_deviation, p.switches, p.total_energy_kwh, q
            );
        }
        let _ = writeln!(out, "rms ratio (plan / deadband): {:.4}", self.rms_ratio);
        out
    }
}

fn episode_config(config: &ServiceConfig, steps: Option<usize>) -> ScenarioConfig {
    ScenarioConfig {
        steps: steps.unwrap_or(config.scenario.steps),
        ..config.scenario.clone()
    }
}

/// Run both policies on `episodes` seeded scenarios.
pub fn run_closed_loop(config: &ServiceConfig, episodes: usize, steps: Option<usize>) -> Result<ClosedLoopReport> {
    if episodes == 0 {
        return Err(Error::Config("--episodes must be at least 1".into()));
    }
    let scenario = episode_config(config, steps);
    if scenario.steps == 0 {
        return Err(Error::Config("--steps must be at least 1".into()));
    }
    let eps = generate_episodes(&scenario, episodes, config.seeds.evaluate)?;
    let (a, b) = config.policies();
    evaluate_closed_loop(&eps, &a, &b, &config.closed_loop())
}

pub fn evaluate_policies(config: &ServiceConfig, episodes: usize) -> Result<EvaluateSummary> {
    let report = run_closed_loop(config, episodes, None)?;
    Ok(EvaluateSummary {
        episodes,
        steps: config.scenario.steps,
        first_seed: config.seeds.evaluate,
        rms_ratio: report.rms_ratio,
        policies: vec![(&report.a).into(), (&report.b).into()],
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub evaluation: EvaluateSummary,
    pub files: Vec<PathBuf>,
}

/// Simulate both policies and write one CSV per episode into `out_dir`.
pub fn simulate(config: &ServiceConfig, episodes: usize, steps: usize, out_dir: &Path) -> Result<SimulateSummary> {
    let report = run_closed_loop(config, episodes, Some(steps))?;
    let scenario = episode_config(config, Some(steps));
    let eps = generate_episodes(&scenario, episodes, config.seeds.evaluate)?;
    let cl = config.closed_loop();
    let (spec_a, spec_b) = config.policies();
    std::fs::create_dir_all(out_dir)?;
    let n = config.plant.n_reactors();
    let mut files = Vec::with_capacity(episodes);
    for (i, ep) in eps.iter().enumerate() {
        let mut csv = String::from("policy,step,timestamp,inflow_pct,level_pct");
        for r in 1..=n {
            let _ = write!(csv, ",reactor{r}_on");
        }
        csv.push_str(",energy_kwh,overflow,underflow\n");
        for (spec, rep) in [(&spec_a, &report.a), (&spec_b, &report.b)] {
            let schedule = &rep.episodes[i].schedule;
            let initial = settled_state(&cl, spec.op_point);
            let inflows = &ep.inflow_pct[..ep.steps];
            let sim = simulate_episode(&cl.plant, &initial, inflows, schedule, &vec![spec.op_point; ep.steps], &cl.truth)?;
            for (t, step) in sim.steps.iter().enumerate() {
                let ts = ep.start + Duration::minutes(i64::from(ep.step_minutes) * t as i64);
                let _ = write!(
                    csv,
                    "{},{t},{},{},{}",
                    spec.name,
                    ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                    inflows[t],
                    step.next_state.tank.level_pct
                );
                for r in 0..n {
                    let _ = write!(csv, ",{}", u8::from(schedule.x[r][t]));
                }
                let _ = writeln!(
                    csv,
                    ",{},{},{}",
                    sim.energy_kwh[t],
                    u8::from(step.overflow),
                    u8::from(step.underflow)
                );
            }
        }
        let path = out_dir.join(format!("episode_{}.csv", ep.seed));
        std::fs::write(&path, csv)?;
        files.push(path);
    }
    Ok(SimulateSummary {
        evaluation: EvaluateSummary {
            episodes,
            steps,
            first_seed: config.seeds.evaluate,
            rms_ratio: report.rms_ratio,
            policies: vec![(&report.a).into(), (&report.b).into()],
        },
        files,
    })
}

/// The bundled sample dataset: two weeks of deadband operation generated
/// from the configured plant, ground truth and sample seed.
pub fn sample_history(config: &ServiceConfig) -> Result<History> {
    let sample = hydrotwin_core::scenario::generate_history(&config.history_config(), config.seeds.sample)?;
    Ok(History {
        historian: sample.historian,
        weather: sample.weather,
    })
}
