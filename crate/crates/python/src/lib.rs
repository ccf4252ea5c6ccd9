use chrono::{DateTime, Utc};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use hydrotwin_core::datastore::{from_json, parse_historian_csv, parse_weather_csv, to_json};
use hydrotwin_core::decision::{self, GroundTruthOracle, PlanConfig, PlanInputs, QualityPolicy, ScenarioGrid};
use hydrotwin_core::forecast::{seasonal_naive, TimeSeries};
use hydrotwin_core::learner::{self, CandidateSpec, Regressor, TrainConfig};
use hydrotwin_core::scenario::synthetic_dataset;
use hydrotwin_core::schedule::{self, ScheduleProblem, SolverOptions};
use hydrotwin_core::twin::{self, GroundTruthParams, PlantConfig, PlantState};

create_exception!(pyhydrotwin, HydrotwinError, PyValueError);

fn err(e: hydrotwin_core::Error) -> PyErr {
    HydrotwinError::new_err(e.to_string())
}

fn parse<T: serde::de::DeserializeOwned>(text: Option<&str>, what: &str) -> PyResult<T>
where
    T: Default,
{
    match text {
        Some(t) => serde_json::from_str(t).map_err(|e| HydrotwinError::new_err(format!("{what}: {e}"))),
        None => Ok(T::default()),
    }
}

/// Serialize through the stdlib `json` module so callers get plain dicts.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| HydrotwinError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(frozen, eq, from_py_object, module = "pyhydrotwin")]
#[derive(Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    inner: twin::OperatingPoint,
}

#[pymethods]
impl OperatingPoint {
    #[new]
    fn new(temp_setpoint_c: f64, dry_solids_frac: f64, cycle_minutes: f64) -> PyResult<Self> {
        let inner = twin::OperatingPoint::new(temp_setpoint_c, dry_solids_frac, cycle_minutes).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn temp_setpoint_c(&self) -> f64 {
        self.inner.temp_setpoint_c
    }

    #[getter]
    fn dry_solids_frac(&self) -> f64 {
        self.inner.dry_solids_frac
    }

    #[getter]
    fn cycle_minutes(&self) -> f64 {
        self.inner.cycle_minutes
    }

    /// Noiseless (energy kWh/m³, quality index) of the synthetic plant.
    fn ground_truth(&self) -> PyResult<(f64, f64)> {
        let p = GroundTruthParams::default();
        Ok((
            twin::true_energy(&self.inner, &p).map_err(err)?,
            twin::true_quality(&self.inner, &p).map_err(err)?,
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "OperatingPoint({}, {}, {})",
            self.inner.temp_setpoint_c, self.inner.dry_solids_frac, self.inner.cycle_minutes
        )
    }
}

/// Tank and reactors stepped one interval at a time.
#[pyclass(module = "pyhydrotwin")]
pub struct Twin {
    plant: PlantConfig,
    state: PlantState,
}

#[pymethods]
impl Twin {
    #[new]
    #[pyo3(signature = (level_pct, plant_json=None))]
    fn new(level_pct: f64, plant_json: Option<&str>) -> PyResult<Self> {
        let plant: PlantConfig = parse(plant_json, "plant")?;
        plant.validate().map_err(err)?;
        let state = plant.initial_state(level_pct, &[], twin::OperatingPoint::default());
        Ok(Self { plant, state })
    }

    #[getter]
    fn level_pct(&self) -> f64 {
        self.state.tank.level_pct
    }

    #[getter]
    fn running(&self) -> Vec<bool> {
        self.state.running()
    }

    /// Advance one step. Returns `(overflow, underflow)`.
    fn step(&mut self, inflow_pct: f64, decisions: Vec<bool>) -> PyResult<(bool, bool)> {
        let r = twin::step_dynamics(&self.plant, &self.state, inflow_pct, &decisions).map_err(err)?;
        self.state = r.next_state;
        Ok((r.overflow, r.underflow))
    }

    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.state)
    }
}

/// A fitted (energy, quality) regressor.
#[pyclass(frozen, module = "pyhydrotwin")]
pub struct Model {
    inner: learner::Model,
}

#[pymethods]
impl Model {
    /// Gradient-boosted trees on `n` noiseless synthetic samples.
    #[staticmethod]
    #[pyo3(signature = (n, seed=0, n_trees=200))]
    fn fit_synthetic(n: usize, seed: u64, n_trees: usize) -> PyResult<Self> {
        let data = synthetic_dataset(n, &GroundTruthParams::default(), seed).map_err(err)?;
        let spec = CandidateSpec::Gbt {
            name: "gbt".into(),
            config: TrainConfig {
                n_trees,
                ..TrainConfig::default()
            },
        };
        Ok(Self {
            inner: spec.fit(&data).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner).map_err(err)
    }

    fn predict(&self, op: &OperatingPoint) -> PyResult<(f64, f64)> {
        let p = self.inner.predict_row(&op.inner.features()).map_err(err)?;
        Ok((p[0], p[1]))
    }
}

/// The learned model, or the synthetic ground truth when none is given.
#[derive(Serialize)]
#[serde(untagged)]
enum Predictor<'a> {
    Learned(&'a learner::Model),
    Oracle(GroundTruthOracle),
}

impl<'a> Predictor<'a> {
    fn from(model: Option<&'a Model>) -> Self {
        match model {
            Some(m) => Predictor::Learned(&m.inner),
            None => Predictor::Oracle(GroundTruthOracle {
                params: GroundTruthParams::default(),
            }),
        }
    }
}

impl Regressor for Predictor<'_> {
    fn n_features(&self) -> usize {
        match self {
            Predictor::Learned(m) => m.n_features(),
            Predictor::Oracle(m) => m.n_features(),
        }
    }

    fn n_outputs(&self) -> usize {
        match self {
            Predictor::Learned(m) => m.n_outputs(),
            Predictor::Oracle(m) => m.n_outputs(),
        }
    }

    fn predict_row(&self, row: &[f64]) -> hydrotwin_core::Result<Vec<f64>> {
        match self {
            Predictor::Learned(m) => m.predict_row(row),
            Predictor::Oracle(m) => m.predict_row(row),
        }
    }
}

/// Exact schedule for a problem given as JSON.
#[pyfunction]
#[pyo3(signature = (problem_json, max_decision_vars=None))]
fn solve_schedule<'py>(py: Python<'py>, problem_json: &str, max_decision_vars: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let problem: ScheduleProblem =
        serde_json::from_str(problem_json).map_err(|e| HydrotwinError::new_err(format!("problem: {e}")))?;
    let mut options = SolverOptions::default();
    if let Some(n) = max_decision_vars {
        options.max_decision_vars = n;
    }
    let sol = py.detach(|| schedule::solve_exact(&problem, &options)).map_err(err)?;
    to_py(py, &sol)
}

/// Exhaustive enumeration, for small problems.
#[pyfunction]
fn brute_force<'py>(py: Python<'py>, problem_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let problem: ScheduleProblem =
        serde_json::from_str(problem_json).map_err(|e| HydrotwinError::new_err(format!("problem: {e}")))?;
    let sol = py.detach(|| schedule::brute_force(&problem)).map_err(err)?;
    to_py(py, &sol)
}

/// Cheapest grid point meeting the quality threshold. Without a model the
/// synthetic ground truth is used.
#[pyfunction]
#[pyo3(signature = (model=None, q_min=0.9, margin=0.0, grid_json=None))]
fn select_operating_point<'py>(
    py: Python<'py>,
    model: Option<PyRef<'py, Model>>,
    q_min: f64,
    margin: f64,
    grid_json: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let grid: ScenarioGrid = parse(grid_json, "grid")?;
    let policy = QualityPolicy { q_min, margin };
    let predictor = Predictor::from(model.as_deref());
    let sel = decision::select_operating_point(&predictor, &grid, &policy).map_err(err)?;
    to_py(py, &sel)
}

/// Recommendation for the next `horizon` steps from an inflow history in m³
/// per step, starting at `start` (RFC 3339). Reactors begin OFF and settled.
#[pyfunction]
#[pyo3(signature = (inflow_history_m3, start, level_pct, horizon, model=None, step_minutes=15, config_json=None))]
#[allow(clippy::too_many_arguments)]
fn plan<'py>(
    py: Python<'py>,
    inflow_history_m3: Vec<f64>,
    start: &str,
    level_pct: f64,
    horizon: usize,
    model: Option<PyRef<'py, Model>>,
    step_minutes: u32,
    config_json: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let config: PlanConfig = parse(config_json, "config")?;
    let start: DateTime<Utc> = start
        .parse()
        .map_err(|e| HydrotwinError::new_err(format!("start: {e}")))?;
    let history = TimeSeries::new(start, step_minutes, inflow_history_m3).map_err(err)?;
    let plant = PlantConfig::default();
    let mut state = plant.initial_state(level_pct, &[], twin::OperatingPoint::default());
    for r in &mut state.reactors {
        r.steps_in_state = u32::MAX / 2;
    }
    let inputs = PlanInputs {
        plant: &plant,
        state: &state,
        inflow_history_m3: &history,
        exog: None,
        horizon_steps: horizon,
    };
    let predictor = Predictor::from(model.as_deref());
    let rec = decision::plan(&inputs, Some(&predictor), &config).map_err(err)?;
    to_py(py, &rec)
}

/// `(records, errors)` from a historian export; records are
/// `(timestamp, tag, value)` and errors `(line, message)`.
#[pyfunction]
fn parse_historian(text: &str) -> PyResult<(Vec<(String, String, f64)>, Vec<(u64, String)>)> {
    let p = parse_historian_csv(text).map_err(err)?;
    Ok((
        p.records
            .iter()
            .map(|r| (r.timestamp.to_rfc3339(), r.tag.as_str().to_string(), r.value))
            .collect(),
        p.errors.into_iter().map(|e| (e.line, e.message)).collect(),
    ))
}

/// `(days, errors)` from a daily weather file.
#[pyfunction]
fn parse_weather(text: &str) -> PyResult<(Vec<(String, f64, f64, f64)>, Vec<(u64, String)>)> {
    let p = parse_weather_csv(text).map_err(err)?;
    Ok((
        p.records
            .iter()
            .map(|w| (w.date.to_string(), w.rainfall_mm, w.temp_max_c, w.temp_min_c))
            .collect(),
        p.errors.into_iter().map(|e| (e.line, e.message)).collect(),
    ))
}

#[pyfunction]
#[pyo3(signature = (values, period, horizon, step_minutes=15))]
fn forecast_seasonal_naive(values: Vec<f64>, period: usize, horizon: usize, step_minutes: u32) -> PyResult<Vec<f64>> {
    let start = DateTime::<Utc>::UNIX_EPOCH;
    let series = TimeSeries::new(start, step_minutes, values).map_err(err)?;
    Ok(seasonal_naive(&series, period, horizon).map_err(err)?.values)
}

#[pymodule]
fn pyhydrotwin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HydrotwinError", m.py().get_type::<HydrotwinError>())?;
    m.add_class::<OperatingPoint>()?;
    m.add_class::<Twin>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(solve_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(select_operating_point, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(parse_historian, m)?)?;
    m.add_function(wrap_pyfunction!(parse_weather, m)?)?;
    m.add_function(wrap_pyfunction!(forecast_seasonal_naive, m)?)?;
    Ok(())
}
