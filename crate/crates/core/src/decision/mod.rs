//! Scenario enumeration, quality-constrained selection, recommendation
//! assembly and the closed-loop comparison against a deadband baseline.

mod closed_loop;
mod plan;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use closed_loop::{
    evaluate_closed_loop, perfect_foresight_check, settled_state, ClosedLoopConfig, ClosedLoopReport, DominanceCheck,
    EpisodeMetrics, PolicyKind, PolicyReport, PolicySpec,
};
pub use plan::{hash_inputs, plan, PlanConfig, PlanInputs, Recommendation, RecommendationFlags, StepPlan};

use crate::error::{Error, Result};
use crate::learner::Regressor;
use crate::twin::{true_energy, true_quality, GroundTruthParams, OperatingPoint};

/// Inclusive lattice `{min, min + step, ..., <= max}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisRange {
    pub const fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(Error::NonFinite(format!("{name} axis")));
        }
        if self.min > self.max {
            return Err(Error::Config(format!("{name} axis has min > max")));
        }
        if self.step <= 0.0 {
            return Err(Error::Config(format!("{name} axis step must be positive")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lattice values, rounded to 1e-9 so that e.g. 0.12 + 8 * 0.01 is 0.2.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioGrid {
    pub temp_setpoint_c: AxisRange,
    pub dry_solids_frac: AxisRange,
    pub cycle_minutes: AxisRange,
    pub max_points: usize,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        Self {
            temp_setpoint_c: AxisRange::new(150.0, 180.0, 2.0),
            dry_solids_frac: AxisRange::new(0.12, 0.20, 0.01),
            cycle_minutes: AxisRange::new(20.0, 40.0, 5.0),
            max_points: 10_000,
        }
    }
}

impl ScenarioGrid {
    pub fn validate(&self) -> Result<()> {
        self.temp_setpoint_c.validate("temperature")?;
        self.dry_solids_frac.validate("dry solids")?;
        self.cycle_minutes.validate("cycle")?;
        Ok(())
    }

    /// Grid size, saturating on overflow.
    pub fn cardinality(&self) -> usize {
        self.temp_setpoint_c
            .len()
            .saturating_mul(self.dry_solids_frac.len())
            .saturating_mul(self.cycle_minutes.len())
    }

    /// A grid holding only `op`.
    pub fn single(op: &OperatingPoint) -> Self {
        Self {
            temp_setpoint_c: AxisRange::new(op.temp_setpoint_c, op.temp_setpoint_c, 1.0),
            dry_solids_frac: AxisRange::new(op.dry_solids_frac, op.dry_solids_frac, 1.0),
            cycle_minutes: AxisRange::new(op.cycle_minutes, op.cycle_minutes, 1.0),
            max_points: 1,
        }
    }
}

/// Cartesian product of the axis lattices in (temperature, dry solids,
/// cycle) lexicographic order.
pub fn enumerate_scenarios(grid: &ScenarioGrid) -> Result<Vec<OperatingPoint>> {
    grid.validate()?;
    let n = grid.cardinality();
    if n > grid.max_points {
        return Err(Error::SizeGuard(format!("scenario grid has {n} points, cap is {}", grid.max_points)));
    }
    let (temps, solids, cycles) = (
        grid.temp_setpoint_c.values(),
        grid.dry_solids_frac.values(),
        grid.cycle_minutes.values(),
    );
    let mut out = Vec::with_capacity(n);
    for &t in &temps {
        for &d in &solids {
            for &c in &cycles {
                out.push(OperatingPoint {
                    temp_setpoint_c: t,
                    dry_solids_frac: d,
                    cycle_minutes: c,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityPolicy {
    pub q_min: f64,
    pub margin: f64,
}

impl Default for QualityPolicy {
    fn default() -> Self {
        Self { q_min: 0.9, margin: 0.0 }
    }
}

impl QualityPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_min > 0.0 && self.q_min < 1.0) {
            return Err(Error::Config(format!("q_min must lie in (0, 1), got {}", self.q_min)));
        }
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return Err(Error::Config(format!("margin must be non-negative, got {}", self.margin)));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.q_min + self.margin
    }

    pub fn is_feasible(&self, quality: f64) -> bool {
        quality >= self.threshold()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScenario {
    pub op_point: OperatingPoint,
    pub predicted_energy: f64,
    pub predicted_quality: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: CandidateScenario,
    /// Set when no candidate met the quality threshold.
    pub quality_risk: bool,
    /// Feasible candidates by energy, then infeasible ones by quality.
    pub ranked: Vec<CandidateScenario>,
}

/// The synthetic ground truth as a noiseless `(energy, quality)` predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthOracle {
    pub params: GroundTruthParams,
}

impl Regressor for GroundTruthOracle {
    fn n_features(&self) -> usize {
        3
    }

    fn n_outputs(&self) -> usize {
        2
    }

    fn predict_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let op = OperatingPoint::from_features(row)?;
        Ok(vec![true_energy(&op, &self.params)?, true_quality(&op, &self.params)?])
    }
}

fn tie_break(a: &OperatingPoint, b: &OperatingPoint) -> Ordering {
    a.temp_setpoint_c
        .total_cmp(&b.temp_setpoint_c)
        .then(a.cycle_minutes.total_cmp(&b.cycle_minutes))
        .then(a.dry_solids_frac.total_cmp(&b.dry_solids_frac))
}

fn rank(a: &CandidateScenario, b: &CandidateScenario) -> Ordering {
    match (a.feasible, b.feasible) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => a.predicted_energy.total_cmp(&b.predicted_energy),
        (false, false) => b.predicted_quality.total_cmp(&a.predicted_quality),
    }
    .then_with(|| tie_break(&a.op_point, &b.op_point))
}

/// Predict every grid point and return the cheapest quality-feasible one
/// (ties: lower temperature, then cycle, then dry solids). Without any
/// feasible point the highest predicted quality is returned instead and
/// `quality_risk` is set.
pub fn select_operating_point<M: Regressor + ?Sized>(
    model: &M,
    grid: &ScenarioGrid,
    policy: &QualityPolicy,
) -> Result<Selection> {
    policy.validate()?;
    if model.n_features() != 3 || model.n_outputs() != 2 {
        return Err(Error::Dimension(format!(
            "selection needs a 3-feature, 2-output model, got {} and {}",
            model.n_features(),
            model.n_outputs()
        )));
    }
    let points = enumerate_scenarios(grid)?;
    let mut ranked = Vec::with_capacity(points.len());
    for op in points {
        let p = model.predict_row(&op.features())?;
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::NonFinite(format!("prediction at {op:?}")));
        }
        ranked.push(CandidateScenario {
            op_point: op,
            predicted_energy: p[0],
            predicted_quality: p[1],
            feasible: policy.is_feasible(p[1]),
        });
    }
    ranked.sort_by(rank);
    let chosen = ranked[0];
    debug_assert_eq!(Some(chosen), linear_scan(&ranked), "sorted choice disagrees with a scan");
    Ok(Selection {
        quality_risk: !chosen.feasible,
        chosen,
        ranked,
    })
}

/// Independent single-pass selection used to cross-check the sort.
fn linear_scan(candidates: &[CandidateScenario]) -> Option<CandidateScenario> {
    let better = |c: &CandidateScenario, best: &CandidateScenario| {
        let key = if c.feasible { c.predicted_energy } else { -c.predicted_quality };
        let best_key = if best.feasible { best.predicted_energy } else { -best.predicted_quality };
        (c.feasible && !best.feasible)
            || (c.feasible == best.feasible
                && (key < best_key || (key == best_key && tie_break(&c.op_point, &best.op_point).is_lt())))
    };
    let mut best: Option<CandidateScenario> = None;
    for c in candidates {
        if best.as_ref().is_none_or(|b| better(c, b)) {
            best = Some(*c);
        }
    }
    best
}
