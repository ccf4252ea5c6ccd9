//! Reactor on/off scheduling.
//!
//! The objective charges the absolute deviation of the tank level from
//! its target at every step `0..=T` plus `omega` per reactor switch:
//!
//! ```text
//! sum_{t=0..T} |L_t - target| + omega * sum_{t=0..T-1} sum_r |x_{r,t} - x_{r,t-1}|
//! ```
//!
//! Levels follow the unclamped recursion
//! `L_{t+1} = L_t + inflow_t - sum_r x_{r,t} * rate_r`.

mod brute;
mod hysteresis;
mod solver;

use serde::{Deserialize, Serialize};

pub use brute::{brute_force, BRUTE_FORCE_MAX_VARS};
pub use hysteresis::{hysteresis_baseline, HysteresisPolicy};
pub use solver::{solve_exact, SolverOptions};

use crate::error::{Error, Result};
use crate::twin::{ReactorSpec, TimeGrid};

pub const DEFAULT_OMEGA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBounds {
    pub lo: f64,
    pub hi: f64,
}

/// One instance of the scheduling problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleProblem {
    pub grid: TimeGrid,
    pub reactors: Vec<ReactorSpec>,
    /// Status of each reactor just before step 0.
    pub initial_status: Vec<bool>,
    /// Steps each reactor has already spent in its initial status. `None`
    /// leaves the first switch unconstrained by min-up/min-down.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_steps_in_state: Option<Vec<u32>>,
    pub initial_level_pct: f64,
    pub target_level_pct: f64,
    pub inflow_forecast_pct: Vec<f64>,
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_bounds: Option<LevelBounds>,
}

impl ScheduleProblem {
    pub fn horizon(&self) -> usize {
        self.grid.horizon_steps
    }

    pub fn n_reactors(&self) -> usize {
        self.reactors.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let r = self.n_reactors();
        if r == 0 {
            return Err(Error::Config("problem has no reactors".into()));
        }
        for (i, spec) in self.reactors.iter().enumerate() {
            if spec.id as usize != i + 1 {
                return Err(Error::Config("reactor ids must be contiguous from 1".into()));
            }
            if !(spec.rate_pct_per_step > 0.0) || !spec.rate_pct_per_step.is_finite() {
                return Err(Error::Config(format!("reactor {} rate must be positive", spec.id)));
            }
        }
        if self.initial_status.len() != r {
            return Err(Error::Dimension(format!(
                "initial_status has {} entries for {r} reactors",
                self.initial_status.len()
            )));
        }
        if let Some(runs) = &self.initial_steps_in_state {
            if runs.len() != r {
                return Err(Error::Dimension(format!(
                    "initial_steps_in_state has {} entries for {r} reactors",
                    runs.len()
                )));
            }
        }
        if self.inflow_forecast_pct.len() != self.horizon() {
            return Err(Error::Dimension(format!(
                "inflow forecast has {} steps, horizon is {}",
                self.inflow_forecast_pct.len(),
                self.horizon()
            )));
        }
        if self.inflow_forecast_pct.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("inflow forecast".into()));
        }
        if !(0.0..=100.0).contains(&self.target_level_pct) {
            return Err(Error::Domain(format!(
                "target level {} outside [0, 100]",
                self.target_level_pct
            )));
        }
        if !self.initial_level_pct.is_finite() {
            return Err(Error::NonFinite("initial level".into()));
        }
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(Error::Domain(format!("omega must be non-negative, got {}", self.omega)));
        }
        if let Some(b) = self.level_bounds {
            if !(b.lo <= b.hi) {
                return Err(Error::Domain("level bounds require lo <= hi".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn initial_run(&self, r: usize) -> u32 {
        self.initial_steps_in_state
            .as_ref()
            .map_or(u32::MAX, |runs| runs[r])
    }
}

/// Binary decision matrix, `x[r][t]` true when reactor `r + 1` runs in step `t`.
///
/// The derived ordering is row-major lexicographic with OFF < ON, which is
/// the tie-break order used by the solvers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Schedule {
    pub x: Vec<Vec<bool>>,
}

impl Schedule {
    pub fn all_off(n_reactors: usize, horizon: usize) -> Self {
        Self {
            x: vec![vec![false; horizon]; n_reactors],
        }
    }

    pub fn constant(status: &[bool], horizon: usize) -> Self {
        Self {
            x: status.iter().map(|&s| vec![s; horizon]).collect(),
        }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        if let Some(first) = rows.first() {
            if rows.iter().any(|row| row.len() != first.len()) {
                return Err(Error::Dimension("schedule rows have unequal lengths".into()));
            }
        }
        Ok(Self { x: rows })
    }

    pub fn n_reactors(&self) -> usize {
        self.x.len()
    }

    pub fn horizon(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn get(&self, r: usize, t: usize) -> bool {
        self.x[r][t]
    }

    /// Decisions of every reactor in step `t`.
    pub fn column(&self, t: usize) -> Vec<bool> {
        self.x.iter().map(|row| row[t]).collect()
    }

    pub fn any_on(&self, t: usize) -> bool {
        self.x.iter().any(|row| row[t])
    }

    pub fn toggle(&mut self, r: usize, t: usize) -> Result<()> {
        let cell = self
            .x
            .get_mut(r)
            .and_then(|row| row.get_mut(t))
            .ok_or_else(|| Error::Dimension(format!("no cell ({r}, {t}) in schedule")))?;
        *cell = !*cell;
        Ok(())
    }

    fn check_shape(&self, problem: &ScheduleProblem) -> Result<()> {
        if self.n_reactors() != problem.n_reactors() || self.horizon() != problem.horizon() {
            return Err(Error::Dimension(format!(
                "schedule is {}x{}, problem is {}x{}",
                self.n_reactors(),
                self.horizon(),
                problem.n_reactors(),
                problem.horizon()
            )));
        }
        Ok(())
    }
}

/// Evaluated (or solved) schedule with its objective breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub schedule: Schedule,
    pub objective: f64,
    pub deviation_sum: f64,
    pub switch_count: u64,
    pub omega_used: f64,
    pub optimal: bool,
    pub nodes_explored: u64,
    /// Unclamped levels `L_0..=L_T`.
    pub levels: Vec<f64>,
}

/// Unclamped level trajectory `L_0..=L_T` under `schedule`.
pub fn level_trajectory(problem: &ScheduleProblem, schedule: &Schedule) -> Result<Vec<f64>> {
    schedule.check_shape(problem)?;
    let mut levels = Vec::with_capacity(problem.horizon() + 1);
    let mut level = problem.initial_level_pct;
    levels.push(level);
    for (t, inflow) in problem.inflow_forecast_pct.iter().enumerate() {
        let throughput: f64 = problem
            .reactors
            .iter()
            .enumerate()
            .filter(|(r, _)| schedule.get(*r, t))
            .map(|(_, spec)| spec.rate_pct_per_step)
            .sum();
        level = level + inflow - throughput;
        levels.push(level);
    }
    Ok(levels)
}

/// Evaluate the objective of a given schedule. Hard constraints are not
/// checked here; see [`check_constraints`].
pub fn objective_value(problem: &ScheduleProblem, schedule: &Schedule) -> Result<ScheduleSolution> {
    problem.validate()?;
    let levels = level_trajectory(problem, schedule)?;
    let deviation_sum: f64 = levels
        .iter()
        .map(|l| (l - problem.target_level_pct).abs())
        .sum();
    let mut switch_count = 0u64;
    for (r, row) in schedule.x.iter().enumerate() {
        let mut prev = problem.initial_status[r];
        for &on in row {
            if on != prev {
                switch_count += 1;
            }
            prev = on;
        }
    }
    Ok(ScheduleSolution {
        schedule: schedule.clone(),
        objective: deviation_sum + problem.omega * switch_count as f64,
        deviation_sum,
        switch_count,
        omega_used: problem.omega,
        optimal: false,
        nodes_explored: 0,
        levels,
    })
}

/// Hard-constraint violation found by [`check_constraints`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MinUp { reactor: u32, step: usize },
    MinDown { reactor: u32, step: usize },
    LevelBound { step: usize, level: f64 },
}

/// Check min-up/min-down and optional level bounds (on `L_1..=L_T`).
pub fn check_constraints(problem: &ScheduleProblem, schedule: &Schedule) -> Result<Vec<Violation>> {
    problem.validate()?;
    let mut violations = Vec::new();
    for (r, spec) in problem.reactors.iter().enumerate() {
        let mut prev = problem.initial_status[r];
        let mut run = problem.initial_run(r);
        for (t, &on) in schedule.x[r].iter().enumerate() {
            if on != prev {
                if prev && run < spec.min_up_steps {
                    violations.push(Violation::MinUp { reactor: spec.id, step: t });
                } else if !prev && run < spec.min_down_steps {
                    violations.push(Violation::MinDown { reactor: spec.id, step: t });
                }
                run = 1;
            } else {
                run = run.saturating_add(1);
            }
            prev = on;
        }
    }
    if let Some(bounds) = problem.level_bounds {
        let levels = level_trajectory(problem, schedule)?;
        for (t, &level) in levels.iter().enumerate().skip(1) {
            if level < bounds.lo || level > bounds.hi {
                violations.push(Violation::LevelBound { step: t, level });
            }
        }
    }
    Ok(violations)
}

/// Costs within this relative tolerance are treated as tied and resolved
/// by the lexicographic schedule order.
pub(crate) fn costs_tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use chrono::{TimeZone, Utc};

    pub fn reactor(id: u32, rate: f64) -> ReactorSpec {
        ReactorSpec {
            id,
            rate_pct_per_step: rate,
            min_up_steps: 0,
            min_down_steps: 0,
        }
    }

    pub fn problem(rates: &[f64], inflows: Vec<f64>, l0: f64, target: f64, omega: f64) -> ScheduleProblem {
        ScheduleProblem {
            grid: TimeGrid {
                start: Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap(),
                step_minutes: 15,
                horizon_steps: inflows.len(),
            },
            reactors: rates
                .iter()
                .enumerate()
                .map(|(i, &rate)| reactor(i as u32 + 1, rate))
                .collect(),
            initial_status: vec![false; rates.len()],
            initial_steps_in_state: None,
            initial_level_pct: l0,
            target_level_pct: target,
            inflow_forecast_pct: inflows,
            omega,
            level_bounds: None,
        }
    }

    /// The two-step single-reactor instance used throughout the tests.
    pub fn two_step(omega: f64) -> ScheduleProblem {
        problem(&[10.0], vec![4.0, 4.0], 60.0, 60.0, omega)
    }
}
