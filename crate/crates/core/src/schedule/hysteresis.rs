use serde::{Deserialize, Serialize};

use super::{Schedule, ScheduleProblem};

/// Deadband rule standing in for manual operation: start reactors when the
/// projected level rises above `on_above_pct`, stop them when it falls
/// below `off_below_pct`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisPolicy {
    pub on_above_pct: f64,
    pub off_below_pct: f64,
}

impl HysteresisPolicy {
    /// Symmetric deadband of `half_width` around `target`.
    pub fn around(target: f64, half_width: f64) -> Self {
        Self {
            on_above_pct: target + half_width,
            off_below_pct: target - half_width,
        }
    }
}

/// Simulate the deadband rule forward over the problem's inflows.
///
/// At each step the projected level is the current level plus this step's
/// inflow minus the throughput of the reactors currently running. Reactors
/// are switched one at a time in id order until the projection is back
/// inside the band or no eligible reactor remains.
pub fn hysteresis_baseline(problem: &ScheduleProblem, policy: &HysteresisPolicy) -> Schedule {
    let n = problem.n_reactors();
    let mut status = problem.initial_status.clone();
    let mut runs: Vec<u32> = (0..n).map(|r| problem.initial_run(r)).collect();
    let mut schedule = Schedule::all_off(n, problem.horizon());
    let mut level = problem.initial_level_pct;

    let throughput = |status: &[bool]| -> f64 {
        problem
            .reactors
            .iter()
            .zip(status)
            .filter(|(_, on)| **on)
            .map(|(s, _)| s.rate_pct_per_step)
            .sum()
    };

    for (t, &inflow) in problem.inflow_forecast_pct.iter().enumerate() {
        let previous = status.clone();
        let mut projected = level + inflow - throughput(&status);
        if projected > policy.on_above_pct {
            for (r, spec) in problem.reactors.iter().enumerate() {
                if projected <= policy.on_above_pct {
                    break;
                }
                if !status[r] && runs[r] >= spec.min_down_steps {
                    status[r] = true;
                    projected -= spec.rate_pct_per_step;
                }
            }
        } else if projected < policy.off_below_pct {
            for (r, spec) in problem.reactors.iter().enumerate() {
                if projected >= policy.off_below_pct {
                    break;
                }
                if status[r] && runs[r] >= spec.min_up_steps {
                    status[r] = false;
                    projected += spec.rate_pct_per_step;
                }
            }
        }
        for r in 0..n {
            runs[r] = if status[r] == previous[r] { runs[r].saturating_add(1) } else { 1 };
            schedule.x[r][t] = status[r];
        }
        level = projected;
    }
    schedule
}
