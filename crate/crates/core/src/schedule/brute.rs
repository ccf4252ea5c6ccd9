use super::{costs_tied, objective_value, ScheduleProblem, ScheduleSolution, Schedule};
use crate::error::{Error, Result};

/// Largest `R * T` accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX_VARS: usize = 24;

type RunLengths = [u32; BRUTE_FORCE_MAX_VARS];

struct Search<'a> {
    problem: &'a ScheduleProblem,
    n: usize,
    horizon: usize,
    // decisions[t] = bitmask over reactors
    decisions: Vec<u32>,
    best: Option<(f64, Vec<u32>)>,
    evaluated: u64,
}

/// Exhaustive enumeration of all `2^(R*T)` schedules. Prefixes that break a
/// hard constraint are cut as soon as the violation appears; every
/// complete schedule that survives is scored.
pub fn brute_force(problem: &ScheduleProblem) -> Result<ScheduleSolution> {
    problem.validate()?;
    let n = problem.n_reactors();
    let horizon = problem.horizon();
    if n * horizon > BRUTE_FORCE_MAX_VARS {
        return Err(Error::SizeGuard(format!(
            "brute force limited to {BRUTE_FORCE_MAX_VARS} decision variables, got {}",
            n * horizon
        )));
    }
    let mut search = Search {
        problem,
        n,
        horizon,
        decisions: vec![0; horizon],
        best: None,
        evaluated: 0,
    };
    let status = problem
        .initial_status
        .iter()
        .enumerate()
        .fold(0u32, |acc, (r, &on)| acc | (u32::from(on) << r));
    let mut runs: RunLengths = [0; BRUTE_FORCE_MAX_VARS];
    for (r, run) in runs.iter_mut().enumerate().take(n) {
        *run = problem.initial_run(r);
    }
    let z0 = (problem.initial_level_pct - problem.target_level_pct).abs();
    search.descend(0, problem.initial_level_pct, z0, 0, status, &runs);

    let (_, masks) = search
        .best
        .ok_or_else(|| Error::Infeasible("no schedule satisfies the hard constraints".into()))?;
    let schedule = masks_to_schedule(&masks, n);
    let mut solution = objective_value(problem, &schedule)?;
    solution.optimal = true;
    solution.nodes_explored = search.evaluated;
    Ok(solution)
}

impl Search<'_> {
    fn descend(&mut self, t: usize, level: f64, deviation: f64, switches: u64, status: u32, runs: &RunLengths) {
        if t == self.horizon {
            self.evaluated += 1;
            let cost = deviation + self.problem.omega * switches as f64;
            let better = match &self.best {
                None => true,
                Some((best_cost, best_masks)) => {
                    if costs_tied(cost, *best_cost) {
                        lex_less(&self.decisions, best_masks, self.n)
                    } else {
                        cost < *best_cost
                    }
                }
            };
            if better {
                self.best = Some((cost, self.decisions.clone()));
            }
            return;
        }
        let inflow = self.problem.inflow_forecast_pct[t];
        'masks: for mask in 0..(1u32 << self.n) {
            let mut next_runs = *runs;
            let mut throughput = 0.0;
            let mut step_switches = 0;
            for (r, spec) in self.problem.reactors.iter().enumerate() {
                let on = mask >> r & 1 == 1;
                let was_on = status >> r & 1 == 1;
                if on != was_on {
                    let required = if was_on { spec.min_up_steps } else { spec.min_down_steps };
                    if runs[r] < required {
                        continue 'masks;
                    }
                    step_switches += 1;
                    next_runs[r] = 1;
                } else {
                    next_runs[r] = runs[r].saturating_add(1);
                }
                if on {
                    throughput += spec.rate_pct_per_step;
                }
            }
            let next_level = level + inflow - throughput;
            if let Some(b) = self.problem.level_bounds {
                if next_level < b.lo || next_level > b.hi {
                    continue;
                }
            }
            self.decisions[t] = mask;
            let dev = deviation + (next_level - self.problem.target_level_pct).abs();
            self.descend(t + 1, next_level, dev, switches + step_switches, mask, &next_runs);
        }
    }
}

/// Row-major lexicographic comparison of two decision sequences.
pub(super) fn lex_less(a: &[u32], b: &[u32], n_reactors: usize) -> bool {
    for r in 0..n_reactors {
        for (x, y) in a.iter().zip(b) {
            let (bx, by) = (x >> r & 1, y >> r & 1);
            if bx != by {
                return bx < by;
            }
        }
    }
    false
}

pub(super) fn masks_to_schedule(masks: &[u32], n_reactors: usize) -> Schedule {
    Schedule {
        x: (0..n_reactors)
            .map(|r| masks.iter().map(|m| m >> r & 1 == 1).collect())
            .collect(),
    }
}
