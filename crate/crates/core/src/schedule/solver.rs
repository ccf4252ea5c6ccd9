//! Exact dynamic program over reactor states.
//!
//! A partial schedule is summarised by the status of every reactor, the
//! length of its current run (capped at the longest min-up/min-down it can
//! be asked to satisfy) and the number of ON steps per distinct throughput
//! rate. Two partial schedules with the same summary have identical level
//! trajectories and identical feasible futures, so only the cheaper one
//! (or, on a cost tie, the lexicographically smaller one) is kept. Because
//! the future is shared, comparing two such prefixes row-major gives the
//! same answer as comparing their completions, which keeps the tie-break
//! identical to exhaustive enumeration.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::brute::masks_to_schedule;
use super::{costs_tied, objective_value, ScheduleProblem, ScheduleSolution};
use crate::error::{Error, Result};

/// Largest reactor count the solver enumerates per step (`2^R` decisions).
const MAX_REACTORS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Upper bound on `R * T` accepted by [`solve_exact`].
    pub max_decision_vars: usize,
    /// Optional cap on the number of state expansions. When the search
    /// would exceed it, each remaining layer is trimmed to its cheapest
    /// states and the result is flagged as not proven optimal.
    pub node_budget: Option<u64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_decision_vars: 96,
            node_budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    parent: u32,
    mask: u32,
    deviation: f64,
    switches: u64,
}

/// `[status mask, run_0..run_{n-1}, count_0..count_{g-1}]`, zero padded.
type Key = [u32; 1 + 2 * MAX_REACTORS];

struct Layer {
    keys: Vec<Key>,
    nodes: Vec<Node>,
}

struct Ctx<'a> {
    problem: &'a ScheduleProblem,
    n: usize,
    layers: Vec<Layer>,
}

impl Ctx<'_> {
    fn cost(&self, node: &Node) -> f64 {
        node.deviation + self.problem.omega * node.switches as f64
    }

    /// Decision masks for steps `0..t` leading to node `idx` in layer `t`.
    fn prefix(&self, t: usize, idx: usize) -> Vec<u32> {
        let mut masks = vec![0; t];
        let mut idx = idx;
        for step in (1..=t).rev() {
            let node = &self.layers[step].nodes[idx];
            masks[step - 1] = node.mask;
            idx = node.parent as usize;
        }
        masks
    }

    /// Row-major comparison of the paths ending at nodes `a` and `b` of
    /// layer `t`, each extended by the masks already in `tail_a`/`tail_b`
    /// (latest first). Only the steps after the last common ancestor are
    /// visited.
    fn path_less(&self, t: usize, mut a: usize, mut b: usize, mut tail_a: Vec<u32>, mut tail_b: Vec<u32>) -> bool {
        let mut step = t;
        while a != b {
            let (na, nb) = (&self.layers[step].nodes[a], &self.layers[step].nodes[b]);
            tail_a.push(na.mask);
            tail_b.push(nb.mask);
            a = na.parent as usize;
            b = nb.parent as usize;
            step -= 1;
        }
        tail_a.reverse();
        tail_b.reverse();
        super::brute::lex_less(&tail_a, &tail_b, self.n)
    }
}

/// Solve the scheduling problem to proven optimality (unless a node budget
/// cuts the search short). Ties are broken towards the lexicographically
/// smallest schedule, matching [`super::brute_force`].
pub fn solve_exact(problem: &ScheduleProblem, options: &SolverOptions) -> Result<ScheduleSolution> {
    problem.validate()?;
    let n = problem.n_reactors();
    let horizon = problem.horizon();
    if n * horizon > options.max_decision_vars {
        return Err(Error::SizeGuard(format!(
            "{} decision variables exceed the configured maximum of {}",
            n * horizon,
            options.max_decision_vars
        )));
    }
    if n > MAX_REACTORS {
        return Err(Error::SizeGuard(format!("at most {MAX_REACTORS} reactors supported")));
    }

    // Reactors with bit-identical rates share an ON counter.
    let mut group_rates: Vec<f64> = Vec::new();
    let mut group_of = Vec::with_capacity(n);
    for spec in &problem.reactors {
        let g = match group_rates
            .iter()
            .position(|r| r.to_bits() == spec.rate_pct_per_step.to_bits())
        {
            Some(g) => g,
            None => {
                group_rates.push(spec.rate_pct_per_step);
                group_rates.len() - 1
            }
        };
        group_of.push(g);
    }
    let caps: Vec<u32> = problem
        .reactors
        .iter()
        .map(|s| s.min_up_steps.max(s.min_down_steps).max(1))
        .collect();

    let mut cumulative_inflow = Vec::with_capacity(horizon + 1);
    let mut acc = 0.0;
    cumulative_inflow.push(acc);
    for inflow in &problem.inflow_forecast_pct {
        acc += inflow;
        cumulative_inflow.push(acc);
    }

    // key layout: [status mask, run_0..run_{n-1}, count_0..count_{g-1}]
    let initial_mask = problem
        .initial_status
        .iter()
        .enumerate()
        .fold(0u32, |m, (r, &on)| m | (u32::from(on) << r));
    let mut root_key: Key = [0; 1 + 2 * MAX_REACTORS];
    root_key[0] = initial_mask;
    for r in 0..n {
        root_key[1 + r] = problem.initial_run(r).min(caps[r]);
    }

    let mut ctx = Ctx {
        problem,
        n,
        layers: vec![Layer {
            keys: vec![root_key],
            nodes: vec![Node {
                parent: 0,
                mask: initial_mask,
                deviation: (problem.initial_level_pct - problem.target_level_pct).abs(),
                switches: 0,
            }],
        }],
    };

    // Any state whose cost plus an optimistic completion exceeds a known
    // feasible objective can neither be optimal nor tie with the optimum.
    let max_drain: f64 = problem.reactors.iter().map(|s| s.rate_pct_per_step).sum();
    let upper = greedy_upper_bound(problem).map(|ub| ub + 2e-9 * ub.abs().max(1.0));
    let future_bound = |level: f64, from: usize| -> f64 {
        (from + 1..=horizon)
            .map(|s| {
                let hi = level + cumulative_inflow[s] - cumulative_inflow[from];
                let lo = hi - max_drain * (s - from) as f64;
                if problem.target_level_pct > hi {
                    problem.target_level_pct - hi
                } else if problem.target_level_pct < lo {
                    lo - problem.target_level_pct
                } else {
                    0.0
                }
            })
            .sum()
    };

    let n_masks = 1u64 << n;
    let mut explored = 0u64;
    let mut trimmed = false;

    for t in 0..horizon {
        if let Some(budget) = options.node_budget {
            let layer_len = ctx.layers[t].nodes.len() as u64;
            let steps_left = (horizon - t) as u64;
            let remaining = budget.saturating_sub(explored);
            if layer_len * n_masks * steps_left > remaining {
                let beam = (remaining / (n_masks * steps_left)).max(1) as usize;
                if beam < ctx.layers[t].nodes.len() {
                    trim_layer(&mut ctx, t, beam);
                    trimmed = true;
                }
            }
        }

        let mut next = Layer {
            keys: Vec::new(),
            nodes: Vec::new(),
        };
        let mut index: HashMap<Key, usize> = HashMap::new();
        let n_groups = group_rates.len();
        for parent in 0..ctx.layers[t].nodes.len() {
            let key = ctx.layers[t].keys[parent];
            let node = ctx.layers[t].nodes[parent];
            let status = key[0];
            'masks: for mask in 0..(1u32 << n) {
                explored += 1;
                let mut new_key: Key = [0; 1 + 2 * MAX_REACTORS];
                new_key[0] = mask;
                let mut switches = 0u64;
                for (r, spec) in problem.reactors.iter().enumerate() {
                    let on = mask >> r & 1 == 1;
                    let was_on = status >> r & 1 == 1;
                    let run = key[1 + r];
                    if on != was_on {
                        let required = if was_on { spec.min_up_steps } else { spec.min_down_steps };
                        if run < required {
                            continue 'masks;
                        }
                        switches += 1;
                        new_key[1 + r] = 1;
                    } else {
                        new_key[1 + r] = (run + 1).min(caps[r]);
                    }
                }
                let counts = &mut new_key[1 + n..1 + n + n_groups];
                counts.copy_from_slice(&key[1 + n..1 + n + n_groups]);
                for (r, &g) in group_of.iter().enumerate() {
                    if mask >> r & 1 == 1 {
                        counts[g] += 1;
                    }
                }
                let drained: f64 = group_rates
                    .iter()
                    .zip(counts.iter())
                    .map(|(rate, &count)| rate * f64::from(count))
                    .sum();
                let level = problem.initial_level_pct + cumulative_inflow[t + 1] - drained;
                if let Some(b) = problem.level_bounds {
                    if level < b.lo || level > b.hi {
                        continue;
                    }
                }
                let candidate = Node {
                    parent: parent as u32,
                    mask,
                    deviation: node.deviation + (level - problem.target_level_pct).abs(),
                    switches: node.switches + switches,
                };
                if let Some(ub) = upper {
                    if ctx.cost(&candidate) + future_bound(level, t + 1) > ub {
                        continue;
                    }
                }
                match index.get(&new_key) {
                    None => {
                        index.insert(new_key, next.nodes.len());
                        next.keys.push(new_key);
                        next.nodes.push(candidate);
                    }
                    Some(&slot) => {
                        let incumbent = next.nodes[slot];
                        let (c_new, c_old) = (ctx.cost(&candidate), ctx.cost(&incumbent));
                        let replace = if costs_tied(c_new, c_old) {
                            ctx.path_less(t, parent, incumbent.parent as usize, vec![mask], vec![incumbent.mask])
                        } else {
                            c_new < c_old
                        };
                        if replace {
                            next.nodes[slot] = candidate;
                        }
                    }
                }
            }
        }
        if next.nodes.is_empty() {
            return Err(Error::Infeasible(format!(
                "no schedule satisfies the hard constraints beyond step {t}"
            )));
        }
        ctx.layers.push(next);
    }

    let last = &ctx.layers[horizon];
    let mut best = 0usize;
    for idx in 1..last.nodes.len() {
        let (c_new, c_old) = (ctx.cost(&last.nodes[idx]), ctx.cost(&last.nodes[best]));
        let better = if costs_tied(c_new, c_old) {
            ctx.path_less(horizon, idx, best, Vec::new(), Vec::new())
        } else {
            c_new < c_old
        };
        if better {
            best = idx;
        }
    }
    let schedule = masks_to_schedule(&ctx.prefix(horizon, best), n);
    let mut solution = objective_value(problem, &schedule)?;
    solution.optimal = !trimmed;
    solution.nodes_explored = explored;
    Ok(solution)
}

/// Objective of the myopic schedule that minimises each step's own cost,
/// or `None` when that rule runs into the hard constraints.
fn greedy_upper_bound(problem: &ScheduleProblem) -> Option<f64> {
    let n = problem.n_reactors();
    let mut status = problem
        .initial_status
        .iter()
        .enumerate()
        .fold(0u32, |m, (r, &on)| m | (u32::from(on) << r));
    let mut runs: Vec<u32> = (0..n).map(|r| problem.initial_run(r)).collect();
    let mut level = problem.initial_level_pct;
    let mut masks = Vec::with_capacity(problem.horizon());
    for &inflow in &problem.inflow_forecast_pct {
        let mut best: Option<(f64, u32, f64)> = None;
        'masks: for mask in 0..(1u32 << n) {
            let mut switches = 0u32;
            let mut drained = 0.0;
            for (r, spec) in problem.reactors.iter().enumerate() {
                let (on, was_on) = (mask >> r & 1 == 1, status >> r & 1 == 1);
                if on != was_on {
                    let required = if was_on { spec.min_up_steps } else { spec.min_down_steps };
                    if runs[r] < required {
                        continue 'masks;
                    }
                    switches += 1;
                }
                if on {
                    drained += spec.rate_pct_per_step;
                }
            }
            let next = level + inflow - drained;
            if problem.level_bounds.is_some_and(|b| next < b.lo || next > b.hi) {
                continue;
            }
            let cost = (next - problem.target_level_pct).abs() + problem.omega * f64::from(switches);
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, mask, next));
            }
        }
        let (_, mask, next) = best?;
        for (r, run) in runs.iter_mut().enumerate() {
            *run = if (mask ^ status) >> r & 1 == 1 { 1 } else { run.saturating_add(1) };
        }
        status = mask;
        level = next;
        masks.push(mask);
    }
    objective_value(problem, &masks_to_schedule(&masks, n))
        .ok()
        .map(|s| s.objective)
}

/// Keep the `beam` cheapest states of layer `t`. Runs before layer `t` is
/// expanded, so no child indices need rewriting.
fn trim_layer(ctx: &mut Ctx<'_>, t: usize, beam: usize) {
    let layer = &ctx.layers[t];
    let mut order: Vec<usize> = (0..layer.nodes.len()).collect();
    order.sort_by(|&a, &b| {
        ctx.cost(&layer.nodes[a])
            .total_cmp(&ctx.cost(&layer.nodes[b]))
            .then(a.cmp(&b))
    });
    order.truncate(beam);
    order.sort_unstable();
    let keys = order.iter().map(|&i| layer.keys[i]).collect();
    let nodes = order.iter().map(|&i| layer.nodes[i]).collect();
    ctx.layers[t] = Layer { keys, nodes };
}
