//! Plant digital twin.
//!
//! The storage tank level is tracked in percent of capacity. Each running
//! reactor drains a fixed percentage of capacity per step. Energy and
//! biosolid quality come from a smooth synthetic ground truth with one
//! bilinear interaction term.

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::Schedule;

pub const TEMP_BOUNDS_C: (f64, f64) = (150.0, 180.0);
pub const DRY_SOLIDS_BOUNDS: (f64, f64) = (0.12, 0.20);
pub const CYCLE_BOUNDS_MIN: (f64, f64) = (20.0, 40.0);

/// Planning grid: the horizon `horizon_steps` starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: DateTime<Utc>,
    pub step_minutes: u32,
    pub horizon_steps: usize,
}

impl TimeGrid {
    pub fn new(start: DateTime<Utc>, step_minutes: u32, horizon_steps: usize) -> Result<Self> {
        let grid = Self {
            start,
            step_minutes,
            horizon_steps,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_minutes < 1 {
            return Err(Error::Config("step_minutes must be at least 1".into()));
        }
        if self.horizon_steps < 1 {
            return Err(Error::Config("horizon_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn step_duration(&self) -> Duration {
        Duration::minutes(i64::from(self.step_minutes))
    }

    /// Start instant of step `t`.
    pub fn time_at(&self, t: usize) -> DateTime<Utc> {
        self.start + self.step_duration() * t as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankState {
    pub level_pct: f64,
    pub capacity_m3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactorSpec {
    pub id: u32,
    pub rate_pct_per_step: f64,
    pub min_up_steps: u32,
    pub min_down_steps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactorStatus {
    pub running: bool,
    pub steps_in_state: u32,
}

/// Continuous reactor parameters chosen per active step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub temp_setpoint_c: f64,
    pub dry_solids_frac: f64,
    pub cycle_minutes: f64,
}

impl OperatingPoint {
    pub fn new(temp_setpoint_c: f64, dry_solids_frac: f64, cycle_minutes: f64) -> Result<Self> {
        let op = Self {
            temp_setpoint_c,
            dry_solids_frac,
            cycle_minutes,
        };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        check_bounds("temp_setpoint_c", self.temp_setpoint_c, TEMP_BOUNDS_C)?;
        check_bounds("dry_solids_frac", self.dry_solids_frac, DRY_SOLIDS_BOUNDS)?;
        check_bounds("cycle_minutes", self.cycle_minutes, CYCLE_BOUNDS_MIN)
    }

    /// Feature vector in (temperature, dry solids, cycle) order.
    pub fn features(&self) -> [f64; 3] {
        [self.temp_setpoint_c, self.dry_solids_frac, self.cycle_minutes]
    }

    pub fn from_features(row: &[f64]) -> Result<Self> {
        if row.len() != 3 {
            return Err(Error::Dimension(format!(
                "operating point needs 3 features, got {}",
                row.len()
            )));
        }
        Self::new(row[0], row[1], row[2])
    }
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self {
            temp_setpoint_c: 165.0,
            dry_solids_frac: 0.16,
            cycle_minutes: 30.0,
        }
    }
}

fn check_bounds(name: &str, value: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if !value.is_finite() || value < lo || value > hi {
        return Err(Error::Domain(format!("{name}={value} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// Static plant configuration: tank capacity and reactor train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub capacity_m3: f64,
    pub reactors: Vec<ReactorSpec>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            capacity_m3: 500.0,
            reactors: (1..=3)
                .map(|id| ReactorSpec {
                    id,
                    rate_pct_per_step: 4.0,
                    min_up_steps: 2,
                    min_down_steps: 2,
                })
                .collect(),
        }
    }
}

impl PlantConfig {
    pub fn n_reactors(&self) -> usize {
        self.reactors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_m3 > 0.0) {
            return Err(Error::Config("capacity_m3 must be positive".into()));
        }
        if self.reactors.is_empty() {
            return Err(Error::Config("at least one reactor is required".into()));
        }
        for (i, r) in self.reactors.iter().enumerate() {
            if r.id as usize != i + 1 {
                return Err(Error::Config(format!(
                    "reactor ids must be contiguous from 1, found {} at position {}",
                    r.id,
                    i + 1
                )));
            }
            if !(r.rate_pct_per_step > 0.0) || !r.rate_pct_per_step.is_finite() {
                return Err(Error::Config(format!("reactor {} rate must be positive", r.id)));
            }
        }
        Ok(())
    }

    /// Throughput in percent of capacity drained by `decisions` in one step.
    pub fn throughput_pct(&self, decisions: &[bool]) -> f64 {
        self.reactors
            .iter()
            .zip(decisions)
            .filter(|(_, on)| **on)
            .map(|(r, _)| r.rate_pct_per_step)
            .sum()
    }

    pub fn initial_state(&self, level_pct: f64, running: &[bool], op_point: OperatingPoint) -> PlantState {
        PlantState {
            t_index: 0,
            tank: TankState {
                level_pct,
                capacity_m3: self.capacity_m3,
            },
            reactors: (0..self.n_reactors())
                .map(|i| ReactorStatus {
                    running: running.get(i).copied().unwrap_or(false),
                    steps_in_state: 0,
                })
                .collect(),
            op_point,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub t_index: u64,
    pub tank: TankState,
    pub reactors: Vec<ReactorStatus>,
    pub op_point: OperatingPoint,
}

impl PlantState {
    pub fn running(&self) -> Vec<bool> {
        self.reactors.iter().map(|r| r.running).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub next_state: PlantState,
    pub overflow: bool,
    pub underflow: bool,
}

/// Coefficients of the synthetic energy and quality surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundTruthParams {
    pub e0: f64,
    pub a_temp: f64,
    pub a_cycle: f64,
    pub a_dry_solids: f64,
    pub a_interaction: f64,
    pub b_temp: f64,
    pub b_cycle: f64,
    pub noise_sigma_energy: f64,
    pub noise_sigma_quality: f64,
    pub seed: u64,
}

impl Default for GroundTruthParams {
    fn default() -> Self {
        Self {
            e0: 35.0,
            a_temp: 0.9,
            a_cycle: 0.2,
            a_dry_solids: -150.0,
            a_interaction: 4.0,
            b_temp: 0.25,
            b_cycle: 0.1,
            noise_sigma_energy: 0.0,
            noise_sigma_quality: 0.0,
            seed: 0,
        }
    }
}

impl GroundTruthParams {
    pub fn noiseless(&self) -> Self {
        Self {
            noise_sigma_energy: 0.0,
            noise_sigma_quality: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma_energy < 0.0 || self.noise_sigma_quality < 0.0 {
            return Err(Error::Config("noise sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

/// Advance the twin by one step.
pub fn step_dynamics(
    plant: &PlantConfig,
    state: &PlantState,
    inflow_pct: f64,
    decisions: &[bool],
) -> Result<StepResult> {
    if decisions.len() != plant.n_reactors() || state.reactors.len() != plant.n_reactors() {
        return Err(Error::Dimension(format!(
            "expected {} reactor decisions, got {}",
            plant.n_reactors(),
            decisions.len()
        )));
    }
    if !(inflow_pct >= 0.0) {
        return Err(Error::Domain(format!("inflow must be non-negative, got {inflow_pct}")));
    }
    let raw = state.tank.level_pct + inflow_pct - plant.throughput_pct(decisions);
    let reactors = state
        .reactors
        .iter()
        .zip(decisions)
        .map(|(status, &on)| {
            if status.running == on {
                ReactorStatus {
                    running: on,
                    steps_in_state: status.steps_in_state.saturating_add(1),
                }
            } else {
                ReactorStatus {
                    running: on,
                    steps_in_state: 1,
                }
            }
        })
        .collect();
    Ok(StepResult {
        next_state: PlantState {
            t_index: state.t_index + 1,
            tank: TankState {
                level_pct: raw.clamp(0.0, 100.0),
                capacity_m3: state.tank.capacity_m3,
            },
            reactors,
            op_point: state.op_point,
        },
        overflow: raw > 100.0,
        underflow: raw < 0.0,
    })
}

/// Specific energy (kWh/m³) of the synthetic plant at `op`.
pub fn true_energy(op: &OperatingPoint, params: &GroundTruthParams) -> Result<f64> {
    op.validate()?;
    Ok(params.e0
        + params.a_temp * (op.temp_setpoint_c - 150.0)
        + params.a_cycle * (op.cycle_minutes - 20.0)
        + params.a_dry_solids * (op.dry_solids_frac - 0.12)
        + params.a_interaction * (op.temp_setpoint_c - 165.0) * (op.dry_solids_frac - 0.16))
}

/// Biosolid quality index in (0, 1) at `op`.
pub fn true_quality(op: &OperatingPoint, params: &GroundTruthParams) -> Result<f64> {
    op.validate()?;
    let arg = params.b_temp * (op.temp_setpoint_c - 160.0) + params.b_cycle * (op.cycle_minutes - 25.0);
    Ok(1.0 / (1.0 + (-arg).exp()))
}

/// Noisy (energy, quality) measurement. Always draws two normals so the
/// random stream advances identically regardless of the sigmas.
pub fn sample_observation<R: Rng + ?Sized>(
    op: &OperatingPoint,
    params: &GroundTruthParams,
    rng: &mut R,
) -> Result<(f64, f64)> {
    params.validate()?;
    let energy = true_energy(op, params)?;
    let quality = true_quality(op, params)?;
    let z_energy: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    let z_quality: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    Ok((
        energy + params.noise_sigma_energy * z_energy,
        (quality + params.noise_sigma_quality * z_quality).clamp(0.0, 1.0),
    ))
}

/// Trajectory of a replayed schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<StepResult>,
    /// Energy drawn at each step in kWh (zero for all-OFF steps).
    pub energy_kwh: Vec<f64>,
    /// Ground-truth quality at each active step.
    pub quality: Vec<Option<f64>>,
}

impl Episode {
    pub fn levels(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.next_state.tank.level_pct).collect()
    }

    pub fn total_energy_kwh(&self) -> f64 {
        self.energy_kwh.iter().sum()
    }

    pub fn min_quality(&self) -> Option<f64> {
        self.quality.iter().flatten().copied().reduce(f64::min)
    }
}

/// Replay `schedule` against realised `inflows`.
pub fn simulate_episode(
    plant: &PlantConfig,
    initial: &PlantState,
    inflows: &[f64],
    schedule: &Schedule,
    op_points: &[OperatingPoint],
    params: &GroundTruthParams,
) -> Result<Episode> {
    let horizon = inflows.len();
    if schedule.n_reactors() != plant.n_reactors() || schedule.horizon() != horizon {
        return Err(Error::Dimension(format!(
            "schedule is {}x{}, expected {}x{}",
            schedule.n_reactors(),
            schedule.horizon(),
            plant.n_reactors(),
            horizon
        )));
    }
    if op_points.len() != horizon {
        return Err(Error::Dimension(format!(
            "{} operating points for a horizon of {horizon}",
            op_points.len()
        )));
    }
    let mut state = initial.clone();
    let mut episode = Episode {
        steps: Vec::with_capacity(horizon),
        energy_kwh: Vec::with_capacity(horizon),
        quality: Vec::with_capacity(horizon),
    };
    for (t, &inflow) in inflows.iter().enumerate() {
        let decisions = schedule.column(t);
        let op = op_points[t];
        let throughput_m3 = plant.throughput_pct(&decisions) * plant.capacity_m3 / 100.0;
        if decisions.iter().any(|&on| on) {
            episode.energy_kwh.push(throughput_m3 * true_energy(&op, params)?);
            episode.quality.push(Some(true_quality(&op, params)?));
        } else {
            episode.energy_kwh.push(0.0);
            episode.quality.push(None);
        }
        let mut result = step_dynamics(plant, &state, inflow, &decisions)?;
        result.next_state.op_point = op;
        state = result.next_state.clone();
        episode.steps.push(result);
    }
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_reactor(rate: f64) -> PlantConfig {
        PlantConfig {
            capacity_m3: 100.0,
            reactors: vec![ReactorSpec {
                id: 1,
                rate_pct_per_step: rate,
                min_up_steps: 0,
                min_down_steps: 0,
            }],
        }
    }

    #[test]
    fn step_examples() {
        let plant = one_reactor(8.0);
        let s = plant.initial_state(70.0, &[false], OperatingPoint::default());
        let r = step_dynamics(&plant, &s, 5.0, &[true]).unwrap();
        assert_eq!(r.next_state.tank.level_pct, 67.0);
        assert!(!r.overflow && !r.underflow);
        assert_eq!(r.next_state.t_index, 1);
        assert_eq!(r.next_state.reactors[0], ReactorStatus { running: true, steps_in_state: 1 });

        let s = plant.initial_state(60.0, &[false], OperatingPoint::default());
        let r = step_dynamics(&plant, &s, 0.0, &[false]).unwrap();
        assert_eq!(r.next_state.tank.level_pct, 60.0);

        let s = plant.initial_state(3.0, &[false], OperatingPoint::default());
        let r = step_dynamics(&plant, &s, 0.0, &[true]).unwrap();
        assert_eq!(r.next_state.tank.level_pct, 0.0);
        assert!(r.underflow);
    }

    #[test]
    fn overflow_flag_and_dimension_error() {
        let plant = one_reactor(8.0);
        let s = plant.initial_state(98.0, &[false], OperatingPoint::default());
        let r = step_dynamics(&plant, &s, 5.0, &[false]).unwrap();
        assert!(r.overflow);
        assert_eq!(r.next_state.tank.level_pct, 100.0);
        assert!(matches!(
            step_dynamics(&plant, &s, 5.0, &[false, true]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn energy_examples() {
        let p = GroundTruthParams::default();
        let e = |t, ds, c| true_energy(&OperatingPoint::new(t, ds, c).unwrap(), &p).unwrap();
        assert!((e(165.0, 0.16, 30.0) - 44.5).abs() < 1e-12);
        // every linear delta is zero here but the interaction term is not: 4 * (-15) * (-0.04)
        assert!((e(150.0, 0.12, 20.0) - 37.4).abs() < 1e-12);
        assert!((e(180.0, 0.20, 40.0) - 56.4).abs() < 1e-12);
    }

    #[test]
    fn quality_examples() {
        let p = GroundTruthParams::default();
        let q = |t, ds, c| true_quality(&OperatingPoint::new(t, ds, c).unwrap(), &p).unwrap();
        assert_eq!(q(160.0, 0.13, 25.0), 0.5);
        assert_eq!(q(160.0, 0.19, 25.0), 0.5);
        assert!((q(172.0, 0.15, 35.0) - 0.982_013_790_037_908_5).abs() < 1e-12);
        assert!((q(150.0, 0.15, 20.0) - 0.047_425_873_177_566_78).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_is_domain_error() {
        let op = OperatingPoint {
            temp_setpoint_c: 181.0,
            ..OperatingPoint::default()
        };
        let p = GroundTruthParams::default();
        assert!(matches!(true_energy(&op, &p), Err(Error::Domain(_))));
        assert!(matches!(true_quality(&op, &p), Err(Error::Domain(_))));
        assert!(OperatingPoint::new(165.0, 0.11, 30.0).is_err());
        assert!(OperatingPoint::new(165.0, 0.16, 41.0).is_err());
    }

    #[test]
    fn sample_observation_contracts() {
        let op = OperatingPoint::default();
        let p = GroundTruthParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (e, q) = sample_observation(&op, &p, &mut rng).unwrap();
        assert_eq!(e, true_energy(&op, &p).unwrap());
        assert_eq!(q, true_quality(&op, &p).unwrap());

        let noisy = GroundTruthParams {
            noise_sigma_energy: 2.0,
            noise_sigma_quality: 0.5,
            ..p
        };
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_observation(&op, &noisy, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));

        let hot = OperatingPoint::new(180.0, 0.16, 40.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (_, q) = sample_observation(&hot, &noisy, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&q));
        }
    }

    #[test]
    fn episode_identity_and_balance() {
        let plant = one_reactor(8.0);
        let init = plant.initial_state(55.0, &[false], OperatingPoint::default());
        let ops = vec![OperatingPoint::default(); 5];
        let p = GroundTruthParams::default();

        let off = Schedule::all_off(1, 5);
        let ep = simulate_episode(&plant, &init, &[0.0; 5], &off, &ops, &p).unwrap();
        assert!(ep.levels().iter().all(|&l| l == 55.0));
        assert_eq!(ep.total_energy_kwh(), 0.0);
        assert_eq!(ep.min_quality(), None);

        let on = Schedule::from_rows(vec![vec![true; 5]]).unwrap();
        let ep = simulate_episode(&plant, &init, &[8.0; 5], &on, &ops, &p).unwrap();
        assert!(ep.levels().iter().all(|&l| l == 55.0));
        // 8% of 100 m³ at 44.5 kWh/m³
        assert!((ep.energy_kwh[0] - 8.0 * 44.5).abs() < 1e-9);

        assert!(matches!(
            simulate_episode(&plant, &init, &[0.0; 4], &off, &ops, &p),
            Err(Error::Dimension(_))
        ));
    }
}
