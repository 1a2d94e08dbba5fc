//! Progressive two-state threshold diffusion over a weekly schedule.
//!
//! A node recovers at week `t` when it was already recovered at `t - 1` or
//! the fraction of its neighbors recovered at `t - 1` is at least its
//! threshold. Isolates see a fraction of 0. Weeks before the first update
//! week copy the initial state.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpatialGraph;

pub const DEFAULT_HORIZON: usize = 14;
pub const DEFAULT_FIRST_UPDATE_WEEK: usize = 3;

/// Per-node thresholds in `[0, 1]`; seed nodes are pinned to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    values: Vec<f64>,
    seeds: Vec<bool>,
}

impl ThresholdVector {
    /// Thresholds with no designated seeds.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::with_seeds(values, vec![false; n])
    }

    /// Thresholds with a seed mask; masked entries are set to 0.
    pub fn with_seeds(mut values: Vec<f64>, seeds: Vec<bool>) -> Result<Self> {
        if seeds.len() != values.len() {
            return Err(Error::DimensionMismatch {
                what: "seed mask",
                expected: values.len(),
                actual: seeds.len(),
            });
        }
        for (index, (value, &seed)) in values.iter_mut().zip(&seeds).enumerate() {
            if seed {
                *value = 0.0;
            } else if !(0.0..=1.0).contains(value) {
                return Err(Error::ThresholdOutOfRange { index, value: *value });
            }
        }
        Ok(Self { values, seeds })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_seed(&self, node: usize) -> bool {
        self.seeds[node]
    }

    pub fn seed_mask(&self) -> &[bool] {
        &self.seeds
    }

    pub fn seed_count(&self) -> usize {
        self.seeds.iter().filter(|&&s| s).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    /// Last simulated week `T`; weeks run `0..=T`.
    pub horizon: usize,
    /// First week whose state is computed by a diffusion step.
    pub first_update_week: usize,
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            first_update_week: DEFAULT_FIRST_UPDATE_WEEK,
        }
    }
}

impl DiffusionSchedule {
    pub fn new(horizon: usize, first_update_week: usize) -> Result<Self> {
        let schedule = Self {
            horizon,
            first_update_week,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.first_update_week < 1 || self.first_update_week > self.horizon {
            return Err(Error::InvalidSchedule(format!(
                "first update week {} must lie in [1, {}]",
                self.first_update_week, self.horizon
            )));
        }
        Ok(())
    }
}

/// Binary node states: `true` is recovered, `false` is affected.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateVector(Vec<bool>);

impl StateVector {
    pub fn affected(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn recovered(n: usize) -> Self {
        Self(vec![true; n])
    }

    /// All nodes affected except `nodes`.
    pub fn with_recovered(n: usize, nodes: impl IntoIterator<Item = usize>) -> Self {
        let mut states = vec![false; n];
        for v in nodes {
            states[v] = true;
        }
        Self(states)
    }

    pub fn recovered_count(&self) -> usize {
        self.0.iter().filter(|&&s| s).count()
    }

    pub fn into_inner(self) -> Vec<bool> {
        self.0
    }
}

impl From<Vec<bool>> for StateVector {
    fn from(states: Vec<bool>) -> Self {
        Self(states)
    }
}

impl Deref for StateVector {
    type Target = [bool];

    fn deref(&self) -> &[bool] {
        &self.0
    }
}

/// Node states for weeks `0..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    states: Vec<StateVector>,
}

impl Trajectory {
    /// Wraps per-week states; requires at least week 0 and equal widths.
    pub fn new(states: Vec<StateVector>) -> Result<Self> {
        let Some(first) = states.first() else {
            return Err(Error::InvalidSchedule("trajectory needs at least week 0".into()));
        };
        let n = first.len();
        if let Some(bad) = states.iter().find(|s| s.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "trajectory week width",
                expected: n,
                actual: bad.len(),
            });
        }
        Ok(Self { states })
    }

    /// Builds the trajectory in which node `i` is recovered from week
    /// `weeks[i]` onward (`None` never recovers).
    pub fn from_recovery_weeks(weeks: &[Option<usize>], horizon: usize) -> Self {
        let states = (0..=horizon)
            .map(|t| StateVector(weeks.iter().map(|w| w.is_some_and(|w| w <= t)).collect()))
            .collect();
        Self { states }
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.states[0].len()
    }

    pub fn state(&self, week: usize) -> &StateVector {
        &self.states[week]
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory has week 0")
    }

    /// First week each node is recovered, if ever.
    pub fn recovery_weeks(&self) -> Vec<Option<usize>> {
        (0..self.node_count())
            .map(|i| self.states.iter().position(|s| s[i]))
            .collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.states
            .windows(2)
            .all(|w| w[0].iter().zip(w[1].iter()).all(|(&a, &b)| !a || b))
    }
}

fn check_dims(g: &SpatialGraph, len: usize, what: &'static str) -> Result<()> {
    if g.len() != len {
        return Err(Error::DimensionMismatch {
            what,
            expected: g.len(),
            actual: len,
        });
    }
    Ok(())
}

/// One synchronous update of every node from `prev`.
pub fn diffusion_step(g: &SpatialGraph, prev: &StateVector, thresholds: &ThresholdVector) -> Result<StateVector> {
    check_dims(g, prev.len(), "state vector")?;
    check_dims(g, thresholds.len(), "threshold vector")?;
    Ok(step_unchecked(g, prev, thresholds.values()))
}

fn step_unchecked(g: &SpatialGraph, prev: &[bool], tau: &[f64]) -> StateVector {
    let next = (0..g.len())
        .map(|i| prev[i] || recovered_fraction(g, prev, i) >= tau[i])
        .collect();
    StateVector(next)
}

fn recovered_fraction(g: &SpatialGraph, states: &[bool], node: usize) -> f64 {
    let neighbors = g.neighbors(node);
    if neighbors.is_empty() {
        return 0.0;
    }
    let recovered = neighbors.iter().filter(|&&j| states[j]).count();
    recovered as f64 / neighbors.len() as f64
}

pub fn run_diffusion(
    g: &SpatialGraph,
    thresholds: &ThresholdVector,
    initial: &StateVector,
    schedule: &DiffusionSchedule,
) -> Result<Trajectory> {
    schedule.validate()?;
    check_dims(g, initial.len(), "initial state")?;
    check_dims(g, thresholds.len(), "threshold vector")?;
    let mut states = Vec::with_capacity(schedule.horizon + 1);
    states.push(initial.clone());
    for t in 1..=schedule.horizon {
        let prev = &states[t - 1];
        let next = if t < schedule.first_update_week {
            prev.clone()
        } else {
            step_unchecked(g, prev, thresholds.values())
        };
        states.push(next);
    }
    Ok(Trajectory { states })
}

pub fn recovered_counts(trajectory: &Trajectory) -> Vec<usize> {
    trajectory.states.iter().map(StateVector::recovered_count).collect()
}

/// Reusable simulator returning first-recovery weeks.
///
/// Produces the same result as [`run_diffusion`] followed by
/// [`Trajectory::recovery_weeks`], but maintains recovered-neighbor counts
/// incrementally and stops once a fixed point is reached. Used inside the
/// optimizers where the same graph is simulated many times.
#[derive(Debug, Clone)]
pub struct RecoverySimulator<'g> {
    graph: &'g SpatialGraph,
    schedule: DiffusionSchedule,
}

impl<'g> RecoverySimulator<'g> {
    pub fn new(graph: &'g SpatialGraph, schedule: DiffusionSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self { graph, schedule })
    }

    pub fn graph(&self) -> &'g SpatialGraph {
        self.graph
    }

    pub fn schedule(&self) -> DiffusionSchedule {
        self.schedule
    }

    /// First-recovery week per node; `initial` nodes recover at week 0.
    pub fn recovery_weeks(&self, tau: &[f64], initial: &[bool]) -> Result<Vec<Option<usize>>> {
        let g = self.graph;
        check_dims(g, tau.len(), "threshold vector")?;
        check_dims(g, initial.len(), "initial state")?;
        let n = g.len();
        let mut weeks: Vec<Option<usize>> = initial.iter().map(|&s| s.then_some(0)).collect();
        let mut recovered_neighbors = vec![0usize; n];
        for v in (0..n).filter(|&v| initial[v]) {
            for &u in g.neighbors(v) {
                recovered_neighbors[u] += 1;
            }
        }
        let mut newly = Vec::new();
        for t in self.schedule.first_update_week..=self.schedule.horizon {
            newly.clear();
            for i in 0..n {
                if weeks[i].is_some() {
                    continue;
                }
                let degree = g.degree(i);
                let fraction = if degree == 0 {
                    0.0
                } else {
                    recovered_neighbors[i] as f64 / degree as f64
                };
                if fraction >= tau[i] {
                    newly.push(i);
                }
            }
            if newly.is_empty() {
                break;
            }
            for &i in &newly {
                weeks[i] = Some(t);
                for &u in g.neighbors(i) {
                    recovered_neighbors[u] += 1;
                }
            }
        }
        Ok(weeks)
    }

    /// Number of nodes recovered at the horizon.
    pub fn recovered_at_horizon(&self, tau: &[f64], initial: &[bool]) -> Result<usize> {
        Ok(self.recovery_weeks(tau, initial)?.iter().filter(|w| w.is_some()).count())
    }
}
