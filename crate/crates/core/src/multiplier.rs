//! Stage-2 search for recovery multipliers: size-N node sets forced
//! recovered at week 0 that maximize the recovered count at the horizon.

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSchedule, RecoverySimulator, ThresholdVector};
use crate::error::{Error, Result};
use crate::ga::{run_ga, Chromosome, Direction, Encoding, GaConfig, GaResult};
use crate::graph::SpatialGraph;

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Multiplier sizes as 1%, 3%, 5% and 10% of `n`, rounded, deduplicated
/// and at least 1.
pub fn default_multiplier_sizes(n: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = [0.01, 0.03, 0.05, 0.10]
        .iter()
        .map(|p| ((p * n as f64).round() as usize).clamp(1, n.max(1)))
        .collect();
    sizes.dedup();
    sizes
}

#[derive(Debug, Clone)]
pub struct MultiplierProblem<'a> {
    simulator: RecoverySimulator<'a>,
    thresholds: &'a ThresholdVector,
    size: usize,
    pool: Vec<usize>,
}

impl<'a> MultiplierProblem<'a> {
    /// Problem over every node of the graph.
    pub fn new(
        graph: &'a SpatialGraph,
        thresholds: &'a ThresholdVector,
        schedule: DiffusionSchedule,
        size: usize,
    ) -> Result<Self> {
        Self::with_pool(graph, thresholds, schedule, size, (0..graph.len()).collect())
    }

    pub fn with_pool(
        graph: &'a SpatialGraph,
        thresholds: &'a ThresholdVector,
        schedule: DiffusionSchedule,
        size: usize,
        mut pool: Vec<usize>,
    ) -> Result<Self> {
        if thresholds.len() != graph.len() {
            return Err(Error::DimensionMismatch {
                what: "threshold vector",
                expected: graph.len(),
                actual: thresholds.len(),
            });
        }
        pool.sort_unstable();
        pool.dedup();
        if let Some(&bad) = pool.iter().find(|&&v| v >= graph.len()) {
            return Err(Error::InvalidMultiplierSet(format!("pool member {bad} is not a node")));
        }
        if size == 0 || size > pool.len() {
            return Err(Error::InvalidMultiplierSet(format!(
                "size {size} must lie in [1, {}]",
                pool.len()
            )));
        }
        Ok(Self {
            simulator: RecoverySimulator::new(graph, schedule)?,
            thresholds,
            size,
            pool,
        })
    }

    pub fn graph(&self) -> &'a SpatialGraph {
        self.simulator.graph()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    /// Recovered count at the horizon with nothing forced.
    pub fn recovered_without(&self) -> Result<usize> {
        self.simulator
            .recovered_at_horizon(self.thresholds.values(), &vec![false; self.graph().len()])
    }
}

/// Recovered count at the horizon when `members` start recovered.
pub fn multiplier_objective(members: &[usize], problem: &MultiplierProblem<'_>) -> Result<usize> {
    if members.len() != problem.size {
        return Err(Error::InvalidMultiplierSet(format!(
            "expected {} members, got {}",
            problem.size,
            members.len()
        )));
    }
    let mut initial = vec![false; problem.graph().len()];
    for &m in members {
        if problem.pool.binary_search(&m).is_err() {
            return Err(Error::InvalidMultiplierSet(format!("node {m} is not in the candidate pool")));
        }
        if std::mem::replace(&mut initial[m], true) {
            return Err(Error::InvalidMultiplierSet(format!("node {m} listed twice")));
        }
    }
    problem
        .simulator
        .recovered_at_horizon(problem.thresholds.values(), &initial)
}

/// Percent gain of `recovered_with` over `recovered_without`.
pub fn increment_rate(recovered_with: usize, recovered_without: usize) -> Result<f64> {
    if recovered_without == 0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(100.0 * (recovered_with as f64 - recovered_without as f64) / recovered_without as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierResult {
    pub size: usize,
    /// Selected node indices, ascending.
    pub members: Vec<usize>,
    pub ids: Vec<String>,
    pub recovered_with: usize,
    pub recovered_without: usize,
    /// `None` when nothing recovers without multipliers.
    pub increment_rate: Option<f64>,
    #[serde(skip)]
    pub ga: Option<GaResult>,
}

fn finish(problem: &MultiplierProblem<'_>, members: Vec<usize>, ga: Option<GaResult>) -> Result<MultiplierResult> {
    let recovered_with = multiplier_objective(&members, problem)?;
    let recovered_without = problem.recovered_without()?;
    let g = problem.graph();
    Ok(MultiplierResult {
        size: problem.size,
        ids: members.iter().map(|&m| g.id(m).to_owned()).collect(),
        members,
        recovered_with,
        recovered_without,
        increment_rate: increment_rate(recovered_with, recovered_without).ok(),
        ga,
    })
}

pub fn search_multipliers(problem: &MultiplierProblem<'_>, config: &GaConfig) -> Result<MultiplierResult> {
    let encoding = Encoding::Subset {
        pool: problem.pool.clone(),
        size: problem.size,
    };
    let fitness = |c: &Chromosome| -> Result<f64> {
        multiplier_objective(c.as_subset().expect("subset encoding"), problem).map(|v| v as f64)
    };
    let ga = run_ga(fitness, Direction::Maximize, &encoding, config)?;
    let members = ga.best.as_subset().expect("subset encoding").to_vec();
    finish(problem, members, Some(ga))
}

/// `C(n, k)` as u128, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Exact maximizer by enumerating every size-N subset of the pool in
/// lexicographic order; the first optimum found wins ties.
pub fn brute_force_multipliers(problem: &MultiplierProblem<'_>, cap: u128) -> Result<MultiplierResult> {
    let count = binomial(problem.pool.len(), problem.size);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let k = problem.size;
    let pool = &problem.pool;
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut members = vec![0; k];
    loop {
        for (slot, &i) in members.iter_mut().zip(&idx) {
            *slot = pool[i];
        }
        let value = multiplier_objective(&members, problem)?;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, members.clone()));
        }
        // advance to the next combination
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < pool.len() - k + p) else {
            break;
        };
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
    let (_, members) = best.expect("at least one combination");
    finish(problem, members, None)
}
