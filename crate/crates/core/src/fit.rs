//! Stage-1 fitting: per-node thresholds that reproduce observed recovery.
//!
//! Nodes whose observed duration falls below the seed cutoff are pinned at
//! threshold 0 and left out of the chromosome; the GA searches thresholds
//! for the remaining (free) nodes, minimizing the zero-one loss between the
//! empirical trajectory and a diffusion run from an all-affected start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{run_diffusion, DiffusionSchedule, RecoverySimulator, StateVector, ThresholdVector, Trajectory};
use crate::empirical::{durations_to_trajectory, recovery_week, recovery_week_loss, zero_one_loss, RecoveryDurationTable};
use crate::error::{Error, Result};
use crate::ga::{run_ga, Chromosome, Direction, Encoding, GaConfig, GaResult};
use crate::graph::SpatialGraph;

pub const DEFAULT_SEED_CUTOFF_WEEKS: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct FitProblem<'g> {
    graph: &'g SpatialGraph,
    schedule: DiffusionSchedule,
    empirical: Trajectory,
    empirical_weeks: Vec<Option<usize>>,
    seed_mask: Vec<bool>,
    free_nodes: Vec<usize>,
    warnings: Vec<String>,
}

/// Builds the stage-1 problem from observed durations.
///
/// Seed nodes (duration below `seed_cutoff_weeks`) are recorded as
/// recovering at the schedule's first update week in the empirical
/// trajectory, since that is the only week a zero threshold can produce.
pub fn build_fit_problem<'g>(
    graph: &'g SpatialGraph,
    durations: &RecoveryDurationTable,
    seed_cutoff_weeks: f64,
    schedule: DiffusionSchedule,
) -> Result<FitProblem<'g>> {
    schedule.validate()?;
    let aligned = durations.aligned_to(graph)?;
    let seed_mask: Vec<bool> = aligned.iter().map(|&d| d < seed_cutoff_weeks).collect();
    let mut warnings = Vec::new();

    let seed_week = schedule.first_update_week;
    let mut shifted = 0;
    let rows = graph.ids().iter().zip(&aligned).zip(&seed_mask).map(|((id, &d), &seed)| {
        if seed && recovery_week(d) != seed_week {
            shifted += 1;
            (id.clone(), seed_week as f64 - 0.5)
        } else {
            (id.clone(), d)
        }
    });
    let table = RecoveryDurationTable::new(rows.collect::<Vec<_>>())?;
    let empirical = durations_to_trajectory(&table, schedule.horizon)?;
    if shifted > 0 {
        warnings.push(format!(
            "{shifted} seed node(s) observed recovering outside week {seed_week}; \
             their empirical recovery is placed at week {seed_week}"
        ));
    }
    let free_nodes: Vec<usize> = (0..graph.len()).filter(|&i| !seed_mask[i]).collect();
    if free_nodes.len() == graph.len() {
        warnings.push(format!(
            "no node recovers in under {seed_cutoff_weeks} weeks: with an all-affected start nothing can ever recover"
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(FitProblem {
        graph,
        schedule,
        empirical_weeks: empirical.recovery_weeks(),
        empirical,
        seed_mask,
        free_nodes,
        warnings,
    })
}

impl<'g> FitProblem<'g> {
    pub fn graph(&self) -> &'g SpatialGraph {
        self.graph
    }

    pub fn schedule(&self) -> DiffusionSchedule {
        self.schedule
    }

    pub fn empirical(&self) -> &Trajectory {
        &self.empirical
    }

    pub fn seed_mask(&self) -> &[bool] {
        &self.seed_mask
    }

    pub fn seed_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.seed_mask.len()).filter(|&i| self.seed_mask[i])
    }

    /// Node indices whose thresholds the chromosome encodes, ascending.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Full threshold vector: seeds at 0, free nodes from `genes`.
    pub fn thresholds_from(&self, genes: &[f64]) -> Result<ThresholdVector> {
        if genes.len() != self.free_nodes.len() {
            return Err(Error::DimensionMismatch {
                what: "chromosome length",
                expected: self.free_nodes.len(),
                actual: genes.len(),
            });
        }
        let mut values = vec![0.0; self.graph.len()];
        for (&node, &g) in self.free_nodes.iter().zip(genes) {
            values[node] = g;
        }
        ThresholdVector::with_seeds(values, self.seed_mask.clone())
    }

    /// Restricts a full threshold vector to the free nodes.
    pub fn genes_from(&self, thresholds: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|&i| thresholds[i]).collect()
    }

    /// Simulated trajectory from an all-affected start.
    pub fn simulate(&self, thresholds: &ThresholdVector) -> Result<Trajectory> {
        run_diffusion(self.graph, thresholds, &StateVector::affected(self.graph.len()), &self.schedule)
    }
}

/// Zero-one loss of the thresholds encoded by `genes`.
pub fn fit_fitness(genes: &[f64], problem: &FitProblem<'_>) -> Result<usize> {
    let thresholds = problem.thresholds_from(genes)?;
    let sim = RecoverySimulator::new(problem.graph, problem.schedule)?;
    let weeks = sim.recovery_weeks(thresholds.values(), &vec![false; problem.graph.len()])?;
    Ok(recovery_week_loss(&problem.empirical_weeks, &weeks, problem.schedule.horizon))
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub thresholds: ThresholdVector,
    /// Loss of `thresholds` from an independent full re-simulation.
    pub final_loss: usize,
    pub ga: GaResult,
}

pub fn fit_thresholds(problem: &FitProblem<'_>, config: &GaConfig) -> Result<FitResult> {
    let encoding = Encoding::RealVector {
        len: problem.free_nodes.len(),
    };
    let fitness = |c: &Chromosome| -> Result<f64> {
        let genes = c.as_real().expect("real-vector encoding");
        fit_fitness(genes, problem).map(|l| l as f64)
    };
    let ga = run_ga(fitness, Direction::Minimize, &encoding, config)?;
    let thresholds = problem.thresholds_from(ga.best.as_real().expect("real-vector encoding"))?;
    let simulated = problem.simulate(&thresholds)?;
    let final_loss = zero_one_loss(&problem.empirical, &simulated)?;
    Ok(FitResult {
        thresholds,
        final_loss,
        ga,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineStats {
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub std_dev: f64,
    pub min: usize,
    pub max: usize,
    #[serde(skip)]
    pub losses: Vec<usize>,
}

impl BaselineStats {
    pub fn standard_error(&self) -> f64 {
        self.std_dev / (self.runs as f64).sqrt()
    }
}

/// Loss statistics of uniformly random free-node thresholds.
///
/// Run `r` draws from its own ChaCha stream, so results do not depend on
/// how runs are scheduled across threads.
pub fn random_baseline(problem: &FitProblem<'_>, runs: usize, rng_seed: u64) -> Result<BaselineStats> {
    if runs == 0 {
        return Err(Error::InvalidConfig("baseline needs at least one run".into()));
    }
    let free = problem.free_nodes.len();
    let losses = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(run as u64);
            let genes: Vec<f64> = (0..free).map(|_| rng.gen::<f64>()).collect();
            fit_fitness(&genes, problem)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = losses.iter().sum::<usize>() as f64 / runs as f64;
    let std_dev = if runs > 1 {
        let ss: f64 = losses.iter().map(|&l| (l as f64 - mean).powi(2)).sum();
        (ss / (runs - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BaselineStats {
        runs,
        mean,
        std_dev,
        min: *losses.iter().min().expect("runs >= 1"),
        max: *losses.iter().max().expect("runs >= 1"),
        losses,
    })
}
