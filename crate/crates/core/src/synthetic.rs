//! Synthetic instances with planted thresholds, for exercising the full
//! pipeline without real mobility data.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::{AttributeRow, AttributeTable};
use crate::contiguity::{build_contiguity_graph, ContiguityRule, Polygon, SpatialUnit};
use crate::diffusion::{DiffusionSchedule, RecoverySimulator, ThresholdVector, Trajectory};
use crate::empirical::RecoveryDurationTable;
use crate::error::{Error, Result};
use crate::graph::SpatialGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Unit squares on a row-major grid, queen contiguity.
    Grid,
    /// Grid with each edge dropped independently, redrawn until connected.
    PerturbedGrid { deletion_prob: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub graph: GraphKind,
    pub seed_fraction: f64,
    pub threshold_low: f64,
    pub threshold_high: f64,
    /// Rank coupling of per-capita income to threshold, in `[-1, 1]`.
    pub attribute_coupling: f64,
    pub rng_seed: u64,
    pub schedule: DiffusionSchedule,
    /// Redraw thresholds until every node recovers within the horizon.
    pub require_full_recovery: bool,
    pub max_attempts: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 50,
            graph: GraphKind::Grid,
            seed_fraction: 0.1,
            threshold_low: 0.1,
            threshold_high: 0.6,
            attribute_coupling: -0.6,
            rng_seed: 0,
            schedule: DiffusionSchedule::default(),
            require_full_recovery: true,
            max_attempts: 100,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSynthSpec(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.seed_fraction) {
            return bad(format!("seed_fraction {} outside [0, 1]", self.seed_fraction));
        }
        if !(self.threshold_low > 0.0 && self.threshold_low <= self.threshold_high && self.threshold_high <= 1.0) {
            return bad(format!(
                "threshold range [{}, {}] must satisfy 0 < low <= high <= 1",
                self.threshold_low, self.threshold_high
            ));
        }
        if !(-1.0..=1.0).contains(&self.attribute_coupling) {
            return bad(format!("attribute_coupling {} outside [-1, 1]", self.attribute_coupling));
        }
        if let GraphKind::PerturbedGrid { deletion_prob } = self.graph {
            if !(0.0..1.0).contains(&deletion_prob) {
                return bad(format!("deletion_prob {deletion_prob} outside [0, 1)"));
            }
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        self.schedule.validate()
    }

    /// Seeds planted: `round(seed_fraction * n)`, at least one.
    pub fn seed_count(&self) -> usize {
        ((self.seed_fraction * self.n as f64).round() as usize).clamp(1, self.n)
    }

    /// Duration written for seed nodes, half a week before the first update.
    pub fn seed_duration(&self) -> f64 {
        self.schedule.first_update_week as f64 - 0.5
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub spec: SynthSpec,
    pub units: Vec<SpatialUnit>,
    pub graph: SpatialGraph,
    pub planted: ThresholdVector,
    pub durations: RecoveryDurationTable,
    pub attributes: AttributeTable,
    /// Forward simulation of the planted thresholds.
    pub trajectory: Trajectory,
}

fn grid_units(n: usize) -> Vec<SpatialUnit> {
    let width = (n as f64).sqrt().ceil() as usize;
    let digits = (n - 1).max(1).to_string().len();
    (0..n)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            SpatialUnit::new(format!("u{i:0digits$}"), Polygon::rectangle(x, y, x + 1.0, y + 1.0))
        })
        .collect()
}

fn perturb(grid: &SpatialGraph, deletion_prob: f64, attempts: usize, rng: &mut ChaCha8Rng) -> Result<SpatialGraph> {
    let edges: Vec<(usize, usize)> = grid.edges().collect();
    for _ in 0..attempts {
        let kept: Vec<(usize, usize)> = edges.iter().copied().filter(|_| !rng.gen_bool(deletion_prob)).collect();
        let g = SpatialGraph::from_index_edges(grid.ids().to_vec(), &kept)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::DisconnectedGrid(attempts))
}

/// Ranks standardized to zero mean and unit variance.
fn rank_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r as f64;
    }
    let mean = (n as f64 - 1.0) / 2.0;
    let sd = ((n * n) as f64 - 1.0).sqrt() / 12f64.sqrt();
    ranks.iter().map(|r| if sd > 0.0 { (r - mean) / sd } else { 0.0 }).collect()
}

pub fn generate_instance(spec: &SynthSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let n = spec.n;
    let units = grid_units(n);
    let mut graph = build_contiguity_graph(&units, ContiguityRule::default())?;
    if let GraphKind::PerturbedGrid { deletion_prob } = spec.graph {
        graph = perturb(&graph, deletion_prob, spec.max_attempts, &mut rng)?;
    }
    let simulator = RecoverySimulator::new(&graph, spec.schedule)?;
    let nobody = vec![false; n];

    let mut attempt = 0;
    let (planted, weeks) = loop {
        attempt += 1;
        let mut seeds = vec![false; n];
        for i in sample(&mut rng, n, spec.seed_count()) {
            seeds[i] = true;
        }
        let values: Vec<f64> = seeds
            .iter()
            .map(|&s| {
                let t = rng.gen_range(spec.threshold_low..=spec.threshold_high);
                if s {
                    0.0
                } else {
                    t
                }
            })
            .collect();
        let planted = ThresholdVector::with_seeds(values, seeds)?;
        let weeks = simulator.recovery_weeks(planted.values(), &nobody)?;
        if !spec.require_full_recovery || weeks.iter().all(Option::is_some) {
            break (planted, weeks);
        }
        if attempt >= spec.max_attempts {
            return Err(Error::IncompleteRecovery(attempt));
        }
    };

    let horizon = spec.schedule.horizon;
    let durations = RecoveryDurationTable::new(graph.ids().iter().zip(&weeks).enumerate().map(|(i, (id, w))| {
        let d = if planted.is_seed(i) {
            spec.seed_duration()
        } else {
            w.map_or(horizon as f64, |w| w as f64)
        };
        (id.clone(), d)
    }))?;

    let z = rank_scores(planted.values());
    let c = spec.attribute_coupling;
    let noise_weight = (1.0 - c * c).max(0.0).sqrt();
    let attributes = AttributeTable::new(graph.ids().iter().zip(&z).map(|(id, &zi)| {
        let noise: f64 = rng.sample(StandardNormal);
        let score = c * zi + noise_weight * noise;
        let per_capita = 30_000.0 * (0.35 * score).exp();
        let row = AttributeRow {
            per_capita_income: per_capita,
            median_household_income: 2.6 * per_capita,
            minority_pct: 100.0 / (1.0 + score.exp()),
            flood_extent: Some(rng.gen::<f64>()),
        };
        (id.clone(), row)
    }))?;

    Ok(SyntheticInstance {
        spec: spec.clone(),
        units,
        trajectory: Trajectory::from_recovery_weeks(&weeks, horizon),
        graph,
        planted,
        durations,
        attributes,
    })
}
