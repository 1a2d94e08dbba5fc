//! Classic generational genetic algorithm.
//!
//! Two chromosome encodings are supported: a real vector with genes in
//! `[0, 1]`, and a fixed-size subset of a candidate pool. Every random
//! decision is drawn from one seeded stream in the driver; fitness
//! evaluation may run on the rayon pool because results are collected in
//! population order.

use std::fmt;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoding {
    /// `len` genes, each in `[0, 1]`.
    RealVector { len: usize },
    /// `size` distinct members drawn from `pool`.
    Subset { pool: Vec<usize>, size: usize },
}

impl Encoding {
    fn validate(&self) -> Result<()> {
        if let Encoding::Subset { pool, size } = self {
            let mut sorted = pool.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != pool.len() {
                return Err(Error::InvalidConfig("subset pool has duplicate members".into()));
            }
            if *size == 0 || *size > pool.len() {
                return Err(Error::InvalidConfig(format!(
                    "subset size {size} must lie in [1, {}]",
                    pool.len()
                )));
            }
        }
        Ok(())
    }

    fn gene_count(&self) -> usize {
        match self {
            Encoding::RealVector { len } => *len,
            Encoding::Subset { size, .. } => *size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Chromosome {
    Real(Vec<f64>),
    /// Sorted distinct pool members.
    Subset(Vec<usize>),
}

impl Chromosome {
    pub fn as_real(&self) -> Option<&[f64]> {
        match self {
            Chromosome::Real(genes) => Some(genes),
            Chromosome::Subset(_) => None,
        }
    }

    pub fn as_subset(&self) -> Option<&[usize]> {
        match self {
            Chromosome::Subset(members) => Some(members),
            Chromosome::Real(_) => None,
        }
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        let (kind, items): (&str, Vec<String>) = match self {
            Chromosome::Real(g) => ("real", g.iter().map(|x| format!("{x:.4}")).collect()),
            Chromosome::Subset(m) => ("subset", m.iter().map(usize::to_string).collect()),
        };
        let more = if items.len() > SHOWN {
            format!(", ... ({} genes)", items.len())
        } else {
            String::new()
        };
        let head = &items[..items.len().min(SHOWN)];
        write!(f, "{kind}[{}{more}]", head.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    /// Number of generations including the random initial one.
    pub max_iterations: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability; `None` means `1 / genes`.
    pub mutation_prob: Option<f64>,
    pub tournament_size: usize,
    pub elitism_count: usize,
    pub rng_seed: u64,
    /// Evaluate a generation's chromosomes on the rayon pool.
    pub parallel: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 10,
            max_iterations: 10_000,
            crossover_prob: 0.9,
            mutation_prob: None,
            tournament_size: 2,
            elitism_count: 1,
            rng_seed: 0,
            parallel: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.population_size < 2 {
            return fail(format!("population size {} < 2", self.population_size));
        }
        if self.max_iterations < 1 {
            return fail("max iterations must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return fail(format!("crossover probability {} outside [0, 1]", self.crossover_prob));
        }
        if let Some(p) = self.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("mutation probability {p} outside [0, 1]"));
            }
        }
        if self.tournament_size < 2 {
            return fail(format!("tournament size {} < 2", self.tournament_size));
        }
        if self.elitism_count >= self.population_size {
            return fail(format!(
                "elitism count {} must be below the population size {}",
                self.elitism_count, self.population_size
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best fitness seen in any generation so far.
    pub best_fitness: f64,
    /// Best fitness within this generation's population.
    pub generation_best: f64,
    /// Wall-clock seconds spent producing and evaluating the generation.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Chromosome,
    pub best_fitness: f64,
    pub generations: Vec<GenerationRecord>,
    /// Fitness of every member of the random initial population.
    pub initial_fitness: Vec<f64>,
    pub evaluations: usize,
}

impl GaResult {
    pub fn total_seconds(&self) -> f64 {
        self.generations.iter().map(|g| g.seconds).sum()
    }

    pub fn performance(&self) -> Result<PerformanceRecord> {
        let first = self.generations.first().map_or(self.best_fitness, |g| g.best_fitness);
        performance_index(first, self.best_fitness, self.generations.len(), self.total_seconds())
    }
}

/// Loss descent per generation over runtime per generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerformanceRecord {
    pub loss_descent: f64,
    pub seconds_per_generation: f64,
    pub index: f64,
}

pub fn performance_index(
    initial_best_loss: f64,
    final_best_loss: f64,
    generations: usize,
    total_seconds: f64,
) -> Result<PerformanceRecord> {
    if generations == 0 {
        return Err(Error::InvalidConfig("performance index needs at least one generation".into()));
    }
    if !(total_seconds > 0.0) {
        return Err(Error::InvalidConfig(format!("runtime must be positive, got {total_seconds}")));
    }
    let loss_descent = (initial_best_loss - final_best_loss) / generations as f64;
    let seconds_per_generation = total_seconds / generations as f64;
    Ok(PerformanceRecord {
        loss_descent,
        seconds_per_generation,
        index: loss_descent / seconds_per_generation,
    })
}

struct Operators<'a> {
    encoding: &'a Encoding,
    crossover_prob: f64,
    mutation_prob: f64,
}

impl Operators<'_> {
    fn random(&self, rng: &mut ChaCha8Rng) -> Chromosome {
        match self.encoding {
            Encoding::RealVector { len } => Chromosome::Real((0..*len).map(|_| rng.gen::<f64>()).collect()),
            Encoding::Subset { pool, size } => {
                let mut members: Vec<usize> = sample(rng, pool.len(), *size).into_iter().map(|i| pool[i]).collect();
                members.sort_unstable();
                Chromosome::Subset(members)
            }
        }
    }

    fn crossover(&self, a: &Chromosome, b: &Chromosome, rng: &mut ChaCha8Rng) -> (Chromosome, Chromosome) {
        if !rng.gen_bool(self.crossover_prob) {
            return (a.clone(), b.clone());
        }
        match (a, b) {
            (Chromosome::Real(x), Chromosome::Real(y)) => {
                let (mut c1, mut c2) = (x.clone(), y.clone());
                for i in 0..c1.len() {
                    if rng.gen_bool(0.5) {
                        std::mem::swap(&mut c1[i], &mut c2[i]);
                    }
                }
                (Chromosome::Real(c1), Chromosome::Real(c2))
            }
            (Chromosome::Subset(x), Chromosome::Subset(y)) => {
                let mut union: Vec<usize> = x.iter().chain(y).copied().collect();
                union.sort_unstable();
                union.dedup();
                let child = |rng: &mut ChaCha8Rng| {
                    let mut members: Vec<usize> =
                        sample(rng, union.len(), x.len()).into_iter().map(|i| union[i]).collect();
                    members.sort_unstable();
                    Chromosome::Subset(members)
                };
                let c1 = child(rng);
                (c1, child(rng))
            }
            _ => unreachable!("parents share one encoding"),
        }
    }

    fn mutate(&self, c: &mut Chromosome, rng: &mut ChaCha8Rng) {
        match c {
            Chromosome::Real(genes) => {
                for g in genes.iter_mut() {
                    if rng.gen_bool(self.mutation_prob) {
                        *g = rng.gen::<f64>();
                    }
                    *g = g.clamp(0.0, 1.0);
                }
            }
            Chromosome::Subset(members) => {
                let Encoding::Subset { pool, .. } = self.encoding else {
                    unreachable!("subset chromosome with real encoding");
                };
                if members.len() == pool.len() {
                    return;
                }
                for slot in 0..members.len() {
                    if rng.gen_bool(self.mutation_prob) {
                        let outside: Vec<usize> =
                            pool.iter().copied().filter(|p| members.binary_search(p).is_err()).collect();
                        members[slot] = outside[rng.gen_range(0..outside.len())];
                        members.sort_unstable();
                    }
                }
            }
        }
    }
}

fn tournament(fitness: &[f64], size: usize, direction: Direction, rng: &mut ChaCha8Rng) -> usize {
    let mut winner = rng.gen_range(0..fitness.len());
    for _ in 1..size {
        let challenger = rng.gen_range(0..fitness.len());
        if direction.better(fitness[challenger], fitness[winner]) {
            winner = challenger;
        }
    }
    winner
}

fn evaluate<F, E>(population: &[Chromosome], fitness: &F, parallel: bool) -> Result<Vec<f64>>
where
    F: Fn(&Chromosome) -> std::result::Result<f64, E> + Sync,
    E: std::error::Error + Send + Sync + 'static,
{
    let results: Vec<std::result::Result<f64, E>> = if parallel {
        population.par_iter().map(fitness).collect()
    } else {
        population.iter().map(fitness).collect()
    };
    results
        .into_iter()
        .zip(population)
        .map(|(r, c)| match r {
            Ok(v) if v.is_nan() => Err(Error::Fitness {
                chromosome: c.to_string(),
                source: "fitness is NaN".into(),
            }),
            Ok(v) => Ok(v),
            Err(e) => Err(Error::Fitness {
                chromosome: c.to_string(),
                source: Box::new(e),
            }),
        })
        .collect()
}

/// Runs the GA and returns the best chromosome ever evaluated.
///
/// Generation 0 is the random initial population; each later generation
/// keeps the `elitism_count` best members and fills the rest with
/// tournament-selected, crossed-over and mutated offspring. Identical
/// configs give identical results regardless of `parallel`.
pub fn run_ga<F, E>(fitness: F, direction: Direction, encoding: &Encoding, config: &GaConfig) -> Result<GaResult>
where
    F: Fn(&Chromosome) -> std::result::Result<f64, E> + Sync,
    E: std::error::Error + Send + Sync + 'static,
{
    config.validate()?;
    encoding.validate()?;
    let genes = encoding.gene_count();
    let ops = Operators {
        encoding,
        crossover_prob: config.crossover_prob,
        mutation_prob: config
            .mutation_prob
            .unwrap_or(if genes == 0 { 0.0 } else { 1.0 / genes as f64 }),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let eta = config.population_size;

    let clock = Instant::now();
    let mut population: Vec<Chromosome> = (0..eta).map(|_| ops.random(&mut rng)).collect();
    let mut scores = evaluate(&population, &fitness, config.parallel)?;
    let mut evaluations = eta;

    let best_index = |scores: &[f64]| {
        (1..scores.len()).fold(0, |best, i| if direction.better(scores[i], scores[best]) { i } else { best })
    };
    let b = best_index(&scores);
    let mut best = population[b].clone();
    let mut best_fitness = scores[b];
    let initial_fitness = scores.clone();
    let mut generations = vec![GenerationRecord {
        generation: 0,
        best_fitness,
        generation_best: scores[b],
        seconds: clock.elapsed().as_secs_f64(),
    }];

    for generation in 1..config.max_iterations {
        let clock = Instant::now();
        let mut ranked: Vec<usize> = (0..eta).collect();
        ranked.sort_by(|&i, &j| match direction {
            Direction::Minimize => scores[i].total_cmp(&scores[j]),
            Direction::Maximize => scores[j].total_cmp(&scores[i]),
        });
        let mut next: Vec<Chromosome> = ranked[..config.elitism_count]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        let elite_scores: Vec<f64> = ranked[..config.elitism_count].iter().map(|&i| scores[i]).collect();

        let mut offspring = Vec::with_capacity(eta - config.elitism_count);
        while offspring.len() < eta - config.elitism_count {
            let a = tournament(&scores, config.tournament_size, direction, &mut rng);
            let b = tournament(&scores, config.tournament_size, direction, &mut rng);
            let (mut c1, mut c2) = ops.crossover(&population[a], &population[b], &mut rng);
            ops.mutate(&mut c1, &mut rng);
            ops.mutate(&mut c2, &mut rng);
            offspring.push(c1);
            if offspring.len() < eta - config.elitism_count {
                offspring.push(c2);
            }
        }
        let offspring_scores = evaluate(&offspring, &fitness, config.parallel)?;
        evaluations += offspring.len();

        next.extend(offspring);
        population = next;
        scores = elite_scores.into_iter().chain(offspring_scores).collect();

        let b = best_index(&scores);
        if direction.better(scores[b], best_fitness) {
            best = population[b].clone();
            best_fitness = scores[b];
        }
        generations.push(GenerationRecord {
            generation,
            best_fitness,
            generation_best: scores[b],
            seconds: clock.elapsed().as_secs_f64(),
        });
    }

    Ok(GaResult {
        best,
        best_fitness,
        generations,
        initial_fitness,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::convert::Infallible;

    fn sum(c: &Chromosome) -> std::result::Result<f64, Infallible> {
        Ok(c.as_real().unwrap().iter().sum())
    }

    #[test]
    fn minimizes_sum_of_genes() {
        let config = GaConfig {
            max_iterations: 200,
            rng_seed: 7,
            ..Default::default()
        };
        let r = run_ga(sum, Direction::Minimize, &Encoding::RealVector { len: 5 }, &config).unwrap();
        assert!(r.best_fitness <= 0.25, "best {}", r.best_fitness);
        assert!(r.initial_fitness.iter().all(|&f| r.best_fitness < f));
        assert_eq!(r.generations.len(), 200);
    }

    #[test]
    fn finds_planted_subset() {
        let target = [3usize, 11, 17];
        let fitness = |c: &Chromosome| -> std::result::Result<f64, Infallible> {
            Ok(c.as_subset().unwrap().iter().filter(|m| target.contains(m)).count() as f64)
        };
        let encoding = Encoding::Subset {
            pool: (0..20).collect(),
            size: 3,
        };
        let config = GaConfig {
            max_iterations: 500,
            rng_seed: 3,
            ..Default::default()
        };
        let r = run_ga(fitness, Direction::Maximize, &encoding, &config).unwrap();
        assert_eq!(r.best_fitness, 3.0);
        assert_eq!(r.best.as_subset().unwrap(), &target);
    }

    #[test]
    fn zero_iterations_rejected() {
        let config = GaConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(matches!(
            run_ga(sum, Direction::Minimize, &Encoding::RealVector { len: 2 }, &config),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn single_iteration_is_best_of_initial_population() {
        let config = GaConfig {
            max_iterations: 1,
            rng_seed: 11,
            ..Default::default()
        };
        let r = run_ga(sum, Direction::Minimize, &Encoding::RealVector { len: 4 }, &config).unwrap();
        let min = r.initial_fitness.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_fitness, min);
        assert_eq!(r.evaluations, 10);
    }

    #[test]
    fn invalid_configs() {
        let base = GaConfig::default();
        for bad in [
            GaConfig { population_size: 1, ..base.clone() },
            GaConfig { elitism_count: 10, ..base.clone() },
            GaConfig { crossover_prob: 1.5, ..base.clone() },
            GaConfig { tournament_size: 1, ..base.clone() },
            GaConfig { mutation_prob: Some(-0.1), ..base.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[derive(Debug, thiserror::Error)]
    #[error("boom")]
    struct Boom;

    #[test]
    fn evaluator_failure_carries_chromosome() {
        let err = run_ga(
            |_: &Chromosome| Err::<f64, _>(Boom),
            Direction::Minimize,
            &Encoding::RealVector { len: 2 },
            &GaConfig::default(),
        )
        .unwrap_err();
        match err {
            Error::Fitness { chromosome, .. } => assert!(chromosome.starts_with("real[")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn performance_index_arithmetic() {
        let flat = performance_index(5.0, 5.0, 10, 3.0).unwrap();
        assert_eq!(flat.index, 0.0);
        let r = performance_index(6569.835, 2752.0, 10_000, 1.0).unwrap();
        assert!((r.loss_descent - 0.3817835).abs() < 1e-9);
        let r = performance_index(100.0, 0.0, 10, 20.0).unwrap();
        assert_eq!((r.loss_descent, r.seconds_per_generation, r.index), (10.0, 2.0, 5.0));
        assert!(performance_index(1.0, 0.0, 1, 0.0).is_err());
    }

    #[test]
    fn empty_real_vector_is_allowed() {
        let r = run_ga(sum, Direction::Minimize, &Encoding::RealVector { len: 0 }, &GaConfig {
            max_iterations: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.best_fitness, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reproducible_and_parallel_invariant(seed in any::<u64>(), len in 1usize..8) {
            let config = GaConfig { max_iterations: 30, rng_seed: seed, parallel: false, ..Default::default() };
            let a = run_ga(sum, Direction::Minimize, &Encoding::RealVector { len }, &config).unwrap();
            let b = run_ga(sum, Direction::Minimize, &Encoding::RealVector { len }, &GaConfig { parallel: true, ..config }).unwrap();
            prop_assert_eq!(&a.best, &b.best);
            let fa: Vec<f64> = a.generations.iter().map(|g| g.best_fitness).collect();
            let fb: Vec<f64> = b.generations.iter().map(|g| g.best_fitness).collect();
            prop_assert_eq!(fa, fb);
        }

        #[test]
        fn best_so_far_is_monotone(seed in any::<u64>(), maximize in any::<bool>()) {
            let direction = if maximize { Direction::Maximize } else { Direction::Minimize };
            let config = GaConfig { max_iterations: 40, rng_seed: seed, ..Default::default() };
            let r = run_ga(sum, direction, &Encoding::RealVector { len: 6 }, &config).unwrap();
            for w in r.generations.windows(2) {
                prop_assert!(!direction.better(w[0].best_fitness, w[1].best_fitness));
                // elitism keeps the incumbent in the population
                prop_assert!(!direction.better(w[0].generation_best, w[1].generation_best));
            }
        }

        #[test]
        fn subset_operators_preserve_size(seed in any::<u64>(), pool_len in 2usize..25, frac in 0.0f64..1.0) {
            let size = 1 + ((pool_len - 1) as f64 * frac) as usize;
            let pool: Vec<usize> = (0..pool_len).map(|i| i * 3 + 1).collect();
            let encoding = Encoding::Subset { pool: pool.clone(), size };
            let ops = Operators { encoding: &encoding, crossover_prob: 1.0, mutation_prob: 0.5 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let (a, b) = (ops.random(&mut rng), ops.random(&mut rng));
                let (mut c1, mut c2) = ops.crossover(&a, &b, &mut rng);
                ops.mutate(&mut c1, &mut rng);
                ops.mutate(&mut c2, &mut rng);
                for c in [c1, c2] {
                    let m = c.as_subset().unwrap();
                    prop_assert_eq!(m.len(), size);
                    prop_assert!(m.windows(2).all(|w| w[0] < w[1]));
                    prop_assert!(m.iter().all(|x| pool.contains(x)));
                }
            }
        }

        #[test]
        fn real_genes_stay_in_unit_interval(seed in any::<u64>()) {
            let encoding = Encoding::RealVector { len: 9 };
            let ops = Operators { encoding: &encoding, crossover_prob: 1.0, mutation_prob: 0.5 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (ops.random(&mut rng), ops.random(&mut rng));
            let (mut c1, _) = ops.crossover(&a, &b, &mut rng);
            ops.mutate(&mut c1, &mut rng);
            prop_assert!(c1.as_real().unwrap().iter().all(|g| (0.0..=1.0).contains(g)));
        }
    }
}
