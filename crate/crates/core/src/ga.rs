//! Generational GA for the master side of a farming setup.
//!
//! The master owns the population and every genetic operator; fitness comes
//! from an [`Evaluator`], which may be in-process or a pool of remote slaves.
//! Each generation evaluates the individuals that lack a fitness, keeps the
//! top `selection_rate` fraction (truncation), and refills the population with
//! offspring of roulette-chosen parents.

use std::error::Error as StdError;
use std::time::{Duration, Instant};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{self, Fitness, Genome, GenomeError, SearchDomain};

type BoxError = Box<dyn StdError + Send + Sync + 'static>;

#[derive(Debug, Error)]
pub enum GaError {
    #[error("invalid GA configuration: {0}")]
    Config(String),
    #[error("crossover parents differ in length ({0} vs {1})")]
    ParentLength(usize, usize),
    #[error("crossover cuts ({cut1}, {cut2}) invalid for length {len}")]
    Cuts { cut1: usize, cut2: usize, len: usize },
    #[error("individual {0} has no fitness")]
    Unevaluated(usize),
    #[error("breeding needs at least 2 survivors, got {0}")]
    TooFewSurvivors(usize),
    #[error("roulette weights invalid: {0}")]
    Weights(String),
    #[error("evaluation failed in generation {generation}: {source}")]
    Evaluation {
        generation: usize,
        #[source]
        source: BoxError,
    },
    #[error("evaluator returned {got} fitness values for {expected} genomes in generation {generation}")]
    BatchSize {
        generation: usize,
        expected: usize,
        got: usize,
    },
    #[error("evaluator returned out-of-range fitness {value} in generation {generation}")]
    FitnessRange { generation: usize, value: f64 },
}

/// How bitflip mutation is applied to freshly bred offspring. Either way a
/// mutated child flips each bit with probability `1 / length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationScheme {
    /// Every offspring is mutated; `mutation_rate` is not consulted.
    #[default]
    EveryOffspring,
    /// Each offspring is mutated with probability `mutation_rate`.
    PerOffspring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation: MutationScheme,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub selection_rate: f64,
    pub seed: u64,
    pub domain: SearchDomain,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            generations: 20,
            mutation: MutationScheme::default(),
            mutation_rate: 0.2,
            crossover_rate: 0.8,
            selection_rate: 0.4,
            seed: 1,
            domain: SearchDomain::default(),
        }
    }
}

impl GaConfig {
    pub fn with_size(mut self, generations: usize, population_size: usize) -> Self {
        self.generations = generations;
        self.population_size = population_size;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn survivor_count(&self) -> usize {
        survivor_count(self.population_size, self.selection_rate)
    }

    pub fn validate(&self) -> Result<(), GaError> {
        if self.population_size == 0 {
            return Err(GaError::Config("population_size must be positive".into()));
        }
        if self.generations == 0 {
            return Err(GaError::Config("generations must be positive".into()));
        }
        for (name, rate) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
            ("selection_rate", self.selection_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(GaError::Config(format!("{name} must be in [0, 1], got {rate}")));
            }
        }
        let survivors = self.survivor_count();
        if survivors < 2 {
            return Err(GaError::Config(format!(
                "selection_rate {} keeps {survivors} of {} individuals; breeding needs 2",
                self.selection_rate, self.population_size
            )));
        }
        Ok(())
    }
}

fn survivor_count(n: usize, rate: f64) -> usize {
    // Absorb representation error so that e.g. 0.4 * 50 stays 20.
    let raw = (rate * n as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.min(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: Option<Fitness>,
}

impl Individual {
    pub fn new(genome: Genome) -> Self {
        Self { genome, fitness: None }
    }

    pub fn evaluated(genome: Genome, fitness: Fitness) -> Self {
        Self {
            genome,
            fitness: Some(fitness),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Individual,
    pub best_accuracy: f64,
    pub wall_time: Duration,
    /// All-time best accuracy after each generation's evaluation.
    pub per_generation_best: Vec<f64>,
    pub evaluations: usize,
}

/// Batch fitness evaluation. Output position `i` must belong to input `i`.
pub trait Evaluator {
    type Error: StdError + Send + Sync + 'static;

    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Fitness>, Self::Error>;
}

/// In-process evaluator.
#[derive(Debug, Clone, Copy)]
pub struct LocalEvaluator {
    pub domain: SearchDomain,
}

impl LocalEvaluator {
    pub fn new(domain: SearchDomain) -> Self {
        Self { domain }
    }
}

impl Evaluator for LocalEvaluator {
    type Error = GenomeError;

    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Fitness>, GenomeError> {
        genomes.iter().map(|g| genome::evaluate(g, &self.domain)).collect()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for &mut E {
    type Error = E::Error;

    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Fitness>, Self::Error> {
        (**self).evaluate(genomes)
    }
}

/// Swaps the segment `[cut1, cut2)` between two parents.
pub fn two_point_crossover(a: &Genome, b: &Genome, cut1: usize, cut2: usize) -> Result<(Genome, Genome), GaError> {
    if a.len() != b.len() {
        return Err(GaError::ParentLength(a.len(), b.len()));
    }
    if cut1 >= cut2 || cut2 > a.len() {
        return Err(GaError::Cuts {
            cut1,
            cut2,
            len: a.len(),
        });
    }
    let mut c1 = a.clone();
    let mut c2 = b.clone();
    c1.bits_mut()[cut1..cut2].copy_from_slice(&b.bits()[cut1..cut2]);
    c2.bits_mut()[cut1..cut2].copy_from_slice(&a.bits()[cut1..cut2]);
    Ok((c1, c2))
}

/// Flips each bit independently with `per_bit_prob`.
pub fn bitflip_mutation<R: Rng + ?Sized>(g: &Genome, rng: &mut R, per_bit_prob: f64) -> Genome {
    let p = per_bit_prob.clamp(0.0, 1.0);
    let mut out = g.clone();
    for bit in out.bits_mut() {
        if rng.gen_bool(p) {
            *bit = !*bit;
        }
    }
    out
}

/// Truncation selection: the `ceil(rate * n)` fittest, best first, ties by
/// lower index.
pub fn select_survivors(pop: &[Individual], selection_rate: f64) -> Result<Vec<Individual>, GaError> {
    let mut ranked = pop
        .iter()
        .enumerate()
        .map(|(i, ind)| ind.fitness.map(|f| (i, f)).ok_or(GaError::Unevaluated(i)))
        .collect::<Result<Vec<_>, _>>()?;
    // Stable sort keeps index order among equal fitness.
    ranked.sort_by(|(_, a), (_, b)| b.value().total_cmp(&a.value()));
    let keep = survivor_count(pop.len(), selection_rate);
    Ok(ranked.into_iter().take(keep).map(|(i, _)| pop[i].clone()).collect())
}

/// Fitness-proportional choice over raw weights.
pub fn roulette_pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize, GaError> {
    let dist = WeightedIndex::new(weights).map_err(|e| GaError::Weights(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Two distinct cut points from `{0, ..., len}`, ordered.
pub fn random_cuts<R: Rng + ?Sized>(len: usize, rng: &mut R) -> (usize, usize) {
    let picks = index::sample(rng, len + 1, 2);
    let (a, b) = (picks.index(0), picks.index(1));
    (a.min(b), a.max(b))
}

/// Produces `population_size - survivors.len()` unevaluated offspring.
pub fn breed<R: Rng + ?Sized>(
    survivors: &[Individual],
    rng: &mut R,
    cfg: &GaConfig,
) -> Result<Vec<Individual>, GaError> {
    if survivors.len() < 2 {
        return Err(GaError::TooFewSurvivors(survivors.len()));
    }
    let weights = survivors
        .iter()
        .enumerate()
        .map(|(i, s)| s.fitness.map(Fitness::value).ok_or(GaError::Unevaluated(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let wheel = WeightedIndex::new(&weights).map_err(|e| GaError::Weights(e.to_string()))?;

    let wanted = cfg.population_size.saturating_sub(survivors.len());
    let mut offspring = Vec::with_capacity(wanted);
    while offspring.len() < wanted {
        let a = &survivors[wheel.sample(rng)].genome;
        let b = &survivors[wheel.sample(rng)].genome;
        let (mut c1, mut c2) = if rng.gen_bool(cfg.crossover_rate) {
            let (cut1, cut2) = random_cuts(a.len(), rng);
            two_point_crossover(a, b, cut1, cut2)?
        } else {
            (a.clone(), b.clone())
        };
        for child in [&mut c1, &mut c2] {
            let mutate = match cfg.mutation {
                MutationScheme::EveryOffspring => true,
                MutationScheme::PerOffspring => rng.gen_bool(cfg.mutation_rate),
            };
            if mutate {
                let p = 1.0 / child.len() as f64;
                *child = bitflip_mutation(child, rng, p);
            }
        }
        offspring.push(Individual::new(c1));
        if offspring.len() < wanted {
            offspring.push(Individual::new(c2));
        }
    }
    Ok(offspring)
}

pub fn run_ga<E: Evaluator>(cfg: &GaConfig, evaluator: E) -> Result<GaResult, GaError> {
    run_ga_observed(cfg, evaluator, |_, _| {})
}

/// [`run_ga`] with a hook called on the evaluated population at every
/// generation boundary.
pub fn run_ga_observed<E, F>(cfg: &GaConfig, mut evaluator: E, mut observe: F) -> Result<GaResult, GaError>
where
    E: Evaluator,
    F: FnMut(usize, &[Individual]),
{
    cfg.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut population: Vec<Individual> = (0..cfg.population_size)
        .map(|_| Individual::new(genome::random_genome(&mut rng, &cfg.domain)))
        .collect();
    let mut best: Option<Individual> = None;
    let mut per_generation_best = Vec::with_capacity(cfg.generations);
    let mut evaluations = 0;

    for generation in 0..cfg.generations {
        evaluations += evaluate_pending(&mut population, &mut evaluator, generation)?;

        for ind in &population {
            let f = ind.fitness.expect("population evaluated above");
            if best.as_ref().and_then(|b| b.fitness).is_none_or(|bf| f > bf) {
                best = Some(ind.clone());
            }
        }
        let incumbent = best.as_ref().and_then(|b| b.fitness).expect("non-empty population");
        per_generation_best.push(incumbent.accuracy());
        observe(generation, &population);

        if generation + 1 < cfg.generations {
            let mut next = select_survivors(&population, cfg.selection_rate)?;
            let offspring = breed(&next, &mut rng, cfg)?;
            next.extend(offspring);
            population = next;
        }
    }

    let best = best.expect("at least one generation ran");
    let best_accuracy = best.fitness.expect("best is evaluated").accuracy();
    Ok(GaResult {
        best,
        best_accuracy,
        wall_time: started.elapsed(),
        per_generation_best,
        evaluations,
    })
}

fn evaluate_pending<E: Evaluator>(
    population: &mut [Individual],
    evaluator: &mut E,
    generation: usize,
) -> Result<usize, GaError> {
    let pending: Vec<usize> = population
        .iter()
        .enumerate()
        .filter(|(_, ind)| ind.fitness.is_none())
        .map(|(i, _)| i)
        .collect();
    if pending.is_empty() {
        return Ok(0);
    }
    let batch: Vec<Genome> = pending.iter().map(|&i| population[i].genome.clone()).collect();
    let fitness = evaluator.evaluate(&batch).map_err(|e| GaError::Evaluation {
        generation,
        source: Box::new(e),
    })?;
    if fitness.len() != batch.len() {
        return Err(GaError::BatchSize {
            generation,
            expected: batch.len(),
            got: fitness.len(),
        });
    }
    for (&i, f) in pending.iter().zip(fitness) {
        if !f.within_bounds() {
            return Err(GaError::FitnessRange {
                generation,
                value: f.value(),
            });
        }
        population[i].fitness = Some(f);
    }
    Ok(batch.len())
}
