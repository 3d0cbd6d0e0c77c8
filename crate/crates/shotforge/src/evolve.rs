//! NSGA-II search over variable-length shot sets.
//!
//! Individuals encode which training issues to include as prompt examples
//! (see [`Chromosome`]); fitness is a triple of minimized objectives
//! ([`ObjectiveVector`]). Selection and survival follow Deb et al. (2002):
//! fast non-dominated sorting into ranks, crowding distance within a front,
//! binary tournaments, and (mu+lambda) elitist truncation.
//!
//! The genetic operators are shaped for the variable-length, duplicate-free
//! representation:
//!
//! * crossover cuts each parent at an independent breakpoint and swaps
//!   tails, dropping any gene the appended block would duplicate;
//! * mutation applies exactly one of replace / remove / append per event
//!   (probabilities 0.5 / 0.25 / 0.25 by default).
//!
//! Offspring may be empty (zero-shot) or grow past the initial length cap;
//! only initialization bounds length, the shot-count objective applies the
//! pressure afterwards.
//!
//! Randomness comes from a ChaCha8 generator with a fixed stream-splitting
//! rule — stream 0 initializes the population, stream `g + 1` drives
//! generation `g` — so a run can be reproduced or resumed from any
//! generation boundary given only the seed and the generation index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Chromosome;

/// Errors from configuration or population setup.
#[derive(Debug, Error, PartialEq)]
pub enum EvolveError {
    #[error("train pool is empty")]
    EmptyTrainPool,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// The three minimized objectives of an individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    /// Sum of absolute errors over the test set.
    pub sae: f64,
    /// Student-t confidence interval of the absolute-error distribution.
    pub ci: f64,
    /// Number of shots (chromosome length).
    pub n_shots: usize,
}

impl ObjectiveVector {
    pub fn new(sae: f64, ci: f64, n_shots: usize) -> Self {
        ObjectiveVector { sae, ci, n_shots }
    }

    /// The objectives as a plain array, shot count widened to f64.
    pub fn as_array(&self) -> [f64; 3] {
        [self.sae, self.ci, self.n_shots as f64]
    }
}

/// How the mutation probabilities are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MutationScheme {
    /// One operation per mutation event, drawn categorically:
    /// replace 0.5, remove 0.25, append 0.25.
    #[default]
    Categorical,
    /// Independent coin flips: replace at 0.5, then remove at 0.25, then
    /// append at 0.25, each applied to the running result.
    IndependentFlips,
}

/// Knobs of the evolutionary loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Maximum chromosome length at initialization only.
    pub max_init_len: usize,
    pub rng_seed: u64,
    /// Force one zero-shot chromosome into the initial population.
    pub seed_zero_shot: bool,
    pub mutation_scheme: MutationScheme,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 50,
            generations: 20,
            crossover_rate: 0.2,
            mutation_rate: 0.8,
            max_init_len: 8,
            rng_seed: 42,
            seed_zero_shot: false,
            mutation_scheme: MutationScheme::Categorical,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        if self.population_size < 2 {
            return Err(EvolveError::InvalidConfig(format!(
                "population_size must be at least 2, got {}",
                self.population_size
            )));
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(EvolveError::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {rate}"
                )));
            }
        }
        Ok(())
    }

    /// The generator for one of the run's RNG streams (see module docs).
    fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(stream);
        rng
    }
}

/// An individual annotated with the NSGA-II bookkeeping set during sorting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedIndividual {
    pub chromosome: Chromosome,
    pub objectives: ObjectiveVector,
    /// Front index; 0 means non-dominated within the current population.
    pub rank: usize,
    /// Crowding distance within the individual's front; may be infinite.
    pub crowding: f64,
}

/// Pareto dominance with all objectives minimized: `u` dominates `v` when it
/// is no worse everywhere and strictly better somewhere.
pub fn dominates(u: &ObjectiveVector, v: &ObjectiveVector) -> bool {
    let ua = u.as_array();
    let va = v.as_array();
    let mut strictly = false;
    for (a, b) in ua.iter().zip(va.iter()) {
        if a > b {
            return false;
        }
        if a < b {
            strictly = true;
        }
    }
    strictly
}

/// Fast non-dominated sort. Returns fronts of population indices, rank 0
/// first; within a front, indices keep ascending order.
pub fn non_dominated_sort(pop: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    let mut current: Vec<usize> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&pop[i], &pop[j]) {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if dominates(&pop[j], &pop[i]) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
        if domination_count[i] == 0 {
            current.push(i);
        }
    }
    // Indices enter `current` in ascending order for the first front; later
    // fronts are rebuilt sorted to keep the order canonical.
    let mut fronts = Vec::new();
    while !current.is_empty() {
        let mut next: Vec<usize> = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of one front, aligned with input order.
///
/// Boundary members on any objective get infinity; interior members sum
/// `(next - prev) / (max - min)` per objective, and an objective with
/// `max == min` contributes nothing.
pub fn crowding_distance(front: &[ObjectiveVector]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0f64; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for obj in 0..3 {
        let key = |i: usize| front[i].as_array()[obj];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).expect("finite objectives"));
        let min = key(order[0]);
        let max = key(order[n - 1]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if max == min {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if dist[i].is_finite() {
                dist[i] += (key(order[w + 1]) - key(order[w - 1])) / (max - min);
            }
        }
    }
    dist
}

/// Binary tournament: two uniform draws (with replacement); lower rank wins,
/// ties go to the larger crowding distance, then to the first drawn.
pub fn tournament_select<R: Rng>(ranked: &[RankedIndividual], rng: &mut R) -> usize {
    debug_assert!(!ranked.is_empty());
    let a = rng.random_range(0..ranked.len());
    let b = rng.random_range(0..ranked.len());
    let better = ranked[b].rank < ranked[a].rank
        || (ranked[b].rank == ranked[a].rank && ranked[b].crowding > ranked[a].crowding);
    if better {
        b
    } else {
        a
    }
}

/// Deterministic crossover core: cut `a` at `ba` and `b` at `bb`, swap
/// tails, and drop any appended gene already present (first occurrence
/// wins). Exposed so traces with fixed breakpoints stay testable.
pub fn crossover_at(
    a: &Chromosome,
    b: &Chromosome,
    ba: usize,
    bb: usize,
) -> (Chromosome, Chromosome) {
    debug_assert!(ba <= a.len() && bb <= b.len());
    let splice = |head: &[usize], tail: &[usize]| {
        let mut genes: Vec<usize> = head.to_vec();
        for &g in tail {
            if !genes.contains(&g) {
                genes.push(g);
            }
        }
        Chromosome::new(genes)
    };
    (
        splice(&a.genes[..ba], &b.genes[bb..]),
        splice(&b.genes[..bb], &a.genes[ba..]),
    )
}

/// Single-point tail-swap crossover with independent uniform breakpoints in
/// `{0..=|a|}` and `{0..=|b|}`. Zero-length children are legal.
pub fn crossover<R: Rng>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> (Chromosome, Chromosome) {
    let ba = rng.random_range(0..=a.len());
    let bb = rng.random_range(0..=b.len());
    crossover_at(a, b, ba, bb)
}

fn unused_genes(c: &Chromosome, train_size: usize) -> Vec<usize> {
    (0..train_size).filter(|g| !c.genes.contains(g)).collect()
}

/// Append a uniformly chosen unused train index; no-op when every index is
/// already used.
fn mutate_append<R: Rng>(c: &mut Chromosome, train_size: usize, rng: &mut R) {
    let unused = unused_genes(c, train_size);
    if unused.is_empty() {
        return;
    }
    c.genes.push(unused[rng.random_range(0..unused.len())]);
}

/// Remove a uniformly chosen gene; an empty chromosome falls through to
/// append so the event still does something.
fn mutate_remove<R: Rng>(c: &mut Chromosome, train_size: usize, rng: &mut R) {
    if c.is_empty() {
        mutate_append(c, train_size, rng);
        return;
    }
    let pos = rng.random_range(0..c.len());
    c.genes.remove(pos);
}

/// Replace a uniformly chosen gene with a uniformly chosen unused train
/// index. Empty chromosomes fall through to append; a chromosome that
/// already uses the whole pool is left unchanged.
fn mutate_replace<R: Rng>(c: &mut Chromosome, train_size: usize, rng: &mut R) {
    if c.is_empty() {
        mutate_append(c, train_size, rng);
        return;
    }
    let pos = rng.random_range(0..c.len());
    let unused = unused_genes(c, train_size);
    if unused.is_empty() {
        return;
    }
    c.genes[pos] = unused[rng.random_range(0..unused.len())];
}

/// One mutation event following `scheme`. The result never contains
/// duplicates or out-of-range genes.
pub fn mutate_with_scheme<R: Rng>(
    c: &Chromosome,
    train_size: usize,
    scheme: MutationScheme,
    rng: &mut R,
) -> Chromosome {
    debug_assert!(train_size > 0);
    let mut out = c.clone();
    match scheme {
        MutationScheme::Categorical => {
            // Exact quarters: 0,1 -> replace (0.5), 2 -> remove, 3 -> append.
            match rng.random_range(0..4u8) {
                0 | 1 => mutate_replace(&mut out, train_size, rng),
                2 => mutate_remove(&mut out, train_size, rng),
                _ => mutate_append(&mut out, train_size, rng),
            }
        }
        MutationScheme::IndependentFlips => {
            if rng.random_bool(0.5) {
                mutate_replace(&mut out, train_size, rng);
            }
            if rng.random_bool(0.25) {
                mutate_remove(&mut out, train_size, rng);
            }
            if rng.random_bool(0.25) {
                mutate_append(&mut out, train_size, rng);
            }
        }
    }
    out
}

/// One categorical mutation event (the default scheme).
pub fn mutate<R: Rng>(c: &Chromosome, train_size: usize, rng: &mut R) -> Chromosome {
    mutate_with_scheme(c, train_size, MutationScheme::Categorical, rng)
}

/// The initial population: lengths uniform over `{0..=max_init_len}`
/// (capped by the pool size), genes sampled without replacement. Uses RNG
/// stream 0.
pub fn init_population(
    cfg: &EvolutionConfig,
    train_size: usize,
) -> Result<Vec<Chromosome>, EvolveError> {
    cfg.validate()?;
    if train_size == 0 {
        return Err(EvolveError::EmptyTrainPool);
    }
    let mut rng = cfg.stream(0);
    let mut population = Vec::with_capacity(cfg.population_size);
    if cfg.seed_zero_shot {
        population.push(Chromosome::empty());
    }
    while population.len() < cfg.population_size {
        let len = rng.random_range(0..=cfg.max_init_len).min(train_size);
        // Partial Fisher-Yates over the index pool.
        let mut pool: Vec<usize> = (0..train_size).collect();
        let mut genes = Vec::with_capacity(len);
        for _ in 0..len {
            let pick = rng.random_range(0..pool.len());
            genes.push(pool.swap_remove(pick));
        }
        population.push(Chromosome::new(genes));
    }
    Ok(population)
}

/// The generational engine. Construct it from an evaluated population (fresh
/// from [`init_population`] or reloaded from a checkpoint), then call
/// [`Engine::step`] until [`Engine::is_complete`].
pub struct Engine {
    cfg: EvolutionConfig,
    train_size: usize,
    population: Vec<RankedIndividual>,
    next_generation: usize,
}

impl Engine {
    /// Ranks `evaluated` and positions the loop before generation
    /// `next_generation` (0 for a fresh run).
    pub fn new(
        cfg: EvolutionConfig,
        train_size: usize,
        evaluated: Vec<(Chromosome, ObjectiveVector)>,
        next_generation: usize,
    ) -> Result<Self, EvolveError> {
        cfg.validate()?;
        if train_size == 0 {
            return Err(EvolveError::EmptyTrainPool);
        }
        if evaluated.len() != cfg.population_size {
            return Err(EvolveError::InvalidConfig(format!(
                "population has {} members, config says {}",
                evaluated.len(),
                cfg.population_size
            )));
        }
        Ok(Engine {
            cfg,
            train_size,
            population: rank_population(evaluated),
            next_generation,
        })
    }

    pub fn population(&self) -> &[RankedIndividual] {
        &self.population
    }

    /// Index of the generation the next [`Engine::step`] call will run.
    pub fn next_generation(&self) -> usize {
        self.next_generation
    }

    pub fn is_complete(&self) -> bool {
        self.next_generation >= self.cfg.generations
    }

    /// The rank-0 members of the current population.
    pub fn pareto_front(&self) -> Vec<&RankedIndividual> {
        self.population.iter().filter(|m| m.rank == 0).collect()
    }

    /// Runs one generation: breed `population_size` offspring via binary
    /// tournaments (crossover gated per pair, mutation gated per offspring),
    /// evaluate them, then keep the best `population_size` of parents plus
    /// offspring by rank and crowding. Draws only from this generation's RNG
    /// stream, so a resumed run replays identically.
    pub fn step<E>(
        &mut self,
        evaluate: &mut dyn FnMut(&Chromosome) -> Result<ObjectiveVector, E>,
    ) -> Result<(), E> {
        let mut rng = self.cfg.stream(self.next_generation as u64 + 1);
        let mut offspring: Vec<Chromosome> = Vec::with_capacity(self.cfg.population_size);
        while offspring.len() < self.cfg.population_size {
            let pa = tournament_select(&self.population, &mut rng);
            let pb = tournament_select(&self.population, &mut rng);
            let (mut c1, mut c2) = if rng.random_bool(self.cfg.crossover_rate) {
                crossover(
                    &self.population[pa].chromosome,
                    &self.population[pb].chromosome,
                    &mut rng,
                )
            } else {
                (
                    self.population[pa].chromosome.clone(),
                    self.population[pb].chromosome.clone(),
                )
            };
            if rng.random_bool(self.cfg.mutation_rate) {
                c1 = mutate_with_scheme(&c1, self.train_size, self.cfg.mutation_scheme, &mut rng);
            }
            if rng.random_bool(self.cfg.mutation_rate) {
                c2 = mutate_with_scheme(&c2, self.train_size, self.cfg.mutation_scheme, &mut rng);
            }
            offspring.push(c1);
            if offspring.len() < self.cfg.population_size {
                offspring.push(c2);
            }
        }

        let mut combined: Vec<(Chromosome, ObjectiveVector)> = self
            .population
            .iter()
            .map(|m| (m.chromosome.clone(), m.objectives))
            .collect();
        for c in offspring {
            let objectives = evaluate(&c)?;
            combined.push((c, objectives));
        }

        self.population = environmental_selection(combined, self.cfg.population_size);
        self.next_generation += 1;
        Ok(())
    }
}

/// Ranks a whole population: non-dominated sort for ranks, crowding within
/// each front.
fn rank_population(evaluated: Vec<(Chromosome, ObjectiveVector)>) -> Vec<RankedIndividual> {
    let objectives: Vec<ObjectiveVector> = evaluated.iter().map(|(_, o)| *o).collect();
    let fronts = non_dominated_sort(&objectives);
    let mut ranked: Vec<Option<RankedIndividual>> = evaluated
        .into_iter()
        .map(|(chromosome, objectives)| {
            Some(RankedIndividual {
                chromosome,
                objectives,
                rank: 0,
                crowding: 0.0,
            })
        })
        .collect();
    let mut out: Vec<RankedIndividual> = Vec::with_capacity(ranked.len());
    for (rank, front) in fronts.iter().enumerate() {
        let front_objs: Vec<ObjectiveVector> = front.iter().map(|&i| objectives[i]).collect();
        let crowd = crowding_distance(&front_objs);
        for (&i, &c) in front.iter().zip(crowd.iter()) {
            let mut m = ranked[i].take().expect("each index appears once");
            m.rank = rank;
            m.crowding = c;
            out.push(m);
        }
    }
    out
}

/// (mu+lambda) truncation: fill whole fronts while they fit, then take the
/// least crowded members of the boundary front (stable order on ties).
fn environmental_selection(
    combined: Vec<(Chromosome, ObjectiveVector)>,
    target: usize,
) -> Vec<RankedIndividual> {
    let objectives: Vec<ObjectiveVector> = combined.iter().map(|(_, o)| *o).collect();
    let fronts = non_dominated_sort(&objectives);
    let mut chosen: Vec<usize> = Vec::with_capacity(target);
    for front in fronts {
        if chosen.len() == target {
            break;
        }
        if chosen.len() + front.len() <= target {
            chosen.extend(front);
            continue;
        }
        let front_objs: Vec<ObjectiveVector> = front.iter().map(|&i| objectives[i]).collect();
        let crowd = crowding_distance(&front_objs);
        let mut order: Vec<usize> = (0..front.len()).collect();
        // Stable sort keeps ascending-index order among equal distances.
        order.sort_by(|&a, &b| {
            crowd[b]
                .partial_cmp(&crowd[a])
                .expect("crowding values compare")
        });
        for &w in order.iter().take(target - chosen.len()) {
            chosen.push(front[w]);
        }
    }
    // Survivors are re-ranked relative to each other so that rank 0 is
    // exactly the non-dominated set of the new population.
    let mut members: Vec<Option<(Chromosome, ObjectiveVector)>> =
        combined.into_iter().map(Some).collect();
    rank_population(
        chosen
            .into_iter()
            .map(|i| members[i].take().expect("chosen indices are distinct"))
            .collect(),
    )
}

/// End-to-end generational run with an infallible evaluator: initialize,
/// evaluate, run `cfg.generations` steps, and return the final ranked
/// population (rank 0 = final Pareto front).
pub fn evolve_run(
    cfg: &EvolutionConfig,
    train_size: usize,
    mut evaluate: impl FnMut(&Chromosome) -> ObjectiveVector,
) -> Result<Vec<RankedIndividual>, EvolveError> {
    let initial = init_population(cfg, train_size)?;
    let evaluated: Vec<(Chromosome, ObjectiveVector)> = initial
        .into_iter()
        .map(|c| {
            let o = evaluate(&c);
            (c, o)
        })
        .collect();
    let mut engine = Engine::new(cfg.clone(), train_size, evaluated, 0)?;
    while !engine.is_complete() {
        let Ok(()) = engine.step::<std::convert::Infallible>(&mut |c| Ok(evaluate(c)));
    }
    Ok(engine.population.clone())
}
