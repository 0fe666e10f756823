//! Generation loop: select the fittest, refill the population with clones,
//! mutate the clones.
//!
//! Queries are assigned round-robin so every live candidate answers the same
//! number of queries per window. At each window boundary the population is
//! ranked by mean cost (ties to the lower id), the worst `elim_frac` are
//! eliminated and their layouts dropped, and survivors are carried over
//! unchanged alongside mutated copies of themselves.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{self, CandidateId, ExecError, FitnessSample, Query};
use crate::genome::{self, AccessGenes, Genome, GenomeError, LayoutGenome, MutationConfig};
use crate::storage::{BaseTable, LayoutHandle, LayoutStore, ReadAccounting, StorageError};

pub const DEFAULT_POP_SIZE: usize = 4;
pub const DEFAULT_ELIM_FRAC: f64 = 0.5;
pub const DEFAULT_WINDOW: usize = 40;

#[derive(Debug, thiserror::Error)]
pub enum EvolutionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("candidate {0} has no fitness samples in this window")]
    MissingStats(CandidateId),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessMode {
    /// Wall-clock nanoseconds of real scans.
    Measured,
    /// Deterministic bytes-touched model; nothing is materialized.
    Simulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub pop_size: usize,
    pub elim_frac: f64,
    /// Queries between selection rounds; a multiple of `pop_size`.
    pub window: usize,
    pub p_layout: f64,
    pub p_crossover: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            pop_size: DEFAULT_POP_SIZE,
            elim_frac: DEFAULT_ELIM_FRAC,
            window: DEFAULT_WINDOW,
            p_layout: genome::DEFAULT_P_LAYOUT,
            p_crossover: 0.0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let fail = |m: String| Err(EvolutionError::Config(m));
        if self.pop_size == 0 {
            return fail("pop-size must be at least 1".into());
        }
        if !(self.elim_frac > 0.0 && self.elim_frac < 1.0) {
            return fail(format!("elim-frac must be in (0, 1), got {}", self.elim_frac));
        }
        if self.window == 0 || !self.window.is_multiple_of(self.pop_size) {
            return fail(format!(
                "window ({}) must be a positive multiple of pop-size ({})",
                self.window, self.pop_size
            ));
        }
        for (name, p) in [("p-layout", self.p_layout), ("p-crossover", self.p_crossover)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// How a candidate entered the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Initial,
    /// Mutated copy of a surviving parent.
    CloneOf(CandidateId),
    /// Mutated crossover child of two surviving parents.
    CrossoverOf(CandidateId, CandidateId),
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub id: CandidateId,
    pub genome: Genome,
    pub layout: Option<LayoutHandle>,
    pub samples: Vec<FitnessSample>,
    pub born_generation: u64,
    pub origin: Origin,
    /// Cost of building this candidate's layout, charged in its birth generation.
    pub materialization_cost: f64,
}

impl Candidate {
    fn new(id: CandidateId, genome: Genome, born_generation: u64, origin: Origin) -> Self {
        Self {
            id,
            genome,
            layout: None,
            samples: Vec::new(),
            born_generation,
            origin,
            materialization_cost: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    pub candidates: Vec<Candidate>,
    pub generation: u64,
}

impl Population {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, id: CandidateId) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateStats {
    pub id: CandidateId,
    pub query_count: usize,
    pub total_cost: f64,
}

impl CandidateStats {
    pub fn mean_cost(&self) -> Option<f64> {
        (self.query_count > 0).then(|| self.total_cost / self.query_count as f64)
    }
}

/// Per-candidate fitness over the current window.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfStats {
    pub entries: Vec<CandidateStats>,
}

impl PerfStats {
    pub fn from_population(pop: &Population) -> Self {
        Self {
            entries: pop
                .candidates
                .iter()
                .map(|c| CandidateStats {
                    id: c.id,
                    query_count: c.samples.len(),
                    total_cost: c.samples.iter().map(|s| s.cost).sum(),
                })
                .collect(),
        }
    }

    pub fn get(&self, id: CandidateId) -> Option<&CandidateStats> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Round-robin query assignment.
pub fn assign_query(pop: &Population, query_index: usize) -> CandidateId {
    pop.candidates[query_index % pop.len()].id
}

/// Number of candidates kept after eliminating `elim_frac`, never below one.
pub fn survivor_count(pop_size: usize, elim_frac: f64) -> usize {
    // the epsilon absorbs float error such as (1 - 0.3) * 10 = 7.000000000000001
    let keep = ((1.0 - elim_frac) * pop_size as f64 - 1e-9).ceil() as usize;
    keep.clamp(1, pop_size)
}

/// Candidates ordered fittest first: ascending mean cost, then ascending id.
pub fn rank(pop: &Population, stats: &PerfStats) -> Result<Vec<(CandidateId, f64)>, EvolutionError> {
    let mut ranked = pop
        .candidates
        .iter()
        .map(|c| {
            stats
                .get(c.id)
                .and_then(CandidateStats::mean_cost)
                .map(|m| (c.id, m))
                .ok_or(EvolutionError::MissingStats(c.id))
        })
        .collect::<Result<Vec<_>, _>>()?;
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Ids of the surviving parents, fittest first.
pub fn select_parents(
    pop: &Population,
    stats: &PerfStats,
    elim_frac: f64,
) -> Result<Vec<CandidateId>, EvolutionError> {
    let keep = survivor_count(pop.len(), elim_frac);
    Ok(rank(pop, stats)?
        .into_iter()
        .take(keep)
        .map(|(id, _)| id)
        .collect())
}

/// Allocates candidate ids for one run.
#[derive(Debug, Clone, Default)]
pub struct IdSource(u64);

impl IdSource {
    pub fn starting_at(next: u64) -> Self {
        Self(next)
    }

    pub fn next_id(&mut self) -> CandidateId {
        let id = CandidateId(self.0);
        self.0 += 1;
        id
    }
}

/// Parents (in rank order) followed by offspring slots. Slot `k` clones
/// parent `k mod |parents|`, or with probability `p_crossover` holds a
/// crossover child of two distinct parents.
pub fn generate_population<R: Rng + ?Sized>(
    parents: Vec<Candidate>,
    pop_size: usize,
    generation: u64,
    ids: &mut IdSource,
    p_crossover: f64,
    rng: &mut R,
) -> Result<Population, EvolutionError> {
    if parents.is_empty() || parents.len() > pop_size {
        return Err(EvolutionError::Config(format!(
            "{} parents for a population of {pop_size}",
            parents.len()
        )));
    }
    let n_parents = parents.len();
    let mut candidates = parents;
    for slot in 0..pop_size - n_parents {
        let crossover = n_parents >= 2 && p_crossover > 0.0 && rng.gen_bool(p_crossover);
        let child = if crossover {
            let picks = sample(rng, n_parents, 2);
            let (a, b) = (&candidates[picks.index(0)], &candidates[picks.index(1)]);
            let genome = genome::crossover(&a.genome, &b.genome, rng)?;
            Candidate::new(ids.next_id(), genome, generation, Origin::CrossoverOf(a.id, b.id))
        } else {
            let source = &candidates[slot % n_parents];
            Candidate::new(
                ids.next_id(),
                source.genome.clone(),
                generation,
                Origin::CloneOf(source.id),
            )
        };
        candidates.push(child);
    }
    Ok(Population {
        candidates,
        generation,
    })
}

/// Mutates every member after the first `n_parents`.
pub fn mutate_offspring<R: Rng + ?Sized>(
    n_parents: usize,
    mut next_gen: Population,
    config: &MutationConfig,
    rng: &mut R,
) -> Result<Population, EvolutionError> {
    for child in next_gen.candidates.iter_mut().skip(n_parents) {
        child.genome = genome::mutate(&child.genome, config, rng)?;
        child.layout = None;
    }
    Ok(next_gen)
}

/// A candidate as it stood when its generation was ranked.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedMember {
    pub id: CandidateId,
    pub genome: Genome,
    pub origin: Origin,
    pub born_generation: u64,
    pub mean_cost: f64,
    pub query_count: usize,
    pub materialization_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub generation: u64,
    /// Fittest first.
    pub ranked: Vec<RankedMember>,
}

impl GenerationReport {
    pub fn best(&self) -> &RankedMember {
        &self.ranked[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberSnapshot {
    pub id: CandidateId,
    pub genome: Genome,
    pub origin: Origin,
}

fn snapshot(pop: &Population) -> Vec<MemberSnapshot> {
    pop.candidates
        .iter()
        .map(|c| MemberSnapshot {
            id: c.id,
            genome: c.genome.clone(),
            origin: c.origin,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub initial: Vec<MemberSnapshot>,
    pub generations: Vec<GenerationReport>,
    /// Population after the last selection round (not yet evaluated).
    pub final_population: Vec<MemberSnapshot>,
    pub base_reads: ReadAccounting,
}

enum Backend {
    Simulated { n_rows: usize, n_props: usize },
    Measured { base: Arc<BaseTable>, store: LayoutStore },
}

/// Owns a population and drives it through the generation loop.
pub struct Evolver {
    config: EvolutionConfig,
    mutation: MutationConfig,
    backend: Backend,
    population: Population,
    ids: IdSource,
    rng: ChaCha8Rng,
}

impl Evolver {
    /// Model-only evolution over `n_rows` x `n_props` records.
    pub fn simulated(
        config: EvolutionConfig,
        n_rows: usize,
        n_props: usize,
        seed: u64,
    ) -> Result<Self, EvolutionError> {
        Self::new(config, Backend::Simulated { n_rows, n_props }, seed)
    }

    /// Evolution timed against real layouts of `base`.
    pub fn measured(
        config: EvolutionConfig,
        base: Arc<BaseTable>,
        seed: u64,
    ) -> Result<Self, EvolutionError> {
        Self::new(
            config,
            Backend::Measured {
                base,
                store: LayoutStore::new(),
            },
            seed,
        )
    }

    fn new(config: EvolutionConfig, backend: Backend, seed: u64) -> Result<Self, EvolutionError> {
        config.validate()?;
        let (n_rows, n_props) = match &backend {
            Backend::Simulated { n_rows, n_props } => (*n_rows, *n_props),
            Backend::Measured { base, .. } => (base.n_rows(), base.n_props()),
        };
        if n_rows == 0 || n_props == 0 {
            return Err(EvolutionError::Config("table must have rows and properties".into()));
        }
        if n_props < 2 && config.p_layout > 0.0 {
            return Err(EvolutionError::Config(
                "a single property admits no layout mutation; set p-layout to 0".into(),
            ));
        }
        let mut mutation = MutationConfig::for_rows(n_rows);
        mutation.p_layout = config.p_layout;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids = IdSource::default();

        // The data is born key-value; the rest of generation 0 are its mutants.
        let origin = Genome::new(LayoutGenome::key_value(n_props), AccessGenes::default());
        let mut candidates = vec![Candidate::new(ids.next_id(), origin.clone(), 0, Origin::Initial)];
        for _ in 1..config.pop_size {
            let genome = genome::mutate(&origin, &mutation, &mut rng)?;
            candidates.push(Candidate::new(ids.next_id(), genome, 0, Origin::Initial));
        }

        let mut evolver = Self {
            config,
            mutation,
            backend,
            population: Population {
                candidates,
                generation: 0,
            },
            ids,
            rng,
        };
        evolver.materialize_pending()?;
        Ok(evolver)
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn mode(&self) -> FitnessMode {
        match self.backend {
            Backend::Simulated { .. } => FitnessMode::Simulated,
            Backend::Measured { .. } => FitnessMode::Measured,
        }
    }

    pub fn n_props(&self) -> usize {
        match &self.backend {
            Backend::Simulated { n_props, .. } => *n_props,
            Backend::Measured { base, .. } => base.n_props(),
        }
    }

    /// Live layouts in measured mode; `None` when simulating.
    pub fn store(&self) -> Option<&LayoutStore> {
        match &self.backend {
            Backend::Measured { store, .. } => Some(store),
            Backend::Simulated { .. } => None,
        }
    }

    fn materialize_pending(&mut self) -> Result<(), EvolutionError> {
        let generation = self.population.generation;
        let pending: Vec<usize> = (0..self.population.len())
            .filter(|&i| self.population.candidates[i].born_generation == generation)
            .collect();
        if pending.is_empty() {
            return Ok(());
        }
        match &mut self.backend {
            Backend::Simulated { n_rows, n_props } => {
                let bytes = (*n_rows * *n_props * 8) as f64;
                for &i in &pending {
                    self.population.candidates[i].materialization_cost = bytes;
                }
            }
            Backend::Measured { base, store } => {
                let layouts: Vec<LayoutGenome> = pending
                    .iter()
                    .map(|&i| self.population.candidates[i].genome.layout.clone())
                    .collect();
                let start = Instant::now();
                let handles = store.materialize_many(base, &layouts)?;
                let share = start.elapsed().as_nanos() as f64 / handles.len() as f64;
                for (&i, handle) in pending.iter().zip(handles) {
                    let c = &mut self.population.candidates[i];
                    c.layout = Some(handle);
                    c.materialization_cost = share;
                }
            }
        }
        Ok(())
    }

    /// Runs `query` on its round-robin candidate and records the sample.
    pub fn observe(&mut self, query_index: usize, query: &Query) -> Result<FitnessSample, EvolutionError> {
        let slot = query_index % self.population.len();
        let candidate = &self.population.candidates[slot];
        let cost = match &self.backend {
            Backend::Simulated { n_rows, n_props } => {
                query.validate(*n_props)?;
                exec::simulated_cost(query, &candidate.genome.layout, &candidate.genome.access, *n_rows)
            }
            Backend::Measured { store, .. } => {
                let handle = candidate.layout.ok_or(ExecError::LayoutDropped)?;
                exec::execute_handle(store, handle, query, &candidate.genome.access)?.elapsed_ns
            }
        };
        let sample = FitnessSample {
            cost,
            query: query.clone(),
            candidate_id: candidate.id,
        };
        self.population.candidates[slot].samples.push(sample.clone());
        Ok(sample)
    }

    /// One selection round: rank, eliminate, refill, mutate, materialize.
    pub fn evolve(&mut self) -> Result<GenerationReport, EvolutionError> {
        let stats = PerfStats::from_population(&self.population);
        let ranked = rank(&self.population, &stats)?;
        let report = GenerationReport {
            generation: self.population.generation,
            ranked: ranked
                .iter()
                .map(|&(id, mean_cost)| {
                    let c = self.population.get(id).expect("ranked from population");
                    RankedMember {
                        id,
                        genome: c.genome.clone(),
                        origin: c.origin,
                        born_generation: c.born_generation,
                        mean_cost,
                        query_count: c.samples.len(),
                        materialization_cost: c.materialization_cost,
                    }
                })
                .collect(),
        };

        let keep = survivor_count(self.population.len(), self.config.elim_frac);
        let mut current = std::mem::take(&mut self.population.candidates);
        let mut parents = Vec::with_capacity(keep);
        for &(id, _) in &ranked[..keep] {
            let pos = current.iter().position(|c| c.id == id).expect("ranked id");
            let mut parent = current.swap_remove(pos);
            parent.samples.clear();
            parent.materialization_cost = 0.0;
            parents.push(parent);
        }
        if let Backend::Measured { store, .. } = &mut self.backend {
            for eliminated in &current {
                if let Some(handle) = eliminated.layout {
                    store.drop_layout(handle);
                }
            }
        }

        let generation = self.population.generation + 1;
        let next = generate_population(
            parents,
            self.config.pop_size,
            generation,
            &mut self.ids,
            self.config.p_crossover,
            &mut self.rng,
        )?;
        self.population = mutate_offspring(keep, next, &self.mutation, &mut self.rng)?;
        self.materialize_pending()?;
        Ok(report)
    }

    /// Feeds `queries` through the population, evolving after every full
    /// window. A trailing partial window is discarded.
    pub fn run(mut self, queries: &[Query]) -> Result<RunReport, EvolutionError> {
        let n_props = self.n_props();
        for q in queries {
            q.validate(n_props)?;
        }
        let initial = snapshot(&self.population);
        let mut generations = Vec::with_capacity(queries.len() / self.config.window);
        for window in queries.chunks_exact(self.config.window) {
            for (i, q) in window.iter().enumerate() {
                self.observe(i, q)?;
            }
            generations.push(self.evolve()?);
        }
        let base_reads = self.store().map(LayoutStore::accounting).unwrap_or_default();
        Ok(RunReport {
            initial,
            generations,
            final_population: snapshot(&self.population),
            base_reads,
        })
    }
}
