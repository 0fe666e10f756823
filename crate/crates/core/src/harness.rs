//! Experiment plumbing shared by the CLI and the test suites: run
//! configuration, per-generation CSV records, and the brute-force layout
//! oracle.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evolution::{EvolutionConfig, EvolutionError, Evolver, FitnessMode, RunReport};
use crate::exec::{self, ExecError};
use crate::genome::{self, AccessGenes, GenomeError, LayoutGenome};
use crate::storage::{self, BaseTable, StorageError};
use crate::workload::{self, WorkloadError, WorkloadPhase, WorkloadSpec};

/// Header of the per-generation CSV.
pub const RECORD_HEADER: [&str; 8] = [
    "generation",
    "candidate_id",
    "rank",
    "genome",
    "mean_cost",
    "query_count",
    "materialization_cost",
    "best_flag",
];

/// Queries timed per layout by the measured-mode oracle.
pub const DEFAULT_ORACLE_SAMPLES: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// True for errors caused by invalid flags or input files rather than
    /// failures while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_)
                | HarnessError::Workload(_)
                | HarnessError::Evolution(EvolutionError::Config(_))
                | HarnessError::Genome(GenomeError::TooManyProperties(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkloadSource {
    Builtin,
    File(PathBuf),
}

impl WorkloadSource {
    pub fn load(&self, n_props: usize, seed: u64) -> Result<WorkloadSpec, WorkloadError> {
        let spec = match self {
            WorkloadSource::Builtin => workload::builtin_workload(n_props, seed)?,
            WorkloadSource::File(path) => workload::parse_workload(path)?.with_seed(seed),
        };
        spec.validate(n_props)?;
        Ok(spec)
    }
}

impl std::str::FromStr for WorkloadSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "builtin" {
            WorkloadSource::Builtin
        } else {
            WorkloadSource::File(PathBuf::from(s))
        })
    }
}

/// Independent seed for one consumer of randomness, derived from the run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const DATA_STREAM: u64 = 1;
const WORKLOAD_STREAM: u64 = 2;
const EVOLUTION_STREAM: u64 = 3;

/// Seed `gen-data` and measured runs use to generate the base table.
pub fn dataset_seed(seed: u64) -> u64 {
    derive_seed(seed, DATA_STREAM)
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub rows: usize,
    pub props: usize,
    pub seed: u64,
    pub evolution: EvolutionConfig,
    /// Stop after this many generations; `None` consumes the whole workload.
    pub generations: Option<usize>,
    pub workload: WorkloadSource,
    pub fitness: FitnessMode,
    /// CSV dataset for measured mode; generated from the seed when absent.
    pub data: Option<PathBuf>,
    pub memory_budget_bytes: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rows: 1_000_000,
            props: 7,
            seed: 0,
            evolution: EvolutionConfig::default(),
            generations: None,
            workload: WorkloadSource::Builtin,
            fitness: FitnessMode::Simulated,
            data: None,
            memory_budget_bytes: storage::DEFAULT_MEMORY_BUDGET_BYTES,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_owned()));
        if self.rows == 0 {
            return fail("--rows must be at least 1");
        }
        if self.props == 0 {
            return fail("--props must be at least 1");
        }
        let e = &self.evolution;
        if e.pop_size == 0 {
            return fail("--pop-size must be at least 1");
        }
        if !(e.elim_frac > 0.0 && e.elim_frac < 1.0) {
            return fail("--elim-frac must be strictly between 0 and 1");
        }
        if e.window == 0 || !e.window.is_multiple_of(e.pop_size) {
            return fail("--window must be a positive multiple of --pop-size");
        }
        if !(0.0..=1.0).contains(&e.p_layout) {
            return fail("--p-layout must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&e.p_crossover) {
            return fail("--p-crossover must be in [0, 1]");
        }
        if self.props < 2 && e.p_layout > 0.0 {
            return fail("--props 1 admits no layout mutation; pass --p-layout 0");
        }
        Ok(())
    }

    pub fn workload_spec(&self) -> Result<WorkloadSpec, HarnessError> {
        Ok(self
            .workload
            .load(self.props, derive_seed(self.seed, WORKLOAD_STREAM))?)
    }

    /// The query stream the run consumes, truncated to `generations` windows.
    pub fn query_stream(&self) -> Result<Vec<exec::Query>, HarnessError> {
        let spec = self.workload_spec()?;
        let mut stream = workload::generate_stream(&spec, self.props)?;
        if let Some(g) = self.generations {
            stream.truncate(g.saturating_mul(self.evolution.window));
        }
        Ok(stream)
    }

    pub fn base_table(&self) -> Result<BaseTable, HarnessError> {
        let base = match &self.data {
            Some(path) => BaseTable::load_csv(path, self.memory_budget_bytes)?,
            None => BaseTable::generate(
                self.rows,
                self.props,
                dataset_seed(self.seed),
                self.memory_budget_bytes,
            )?,
        };
        if base.n_props() != self.props {
            return Err(HarnessError::Config(format!(
                "--props is {} but the dataset has {} properties",
                self.props,
                base.n_props()
            )));
        }
        Ok(base)
    }

    pub fn evolver(&self) -> Result<Evolver, HarnessError> {
        let seed = derive_seed(self.seed, EVOLUTION_STREAM);
        Ok(match self.fitness {
            FitnessMode::Simulated => {
                Evolver::simulated(self.evolution.clone(), self.rows, self.props, seed)?
            }
            FitnessMode::Measured => {
                Evolver::measured(self.evolution.clone(), Arc::new(self.base_table()?), seed)?
            }
        })
    }
}

/// Validates `config`, builds the workload and population, and runs to the
/// end of the stream.
pub fn run_experiment(config: &RunConfig) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let stream = config.query_stream()?;
    Ok(config.evolver()?.run(&stream)?)
}

/// `A` for the fittest, then `B`, ..., `Z`, `AA`, `AB`, ...
pub fn rank_label(mut rank: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (rank % 26) as u8);
        if rank < 26 {
            break;
        }
        rank = rank / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: u64,
    pub candidate_id: u64,
    pub rank: String,
    pub genome: String,
    pub mean_cost: f64,
    pub query_count: usize,
    pub materialization_cost: f64,
    pub best_flag: bool,
}

pub fn generation_records(report: &RunReport) -> Vec<GenerationRecord> {
    report
        .generations
        .iter()
        .flat_map(|g| {
            g.ranked.iter().enumerate().map(move |(i, m)| GenerationRecord {
                generation: g.generation,
                candidate_id: m.id.0,
                rank: rank_label(i),
                genome: m.genome.to_string(),
                mean_cost: m.mean_cost,
                query_count: m.query_count,
                materialization_cost: m.materialization_cost,
                best_flag: i == 0,
            })
        })
        .collect()
}

pub fn write_records_csv<W: Write>(out: W, records: &[GenerationRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.generation.to_string(),
            r.candidate_id.to_string(),
            r.rank.clone(),
            r.genome.clone(),
            r.mean_cost.to_string(),
            r.query_count.to_string(),
            r.materialization_cost.to_string(),
            u8::from(r.best_flag).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Expected simulated cost of one query of `phase` on `layout`.
pub fn phase_model_cost(phase: &WorkloadPhase, layout: &LayoutGenome, n_rows: usize) -> f64 {
    let genes = AccessGenes::default();
    let weighted: f64 = phase
        .templates
        .iter()
        .map(|t| t.weight * exec::simulated_cost(&t.query(), layout, &genes, n_rows))
        .sum();
    weighted / phase.total_weight()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEntry {
    pub layout: LayoutGenome,
    pub cost: f64,
}

/// Every layout of the property set with its cost, cheapest first.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub entries: Vec<OracleEntry>,
}

impl OracleReport {
    fn from_entries(mut entries: Vec<OracleEntry>) -> Self {
        entries.sort_by(|a, b| a.cost.total_cmp(&b.cost));
        Self { entries }
    }

    pub fn evaluated(&self) -> usize {
        self.entries.len()
    }

    pub fn min_cost(&self) -> f64 {
        self.entries[0].cost
    }

    /// All layouts sharing the minimum cost.
    pub fn ties(&self) -> &[OracleEntry] {
        let min = self.min_cost();
        let n = self.entries.iter().take_while(|e| e.cost == min).count();
        &self.entries[..n]
    }

    pub fn is_optimal(&self, layout: &LayoutGenome) -> bool {
        self.ties().iter().any(|e| &e.layout == layout)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "layout", "cost", "optimal"])?;
        let min = self.min_cost();
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                e.layout.to_string(),
                e.cost.to_string(),
                u8::from(e.cost == min).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact model cost of every layout for `phase`.
pub fn oracle_simulated(
    phase: &WorkloadPhase,
    n_props: usize,
    n_rows: usize,
) -> Result<OracleReport, HarnessError> {
    let entries = genome::enumerate_layouts(n_props)?
        .into_iter()
        .map(|layout| OracleEntry {
            cost: phase_model_cost(phase, &layout, n_rows),
            layout,
        })
        .collect();
    Ok(OracleReport::from_entries(entries))
}

/// Mean wall time of `samples` queries drawn from `phase`, per layout.
/// Every layout is timed on the same queries.
pub fn oracle_measured(
    phase: &WorkloadPhase,
    base: &BaseTable,
    samples: usize,
    genes: &AccessGenes,
    seed: u64,
) -> Result<OracleReport, HarnessError> {
    let sampled = WorkloadSpec {
        phases: vec![WorkloadPhase {
            n_queries: samples.max(1),
            ..phase.clone()
        }],
        seed,
    };
    let queries = workload::generate_stream(&sampled, base.n_props())?;
    let mut entries = Vec::new();
    for layout in genome::enumerate_layouts(base.n_props())? {
        let materialized = storage::materialize(base, &layout)?;
        let mut total = 0.0;
        for q in &queries {
            total += exec::execute(q, &materialized, genes)?.elapsed_ns;
        }
        entries.push(OracleEntry {
            layout,
            cost: total / queries.len() as f64,
        });
    }
    Ok(OracleReport::from_entries(entries))
}
