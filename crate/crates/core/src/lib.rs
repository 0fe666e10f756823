//! An in-memory storage engine whose physical layout evolves with the
//! workload.
//!
//! Data is born in key-value form (one row-major payload per record). A small
//! population of candidate architectures, each a vertical partition of the
//! properties plus a choice of scan strategy, answers incoming queries in
//! turn. Periodically the slowest candidates are eliminated and replaced by
//! mutated copies of the fastest, so the population drifts toward the layout
//! that co-locates exactly what the queries read together.

pub mod evolution;
pub mod exec;
pub mod genome;
pub mod harness;
pub mod storage;
pub mod workload;

pub use evolution::{
    Candidate, EvolutionConfig, EvolutionError, Evolver, FitnessMode, GenerationReport, Origin,
    PerfStats, Population, RunReport,
};
pub use exec::{CandidateId, ExecError, Execution, FitnessSample, Query, QueryResult};
pub use genome::{
    AccessGenes, BatchLadder, Genome, GenomeError, Granularity, LayoutGenome, MutationConfig,
    PropertyId, SelectionStrategy,
};
pub use harness::{GenerationRecord, HarnessError, OracleReport, RunConfig, WorkloadSource};
pub use storage::{
    BaseTable, LayoutHandle, LayoutStore, MaterializedLayout, ReadAccounting, StorageError,
};
pub use workload::{QueryTemplate, WorkloadError, WorkloadPhase, WorkloadSpec};
