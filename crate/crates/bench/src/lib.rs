//! Fixtures shared by the criterion benches.

use evostore_core::genome::{AccessGenes, Granularity, LayoutGenome, SelectionStrategy};
use evostore_core::storage::{self, BaseTable};

pub const BENCH_ROWS: usize = 1_000_000;
pub const BENCH_PROPS: usize = 7;

pub fn base_table(rows: usize, props: usize) -> BaseTable {
    BaseTable::generate(rows, props, 0xbe4c, storage::DEFAULT_MEMORY_BUDGET_BYTES)
        .expect("bench table fits the default budget")
}

/// Key-value, pure column store, and a hybrid split.
pub fn layouts(props: usize) -> Vec<(&'static str, LayoutGenome)> {
    let half = props.div_ceil(2);
    let hybrid = LayoutGenome::from_groups([(0..half).collect::<Vec<_>>(), (half..props).collect()])
        .expect("two-group partition");
    vec![
        ("key_value", LayoutGenome::key_value(props)),
        ("column", LayoutGenome::column_store(props)),
        ("hybrid", hybrid),
    ]
}

pub fn access_variants() -> Vec<(&'static str, AccessGenes)> {
    use Granularity::{Batched, Full};
    use SelectionStrategy::{Branching, Predicated};
    vec![
        ("branching_full", AccessGenes::new(Branching, Full)),
        ("predicated_full", AccessGenes::new(Predicated, Full)),
        ("branching_batched", AccessGenes::new(Branching, Batched(4096))),
        ("predicated_batched", AccessGenes::new(Predicated, Batched(4096))),
    ]
}
