#![allow(dead_code)]

use evostore_core::genome::{self, AccessGenes, Granularity, LayoutGenome, SelectionStrategy};
use evostore_core::BaseTable;
use proptest::prelude::*;

/// Groups from a label per property; labels need not be contiguous.
pub fn groups_from_labels(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (p, &l) in labels.iter().enumerate() {
        match groups.iter_mut().find(|(label, _)| *label == l) {
            Some((_, g)) => g.push(p),
            None => groups.push((l, vec![p])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

pub fn layout_for(n_props: usize) -> impl Strategy<Value = LayoutGenome> {
    prop::collection::vec(0..n_props, n_props)
        .prop_map(|labels| genome::canonicalize(&groups_from_labels(&labels)).unwrap())
}

pub fn layout() -> impl Strategy<Value = LayoutGenome> {
    (1usize..=9).prop_flat_map(layout_for)
}

pub fn genes_for(n_rows: usize) -> impl Strategy<Value = AccessGenes> {
    (any::<bool>(), prop::option::of(1..=n_rows)).prop_map(|(pred, batch)| {
        AccessGenes::new(
            if pred { SelectionStrategy::Predicated } else { SelectionStrategy::Branching },
            batch.map_or(Granularity::Full, Granularity::Batched),
        )
    })
}

pub fn value() -> impl Strategy<Value = i64> {
    prop_oneof![
        4 => 0..1i64 << 32,
        1 => -4i64..=4,
        1 => any::<i64>(),
        1 => Just(i64::MIN),
        1 => Just(i64::MAX),
    ]
}

pub fn table(max_rows: usize, max_props: usize) -> impl Strategy<Value = BaseTable> {
    (1..=max_rows, 1..=max_props).prop_flat_map(|(rows, props)| {
        prop::collection::vec(value(), rows * props)
            .prop_map(move |payload| BaseTable::from_payload(props, payload).unwrap())
    })
}

/// Bell numbers from the Bell triangle.
pub fn bell(n: usize) -> usize {
    let mut row = vec![1usize];
    for _ in 1..n {
        let mut next = vec![*row.last().unwrap()];
        for &x in &row {
            next.push(next.last().unwrap() + x);
        }
        row = next;
    }
    if n == 0 {
        1
    } else {
        *row.last().unwrap()
    }
}
