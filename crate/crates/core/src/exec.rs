//! Scan-select-aggregate execution over materialized layouts.
//!
//! A query filters on `value(filter) < threshold` and sums every accessed
//! property over the selected rows. The access genes pick one of four
//! kernels: fused row-at-a-time or batch-at-a-time, each with either a
//! branch per row or a branch-free mask.

use std::fmt;
use std::time::Instant;

use crate::genome::{AccessGenes, Granularity, LayoutGenome, PropertyId, SelectionStrategy};
use crate::storage::{BaseTable, LayoutHandle, LayoutStore, MaterializedLayout, StorageError};

const VALUE_BYTES: f64 = 8.0;
const SELECTIVITY_SCALE: f64 = 4_294_967_296.0; // 2^32, the generator's value range

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("layout dropped")]
    LayoutDropped,
}

impl From<StorageError> for ExecError {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::LayoutDropped => ExecError::LayoutDropped,
            other => ExecError::InvalidQuery(other.to_string()),
        }
    }
}

/// Identity of a candidate within one evolution run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CandidateId(pub u64);

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Threshold giving expected selectivity `s` on values uniform in `[0, 2^32)`.
pub fn threshold_for(selectivity: f64) -> i64 {
    (selectivity * SELECTIVITY_SCALE).floor() as i64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    accessed: Vec<PropertyId>,
    filter: PropertyId,
    threshold: i64,
    selectivity: f64,
}

impl Query {
    pub fn new(
        accessed: impl IntoIterator<Item = usize>,
        filter: usize,
        threshold: i64,
    ) -> Result<Self, ExecError> {
        let mut accessed: Vec<PropertyId> = accessed.into_iter().map(PropertyId).collect();
        accessed.sort_unstable();
        accessed.dedup();
        if accessed.is_empty() {
            return Err(ExecError::InvalidQuery("no accessed properties".into()));
        }
        let filter = PropertyId(filter);
        if !accessed.contains(&filter) {
            return Err(ExecError::InvalidQuery(format!(
                "filter property {filter} is not accessed"
            )));
        }
        Ok(Self {
            accessed,
            filter,
            threshold,
            selectivity: (threshold as f64 / SELECTIVITY_SCALE).clamp(0.0, 1.0),
        })
    }

    /// Filters on the smallest accessed property at the given selectivity.
    pub fn with_selectivity(
        accessed: impl IntoIterator<Item = usize>,
        selectivity: f64,
    ) -> Result<Self, ExecError> {
        if !(0.0..=1.0).contains(&selectivity) {
            return Err(ExecError::InvalidQuery(format!(
                "selectivity {selectivity} outside [0, 1]"
            )));
        }
        let accessed: Vec<usize> = accessed.into_iter().collect();
        let filter = *accessed
            .iter()
            .min()
            .ok_or_else(|| ExecError::InvalidQuery("no accessed properties".into()))?;
        let mut q = Self::new(accessed, filter, threshold_for(selectivity))?;
        q.selectivity = selectivity;
        Ok(q)
    }

    pub fn accessed(&self) -> &[PropertyId] {
        &self.accessed
    }

    pub fn filter(&self) -> PropertyId {
        self.filter
    }

    pub fn threshold(&self) -> i64 {
        self.threshold
    }

    pub fn selectivity(&self) -> f64 {
        self.selectivity
    }

    pub fn validate(&self, n_props: usize) -> Result<(), ExecError> {
        match self.accessed.last() {
            Some(p) if p.0 >= n_props => Err(ExecError::InvalidQuery(format!(
                "property {p} out of range for {n_props} properties"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResult {
    pub selected_count: u64,
    /// One sum per accessed property, in ascending property order.
    pub sums: Vec<i128>,
}

/// Outcome of one timed query execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub result: QueryResult,
    /// Wall time of the scan and aggregation only.
    pub elapsed_ns: f64,
    /// Distinct group blocks the scan touched.
    pub groups_read: usize,
}

/// One fitness observation for a candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessSample {
    pub cost: f64,
    pub query: Query,
    pub candidate_id: CandidateId,
}

/// Exact sum of i64 values split into 32-bit halves so the hot loop stays
/// on native integer adds. Safe for up to 2^32 values between flushes.
#[derive(Debug, Default, Clone, Copy)]
struct WideSum {
    lo: u64,
    hi: i64,
}

impl WideSum {
    /// Halves are 32 bits wide, so neither accumulator can wrap below 2^31
    /// rows; wrapping adds keep the loop free of overflow checks.
    #[inline(always)]
    fn add(&mut self, v: i64) {
        self.lo = self.lo.wrapping_add(v as u64 & 0xFFFF_FFFF);
        self.hi = self.hi.wrapping_add(v >> 32);
    }

    fn total(self) -> i128 {
        ((self.hi as i128) << 32) + self.lo as i128
    }
}

#[derive(Clone, Copy)]
struct Column<'a> {
    data: &'a [i64],
    stride: usize,
    offset: usize,
}

impl<'a> Column<'a> {
    #[inline(always)]
    fn get(&self, r: usize) -> i64 {
        self.data[r * self.stride + self.offset]
    }

    #[inline(always)]
    fn for_each(&self, start: usize, len: usize, mut f: impl FnMut(usize, i64)) {
        if self.stride == 1 {
            for (i, &v) in self.data[start..start + len].iter().enumerate() {
                f(i, v);
            }
        } else {
            let rows = &self.data[start * self.stride..(start + len) * self.stride];
            for (i, row) in rows.chunks_exact(self.stride).enumerate() {
                f(i, row[self.offset]);
            }
        }
    }

    /// Writes an all-ones mask for rows below `threshold`; returns the count.
    #[inline(always)]
    fn fill_mask(&self, start: usize, threshold: i64, mask: &mut [i64]) -> u64 {
        let len = mask.len();
        let mut count = 0u64;
        let mut apply = |m: &mut i64, v: i64| {
            let keep = (v < threshold) as i64;
            *m = -keep;
            count = count.wrapping_add(keep as u64);
        };
        if self.stride == 1 {
            for (m, &v) in mask.iter_mut().zip(&self.data[start..start + len]) {
                apply(m, v);
            }
        } else {
            let rows = &self.data[start * self.stride..(start + len) * self.stride];
            for (m, row) in mask.iter_mut().zip(rows.chunks_exact(self.stride)) {
                apply(m, row[self.offset]);
            }
        }
        count
    }

    #[inline(always)]
    fn masked_sum(&self, start: usize, mask: &[i64], sum: &mut WideSum) {
        let mut local = *sum;
        if self.stride == 1 {
            for (&m, &v) in mask.iter().zip(&self.data[start..start + mask.len()]) {
                local.add(v & m);
            }
        } else {
            let rows = &self.data[start * self.stride..(start + mask.len()) * self.stride];
            for (&m, row) in mask.iter().zip(rows.chunks_exact(self.stride)) {
                local.add(row[self.offset] & m);
            }
        }
        *sum = local;
    }
}

struct ScanPlan<'a> {
    n_rows: usize,
    threshold: i64,
    filter: Column<'a>,
    aggregates: Vec<Column<'a>>,
    groups_read: usize,
}

impl<'a> ScanPlan<'a> {
    fn new(query: &Query, layout: &'a MaterializedLayout) -> Result<Self, ExecError> {
        query.validate(layout.n_props())?;
        let column = |prop: PropertyId| {
            let (bi, offset) = layout.locate(prop).expect("validated property");
            let block = &layout.blocks()[bi];
            (
                bi,
                Column {
                    data: block.data(),
                    stride: block.width(),
                    offset,
                },
            )
        };
        let mut blocks: Vec<usize> = Vec::with_capacity(query.accessed.len());
        let aggregates = query
            .accessed
            .iter()
            .map(|&p| {
                let (bi, col) = column(p);
                blocks.push(bi);
                col
            })
            .collect();
        blocks.sort_unstable();
        blocks.dedup();
        Ok(Self {
            n_rows: layout.n_rows(),
            threshold: query.threshold,
            filter: column(query.filter).1,
            aggregates,
            groups_read: blocks.len(),
        })
    }
}

struct Accumulators {
    count: u64,
    sums: Vec<WideSum>,
}

impl Accumulators {
    fn new(n: usize) -> Self {
        Self {
            count: 0,
            sums: vec![WideSum::default(); n],
        }
    }

    fn finish(self) -> QueryResult {
        QueryResult {
            selected_count: self.count,
            sums: self.sums.into_iter().map(WideSum::total).collect(),
        }
    }
}

fn scan_fused_branching(plan: &ScanPlan, acc: &mut Accumulators) {
    for r in 0..plan.n_rows {
        if plan.filter.get(r) < plan.threshold {
            acc.count += 1;
            for (sum, col) in acc.sums.iter_mut().zip(&plan.aggregates) {
                sum.add(col.get(r));
            }
        }
    }
}

fn scan_fused_predicated(plan: &ScanPlan, acc: &mut Accumulators) {
    for r in 0..plan.n_rows {
        let keep = (plan.filter.get(r) < plan.threshold) as i64;
        let mask = -keep;
        acc.count = acc.count.wrapping_add(keep as u64);
        for (sum, col) in acc.sums.iter_mut().zip(&plan.aggregates) {
            sum.add(col.get(r) & mask);
        }
    }
}

fn scan_batched_branching(plan: &ScanPlan, batch: usize, selected: &mut Vec<usize>, acc: &mut Accumulators) {
    let threshold = plan.threshold;
    let mut start = 0;
    while start < plan.n_rows {
        let len = batch.min(plan.n_rows - start);
        selected.clear();
        plan.filter.for_each(start, len, |i, v| {
            if v < threshold {
                selected.push(start + i);
            }
        });
        acc.count += selected.len() as u64;
        for (sum, col) in acc.sums.iter_mut().zip(&plan.aggregates) {
            for &r in selected.iter() {
                sum.add(col.get(r));
            }
        }
        start += len;
    }
}

fn scan_batched_predicated(plan: &ScanPlan, batch: usize, mask: &mut [i64], acc: &mut Accumulators) {
    let mut start = 0;
    while start < plan.n_rows {
        let len = batch.min(plan.n_rows - start);
        let mask = &mut mask[..len];
        acc.count += plan.filter.fill_mask(start, plan.threshold, mask);
        for (sum, col) in acc.sums.iter_mut().zip(&plan.aggregates) {
            col.masked_sum(start, mask, sum);
        }
        start += len;
    }
}

/// Runs `query` against `layout` with the strategy `genes` selects.
pub fn execute(
    query: &Query,
    layout: &MaterializedLayout,
    genes: &AccessGenes,
) -> Result<Execution, ExecError> {
    let plan = ScanPlan::new(query, layout)?;
    genes
        .validate(plan.n_rows)
        .map_err(|e| ExecError::InvalidQuery(e.to_string()))?;
    let mut acc = Accumulators::new(plan.aggregates.len());

    let elapsed = match (genes.granularity, genes.selection) {
        (Granularity::Full, SelectionStrategy::Branching) => {
            let t = Instant::now();
            scan_fused_branching(&plan, &mut acc);
            t.elapsed()
        }
        (Granularity::Full, SelectionStrategy::Predicated) => {
            let t = Instant::now();
            scan_fused_predicated(&plan, &mut acc);
            t.elapsed()
        }
        (Granularity::Batched(batch), SelectionStrategy::Branching) => {
            let mut selected = Vec::with_capacity(batch);
            let t = Instant::now();
            scan_batched_branching(&plan, batch, &mut selected, &mut acc);
            t.elapsed()
        }
        (Granularity::Batched(batch), SelectionStrategy::Predicated) => {
            let mut mask = vec![0i64; batch];
            let t = Instant::now();
            scan_batched_predicated(&plan, batch, &mut mask, &mut acc);
            t.elapsed()
        }
    };

    Ok(Execution {
        result: acc.finish(),
        elapsed_ns: elapsed.as_nanos() as f64,
        groups_read: plan.groups_read,
    })
}

/// [`execute`] against a layout owned by `store`.
pub fn execute_handle(
    store: &LayoutStore,
    handle: LayoutHandle,
    query: &Query,
    genes: &AccessGenes,
) -> Result<Execution, ExecError> {
    execute(query, store.get(handle)?, genes)
}

/// Row-major scan of the base table; the correctness oracle for [`execute`].
pub fn reference_execute(query: &Query, base: &BaseTable) -> Result<QueryResult, ExecError> {
    query.validate(base.n_props())?;
    let mut result = QueryResult {
        selected_count: 0,
        sums: vec![0; query.accessed.len()],
    };
    for row in base.rows() {
        if row[query.filter.0] < query.threshold {
            result.selected_count += 1;
            for (sum, p) in result.sums.iter_mut().zip(&query.accessed) {
                *sum += row[p.0] as i128;
            }
        }
    }
    Ok(result)
}

/// Indices of the groups of `layout` that hold at least one accessed property.
pub fn touched_groups(query: &Query, layout: &LayoutGenome) -> Vec<usize> {
    layout
        .groups()
        .iter()
        .enumerate()
        .filter(|(_, g)| g.iter().any(|p| query.accessed.binary_search(p).is_ok()))
        .map(|(gi, _)| gi)
        .collect()
}

/// Bytes a group-granular scan reads: every touched group is read whole.
/// Access genes do not enter the model.
pub fn simulated_cost(
    query: &Query,
    layout: &LayoutGenome,
    _genes: &AccessGenes,
    n_rows: usize,
) -> f64 {
    let touched_width: usize = touched_groups(query, layout)
        .into_iter()
        .map(|gi| layout.groups()[gi].len())
        .sum();
    n_rows as f64 * touched_width as f64 * VALUE_BYTES
}
