//! Base dataset and materialized candidate layouts.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::genome::{GenomeError, LayoutGenome, PropertyId};

/// Default cap on the bytes a generated or loaded base table may occupy.
pub const DEFAULT_MEMORY_BUDGET_BYTES: u64 = 8 << 30;

const VALUE_BYTES: u64 = std::mem::size_of::<i64>() as u64;

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("table needs at least one row and one property (got {rows} rows, {props} properties)")]
    EmptyShape { rows: usize, props: usize },
    #[error("table of {requested} bytes exceeds memory budget of {budget} bytes")]
    Capacity { requested: u64, budget: u64 },
    #[error("no rows")]
    NoRows,
    #[error("line {line}: cannot parse `{token}` as an integer")]
    Parse { line: u64, token: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("invalid partition: layout covers {layout} properties, table has {table}")]
    LayoutMismatch { layout: usize, table: usize },
    #[error("layout dropped")]
    LayoutDropped,
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn check_budget(n_rows: usize, n_props: usize, budget: u64) -> Result<(), StorageError> {
    // payload plus the key column
    let requested = (n_rows as u64)
        .checked_mul(n_props as u64 + 1)
        .and_then(|v| v.checked_mul(VALUE_BYTES))
        .unwrap_or(u64::MAX);
    if requested > budget {
        return Err(StorageError::Capacity { requested, budget });
    }
    Ok(())
}

/// Records in their birth format: a dense key column and a row-major
/// payload of `n_props` signed 64-bit properties per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseTable {
    n_rows: usize,
    n_props: usize,
    keys: Arc<[u64]>,
    payload: Vec<i64>,
}

impl BaseTable {
    /// Builds a table from a row-major payload; keys are `0..n_rows`.
    pub fn from_payload(n_props: usize, payload: Vec<i64>) -> Result<Self, StorageError> {
        if n_props == 0 || payload.is_empty() || !payload.len().is_multiple_of(n_props) {
            return Err(StorageError::EmptyShape {
                rows: payload.len().checked_div(n_props).unwrap_or(0),
                props: n_props,
            });
        }
        let n_rows = payload.len() / n_props;
        Ok(Self {
            n_rows,
            n_props,
            keys: (0..n_rows as u64).collect(),
            payload,
        })
    }

    /// Uniform random values in `[0, 2^32)`, deterministic per arguments.
    pub fn generate(
        n_rows: usize,
        n_props: usize,
        seed: u64,
        memory_budget_bytes: u64,
    ) -> Result<Self, StorageError> {
        if n_rows == 0 || n_props == 0 {
            return Err(StorageError::EmptyShape {
                rows: n_rows,
                props: n_props,
            });
        }
        check_budget(n_rows, n_props, memory_budget_bytes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let payload = (0..n_rows * n_props)
            .map(|_| rng.gen_range(0..1i64 << 32))
            .collect();
        Self::from_payload(n_props, payload)
    }

    /// Reads headerless CSV: one row per line, comma-separated integers.
    pub fn load_csv(path: impl AsRef<Path>, memory_budget_bytes: u64) -> Result<Self, StorageError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut payload = Vec::new();
        let mut width = None;
        let mut record = csv::StringRecord::new();
        while reader.read_record(&mut record)? {
            let line = record.position().map_or(0, |p| p.line());
            let expected = *width.get_or_insert(record.len());
            if record.len() != expected {
                return Err(StorageError::RaggedRow {
                    line,
                    expected,
                    found: record.len(),
                });
            }
            for token in record.iter() {
                let value = token.parse::<i64>().map_err(|_| StorageError::Parse {
                    line,
                    token: token.to_owned(),
                })?;
                payload.push(value);
            }
        }
        let n_props = width.ok_or(StorageError::NoRows)?;
        check_budget(payload.len() / n_props, n_props, memory_budget_bytes)?;
        Self::from_payload(n_props, payload)
    }

    /// Writes the payload in the format [`BaseTable::load_csv`] reads.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), StorageError> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.rows() {
            writer.write_record(row.iter().map(i64::to_string))?;
        }
        writer.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_props(&self) -> usize {
        self.n_props
    }

    pub fn keys(&self) -> &Arc<[u64]> {
        &self.keys
    }

    pub fn payload(&self) -> &[i64] {
        &self.payload
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.payload[r * self.n_props..(r + 1) * self.n_props]
    }

    pub fn value(&self, r: usize, p: PropertyId) -> i64 {
        self.payload[r * self.n_props + p.0]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, i64> {
        self.payload.chunks_exact(self.n_props)
    }

    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.payload.hash(&mut h);
        self.keys.hash(&mut h);
        h.finish()
    }

    pub fn footprint_bytes(&self) -> u64 {
        (self.payload.len() + self.keys.len()) as u64 * VALUE_BYTES
    }
}

/// Counts sequential reads over a base table's payload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadAccounting {
    /// Completed full passes over the payload.
    pub base_passes: u64,
    pub rows_read: u64,
}

impl ReadAccounting {
    pub fn merge(&mut self, other: ReadAccounting) {
        self.base_passes += other.base_passes;
        self.rows_read += other.rows_read;
    }
}

/// Row iterator over the base payload that records what it reads.
struct InstrumentedScan<'a> {
    rows: std::slice::ChunksExact<'a, i64>,
    n_rows: u64,
    accounting: ReadAccounting,
}

impl<'a> InstrumentedScan<'a> {
    fn new(base: &'a BaseTable) -> Self {
        Self {
            rows: base.rows(),
            n_rows: base.n_rows as u64,
            accounting: ReadAccounting::default(),
        }
    }
}

impl<'a> Iterator for InstrumentedScan<'a> {
    type Item = &'a [i64];

    fn next(&mut self) -> Option<Self::Item> {
        let row = self.rows.next();
        if row.is_some() {
            self.accounting.rows_read += 1;
            if self.accounting.rows_read.is_multiple_of(self.n_rows) {
                self.accounting.base_passes += 1;
            }
        }
        row
    }
}

/// Values of one group, row-major within the group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupBlock {
    props: Vec<PropertyId>,
    data: Vec<i64>,
}

impl GroupBlock {
    pub fn props(&self) -> &[PropertyId] {
        &self.props
    }

    pub fn width(&self) -> usize {
        self.props.len()
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn footprint_bytes(&self) -> u64 {
        self.data.capacity() as u64 * VALUE_BYTES
    }
}

/// A base table rewritten into one candidate layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaterializedLayout {
    layout: LayoutGenome,
    n_rows: usize,
    blocks: Vec<GroupBlock>,
    keys: Arc<[u64]>,
}

impl MaterializedLayout {
    pub fn layout(&self) -> &LayoutGenome {
        &self.layout
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_props(&self) -> usize {
        self.layout.n_props()
    }

    pub fn blocks(&self) -> &[GroupBlock] {
        &self.blocks
    }

    pub fn keys(&self) -> &Arc<[u64]> {
        &self.keys
    }

    /// Block index and in-row offset holding `prop`.
    pub fn locate(&self, prop: PropertyId) -> Option<(usize, usize)> {
        self.blocks.iter().enumerate().find_map(|(bi, block)| {
            block
                .props
                .iter()
                .position(|&p| p == prop)
                .map(|offset| (bi, offset))
        })
    }

    pub fn value(&self, r: usize, prop: PropertyId) -> i64 {
        let (bi, offset) = self.locate(prop).expect("property in layout");
        let block = &self.blocks[bi];
        block.data[r * block.width() + offset]
    }

    /// Rebuilds the row-major payload.
    pub fn reassemble(&self) -> Vec<i64> {
        let n_props = self.n_props();
        let mut out = vec![0; self.n_rows * n_props];
        for block in &self.blocks {
            for (r, chunk) in block.data.chunks_exact(block.width()).enumerate() {
                for (p, &v) in block.props.iter().zip(chunk) {
                    out[r * n_props + p.0] = v;
                }
            }
        }
        out
    }

    pub fn footprint_bytes(&self) -> u64 {
        self.blocks.iter().map(GroupBlock::footprint_bytes).sum()
    }
}

fn check_layout(base: &BaseTable, layout: &LayoutGenome) -> Result<(), StorageError> {
    if layout.n_props() != base.n_props {
        return Err(StorageError::LayoutMismatch {
            layout: layout.n_props(),
            table: base.n_props,
        });
    }
    Ok(())
}

pub fn materialize(
    base: &BaseTable,
    layout: &LayoutGenome,
) -> Result<MaterializedLayout, StorageError> {
    let (mut out, _) = materialize_many(base, std::slice::from_ref(layout))?;
    Ok(out.pop().expect("one layout in, one out"))
}

/// Produces every requested layout from a single sequential pass over the
/// base payload.
pub fn materialize_many(
    base: &BaseTable,
    layouts: &[LayoutGenome],
) -> Result<(Vec<MaterializedLayout>, ReadAccounting), StorageError> {
    for layout in layouts {
        check_layout(base, layout)?;
    }
    if layouts.is_empty() {
        return Ok((Vec::new(), ReadAccounting::default()));
    }

    let mut outputs: Vec<MaterializedLayout> = layouts
        .iter()
        .map(|layout| MaterializedLayout {
            layout: layout.clone(),
            n_rows: base.n_rows,
            blocks: layout
                .groups()
                .iter()
                .map(|g| GroupBlock {
                    props: g.clone(),
                    data: Vec::with_capacity(base.n_rows * g.len()),
                })
                .collect(),
            keys: Arc::clone(&base.keys),
        })
        .collect();

    let mut scan = InstrumentedScan::new(base);
    for row in scan.by_ref() {
        for out in outputs.iter_mut() {
            for block in out.blocks.iter_mut() {
                block.data.extend(block.props.iter().map(|p| row[p.0]));
            }
        }
    }
    Ok((outputs, scan.accounting))
}

/// Opaque reference to a layout held by a [`LayoutStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayoutHandle(u64);

/// Owns the live materialized layouts of a population.
#[derive(Debug, Default)]
pub struct LayoutStore {
    slots: BTreeMap<LayoutHandle, MaterializedLayout>,
    next: u64,
    accounting: ReadAccounting,
}

impl LayoutStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layout: MaterializedLayout) -> LayoutHandle {
        let handle = LayoutHandle(self.next);
        self.next += 1;
        self.slots.insert(handle, layout);
        handle
    }

    /// Materializes `layouts` in one base pass and stores them.
    pub fn materialize_many(
        &mut self,
        base: &BaseTable,
        layouts: &[LayoutGenome],
    ) -> Result<Vec<LayoutHandle>, StorageError> {
        let (built, accounting) = materialize_many(base, layouts)?;
        self.accounting.merge(accounting);
        Ok(built.into_iter().map(|m| self.insert(m)).collect())
    }

    pub fn get(&self, handle: LayoutHandle) -> Result<&MaterializedLayout, StorageError> {
        self.slots.get(&handle).ok_or(StorageError::LayoutDropped)
    }

    /// Releases the layout's storage. Dropping twice is a no-op.
    pub fn drop_layout(&mut self, handle: LayoutHandle) {
        self.slots.remove(&handle);
    }

    pub fn live_count(&self) -> usize {
        self.slots.len()
    }

    pub fn footprint_bytes(&self) -> u64 {
        self.slots.values().map(MaterializedLayout::footprint_bytes).sum()
    }

    /// Cumulative base reads performed through this store.
    pub fn accounting(&self) -> ReadAccounting {
        self.accounting
    }
}
