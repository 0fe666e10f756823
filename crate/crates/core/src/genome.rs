//! Layout and access genomes, plus the operators that produce new ones.
//!
//! A [`LayoutGenome`] is a set partition of the record's property indices:
//! every group is stored contiguously, so one group holding everything is the
//! key-value format and all-singleton groups is a pure column store. Genomes
//! are always held in canonical form (members ascending, groups ordered by
//! their smallest member), so structural equality is genome identity.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

/// Largest property count accepted by [`enumerate_layouts`]; B(10) = 115975.
pub const MAX_ENUMERABLE_PROPS: usize = 10;

/// Batch sizes (rows) a batched access module may use.
pub const DEFAULT_BATCH_LADDER: [usize; 4] = [1024, 4096, 16384, 65536];

/// Default probability that a mutation edits the layout rather than the
/// access genes.
pub const DEFAULT_P_LAYOUT: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenomeError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("no mutation possible: a single-property layout admits no edit")]
    NoMutationPossible,
    #[error("too many properties to enumerate: {0} (limit {MAX_ENUMERABLE_PROPS})")]
    TooManyProperties(usize),
    #[error("genomes cover different property counts ({0} vs {1})")]
    PropertyMismatch(usize, usize),
    #[error("invalid access genes: {0}")]
    InvalidAccess(String),
    #[error("cannot parse genome `{input}`: {reason}")]
    Parse { input: String, reason: String },
}

fn parse_err(input: &str, reason: impl Into<String>) -> GenomeError {
    GenomeError::Parse {
        input: input.to_owned(),
        reason: reason.into(),
    }
}

/// Index of a property within a record's value part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropertyId(pub usize);

impl PropertyId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A vertical partition of properties `0..n_props` into co-located groups.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayoutGenome {
    groups: Vec<Vec<PropertyId>>,
}

impl LayoutGenome {
    /// Validates `groups` and returns the canonical genome.
    ///
    /// The property count is the total number of members; the members must
    /// be exactly `0..count` with no repeats and no empty group.
    pub fn from_groups<G, I>(groups: G) -> Result<Self, GenomeError>
    where
        G: IntoIterator<Item = I>,
        I: IntoIterator<Item = usize>,
    {
        let groups: Vec<Vec<usize>> = groups
            .into_iter()
            .map(|g| g.into_iter().collect())
            .collect();
        if groups.is_empty() {
            return Err(GenomeError::InvalidPartition("no groups".into()));
        }
        let n_props: usize = groups.iter().map(Vec::len).sum();
        let mut labels = vec![usize::MAX; n_props];
        for (gi, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(GenomeError::InvalidPartition(format!("group {gi} is empty")));
            }
            for &p in group {
                if p >= n_props {
                    return Err(GenomeError::InvalidPartition(format!(
                        "property {p} out of range for {n_props} properties"
                    )));
                }
                if labels[p] != usize::MAX {
                    return Err(GenomeError::InvalidPartition(format!(
                        "property {p} appears more than once"
                    )));
                }
                labels[p] = gi;
            }
        }
        Ok(Self::from_labels(&labels))
    }

    /// Builds the canonical genome from a per-property group label vector.
    /// Labels are arbitrary; properties sharing a label share a group.
    pub(crate) fn from_labels(labels: &[usize]) -> Self {
        let mut slot_of_label: Vec<(usize, usize)> = Vec::new();
        let mut groups: Vec<Vec<PropertyId>> = Vec::new();
        // Scanning properties in ascending order yields groups ordered by
        // their minimum member with members ascending.
        for (p, &label) in labels.iter().enumerate() {
            match slot_of_label.iter().find(|(l, _)| *l == label) {
                Some(&(_, slot)) => groups[slot].push(PropertyId(p)),
                None => {
                    slot_of_label.push((label, groups.len()));
                    groups.push(vec![PropertyId(p)]);
                }
            }
        }
        Self { groups }
    }

    /// One group holding every property (the key-value payload format).
    pub fn key_value(n_props: usize) -> Self {
        Self::from_labels(&vec![0; n_props])
    }

    /// One group per property (pure column store).
    pub fn column_store(n_props: usize) -> Self {
        Self::from_labels(&(0..n_props).collect::<Vec<_>>())
    }

    pub fn groups(&self) -> &[Vec<PropertyId>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_props(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group index of every property.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n_props()];
        for (gi, group) in self.groups.iter().enumerate() {
            for p in group {
                labels[p.0] = gi;
            }
        }
        labels
    }

    pub fn group_of(&self, prop: PropertyId) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&prop))
    }
}

impl fmt::Display for LayoutGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (gi, group) in self.groups.iter().enumerate() {
            if gi > 0 {
                f.write_str("|")?;
            }
            for (mi, p) in group.iter().enumerate() {
                if mi > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{p}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for LayoutGenome {
    type Err = GenomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let groups = s
            .split('|')
            .map(|group| {
                group
                    .split(',')
                    .map(|tok| {
                        tok.trim()
                            .parse::<usize>()
                            .map_err(|_| parse_err(s, format!("bad property id `{tok}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_groups(groups)
    }
}

/// Returns the canonical form of an arbitrary grouping.
pub fn canonicalize(groups: &[Vec<usize>]) -> Result<LayoutGenome, GenomeError> {
    LayoutGenome::from_groups(groups.iter().cloned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SelectionStrategy {
    /// Conditional accumulation; the CPU predicts the filter branch.
    #[default]
    Branching,
    /// Branch-free masked accumulation.
    Predicated,
}

impl SelectionStrategy {
    pub fn toggled(self) -> Self {
        match self {
            Self::Branching => Self::Predicated,
            Self::Predicated => Self::Branching,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Branching => "branching",
            Self::Predicated => "predicated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Granularity {
    /// One fused pass over all rows.
    #[default]
    Full,
    /// Vectorized passes over batches of this many rows.
    Batched(usize),
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => f.write_str("full"),
            Self::Batched(rows) => write!(f, "batched:{rows}"),
        }
    }
}

/// Execution-strategy genes of a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AccessGenes {
    pub selection: SelectionStrategy,
    pub granularity: Granularity,
}

impl AccessGenes {
    pub fn new(selection: SelectionStrategy, granularity: Granularity) -> Self {
        Self {
            selection,
            granularity,
        }
    }

    /// Checks the batch size against a table of `n_rows` rows.
    pub fn validate(&self, n_rows: usize) -> Result<(), GenomeError> {
        match self.granularity {
            Granularity::Batched(0) => Err(GenomeError::InvalidAccess("batch of 0 rows".into())),
            Granularity::Batched(rows) if rows > n_rows => Err(GenomeError::InvalidAccess(
                format!("batch of {rows} rows exceeds table of {n_rows} rows"),
            )),
            _ => Ok(()),
        }
    }
}

/// The batch sizes available to batched access modules for one table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchLadder(Vec<usize>);

impl BatchLadder {
    /// Default ladder restricted to sizes that fit a table of `n_rows` rows.
    /// Tables smaller than the smallest rung get a single whole-table batch.
    pub fn for_rows(n_rows: usize) -> Self {
        Self::with_sizes(&DEFAULT_BATCH_LADDER, n_rows)
    }

    pub fn with_sizes(sizes: &[usize], n_rows: usize) -> Self {
        let mut rungs: Vec<usize> = sizes
            .iter()
            .copied()
            .filter(|&s| s >= 1 && s <= n_rows)
            .collect();
        rungs.sort_unstable();
        rungs.dedup();
        if rungs.is_empty() {
            rungs.push(n_rows.max(1));
        }
        Self(rungs)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }
}

/// Knobs for [`mutate`].
#[derive(Debug, Clone)]
pub struct MutationConfig {
    pub p_layout: f64,
    pub ladder: BatchLadder,
}

impl MutationConfig {
    pub fn for_rows(n_rows: usize) -> Self {
        Self {
            p_layout: DEFAULT_P_LAYOUT,
            ladder: BatchLadder::for_rows(n_rows),
        }
    }
}

/// A candidate's heritable description: storage layout plus access strategy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    pub layout: LayoutGenome,
    pub access: AccessGenes,
}

impl Genome {
    pub fn new(layout: LayoutGenome, access: AccessGenes) -> Self {
        Self { layout, access }
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{};sel={};gran={}",
            self.layout,
            self.access.selection.as_str(),
            self.access.granularity
        )
    }
}

impl FromStr for Genome {
    type Err = GenomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(';');
        let layout: LayoutGenome = parts.next().unwrap_or_default().parse()?;
        let mut selection = None;
        let mut granularity = None;
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| parse_err(s, format!("expected key=value, got `{part}`")))?;
            match key.trim() {
                "sel" if selection.is_none() => {
                    selection = Some(match value.trim() {
                        "branching" => SelectionStrategy::Branching,
                        "predicated" => SelectionStrategy::Predicated,
                        other => return Err(parse_err(s, format!("unknown selection `{other}`"))),
                    })
                }
                "gran" if granularity.is_none() => {
                    let value = value.trim();
                    granularity = Some(if value == "full" {
                        Granularity::Full
                    } else if let Some(rows) = value.strip_prefix("batched:") {
                        match rows.parse::<usize>() {
                            Ok(rows) if rows > 0 => Granularity::Batched(rows),
                            _ => return Err(parse_err(s, format!("bad batch size `{rows}`"))),
                        }
                    } else {
                        return Err(parse_err(s, format!("unknown granularity `{value}`")));
                    });
                }
                other => return Err(parse_err(s, format!("unexpected or repeated key `{other}`"))),
            }
        }
        match (selection, granularity) {
            (Some(selection), Some(granularity)) => Ok(Genome::new(
                layout,
                AccessGenes::new(selection, granularity),
            )),
            _ => Err(parse_err(s, "missing sel= or gran=")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayoutEdit {
    Split,
    Merge,
    Move,
}

/// Applies one random SPLIT, MERGE or MOVE edit, chosen uniformly among the
/// edit classes applicable to `layout`.
pub fn mutate_layout<R: Rng + ?Sized>(
    layout: &LayoutGenome,
    rng: &mut R,
) -> Result<LayoutGenome, GenomeError> {
    let groups = layout.groups();
    let splittable: Vec<usize> = (0..groups.len()).filter(|&g| groups[g].len() >= 2).collect();

    let mut edits = Vec::with_capacity(3);
    if !splittable.is_empty() {
        edits.push(LayoutEdit::Split);
    }
    if groups.len() >= 2 {
        edits.push(LayoutEdit::Merge);
        if !splittable.is_empty() {
            edits.push(LayoutEdit::Move);
        }
    }
    let edit = *edits.choose(rng).ok_or(GenomeError::NoMutationPossible)?;

    let mut labels = layout.labels();
    match edit {
        LayoutEdit::Split => {
            let members = &groups[*splittable.choose(rng).expect("non-empty")];
            let fresh = groups.len();
            let side = loop {
                let side: Vec<bool> = members.iter().map(|_| rng.gen()).collect();
                if side.iter().any(|&b| b) && side.iter().any(|&b| !b) {
                    break side;
                }
            };
            for (p, moved) in members.iter().zip(side) {
                if moved {
                    labels[p.0] = fresh;
                }
            }
        }
        LayoutEdit::Merge => {
            let (keep, absorb) = two_distinct(groups.len(), rng);
            for label in labels.iter_mut() {
                if *label == absorb {
                    *label = keep;
                }
            }
        }
        LayoutEdit::Move => {
            let source = *splittable.choose(rng).expect("non-empty");
            let prop = *groups[source].choose(rng).expect("non-empty");
            let mut target = rng.gen_range(0..groups.len() - 1);
            if target >= source {
                target += 1;
            }
            labels[prop.0] = target;
        }
    }
    Ok(LayoutGenome::from_labels(&labels))
}

fn two_distinct<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AccessEdit {
    ToggleSelection,
    ToggleGranularity,
    ResampleBatch,
}

/// Changes exactly one access gene.
pub fn mutate_access<R: Rng + ?Sized>(
    genes: &AccessGenes,
    ladder: &BatchLadder,
    rng: &mut R,
) -> AccessGenes {
    let mut edits = vec![AccessEdit::ToggleSelection, AccessEdit::ToggleGranularity];
    let other_rungs: Vec<usize> = match genes.granularity {
        Granularity::Batched(rows) => ladder.sizes().iter().copied().filter(|&s| s != rows).collect(),
        Granularity::Full => Vec::new(),
    };
    if !other_rungs.is_empty() {
        edits.push(AccessEdit::ResampleBatch);
    }

    let mut out = *genes;
    match *edits.choose(rng).expect("non-empty") {
        AccessEdit::ToggleSelection => out.selection = genes.selection.toggled(),
        AccessEdit::ToggleGranularity => {
            out.granularity = match genes.granularity {
                Granularity::Full => {
                    Granularity::Batched(*ladder.sizes().choose(rng).expect("ladder is never empty"))
                }
                Granularity::Batched(_) => Granularity::Full,
            }
        }
        AccessEdit::ResampleBatch => {
            out.granularity = Granularity::Batched(*other_rungs.choose(rng).expect("non-empty"))
        }
    }
    out
}

/// Mutates the layout with probability `p_layout`, otherwise the access genes.
pub fn mutate<R: Rng + ?Sized>(
    genome: &Genome,
    config: &MutationConfig,
    rng: &mut R,
) -> Result<Genome, GenomeError> {
    if rng.gen_bool(config.p_layout) {
        Ok(Genome::new(mutate_layout(&genome.layout, rng)?, genome.access))
    } else {
        Ok(Genome::new(
            genome.layout.clone(),
            mutate_access(&genome.access, &config.ladder, rng),
        ))
    }
}

/// Group-exchange recombination.
///
/// Starts from `a`'s grouping; each of `b`'s groups, visited in random order,
/// is imported with probability 1/2, pulling its members out of wherever they
/// currently live. Access genes are inherited gene-by-gene from either parent.
pub fn crossover<R: Rng + ?Sized>(
    a: &Genome,
    b: &Genome,
    rng: &mut R,
) -> Result<Genome, GenomeError> {
    let (na, nb) = (a.layout.n_props(), b.layout.n_props());
    if na != nb {
        return Err(GenomeError::PropertyMismatch(na, nb));
    }
    let mut labels = a.layout.labels();
    let mut fresh = a.layout.num_groups();
    let mut order: Vec<&Vec<PropertyId>> = b.layout.groups().iter().collect();
    order.shuffle(rng);
    for group in order {
        if rng.gen_bool(0.5) {
            for p in group {
                labels[p.0] = fresh;
            }
            fresh += 1;
        }
    }
    let selection = if rng.gen() { a.access.selection } else { b.access.selection };
    let granularity = if rng.gen() { a.access.granularity } else { b.access.granularity };
    Ok(Genome::new(
        LayoutGenome::from_labels(&labels),
        AccessGenes::new(selection, granularity),
    ))
}

/// Every set partition of `0..n_props`, canonical, each exactly once.
///
/// Walks restricted growth strings: label `i` ranges over `0..=1 + max(labels[..i])`.
pub fn enumerate_layouts(n_props: usize) -> Result<Vec<LayoutGenome>, GenomeError> {
    if n_props == 0 {
        return Err(GenomeError::InvalidPartition("no properties".into()));
    }
    if n_props > MAX_ENUMERABLE_PROPS {
        return Err(GenomeError::TooManyProperties(n_props));
    }
    let mut out = Vec::new();
    let mut labels = vec![0usize; n_props];
    // maxes[i] = max(labels[..=i])
    let mut maxes = vec![0usize; n_props];
    loop {
        out.push(LayoutGenome::from_labels(&labels));
        // Increment the rightmost label that can still grow, reset the tail.
        let mut i = n_props - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            if labels[i] <= maxes[i - 1] {
                labels[i] += 1;
                maxes[i] = maxes[i - 1].max(labels[i]);
                for j in i + 1..n_props {
                    labels[j] = 0;
                    maxes[j] = maxes[i];
                }
                break;
            }
            i -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn layout(s: &str) -> LayoutGenome {
        s.parse().unwrap()
    }

    fn is_valid_partition(l: &LayoutGenome, n: usize) -> bool {
        let mut seen = vec![false; n];
        for g in l.groups() {
            if g.is_empty() {
                return false;
            }
            for p in g {
                if p.0 >= n || seen[p.0] {
                    return false;
                }
                seen[p.0] = true;
            }
        }
        seen.iter().all(|&s| s)
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize(&[vec![2, 0], vec![1]]).unwrap().to_string(), "0,2|1");
        assert_eq!(canonicalize(&[vec![0], vec![1], vec![2]]).unwrap().to_string(), "0|1|2");
        assert_eq!(
            canonicalize(&[vec![3, 4, 5, 6], vec![0, 1, 2]]).unwrap().to_string(),
            "0,1,2|3,4,5,6"
        );
    }

    #[test]
    fn canonicalize_rejects_invalid() {
        assert!(canonicalize(&[vec![0, 1], vec![]]).is_err());
        assert!(canonicalize(&[vec![0, 1], vec![1]]).is_err());
        assert!(canonicalize(&[vec![0, 3]]).is_err());
        assert!(canonicalize(&[]).is_err());
    }

    #[test]
    fn single_group_only_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kv = LayoutGenome::key_value(7);
        for _ in 0..200 {
            let out = mutate_layout(&kv, &mut rng).unwrap();
            assert_eq!(out.num_groups(), 2);
            assert!(is_valid_partition(&out, 7));
        }
    }

    #[test]
    fn singletons_only_merge() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cs = LayoutGenome::column_store(7);
        for _ in 0..200 {
            let out = mutate_layout(&cs, &mut rng).unwrap();
            assert_eq!(out.num_groups(), 6);
        }
    }

    #[test]
    fn single_property_cannot_mutate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            mutate_layout(&LayoutGenome::key_value(1), &mut rng),
            Err(GenomeError::NoMutationPossible)
        );
    }

    #[test]
    fn ten_thousand_layout_mutations_stay_valid_and_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let start = layout("0,1|2|3,4,5,6");
        for _ in 0..10_000 {
            let out = mutate_layout(&start, &mut rng).unwrap();
            assert!(is_valid_partition(&out, 7));
            assert_ne!(out, start);
        }
    }

    #[test]
    fn mutation_reaches_every_partition_of_four() {
        // SPLIT/MERGE/MOVE closure covers the whole space.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = HashSet::new();
        let mut current = LayoutGenome::key_value(4);
        for _ in 0..5_000 {
            current = mutate_layout(&current, &mut rng).unwrap();
            seen.insert(current.clone());
        }
        assert_eq!(seen.len(), 15);
    }

    #[test]
    fn access_neighbourhoods() {
        let ladder = BatchLadder::for_rows(1 << 20);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let start = AccessGenes::default();
        for _ in 0..100 {
            let out = mutate_access(&start, &ladder, &mut rng);
            let sel_flip = out.selection == SelectionStrategy::Predicated
                && out.granularity == Granularity::Full;
            let gran_flip = out.selection == SelectionStrategy::Branching
                && matches!(out.granularity, Granularity::Batched(k) if DEFAULT_BATCH_LADDER.contains(&k));
            assert!(sel_flip || gran_flip, "{out:?}");
        }

        let start = AccessGenes::new(SelectionStrategy::Predicated, Granularity::Batched(4096));
        let mut kinds = HashSet::new();
        for _ in 0..1_000 {
            let out = mutate_access(&start, &ladder, &mut rng);
            assert_ne!(out, start);
            assert!(out.validate(1 << 20).is_ok());
            let kind = if out.selection != start.selection {
                0
            } else if out.granularity == Granularity::Full {
                1
            } else {
                2
            };
            kinds.insert(kind);
        }
        assert_eq!(kinds.len(), 3);
    }

    #[test]
    fn ladder_clamps_to_small_tables() {
        assert_eq!(BatchLadder::for_rows(5000).sizes(), &[1024, 4096]);
        assert_eq!(BatchLadder::for_rows(8).sizes(), &[8]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let genes = AccessGenes::new(SelectionStrategy::Branching, Granularity::Batched(8));
        let ladder = BatchLadder::for_rows(8);
        for _ in 0..100 {
            let out = mutate_access(&genes, &ladder, &mut rng);
            assert_ne!(out, genes);
            assert!(out.validate(8).is_ok());
        }
    }

    #[test]
    fn forced_mutation_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = Genome::new(layout("0,1|2,3,4|5,6"), AccessGenes::default());
        let mut cfg = MutationConfig::for_rows(1_000_000);
        cfg.p_layout = 1.0;
        for _ in 0..100 {
            let out = mutate(&g, &cfg, &mut rng).unwrap();
            assert_ne!(out.layout, g.layout);
            assert_eq!(out.access, g.access);
        }
        cfg.p_layout = 0.0;
        for _ in 0..100 {
            let out = mutate(&g, &cfg, &mut rng).unwrap();
            assert_eq!(out.layout, g.layout);
            assert_ne!(out.access, g.access);
        }
    }

    #[test]
    fn layout_mutation_fraction_matches_p_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Genome::new(layout("0,1|2|3,4,5,6"), AccessGenes::default());
        let cfg = MutationConfig::for_rows(1_000_000);
        let n = 10_000;
        let layout_changes = (0..n)
            .filter(|_| mutate(&g, &cfg, &mut rng).unwrap().layout != g.layout)
            .count();
        let frac = layout_changes as f64 / n as f64;
        assert!((0.67..=0.73).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn crossover_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = Genome::new(layout("0,3|1,2|4,5,6"), AccessGenes::default());
        for _ in 0..50 {
            assert_eq!(crossover(&g, &g, &mut rng).unwrap(), g);
        }
        let a = Genome::new(LayoutGenome::key_value(7), AccessGenes::default());
        let b = Genome::new(layout("0|1,2,3,4,5,6"), AccessGenes::default());
        let mut outcomes = HashSet::new();
        for _ in 0..200 {
            outcomes.insert(crossover(&a, &b, &mut rng).unwrap().layout.to_string());
        }
        // No import keeps a; any import carves out {0}.
        let expected: HashSet<String> =
            ["0,1,2,3,4,5,6", "0|1,2,3,4,5,6"].iter().map(|s| s.to_string()).collect();
        assert_eq!(outcomes, expected);
    }

    #[test]
    fn crossover_rejects_mismatched_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Genome::new(LayoutGenome::key_value(3), AccessGenes::default());
        let b = Genome::new(LayoutGenome::key_value(4), AccessGenes::default());
        assert_eq!(
            crossover(&a, &b, &mut rng),
            Err(GenomeError::PropertyMismatch(3, 4))
        );
    }

    #[test]
    fn enumerate_small() {
        let one = enumerate_layouts(1).unwrap();
        assert_eq!(one, vec![LayoutGenome::key_value(1)]);
        let three: Vec<String> = enumerate_layouts(3).unwrap().iter().map(|l| l.to_string()).collect();
        assert_eq!(three, ["0,1,2", "0,1|2", "0,2|1", "0|1,2", "0|1|2"]);
        assert_eq!(enumerate_layouts(11), Err(GenomeError::TooManyProperties(11)));
        assert!(enumerate_layouts(0).is_err());
    }

    #[test]
    fn genome_string_grammar() {
        let g: Genome = "0,1,2|3|4,5,6;sel=predicated;gran=batched:4096".parse().unwrap();
        assert_eq!(g.layout.num_groups(), 3);
        assert_eq!(g.access.selection, SelectionStrategy::Predicated);
        assert_eq!(g.access.granularity, Granularity::Batched(4096));
        assert_eq!(g.to_string(), "0,1,2|3|4,5,6;sel=predicated;gran=batched:4096");

        let g: Genome = "4,5,6|0,1,2|3;gran=full;sel=branching".parse().unwrap();
        assert_eq!(g.to_string(), "0,1,2|3|4,5,6;sel=branching;gran=full");

        for bad in [
            "0,1|2",
            "0,1|2;sel=branching",
            "0,1|2;sel=fast;gran=full",
            "0,1|2;sel=branching;gran=batched:0",
            "0,x|2;sel=branching;gran=full",
            "0,1|3;sel=branching;gran=full",
            "0,1|2;sel=branching;sel=branching;gran=full",
        ] {
            assert!(bad.parse::<Genome>().is_err(), "{bad}");
        }
    }
}
