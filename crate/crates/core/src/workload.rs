//! Phase-structured query workloads.
//!
//! File format, line oriented, `#` starts a comment:
//!
//! ```text
//! phase scan-all queries=1600
//!   template props=0,1,2,3,4,5,6 sel=0.5 weight=1
//! phase narrow queries=1600
//!   template props=0,1 sel=0.1
//!   template props=4,5,6 sel=0.6 weight=2
//! ```
//!
//! `weight` defaults to 1.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::exec::Query;

/// Queries per phase in the built-in workload (40 windows of 40 queries).
pub const BUILTIN_PHASE_QUERIES: usize = 1600;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("empty phase: {0}")]
    EmptyPhase(String),
    #[error("line {line}: bad selectivity `{value}` (must be in [0, 1])")]
    BadSelectivity { line: usize, value: String },
    #[error("template in phase `{phase}` uses property {prop}, but records have {n_props} properties")]
    PropertyOutOfRange {
        phase: String,
        prop: usize,
        n_props: usize,
    },
    #[error("built-in workload needs at least 2 properties, got {0}")]
    TooFewProperties(usize),
    #[error("cannot read workload: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryTemplate {
    props: Vec<usize>,
    pub selectivity: f64,
    pub weight: f64,
}

impl QueryTemplate {
    /// `props` is sorted and deduplicated.
    pub fn new(props: impl IntoIterator<Item = usize>, selectivity: f64, weight: f64) -> Self {
        let mut props: Vec<usize> = props.into_iter().collect();
        props.sort_unstable();
        props.dedup();
        Self {
            props,
            selectivity,
            weight,
        }
    }

    pub fn props(&self) -> &[usize] {
        &self.props
    }

    pub fn query(&self) -> Query {
        Query::with_selectivity(self.props.iter().copied(), self.selectivity)
            .expect("templates are validated on construction paths")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadPhase {
    pub name: String,
    pub templates: Vec<QueryTemplate>,
    pub n_queries: usize,
}

impl WorkloadPhase {
    pub fn total_weight(&self) -> f64 {
        self.templates.iter().map(|t| t.weight).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub phases: Vec<WorkloadPhase>,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_queries(&self) -> usize {
        self.phases.iter().map(|p| p.n_queries).sum()
    }

    /// Index of the first query of each phase.
    pub fn phase_starts(&self) -> Vec<usize> {
        self.phases
            .iter()
            .scan(0, |offset, p| {
                let start = *offset;
                *offset += p.n_queries;
                Some(start)
            })
            .collect()
    }

    /// Structural checks plus property ids against `n_props`.
    pub fn validate(&self, n_props: usize) -> Result<(), WorkloadError> {
        if self.phases.is_empty() {
            return Err(WorkloadError::EmptyPhase("workload has no phases".into()));
        }
        for phase in &self.phases {
            if phase.templates.is_empty() || phase.n_queries == 0 {
                return Err(WorkloadError::EmptyPhase(phase.name.clone()));
            }
            for t in &phase.templates {
                if let Some(&prop) = t.props.iter().find(|&&p| p >= n_props) {
                    return Err(WorkloadError::PropertyOutOfRange {
                        phase: phase.name.clone(),
                        prop,
                        n_props,
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn parse_workload(path: impl AsRef<Path>) -> Result<WorkloadSpec, WorkloadError> {
    parse_workload_str(&std::fs::read_to_string(path)?)
}

pub fn parse_workload_str(text: &str) -> Result<WorkloadSpec, WorkloadError> {
    let mut phases: Vec<WorkloadPhase> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: String| WorkloadError::Syntax { line, message };
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("phase") => {
                let name = tokens
                    .next()
                    .filter(|n| !n.contains('='))
                    .ok_or_else(|| syntax("phase needs a name".into()))?;
                let mut n_queries = None;
                for tok in tokens {
                    match tok.split_once('=') {
                        Some(("queries", v)) => {
                            n_queries = Some(v.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(
                                || syntax(format!("queries must be a positive integer, got `{v}`")),
                            )?)
                        }
                        _ => return Err(syntax(format!("unexpected `{tok}` in phase line"))),
                    }
                }
                phases.push(WorkloadPhase {
                    name: name.to_owned(),
                    templates: Vec::new(),
                    n_queries: n_queries.ok_or_else(|| syntax("phase needs queries=<int>".into()))?,
                });
            }
            Some("template") => {
                let phase = phases
                    .last_mut()
                    .ok_or_else(|| syntax("template before any phase".into()))?;
                let (mut props, mut sel, mut weight) = (None, None, 1.0);
                for tok in tokens {
                    match tok.split_once('=') {
                        Some(("props", v)) => {
                            let ids = v
                                .split(',')
                                .map(|id| id.parse::<usize>())
                                .collect::<Result<Vec<_>, _>>()
                                .map_err(|_| syntax(format!("bad property list `{v}`")))?;
                            props = Some(ids);
                        }
                        Some(("sel", v)) => {
                            let s = v
                                .parse::<f64>()
                                .ok()
                                .filter(|s| (0.0..=1.0).contains(s))
                                .ok_or_else(|| WorkloadError::BadSelectivity {
                                    line,
                                    value: v.to_owned(),
                                })?;
                            sel = Some(s);
                        }
                        Some(("weight", v)) => {
                            weight = v
                                .parse::<f64>()
                                .ok()
                                .filter(|w| w.is_finite() && *w > 0.0)
                                .ok_or_else(|| syntax(format!("weight must be positive, got `{v}`")))?;
                        }
                        _ => return Err(syntax(format!("unexpected `{tok}` in template line"))),
                    }
                }
                let props = props.ok_or_else(|| syntax("template needs props=<ids>".into()))?;
                let sel = sel.ok_or_else(|| syntax("template needs sel=<float>".into()))?;
                phase.templates.push(QueryTemplate::new(props, sel, weight));
            }
            Some(other) => return Err(syntax(format!("unknown directive `{other}`"))),
            None => unreachable!("blank lines are skipped"),
        }
    }
    if phases.is_empty() {
        return Err(WorkloadError::EmptyPhase("workload has no phases".into()));
    }
    if let Some(p) = phases.iter().find(|p| p.templates.is_empty()) {
        return Err(WorkloadError::EmptyPhase(p.name.clone()));
    }
    Ok(WorkloadSpec { phases, seed: 0 })
}

/// Expands `spec` into its query stream, drawing templates by weight.
pub fn generate_stream(spec: &WorkloadSpec, n_props: usize) -> Result<Vec<Query>, WorkloadError> {
    spec.validate(n_props)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.total_queries());
    for phase in &spec.phases {
        let queries: Vec<Query> = phase.templates.iter().map(QueryTemplate::query).collect();
        let pick = WeightedIndex::new(phase.templates.iter().map(|t| t.weight))
            .expect("weights are positive");
        out.extend((0..phase.n_queries).map(|_| queries[pick.sample(&mut rng)].clone()));
    }
    Ok(out)
}

/// Four-phase workload: all properties first, then three phases over fixed
/// subsets with mixed selectivities.
///
/// With `h = ceil(P/2)` the subsets are:
/// * `all`: `{0..P-1}` at 0.5
/// * `halves`: `{0..h-1}` at 0.2, `{h..P-1}` at 0.6
/// * `narrow`: `{0}` at 0.05 (weight 2), `{1..h-1}` at 0.5, `{h, h+1}` at 0.9
/// * `overlap`: `{0, h}` at 0.3, `{1, P-1}` at 0.1, `{2, 3}` at 0.7
///
/// Templates that would be empty, duplicate, or cover every property are
/// dropped, so small `P` yields fewer templates. For `P = 7` the later phases
/// are `{0,1,2,3}/{4,5,6}`, `{0}/{1,2,3}/{4,5}` and `{0,4}/{1,6}/{2,3}`.
pub fn builtin_workload(n_props: usize, seed: u64) -> Result<WorkloadSpec, WorkloadError> {
    if n_props < 2 {
        return Err(WorkloadError::TooFewProperties(n_props));
    }
    let p = n_props;
    let h = p.div_ceil(2);
    let in_range = |ids: Vec<usize>| ids.into_iter().filter(|&i| i < p).collect::<Vec<_>>();

    let phase = |name: &str, candidates: Vec<(Vec<usize>, f64, f64)>| {
        let mut templates: Vec<QueryTemplate> = Vec::new();
        for (ids, sel, weight) in candidates {
            let t = QueryTemplate::new(in_range(ids), sel, weight);
            let proper = !t.props.is_empty() && t.props.len() < p;
            if proper && templates.iter().all(|o| o.props != t.props) {
                templates.push(t);
            }
        }
        WorkloadPhase {
            name: name.to_owned(),
            templates,
            n_queries: BUILTIN_PHASE_QUERIES,
        }
    };

    let all = WorkloadPhase {
        name: "all".into(),
        templates: vec![QueryTemplate::new(0..p, 0.5, 1.0)],
        n_queries: BUILTIN_PHASE_QUERIES,
    };
    let halves = phase(
        "halves",
        vec![((0..h).collect(), 0.2, 1.0), ((h..p).collect(), 0.6, 1.0)],
    );
    let narrow = phase(
        "narrow",
        vec![
            (vec![0], 0.05, 2.0),
            ((1..h).collect(), 0.5, 1.0),
            (vec![h, h + 1], 0.9, 1.0),
        ],
    );
    let overlap = phase(
        "overlap",
        vec![
            (vec![0, h], 0.3, 1.0),
            (vec![1, p - 1], 0.1, 1.0),
            (vec![2, 3], 0.7, 1.0),
        ],
    );
    Ok(WorkloadSpec {
        phases: vec![all, halves, narrow, overlap],
        seed,
    })
}
