use std::sync::Arc;

use evostore_core::evolution::{EvolutionConfig, Evolver, Origin};
use evostore_core::harness::{self, RunConfig, WorkloadSource};
use evostore_core::storage::{self, BaseTable};
use evostore_core::workload::{self, QueryTemplate, WorkloadPhase, WorkloadSpec};
use evostore_core::Query;

fn phase(name: &str, props: &[usize], n_queries: usize) -> WorkloadPhase {
    WorkloadPhase {
        name: name.into(),
        templates: vec![QueryTemplate::new(props.iter().copied(), 0.3, 1.0)],
        n_queries,
    }
}

fn stream(phases: Vec<WorkloadPhase>, n_props: usize) -> Vec<Query> {
    workload::generate_stream(&WorkloadSpec { phases, seed: 4 }, n_props).unwrap()
}

#[test]
fn simulated_runs_replay_exactly() {
    let config = RunConfig {
        seed: 17,
        evolution: EvolutionConfig { p_crossover: 0.4, ..Default::default() },
        ..RunConfig::default()
    };
    let a = harness::run_experiment(&config).unwrap();
    let b = harness::run_experiment(&config).unwrap();
    assert_eq!(a.generations, b.generations);
    assert_eq!(a.final_population, b.final_population);
    assert_eq!(harness::generation_records(&a), harness::generation_records(&b));

    let other = harness::run_experiment(&RunConfig { seed: 18, ..config }).unwrap();
    assert_ne!(a.generations, other.generations);
}

#[test]
fn best_genome_holds_until_the_phase_changes() {
    // Phase one reads every property, so every layout costs the same and the
    // key-value candidate keeps rank A on its id.
    let boundary_generation = 20;
    let window = 40;
    let queries = stream(
        vec![
            phase("all", &[0, 1, 2, 3, 4, 5, 6], boundary_generation * window),
            phase("narrow", &[2], 40 * window),
        ],
        7,
    );
    for seed in 0..5 {
        let evolver = Evolver::simulated(EvolutionConfig::default(), 1_000_000, 7, seed).unwrap();
        let report = evolver.run(&queries).unwrap();
        let first = &report.generations[0].best().genome;
        let change = report
            .generations
            .iter()
            .position(|g| &g.best().genome != first)
            .expect("best changes after the boundary");
        assert!(change >= boundary_generation, "seed {seed}: changed at {change}");
    }
}

#[test]
fn consecutive_evolve_calls_never_lose_the_best() {
    let query = Query::with_selectivity([1, 4], 0.2).unwrap();
    let mut evolver = Evolver::simulated(EvolutionConfig::default(), 100_000, 6, 2).unwrap();
    let mut previous = f64::INFINITY;
    for _ in 0..3 {
        for i in 0..40 {
            evolver.observe(i, &query).unwrap();
        }
        let report = evolver.evolve().unwrap();
        assert!(report.best().mean_cost <= previous);
        previous = report.best().mean_cost;
    }
}

#[test]
fn materialization_cost_is_charged_to_newborns_only() {
    let queries = stream(vec![phase("p", &[0, 3], 400)], 5);
    let evolver = Evolver::simulated(EvolutionConfig::default(), 1_000, 5, 9).unwrap();
    let report = evolver.run(&queries).unwrap();
    let bytes = (1_000 * 5 * 8) as f64;
    for g in &report.generations {
        for m in &g.ranked {
            let expected = if m.born_generation == g.generation { bytes } else { 0.0 };
            assert_eq!(m.materialization_cost, expected, "gen {} id {}", g.generation, m.id);
        }
    }
}

#[test]
fn measured_mode_reclaims_eliminated_layouts() {
    let base = Arc::new(BaseTable::generate(20_000, 5, 3, storage::DEFAULT_MEMORY_BUDGET_BYTES).unwrap());
    let config = EvolutionConfig { pop_size: 6, window: 36, ..Default::default() };
    let mut evolver = Evolver::measured(config, Arc::clone(&base), 5).unwrap();
    let per_layout = storage::materialize(&base, &"0,1,2,3,4".parse().unwrap())
        .unwrap()
        .footprint_bytes();
    let query = Query::with_selectivity([0, 2], 0.5).unwrap();
    for generation in 0..8 {
        for i in 0..36 {
            evolver.observe(i, &query).unwrap();
        }
        evolver.evolve().unwrap();
        let store = evolver.store().unwrap();
        assert_eq!(store.live_count(), 6, "generation {generation}");
        // Layout footprints differ only by per-group slack, never by payload.
        let footprint = store.footprint_bytes();
        assert!(footprint >= 6 * per_layout && footprint < 6 * per_layout + 6 * 5 * 64);
        let live: Vec<_> = evolver.population().candidates.iter().map(|c| c.layout.unwrap()).collect();
        for h in live {
            assert!(store.get(h).is_ok());
        }
    }
    // One base pass per materialization round: the initial population plus one per generation.
    assert_eq!(evolver.store().unwrap().accounting().base_passes, 1 + 8);
}

#[test]
fn crossover_offspring_are_recorded() {
    let queries = stream(vec![phase("p", &[0, 1], 4_000)], 6);
    let config = EvolutionConfig { pop_size: 8, p_crossover: 1.0, ..Default::default() };
    let report = Evolver::simulated(config, 10_000, 6, 1).unwrap().run(&queries).unwrap();
    let crossovers = report
        .generations
        .iter()
        .flat_map(|g| &g.ranked)
        .filter(|m| matches!(m.origin, Origin::CrossoverOf(_, _)))
        .count();
    assert!(crossovers > 0);
    assert!(report.generations.iter().all(|g| g.ranked.len() == 8));
}

#[test]
fn builtin_workload_run_covers_every_phase() {
    let config = RunConfig { workload: WorkloadSource::Builtin, ..RunConfig::default() };
    let spec = config.workload_spec().unwrap();
    let report = harness::run_experiment(&config).unwrap();
    assert_eq!(report.generations.len(), spec.total_queries() / config.evolution.window);
    let records = harness::generation_records(&report);
    assert_eq!(records.len(), report.generations.len() * config.evolution.pop_size);
}
