use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evostore_core::evolution::{self, EvolutionConfig};
use evostore_core::genome::{self, AccessGenes};
use evostore_core::harness::{self, HarnessError, RunConfig, WorkloadSource};
use evostore_core::storage::{self, BaseTable};
use evostore_core::FitnessMode;

#[derive(Parser)]
#[command(name = "evostore", version, about = "Evolve in-memory storage layouts against a query workload")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolution loop and write one CSV row per candidate per generation.
    Run(RunArgs),
    /// Evaluate every layout against one workload phase.
    Oracle(OracleArgs),
    /// Write a random dataset as headerless CSV.
    GenData(GenDataArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Fitness {
    Measured,
    Simulated,
}

impl From<Fitness> for FitnessMode {
    fn from(f: Fitness) -> Self {
        match f {
            Fitness::Measured => FitnessMode::Measured,
            Fitness::Simulated => FitnessMode::Simulated,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    rows: u64,
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u64).range(1..))]
    props: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = evolution::DEFAULT_POP_SIZE as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pop_size: u64,
    #[arg(long, default_value_t = evolution::DEFAULT_ELIM_FRAC)]
    elim_frac: f64,
    /// Queries per generation; a multiple of --pop-size.
    #[arg(long, default_value_t = evolution::DEFAULT_WINDOW as u64, value_parser = clap::value_parser!(u64).range(1..))]
    window: u64,
    /// Stop after this many generations instead of at the end of the workload.
    #[arg(long)]
    generations: Option<usize>,
    /// `builtin` or a workload file.
    #[arg(long, default_value = "builtin")]
    workload: WorkloadSource,
    #[arg(long, value_enum, default_value_t = Fitness::Simulated)]
    fitness: Fitness,
    #[arg(long, default_value_t = genome::DEFAULT_P_LAYOUT)]
    p_layout: f64,
    #[arg(long, default_value_t = 0.0)]
    p_crossover: f64,
    /// Dataset CSV for measured runs; generated from --seed when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = storage::DEFAULT_MEMORY_BUDGET_BYTES)]
    memory_budget_bytes: u64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u64).range(1..))]
    props: u64,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    rows: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "builtin")]
    workload: WorkloadSource,
    /// Phase to optimize for: 1-based index or phase name.
    #[arg(long, default_value = "1")]
    phase: String,
    #[arg(long, value_enum, default_value_t = Fitness::Simulated)]
    fitness: Fitness,
    /// Queries timed per layout in measured mode.
    #[arg(long, default_value_t = harness::DEFAULT_ORACLE_SAMPLES)]
    samples: usize,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = storage::DEFAULT_MEMORY_BUDGET_BYTES)]
    memory_budget_bytes: u64,
    /// Ranked CSV of every layout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    rows: u64,
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u64).range(1..))]
    props: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = storage::DEFAULT_MEMORY_BUDGET_BYTES)]
    memory_budget_bytes: u64,
    #[arg(long)]
    out: PathBuf,
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let config = RunConfig {
        rows: args.rows as usize,
        props: args.props as usize,
        seed: args.seed,
        evolution: EvolutionConfig {
            pop_size: args.pop_size as usize,
            elim_frac: args.elim_frac,
            window: args.window as usize,
            p_layout: args.p_layout,
            p_crossover: args.p_crossover,
        },
        generations: args.generations,
        workload: args.workload,
        fitness: args.fitness.into(),
        data: args.data,
        memory_budget_bytes: args.memory_budget_bytes,
    };
    let report = harness::run_experiment(&config)?;
    let records = harness::generation_records(&report);
    harness::write_records_csv(output(args.out.as_ref())?, &records)?;
    if args.out.is_some() {
        match report.generations.last() {
            Some(last) => eprintln!(
                "{} generations; fittest in generation {}: {} (mean cost {})",
                report.generations.len(),
                last.generation,
                last.best().genome,
                last.best().mean_cost
            ),
            None => eprintln!("workload shorter than one window; initial population only"),
        }
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<(), HarnessError> {
    let props = args.props as usize;
    if props > genome::MAX_ENUMERABLE_PROPS {
        return Err(genome::GenomeError::TooManyProperties(props).into());
    }
    let spec = RunConfig {
        rows: args.rows as usize,
        props,
        seed: args.seed,
        workload: args.workload.clone(),
        ..RunConfig::default()
    }
    .workload_spec()?;
    let phase = match args.phase.parse::<usize>() {
        Ok(i) if (1..=spec.phases.len()).contains(&i) => &spec.phases[i - 1],
        Ok(i) => {
            return Err(HarnessError::Config(format!(
                "--phase {i} out of range (workload has {} phases)",
                spec.phases.len()
            )))
        }
        Err(_) => spec
            .phases
            .iter()
            .find(|p| p.name == args.phase)
            .ok_or_else(|| HarnessError::Config(format!("--phase: no phase named `{}`", args.phase)))?,
    };
    let report = match args.fitness {
        Fitness::Simulated => harness::oracle_simulated(phase, props, args.rows as usize)?,
        Fitness::Measured => {
            let base = match &args.data {
                Some(path) => BaseTable::load_csv(path, args.memory_budget_bytes)?,
                None => BaseTable::generate(
                    args.rows as usize,
                    props,
                    harness::dataset_seed(args.seed),
                    args.memory_budget_bytes,
                )?,
            };
            harness::oracle_measured(phase, &base, args.samples, &AccessGenes::default(), args.seed)?
        }
    };

    println!("phase {}", phase.name);
    println!("evaluated {} layouts", report.evaluated());
    println!("best {} cost {}", report.entries[0].layout, report.min_cost());
    let ties = report.ties();
    println!("ties {}", ties.len());
    for tie in ties {
        println!("  {}", tie.layout);
    }
    if let Some(path) = &args.out {
        report.write_csv(output(Some(path))?)?;
    }
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<(), HarnessError> {
    let base = BaseTable::generate(
        args.rows as usize,
        args.props as usize,
        harness::dataset_seed(args.seed),
        args.memory_budget_bytes,
    )?;
    base.write_csv(output(Some(&args.out))?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Oracle(args) => oracle(args),
        Command::GenData(args) => gen_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
