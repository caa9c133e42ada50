use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mcpart::experiments::{self, ExperimentConfig};
use mcpart::simulator::{self, FalsifyOutcome};
use mcpart::{generate_taskset, DeadlineModel, GeneratorConfig, Partitioner, Strategy, TaskSet, TestKind, Utilizations};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "mcpart", version, about = "Partitioned dual-criticality scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a task set; exits 1 when some task cannot be placed.
    Partition {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        test: TestKind,
        /// Processor count; defaults to the one stored in the file.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Draw random task sets and write them as JSON files.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        ph: f64,
        #[arg(long)]
        uhh: f64,
        #[arg(long)]
        uhl: f64,
        #[arg(long)]
        ull: f64,
        #[arg(long, default_value = "implicit")]
        deadline_model: DeadlineModel,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a task set under the runtime a test configures, looking
    /// for deadline misses. Exits 1 when one is found.
    Falsify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        test: TestKind,
        /// Random scenarios on top of all-LO and all-HI.
        #[arg(long, default_value_t = 50)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Partition first and falsify every processor; without it the
        /// whole set is treated as one processor.
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Run an acceptance-ratio sweep described by a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        war: Option<PathBuf>,
        /// Overrides `sets_per_point` from the config.
        #[arg(long)]
        sets: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
}

fn read_taskset(path: &Path) -> Result<TaskSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TaskSet::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(out, "{text}") {
        // output piped into e.g. `head`
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn partition(input: &Path, strategy: Strategy, test: TestKind, m: Option<usize>) -> Result<ExitCode> {
    let set = read_taskset(input)?;
    let m = m.unwrap_or(set.m());
    let p = Partitioner::new(strategy, test).run(&set, m)?;
    let bins: Vec<_> = p
        .bins
        .iter()
        .map(|b| {
            json!({
                "processor": b.index(),
                "tasks": b.task_ids(),
                "utilizations": b.utilizations(),
            })
        })
        .collect();
    print_json(&json!({
        "strategy": strategy,
        "test": test,
        "m": m,
        "success": p.is_success(),
        "outcome": p.outcome,
        "bins": bins,
    }))?;
    Ok(if p.is_success() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

#[allow(clippy::too_many_arguments)]
fn generate(seed: u64, m: usize, ph: f64, uhh: f64, uhl: f64, ull: f64, model: DeadlineModel, count: usize, out: &Path) -> Result<ExitCode> {
    let cfg = GeneratorConfig::new(m, ph, Utilizations::new(ull, uhl, uhh), model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::create_dir_all(out)?;
    for i in 0..count {
        let set = generate_taskset(&cfg, &mut rng)?;
        let path = out.join(format!("taskset_{i:04}.json"));
        fs::write(&path, set.to_json()?)?;
        eprintln!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn falsify(input: &Path, test: TestKind, scenarios: usize, seed: u64, strategy: Option<Strategy>) -> Result<ExitCode> {
    let set = read_taskset(input)?;
    let groups: Vec<Vec<mcpart::Task>> = match strategy {
        Some(s) => {
            let p = Partitioner::new(s, test).run(&set, set.m())?;
            if !p.is_success() {
                // nothing was accepted, so there is nothing to refute
                print_json(&json!({ "test": test, "strategy": s, "counterexample_found": false, "partition": p.outcome }))?;
                return Ok(ExitCode::SUCCESS);
            }
            p.bins.iter().map(|b| b.tasks().to_vec()).collect()
        }
        None => vec![set.tasks().to_vec()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = false;
    let mut reports = Vec::new();
    for (bin, tasks) in groups.iter().enumerate() {
        let outcome = simulator::falsify(test, tasks, scenarios, &mut rng);
        found |= matches!(outcome, FalsifyOutcome::Counterexample(_));
        let ids: Vec<usize> = tasks.iter().map(|t| t.id()).collect();
        reports.push(json!({ "processor": bin, "tasks": ids, "outcome": outcome }));
    }
    print_json(&json!({ "test": test, "counterexample_found": found, "processors": reports }))?;
    Ok(if found { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn experiment(config: &Path, out: Option<PathBuf>, war: Option<PathBuf>, sets: Option<usize>, quiet: bool) -> Result<ExitCode> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(n) = sets {
        cfg.sets_per_point = n;
    }
    let Some(out) = out.or_else(|| cfg.output.clone()) else {
        bail!("no output path: pass --out or set `output` in the config");
    };
    let total = cfg.m.len() * cfg.p_h.len() * cfg.grid.len();
    let mut done = 0;
    let results = experiments::run_experiment_with(&cfg, |p| {
        done += 1;
        if !quiet && (done % 50 == 0 || done == total) {
            eprintln!("[{done}/{total}] m={} P_H={} U_B={:.2}", p.m, p.p_h, p.u_b());
        }
    })?;
    for f in &results.failures {
        eprintln!(
            "warning: {} of {} sets not generated at m={} P_H={} (U_LL={}, U_HL={}, U_HH={})",
            f.failed, cfg.sets_per_point, f.m, f.p_h, f.targets.lc_lo, f.targets.hc_lo, f.targets.hc_hi
        );
    }
    experiments::write_results_csv(fs::File::create(&out)?, &results.records)?;
    if let Some(war) = war {
        experiments::write_war_csv(fs::File::create(war)?, &experiments::war_table(&results.records))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Partition { input, strategy, test, m } => partition(&input, strategy, test, m),
        Command::Generate {
            seed,
            m,
            ph,
            uhh,
            uhl,
            ull,
            deadline_model,
            count,
            out,
        } => generate(seed, m, ph, uhh, uhl, ull, deadline_model, count, &out),
        Command::Falsify {
            input,
            test,
            scenarios,
            seed,
            strategy,
        } => falsify(&input, test, scenarios, seed, strategy),
        Command::Experiment {
            config,
            out,
            war,
            sets,
            quiet,
        } => experiment(&config, out, war, sets, quiet),
    }
}
