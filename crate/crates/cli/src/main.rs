//! `mfbo`: low-fidelity data generation, perturbation benchmarks, the
//! peak-force accuracy sweep, the frozen-low replica campaign and the
//! reference-optimum oracle.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use mfbo::study::{
    emit_artifacts, emit_low_data, emit_oracle_artifacts, emit_replica_artifacts, emit_summary, load_or_generate_low,
    reference_for_plant, run_accuracy_sweep, run_benchmark_study, run_experiment_replica, ArtifactCache,
    LapObjective, ReferenceOptimum, StudyError, StudyReport, SuiteConfig,
};
use mfbo::vehicle::perturb_plant;

/// Query index used for the early-regret columns of the summaries.
const EARLY_QUERY: usize = 10;

#[derive(Parser)]
#[command(name = "mfbo", version, about = "Multi-fidelity BO studies for lateral controller tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load from cache) the low-fidelity data of every study.
    LowfidGen(Common),
    /// Run the perturbation benchmarks and write regret artifacts.
    Bench(Common),
    /// Run the peak-force accuracy sweep.
    Sweep(Common),
    /// Run the frozen-low replica campaign on the configured true plant.
    Replica(Common),
    /// Compute the reference optimum of the nominal plant and its audit log.
    Oracle(Common),
    /// Print the default configuration file.
    DefaultConfig,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; trial seeds are `seed, seed + 1, ...` unless listed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Cache directory for low-fidelity data and reference optima.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(SuiteConfig, ArtifactCache), StudyError> {
        let cfg = match &self.config {
            Some(p) => SuiteConfig::load(p)?,
            None => SuiteConfig::default(),
        };
        Ok((cfg, ArtifactCache::new(self.cache.clone())))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::LowfidGen(c) => lowfid_gen(&c),
        Command::Bench(c) => bench(&c),
        Command::Sweep(c) => sweep(&c),
        Command::Replica(c) => replica(&c),
        Command::Oracle(c) => oracle(&c).map(|_| ()),
        Command::DefaultConfig => SuiteConfig::default().to_toml().map(|t| print!("{t}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_io() {
                1
            } else {
                3
            })
        }
    }
}

fn nominal_reference(cfg: &SuiteConfig, cache: &ArtifactCache) -> Result<ReferenceOptimum, StudyError> {
    let v = &cfg.vehicle;
    let (reference, hit) =
        reference_for_plant(v.plant, &v.track, &v.speed, &v.sim, Arc::new(v.reference()?), &cfg.oracle, cache)?;
    log::info!(
        "reference optimum {} ({}, {} evaluations)",
        reference.value,
        if hit { "cached" } else { "computed" },
        reference.evaluations()
    );
    Ok(reference)
}

fn oracle(c: &Common) -> Result<ReferenceOptimum, StudyError> {
    let (cfg, cache) = c.load()?;
    let reference = nominal_reference(&cfg, &cache)?;
    let set = emit_oracle_artifacts(&reference, &c.out, "oracle")?;
    println!("reference optimum {} from {} evaluations", reference.value, reference.evaluations());
    println!("written to {}", set.dir.display());
    Ok(reference)
}

fn lowfid_gen(c: &Common) -> Result<(), StudyError> {
    let (cfg, cache) = c.load()?;
    let v = &cfg.vehicle;
    let trajectory = Arc::new(v.reference()?);
    let mut specs: Vec<(String, mfbo::vehicle::Perturbation)> =
        cfg.studies.iter().chain(cfg.sweep.studies().iter()).map(|s| (s.id.clone(), s.perturbation)).collect();
    specs.push(("nominal".into(), Default::default()));
    for (id, p) in specs {
        let objective = LapObjective::new(perturb_plant(&v.plant, &p)?, trajectory.clone(), v.sim)?;
        for seed in cfg.trial_seeds(c.seed) {
            let (data, hit) = load_or_generate_low(&objective, &v.track, &v.speed, &cfg.low, seed, &cache)?;
            let path = c.out.join("lowfid").join(&id).join(format!("seed_{seed}.csv"));
            emit_low_data(&data, &path)?;
            let best = data.best().map_or(f64::NAN, |(_, b)| b);
            println!(
                "{id} seed {seed}: {} evaluations, best {best:.5}{}",
                data.len(),
                if hit { " (cached)" } else { "" }
            );
        }
    }
    Ok(())
}

fn print_table(reports: &[StudyReport]) {
    println!(
        "{:<20} {:<10} {:>14} {:>14} {:>14} {:>14}",
        "study", "method", "mean@10", "median@10", "mean final", "median final"
    );
    for r in reports {
        for a in &r.aggregates {
            let last = a.mean.len() - 1;
            let n = EARLY_QUERY.min(last);
            println!(
                "{:<20} {:<10} {:>14.4e} {:>14.4e} {:>14.4e} {:>14.4e}",
                r.id(),
                a.method.label(),
                a.mean[n],
                a.median[n],
                a.mean[last],
                a.median[last]
            );
        }
    }
}

fn finish(reports: &[StudyReport], out: &Path, summary: &str) -> Result<(), StudyError> {
    emit_summary(reports, EARLY_QUERY, &out.join(summary))?;
    print_table(reports);
    Ok(())
}

fn bench(c: &Common) -> Result<(), StudyError> {
    let (cfg, cache) = c.load()?;
    let reference = nominal_reference(&cfg, &cache)?;
    let mut reports = Vec::new();
    for study in cfg.benchmark_studies(c.seed) {
        let report = run_benchmark_study(&study, &reference, &cache)?;
        emit_artifacts(&report, &c.out)?;
        reports.push(report);
    }
    finish(&reports, &c.out, "bench_summary.csv")
}

fn sweep(c: &Common) -> Result<(), StudyError> {
    let (cfg, cache) = c.load()?;
    let reference = nominal_reference(&cfg, &cache)?;
    let reports = run_accuracy_sweep(&cfg, c.seed, &reference, &cache)?;
    for r in &reports {
        emit_artifacts(r, &c.out)?;
    }
    finish(&reports, &c.out, "sweep_summary.csv")
}

fn replica(c: &Common) -> Result<(), StudyError> {
    let (cfg, cache) = c.load()?;
    let report = run_experiment_replica(&cfg, c.seed, &cache)?;
    let set = emit_replica_artifacts(&report, &c.out)?;
    for q in &report.queries {
        println!(
            "query {:>2}: true {:.4}  simulated {:.4}{}",
            q.iteration,
            q.true_cost,
            q.simulated_cost,
            if q.dnf { "  (did not finish)" } else { "" }
        );
    }
    println!("manual tuning:          true {:.4}", report.manual.true_cost);
    println!("best from simulation:   true {:.4}", report.best_from_simulation.true_cost);
    println!("best from experiment:   true {:.4}", report.best_from_experiment.true_cost);
    println!("written to {}", set.dir.display());
    Ok(())
}
