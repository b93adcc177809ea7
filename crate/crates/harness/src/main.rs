//! `regnn`: dataset generation, meta-training, adaptation, evaluation, the
//! two experiment sweeps, and result reporting, all driven by one TOML
//! config. Exit codes: 0 success, 1 configuration or I/O error, 2 numerical
//! failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use regnn_core::error::{Error, Result};
use regnn_core::regnn::RegnnParams;
use regnn_core::trainers::{write_training_log, MetaAlgorithm};
use regnn_core::Params64;

use regnn_harness::config::ExperimentConfig;
use regnn_harness::data::{
    build_meta_tasks, build_task_set, build_test_task, rep_seed, write_task_set,
};
use regnn_harness::methods::{draw_init, eval_only, train_meta};
use regnn_harness::result::{aggregate, parse_csv, write_csv_file, write_report, ResultRow};
use regnn_harness::sweeps::{run_radius_sweep, run_sample_sweep, write_manifest};

#[derive(Parser)]
#[command(
    name = "regnn",
    about = "Meta-learned power control over random interference graphs"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); defaults fill in missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Write the meta-training tasks and test task as drop/episode files.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Meta-train one algorithm; writes a checkpoint and a training log.
    MetaTrain {
        #[command(flatten)]
        common: Common,
        /// "fomaml" or "reptile".
        #[arg(long)]
        algorithm: String,
    },
    /// Adapt a checkpoint on the test task's first samples and score it.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        samples: usize,
        /// Full-batch ascent steps; defaults to the joint adaptation budget.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Score a checkpoint on the test task's held-out slots.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Sum rate across the adaptation-sample grid (dynamic-size scenario).
    SweepSamples {
        #[command(flatten)]
        common: Common,
    },
    /// Relative gain across the interference-radius grid (fixed size).
    SweepRadius {
        #[command(flatten)]
        common: Common,
    },
    /// Aggregate a results CSV into per-(method, grid point) means.
    Report {
        #[command(flatten)]
        common: Common,
        /// Results CSV produced by a sweep.
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.experiment.output_dir = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.experiment.output_dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Adaptation-pool size for standalone verbs: the largest budget the config
/// can ask for.
fn default_pool(cfg: &ExperimentConfig) -> usize {
    let sweep_max = cfg.sweep.samples.last().copied().unwrap_or(0);
    sweep_max.max(cfg.sweep.radius_samples).max(1)
}

fn parse_algorithm(name: &str) -> Result<MetaAlgorithm> {
    match name {
        "fomaml" => Ok(MetaAlgorithm::Fomaml),
        "reptile" => Ok(MetaAlgorithm::Reptile),
        other => Err(Error::Config(format!(
            "unknown algorithm {other:?} (expected \"fomaml\" or \"reptile\")"
        ))),
    }
}

fn read_params(path: &Path) -> Result<Params64> {
    let mut file = std::io::BufReader::new(fs::File::open(path)?);
    RegnnParams::read_checkpoint(&mut file)
}

fn write_params(params: &Params64, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    params.write_checkpoint(&mut file)
}

fn emit_sweep_outputs(
    cfg: &ExperimentConfig,
    rows: &[ResultRow],
    stem: &str,
) -> Result<()> {
    let dir = out_dir(cfg)?;
    let csv_path = dir.join(format!("{stem}-results.csv"));
    write_csv_file(rows, &csv_path)?;
    write_manifest(cfg, &dir.join(format!("{stem}-manifest.toml")))?;
    println!("wrote {}", csv_path.display());
    let mut stdout = std::io::stdout().lock();
    write_report(&aggregate(rows), &mut stdout)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.verb {
        Verb::GenData { common } => {
            let cfg = load_config(&common)?;
            let seed = rep_seed(cfg.experiment.seed, 0, 0);
            let set = build_task_set(
                &cfg,
                cfg.network.interference_radius,
                seed,
                default_pool(&cfg),
            )?;
            let dir = out_dir(&cfg)?.join("dataset");
            write_task_set(&set, &dir)?;
            println!(
                "wrote {} meta tasks and the test task to {}",
                set.tasks.len(),
                dir.display()
            );
        }
        Verb::MetaTrain { common, algorithm } => {
            let cfg = load_config(&common)?;
            let algorithm = parse_algorithm(&algorithm)?;
            let seed = rep_seed(cfg.experiment.seed, 0, 0);
            let tasks = build_meta_tasks(&cfg, cfg.network.interference_radius, seed)?;
            let phi0 = draw_init(&cfg, seed, &tasks[0])?;
            let (phi, log) = train_meta(&cfg, algorithm, phi0, &tasks, seed)?;
            let dir = out_dir(&cfg)?;
            let ckpt = dir.join(format!("{algorithm}.ckpt"));
            write_params(&phi, &ckpt)?;
            let mut log_file = fs::File::create(dir.join(format!("{algorithm}-train.csv")))?;
            write_training_log(&log, &mut log_file)?;
            if let Some(last) = log.last() {
                println!(
                    "{algorithm}: meta objective {} bits after {} outer steps",
                    last.meta_objective,
                    log.len()
                );
            }
            println!("wrote {}", ckpt.display());
        }
        Verb::Adapt {
            common,
            ckpt,
            samples,
            steps,
        } => {
            let cfg = load_config(&common)?;
            let phi = read_params(&ckpt)?;
            let seed = rep_seed(cfg.experiment.seed, 0, 0);
            let pool = default_pool(&cfg).max(samples);
            let test = build_test_task(&cfg, cfg.network.interference_radius, seed, pool)?;
            if samples == 0 || samples > test.train_slots().len() {
                return Err(Error::Config(format!(
                    "adaptation wants {samples} samples, pool holds {}",
                    test.train_slots().len()
                )));
            }
            let config = regnn_core::TrainConfig64 {
                learning_rate: cfg.adaptation.rate,
                steps: steps.unwrap_or(cfg.adaptation.joint_steps),
                batch_size: samples,
                seed,
                output_rate_scale: 1.0,
};
            let slots = &test.train_slots()[..samples];
            let adapted = regnn_core::trainers::adapt(&phi, &test, slots, &config)?;
            let score = regnn_core::trainers::evaluate(&adapted, &test, test.test_slots())?;
            println!("sum_rate_bits={score}");
            let out = out_dir(&cfg)?.join("adapted.ckpt");
            write_params(&adapted, &out)?;
            println!("wrote {}", out.display());
        }
        Verb::Eval { common, ckpt } => {
            let cfg = load_config(&common)?;
            let phi = read_params(&ckpt)?;
            let seed = rep_seed(cfg.experiment.seed, 0, 0);
            let test = build_test_task(
                &cfg,
                cfg.network.interference_radius,
                seed,
                default_pool(&cfg),
            )?;
            let score = eval_only(&phi, &test)?;
            println!("sum_rate_bits={score}");
        }
        Verb::SweepSamples { common } => {
            let cfg = load_config(&common)?;
            let rows = run_sample_sweep(&cfg)?;
            emit_sweep_outputs(&cfg, &rows, "samples")?;
        }
        Verb::SweepRadius { common } => {
            let cfg = load_config(&common)?;
            let rows = run_radius_sweep(&cfg)?;
            emit_sweep_outputs(&cfg, &rows, "radius")?;
        }
        Verb::Report { common, input } => {
            let text = fs::read_to_string(&input)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
            let rows = parse_csv(&text)?;
            let aggregates = aggregate(&rows);
            let mut stdout = std::io::stdout().lock();
            write_report(&aggregates, &mut stdout)?;
            if let Some(out) = &common.out {
                let mut buf = Vec::new();
                write_report(&aggregates, &mut buf)?;
                fs::write(out, buf)?;
                println!("wrote {}", out.display());
            }
            let _ = common.seed;
        }
    }
    Ok(())
}

/// 1 for configuration and I/O problems, 2 for numerical failures.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } | Error::Domain(_) | Error::CoincidentEndpoints { .. } => 2,
        _ => 1,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Clap's own exit code for usage errors collides with the
            // numerical-failure code; keep usage problems at 1.
            let _ = err.print();
            std::process::exit(if err.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(err) = run(cli) {
        // A reader closing stdout mid-report is not a failure.
        if let Error::Io(io) = &err {
            if io.kind() == std::io::ErrorKind::BrokenPipe {
                return;
            }
        }
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
