//! Benchmark command line: generate | pretrain | adapt | eval | report.
//!
//! Exit codes: 0 success, 1 runtime failure (I/O, training, evaluation),
//! 2 configuration problems (including CLI misuse, via clap).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use mosa_core::harness::{
    cmd_adapt, cmd_eval, cmd_generate, cmd_pretrain, cmd_report, ExperimentConfig,
};
use mosa_core::Result;

#[derive(Parser)]
#[command(
    name = "mosa-bench",
    version,
    about = "Benchmark for low-rank motion style adapters on a synthetic trajectory world"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (key = value lines). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config's seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct AdaptArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Worker threads for independent sweep cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file with the samples.
    #[arg(long)]
    data: PathBuf,
    /// Scenes file; defaults to scenes.json next to the dataset.
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Hypotheses scored by the Top-K metrics; defaults to the model's k.
    #[arg(long)]
    k: Option<usize>,
    /// Also write the result as a one-row CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV produced by the adapt command.
    #[arg(long)]
    results: PathBuf,
    /// Output path; defaults to report.csv next to the input.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the scenario's scenes file and all six dataset splits.
    Generate(RunArgs),
    /// Train the source model and write checkpoint plus loss curve.
    Pretrain(RunArgs),
    /// Run the adaptation sweep and write results.csv plus per-cell checkpoints.
    Adapt(AdaptArgs),
    /// Evaluate one checkpoint on one dataset.
    Eval(EvalArgs),
    /// Aggregate results.csv over seeds (mean and sample std per cell).
    Report(ReportArgs),
}

fn load_config(run: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &run.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &run.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = run.seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(args) => {
            let cfg = load_config(&args)?;
            let summary = cmd_generate(&cfg)?;
            println!("scenario {}: {} scenes", cfg.scenario, summary.scenes);
            for (path, n) in &summary.splits {
                println!("  {}: {} samples", path.display(), n);
            }
        }
        Command::Pretrain(args) => {
            let cfg = load_config(&args)?;
            let summary = cmd_pretrain(&cfg)?;
            println!(
                "pretrained {} epochs, checkpoint {}",
                summary.epochs_run,
                summary.checkpoint.display()
            );
            if let Some(best) = summary.best {
                println!(
                    "best epoch {}: val ADE {:.6}, val FDE {:.6}, val Top-K FDE {:.6}",
                    best.epoch, best.val.ade, best.val.fde, best.val.topk_fde
                );
            }
            println!("loss curve {}", summary.curve.display());
        }
        Command::Adapt(args) => {
            let cfg = load_config(&args.run)?;
            let summary = cmd_adapt(&cfg, args.jobs)?;
            println!(
                "adapted {} cells, results {}",
                summary.rows.len(),
                summary.results.display()
            );
        }
        Command::Eval(args) => {
            let scenes = args.scenes.clone().unwrap_or_else(|| {
                args.data
                    .parent()
                    .unwrap_or_else(|| std::path::Path::new("."))
                    .join("scenes.json")
            });
            let row = cmd_eval(
                &args.checkpoint,
                &args.data,
                &scenes,
                args.k,
                args.out.as_deref(),
            )?;
            println!(
                "{} on {} ({} samples, k={}):",
                row.checkpoint, row.dataset, row.n_samples, row.k
            );
            println!(
                "  ADE {:.6}  FDE {:.6}  Top-K ADE {:.6}  Top-K FDE {:.6}",
                row.ade, row.fde, row.topk_ade, row.topk_fde
            );
        }
        Command::Report(args) => {
            let out = args
                .out
                .clone()
                .unwrap_or_else(|| args.results.with_file_name("report.csv"));
            let summary = cmd_report(&args.results, &out)?;
            println!(
                "aggregated {} cells into {}",
                summary.rows.len(),
                summary.report.display()
            );
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(e.exit_code());
    }
}
