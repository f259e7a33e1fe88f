//! The five experiment commands behind the CLI: generate, pretrain, adapt,
//! eval, report. Each is a plain function returning a summary struct; the
//! binary does the printing, which keeps the commands testable without
//! capturing stdout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::forecastnet::Forecaster;
use crate::harness::config::ExperimentConfig;
use crate::harness::files::{
    load_checkpoint, load_dataset, load_scenes, read_results_csv, save_checkpoint, save_dataset,
    save_scenes, write_csv, CurveRow, EvalRow, ReportRow, ResultRow,
};
use crate::metrics::evaluate;
use crate::mosa::{AdaptMethod, ModularMask};
use crate::rng::{derive_seed, SplitMix64};
use crate::synthworld::{generate_dataset, scenario_preset, Dataset};
use crate::trainkit::{adapt, pretrain, EpochRecord};

// Split salts: each dataset file draws from its own stream off the master
// seed, so changing one split's size never perturbs the others.
const SALT_SOURCE_TRAIN: u64 = 11;
const SALT_SOURCE_VAL: u64 = 12;
const SALT_SOURCE_TEST: u64 = 13;
const SALT_TARGET_ADAPT: u64 = 21;
const SALT_TARGET_VAL: u64 = 22;
const SALT_TARGET_TEST: u64 = 23;
/// Per-cell subsampling of the target adapt pool.
const SALT_SUBSAMPLE: u64 = 31;

/// Canonical file locations inside an experiment's output directory.
#[derive(Debug, Clone)]
pub struct SplitPaths {
    pub scenes: PathBuf,
    pub source_train: PathBuf,
    pub source_val: PathBuf,
    pub source_test: PathBuf,
    pub target_adapt: PathBuf,
    pub target_val: PathBuf,
    pub target_test: PathBuf,
    pub checkpoint: PathBuf,
    pub pretrain_curve: PathBuf,
    pub adapted_dir: PathBuf,
    pub results: PathBuf,
    pub report: PathBuf,
}

impl SplitPaths {
    pub fn new(out_dir: &Path) -> Self {
        SplitPaths {
            scenes: out_dir.join("scenes.json"),
            source_train: out_dir.join("source_train.json"),
            source_val: out_dir.join("source_val.json"),
            source_test: out_dir.join("source_test.json"),
            target_adapt: out_dir.join("target_adapt.json"),
            target_val: out_dir.join("target_val.json"),
            target_test: out_dir.join("target_test.json"),
            checkpoint: out_dir.join("checkpoint.json"),
            pretrain_curve: out_dir.join("pretrain_curve.csv"),
            adapted_dir: out_dir.join("adapted"),
            results: out_dir.join("results.csv"),
            report: out_dir.join("report.csv"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub scenes: usize,
    /// (file, sample count) per dataset split, in write order.
    pub splits: Vec<(PathBuf, usize)>,
}

/// Writes the scenario's scenes file and all six dataset splits.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<GenerateSummary> {
    let scenario = scenario_preset(&cfg.scenario)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let paths = SplitPaths::new(&cfg.out_dir);

    let scenes = scenario.all_scenes()?;
    save_scenes(&paths.scenes, &scenes)?;

    let source_scenes = scenario.scenes_for(&scenario.source)?;
    let target_scenes = scenario.scenes_for(&scenario.target)?;
    let (t_obs, t_pred) = (cfg.model.t_obs, cfg.model.t_pred);
    let jobs: [(&PathBuf, &[_], &_, usize, u64); 6] = [
        (&paths.source_train, &source_scenes, &scenario.source.style, cfg.data.source_train, SALT_SOURCE_TRAIN),
        (&paths.source_val, &source_scenes, &scenario.source.style, cfg.data.source_val, SALT_SOURCE_VAL),
        (&paths.source_test, &source_scenes, &scenario.source.style, cfg.data.source_test, SALT_SOURCE_TEST),
        (&paths.target_adapt, &target_scenes, &scenario.target.style, cfg.data.target_adapt, SALT_TARGET_ADAPT),
        (&paths.target_val, &target_scenes, &scenario.target.style, cfg.data.target_val, SALT_TARGET_VAL),
        (&paths.target_test, &target_scenes, &scenario.target.style, cfg.data.target_test, SALT_TARGET_TEST),
    ];
    let mut splits = Vec::new();
    for (path, grids, style, n, salt) in jobs {
        let data = generate_dataset(grids, style, n, t_obs, t_pred, derive_seed(cfg.seed, salt))?;
        save_dataset(path, &data)?;
        splits.push((path.clone(), data.len()));
    }
    Ok(GenerateSummary {
        scenes: scenes.len(),
        splits,
    })
}

#[derive(Debug, Clone)]
pub struct PretrainSummary {
    pub checkpoint: PathBuf,
    pub curve: PathBuf,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Record of the best epoch; absent for zero-epoch runs.
    pub best: Option<EpochRecord>,
}

/// Pretrains on the source splits and writes the checkpoint plus the
/// per-epoch loss curve.
pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<PretrainSummary> {
    let paths = SplitPaths::new(&cfg.out_dir);
    let scenes = load_scenes(&paths.scenes)?;
    let train = load_dataset(&paths.source_train, &scenes)?;
    let val = load_dataset(&paths.source_val, &scenes)?;
    let model = Forecaster::new(cfg.model.clone())?;
    let outcome = pretrain(&model, &train, &val, &cfg.pretrain_train_config())?;
    save_checkpoint(&paths.checkpoint, &outcome.model)?;
    let curve: Vec<CurveRow> = outcome
        .history
        .iter()
        .map(|r| CurveRow {
            epoch: r.epoch,
            train_loss: r.train_loss,
            val_ade: r.val.ade,
            val_fde: r.val.fde,
        })
        .collect();
    write_csv(&paths.pretrain_curve, &curve)?;
    let best = outcome
        .history
        .iter()
        .find(|r| r.epoch == outcome.best_epoch)
        .copied();
    Ok(PretrainSummary {
        checkpoint: paths.checkpoint,
        curve: paths.pretrain_curve,
        epochs_run: outcome.epochs_run,
        best_epoch: outcome.best_epoch,
        best,
    })
}

/// One point of the adaptation sweep, after collapsing the mask axis for
/// methods that adapt a fixed set and the rank axis for methods without a
/// rank. `rank` still carries a valid value for TrainConfig; the display
/// strings are what the CSV shows.
#[derive(Debug, Clone)]
struct Cell {
    method: AdaptMethod,
    mask: ModularMask,
    rank: usize,
    mask_label: String,
    rank_label: String,
    n_target: usize,
    seed: u64,
}

impl Cell {
    fn id(&self) -> String {
        format!(
            "{}_{}_{}_n{}_s{}",
            self.method, self.mask_label, self.rank_label, self.n_target, self.seed
        )
    }
}

fn sweep_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &method in &cfg.adapt.methods {
        let masks: Vec<(ModularMask, String)> = if method.uses_mask() {
            cfg.adapt.masks.iter().map(|m| (*m, m.to_string())).collect()
        } else {
            vec![(ModularMask::ALL, "-".to_string())]
        };
        let ranks: Vec<(usize, String)> = if method.uses_rank() {
            cfg.adapt.ranks.iter().map(|r| (*r, r.to_string())).collect()
        } else if method == AdaptMethod::Pa {
            vec![(1, "full".to_string())]
        } else {
            vec![(1, "-".to_string())]
        };
        for (mask, mask_label) in &masks {
            for (rank, rank_label) in &ranks {
                for &n_target in &cfg.adapt.n_targets {
                    for &seed in &cfg.adapt.seeds {
                        cells.push(Cell {
                            method,
                            mask: *mask,
                            rank: *rank,
                            mask_label: mask_label.clone(),
                            rank_label: rank_label.clone(),
                            n_target,
                            seed,
                        });
                    }
                }
            }
        }
    }
    cells
}

/// Draws the cell's adaptation set: shuffle the pool with the cell seed,
/// keep the first `n`. Cells with the same seed see the same subsample
/// regardless of method, which pairs the method comparison.
fn subsample(pool: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let mut samples = pool.samples.clone();
    SplitMix64::new(derive_seed(seed, SALT_SUBSAMPLE)).shuffle(&mut samples);
    Dataset::new(samples, pool.scenes.clone())?.truncated(n)
}

#[derive(Debug, Clone)]
pub struct AdaptSummary {
    pub results: PathBuf,
    pub rows: Vec<ResultRow>,
    pub checkpoints: Vec<PathBuf>,
}

fn run_cell(
    cfg: &ExperimentConfig,
    base: &Forecaster,
    pool: &Dataset,
    val: &Dataset,
    test: &Dataset,
    adapted_dir: &Path,
    cell: &Cell,
) -> Result<(ResultRow, PathBuf)> {
    let subset = subsample(pool, cell.n_target, cell.seed)?;
    let tc = cfg.adapt_train_config(cell.method, cell.mask, cell.rank, cell.seed);
    let outcome = adapt(base, &subset, val, &tc)?;
    let report = evaluate(&outcome.model, test, base.config.k_modes)?;
    let path = adapted_dir.join(format!("{}.json", cell.id()));
    save_checkpoint(&path, &outcome.model)?;
    Ok((
        ResultRow {
            scenario: cfg.scenario.clone(),
            method: cell.method.to_string(),
            mask: cell.mask_label.clone(),
            rank: cell.rank_label.clone(),
            n_target: cell.n_target,
            seed: cell.seed,
            ade: report.ade,
            fde: report.fde,
            topk_ade: report.topk_ade,
            topk_fde: report.topk_fde,
            trainable_params: outcome.trainable_params,
            epochs_run: outcome.epochs_run,
        },
        path,
    ))
}

/// Runs the full adaptation sweep against the pretrained checkpoint and
/// writes one results row plus one adapted checkpoint per cell. `jobs > 1`
/// distributes cells over threads; rows are sorted before writing, so the
/// output file does not depend on scheduling.
pub fn cmd_adapt(cfg: &ExperimentConfig, jobs: usize) -> Result<AdaptSummary> {
    let paths = SplitPaths::new(&cfg.out_dir);
    let scenes = load_scenes(&paths.scenes)?;
    let pool = load_dataset(&paths.target_adapt, &scenes)?;
    let val = load_dataset(&paths.target_val, &scenes)?;
    let test = load_dataset(&paths.target_test, &scenes)?;
    let base = load_checkpoint(&paths.checkpoint)?;
    std::fs::create_dir_all(&paths.adapted_dir).map_err(|e| Error::io(&paths.adapted_dir, e))?;

    let cells = sweep_cells(cfg);
    let jobs = jobs.max(1).min(cells.len().max(1));
    let queue: Mutex<std::vec::IntoIter<Cell>> = Mutex::new(cells.into_iter());
    let done: Mutex<Vec<(ResultRow, PathBuf)>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    return;
                }
                let Some(cell) = queue.lock().unwrap().next() else {
                    return;
                };
                match run_cell(cfg, &base, &pool, &val, &test, &paths.adapted_dir, &cell) {
                    Ok(row) => done.lock().unwrap().push(row),
                    Err(e) => {
                        let wrapped = Error::Cell {
                            cell: cell.id(),
                            source: Box::new(e),
                        };
                        failure.lock().unwrap().get_or_insert(wrapped);
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut finished = done.into_inner().unwrap();
    finished.sort_by(|(a, _), (b, _)| {
        (&a.method, &a.mask, &a.rank, a.n_target, a.seed).cmp(&(
            &b.method, &b.mask, &b.rank, b.n_target, b.seed,
        ))
    });
    let (rows, checkpoints): (Vec<ResultRow>, Vec<PathBuf>) = finished.into_iter().unzip();
    write_csv(&paths.results, &rows)?;
    Ok(AdaptSummary {
        results: paths.results,
        rows,
        checkpoints,
    })
}

/// Evaluates a checkpoint file on a dataset file. `k` defaults to the
/// model's hypothesis count; `out` writes the row as a one-line CSV.
pub fn cmd_eval(
    checkpoint: &Path,
    data: &Path,
    scenes: &Path,
    k: Option<usize>,
    out: Option<&Path>,
) -> Result<EvalRow> {
    let model = load_checkpoint(checkpoint)?;
    let dataset = load_dataset(data, &load_scenes(scenes)?)?;
    let k = k.unwrap_or(model.config.k_modes);
    let report = evaluate(&model, &dataset, k)?;
    let row = EvalRow {
        checkpoint: checkpoint.display().to_string(),
        dataset: data.display().to_string(),
        n_samples: report.n_samples,
        k,
        ade: report.ade,
        fde: report.fde,
        topk_ade: report.topk_ade,
        topk_fde: report.topk_fde,
    };
    if let Some(path) = out {
        write_csv(path, std::slice::from_ref(&row))?;
    }
    Ok(row)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub report: PathBuf,
    pub rows: Vec<ReportRow>,
}

/// Aggregates a results CSV over seeds: mean and sample standard deviation
/// per (scenario, method, mask, rank, n_target) cell.
pub fn cmd_report(results: &Path, out: &Path) -> Result<ReportSummary> {
    let rows = read_results_csv(results)?;
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "results CSV {} has no data rows",
            results.display()
        )));
    }
    let mut groups: BTreeMap<(String, String, String, String, usize), Vec<&ResultRow>> =
        BTreeMap::new();
    for row in &rows {
        groups
            .entry((
                row.scenario.clone(),
                row.method.clone(),
                row.mask.clone(),
                row.rank.clone(),
                row.n_target,
            ))
            .or_default()
            .push(row);
    }
    let mut out_rows = Vec::with_capacity(groups.len());
    for ((scenario, method, mask, rank, n_target), members) in groups {
        let col = |f: fn(&ResultRow) -> f64| -> Vec<f64> { members.iter().map(|r| f(r)).collect() };
        let (ade_mean, ade_std) = mean_std(&col(|r| r.ade));
        let (fde_mean, fde_std) = mean_std(&col(|r| r.fde));
        let (topk_ade_mean, topk_ade_std) = mean_std(&col(|r| r.topk_ade));
        let (topk_fde_mean, topk_fde_std) = mean_std(&col(|r| r.topk_fde));
        let (epochs_run_mean, _) = mean_std(&col(|r| r.epochs_run as f64));
        out_rows.push(ReportRow {
            scenario,
            method,
            mask,
            rank,
            n_target,
            n_seeds: members.len(),
            ade_mean,
            ade_std,
            fde_mean,
            fde_std,
            topk_ade_mean,
            topk_ade_std,
            topk_fde_mean,
            topk_fde_std,
            trainable_params: members[0].trainable_params,
            epochs_run_mean,
        });
    }
    write_csv(out, &out_rows)?;
    Ok(ReportSummary {
        report: out.to_path_buf(),
        rows: out_rows,
    })
}
