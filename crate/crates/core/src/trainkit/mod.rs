//! Optimizer and training loops: source-domain pretraining and the
//! few-shot adaptation procedure shared by every method.
//!
//! Both procedures run minibatch Adam on the min-of-K variety loss, shuffle
//! once per epoch with a seeded generator (last partial batch kept), track
//! the checkpoint with the best validation Top-K FDE, and stop early after
//! `patience` epochs without improvement. There is no learning-rate
//! schedule; constant LR plus early stopping is the whole protocol.
//! Adaptation differs from pretraining only in which parameters train
//! (chosen by [`select_trainables`]) and in recording an epoch-0 row so
//! the unadapted model participates in best-checkpoint selection.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::diffcore::{ParamId, ParamSet, Tape};
use crate::error::{Error, Result};
use crate::forecastnet::{base_weight_hash, Forecaster};
use crate::metrics::{evaluate, EvalReport};
use crate::mosa::{
    select_trainables, AdaptMethod, AdaptSetup, ModularMask, DEFAULT_INIT_STD, DEFAULT_RANK,
};
use crate::rng::{derive_seed, SplitMix64};
use crate::synthworld::Dataset;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Protocol batch size.
pub const DEFAULT_BATCH_SIZE: usize = 10;
/// Protocol early-stop patience, in epochs.
pub const DEFAULT_PATIENCE: usize = 30;

// Stream salts, so shuffling and adapter initialization draw from
// unrelated sequences even though both descend from `TrainConfig::seed`.
const SALT_SHUFFLE: u64 = 0x5348_5546;
const SALT_ADAPTER: u64 = 0x4144_4150;

/// Hyperparameters for one training or adaptation run.
///
/// `method`, `mask`, `rank`, and `init_std` only matter to [`adapt`];
/// [`pretrain`] always trains every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub method: AdaptMethod,
    pub mask: ModularMask,
    pub rank: usize,
    pub init_std: f64,
}

impl TrainConfig {
    /// Protocol defaults for a method: its published learning rate, batch
    /// size 10, up to 300 epochs with patience 30, rank-3 adapters on all
    /// modules.
    pub fn for_method(method: AdaptMethod, seed: u64) -> Self {
        TrainConfig {
            lr: method.default_lr(),
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: 300,
            patience: DEFAULT_PATIENCE,
            seed,
            method,
            mask: ModularMask::ALL,
            rank: DEFAULT_RANK,
            init_std: DEFAULT_INIT_STD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config(format!(
                "lr must be positive and finite, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        // max_epochs == 0 is the degenerate "return the initialization"
        // run; the patience bound only binds when training happens.
        if self.max_epochs > 0 && self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience ({}) must not exceed max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Adam moment estimates, keyed by parameter id and allocated lazily the
/// first time a parameter is updated.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    step: u64,
    m: BTreeMap<ParamId, Vec<f64>>,
    v: BTreeMap<ParamId, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update over the trainable parameters, reading
/// the gradients accumulated by the preceding backward passes. Frozen
/// parameters are untouched bit-exact and get no moment buffers.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState, lr: f64) -> Result<()> {
    if !lr.is_finite() || lr <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "adam_step needs a positive finite lr, got {lr}"
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        if !params.get(id).trainable {
            continue;
        }
        let n = params.get(id).value.numel();
        let m = state.m.entry(id).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(id).or_insert_with(|| vec![0.0; n]);
        if m.len() != n || v.len() != n {
            return Err(Error::Shape {
                op: "adam_step",
                detail: format!(
                    "moment buffers hold {} entries but parameter `{}` has {n}",
                    m.len(),
                    params.get(id).name
                ),
            });
        }
        let p = params.get_mut(id);
        let value = p.value.data_mut();
        for i in 0..n {
            let g = p.grad[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            value[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Metrics recorded once per epoch. Epoch 0, when present, measures the
/// model before any update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean variety loss over the training set. For epoch 0 this is a
    /// forward-only evaluation; otherwise it averages the minibatch losses
    /// seen during the epoch (so it reflects the moving parameters).
    pub train_loss: f64,
    pub val: EvalReport,
}

/// Result of a training or adaptation run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The checkpoint with the lowest validation Top-K FDE; earliest epoch
    /// wins ties.
    pub model: Forecaster,
    pub history: Vec<EpochRecord>,
    /// Epoch of the returned checkpoint (0 = initialization).
    pub best_epoch: usize,
    /// Training epochs actually executed; excludes the epoch-0 row.
    pub epochs_run: usize,
    /// Scalar entries in the trainable set.
    pub trainable_params: usize,
    pub trainable_names: Vec<String>,
}

/// Mean variety loss over a dataset, forward passes only.
pub fn mean_loss(model: &Forecaster, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot average loss over an empty dataset".into()));
    }
    let mut total = 0.0;
    for s in &data.samples {
        let mut tape = Tape::new();
        let loss = model.loss_on_tape(&mut tape, data.scene(&s.scene_id)?, &s.past, &s.future)?;
        total += tape.value(loss).item();
    }
    Ok(total / data.len() as f64)
}

fn train_loop(
    mut model: Forecaster,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    record_epoch0: bool,
) -> Result<TrainOutcome> {
    let trainable_params = model.params().trainable_entries();
    let trainable_names = model.params().trainable_names();
    let k = model.config.k_modes;
    let mut shuffle_rng = SplitMix64::new(derive_seed(cfg.seed, SALT_SHUFFLE));

    let mut history = Vec::new();
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut best_fde = f64::INFINITY;
    if record_epoch0 {
        let record = EpochRecord {
            epoch: 0,
            train_loss: mean_loss(&model, train)?,
            val: evaluate(&model, val, k)?,
        };
        best_fde = record.val.topk_fde;
        history.push(record);
    }

    let mut adam = AdamState::new();
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            model.params_mut().zero_grads();
            // Per-sample tapes; gradients accumulate in the ParamSet, so
            // seeding each backward with 1/|batch| yields the batch-mean
            // gradient.
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let s = &train.samples[i];
                let grid = train.scene(&s.scene_id)?;
                let mut tape = Tape::new();
                let loss = model.loss_on_tape(&mut tape, grid, &s.past, &s.future)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        epoch,
                        batch: batch_idx,
                        value,
                    });
                }
                tape.backward_seeded(loss, scale, model.params_mut())?;
                loss_sum += value;
            }
            adam_step(model.params_mut(), &mut adam, cfg.lr)?;
        }
        epochs_run = epoch;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val: evaluate(&model, val, k)?,
        };
        let fde = record.val.topk_fde;
        history.push(record);
        if fde < best_fde {
            best_fde = fde;
            best_model = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        model: best_model,
        history,
        best_epoch,
        epochs_run,
        trainable_params,
        trainable_names,
    })
}

/// Trains every parameter of `init` on the source data, returning the
/// checkpoint with the best validation Top-K FDE. With `max_epochs == 0`
/// the initialization itself is returned and the history is empty.
pub fn pretrain(
    init: &Forecaster,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.max_epochs > 0 && (train.is_empty() || val.is_empty()) {
        return Err(Error::InvalidArgument(
            "pretraining needs non-empty train and validation sets".into(),
        ));
    }
    let mut model = init.clone();
    model.params_mut().set_all_trainable(true);
    train_loop(model, train, val, cfg, false)
}

/// Adapts a pretrained checkpoint to a (typically small) target dataset.
///
/// The trainable set is chosen by `cfg.method` (plus mask/rank for the
/// adapter methods); everything else stays frozen, which for MOSA/PA is
/// additionally asserted via a bitwise hash of the base weights. The
/// history starts with an epoch-0 row measuring the unadapted model, and
/// that row participates in best-checkpoint selection, so adaptation can
/// never return something worse than what it started from (as measured on
/// the validation set).
pub fn adapt(
    base: &Forecaster,
    target_train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if target_train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "adaptation needs non-empty target and validation sets".into(),
        ));
    }
    let mut model = base.clone();
    let setup = AdaptSetup {
        method: cfg.method,
        mask: cfg.mask,
        rank: cfg.rank,
        init_std: cfg.init_std,
        seed: derive_seed(cfg.seed, SALT_ADAPTER),
    };
    select_trainables(&mut model, &setup)?;
    let frozen = matches!(cfg.method, AdaptMethod::Pa | AdaptMethod::Mosa)
        .then(|| base_weight_hash(&model));
    let outcome = train_loop(model, target_train, val, cfg, true)?;
    if let Some(before) = frozen {
        debug_assert_eq!(
            base_weight_hash(&outcome.model),
            before,
            "frozen-base contract violated: base weights changed during {} adaptation",
            cfg.method
        );
    }
    Ok(outcome)
}
