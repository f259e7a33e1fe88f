//! Low-rank motion style adapters.
//!
//! An adapter wraps a frozen base weight W (d_out x d_in) with a trainable
//! low-rank delta factored as B A, where A is r x d_in (Gaussian init) and
//! B is d_out x r (zero init). Because B starts at zero the adapted model
//! computes exactly what the base model computes until training moves B;
//! the forward pass applies the branch as two rank-r products, never
//! materializing the dense delta. [`merge`] folds trained branches back
//! into plain weights for deployment, and [`numeric_rank`] verifies that a
//! materialized delta really has rank at most r.
//!
//! This module also owns the adaptation method taxonomy used by the
//! benchmark: full fine-tuning, encoder-only tuning, norm-only tuning,
//! full-rank parallel residuals, and low-rank adapters, plus the modular
//! mask that restricts adapters to subsets of the model's modules.

use std::collections::BTreeSet;
use std::fmt;

use crate::diffcore::{ParamId, Tensor};
use crate::error::{Error, Result};
use crate::forecastnet::{Forecaster, ModuleTag, ParamKind, ParamMeta};
use crate::rng::SplitMix64;

/// Default adapter rank.
pub const DEFAULT_RANK: usize = 3;
/// Default standard deviation for the Gaussian init of A.
pub const DEFAULT_INIT_STD: f64 = 0.02;

/// What to inject: rank, target base weights, and the init distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterSpec {
    pub rank: usize,
    /// Base weight names, e.g. `S.lin1.w`. Order defines the init draw
    /// order, so it is part of the reproducibility contract.
    pub targets: Vec<String>,
    pub init_std: f64,
    pub seed: u64,
}

/// Handles to one injected adapter: the wrapped base weight and the A/B
/// factors living in the model's parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdapterPair {
    pub base: ParamId,
    pub a: ParamId,
    pub b: ParamId,
    pub rank: usize,
}

/// Base weights that may carry an adapter: the encoder linear weights, the
/// fusion attention query and value projections, and the fusion output
/// mix. Attention key/output projections and the decoder are never
/// adapted.
pub fn adaptable_targets() -> Vec<&'static str> {
    vec![
        "S.lin1.w",
        "S.lin2.w",
        "A.lin1.w",
        "A.lin2.w",
        "F.attn.wq",
        "F.attn.wv",
        "F.out.w",
    ]
}

/// Restriction of adapter targets to a subset of modules.
///
/// `all` (every adaptable module) is the default; named masks pick any
/// non-empty subset of scene (S), motion (A), and fusion (F). The decoder
/// is never adaptable, so it has no mask bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModularMask {
    pub scene: bool,
    pub motion: bool,
    pub fusion: bool,
}

impl ModularMask {
    pub const ALL: ModularMask = ModularMask {
        scene: true,
        motion: true,
        fusion: true,
    };

    /// Parses `all` (or the empty string) or a `+`-joined subset of
    /// `S`, `A`, `F`, e.g. `A` or `S+F`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("all") {
            return Ok(ModularMask::ALL);
        }
        let mut mask = ModularMask {
            scene: false,
            motion: false,
            fusion: false,
        };
        for tok in s.split('+') {
            match tok.trim() {
                "S" => mask.scene = true,
                "A" => mask.motion = true,
                "F" => mask.fusion = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown module `{other}` in mask `{s}` (expected S, A, F, or all)"
                    )))
                }
            }
        }
        Ok(mask)
    }

    pub fn includes(self, tag: ModuleTag) -> bool {
        match tag {
            ModuleTag::Scene => self.scene,
            ModuleTag::Motion => self.motion,
            ModuleTag::Fusion => self.fusion,
            ModuleTag::Decoder => false,
        }
    }
}

impl fmt::Display for ModularMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == ModularMask::ALL {
            return write!(f, "all");
        }
        let mut parts = Vec::new();
        if self.scene {
            parts.push("S");
        }
        if self.motion {
            parts.push("A");
        }
        if self.fusion {
            parts.push("F");
        }
        write!(f, "{}", parts.join("+"))
    }
}

/// Adapter targets selected by a mask, in canonical order.
pub fn mosa_targets(mask: ModularMask) -> Vec<String> {
    let mut out = Vec::new();
    if mask.scene {
        out.push("S.lin1.w".to_string());
        out.push("S.lin2.w".to_string());
    }
    if mask.motion {
        out.push("A.lin1.w".to_string());
        out.push("A.lin2.w".to_string());
    }
    if mask.fusion {
        out.push("F.attn.wq".to_string());
        out.push("F.attn.wv".to_string());
        out.push("F.out.w".to_string());
    }
    out
}

impl AdapterSpec {
    /// Spec with the full default target set.
    pub fn with_defaults(rank: usize, seed: u64) -> Self {
        AdapterSpec {
            rank,
            targets: mosa_targets(ModularMask::ALL),
            init_std: DEFAULT_INIT_STD,
            seed,
        }
    }

    /// Checks the spec against a concrete model: positive rank no larger
    /// than any target's smaller dimension, positive init std, and targets
    /// that are distinct, adaptable, and not already wrapped.
    pub fn validate(&self, model: &Forecaster) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("adapter rank must be at least 1".into()));
        }
        if !(self.init_std > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "adapter init_std must be positive, got {}",
                self.init_std
            )));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidArgument("adapter spec has no targets".into()));
        }
        let allowed: BTreeSet<&str> = adaptable_targets().into_iter().collect();
        let mut seen = BTreeSet::new();
        for t in &self.targets {
            if !seen.insert(t.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate adapter target `{t}`")));
            }
            if !allowed.contains(t.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "`{t}` is not an adaptable weight (allowed: {})",
                    adaptable_targets().join(", ")
                )));
            }
            let id = model.params().id(t)?;
            let (d_out, d_in) = model
                .params()
                .value(id)
                .dims2()
                .expect("adaptable targets are matrices");
            let max_rank = d_out.min(d_in);
            if self.rank > max_rank {
                return Err(Error::InvalidArgument(format!(
                    "rank {} exceeds min dimension {max_rank} of `{t}`",
                    self.rank
                )));
            }
            if model.adapters().contains_key(t) || model.residuals().contains_key(t) {
                return Err(Error::InvalidArgument(format!("`{t}` is already adapted")));
            }
        }
        Ok(())
    }
}

/// Injects low-rank adapters into the model in place. A factors are drawn
/// Gaussian(0, init_std^2) from the spec seed in target order; B factors
/// start at zero, so the adapted model's outputs are bit-identical to the
/// base model's until training updates B. New parameters are registered as
/// `<target>.adapter.a` / `<target>.adapter.b`, trainable.
pub fn inject(model: &mut Forecaster, spec: &AdapterSpec) -> Result<()> {
    spec.validate(model)?;
    let mut rng = SplitMix64::new(spec.seed);
    for target in &spec.targets {
        let base = model.params().id(target)?;
        let (d_out, d_in) = model.params().value(base).dims2().expect("validated");
        let tag = model.meta(base).tag;
        let a_data: Vec<f64> = (0..spec.rank * d_in)
            .map(|_| rng.gaussian(0.0, spec.init_std))
            .collect();
        let a = model.attach_param(
            &format!("{target}.adapter.a"),
            Tensor::new(vec![spec.rank, d_in], a_data)?,
            ParamMeta { tag, kind: ParamKind::AdapterA },
            true,
        )?;
        let b = model.attach_param(
            &format!("{target}.adapter.b"),
            Tensor::zeros(vec![d_out, spec.rank]),
            ParamMeta { tag, kind: ParamKind::AdapterB },
            true,
        )?;
        model.adapters.insert(
            target.clone(),
            AdapterPair {
                base,
                a,
                b,
                rank: spec.rank,
            },
        );
    }
    Ok(())
}

/// Materializes the dense delta B A of one adapter.
pub fn adapter_delta(model: &Forecaster, target: &str) -> Result<Tensor> {
    let pair = model.adapters().get(target).ok_or_else(|| Error::Unknown {
        kind: "adapter",
        name: target.to_string(),
    })?;
    let a = model.params().value(pair.a);
    let b = model.params().value(pair.b);
    let (r, d_in) = a.dims2().expect("adapter A is a matrix");
    let (d_out, _) = b.dims2().expect("adapter B is a matrix");
    let mut delta = vec![0.0; d_out * d_in];
    for i in 0..d_out {
        for k in 0..r {
            let bik = b.data()[i * r + k];
            if bik == 0.0 {
                continue;
            }
            for j in 0..d_in {
                delta[i * d_in + j] += bik * a.data()[k * d_in + j];
            }
        }
    }
    Tensor::new(vec![d_out, d_in], delta)
}

/// Folds every adapter (W <- W + B A) and residual (W <- W + R) into the
/// base weights, returning a plain model with no attachments. The merged
/// model is mathematically equivalent to the adapted one; floating-point
/// reassociation bounds the output difference near machine precision, not
/// zero.
pub fn merge(model: &Forecaster) -> Result<Forecaster> {
    let mut merged = Forecaster::new(model.config.clone())?;
    for (id, p) in model.params().iter() {
        if !model.meta(id).kind.is_base() {
            continue;
        }
        let mid = merged.params().id(&p.name)?;
        merged.params_mut().get_mut(mid).value = p.value.clone();
    }
    let targets: Vec<String> = model.adapters().keys().cloned().collect();
    for target in targets {
        let delta = adapter_delta(model, &target)?;
        let mid = merged.params().id(&target)?;
        let w = merged.params_mut().get_mut(mid).value.data_mut();
        for (wi, di) in w.iter_mut().zip(delta.data()) {
            *wi += di;
        }
    }
    for (target, &rid) in model.residuals() {
        let r = model.params().value(rid).clone();
        let mid = merged.params().id(target)?;
        let w = merged.params_mut().get_mut(mid).value.data_mut();
        for (wi, ri) in w.iter_mut().zip(r.data()) {
            *wi += ri;
        }
    }
    Ok(merged)
}

/// Per-target adapter size accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCount {
    pub target: String,
    pub d_out: usize,
    pub d_in: usize,
    /// Entries added by the adapter: rank * (d_in + d_out).
    pub added: usize,
    /// Entries of the wrapped dense weight: d_in * d_out.
    pub dense: usize,
}

/// Counts trainable entries an adapter spec would add to the model.
pub fn count_adapter_params(model: &Forecaster, spec: &AdapterSpec) -> Result<Vec<TargetCount>> {
    let mut out = Vec::with_capacity(spec.targets.len());
    for t in &spec.targets {
        let id = model.params().id(t)?;
        let (d_out, d_in) = model.params().value(id).dims2().ok_or_else(|| Error::Shape {
            op: "count_adapter_params",
            detail: format!("target `{t}` is not a matrix"),
        })?;
        out.push(TargetCount {
            target: t.clone(),
            d_out,
            d_in,
            added: spec.rank * (d_in + d_out),
            dense: d_in * d_out,
        });
    }
    Ok(out)
}

/// Numeric rank of a matrix via Gaussian elimination with partial
/// pivoting. A pivot counts toward the rank when its magnitude exceeds
/// `tol` times the largest pivot magnitude encountered; the all-zero
/// matrix has rank 0.
pub fn numeric_rank(m: &Tensor, tol: f64) -> Result<usize> {
    let (rows, cols) = m.dims2().ok_or_else(|| Error::Shape {
        op: "numeric_rank",
        detail: format!("expected a matrix, got shape {:?}", m.shape()),
    })?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "numeric_rank tolerance must be positive, got {tol}"
        )));
    }
    let mut a: Vec<f64> = m.data().to_vec();
    let mut pivots: Vec<f64> = Vec::new();
    let mut row = 0usize;
    for col in 0..cols {
        if row == rows {
            break;
        }
        // Partial pivoting: bring the largest remaining entry of this
        // column to the pivot row.
        let (mut best_row, mut best_abs) = (row, a[row * cols + col].abs());
        for r in row + 1..rows {
            let v = a[r * cols + col].abs();
            if v > best_abs {
                best_row = r;
                best_abs = v;
            }
        }
        if best_abs == 0.0 {
            continue;
        }
        if best_row != row {
            for c in 0..cols {
                a.swap(row * cols + c, best_row * cols + c);
            }
        }
        let pivot = a[row * cols + col];
        pivots.push(pivot.abs());
        for r in row + 1..rows {
            let factor = a[r * cols + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..cols {
                a[r * cols + c] -= factor * a[row * cols + c];
            }
        }
        row += 1;
    }
    let pmax = pivots.iter().cloned().fold(0.0, f64::max);
    Ok(pivots.iter().filter(|&&p| p > tol * pmax).count())
}

/// Numeric rank of one adapter's materialized delta.
pub fn verify_rank(model: &Forecaster, target: &str, tol: f64) -> Result<usize> {
    let delta = adapter_delta(model, target)?;
    numeric_rank(&delta, tol)
}

/// Adaptation baselines benchmarked against low-rank adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AdaptMethod {
    /// Full fine-tuning: every base parameter trains.
    Ft,
    /// Encoder-only tuning: scene, motion, and fusion train; decoder frozen.
    Et,
    /// Parallel full-rank residuals on the adapter target weights; base
    /// frozen.
    Pa,
    /// Layer-norm gains and shifts only.
    Norm,
    /// Low-rank adapters on the masked targets; base frozen.
    Mosa,
}

impl AdaptMethod {
    pub const ALL: [AdaptMethod; 5] = [
        AdaptMethod::Ft,
        AdaptMethod::Et,
        AdaptMethod::Pa,
        AdaptMethod::Norm,
        AdaptMethod::Mosa,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FT" => Ok(AdaptMethod::Ft),
            "ET" => Ok(AdaptMethod::Et),
            "PA" => Ok(AdaptMethod::Pa),
            "NORM" => Ok(AdaptMethod::Norm),
            "MOSA" => Ok(AdaptMethod::Mosa),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected FT, ET, PA, NORM, or MOSA)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdaptMethod::Ft => "FT",
            AdaptMethod::Et => "ET",
            AdaptMethod::Pa => "PA",
            AdaptMethod::Norm => "NORM",
            AdaptMethod::Mosa => "MOSA",
        }
    }

    /// Default adaptation learning rate per method.
    pub fn default_lr(self) -> f64 {
        match self {
            AdaptMethod::Ft => 5e-5,
            AdaptMethod::Et => 5e-4,
            AdaptMethod::Pa => 5e-5,
            AdaptMethod::Norm => 1e-4,
            AdaptMethod::Mosa => 5e-3,
        }
    }

    /// Whether the modular mask restricts this method's trainable set.
    pub fn uses_mask(self) -> bool {
        matches!(self, AdaptMethod::Pa | AdaptMethod::Mosa)
    }

    /// Whether the adapter rank applies to this method.
    pub fn uses_rank(self) -> bool {
        matches!(self, AdaptMethod::Mosa)
    }
}

impl fmt::Display for AdaptMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything needed to prepare a model for one adaptation run.
#[derive(Debug, Clone)]
pub struct AdaptSetup {
    pub method: AdaptMethod,
    pub mask: ModularMask,
    pub rank: usize,
    pub init_std: f64,
    /// Seeds adapter A initialization for MOSA.
    pub seed: u64,
}

/// Attaches zero-initialized full-rank residual matrices (`<target>.residual`,
/// trainable) in parallel to the given base weights. The dense counterpart
/// of adapter injection, used by the PA baseline and by checkpoint loading.
pub fn attach_residuals(model: &mut Forecaster, targets: &[String]) -> Result<()> {
    for target in targets {
        if !adaptable_targets().contains(&target.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "`{target}` is not a residual target"
            )));
        }
        if model.residuals().contains_key(target) {
            return Err(Error::InvalidArgument(format!(
                "`{target}` already carries a residual"
            )));
        }
        let base = model.params().id(target)?;
        let (d_out, d_in) = model.params().value(base).dims2().expect("targets are matrices");
        let tag = model.meta(base).tag;
        let rid = model.attach_param(
            &format!("{target}.residual"),
            Tensor::zeros(vec![d_out, d_in]),
            ParamMeta { tag, kind: ParamKind::Residual },
            true,
        )?;
        model.residuals.insert(target.clone(), rid);
    }
    Ok(())
}

/// Freezes and augments the model for the chosen method, returning the
/// names of the parameters left trainable (in registration order).
///
/// PA and MOSA create their attachments here and require a model that has
/// none yet; the other methods only flip trainability flags.
pub fn select_trainables(model: &mut Forecaster, setup: &AdaptSetup) -> Result<Vec<String>> {
    let clean = model.adapters().is_empty() && model.residuals().is_empty();
    if !clean {
        return Err(Error::InvalidArgument(format!(
            "method {} requires a model without existing adapters or residuals",
            setup.method
        )));
    }
    model.params_mut().set_all_trainable(false);
    match setup.method {
        AdaptMethod::Ft => {
            for id in model.params().ids().collect::<Vec<_>>() {
                model.params_mut().set_trainable(id, true);
            }
        }
        AdaptMethod::Et => {
            for id in model.params().ids().collect::<Vec<_>>() {
                if model.meta(id).tag != ModuleTag::Decoder {
                    model.params_mut().set_trainable(id, true);
                }
            }
        }
        AdaptMethod::Norm => {
            for id in model.params().ids().collect::<Vec<_>>() {
                let kind = model.meta(id).kind;
                if matches!(kind, ParamKind::Gain | ParamKind::Shift) {
                    model.params_mut().set_trainable(id, true);
                }
            }
        }
        AdaptMethod::Pa => {
            attach_residuals(model, &mosa_targets(setup.mask))?;
        }
        AdaptMethod::Mosa => {
            let spec = AdapterSpec {
                rank: setup.rank,
                targets: mosa_targets(setup.mask),
                init_std: setup.init_std,
                seed: setup.seed,
            };
            inject(model, &spec)?;
        }
    }
    let names = model.params().trainable_names();
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "method {} selected no trainable parameters",
            setup.method
        )));
    }
    Ok(names)
}
