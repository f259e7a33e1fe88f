//! Modular trajectory forecasting model.
//!
//! The model has four modules, each owning a named slice of the parameter
//! set:
//!
//! * scene encoder `S`: one-hot semantic grid -> two blocks of
//!   linear/relu/layer-norm -> scene embedding (1 x d_model)
//! * motion encoder `A`: consecutive offsets of the observed track -> same
//!   two-block stack -> motion embedding (1 x d_model)
//! * fusion `F`: single-head scaled dot-product attention over the two
//!   embedding tokens (query/key/value/output projections, residual), then
//!   a linear mix of the flattened tokens
//! * decoder `D`: two linear layers producing k_modes * t_pred * 2 offsets,
//!   integrated from the last observed point into absolute positions
//!
//! The motion input uses offsets rather than absolute coordinates and the
//! decoder integrates from the last observed point, so predictions are
//! translation equivariant. Linear layers consult the model's adapter and
//! residual attachments (see [`crate::mosa`]), composing low-rank branches
//! as two rank-r products without ever materializing a dense delta.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffcore::{NodeId, Param, ParamId, ParamSet, Tape, Tensor};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::mosa::AdapterPair;
use crate::rng::SplitMix64;
use crate::synthworld::SceneGrid;

/// Epsilon used by every layer normalization in the model.
pub const LN_EPS: f64 = 1e-5;

/// Which module a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModuleTag {
    Scene,
    Motion,
    Fusion,
    Decoder,
}

impl ModuleTag {
    pub fn code(self) -> &'static str {
        match self {
            ModuleTag::Scene => "S",
            ModuleTag::Motion => "A",
            ModuleTag::Fusion => "F",
            ModuleTag::Decoder => "D",
        }
    }
}

/// Role of a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    /// Layer normalization gain (gamma).
    Gain,
    /// Layer normalization shift (beta).
    Shift,
    /// Low-rank adapter down-projection A (r x d_in).
    AdapterA,
    /// Low-rank adapter up-projection B (d_out x r).
    AdapterB,
    /// Full-rank parallel residual matrix (d_out x d_in).
    Residual,
}

impl ParamKind {
    /// True for the four kinds present in an unadapted model.
    pub fn is_base(self) -> bool {
        matches!(
            self,
            ParamKind::Weight | ParamKind::Bias | ParamKind::Gain | ParamKind::Shift
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamMeta {
    pub tag: ModuleTag,
    pub kind: ParamKind,
}

/// Model hyperparameters. Serialized into checkpoints so a saved model can
/// be rebuilt without the original config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub n_classes: usize,
    /// Observed points per track.
    pub t_obs: usize,
    /// Predicted points per track.
    pub t_pred: usize,
    pub d_model: usize,
    /// Number of hypotheses decoded per track.
    pub k_modes: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            grid_h: 16,
            grid_w: 16,
            n_classes: 4,
            t_obs: 8,
            t_pred: 12,
            d_model: 64,
            k_modes: 5,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.grid_h >= 2, "grid_h must be at least 2"),
            (self.grid_w >= 2, "grid_w must be at least 2"),
            (self.n_classes >= 2, "n_classes must be at least 2"),
            (self.t_obs >= 2, "t_obs must be at least 2"),
            (self.t_pred >= 1, "t_pred must be at least 1"),
            (self.d_model >= 2, "d_model must be at least 2"),
            (self.k_modes >= 1, "k_modes must be at least 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.to_string()));
            }
        }
        Ok(())
    }

    pub fn scene_input_dim(&self) -> usize {
        self.grid_h * self.grid_w * self.n_classes
    }

    pub fn motion_input_dim(&self) -> usize {
        (self.t_obs - 1) * 2
    }

    /// Width of the flattened fused representation (two tokens).
    pub fn fused_dim(&self) -> usize {
        2 * self.d_model
    }

    pub fn output_dim(&self) -> usize {
        self.k_modes * self.t_pred * 2
    }
}

/// The forecasting model: parameters plus optional adapter/residual
/// attachments keyed by the base weight they wrap.
#[derive(Debug, Clone)]
pub struct Forecaster {
    pub config: ModelConfig,
    params: ParamSet,
    meta: Vec<ParamMeta>,
    pub(crate) adapters: BTreeMap<String, AdapterPair>,
    pub(crate) residuals: BTreeMap<String, ParamId>,
}

impl Forecaster {
    /// Builds a freshly initialized model. Weights are Gaussian with
    /// std sqrt(2 / (fan_in + fan_out)), biases and shifts zero, gains one;
    /// the draw order is the parameter creation order, so a config seed
    /// pins every initial value.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut model = Forecaster {
            config: config.clone(),
            params: ParamSet::new(),
            meta: Vec::new(),
            adapters: BTreeMap::new(),
            residuals: BTreeMap::new(),
        };
        let mut rng = SplitMix64::new(config.seed);
        let d = config.d_model;

        let block = |model: &mut Forecaster,
                         rng: &mut SplitMix64,
                         tag: ModuleTag,
                         prefix: &str,
                         idx: usize,
                         d_in: usize|
         -> Result<()> {
            model.add_weight(rng, tag, &format!("{prefix}.lin{idx}.w"), d, d_in)?;
            model.add_fixed(tag, ParamKind::Bias, &format!("{prefix}.lin{idx}.b"), vec![d], 0.0)?;
            model.add_fixed(tag, ParamKind::Gain, &format!("{prefix}.ln{idx}.gamma"), vec![d], 1.0)?;
            model.add_fixed(tag, ParamKind::Shift, &format!("{prefix}.ln{idx}.beta"), vec![d], 0.0)?;
            Ok(())
        };

        block(&mut model, &mut rng, ModuleTag::Scene, "S", 1, config.scene_input_dim())?;
        block(&mut model, &mut rng, ModuleTag::Scene, "S", 2, d)?;
        block(&mut model, &mut rng, ModuleTag::Motion, "A", 1, config.motion_input_dim())?;
        block(&mut model, &mut rng, ModuleTag::Motion, "A", 2, d)?;

        for proj in ["wq", "wk", "wv", "wo"] {
            model.add_weight(&mut rng, ModuleTag::Fusion, &format!("F.attn.{proj}"), d, d)?;
        }
        let fd = config.fused_dim();
        model.add_weight(&mut rng, ModuleTag::Fusion, "F.out.w", fd, fd)?;
        model.add_fixed(ModuleTag::Fusion, ParamKind::Bias, "F.out.b", vec![fd], 0.0)?;

        model.add_weight(&mut rng, ModuleTag::Decoder, "D.lin1.w", fd, fd)?;
        model.add_fixed(ModuleTag::Decoder, ParamKind::Bias, "D.lin1.b", vec![fd], 0.0)?;
        model.add_weight(&mut rng, ModuleTag::Decoder, "D.out.w", config.output_dim(), fd)?;
        model.add_fixed(
            ModuleTag::Decoder,
            ParamKind::Bias,
            "D.out.b",
            vec![config.output_dim()],
            0.0,
        )?;
        Ok(model)
    }

    fn add_weight(
        &mut self,
        rng: &mut SplitMix64,
        tag: ModuleTag,
        name: &str,
        d_out: usize,
        d_in: usize,
    ) -> Result<ParamId> {
        let std = (2.0 / (d_in + d_out) as f64).sqrt();
        let data: Vec<f64> = (0..d_out * d_in).map(|_| rng.gaussian(0.0, std)).collect();
        let t = Tensor::new(vec![d_out, d_in], data)?;
        self.attach_param(name, t, ParamMeta { tag, kind: ParamKind::Weight }, true)
    }

    fn add_fixed(
        &mut self,
        tag: ModuleTag,
        kind: ParamKind,
        name: &str,
        shape: Vec<usize>,
        fill: f64,
    ) -> Result<ParamId> {
        let numel = shape.iter().product();
        let t = Tensor::new(shape, vec![fill; numel])?;
        self.attach_param(name, t, ParamMeta { tag, kind }, true)
    }

    /// Registers a parameter with its metadata. Also used by adapter and
    /// residual injection.
    pub fn attach_param(
        &mut self,
        name: &str,
        value: Tensor,
        meta: ParamMeta,
        trainable: bool,
    ) -> Result<ParamId> {
        let id = self.params.insert(name, value, trainable)?;
        debug_assert_eq!(id.0, self.meta.len());
        self.meta.push(meta);
        Ok(id)
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn meta(&self, id: ParamId) -> ParamMeta {
        self.meta[id.0]
    }

    pub fn adapters(&self) -> &BTreeMap<String, AdapterPair> {
        &self.adapters
    }

    pub fn residuals(&self) -> &BTreeMap<String, ParamId> {
        &self.residuals
    }

    /// One-hot encoding of the grid as a single row, cell-major then class.
    fn scene_input(&self, grid: &SceneGrid) -> Result<Tensor> {
        let c = self.config.n_classes;
        if grid.height() != self.config.grid_h || grid.width() != self.config.grid_w {
            return Err(Error::Shape {
                op: "encode_scene",
                detail: format!(
                    "grid is {}x{} but model expects {}x{}",
                    grid.height(),
                    grid.width(),
                    self.config.grid_h,
                    self.config.grid_w
                ),
            });
        }
        let mut data = vec![0.0; self.config.scene_input_dim()];
        for (i, &class) in grid.cells().iter().enumerate() {
            let class = class as usize;
            if class >= c {
                return Err(Error::InvalidArgument(format!(
                    "grid cell class {class} exceeds n_classes {c}"
                )));
            }
            data[i * c + class] = 1.0;
        }
        Tensor::new(vec![1, self.config.scene_input_dim()], data)
    }

    /// Linear layer by base weight name, composing any attached low-rank
    /// adapter (as two rank-r products) or dense residual.
    fn lin(&self, tape: &mut Tape, base: &str, bias: Option<&str>, x: NodeId) -> Result<NodeId> {
        let wid = self.params.id(base)?;
        let w = tape.param(&self.params, wid);
        let b = match bias {
            Some(bname) => Some(tape.param(&self.params, self.params.id(bname)?)),
            None => None,
        };
        let mut y = tape.linear(w, b, x)?;
        if let Some(pair) = self.adapters.get(base) {
            let a = tape.param(&self.params, pair.a);
            let bm = tape.param(&self.params, pair.b);
            let down = tape.linear(a, None, x)?;
            let up = tape.linear(bm, None, down)?;
            y = tape.add(y, up)?;
        }
        if let Some(&rid) = self.residuals.get(base) {
            let r = tape.param(&self.params, rid);
            let rx = tape.linear(r, None, x)?;
            y = tape.add(y, rx)?;
        }
        Ok(y)
    }

    /// linear -> relu -> layer_norm, the encoder building block.
    fn encoder_block(&self, tape: &mut Tape, prefix: &str, idx: usize, x: NodeId) -> Result<NodeId> {
        let lin = self.lin(
            tape,
            &format!("{prefix}.lin{idx}.w"),
            Some(&format!("{prefix}.lin{idx}.b")),
            x,
        )?;
        let act = tape.relu(lin);
        let gamma = tape.param(&self.params, self.params.id(&format!("{prefix}.ln{idx}.gamma"))?);
        let beta = tape.param(&self.params, self.params.id(&format!("{prefix}.ln{idx}.beta"))?);
        tape.layer_norm(act, gamma, beta, LN_EPS)
    }

    /// Scene embedding, 1 x d_model.
    pub fn encode_scene(&self, tape: &mut Tape, grid: &SceneGrid) -> Result<NodeId> {
        let input = tape.constant(self.scene_input(grid)?);
        let h1 = self.encoder_block(tape, "S", 1, input)?;
        self.encoder_block(tape, "S", 2, h1)
    }

    /// Motion embedding, 1 x d_model, from the `t_obs` observed points.
    /// The input is the flattened sequence of consecutive offsets, so the
    /// embedding is invariant to translating the whole track.
    pub fn encode_motion(&self, tape: &mut Tape, past: &[Point]) -> Result<NodeId> {
        if past.len() != self.config.t_obs {
            return Err(Error::Shape {
                op: "encode_motion",
                detail: format!("expected {} observed points, got {}", self.config.t_obs, past.len()),
            });
        }
        let mut data = Vec::with_capacity(self.config.motion_input_dim());
        for w in past.windows(2) {
            let d = w[1].sub(w[0]);
            data.push(d.x);
            data.push(d.y);
        }
        let input = tape.constant(Tensor::new(vec![1, data.len()], data)?);
        let h1 = self.encoder_block(tape, "A", 1, input)?;
        self.encoder_block(tape, "A", 2, h1)
    }

    /// Attention fusion of the two embeddings. Returns the mixed flattened
    /// representation, 1 x 2*d_model.
    pub fn fuse(&self, tape: &mut Tape, scene: NodeId, motion: NodeId) -> Result<NodeId> {
        let tokens = tape.concat_rows(scene, motion)?;
        let q = self.lin(tape, "F.attn.wq", None, tokens)?;
        let k = self.lin(tape, "F.attn.wk", None, tokens)?;
        let v = self.lin(tape, "F.attn.wv", None, tokens)?;
        let logits = tape.matmul_nt(q, k)?;
        let scaled = tape.scale(logits, 1.0 / (self.config.d_model as f64).sqrt());
        let attn = tape.softmax_rows(scaled)?;
        let mixed = tape.matmul(attn, v)?;
        let projected = self.lin(tape, "F.attn.wo", None, mixed)?;
        let residual = tape.add(tokens, projected)?;
        let flat = tape.reshape(residual, vec![1, self.config.fused_dim()])?;
        self.lin(tape, "F.out.w", Some("F.out.b"), flat)
    }

    /// Decodes k_modes hypothesis paths from the fused representation,
    /// integrating predicted offsets from the last observed point.
    /// Returns a [k_modes, t_pred*2] node of absolute positions.
    pub fn decode(&self, tape: &mut Tape, fused: NodeId, last_obs: Point) -> Result<NodeId> {
        let h = self.lin(tape, "D.lin1.w", Some("D.lin1.b"), fused)?;
        let act = tape.relu(h);
        let offsets = self.lin(tape, "D.out.w", Some("D.out.b"), act)?;
        tape.cumsum_paths(offsets, self.config.k_modes, self.config.t_pred, last_obs)
    }

    /// Full forward pass; returns the [k_modes, t_pred*2] positions node.
    pub fn forward_on_tape(&self, tape: &mut Tape, grid: &SceneGrid, past: &[Point]) -> Result<NodeId> {
        let scene = self.encode_scene(tape, grid)?;
        let motion = self.encode_motion(tape, past)?;
        let fused = self.fuse(tape, scene, motion)?;
        let last = *past.last().expect("t_obs >= 2 validated");
        self.decode(tape, fused, last)
    }

    /// Forward pass plus variety loss against the future track.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        grid: &SceneGrid,
        past: &[Point],
        future: &[Point],
    ) -> Result<NodeId> {
        if future.len() != self.config.t_pred {
            return Err(Error::Shape {
                op: "loss",
                detail: format!("expected {} future points, got {}", self.config.t_pred, future.len()),
            });
        }
        let paths = self.forward_on_tape(tape, grid, past)?;
        tape.variety_loss(paths, future)
    }

    /// Inference: k_modes hypothesis tracks of t_pred points each, in mode
    /// order.
    pub fn predict(&self, grid: &SceneGrid, past: &[Point]) -> Result<Vec<Vec<Point>>> {
        let mut tape = Tape::new();
        let node = self.forward_on_tape(&mut tape, grid, past)?;
        let v = tape.value(node);
        let t = self.config.t_pred;
        let mut out = Vec::with_capacity(self.config.k_modes);
        for m in 0..self.config.k_modes {
            let row = &v.data()[m * t * 2..(m + 1) * t * 2];
            out.push((0..t).map(|i| Point::new(row[i * 2], row[i * 2 + 1])).collect());
        }
        Ok(out)
    }
}

/// FNV-1a hash over the names and exact value bits of every parameter the
/// filter keeps. Used to prove parameter slices untouched across training.
/// Parameters are fed in name order, so the hash is a function of the
/// name→value map alone, not of registration order (a reloaded checkpoint
/// may attach adapters in a different sequence).
pub fn weight_hash<F: Fn(&str, ParamMeta) -> bool>(model: &Forecaster, keep: F) -> u64 {
    let mut kept: Vec<(ParamId, &Param)> = model
        .params()
        .iter()
        .filter(|(id, p)| keep(&p.name, model.meta(*id)))
        .collect();
    kept.sort_by(|(_, a), (_, b)| a.name.cmp(&b.name));
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for (_, p) in kept {
        for b in p.name.as_bytes() {
            feed(*b);
        }
        for v in p.value.data() {
            for b in v.to_bits().to_le_bytes() {
                feed(b);
            }
        }
    }
    h
}

/// Hash of the base model parameters (weights, biases, norm gains/shifts),
/// excluding adapter and residual attachments.
pub fn base_weight_hash(model: &Forecaster) -> u64 {
    weight_hash(model, |_, meta| meta.kind.is_base())
}
