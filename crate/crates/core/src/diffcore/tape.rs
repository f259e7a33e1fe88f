//! Define-by-run computation tape.

use crate::diffcore::{ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::geom::Point;

/// Handle to a node on a [`Tape`]. Only valid for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Backward bookkeeping per node. Inputs are stored as node ids; a few ops
/// cache forward intermediates needed by their vector-Jacobian products.
#[derive(Debug, Clone)]
enum Op {
    /// Constant input. Receives no gradient.
    Leaf,
    /// Trainable parameter; backward adds this node's gradient into the
    /// parameter's accumulator.
    Param(ParamId),
    /// y = x W^T + b with w: [d_out, d_in], x: [n, d_in], b: [d_out].
    Linear {
        w: NodeId,
        b: Option<NodeId>,
        x: NodeId,
    },
    Relu {
        x: NodeId,
    },
    /// Row-wise layer normalization with affine gain/shift. Caches the
    /// normalized rows and per-row inverse std from the forward pass.
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SoftmaxRows {
        x: NodeId,
    },
    /// y = A B.
    Matmul {
        a: NodeId,
        b: NodeId,
    },
    /// y = A B^T.
    MatmulNT {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        factor: f64,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    /// Elementwise (Hadamard) product.
    Mul {
        a: NodeId,
        b: NodeId,
    },
    /// Rows of `a` stacked above rows of `b`.
    ConcatRows {
        a: NodeId,
        b: NodeId,
    },
    Reshape {
        x: NodeId,
    },
    Sum {
        x: NodeId,
    },
    /// Offsets [1, modes*steps*2] integrated into absolute positions
    /// [modes, steps*2] starting from a fixed origin.
    CumsumPaths {
        x: NodeId,
        modes: usize,
        steps: usize,
    },
    /// Min-over-modes mean squared displacement against a fixed target.
    /// `best` is the argmin picked at forward time; gradient flows only
    /// through that mode.
    VarietyLoss {
        paths: NodeId,
        target: Vec<f64>,
        best: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Vec<f64>,
    /// Set once any gradient lands here; untouched nodes are skipped on the
    /// backward sweep.
    live: bool,
    op: Op,
}

/// Wengert tape. Append-only; node creation order is a topological order of
/// the graph, so the backward sweep is a single reverse pass.
///
/// Intended use is one forward build plus one backward call per tape;
/// calling backward twice on the same tape accumulates twice.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward pass with respect to this node.
    /// Constants never accumulate (their buffers stay zero).
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let grad = vec![0.0; value.numel()];
        self.nodes.push(Node {
            value,
            grad,
            live: false,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Records a constant. Constants do not receive gradients; anything
    /// whose gradient matters must enter via [`Tape::param`].
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Records a parameter's current value. Trainable parameters become
    /// gradient sinks; frozen ones are recorded as constants, so backward
    /// provably cannot touch them.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        let p = params.get(id);
        let op = if p.trainable { Op::Param(id) } else { Op::Leaf };
        self.push(p.value.clone(), op)
    }

    fn dims2(&self, op: &'static str, id: NodeId) -> Result<(usize, usize)> {
        self.nodes[id.0].value.dims2().ok_or_else(|| Error::Shape {
            op,
            detail: format!("expected a matrix, got shape {:?}", self.nodes[id.0].value.shape()),
        })
    }

    /// y = x W^T + b. `w` is [d_out, d_in], `x` is [n, d_in], `b` (optional)
    /// is a length-d_out vector.
    pub fn linear(&mut self, w: NodeId, b: Option<NodeId>, x: NodeId) -> Result<NodeId> {
        let (d_out, d_in) = self.dims2("linear", w)?;
        let (n, xd) = self.dims2("linear", x)?;
        if xd != d_in {
            return Err(Error::Shape {
                op: "linear",
                detail: format!("weight is [{d_out}, {d_in}] but input has {xd} features"),
            });
        }
        if let Some(bid) = b {
            let bn = self.nodes[bid.0].value.numel();
            let b_shape = self.nodes[bid.0].value.shape();
            if bn != d_out || b_shape.len() != 1 {
                return Err(Error::Shape {
                    op: "linear",
                    detail: format!("bias shape {b_shape:?} does not match d_out {d_out}"),
                });
            }
        }
        let wt = self.nodes[w.0].value.data();
        let xt = self.nodes[x.0].value.data();
        let mut out = vec![0.0; n * d_out];
        for i in 0..n {
            let xrow = &xt[i * d_in..(i + 1) * d_in];
            for j in 0..d_out {
                let wrow = &wt[j * d_in..(j + 1) * d_in];
                let mut acc = 0.0;
                for k in 0..d_in {
                    acc += xrow[k] * wrow[k];
                }
                out[i * d_out + j] = acc;
            }
        }
        if let Some(bid) = b {
            let bt = self.nodes[bid.0].value.data();
            for i in 0..n {
                for j in 0..d_out {
                    out[i * d_out + j] += bt[j];
                }
            }
        }
        let value = Tensor::new(vec![n, d_out], out)?;
        Ok(self.push(value, Op::Linear { w, b, x }))
    }

    /// Elementwise max(x, 0). The derivative at exactly 0 is 0.
    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x.0].value;
        let data = v.data().iter().map(|&a| if a > 0.0 { a } else { 0.0 }).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("relu preserves shape");
        self.push(value, Op::Relu { x })
    }

    /// Row-wise layer normalization: each row is centered, scaled by
    /// 1/sqrt(var + eps) with biased variance, then scaled by `gamma` and
    /// shifted by `beta` (both length-d vectors).
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "layer_norm eps must be positive, got {eps}"
            )));
        }
        let (n, d) = self.dims2("layer_norm", x)?;
        if d < 2 {
            return Err(Error::Shape {
                op: "layer_norm",
                detail: format!("needs at least 2 features per row, got {d}"),
            });
        }
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            let s = self.nodes[id.0].value.shape();
            if s != [d] {
                return Err(Error::Shape {
                    op: "layer_norm",
                    detail: format!("{name} shape {s:?} does not match feature count {d}"),
                });
            }
        }
        let xt = self.nodes[x.0].value.data();
        let gt = self.nodes[gamma.0].value.data();
        let bt = self.nodes[beta.0].value.data();
        let mut out = vec![0.0; n * d];
        let mut normalized = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let row = &xt[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                let xn = (row[j] - mean) * is;
                normalized[i * d + j] = xn;
                out[i * d + j] = gt[j] * xn + bt[j];
            }
        }
        let value = Tensor::new(vec![n, d], out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
        ))
    }

    /// Row-wise softmax with max subtraction, so large logits stay finite.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, d) = self.dims2("softmax", x)?;
        let xt = self.nodes[x.0].value.data();
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let row = &xt[i * d..(i + 1) * d];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..d {
                let e = (row[j] - max).exp();
                out[i * d + j] = e;
                denom += e;
            }
            for j in 0..d {
                out[i * d + j] /= denom;
            }
        }
        let value = Tensor::new(vec![n, d], out)?;
        Ok(self.push(value, Op::SoftmaxRows { x }))
    }

    /// y = A B with A: [n, k], B: [k, m].
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.dims2("matmul", a)?;
        let (k2, m) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                detail: format!("inner dims disagree: [{n}, {k}] x [{k2}, {m}]"),
            });
        }
        let at = self.nodes[a.0].value.data();
        let bt = self.nodes[b.0].value.data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for kk in 0..k {
                let aik = at[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &bt[kk * m..(kk + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for j in 0..m {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(value, Op::Matmul { a, b }))
    }

    /// y = A B^T with A: [n, k], B: [m, k].
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.dims2("matmul_nt", a)?;
        let (m, k2) = self.dims2("matmul_nt", b)?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul_nt",
                detail: format!("inner dims disagree: [{n}, {k}] x [{m}, {k2}]^T"),
            });
        }
        let at = self.nodes[a.0].value.data();
        let bt = self.nodes[b.0].value.data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &at[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &bt[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += arow[kk] * brow[kk];
                }
                out[i * m + j] = acc;
            }
        }
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(value, Op::MatmulNT { a, b }))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let v = &self.nodes[x.0].value;
        let data = v.data().iter().map(|a| a * factor).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("scale preserves shape");
        self.push(value, Op::Scale { x, factor })
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Error::Shape {
                op: "add",
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    /// Elementwise product; shapes must match exactly.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Error::Shape {
                op: "mul",
                detail: format!("{:?} vs {:?}", va.shape(), vb.shape()),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    /// Stacks the rows of two matrices with equal column counts.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (na, da) = self.dims2("concat_rows", a)?;
        let (nb, db) = self.dims2("concat_rows", b)?;
        if da != db {
            return Err(Error::Shape {
                op: "concat_rows",
                detail: format!("column counts disagree: {da} vs {db}"),
            });
        }
        let mut data = Vec::with_capacity((na + nb) * da);
        data.extend_from_slice(self.nodes[a.0].value.data());
        data.extend_from_slice(self.nodes[b.0].value.data());
        let value = Tensor::new(vec![na + nb, da], data)?;
        Ok(self.push(value, Op::ConcatRows { a, b }))
    }

    /// Reinterprets the value under a new shape with the same element count.
    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        let value = Tensor::new(shape, v.data().to_vec())?;
        if value.numel() != v.numel() {
            return Err(Error::Shape {
                op: "reshape",
                detail: format!("cannot reshape {:?} to {:?}", v.shape(), value.shape()),
            });
        }
        Ok(self.push(value, Op::Reshape { x }))
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.nodes[x.0].value.data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum { x })
    }

    /// Integrates per-step offsets into absolute positions. Input is
    /// [1, modes*steps*2] laid out as (mode, step, xy); output row m holds
    /// mode m's path: origin + cumulative sum of its offsets.
    pub fn cumsum_paths(
        &mut self,
        x: NodeId,
        modes: usize,
        steps: usize,
        origin: Point,
    ) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        let want = modes * steps * 2;
        if v.numel() != want || modes == 0 || steps == 0 {
            return Err(Error::Shape {
                op: "cumsum_paths",
                detail: format!(
                    "offsets shape {:?} does not hold {modes} modes x {steps} steps x 2",
                    v.shape()
                ),
            });
        }
        let xt = v.data();
        let mut out = vec![0.0; want];
        for m in 0..modes {
            let (mut px, mut py) = (origin.x, origin.y);
            for t in 0..steps {
                let base = (m * steps + t) * 2;
                px += xt[base];
                py += xt[base + 1];
                out[m * steps * 2 + t * 2] = px;
                out[m * steps * 2 + t * 2 + 1] = py;
            }
        }
        let value = Tensor::new(vec![modes, steps * 2], out)?;
        Ok(self.push(value, Op::CumsumPaths { x, modes, steps }))
    }

    /// Minimum over modes of the mean squared displacement to `target`.
    /// `paths` is [modes, steps*2] (as produced by [`Tape::cumsum_paths`]);
    /// `target` must have `steps` points. Ties pick the lowest mode index,
    /// and the gradient flows only through the winning mode.
    pub fn variety_loss(&mut self, paths: NodeId, target: &[Point]) -> Result<NodeId> {
        let (modes, cols) = self.dims2("variety_loss", paths)?;
        let steps = target.len();
        if steps == 0 || cols != steps * 2 {
            return Err(Error::Shape {
                op: "variety_loss",
                detail: format!("paths [{modes}, {cols}] vs target of {steps} points"),
            });
        }
        let pt = self.nodes[paths.0].value.data();
        let mut best = 0usize;
        let mut best_msd = f64::INFINITY;
        for m in 0..modes {
            let mut acc = 0.0;
            for (t, g) in target.iter().enumerate() {
                let dx = pt[m * cols + t * 2] - g.x;
                let dy = pt[m * cols + t * 2 + 1] - g.y;
                acc += dx * dx + dy * dy;
            }
            let msd = acc / steps as f64;
            if msd < best_msd {
                best_msd = msd;
                best = m;
            }
        }
        let mut flat = Vec::with_capacity(steps * 2);
        for g in target {
            flat.push(g.x);
            flat.push(g.y);
        }
        Ok(self.push(
            Tensor::scalar(best_msd),
            Op::VarietyLoss {
                paths,
                target: flat,
                best,
            },
        ))
    }

    /// Backpropagates from a scalar node, seeding with 1.0.
    pub fn backward(&mut self, loss: NodeId, params: &mut ParamSet) -> Result<()> {
        self.backward_seeded(loss, 1.0, params)
    }

    /// Backpropagates from a scalar node with an explicit seed (used to
    /// average per-sample losses without an extra graph node). Gradients
    /// add into `params`; callers zero them between steps. `params` must be
    /// the set the tape's parameter nodes were recorded from.
    pub fn backward_seeded(&mut self, loss: NodeId, seed: f64, params: &mut ParamSet) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.nodes[loss.0].grad[0] += seed;
        self.nodes[loss.0].live = true;
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].live {
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            let g = std::mem::take(&mut self.nodes[i].grad);
            self.backward_op(&op, &g, params);
            self.nodes[i].grad = g;
            self.nodes[i].op = op;
        }
        Ok(())
    }

    /// True when the node is a constant, in which case computing its
    /// gradient would be wasted work (nothing flows past a leaf).
    fn is_const(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf)
    }

    fn add_grad(&mut self, id: NodeId, contrib: &[f64]) {
        let node = &mut self.nodes[id.0];
        debug_assert_eq!(node.grad.len(), contrib.len());
        for (g, c) in node.grad.iter_mut().zip(contrib) {
            *g += c;
        }
        node.live = true;
    }

    fn backward_op(&mut self, op: &Op, g: &[f64], params: &mut ParamSet) {
        match *op {
            Op::Leaf => {}
            Op::Param(pid) => {
                let p = params.get_mut(pid);
                debug_assert_eq!(p.grad.len(), g.len());
                for (pg, gi) in p.grad.iter_mut().zip(g) {
                    *pg += gi;
                }
            }
            Op::Linear { w, b, x } => {
                let (d_out, d_in) = self.nodes[w.0].value.dims2().expect("linear w");
                let n = self.nodes[x.0].value.dims2().expect("linear x").0;
                if !self.is_const(x) {
                    let wt = self.nodes[w.0].value.data();
                    let mut dx = vec![0.0; n * d_in];
                    for i in 0..n {
                        for j in 0..d_out {
                            let gij = g[i * d_out + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let wrow = &wt[j * d_in..(j + 1) * d_in];
                            let drow = &mut dx[i * d_in..(i + 1) * d_in];
                            for k in 0..d_in {
                                drow[k] += gij * wrow[k];
                            }
                        }
                    }
                    self.add_grad(x, &dx);
                }
                if !self.is_const(w) {
                    let xt = self.nodes[x.0].value.data();
                    let mut dw = vec![0.0; d_out * d_in];
                    for i in 0..n {
                        let xrow = &xt[i * d_in..(i + 1) * d_in];
                        for j in 0..d_out {
                            let gij = g[i * d_out + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let drow = &mut dw[j * d_in..(j + 1) * d_in];
                            for k in 0..d_in {
                                drow[k] += gij * xrow[k];
                            }
                        }
                    }
                    self.add_grad(w, &dw);
                }
                if let Some(bid) = b {
                    if !self.is_const(bid) {
                        let mut db = vec![0.0; d_out];
                        for i in 0..n {
                            for j in 0..d_out {
                                db[j] += g[i * d_out + j];
                            }
                        }
                        self.add_grad(bid, &db);
                    }
                }
            }
            Op::Relu { x } => {
                if !self.is_const(x) {
                    let y = self.nodes[x.0].value.data();
                    let dx: Vec<f64> = y
                        .iter()
                        .zip(g)
                        .map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 })
                        .collect();
                    self.add_grad(x, &dx);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                ref normalized,
                ref inv_std,
            } => {
                let (n, d) = self.nodes[x.0].value.dims2().expect("layer_norm x");
                let gt = self.nodes[gamma.0].value.data().to_vec();
                if !self.is_const(gamma) {
                    let mut dgamma = vec![0.0; d];
                    for i in 0..n {
                        for j in 0..d {
                            dgamma[j] += g[i * d + j] * normalized[i * d + j];
                        }
                    }
                    self.add_grad(gamma, &dgamma);
                }
                if !self.is_const(beta) {
                    let mut dbeta = vec![0.0; d];
                    for i in 0..n {
                        for j in 0..d {
                            dbeta[j] += g[i * d + j];
                        }
                    }
                    self.add_grad(beta, &dbeta);
                }
                if !self.is_const(x) {
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        // dxhat = g * gamma; dx = inv_std * (dxhat - mean(dxhat)
                        //        - xhat * mean(dxhat * xhat))
                        let mut mean_dxhat = 0.0;
                        let mut mean_dxhat_xhat = 0.0;
                        for j in 0..d {
                            let dxh = g[i * d + j] * gt[j];
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * normalized[i * d + j];
                        }
                        mean_dxhat /= d as f64;
                        mean_dxhat_xhat /= d as f64;
                        for j in 0..d {
                            let dxh = g[i * d + j] * gt[j];
                            dx[i * d + j] = inv_std[i]
                                * (dxh - mean_dxhat - normalized[i * d + j] * mean_dxhat_xhat);
                        }
                    }
                    self.add_grad(x, &dx);
                }
            }
            Op::SoftmaxRows { x } => {
                if !self.is_const(x) {
                    let (n, d) = self.nodes[x.0].value.dims2().expect("softmax x");
                    // Recompute y from x; dx = y * (g - <g, y>) per row.
                    let xt = self.nodes[x.0].value.data();
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        let row = &xt[i * d..(i + 1) * d];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut y = vec![0.0; d];
                        let mut denom = 0.0;
                        for j in 0..d {
                            y[j] = (row[j] - max).exp();
                            denom += y[j];
                        }
                        for yj in y.iter_mut() {
                            *yj /= denom;
                        }
                        let dot: f64 = (0..d).map(|j| g[i * d + j] * y[j]).sum();
                        for j in 0..d {
                            dx[i * d + j] = y[j] * (g[i * d + j] - dot);
                        }
                    }
                    self.add_grad(x, &dx);
                }
            }
            Op::Matmul { a, b } => {
                let (n, k) = self.nodes[a.0].value.dims2().expect("matmul a");
                let m = self.nodes[b.0].value.dims2().expect("matmul b").1;
                if !self.is_const(a) {
                    // dA = G B^T
                    let bt = self.nodes[b.0].value.data();
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for kk in 0..k {
                                da[i * k + kk] += gij * bt[kk * m + j];
                            }
                        }
                    }
                    self.add_grad(a, &da);
                }
                if !self.is_const(b) {
                    // dB = A^T G
                    let at = self.nodes[a.0].value.data();
                    let mut db = vec![0.0; k * m];
                    for i in 0..n {
                        for kk in 0..k {
                            let aik = at[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            for j in 0..m {
                                db[kk * m + j] += aik * g[i * m + j];
                            }
                        }
                    }
                    self.add_grad(b, &db);
                }
            }
            Op::MatmulNT { a, b } => {
                let (n, k) = self.nodes[a.0].value.dims2().expect("matmul_nt a");
                let m = self.nodes[b.0].value.dims2().expect("matmul_nt b").0;
                if !self.is_const(a) {
                    // dA = G B
                    let bt = self.nodes[b.0].value.data();
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let brow = &bt[j * k..(j + 1) * k];
                            let drow = &mut da[i * k..(i + 1) * k];
                            for kk in 0..k {
                                drow[kk] += gij * brow[kk];
                            }
                        }
                    }
                    self.add_grad(a, &da);
                }
                if !self.is_const(b) {
                    // dB = G^T A
                    let at = self.nodes[a.0].value.data();
                    let mut db = vec![0.0; m * k];
                    for i in 0..n {
                        let arow = &at[i * k..(i + 1) * k];
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let drow = &mut db[j * k..(j + 1) * k];
                            for kk in 0..k {
                                drow[kk] += gij * arow[kk];
                            }
                        }
                    }
                    self.add_grad(b, &db);
                }
            }
            Op::Scale { x, factor } => {
                if !self.is_const(x) {
                    let dx: Vec<f64> = g.iter().map(|gi| gi * factor).collect();
                    self.add_grad(x, &dx);
                }
            }
            Op::Add { a, b } => {
                if !self.is_const(a) {
                    self.add_grad(a, g);
                }
                if !self.is_const(b) {
                    self.add_grad(b, g);
                }
            }
            Op::Mul { a, b } => {
                if !self.is_const(a) {
                    let bv = self.nodes[b.0].value.data();
                    let da: Vec<f64> = g.iter().zip(bv).map(|(gi, bi)| gi * bi).collect();
                    self.add_grad(a, &da);
                }
                if !self.is_const(b) {
                    let av = self.nodes[a.0].value.data();
                    let db: Vec<f64> = g.iter().zip(av).map(|(gi, ai)| gi * ai).collect();
                    self.add_grad(b, &db);
                }
            }
            Op::ConcatRows { a, b } => {
                let na = self.nodes[a.0].value.numel();
                if !self.is_const(a) {
                    self.add_grad(a, &g[..na]);
                }
                if !self.is_const(b) {
                    self.add_grad(b, &g[na..]);
                }
            }
            Op::Reshape { x } => {
                if !self.is_const(x) {
                    self.add_grad(x, g);
                }
            }
            Op::Sum { x } => {
                if !self.is_const(x) {
                    let dx = vec![g[0]; self.nodes[x.0].value.numel()];
                    self.add_grad(x, &dx);
                }
            }
            Op::CumsumPaths { x, modes, steps } => {
                if !self.is_const(x) {
                    // d offset[m,t,c] = sum over t' >= t of d position[m,t',c]
                    let mut dx = vec![0.0; modes * steps * 2];
                    for m in 0..modes {
                        for c in 0..2 {
                            let mut suffix = 0.0;
                            for t in (0..steps).rev() {
                                suffix += g[m * steps * 2 + t * 2 + c];
                                dx[(m * steps + t) * 2 + c] = suffix;
                            }
                        }
                    }
                    self.add_grad(x, &dx);
                }
            }
            Op::VarietyLoss {
                paths,
                ref target,
                best,
            } => {
                if !self.is_const(paths) {
                    let pv = self.nodes[paths.0].value.data();
                    let cols = target.len();
                    let steps = cols / 2;
                    let mut dp = vec![0.0; self.nodes[paths.0].value.numel()];
                    let scale = g[0] * 2.0 / steps as f64;
                    for c in 0..cols {
                        dp[best * cols + c] = scale * (pv[best * cols + c] - target[c]);
                    }
                    self.add_grad(paths, &dp);
                }
            }
        }
    }
}
