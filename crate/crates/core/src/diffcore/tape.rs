//! Tape-based reverse-mode differentiation over dense row-major arrays.
//!
//! Every operation appends a node to the [`Tape`]; node ids increase in
//! creation order, so the tape is already topologically sorted and a
//! backward sweep is a single reverse pass. Only the operations the
//! activity-recognition model needs are provided.

use std::collections::HashMap;

use thiserror::Error;

use super::params::{ParamId, ParamStore};
use super::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("degenerate batch in {op}: train-mode batch of size {size}")]
    DegenerateBatch { op: &'static str, size: usize },
    #[error("label error: target {target} at row {row} is outside 0..{classes}")]
    Label {
        row: usize,
        target: usize,
        classes: usize,
    },
    #[error("contract error: {0}")]
    Contract(String),
    #[error("invalid argument to {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, TensorError>;

fn dim_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(TensorError::Dimension {
        op,
        detail: detail.into(),
    })
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(usize);

impl Value {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Operation family of a node, used for reporting and fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    AdjacencyMatMul,
    Conv1d,
    BatchNorm,
    Relu,
    MaxPool1d,
    GlobalMeanPool,
    GradReverse,
    SoftmaxCrossEntropy,
    Add,
    Mul,
    Scale,
    AddBias,
    Reshape,
    Sum,
}

impl OpKind {
    pub const ALL: [OpKind; 16] = [
        OpKind::Leaf,
        OpKind::MatMul,
        OpKind::AdjacencyMatMul,
        OpKind::Conv1d,
        OpKind::BatchNorm,
        OpKind::Relu,
        OpKind::MaxPool1d,
        OpKind::GlobalMeanPool,
        OpKind::GradReverse,
        OpKind::SoftmaxCrossEntropy,
        OpKind::Add,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::AddBias,
        OpKind::Reshape,
        OpKind::Sum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::AdjacencyMatMul => "adjacency_matmul",
            OpKind::Conv1d => "conv1d",
            OpKind::BatchNorm => "batchnorm",
            OpKind::Relu => "relu",
            OpKind::MaxPool1d => "maxpool1d",
            OpKind::GlobalMeanPool => "global_mean_pool",
            OpKind::GradReverse => "grad_reverse",
            OpKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddBias => "add_bias",
            OpKind::Reshape => "reshape",
            OpKind::Sum => "sum",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::ALL.iter().copied().find(|k| k.name() == name)
    }
}

/// Batch-norm behaviour: batch statistics or running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BnConfig {
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BnConfig {
    fn default() -> Self {
        BnConfig {
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// Mutable view of a batch-norm layer's running statistics.
pub struct BatchNormStats<'a, T> {
    pub mean: &'a mut [T],
    pub var: &'a mut [T],
}

enum Op<T> {
    Leaf,
    MatMul {
        a: Value,
        b: Value,
        m: usize,
        k: usize,
        n: usize,
    },
    AdjacencyMatMul {
        adj: Value,
        x: Value,
        batch: usize,
        nodes: usize,
        feat: usize,
    },
    Conv1d {
        x: Value,
        kernels: Value,
        bias: Value,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Value,
        gamma: Value,
        beta: Value,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        layout: BnLayout,
        train: bool,
    },
    Relu {
        x: Value,
    },
    MaxPool1d {
        x: Value,
        argmax: Vec<usize>,
    },
    GlobalMeanPool {
        x: Value,
        batch: usize,
        nodes: usize,
        feat: usize,
    },
    GradReverse {
        x: Value,
        lambda: T,
    },
    SoftmaxCrossEntropy {
        logits: Value,
        probs: Vec<T>,
        targets: Vec<usize>,
        classes: usize,
    },
    Add {
        a: Value,
        b: Value,
    },
    Mul {
        a: Value,
        b: Value,
    },
    Scale {
        x: Value,
        c: T,
    },
    AddBias {
        x: Value,
        bias: Value,
        feat: usize,
    },
    Reshape {
        x: Value,
    },
    Sum {
        x: Value,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::AdjacencyMatMul { .. } => OpKind::AdjacencyMatMul,
            Op::Conv1d { .. } => OpKind::Conv1d,
            Op::BatchNorm { .. } => OpKind::BatchNorm,
            Op::Relu { .. } => OpKind::Relu,
            Op::MaxPool1d { .. } => OpKind::MaxPool1d,
            Op::GlobalMeanPool { .. } => OpKind::GlobalMeanPool,
            Op::GradReverse { .. } => OpKind::GradReverse,
            Op::SoftmaxCrossEntropy { .. } => OpKind::SoftmaxCrossEntropy,
            Op::Add { .. } => OpKind::Add,
            Op::Mul { .. } => OpKind::Mul,
            Op::Scale { .. } => OpKind::Scale,
            Op::AddBias { .. } => OpKind::AddBias,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Sum { .. } => OpKind::Sum,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    samples: usize,
    c_in: usize,
    c_out: usize,
    width: usize,
    len_in: usize,
    len_out: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeom {
    /// Output positions `tp` for which input index `tp*stride + w - padding` lies in `0..len_in`.
    fn valid_range(&self, w: usize) -> (usize, usize) {
        let lo = if self.padding > w {
            (self.padding - w).div_ceil(self.stride)
        } else {
            0
        };
        let hi = if self.len_in + self.padding > w {
            ((self.len_in - 1 + self.padding - w) / self.stride + 1).min(self.len_out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

#[derive(Clone, Copy, Debug)]
struct BnLayout {
    outer: usize,
    feat: usize,
    inner: usize,
}

struct Node<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Vec<T>,
    op: Op<T>,
}

/// Recording of one forward computation.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    bindings: HashMap<ParamId, Value>,
    sign_flip: Option<OpKind>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            bindings: HashMap::new(),
            sign_flip: None,
        }
    }

    /// Test hook: negate the backward contribution of every `kind` node.
    #[doc(hidden)]
    pub fn inject_sign_flip(&mut self, kind: Option<OpKind>) {
        self.sign_flip = kind;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Value) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Value) -> &[T] {
        &self.nodes[v.0].data
    }

    pub fn grad(&self, v: Value) -> &[T] {
        &self.nodes[v.0].grad
    }

    pub fn op_kind(&self, v: Value) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Value) -> T {
        self.nodes[v.0].data[0]
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>) -> Value {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let n = data.len();
        self.nodes.push(Node {
            shape,
            data,
            grad: vec![T::zero(); n],
            op,
        });
        Value(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, data: Vec<T>, shape: &[usize]) -> Result<Value> {
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return dim_err("leaf", format!("extents must be positive, got {shape:?}"));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return dim_err(
                "leaf",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            );
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf))
    }

    /// Leaf bound to a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Value {
        if let Some(&v) = self.bindings.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.shape.clone(), p.data.clone(), Op::Leaf);
        self.bindings.insert(id, v);
        v
    }

    /// Adds the gradients of every bound parameter leaf into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<T>) {
        for (&id, &v) in &self.bindings {
            let p = store.get_mut(id);
            for (g, &d) in p.grad.iter_mut().zip(&self.nodes[v.0].grad) {
                *g = *g + d;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return dim_err("matmul", format!("cannot multiply {sa:?} by {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.data(a), self.data(b));
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = da[i * k + p];
                if av == T::zero() {
                    continue;
                }
                for (o, &bv) in row.iter_mut().zip(&db[p * n..(p + 1) * n]) {
                    *o = *o + av * bv;
                }
            }
        }
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, m, k, n }))
    }

    /// Left-multiplies every `[nodes × feat]` slab of `x` (shape `[batch, nodes, feat]`)
    /// by the `[nodes × nodes]` matrix `adj`.
    pub fn adjacency_matmul(&mut self, adj: Value, x: Value) -> Result<Value> {
        let (sa, sx) = (self.shape(adj), self.shape(x));
        if sa.len() != 2 || sa[0] != sa[1] || sx.len() != 3 || sx[1] != sa[0] {
            return dim_err(
                "adjacency_matmul",
                format!("adjacency {sa:?} incompatible with node batch {sx:?}"),
            );
        }
        let (batch, nodes, feat) = (sx[0], sx[1], sx[2]);
        let (da, dx) = (self.data(adj), self.data(x));
        let mut out = vec![T::zero(); batch * nodes * feat];
        for b in 0..batch {
            let base = b * nodes * feat;
            for i in 0..nodes {
                let row = &mut out[base + i * feat..base + (i + 1) * feat];
                for j in 0..nodes {
                    let w = da[i * nodes + j];
                    if w == T::zero() {
                        continue;
                    }
                    let src = &dx[base + j * feat..base + (j + 1) * feat];
                    for (o, &s) in row.iter_mut().zip(src) {
                        *o = *o + w * s;
                    }
                }
            }
        }
        Ok(self.push(
            vec![batch, nodes, feat],
            out,
            Op::AdjacencyMatMul {
                adj,
                x,
                batch,
                nodes,
                feat,
            },
        ))
    }

    /// Cross-correlation of `x` (`[c_in, len]` or `[samples, c_in, len]`) with
    /// `kernels` (`[c_out, c_in, width]`) plus per-output-channel `bias`.
    pub fn conv1d(
        &mut self,
        x: Value,
        kernels: Value,
        bias: Value,
        stride: usize,
        padding: usize,
    ) -> Result<Value> {
        let sx = self.shape(x).to_vec();
        let sk = self.shape(kernels).to_vec();
        let sb = self.shape(bias).to_vec();
        let (samples, c_in, len_in, squeeze) = match sx.as_slice() {
            [c, t] => (1, *c, *t, true),
            [s, c, t] => (*s, *c, *t, false),
            _ => return dim_err("conv1d", format!("input must be 2-D or 3-D, got {sx:?}")),
        };
        if sk.len() != 3 || sk[1] != c_in {
            return dim_err(
                "conv1d",
                format!("kernels {sk:?} do not match input channels of {sx:?}"),
            );
        }
        let (c_out, width) = (sk[0], sk[2]);
        if sb != [c_out] {
            return dim_err("conv1d", format!("bias {sb:?} must be [{c_out}]"));
        }
        if stride == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv1d",
                detail: "stride must be positive".into(),
            });
        }
        if len_in + 2 * padding < width {
            return dim_err(
                "conv1d",
                format!("window {width} longer than padded input {}", len_in + 2 * padding),
            );
        }
        let len_out = (len_in + 2 * padding - width) / stride + 1;
        let geom = ConvGeom {
            samples,
            c_in,
            c_out,
            width,
            len_in,
            len_out,
            stride,
            padding,
        };
        let (dx, dk, db) = (self.data(x), self.data(kernels), self.data(bias));
        let mut out = vec![T::zero(); samples * c_out * len_out];
        for s in 0..samples {
            for o in 0..c_out {
                let orow = &mut out[(s * c_out + o) * len_out..(s * c_out + o + 1) * len_out];
                orow.iter_mut().for_each(|v| *v = db[o]);
                for c in 0..c_in {
                    let xrow = &dx[(s * c_in + c) * len_in..(s * c_in + c + 1) * len_in];
                    for w in 0..width {
                        let kv = dk[(o * c_in + c) * width + w];
                        let (lo, hi) = geom.valid_range(w);
                        for tp in lo..hi {
                            let ti = tp * stride + w - padding;
                            orow[tp] = orow[tp] + kv * xrow[ti];
                        }
                    }
                }
            }
        }
        let shape = if squeeze {
            vec![c_out, len_out]
        } else {
            vec![samples, c_out, len_out]
        };
        Ok(self.push(
            shape,
            out,
            Op::Conv1d {
                x,
                kernels,
                bias,
                geom,
            },
        ))
    }

    /// Per-feature normalization of `x` shaped `[rows, feat]` or `[rows, feat, len]`;
    /// statistics are taken over every axis except `feat`.
    pub fn batchnorm(
        &mut self,
        x: Value,
        gamma: Value,
        beta: Value,
        stats: BatchNormStats<'_, T>,
        mode: BnMode,
        cfg: BnConfig,
    ) -> Result<Value> {
        let sx = self.shape(x).to_vec();
        let layout = match sx.as_slice() {
            [r, f] => BnLayout {
                outer: *r,
                feat: *f,
                inner: 1,
            },
            [r, f, l] => BnLayout {
                outer: *r,
                feat: *f,
                inner: *l,
            },
            _ => return dim_err("batchnorm", format!("input must be 2-D or 3-D, got {sx:?}")),
        };
        let f = layout.feat;
        if self.shape(gamma) != [f] || self.shape(beta) != [f] {
            return dim_err(
                "batchnorm",
                format!(
                    "affine shapes {:?}/{:?} must be [{f}]",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            );
        }
        if stats.mean.len() != f || stats.var.len() != f {
            return dim_err("batchnorm", format!("running statistics must have {f} entries"));
        }
        let train = mode == BnMode::Train;
        if train && layout.outer < 2 {
            return Err(TensorError::DegenerateBatch {
                op: "batchnorm",
                size: layout.outer,
            });
        }
        let eps = T::of(cfg.eps);
        let momentum = T::of(cfg.momentum);
        let dx = self.data(x);
        let (dg, dbeta) = (self.data(gamma), self.data(beta));
        let count = layout.outer * layout.inner;
        let idx = |r: usize, j: usize, l: usize| (r * f + j) * layout.inner + l;
        let mut xhat = vec![T::zero(); dx.len()];
        let mut inv_std = vec![T::zero(); f];
        let mut out = vec![T::zero(); dx.len()];
        for j in 0..f {
            let (mean, var) = if train {
                let n = T::of(count as f64);
                let mut sum = T::zero();
                for r in 0..layout.outer {
                    for l in 0..layout.inner {
                        sum = sum + dx[idx(r, j, l)];
                    }
                }
                let mean = sum / n;
                let mut ss = T::zero();
                for r in 0..layout.outer {
                    for l in 0..layout.inner {
                        let d = dx[idx(r, j, l)] - mean;
                        ss = ss + d * d;
                    }
                }
                let var = ss / n;
                let unbiased = ss / T::of((count - 1) as f64);
                stats.mean[j] = (T::one() - momentum) * stats.mean[j] + momentum * mean;
                stats.var[j] = (T::one() - momentum) * stats.var[j] + momentum * unbiased;
                (mean, var)
            } else {
                (stats.mean[j], stats.var[j])
            };
            let is = T::one() / (var + eps).sqrt();
            inv_std[j] = is;
            for r in 0..layout.outer {
                for l in 0..layout.inner {
                    let i = idx(r, j, l);
                    let h = (dx[i] - mean) * is;
                    xhat[i] = h;
                    out[i] = dg[j] * h + dbeta[j];
                }
            }
        }
        Ok(self.push(
            sx,
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                layout,
                train,
            },
        ))
    }

    pub fn relu(&mut self, x: Value) -> Value {
        let out = self
            .data(x)
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Relu { x })
    }

    /// Windowed max along the last axis. Ties route to the earliest index.
    pub fn maxpool1d(&mut self, x: Value, window: usize, stride: usize) -> Result<Value> {
        let sx = self.shape(x).to_vec();
        let len = *sx.last().expect("shapes are non-empty");
        if window == 0 || stride == 0 {
            return Err(TensorError::InvalidArgument {
                op: "maxpool1d",
                detail: "window and stride must be positive".into(),
            });
        }
        if window > len {
            return dim_err("maxpool1d", format!("window {window} exceeds length {len}"));
        }
        let len_out = (len - window) / stride + 1;
        let outer = self.data(x).len() / len;
        let dx = self.data(x);
        let mut out = Vec::with_capacity(outer * len_out);
        let mut argmax = Vec::with_capacity(outer * len_out);
        for r in 0..outer {
            let row = &dx[r * len..(r + 1) * len];
            for tp in 0..len_out {
                let start = tp * stride;
                let mut best = start;
                for t in start + 1..start + window {
                    if row[t] > row[best] {
                        best = t;
                    }
                }
                out.push(row[best]);
                argmax.push(r * len + best);
            }
        }
        let mut shape = sx;
        *shape.last_mut().unwrap() = len_out;
        Ok(self.push(shape, out, Op::MaxPool1d { x, argmax }))
    }

    /// Mean over the node axis: `[nodes, feat] -> [feat]` or `[batch, nodes, feat] -> [batch, feat]`.
    pub fn global_mean_pool(&mut self, x: Value) -> Result<Value> {
        let sx = self.shape(x).to_vec();
        let (batch, nodes, feat, shape) = match sx.as_slice() {
            [n, f] => (1, *n, *f, vec![*f]),
            [b, n, f] => (*b, *n, *f, vec![*b, *f]),
            _ => {
                return dim_err(
                    "global_mean_pool",
                    format!("input must be [nodes, feat] or [batch, nodes, feat], got {sx:?}"),
                )
            }
        };
        if nodes == 0 {
            return dim_err("global_mean_pool", "empty node set");
        }
        let dx = self.data(x);
        let inv = T::one() / T::of(nodes as f64);
        let mut out = vec![T::zero(); batch * feat];
        for b in 0..batch {
            for n in 0..nodes {
                let src = &dx[(b * nodes + n) * feat..(b * nodes + n + 1) * feat];
                for (o, &s) in out[b * feat..(b + 1) * feat].iter_mut().zip(src) {
                    *o = *o + s;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = *v * inv);
        Ok(self.push(
            shape,
            out,
            Op::GlobalMeanPool {
                x,
                batch,
                nodes,
                feat,
            },
        ))
    }

    /// Identity forward; backward multiplies the incoming gradient by `-lambda`.
    pub fn grad_reverse(&mut self, x: Value, lambda: f64) -> Result<Value> {
        if !lambda.is_finite() {
            return Err(TensorError::InvalidArgument {
                op: "grad_reverse",
                detail: format!("lambda must be finite, got {lambda}"),
            });
        }
        let out = self.data(x).to_vec();
        let shape = self.shape(x).to_vec();
        Ok(self.push(
            shape,
            out,
            Op::GradReverse {
                x,
                lambda: T::of(lambda),
            },
        ))
    }

    /// Mean negative log-softmax of the target class over rows of `logits` `[batch, classes]`.
    pub fn softmax_cross_entropy(&mut self, logits: Value, targets: &[usize]) -> Result<Value> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || sl[0] != targets.len() {
            return dim_err(
                "softmax_cross_entropy",
                format!("logits {sl:?} vs {} targets", targets.len()),
            );
        }
        let (batch, classes) = (sl[0], sl[1]);
        if let Some((row, &target)) = targets.iter().enumerate().find(|(_, &t)| t >= classes) {
            return Err(TensorError::Label {
                row,
                target,
                classes,
            });
        }
        let dl = self.data(logits);
        let mut probs = vec![T::zero(); batch * classes];
        let mut total = T::zero();
        for r in 0..batch {
            let row = &dl[r * classes..(r + 1) * classes];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (p, &v) in probs[r * classes..(r + 1) * classes].iter_mut().zip(row) {
                *p = (v - max).exp();
                z = z + *p;
            }
            probs[r * classes..(r + 1) * classes]
                .iter_mut()
                .for_each(|p| *p = *p / z);
            total = total + (z.ln() + max - row[targets[r]]);
        }
        let loss = total / T::of(batch as f64);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets: targets.to_vec(),
                classes,
            },
        ))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.shape(a) != self.shape(b) {
            return dim_err(
                "add",
                format!("shapes {:?} and {:?} differ", self.shape(a), self.shape(b)),
            );
        }
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.shape(a) != self.shape(b) {
            return dim_err(
                "mul",
                format!("shapes {:?} and {:?} differ", self.shape(a), self.shape(b)),
            );
        }
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Value, c: f64) -> Value {
        let c = T::of(c);
        let out = self.data(x).iter().map(|&v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Scale { x, c })
    }

    /// Adds `bias` (`[feat]`) to every row of `x` (`[rows, feat]`).
    pub fn add_bias(&mut self, x: Value, bias: Value) -> Result<Value> {
        let sx = self.shape(x);
        if sx.len() != 2 || self.shape(bias) != [sx[1]] {
            return dim_err(
                "add_bias",
                format!("bias {:?} does not fit rows of {sx:?}", self.shape(bias)),
            );
        }
        let feat = sx[1];
        let db = self.data(bias);
        let out = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + db[i % feat])
            .collect();
        let shape = sx.to_vec();
        Ok(self.push(shape, out, Op::AddBias { x, bias, feat }))
    }

    pub fn reshape(&mut self, x: Value, shape: &[usize]) -> Result<Value> {
        let numel: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || numel != self.data(x).len() {
            return dim_err(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape(x)),
            );
        }
        let out = self.data(x).to_vec();
        Ok(self.push(shape.to_vec(), out, Op::Reshape { x }))
    }

    pub fn sum(&mut self, x: Value) -> Value {
        let s = self.data(x).iter().copied().sum();
        self.push(vec![1], vec![s], Op::Sum { x })
    }

    /// Reverse sweep from the scalar `loss`; gradients add onto whatever the
    /// nodes already hold, so call [`Tape::zero_grad`] between independent sweeps.
    pub fn backward(&mut self, loss: Value) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        self.backward_with(loss, vec![T::one()])
    }

    /// Reverse sweep seeded with an arbitrary cotangent for `out`.
    pub fn backward_with(&mut self, out: Value, seed: Vec<T>) -> Result<()> {
        if seed.len() != self.nodes[out.0].data.len() {
            return Err(TensorError::Contract(format!(
                "seed has {} entries for an output of shape {:?}",
                seed.len(),
                self.nodes[out.0].shape
            )));
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=out.0).map(|_| None).collect();
        adj[out.0] = Some(seed);
        for id in (0..=out.0).rev() {
            let Some(mut g) = adj[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if self.sign_flip == Some(node.op.kind()) {
                let flipped: Vec<T> = g.iter().map(|&v| -v).collect();
                propagate(&self.nodes, id, &flipped, &mut adj);
            } else {
                propagate(&self.nodes, id, &g, &mut adj);
            }
            let stored = &mut self.nodes[id].grad;
            for (s, v) in stored.iter_mut().zip(g.drain(..)) {
                *s = *s + v;
            }
        }
        Ok(())
    }
}

fn slot<'a, T: Real>(
    adj: &'a mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    v: Value,
) -> &'a mut Vec<T> {
    adj[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].data.len()])
}

fn propagate<T: Real>(nodes: &[Node<T>], id: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
    match &nodes[id].op {
        Op::Leaf => {}
        &Op::MatMul { a, b, m, k, n } => {
            let (da, db) = (&nodes[a.0].data, &nodes[b.0].data);
            {
                let ga = slot(adj, nodes, a);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let s: T = grow
                            .iter()
                            .zip(&db[p * n..(p + 1) * n])
                            .map(|(&x, &y)| x * y)
                            .sum();
                        ga[i * k + p] = ga[i * k + p] + s;
                    }
                }
            }
            let gb = slot(adj, nodes, b);
            for i in 0..m {
                let grow = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    let av = da[i * k + p];
                    for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                        *o = *o + av * gv;
                    }
                }
            }
        }
        &Op::AdjacencyMatMul {
            adj: a,
            x,
            batch,
            nodes: nn,
            feat,
        } => {
            let (da, dx) = (&nodes[a.0].data, &nodes[x.0].data);
            {
                let gx = slot(adj, nodes, x);
                for b in 0..batch {
                    let base = b * nn * feat;
                    for i in 0..nn {
                        let grow = &g[base + i * feat..base + (i + 1) * feat];
                        for j in 0..nn {
                            let w = da[i * nn + j];
                            if w == T::zero() {
                                continue;
                            }
                            for (o, &gv) in gx[base + j * feat..base + (j + 1) * feat]
                                .iter_mut()
                                .zip(grow)
                            {
                                *o = *o + w * gv;
                            }
                        }
                    }
                }
            }
            let ga = slot(adj, nodes, a);
            for b in 0..batch {
                let base = b * nn * feat;
                for i in 0..nn {
                    let grow = &g[base + i * feat..base + (i + 1) * feat];
                    for j in 0..nn {
                        let s: T = grow
                            .iter()
                            .zip(&dx[base + j * feat..base + (j + 1) * feat])
                            .map(|(&p, &q)| p * q)
                            .sum();
                        ga[i * nn + j] = ga[i * nn + j] + s;
                    }
                }
            }
        }
        &Op::Conv1d {
            x,
            kernels,
            bias,
            geom,
        } => {
            let (dx, dk) = (&nodes[x.0].data, &nodes[kernels.0].data);
            let ConvGeom {
                samples,
                c_in,
                c_out,
                width,
                len_in,
                len_out,
                stride,
                padding,
            } = geom;
            {
                let gb = slot(adj, nodes, bias);
                for s in 0..samples {
                    for o in 0..c_out {
                        let grow = &g[(s * c_out + o) * len_out..(s * c_out + o + 1) * len_out];
                        gb[o] = gb[o] + grow.iter().copied().sum();
                    }
                }
            }
            {
                let gk = slot(adj, nodes, kernels);
                for s in 0..samples {
                    for o in 0..c_out {
                        let grow = &g[(s * c_out + o) * len_out..(s * c_out + o + 1) * len_out];
                        for c in 0..c_in {
                            let xrow = &dx[(s * c_in + c) * len_in..(s * c_in + c + 1) * len_in];
                            for w in 0..width {
                                let (lo, hi) = geom.valid_range(w);
                                let mut acc = T::zero();
                                for tp in lo..hi {
                                    acc = acc + grow[tp] * xrow[tp * stride + w - padding];
                                }
                                let ki = (o * c_in + c) * width + w;
                                gk[ki] = gk[ki] + acc;
                            }
                        }
                    }
                }
            }
            let gx = slot(adj, nodes, x);
            for s in 0..samples {
                for o in 0..c_out {
                    let grow = &g[(s * c_out + o) * len_out..(s * c_out + o + 1) * len_out];
                    for c in 0..c_in {
                        let xbase = (s * c_in + c) * len_in;
                        for w in 0..width {
                            let kv = dk[(o * c_in + c) * width + w];
                            let (lo, hi) = geom.valid_range(w);
                            for tp in lo..hi {
                                let ti = xbase + tp * stride + w - padding;
                                gx[ti] = gx[ti] + kv * grow[tp];
                            }
                        }
                    }
                }
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            layout,
            train,
        } => {
            let BnLayout { outer, feat, inner } = *layout;
            let dg = &nodes[gamma.0].data;
            let idx = |r: usize, j: usize, l: usize| (r * feat + j) * inner + l;
            let mut sum_g = vec![T::zero(); feat];
            let mut sum_gx = vec![T::zero(); feat];
            for r in 0..outer {
                for j in 0..feat {
                    for l in 0..inner {
                        let i = idx(r, j, l);
                        sum_g[j] = sum_g[j] + g[i];
                        sum_gx[j] = sum_gx[j] + g[i] * xhat[i];
                    }
                }
            }
            {
                let gg = slot(adj, nodes, *gamma);
                for j in 0..feat {
                    gg[j] = gg[j] + sum_gx[j];
                }
            }
            {
                let gbeta = slot(adj, nodes, *beta);
                for j in 0..feat {
                    gbeta[j] = gbeta[j] + sum_g[j];
                }
            }
            let n = T::of((outer * inner) as f64);
            let gx = slot(adj, nodes, *x);
            for r in 0..outer {
                for j in 0..feat {
                    let scale = dg[j] * inv_std[j];
                    for l in 0..inner {
                        let i = idx(r, j, l);
                        let d = if *train {
                            scale * (g[i] - sum_g[j] / n - xhat[i] * sum_gx[j] / n)
                        } else {
                            scale * g[i]
                        };
                        gx[i] = gx[i] + d;
                    }
                }
            }
        }
        &Op::Relu { x } => {
            let dx = &nodes[x.0].data;
            let gx = slot(adj, nodes, x);
            for ((o, &gv), &xv) in gx.iter_mut().zip(g).zip(dx) {
                if xv > T::zero() {
                    *o = *o + gv;
                }
            }
        }
        Op::MaxPool1d { x, argmax } => {
            let gx = slot(adj, nodes, *x);
            for (&src, &gv) in argmax.iter().zip(g) {
                gx[src] = gx[src] + gv;
            }
        }
        &Op::GlobalMeanPool {
            x,
            batch,
            nodes: nn,
            feat,
        } => {
            let inv = T::one() / T::of(nn as f64);
            let gx = slot(adj, nodes, x);
            for b in 0..batch {
                let grow = &g[b * feat..(b + 1) * feat];
                for n in 0..nn {
                    for (o, &gv) in gx[(b * nn + n) * feat..(b * nn + n + 1) * feat]
                        .iter_mut()
                        .zip(grow)
                    {
                        *o = *o + gv * inv;
                    }
                }
            }
        }
        &Op::GradReverse { x, lambda } => {
            let gx = slot(adj, nodes, x);
            for (o, &gv) in gx.iter_mut().zip(g) {
                *o = *o + (-lambda) * gv;
            }
        }
        Op::SoftmaxCrossEntropy {
            logits,
            probs,
            targets,
            classes,
        } => {
            let batch = targets.len();
            let scale = g[0] / T::of(batch as f64);
            let gl = slot(adj, nodes, *logits);
            for r in 0..batch {
                for c in 0..*classes {
                    let i = r * classes + c;
                    let onehot = if targets[r] == c { T::one() } else { T::zero() };
                    gl[i] = gl[i] + scale * (probs[i] - onehot);
                }
            }
        }
        &Op::Add { a, b } => {
            for v in [a, b] {
                let gv = slot(adj, nodes, v);
                for (o, &x) in gv.iter_mut().zip(g) {
                    *o = *o + x;
                }
            }
        }
        &Op::Mul { a, b } => {
            let (da, db) = (&nodes[a.0].data, &nodes[b.0].data);
            {
                let ga = slot(adj, nodes, a);
                for ((o, &x), &y) in ga.iter_mut().zip(g).zip(db) {
                    *o = *o + x * y;
                }
            }
            let gb = slot(adj, nodes, b);
            for ((o, &x), &y) in gb.iter_mut().zip(g).zip(da) {
                *o = *o + x * y;
            }
        }
        &Op::Scale { x, c } => {
            let gx = slot(adj, nodes, x);
            for (o, &v) in gx.iter_mut().zip(g) {
                *o = *o + c * v;
            }
        }
        &Op::AddBias { x, bias, feat } => {
            {
                let gx = slot(adj, nodes, x);
                for (o, &v) in gx.iter_mut().zip(g) {
                    *o = *o + v;
                }
            }
            let gb = slot(adj, nodes, bias);
            for (i, &v) in g.iter().enumerate() {
                gb[i % feat] = gb[i % feat] + v;
            }
        }
        &Op::Reshape { x } => {
            let gx = slot(adj, nodes, x);
            for (o, &v) in gx.iter_mut().zip(g) {
                *o = *o + v;
            }
        }
        &Op::Sum { x } => {
            let gx = slot(adj, nodes, x);
            for o in gx.iter_mut() {
                *o = *o + g[0];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matmul_identity_and_forced_case() {
        let mut t = Tape::<f64>::new();
        let eye = t
            .leaf(vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], &[3, 3])
            .unwrap();
        let b = t.leaf((0..6).map(f64::from).collect(), &[3, 2]).unwrap();
        let p = t.matmul(eye, b).unwrap();
        assert_eq!(t.data(p), t.data(b));

        let a = t.leaf(vec![1., 2.], &[1, 2]).unwrap();
        let b = t.leaf(vec![3., 4.], &[2, 1]).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.data(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut t = Tape::<f64>::new();
        let a = t.leaf(vec![0.0; 6], &[2, 3]).unwrap();
        let b = t.leaf(vec![0.0; 8], &[4, 2]).unwrap();
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn conv1d_forced_cases() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(vec![1., 2., 3.], &[1, 3]).unwrap();
        let k = t.leaf(vec![1.], &[1, 1, 1]).unwrap();
        let b = t.leaf(vec![0.], &[1]).unwrap();
        let y = t.conv1d(x, k, b, 1, 0).unwrap();
        assert_eq!(t.data(y), &[1., 2., 3.]);

        let k2 = t.leaf(vec![1., 1.], &[1, 1, 2]).unwrap();
        let y = t.conv1d(x, k2, b, 1, 0).unwrap();
        assert_eq!(t.data(y), &[3., 5.]);
        assert_eq!(t.shape(y), &[1, 2]);

        let k4 = t.leaf(vec![1.; 4], &[1, 1, 4]).unwrap();
        assert!(matches!(
            t.conv1d(x, k4, b, 1, 0),
            Err(TensorError::Dimension { .. })
        ));
        // padding makes the same window fit: T' = (3 + 2 - 4)/1 + 1 = 2
        let y = t.conv1d(x, k4, b, 1, 1).unwrap();
        assert_eq!(t.data(y), &[6., 6.]);
    }

    #[test]
    fn conv1d_stride_output_length() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf((0..10).map(f64::from).collect(), &[1, 10]).unwrap();
        let k = t.leaf(vec![1., 0., 0.], &[1, 1, 3]).unwrap();
        let b = t.leaf(vec![0.5], &[1]).unwrap();
        let y = t.conv1d(x, k, b, 3, 0).unwrap();
        // floor((10 - 3)/3) + 1 = 3
        assert_eq!(t.data(y), &[0.5, 3.5, 6.5]);
    }

    fn bn_fixture(t: &mut Tape<f64>, data: Vec<f64>, shape: &[usize]) -> (Value, Value, Value) {
        let f = shape[1];
        let x = t.leaf(data, shape).unwrap();
        let g = t.leaf(vec![1.0; f], &[f]).unwrap();
        let b = t.leaf(vec![0.0; f], &[f]).unwrap();
        (x, g, b)
    }

    #[test]
    fn batchnorm_eval_unit_stats_is_identity() {
        let mut t = Tape::<f64>::new();
        let data = vec![0.3, -1.2, 2.0, 0.7, 1.1, -0.4];
        let (x, g, b) = bn_fixture(&mut t, data.clone(), &[3, 2]);
        let (mut m, mut v) = (vec![0.0; 2], vec![1.0; 2]);
        let y = t
            .batchnorm(
                x,
                g,
                b,
                BatchNormStats {
                    mean: &mut m,
                    var: &mut v,
                },
                BnMode::Eval,
                BnConfig::default(),
            )
            .unwrap();
        let scale = 1.0 / (1.0f64 + 1e-5).sqrt();
        let expect: Vec<f64> = data.iter().map(|v| v * scale).collect();
        assert!(close(t.data(y), &expect, 1e-15));
        assert_eq!(m, vec![0.0; 2]);
    }

    #[test]
    fn batchnorm_train_standardizes_and_updates_running_stats() {
        let mut t = Tape::<f64>::new();
        let data = vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0];
        let (x, g, b) = bn_fixture(&mut t, data, &[4, 2]);
        let (mut m, mut v) = (vec![0.0; 2], vec![1.0; 2]);
        let cfg = BnConfig {
            momentum: 0.1,
            eps: 0.0,
        };
        let y = t
            .batchnorm(
                x,
                g,
                b,
                BatchNormStats {
                    mean: &mut m,
                    var: &mut v,
                },
                BnMode::Train,
                cfg,
            )
            .unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..4).map(|r| t.data(y)[r * 2 + j]).collect();
            let mean = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
        }
        // feature 0: mean 2.5, unbiased var 5/3
        assert!((m[0] - 0.25).abs() < 1e-12);
        assert!((v[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_train_rejects_single_row() {
        let mut t = Tape::<f64>::new();
        let (x, g, b) = bn_fixture(&mut t, vec![1.0, 2.0], &[1, 2]);
        let (mut m, mut v) = (vec![0.0; 2], vec![1.0; 2]);
        let err = t
            .batchnorm(
                x,
                g,
                b,
                BatchNormStats {
                    mean: &mut m,
                    var: &mut v,
                },
                BnMode::Train,
                BnConfig::default(),
            )
            .unwrap_err();
        assert_eq!(
            err,
            TensorError::DegenerateBatch {
                op: "batchnorm",
                size: 1
            }
        );
    }

    #[test]
    fn relu_and_maxpool_forced_cases() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(vec![-1., 0., 2.], &[3]).unwrap();
        let r = t.relu(x);
        assert_eq!(t.data(r), &[0., 0., 2.]);

        let x = t.leaf(vec![1., 3., 2., 5.], &[1, 4]).unwrap();
        let p = t.maxpool1d(x, 2, 2).unwrap();
        assert_eq!(t.data(p), &[3., 5.]);
        let s = t.sum(p);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[0., 1., 0., 1.]);
    }

    #[test]
    fn maxpool_ties_route_to_earliest_index() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(vec![4., 4., 1., 1.], &[4]).unwrap();
        let p = t.maxpool1d(x, 2, 2).unwrap();
        let s = t.sum(p);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[1., 0., 1., 0.]);
    }

    #[test]
    fn global_mean_pool_of_identical_rows() {
        let mut t = Tape::<f64>::new();
        let row = [0.5, -2.0, 3.25];
        let data: Vec<f64> = row.iter().cycle().take(12).copied().collect();
        let x = t.leaf(data, &[4, 3]).unwrap();
        let p = t.global_mean_pool(x).unwrap();
        assert_eq!(t.data(p), &row);
        let s = t.sum(p);
        t.backward(s).unwrap();
        assert!(t.grad(x).iter().all(|&g| g == 0.25));
    }

    #[test]
    fn empty_node_set_is_a_dimension_error() {
        let mut t = Tape::<f64>::new();
        assert!(matches!(
            t.leaf(vec![], &[0, 4]),
            Err(TensorError::Dimension { .. })
        ));
        let v = t.leaf(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(
            t.global_mean_pool(v),
            Err(TensorError::Dimension { .. })
        ));
    }

    #[test]
    fn grad_reverse_identity_forward_and_negated_backward() {
        let mut t = Tape::<f64>::new();
        let data = vec![0.1, -3.7, 1e-300, f64::MAX];
        let x = t.leaf(data.clone(), &[4]).unwrap();
        let y = t.grad_reverse(x, 1.0).unwrap();
        assert_eq!(
            t.data(y).iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let w = t.leaf(vec![1.0, 2.0, 3.0, 0.0], &[4]).unwrap();
        let p = t.mul(y, w).unwrap();
        let s = t.sum(p);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[-1.0, -2.0, -3.0, -0.0]);
        assert!(t.grad_reverse(x, f64::NAN).is_err());
    }

    #[test]
    fn cross_entropy_limits_and_label_error() {
        let mut t = Tape::<f64>::new();
        let l = t.leaf(vec![0.0; 10], &[2, 5]).unwrap();
        let ce = t.softmax_cross_entropy(l, &[0, 4]).unwrap();
        assert!((t.scalar(ce) - 5f64.ln()).abs() < 1e-15);

        let l = t.leaf(vec![200.0, 0.0, 0.0], &[1, 3]).unwrap();
        let ce = t.softmax_cross_entropy(l, &[0]).unwrap();
        assert!(t.scalar(ce) < 1e-80);

        let l = t.leaf(vec![0.0; 3], &[1, 3]).unwrap();
        assert_eq!(
            t.softmax_cross_entropy(l, &[3]).unwrap_err(),
            TensorError::Label {
                row: 0,
                target: 3,
                classes: 3
            }
        );
    }

    #[test]
    fn backward_of_sum_is_all_ones_and_accumulates() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(vec![1., 2., 3.], &[3]).unwrap();
        let s = t.sum(x);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[1., 1., 1.]);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[2., 2., 2.]);
        t.zero_grad();
        assert_eq!(t.grad(x), &[0., 0., 0.]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_leaves_unreachable_zero() {
        let mut t = Tape::<f64>::new();
        let x = t.leaf(vec![1., 2.], &[2]).unwrap();
        let unrelated = t.leaf(vec![5., 6.], &[2]).unwrap();
        let r = t.relu(unrelated);
        assert!(matches!(t.backward(r), Err(TensorError::Contract(_))));
        let s = t.sum(x);
        t.backward(s).unwrap();
        assert_eq!(t.grad(unrelated), &[0., 0.]);
        assert_eq!(t.grad(r), &[0., 0.]);
    }

    #[test]
    fn sign_flip_hook_negates_one_op_family() {
        let mut t = Tape::<f64>::new();
        t.inject_sign_flip(Some(OpKind::Relu));
        let x = t.leaf(vec![1., 2.], &[2]).unwrap();
        let r = t.relu(x);
        let s = t.sum(r);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x), &[-1., -1.]);
    }

    #[test]
    fn op_kind_names_round_trip() {
        for k in OpKind::ALL {
            assert_eq!(OpKind::from_name(k.name()), Some(k));
        }
    }
}
