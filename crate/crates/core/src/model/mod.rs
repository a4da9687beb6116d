//! Feature extractor, graph convolution, activity classifier and source-user
//! discriminator composed into one differentiable forward pass.

mod config;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diffcore::{
    BatchNormStats, BnConfig, BnMode, ParamId, ParamStore, Real, Tape, TensorError, Value,
};

pub use config::{ModelConfig, ModelDims};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite values in {stage}")]
    NonFinite { stage: &'static str },
    #[error("graph error: {0}")]
    Graph(String),
}

/// A batch of windows laid out `[size, nodes, channels, length]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub x: Vec<T>,
    pub activity: Vec<usize>,
    pub domain: Vec<usize>,
    pub nodes: usize,
    pub channels: usize,
    pub length: usize,
}

impl<T> Batch<T> {
    pub fn size(&self) -> usize {
        self.activity.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct BnIds {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct ConvBlock {
    kernels: ParamId,
    bias: ParamId,
    bn: BnIds,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct GcnLayer {
    weight: ParamId,
    bn: BnIds,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Head {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardTrace {
    /// `[batch, nodes, F0]`
    pub h_f: Value,
    /// `[batch, nodes, gcn_widths[0]]`
    pub h_g1: Value,
    /// `[batch, nodes, gcn_widths[1]]`
    pub h_g2: Value,
    /// `[batch, gcn_widths[1]]`
    pub pooled: Value,
    pub activity_logits: Value,
    pub domain_logits: Value,
}

#[derive(Clone, Copy, Debug)]
pub struct PhaseLoss {
    pub total: Value,
    pub activity: Value,
    pub domain: Value,
    pub trace: ForwardTrace,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub bn: BnMode,
    pub lambda: f64,
    /// When false the discriminator consumes the pooled embedding directly.
    pub grl: bool,
}

impl ForwardOptions {
    pub fn train(lambda: f64) -> Self {
        ForwardOptions {
            bn: BnMode::Train,
            lambda,
            grl: true,
        }
    }

    pub fn eval() -> Self {
        ForwardOptions {
            bn: BnMode::Eval,
            lambda: 1.0,
            grl: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnAdgModel<T> {
    cfg: ModelConfig,
    dims: ModelDims,
    store: ParamStore<T>,
    conv: [ConvBlock; 2],
    gcn: [GcnLayer; 2],
    classifier: Head,
    discriminator: Head,
    momentum_override: Option<f64>,
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<T> {
    (0..n)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect()
}

fn add_bn<T: Real>(store: &mut ParamStore<T>, prefix: &str, f: usize) -> Result<BnIds, TensorError> {
    Ok(BnIds {
        gamma: store.add(format!("{prefix}.gamma"), &[f], vec![T::one(); f], true)?,
        beta: store.add(format!("{prefix}.beta"), &[f], vec![T::zero(); f], true)?,
        mean: store.add(format!("{prefix}.running_mean"), &[f], vec![T::zero(); f], false)?,
        var: store.add(format!("{prefix}.running_var"), &[f], vec![T::one(); f], false)?,
    })
}

fn add_head<T: Real>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    input: usize,
    hidden: usize,
    out: usize,
) -> Result<Head, TensorError> {
    let b_in = 1.0 / (input as f64).sqrt();
    let b_h = 1.0 / (hidden as f64).sqrt();
    Ok(Head {
        w1: store.add(format!("{prefix}.w1"), &[input, hidden], uniform(rng, input * hidden, b_in), true)?,
        b1: store.add(format!("{prefix}.b1"), &[hidden], uniform(rng, hidden, b_in), true)?,
        w2: store.add(format!("{prefix}.w2"), &[hidden, out], uniform(rng, hidden * out, b_h), true)?,
        b2: store.add(format!("{prefix}.b2"), &[out], uniform(rng, out, b_h), true)?,
    })
}

impl<T: Real> GnnAdgModel<T> {
    /// Builds a model with uniform fan-in initialization drawn from `seed`.
    pub fn new(cfg: ModelConfig, dims: ModelDims, seed: u64) -> Result<Self, ModelError> {
        cfg.validate(&dims).map_err(ModelError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut conv = Vec::new();
        let mut c_in = dims.channels;
        for (i, (&c_out, &w)) in cfg.conv_channels.iter().zip(&cfg.kernel_widths).enumerate() {
            let bound = 1.0 / ((c_in * w) as f64).sqrt();
            let prefix = format!("extractor.conv{}", i + 1);
            conv.push(ConvBlock {
                kernels: store.add(
                    format!("{prefix}.kernels"),
                    &[c_out, c_in, w],
                    uniform(&mut rng, c_out * c_in * w, bound),
                    true,
                )?,
                bias: store.add(format!("{prefix}.bias"), &[c_out], uniform(&mut rng, c_out, bound), true)?,
                bn: add_bn(&mut store, &format!("{prefix}.bn"), c_out)?,
            });
            c_in = c_out;
        }
        let f0 = cfg.feature_width(dims.length).expect("validated");
        let mut gcn = Vec::new();
        let mut width = f0;
        for (i, &g) in cfg.gcn_widths.iter().enumerate() {
            let bound = (6.0 / (width + g) as f64).sqrt();
            let prefix = format!("gcn.layer{}", i + 1);
            gcn.push(GcnLayer {
                weight: store.add(format!("{prefix}.weight"), &[width, g], uniform(&mut rng, width * g, bound), true)?,
                bn: add_bn(&mut store, &format!("{prefix}.bn"), g)?,
            });
            width = g;
        }
        let hidden = cfg.head_width();
        let classifier = add_head(&mut store, &mut rng, "classifier", width, hidden, dims.classes)?;
        let discriminator = add_head(&mut store, &mut rng, "discriminator", width, hidden, dims.domains)?;
        Ok(GnnAdgModel {
            cfg,
            dims,
            store,
            conv: [conv[0], conv[1]],
            gcn: [gcn[0], gcn[1]],
            classifier,
            discriminator,
            momentum_override: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn feature_width(&self) -> usize {
        self.cfg.feature_width(self.dims.length).expect("validated")
    }

    fn bn_config(&self) -> BnConfig {
        BnConfig {
            momentum: self.momentum_override.unwrap_or(self.cfg.bn_momentum),
            eps: self.cfg.bn_eps,
        }
    }

    fn apply_bn(&mut self, tape: &mut Tape<T>, x: Value, ids: BnIds, mode: BnMode) -> Result<Value, ModelError> {
        let cfg = self.bn_config();
        let gamma = tape.param(&self.store, ids.gamma);
        let beta = tape.param(&self.store, ids.beta);
        let (mean, var) = self.store.pair_mut(ids.mean, ids.var);
        Ok(tape.batchnorm(x, gamma, beta, BatchNormStats { mean, var }, mode, cfg)?)
    }

    /// Input leaf for `batch`, shaped `[size, nodes, channels, length]`.
    pub fn input(&self, tape: &mut Tape<T>, batch: &Batch<T>) -> Result<Value, ModelError> {
        if batch.nodes != self.dims.nodes || batch.channels != self.dims.channels || batch.length != self.dims.length {
            return Err(ModelError::Config(format!(
                "batch is {}×{}×{} (nodes×channels×length), model expects {}×{}×{}",
                batch.nodes, batch.channels, batch.length, self.dims.nodes, self.dims.channels, self.dims.length
            )));
        }
        Ok(tape.leaf(
            batch.x.clone(),
            &[batch.size(), batch.nodes, batch.channels, batch.length],
        )?)
    }

    /// Shared per-node encoder: (conv → BN → ReLU → max-pool) twice, then flatten.
    pub fn extract_features(&mut self, tape: &mut Tape<T>, x: Value, mode: BnMode) -> Result<Value, ModelError> {
        let shape = tape.shape(x).to_vec();
        let [b, n, c, t] = shape[..] else {
            return Err(ModelError::Config(format!("input must be 4-D, got {shape:?}")));
        };
        if n != self.dims.nodes || c != self.dims.channels || t != self.dims.length {
            return Err(ModelError::Config(format!(
                "input {shape:?} does not match nodes={} channels={} length={}",
                self.dims.nodes, self.dims.channels, self.dims.length
            )));
        }
        let mut h = tape.reshape(x, &[b * n, c, t])?;
        for block in self.conv {
            let k = tape.param(&self.store, block.kernels);
            let bias = tape.param(&self.store, block.bias);
            h = tape.conv1d(h, k, bias, self.cfg.conv_stride, self.cfg.conv_padding)?;
            h = self.apply_bn(tape, h, block.bn, mode)?;
            h = tape.relu(h);
            h = tape.maxpool1d(h, self.cfg.pool_window, self.cfg.pool_window)?;
        }
        let f0 = self.feature_width();
        Ok(tape.reshape(h, &[b, n, f0])?)
    }

    /// Two graph-convolution layers `ReLU(BN(Â·h·W))` followed by mean pooling
    /// over nodes. Returns `(h_g1, h_g2, pooled)`.
    pub fn gcn_forward(
        &mut self,
        tape: &mut Tape<T>,
        h_f: Value,
        a_hat: &[f64],
        mode: BnMode,
    ) -> Result<(Value, Value, Value), ModelError> {
        let n = self.dims.nodes;
        if a_hat.len() != n * n {
            return Err(ModelError::Graph(format!(
                "propagation matrix has {} entries, expected {}",
                a_hat.len(),
                n * n
            )));
        }
        if a_hat.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Graph("propagation matrix is not finite".into()));
        }
        let adj = tape.leaf(a_hat.iter().map(|&v| T::of(v)).collect(), &[n, n])?;
        let b = tape.shape(h_f)[0];
        let mut h = h_f;
        let mut outs = Vec::with_capacity(2);
        for layer in self.gcn {
            let width = tape.shape(h)[2];
            let flat = tape.reshape(h, &[b * n, width])?;
            let w = tape.param(&self.store, layer.weight);
            let hw = tape.matmul(flat, w)?;
            let g = tape.shape(hw)[1];
            let hw = tape.reshape(hw, &[b, n, g])?;
            let mixed = tape.adjacency_matmul(adj, hw)?;
            let mixed = tape.reshape(mixed, &[b * n, g])?;
            let normed = self.apply_bn(tape, mixed, layer.bn, mode)?;
            let act = tape.relu(normed);
            h = tape.reshape(act, &[b, n, g])?;
            outs.push(h);
        }
        let pooled = tape.global_mean_pool(h)?;
        Ok((outs[0], outs[1], pooled))
    }

    fn head(&self, tape: &mut Tape<T>, head: Head, x: Value) -> Result<Value, ModelError> {
        let w1 = tape.param(&self.store, head.w1);
        let b1 = tape.param(&self.store, head.b1);
        let w2 = tape.param(&self.store, head.w2);
        let b2 = tape.param(&self.store, head.b2);
        let h = tape.matmul(x, w1)?;
        let h = tape.add_bias(h, b1)?;
        let h = tape.relu(h);
        let o = tape.matmul(h, w2)?;
        Ok(tape.add_bias(o, b2)?)
    }

    pub fn classify(&self, tape: &mut Tape<T>, pooled: Value) -> Result<Value, ModelError> {
        self.head(tape, self.classifier, pooled)
    }

    /// Domain logits; the pooled embedding passes a gradient-reversal node first
    /// unless `grl` is false.
    pub fn discriminate(
        &self,
        tape: &mut Tape<T>,
        pooled: Value,
        lambda: f64,
        grl: bool,
    ) -> Result<Value, ModelError> {
        let input = if grl {
            tape.grad_reverse(pooled, lambda)?
        } else {
            pooled
        };
        self.head(tape, self.discriminator, input)
    }

    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        batch: &Batch<T>,
        a_hat: &[f64],
        opts: ForwardOptions,
    ) -> Result<ForwardTrace, ModelError> {
        let x = self.input(tape, batch)?;
        let h_f = self.extract_features(tape, x, opts.bn)?;
        let (h_g1, h_g2, pooled) = self.gcn_forward(tape, h_f, a_hat, opts.bn)?;
        let activity_logits = self.classify(tape, pooled)?;
        let domain_logits = self.discriminate(tape, pooled, opts.lambda, opts.grl)?;
        let trace = ForwardTrace {
            h_f,
            h_g1,
            h_g2,
            pooled,
            activity_logits,
            domain_logits,
        };
        for (stage, v) in [
            ("h_f", h_f),
            ("h_g1", h_g1),
            ("h_g2", h_g2),
            ("pooled", pooled),
            ("activity_logits", activity_logits),
            ("domain_logits", domain_logits),
        ] {
            if tape.data(v).iter().any(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite { stage });
            }
        }
        Ok(trace)
    }

    /// `L_k = L_a + beta * L_d` under the propagation matrix `a_hat`.
    pub fn phase_loss(
        &mut self,
        tape: &mut Tape<T>,
        batch: &Batch<T>,
        a_hat: &[f64],
        beta: f64,
        opts: ForwardOptions,
    ) -> Result<PhaseLoss, ModelError> {
        let trace = self.forward(tape, batch, a_hat, opts)?;
        let activity = tape.softmax_cross_entropy(trace.activity_logits, &batch.activity)?;
        let domain = tape.softmax_cross_entropy(trace.domain_logits, &batch.domain)?;
        let weighted = tape.scale(domain, beta);
        let total = tape.add(activity, weighted)?;
        Ok(PhaseLoss {
            total,
            activity,
            domain,
            trace,
        })
    }

    /// Eval-mode argmax predictions (earliest index on ties).
    pub fn predict(&mut self, batch: &Batch<T>, a_hat: &[f64]) -> Result<Vec<usize>, ModelError> {
        let mut tape = Tape::new();
        let trace = self.forward(&mut tape, batch, a_hat, ForwardOptions::eval())?;
        Ok(argmax_rows(tape.data(trace.activity_logits), self.dims.classes))
    }

    pub fn reset_running_stats(&mut self) {
        let ids: Vec<BnIds> = self
            .conv
            .iter()
            .map(|c| c.bn)
            .chain(self.gcn.iter().map(|g| g.bn))
            .collect();
        for bn in ids {
            self.store.get_mut(bn.mean).data.iter_mut().for_each(|v| *v = T::zero());
            self.store.get_mut(bn.var).data.iter_mut().for_each(|v| *v = T::one());
        }
    }

    /// Re-estimates every batch-norm running statistic as the plain average of
    /// batch statistics over `batches` propagated with `a_hat`. Parameters are
    /// left untouched.
    pub fn recalibrate_bn<'a, I>(&mut self, batches: I, a_hat: &[f64]) -> Result<(), ModelError>
    where
        I: IntoIterator<Item = &'a Batch<T>>,
    {
        self.reset_running_stats();
        let result = (|| {
            for (k, batch) in batches.into_iter().enumerate() {
                if batch.size() < 2 {
                    continue;
                }
                self.momentum_override = Some(1.0 / (k + 1) as f64);
                let mut tape = Tape::new();
                self.forward(&mut tape, batch, a_hat, ForwardOptions::train(1.0))?;
            }
            Ok(())
        })();
        self.momentum_override = None;
        result
    }

    /// Parameter names belonging to the shared extractor and graph layers.
    pub fn is_shared_feature_param(name: &str) -> bool {
        name.starts_with("extractor.") || name.starts_with("gcn.")
    }
}

pub fn argmax_rows<T: Real>(logits: &[T], classes: usize) -> Vec<usize> {
    logits
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            conv_channels: [3, 4],
            kernel_widths: [3, 3],
            gcn_widths: [5, 4],
            ..ModelConfig::default()
        }
    }

    fn dims() -> ModelDims {
        ModelDims {
            nodes: 3,
            channels: 2,
            length: 16,
            classes: 3,
            domains: 2,
        }
    }

    fn batch(seed: u64, size: usize) -> Batch<f64> {
        let d = dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Batch {
            x: (0..size * d.nodes * d.channels * d.length)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            activity: (0..size).map(|i| i % d.classes).collect(),
            domain: (0..size).map(|i| i % d.domains).collect(),
            nodes: d.nodes,
            channels: d.channels,
            length: d.length,
        }
    }

    fn eye(n: usize) -> Vec<f64> {
        (0..n * n).map(|i| if i % (n + 1) == 0 { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn extractor_has_one_parameter_set() {
        let m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 1).unwrap();
        let conv_params = m
            .params()
            .iter()
            .filter(|(_, p)| p.name.starts_with("extractor.conv1.kernels"))
            .count();
        assert_eq!(conv_params, 1);
        let m5 = GnnAdgModel::<f64>::new(small_cfg(), ModelDims { nodes: 7, ..dims() }, 1).unwrap();
        assert_eq!(
            m.params().learnable_count() - m.params().get(m.gcn[0].weight).data.len(),
            m5.params().learnable_count() - m5.params().get(m5.gcn[0].weight).data.len()
        );
    }

    #[test]
    fn node_permutation_permutes_features() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 2).unwrap();
        let b = batch(3, 4);
        let d = dims();
        let per_node = d.channels * d.length;
        let perm = [2, 0, 1];
        let mut pb = b.clone();
        for s in 0..b.size() {
            for (dst, &src) in perm.iter().enumerate() {
                let base = s * d.nodes * per_node;
                pb.x[base + dst * per_node..base + (dst + 1) * per_node]
                    .copy_from_slice(&b.x[base + src * per_node..base + (src + 1) * per_node]);
            }
        }
        let hf = |m: &mut GnnAdgModel<f64>, b: &Batch<f64>| {
            let mut t = Tape::new();
            let x = m.input(&mut t, b).unwrap();
            let h = m.extract_features(&mut t, x, BnMode::Eval).unwrap();
            t.data(h).to_vec()
        };
        let (h, ph) = (hf(&mut m, &b), hf(&mut m, &pb));
        let f0 = m.feature_width();
        for s in 0..b.size() {
            for (dst, &src) in perm.iter().enumerate() {
                let base = s * d.nodes * f0;
                assert_eq!(
                    &ph[base + dst * f0..base + (dst + 1) * f0],
                    &h[base + src * f0..base + (src + 1) * f0]
                );
            }
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_features() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 4).unwrap();
        for p in m.params_mut().iter_mut() {
            if p.name.ends_with(".bias") {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut b = batch(1, 2);
        b.x.iter_mut().for_each(|v| *v = 0.0);
        let mut t = Tape::new();
        let x = m.input(&mut t, &b).unwrap();
        let h = m.extract_features(&mut t, x, BnMode::Eval).unwrap();
        assert!(t.data(h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_graph_reduces_to_per_node_dense_layers() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 5).unwrap();
        let b = batch(6, 3);
        let mut t = Tape::new();
        let x = m.input(&mut t, &b).unwrap();
        let h = m.extract_features(&mut t, x, BnMode::Eval).unwrap();
        let (_, h2, _) = m.gcn_forward(&mut t, h, &eye(3), BnMode::Eval).unwrap();
        // eval BN with mean 0 / var 1 / gamma 1 / beta 0 is a scale by 1/sqrt(1+eps)
        let s = 1.0 / (1.0f64 + m.config().bn_eps).sqrt();
        let relu = |v: f64| v.max(0.0);
        let dense = |input: &[f64], w: &[f64], cols: usize| -> Vec<f64> {
            let rows = input.len() / (w.len() / cols);
            let k = w.len() / cols;
            let mut out = vec![0.0; rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    let z: f64 = (0..k).map(|i| input[r * k + i] * w[i * cols + c]).sum();
                    out[r * cols + c] = relu(z * s);
                }
            }
            out
        };
        let w1 = &m.params().get(m.gcn[0].weight).data;
        let w2 = &m.params().get(m.gcn[1].weight).data;
        let expect = dense(&dense(t.data(h), w1, 5), w2, 4);
        for (a, e) in t.data(h2).iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn averaging_graph_makes_node_rows_identical() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 7).unwrap();
        let b = batch(8, 4);
        let avg = vec![1.0 / 3.0; 9];
        let mut t = Tape::new();
        let x = m.input(&mut t, &b).unwrap();
        let h = m.extract_features(&mut t, x, BnMode::Train).unwrap();
        let (h1, _, _) = m.gcn_forward(&mut t, h, &avg, BnMode::Train).unwrap();
        let g = 5;
        let d = t.data(h1);
        for s in 0..4 {
            let first = &d[s * 3 * g..s * 3 * g + g];
            for n in 1..3 {
                let row = &d[(s * 3 + n) * g..(s * 3 + n + 1) * g];
                for (a, b) in row.iter().zip(first) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn discriminate_forward_equals_head_without_reversal() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 9).unwrap();
        let b = batch(10, 3);
        let run = |m: &mut GnnAdgModel<f64>, grl: bool| {
            let mut t = Tape::new();
            let tr = m
                .forward(&mut t, &b, &eye(3), ForwardOptions { bn: BnMode::Eval, lambda: 1.0, grl })
                .unwrap();
            t.data(tr.domain_logits).to_vec()
        };
        assert_eq!(run(&mut m, true), run(&mut m, false));
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 11).unwrap();
        let bias = vec![0.3, -0.7, 1.1];
        for p in m.params_mut().iter_mut() {
            if p.name.starts_with("classifier.w") || p.name == "classifier.b1" {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
            if p.name == "classifier.b2" {
                p.data = bias.clone();
            }
        }
        let b = batch(12, 2);
        let mut t = Tape::new();
        let tr = m.forward(&mut t, &b, &eye(3), ForwardOptions::eval()).unwrap();
        assert_eq!(t.data(tr.activity_logits), &[bias.clone(), bias].concat()[..]);
    }

    #[test]
    fn zero_beta_loss_is_activity_loss() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 13).unwrap();
        let b = batch(14, 4);
        let mut t = Tape::new();
        let l = m.phase_loss(&mut t, &b, &eye(3), 0.0, ForwardOptions::train(1.0)).unwrap();
        assert_eq!(t.scalar(l.total), t.scalar(l.activity));
    }

    #[test]
    fn uniform_logits_give_log_class_plus_log_domain() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 15).unwrap();
        for p in m.params_mut().iter_mut() {
            if p.name.starts_with("classifier.") || p.name.starts_with("discriminator.") {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let b = batch(16, 4);
        let mut t = Tape::new();
        let l = m.phase_loss(&mut t, &b, &eye(3), 1.0, ForwardOptions::train(1.0)).unwrap();
        let expect = 3f64.ln() + 2f64.ln();
        assert!((t.scalar(l.total) - expect).abs() < 1e-14);
    }

    #[test]
    fn mismatched_batch_is_a_config_error() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 17).unwrap();
        let mut b = batch(18, 2);
        b.channels = 3;
        let mut t = Tape::new();
        assert!(matches!(
            m.forward(&mut t, &b, &eye(3), ForwardOptions::eval()),
            Err(ModelError::Config(_))
        ));
        let b = batch(18, 2);
        let mut bad = eye(3);
        bad[4] = f64::NAN;
        assert!(matches!(
            m.forward(&mut t, &b, &bad, ForwardOptions::eval()),
            Err(ModelError::Graph(_))
        ));
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 19).unwrap();
        for seed in 0..100 {
            let mut b = batch(100 + seed, 3);
            b.x.iter_mut().for_each(|v| *v *= 100.0);
            let mut t = Tape::new();
            m.phase_loss(&mut t, &b, &eye(3), 1.0, ForwardOptions::train(1.0))
                .unwrap();
        }
    }

    #[test]
    fn recalibration_averages_batch_stats() {
        let mut m = GnnAdgModel::<f64>::new(small_cfg(), dims(), 21).unwrap();
        let batches = [batch(1, 4), batch(2, 4)];
        m.recalibrate_bn(&batches, &eye(3)).unwrap();
        // conv1 running mean is the average of the two batch means
        let mean_of = |m: &mut GnnAdgModel<f64>, b: &Batch<f64>| {
            let mut probe = m.clone();
            probe.reset_running_stats();
            probe.momentum_override = Some(1.0);
            let mut t = Tape::new();
            probe.forward(&mut t, b, &eye(3), ForwardOptions::train(1.0)).unwrap();
            let id = probe.conv[0].bn.mean;
            probe.params().get(id).data.clone()
        };
        let (a, b) = (mean_of(&mut m, &batches[0]), mean_of(&mut m, &batches[1]));
        let got = &m.params().get(m.conv[0].bn.mean).data;
        for i in 0..got.len() {
            assert!((got[i] - 0.5 * (a[i] + b[i])).abs() < 1e-12);
        }
    }
}
