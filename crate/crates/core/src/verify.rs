//! Finite-difference gradient checks for every tape op and the adversarial
//! gradient contract of the full model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{BatchNormStats, BnConfig, BnMode, OpKind, Tape, TensorError, Value};
use crate::graphs::{GraphKind, GraphSel, GraphSet, SensorLayout};
use crate::model::{Batch, ForwardOptions, GnnAdgModel, ModelConfig, ModelDims, ModelError};

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub instances: usize,
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on the denominator of the relative error.
    pub floor: f64,
    pub grl_tolerance: f64,
    pub seed: u64,
    /// Test hook: negate the backward of this op kind.
    pub sign_flip: Option<OpKind>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            instances: 10,
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-4,
            grl_tolerance: 1e-10,
            seed: 0,
            sign_flip: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub op: OpKind,
    pub instances: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrlCheck {
    pub beta: f64,
    /// Compared shared feature gradient entries.
    pub compared: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub ops: Vec<OpCheck>,
    pub grl: Vec<GrlCheck>,
    /// Largest shared-parameter gradient difference between `L_a + β·L_d` at
    /// λ = 0 and `L_a` alone.
    pub lambda_zero_max_abs: f64,
    pub lambda_zero_passed: bool,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.ops.iter().all(|c| c.passed) && self.grl.iter().all(|c| c.passed) && self.lambda_zero_passed
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.ops.iter().filter(|c| !c.passed).map(|c| c.op.name().to_string()).collect();
        out.extend(self.grl.iter().filter(|c| !c.passed).map(|c| format!("grl(beta={})", c.beta)));
        if !self.lambda_zero_passed {
            out.push("grl(lambda=0)".into());
        }
        out
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:24} {:>9} {:>14}  status\n", "op", "instances", "max rel err");
        for c in &self.ops {
            s.push_str(&format!(
                "{:24} {:>9} {:>14.3e}  {}\n",
                c.op.name(),
                c.instances,
                c.max_rel_err,
                if c.passed { "ok" } else { "FAIL" }
            ));
        }
        for c in &self.grl {
            s.push_str(&format!(
                "{:24} {:>9} {:>14.3e}  {}\n",
                format!("grl dual beta={}", c.beta),
                c.compared,
                c.max_rel_err,
                if c.passed { "ok" } else { "FAIL" }
            ));
        }
        s.push_str(&format!(
            "{:24} {:>9} {:>14.3e}  {}\n",
            "grl lambda=0 (abs)",
            "",
            self.lambda_zero_max_abs,
            if self.lambda_zero_passed { "ok" } else { "FAIL" }
        ));
        s
    }
}

type Build = Box<dyn Fn(&mut Tape<f64>, &[Value]) -> Result<Value, TensorError>>;

struct Case {
    inputs: Vec<(Vec<f64>, Vec<usize>)>,
    build: Build,
    /// Function the finite differences are taken of, when it differs from `build`.
    reference: Option<Build>,
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Values bounded away from zero so a relu kink is never inside the stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random::<bool>() { m } else { -m }
        })
        .collect()
}

/// Distinct values on a 0.01 grid plus jitter, so pooling windows never tie.
fn distinct(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    v.shuffle(rng);
    v.iter().map(|x| x + rng.random_range(0.0..0.001)).collect()
}

fn case_for(op: OpKind, rng: &mut ChaCha8Rng, instance: usize) -> Case {
    let dim = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| rng.random_range(lo..=hi);
    match op {
        OpKind::Leaf => {
            let n = dim(rng, 1, 6);
            Case {
                inputs: vec![(normal(rng, n), vec![n])],
                build: Box::new(|_, v| Ok(v[0])),
                reference: None,
            }
        }
        OpKind::MatMul => {
            let (m, k, n) = (dim(rng, 1, 4), dim(rng, 1, 4), dim(rng, 1, 4));
            Case {
                inputs: vec![(normal(rng, m * k), vec![m, k]), (normal(rng, k * n), vec![k, n])],
                build: Box::new(|t, v| t.matmul(v[0], v[1])),
                reference: None,
            }
        }
        OpKind::AdjacencyMatMul => {
            let (b, n, f) = (dim(rng, 1, 3), dim(rng, 2, 5), dim(rng, 1, 4));
            Case {
                inputs: vec![(normal(rng, n * n), vec![n, n]), (normal(rng, b * n * f), vec![b, n, f])],
                build: Box::new(|t, v| t.adjacency_matmul(v[0], v[1])),
                reference: None,
            }
        }
        OpKind::Conv1d => {
            let (s, c, o, k) = (dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 1, 3), dim(rng, 1, 3));
            let (stride, pad) = (dim(rng, 1, 2), dim(rng, 0, 1));
            let len = dim(rng, k.max(2), 7);
            Case {
                inputs: vec![
                    (normal(rng, s * c * len), vec![s, c, len]),
                    (normal(rng, o * c * k), vec![o, c, k]),
                    (normal(rng, o), vec![o]),
                ],
                build: Box::new(move |t, v| t.conv1d(v[0], v[1], v[2], stride, pad)),
                reference: None,
            }
        }
        OpKind::BatchNorm => {
            let (r, f) = (dim(rng, 2, 5), dim(rng, 1, 3));
            let inner = if instance % 2 == 0 { 1 } else { dim(rng, 2, 3) };
            let shape = if inner == 1 { vec![r, f] } else { vec![r, f, inner] };
            let mode = if instance % 3 == 2 { BnMode::Eval } else { BnMode::Train };
            let mean = normal(rng, f);
            let var: Vec<f64> = (0..f).map(|_| rng.random_range(0.5..2.0)).collect();
            Case {
                inputs: vec![
                    (normal(rng, r * f * inner), shape),
                    (normal(rng, f), vec![f]),
                    (normal(rng, f), vec![f]),
                ],
                build: Box::new(move |t, v| {
                    let (mut m, mut s) = (mean.clone(), var.clone());
                    let stats = BatchNormStats { mean: &mut m, var: &mut s };
                    t.batchnorm(v[0], v[1], v[2], stats, mode, BnConfig::default())
                }),
                reference: None,
            }
        }
        OpKind::Relu => {
            let n = dim(rng, 1, 12);
            Case {
                inputs: vec![(away_from_zero(rng, n), vec![n])],
                build: Box::new(|t, v| Ok(t.relu(v[0]))),
                reference: None,
            }
        }
        OpKind::MaxPool1d => {
            let (r, len) = (dim(rng, 1, 3), dim(rng, 3, 8));
            let window = dim(rng, 1, 3);
            let stride = dim(rng, 1, 2);
            Case {
                inputs: vec![(distinct(rng, r * len), vec![r, len])],
                build: Box::new(move |t, v| t.maxpool1d(v[0], window, stride)),
                reference: None,
            }
        }
        OpKind::GlobalMeanPool => {
            let (b, n, f) = (dim(rng, 1, 3), dim(rng, 1, 5), dim(rng, 1, 4));
            let shape = if instance % 2 == 0 { vec![b, n, f] } else { vec![n, f] };
            let len = shape.iter().product();
            Case {
                inputs: vec![(normal(rng, len), shape)],
                build: Box::new(|t, v| t.global_mean_pool(v[0])),
                reference: None,
            }
        }
        OpKind::GradReverse => {
            let n = dim(rng, 1, 6);
            let lambda = rng.random_range(0.1..2.0);
            Case {
                inputs: vec![(normal(rng, n), vec![n])],
                build: Box::new(move |t, v| t.grad_reverse(v[0], lambda)),
                // identity forward, so the backward is compared against -λ·x
                reference: Some(Box::new(move |t, v| Ok(t.scale(v[0], -lambda)))),
            }
        }
        OpKind::SoftmaxCrossEntropy => {
            let (b, c) = (dim(rng, 1, 4), dim(rng, 2, 5));
            let targets: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
            Case {
                inputs: vec![(normal(rng, b * c).iter().map(|v| 3.0 * v).collect(), vec![b, c])],
                build: Box::new(move |t, v| t.softmax_cross_entropy(v[0], &targets)),
                reference: None,
            }
        }
        OpKind::Add | OpKind::Mul => {
            let n = dim(rng, 1, 6);
            Case {
                inputs: vec![(normal(rng, n), vec![n]), (normal(rng, n), vec![n])],
                build: Box::new(move |t, v| if op == OpKind::Add { t.add(v[0], v[1]) } else { t.mul(v[0], v[1]) }),
                reference: None,
            }
        }
        OpKind::Scale => {
            let n = dim(rng, 1, 6);
            let c = rng.random_range(-2.0..2.0);
            Case {
                inputs: vec![(normal(rng, n), vec![n])],
                build: Box::new(move |t, v| Ok(t.scale(v[0], c))),
                reference: None,
            }
        }
        OpKind::AddBias => {
            let (r, f) = (dim(rng, 1, 4), dim(rng, 1, 4));
            Case {
                inputs: vec![(normal(rng, r * f), vec![r, f]), (normal(rng, f), vec![f])],
                build: Box::new(|t, v| t.add_bias(v[0], v[1])),
                reference: None,
            }
        }
        OpKind::Reshape => {
            let (a, b) = (dim(rng, 1, 3), dim(rng, 1, 4));
            Case {
                inputs: vec![(normal(rng, a * b), vec![a, b])],
                build: Box::new(move |t, v| t.reshape(v[0], &[b, a])),
                reference: None,
            }
        }
        OpKind::Sum => {
            let n = dim(rng, 1, 8);
            Case {
                inputs: vec![(normal(rng, n), vec![n])],
                build: Box::new(|t, v| Ok(t.sum(v[0]))),
                reference: None,
            }
        }
    }
}

/// Projected output `Σ w·y` for the given input values.
fn project(case: &Case, data: &[Vec<f64>], w: &[f64]) -> Result<f64, TensorError> {
    let mut tape = Tape::<f64>::new();
    let leaves = data
        .iter()
        .zip(&case.inputs)
        .map(|(d, (_, shape))| tape.leaf(d.clone(), shape))
        .collect::<Result<Vec<_>, _>>()?;
    let y = case.reference.as_ref().unwrap_or(&case.build)(&mut tape, &leaves)?;
    Ok(tape.data(y).iter().zip(w).map(|(a, b)| a * b).sum())
}

fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn check_case(case: &Case, rng: &mut ChaCha8Rng, cfg: &GradcheckConfig) -> Result<f64, TensorError> {
    let data: Vec<Vec<f64>> = case.inputs.iter().map(|(d, _)| d.clone()).collect();
    let mut tape = Tape::<f64>::new();
    tape.inject_sign_flip(cfg.sign_flip);
    let leaves = case
        .inputs
        .iter()
        .map(|(d, shape)| tape.leaf(d.clone(), shape))
        .collect::<Result<Vec<_>, _>>()?;
    let y = (case.build)(&mut tape, &leaves)?;
    let w = normal(rng, tape.data(y).len());
    tape.backward_with(y, w.clone())?;

    let mut worst = 0.0f64;
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = tape.grad(*leaf).to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let mut plus = data.clone();
            plus[i][j] += cfg.step;
            let mut minus = data.clone();
            minus[i][j] -= cfg.step;
            let numeric = (project(case, &plus, &w)? - project(case, &minus, &w)?) / (2.0 * cfg.step);
            worst = worst.max(rel_err(a, numeric, cfg.floor));
        }
    }
    Ok(worst)
}

/// Central-difference check of every op over `cfg.instances` random inputs.
pub fn check_ops(cfg: &GradcheckConfig) -> Result<Vec<OpCheck>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(OpKind::ALL.len());
    for &op in OpKind::ALL.iter() {
        let mut worst = 0.0f64;
        for i in 0..cfg.instances {
            let case = case_for(op, &mut rng, i);
            let e = check_case(&case, &mut rng, cfg)?;
            worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
        }
        out.push(OpCheck {
            op,
            instances: cfg.instances,
            max_rel_err: worst,
            passed: worst < cfg.tolerance,
        });
    }
    Ok(out)
}

fn probe_model(seed: u64) -> Result<(GnnAdgModel<f64>, Batch<f64>, Vec<f64>), ModelError> {
    let layout = SensorLayout::builtin("dsads").expect("builtin layout");
    let graphs = GraphSet::new(&layout, true).map_err(|e| ModelError::Graph(e.to_string()))?;
    let dims = ModelDims {
        nodes: layout.len(),
        channels: 2,
        length: 12,
        classes: 3,
        domains: 3,
    };
    let cfg = ModelConfig {
        conv_channels: [3, 4],
        kernel_widths: [3, 2],
        gcn_widths: [5, 4],
        ..ModelConfig::default()
    };
    let model = GnnAdgModel::new(cfg, dims, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let size = 6;
    let batch = Batch {
        x: normal(&mut rng, size * dims.nodes * dims.channels * dims.length),
        activity: (0..size).map(|i| i % dims.classes).collect(),
        domain: (0..size).map(|i| (i / 2) % dims.domains).collect(),
        nodes: dims.nodes,
        channels: dims.channels,
        length: dims.length,
    };
    Ok((model, batch, graphs.a_hat(GraphSel::Kind(GraphKind::Interconnected)).to_vec()))
}

/// Shared extractor/GCN gradients of `L_a + beta·L_d`.
fn shared_grads(
    model: &GnnAdgModel<f64>,
    batch: &Batch<f64>,
    a_hat: &[f64],
    beta: f64,
    opts: ForwardOptions,
    sign_flip: Option<OpKind>,
) -> Result<Vec<f64>, ModelError> {
    let mut m = model.clone();
    m.params_mut().zero_grad();
    let mut tape = Tape::new();
    tape.inject_sign_flip(sign_flip);
    let loss = m.phase_loss(&mut tape, batch, a_hat, beta, opts)?;
    tape.backward(loss.total)?;
    tape.accumulate_param_grads(m.params_mut());
    Ok(m
        .params()
        .iter()
        .filter(|(_, p)| p.learnable && GnnAdgModel::<f64>::is_shared_feature_param(&p.name))
        .flat_map(|(_, p)| p.grad.clone())
        .collect())
}

/// Gradients through the reversal layer against the sign-flipped objective
/// without it, for each `beta`.
pub fn check_grl(betas: &[f64], cfg: &GradcheckConfig) -> Result<Vec<GrlCheck>, ModelError> {
    let (model, batch, a_hat) = probe_model(cfg.seed)?;
    let mut out = Vec::new();
    for &beta in betas {
        let with = shared_grads(&model, &batch, &a_hat, beta, ForwardOptions::train(1.0), cfg.sign_flip)?;
        let plain = ForwardOptions {
            grl: false,
            ..ForwardOptions::train(1.0)
        };
        let without = shared_grads(&model, &batch, &a_hat, -beta, plain, cfg.sign_flip)?;
        let worst = with
            .iter()
            .zip(&without)
            .map(|(&a, &b)| rel_err(a, b, f64::MIN_POSITIVE))
            .fold(0.0, |w: f64, e| if e.is_nan() { f64::INFINITY } else { w.max(e) });
        out.push(GrlCheck {
            beta,
            compared: with.len(),
            max_rel_err: worst,
            passed: worst < cfg.grl_tolerance && with.len() == without.len(),
        });
    }
    Ok(out)
}

/// Largest shared-gradient change the domain term causes at λ = 0.
pub fn check_lambda_zero(cfg: &GradcheckConfig) -> Result<f64, ModelError> {
    let (model, batch, a_hat) = probe_model(cfg.seed)?;
    let adversarial = shared_grads(&model, &batch, &a_hat, 1.0, ForwardOptions::train(0.0), cfg.sign_flip)?;
    let activity_only = shared_grads(&model, &batch, &a_hat, 0.0, ForwardOptions::train(0.0), cfg.sign_flip)?;
    Ok(adversarial
        .iter()
        .zip(&activity_only)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport, ModelError> {
    let ops = check_ops(cfg)?;
    let grl = check_grl(&[0.0, 0.5, 1.0], cfg)?;
    let lambda_zero_max_abs = check_lambda_zero(cfg)?;
    Ok(GradcheckReport {
        ops,
        grl,
        lambda_zero_max_abs,
        lambda_zero_passed: lambda_zero_max_abs == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> GradcheckConfig {
        GradcheckConfig {
            instances: 3,
            ..GradcheckConfig::default()
        }
    }

    #[test]
    fn all_ops_pass() {
        for c in check_ops(&quick()).unwrap() {
            assert!(c.passed, "{} max rel err {}", c.op.name(), c.max_rel_err);
        }
    }

    #[test]
    fn sign_flip_is_caught_and_named() {
        for op in [OpKind::Conv1d, OpKind::BatchNorm, OpKind::AdjacencyMatMul] {
            let checks = check_ops(&GradcheckConfig {
                sign_flip: Some(op),
                ..quick()
            })
            .unwrap();
            let failed: Vec<OpKind> = checks.iter().filter(|c| !c.passed).map(|c| c.op).collect();
            assert_eq!(failed, vec![op]);
        }
    }

    #[test]
    fn grl_contract_and_lambda_zero() {
        let r = run_gradcheck(&quick()).unwrap();
        assert!(r.grl.iter().all(|c| c.passed && c.compared > 0), "{:?}", r.grl);
        assert!(r.lambda_zero_passed, "{}", r.lambda_zero_max_abs);
        assert!(r.render().contains("grl dual beta=0.5"));
    }
}
