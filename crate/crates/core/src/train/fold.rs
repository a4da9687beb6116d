use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Evaluation, TrainConfig, TrainError, TrainMode};
use crate::data::{ChannelStats, LosoSplit, SampleSet};
use crate::diffcore::{Optimizer, Real, Tape};
use crate::graphs::GraphSet;
use crate::model::{argmax_rows, Batch, ForwardOptions, GnnAdgModel, ModelConfig, ModelDims, ModelError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub graph: String,
    /// Size-weighted means over the epoch's mini-batches.
    pub loss_activity: f64,
    pub loss_domain: f64,
    pub loss_total: f64,
    pub train_acc: f64,
    /// Held-out accuracy under the epoch's graph with running batch-norm statistics.
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEvaluation {
    pub graph: String,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: String,
    pub mode: TrainMode,
    pub epochs: Vec<EpochRecord>,
    /// Final-epoch parameters scored under each evaluation graph.
    pub evaluations: Vec<GraphEvaluation>,
    /// Mean accuracy over `evaluations`.
    pub accuracy: f64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub optimizer_steps: u64,
}

/// Stateless 64-bit mix used to derive per-fold seeds.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `order` into batches of `size`; a trailing batch of one joins the previous batch.
pub fn chunk_batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

fn batches<T: Real>(set: &SampleSet, order: &[usize], size: usize, split: &LosoSplit, stats: &ChannelStats) -> Vec<Batch<T>> {
    chunk_batches(order, size)
        .iter()
        .map(|b| set.batch(b, |i| split.domain_of(i).unwrap_or(0), Some(stats)))
        .collect()
}

/// Eval-mode accuracy and confusion matrix over prepared batches.
pub fn evaluate<T: Real>(
    model: &mut GnnAdgModel<T>,
    batches: &[Batch<T>],
    a_hat: &[f64],
) -> Result<Evaluation, ModelError> {
    let classes = model.dims().classes;
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for b in batches {
        pred.extend(model.predict(b, a_hat)?);
        truth.extend_from_slice(&b.activity);
    }
    Ok(Evaluation::from_predictions(&truth, &pred, classes))
}

fn snapshot<T: Real>(model: &GnnAdgModel<T>, epoch: usize, batch: usize, history: &[EpochRecord]) -> String {
    let mut s = format!("diverged at epoch {epoch}, batch {batch}\n");
    if let Some(last) = history.last() {
        s.push_str(&format!(
            "last finite epoch {}: L_a={:.6} L_d={:.6} L_k={:.6}\n",
            last.epoch, last.loss_activity, last.loss_domain, last.loss_total
        ));
    }
    for (_, p) in model.params().iter() {
        let max = p.data.iter().map(|v| v.f64().abs()).fold(0.0, f64::max);
        let gmax = p.grad.iter().map(|v| v.f64().abs()).fold(0.0, f64::max);
        s.push_str(&format!("{:40} max|w|={max:.4e} max|g|={gmax:.4e}\n", p.name));
    }
    s
}

/// Model dimensions for training on `split`.
pub fn fold_dims(set: &SampleSet, split: &LosoSplit) -> ModelDims {
    ModelDims {
        nodes: set.nodes,
        channels: set.channels,
        length: set.length,
        classes: set.classes(),
        domains: split.domains(),
    }
}

pub fn mean_accuracy(evaluations: &[GraphEvaluation]) -> f64 {
    evaluations.iter().map(|e| e.accuracy).sum::<f64>() / evaluations.len() as f64
}

/// Scores trained parameters on `split.test` under each of the mode's
/// evaluation graphs, re-estimating batch-norm statistics on `split.train`
/// with that graph first. Depends only on the parameters, data and `cfg`.
pub fn score<T: Real>(
    model: &GnnAdgModel<T>,
    set: &SampleSet,
    split: &LosoSplit,
    fold_index: usize,
    graphs: &GraphSet,
    cfg: &TrainConfig,
) -> Result<Vec<GraphEvaluation>, ModelError> {
    let stats = ChannelStats::fit(set, &split.train);
    let test_batches: Vec<Batch<T>> = batches(set, &split.test, cfg.batch_size.max(64), split, &stats);
    // stored order groups samples by user and activity; calibration batches must mix them
    let mut order = split.train.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, fold_index as u64, 2)));
    let calib: Vec<Batch<T>> = batches(set, &order, cfg.batch_size, split, &stats);
    let mut out = Vec::new();
    for sel in cfg.mode.eval_graphs() {
        let mut scored = model.clone();
        scored.recalibrate_bn(&calib, graphs.a_hat(sel))?;
        let e = evaluate(&mut scored, &test_batches, graphs.a_hat(sel))?;
        out.push(GraphEvaluation {
            graph: sel.label().to_string(),
            accuracy: e.accuracy,
            confusion: e.confusion,
        });
    }
    Ok(out)
}

/// Trains one model on `split.train` and scores it on `split.test`.
///
/// `fold_index` and `cfg.seed` fix initialization and batch order; the mode
/// does not enter the seed, so every mode starts from the same weights.
pub fn train_fold<T: Real>(
    set: &SampleSet,
    split: &LosoSplit,
    fold_index: usize,
    graphs: &GraphSet,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(GnnAdgModel<T>, FoldReport), TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    if split.train.len() < 2 || split.test.is_empty() {
        return Err(TrainError::Config(format!(
            "fold {} needs at least two training and one test sample",
            split.fold
        )));
    }
    if graphs.nodes() != set.nodes {
        return Err(TrainError::Config(format!(
            "layout has {} positions but samples have {} nodes",
            graphs.nodes(),
            set.nodes
        )));
    }
    let mut model = GnnAdgModel::<T>::new(model_cfg.clone(), fold_dims(set, split), mix_seed(cfg.seed, fold_index as u64, 0))?;
    let mut opt = Optimizer::<T>::new(cfg.optimizer.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, fold_index as u64, 1));
    let stats = ChannelStats::fit(set, &split.train);
    let test_batches: Vec<Batch<T>> = batches(set, &split.test, cfg.batch_size.max(64), split, &stats);
    let beta = cfg.mode.effective_beta(cfg.beta);
    let diverge = |model: &GnnAdgModel<T>, epoch, batch, history: &[EpochRecord], detail: String| TrainError::Divergence {
        fold: split.fold.clone(),
        epoch,
        batch,
        detail,
        snapshot: snapshot(model, epoch, batch, history),
    };

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order = split.train.clone();
    for epoch in 0..cfg.epochs {
        let sel = cfg.mode.train_graph(epoch, cfg.phase_len);
        let a_hat = graphs.a_hat(sel);
        order.shuffle(&mut rng);
        let (mut la, mut ld, mut lk, mut hits, mut seen) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for (bi, b) in batches::<T>(set, &order, cfg.batch_size, split, &stats).iter().enumerate() {
            model.params_mut().zero_grad();
            let mut tape = Tape::new();
            let loss = match model.phase_loss(&mut tape, b, a_hat, beta, ForwardOptions::train(cfg.lambda)) {
                Ok(l) => l,
                Err(ModelError::NonFinite { stage }) => {
                    return Err(diverge(&model, epoch, bi, &history, format!("non-finite {stage}")))
                }
                Err(e) => return Err(e.into()),
            };
            let (a, d, k) = (
                tape.scalar(loss.activity).f64(),
                tape.scalar(loss.domain).f64(),
                tape.scalar(loss.total).f64(),
            );
            if !(a.is_finite() && d.is_finite() && k.is_finite()) {
                return Err(diverge(&model, epoch, bi, &history, format!("loss L_a={a} L_d={d} L_k={k}")));
            }
            tape.backward(loss.total).map_err(ModelError::from)?;
            tape.accumulate_param_grads(model.params_mut());
            if model.params().iter().any(|(_, p)| p.grad.iter().any(|g| !g.is_finite())) {
                return Err(diverge(&model, epoch, bi, &history, "non-finite gradient".into()));
            }
            opt.step(model.params_mut());

            let n = b.size();
            let pred = argmax_rows(tape.data(loss.trace.activity_logits), set.classes());
            hits += pred.iter().zip(&b.activity).filter(|(p, t)| p == t).count();
            seen += n;
            la += a * n as f64;
            ld += d * n as f64;
            lk += k * n as f64;
        }
        let test_acc = if cfg.eval_every_epoch {
            Some(evaluate(&mut model, &test_batches, a_hat)?.accuracy)
        } else {
            None
        };
        let rec = EpochRecord {
            epoch,
            graph: sel.label().to_string(),
            loss_activity: la / seen as f64,
            loss_domain: ld / seen as f64,
            loss_total: lk / seen as f64,
            train_acc: hits as f64 / seen as f64,
            test_acc,
        };
        log::debug!(
            "fold {} {} epoch {epoch} [{}] L_a={:.4} L_d={:.4} train={:.3} test={:?}",
            split.fold,
            cfg.mode,
            rec.graph,
            rec.loss_activity,
            rec.loss_domain,
            rec.train_acc,
            rec.test_acc
        );
        history.push(rec);
    }

    let evaluations = score(&model, set, split, fold_index, graphs, cfg)?;
    let accuracy = mean_accuracy(&evaluations);
    let report = FoldReport {
        fold: split.fold.clone(),
        mode: cfg.mode,
        epochs: history,
        evaluations,
        accuracy,
        train_samples: split.train.len(),
        test_samples: split.test.len(),
        optimizer_steps: opt.steps_taken(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..65).collect();
        let b = chunk_batches(&order, 32);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), [32, 33]);
        assert_eq!(chunk_batches(&order[..64], 32).len(), 2);
        assert_eq!(chunk_batches(&order[..1], 32), vec![vec![0]]);
    }

    #[test]
    fn seeds_differ_by_fold_and_stream() {
        assert_ne!(mix_seed(1, 0, 0), mix_seed(1, 1, 0));
        assert_ne!(mix_seed(1, 0, 0), mix_seed(1, 0, 1));
        assert_eq!(mix_seed(5, 2, 1), mix_seed(5, 2, 1));
    }
}
