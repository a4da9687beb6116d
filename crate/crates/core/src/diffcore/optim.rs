use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer over the learnable entries of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    cfg: OptimizerConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Optimizer {
            cfg,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.step += 1;
        let lr = T::of(self.cfg.lr);
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for p in store.iter_mut().filter(|p| p.learnable) {
                    for (w, &g) in p.data.iter_mut().zip(&p.grad) {
                        *w = *w - lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let n = store.len();
                if self.m.len() != n {
                    self.m = store.iter().map(|(_, p)| vec![T::zero(); p.data.len()]).collect();
                    self.v = self.m.clone();
                }
                let (b1, b2) = (T::of(self.cfg.beta1), T::of(self.cfg.beta2));
                let eps = T::of(self.cfg.eps);
                let t = self.step as i32;
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
                    if !p.learnable {
                        continue;
                    }
                    for i in 0..p.data.len() {
                        let g = p.grad[i];
                        m[i] = b1 * m[i] + (T::one() - b1) * g;
                        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        p.data[i] = p.data[i] - lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
    }
}
