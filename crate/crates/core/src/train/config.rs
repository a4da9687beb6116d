use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::diffcore::{OptimizerConfig, Precision};
use crate::graphs::{active_graph, GraphKind, GraphSel};

/// Which propagation matrices a run trains and evaluates with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainMode {
    /// Cycle Interconnected → Analogous → Lateral every `phase_len` epochs.
    Fusion,
    /// One anatomical graph for the whole run.
    Single(GraphKind),
    /// Identity propagation and no adversarial term.
    Baseline,
}

impl TrainMode {
    pub const GRID: [TrainMode; 5] = [
        TrainMode::Fusion,
        TrainMode::Single(GraphKind::Interconnected),
        TrainMode::Single(GraphKind::Analogous),
        TrainMode::Single(GraphKind::Lateral),
        TrainMode::Baseline,
    ];

    /// Graph used to train epoch `epoch`.
    pub fn train_graph(self, epoch: usize, phase_len: usize) -> GraphSel {
        match self {
            TrainMode::Fusion => GraphSel::Kind(active_graph(epoch, phase_len)),
            TrainMode::Single(k) => GraphSel::Kind(k),
            TrainMode::Baseline => GraphSel::Identity,
        }
    }

    /// Graphs the final model is evaluated under.
    pub fn eval_graphs(self) -> Vec<GraphSel> {
        match self {
            TrainMode::Fusion => GraphKind::ALL.iter().map(|&k| GraphSel::Kind(k)).collect(),
            TrainMode::Single(k) => vec![GraphSel::Kind(k)],
            TrainMode::Baseline => vec![GraphSel::Identity],
        }
    }

    pub fn effective_beta(self, beta: f64) -> f64 {
        if self == TrainMode::Baseline {
            0.0
        } else {
            beta
        }
    }

    pub fn title(self) -> String {
        match self {
            TrainMode::Fusion => "Fusion".into(),
            TrainMode::Single(k) => format!("Single ({})", k.title()),
            TrainMode::Baseline => "Baseline (identity, β=0)".into(),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainMode::Fusion => f.write_str("fusion"),
            TrainMode::Single(k) => write!(f, "single:{}", k.code()),
            TrainMode::Baseline => f.write_str("baseline"),
        }
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fusion" => Ok(TrainMode::Fusion),
            "baseline" => Ok(TrainMode::Baseline),
            _ => match s.strip_prefix("single:") {
                Some(k) => k.parse::<GraphKind>().map(TrainMode::Single),
                None => Err(format!(
                    "unknown mode {s:?} (expected fusion, single:I, single:A, single:L or baseline)"
                )),
            },
        }
    }
}

impl Serialize for TrainMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TrainMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs per graph phase in fusion mode.
    pub phase_len: usize,
    /// Weight of the discriminator loss.
    pub beta: f64,
    /// Gradient-reversal scale.
    pub lambda: f64,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub precision: Precision,
    pub self_loops: bool,
    /// Score the held-out fold after every epoch (needed for the loss/accuracy correlation).
    pub eval_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 120,
            phase_len: 20,
            beta: 1.0,
            lambda: 1.0,
            optimizer: OptimizerConfig::default(),
            batch_size: 32,
            seed: 0,
            mode: TrainMode::Fusion,
            precision: Precision::F32,
            self_loops: true,
            eval_every_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epochs == 0 || self.phase_len == 0 {
            return Err("epochs and phase_len must be at least 1".into());
        }
        if self.batch_size < 2 {
            return Err("batch_size must be at least 2 (batch norm needs two rows)".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite() && self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err("beta and lambda must be finite and non-negative".into());
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.eps > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return Err("optimizer needs lr > 0, eps > 0 and betas in [0, 1)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_round_trips_through_text() {
        for m in TrainMode::GRID {
            assert_eq!(m.to_string().parse::<TrainMode>().unwrap(), m);
        }
        assert!("single:X".parse::<TrainMode>().is_err());
        assert!("hybrid".parse::<TrainMode>().is_err());
    }

    #[test]
    fn fusion_schedule_for_sixty_epochs() {
        let kinds: Vec<GraphSel> = (0..60).map(|t| TrainMode::Fusion.train_graph(t, 20)).collect();
        for (t, k) in kinds.iter().enumerate() {
            let want = [GraphKind::Interconnected, GraphKind::Analogous, GraphKind::Lateral][t / 20];
            assert_eq!(*k, GraphSel::Kind(want));
        }
    }

    #[test]
    fn defaults_are_two_cycles() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 6 * c.phase_len);
        assert!(c.validate().is_ok());
        assert!(TrainConfig { batch_size: 1, ..c.clone() }.validate().is_err());
        let t: TrainConfig = toml::from_str("mode = \"single:A\"\nepochs = 3").unwrap();
        assert_eq!(t.mode, TrainMode::Single(GraphKind::Analogous));
        assert!(toml::from_str::<TrainConfig>("epoch = 3").is_err());
    }
}
