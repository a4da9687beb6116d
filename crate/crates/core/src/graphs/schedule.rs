use serde::{Deserialize, Serialize};

use super::GraphKind;

/// Cycles Interconnected → Analogous → Lateral, `phase_len` epochs each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleSchedule {
    phase_len: usize,
}

impl CycleSchedule {
    pub fn new(phase_len: usize) -> Option<Self> {
        (phase_len >= 1).then_some(CycleSchedule { phase_len })
    }

    pub fn phase_len(&self) -> usize {
        self.phase_len
    }

    pub fn at(&self, epoch: usize) -> GraphKind {
        GraphKind::ALL[(epoch / self.phase_len) % 3]
    }
}

/// Graph active at `epoch` (0-based) for phases of `phase_len` epochs.
///
/// # Panics
/// If `phase_len` is zero.
pub fn active_graph(epoch: usize, phase_len: usize) -> GraphKind {
    CycleSchedule::new(phase_len)
        .expect("phase length must be positive")
        .at(epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twenty_epoch_phases() {
        assert_eq!(active_graph(0, 20), GraphKind::Interconnected);
        assert_eq!(active_graph(19, 20), GraphKind::Interconnected);
        assert_eq!(active_graph(20, 20), GraphKind::Analogous);
        assert_eq!(active_graph(59, 20), GraphKind::Lateral);
        assert_eq!(active_graph(60, 20), GraphKind::Interconnected);
    }

    #[test]
    fn zero_phase_length_is_rejected() {
        assert!(CycleSchedule::new(0).is_none());
    }

    proptest! {
        #[test]
        fn period_is_three_phases(t in 0usize..100_000, n in 1usize..200) {
            prop_assert_eq!(active_graph(t + 3 * n, n), active_graph(t, n));
        }
    }
}
