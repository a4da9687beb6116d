use serde::{Deserialize, Serialize};

/// Treatment of missing (NaN) readings inside a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase", deny_unknown_fields)]
pub enum NanPolicy {
    /// Drop any window containing a NaN.
    Reject,
    /// Linearly interpolate runs of at most `max_gap` NaNs; longer runs reject the window.
    Interpolate { max_gap: usize },
}

impl Default for NanPolicy {
    fn default() -> Self {
        NanPolicy::Interpolate { max_gap: 5 }
    }
}

impl NanPolicy {
    /// Repairs one channel's time series in place; `false` means reject the window.
    pub fn repair(self, series: &mut [f32]) -> bool {
        if !series.iter().any(|v| v.is_nan()) {
            return true;
        }
        let max_gap = match self {
            NanPolicy::Reject => return false,
            NanPolicy::Interpolate { max_gap } => max_gap,
        };
        let n = series.len();
        let mut t = 0;
        while t < n {
            if !series[t].is_nan() {
                t += 1;
                continue;
            }
            let start = t;
            while t < n && series[t].is_nan() {
                t += 1;
            }
            let run = t - start;
            if run > max_gap {
                return false;
            }
            let left = start.checked_sub(1).map(|i| series[i]);
            let right = (t < n).then(|| series[t]);
            match (left, right) {
                (Some(a), Some(b)) => {
                    for (k, v) in series[start..t].iter_mut().enumerate() {
                        let w = (k + 1) as f32 / (run + 1) as f32;
                        *v = a + (b - a) * w;
                    }
                }
                (Some(a), None) => series[start..t].iter_mut().for_each(|v| *v = a),
                (None, Some(b)) => series[start..t].iter_mut().for_each(|v| *v = b),
                (None, None) => return false,
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reject_drops_any_nan() {
        let mut s = [1.0, f32::NAN, 3.0];
        assert!(!NanPolicy::Reject.repair(&mut s));
        let mut s = [1.0, 2.0];
        assert!(NanPolicy::Reject.repair(&mut s));
    }

    #[test]
    fn short_gaps_interpolate_linearly() {
        let mut s = [1.0, f32::NAN, f32::NAN, f32::NAN, 5.0];
        assert!(NanPolicy::Interpolate { max_gap: 3 }.repair(&mut s));
        assert_eq!(s, [1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut s = [f32::NAN, 2.0, f32::NAN];
        assert!(NanPolicy::Interpolate { max_gap: 1 }.repair(&mut s));
        assert_eq!(s, [2.0, 2.0, 2.0]);
    }

    #[test]
    fn long_gaps_and_all_nan_reject() {
        let mut s = [1.0, f32::NAN, f32::NAN, 4.0];
        assert!(!NanPolicy::Interpolate { max_gap: 1 }.repair(&mut s));
        let mut s = [f32::NAN; 2];
        assert!(!NanPolicy::Interpolate { max_gap: 5 }.repair(&mut s));
    }
}
