use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} points, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("correlation is undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("series lengths differ ({0} vs {1})")]
    Length(usize, usize),
}

/// Sample Pearson correlation and its two-sided p-value under a Student t
/// distribution with `n - 2` degrees of freedom.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::Length(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(StatsError::TooFew { need: 3, got: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("xs"));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance("ys"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let dof = nf - 2.0;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (dof / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok((r, p))
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Accuracy and confusion matrix (`confusion[true][predicted]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Self {
        assert_eq!(truth.len(), predicted.len(), "truth and predictions differ in length");
        let mut confusion = vec![vec![0; classes]; classes];
        let mut hits = 0;
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
            hits += usize::from(t == p);
        }
        let accuracy = if truth.is_empty() { 0.0 } else { hits as f64 / truth.len() as f64 };
        Evaluation { accuracy, confusion }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Elementwise sum of two confusion matrices; accuracy recomputed.
    pub fn merge(&self, other: &Evaluation) -> Evaluation {
        let confusion: Vec<Vec<usize>> = self
            .confusion
            .iter()
            .zip(&other.confusion)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        let total: usize = confusion.iter().flatten().sum();
        let hits: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        Evaluation {
            accuracy: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            confusion,
        }
    }
}
