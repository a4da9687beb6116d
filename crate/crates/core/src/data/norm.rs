use serde::{Deserialize, Serialize};

use super::SampleSet;

/// Per-(node, channel) z-scoring statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Statistics over the samples at `indices` only. Constant channels get std 1.
    pub fn fit(set: &SampleSet, indices: &[usize]) -> Self {
        let rows = set.nodes * set.channels;
        let mut sum = vec![0.0f64; rows];
        let mut sq = vec![0.0f64; rows];
        let count = (indices.len() * set.length) as f64;
        for &i in indices {
            for (r, chunk) in set.samples[i].x.chunks(set.length).enumerate() {
                for &v in chunk {
                    sum[r] += v as f64;
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| if count > 0.0 { s / count } else { 0.0 }).collect();
        for &i in indices {
            for (r, chunk) in set.samples[i].x.chunks(set.length).enumerate() {
                for &v in chunk {
                    let d = v as f64 - mean[r];
                    sq[r] += d * d;
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = if count > 0.0 { (s / count).sqrt() } else { 0.0 };
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        ChannelStats { mean, std }
    }

    pub fn apply_window<'a>(&'a self, x: &'a [f32], length: usize) -> impl Iterator<Item = f64> + 'a {
        x.iter().enumerate().map(move |(i, &v)| {
            let r = i / length;
            (v as f64 - self.mean[r]) / self.std[r]
        })
    }
}
