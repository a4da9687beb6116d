use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClusterMap, DataError, Provenance, SampleSet, WindowedSample};

/// Multi-user surrogate where activities differ only in the relative phase of
/// the sensor positions.
///
/// Every node carries the same sinusoid (per-channel phase offset `2πc/C`)
/// with a window phase drawn uniformly. Under activity `a` node `n` is shifted
/// by `quarters[a][n]` quarter periods, so a single node's signal has the same
/// distribution for every activity and the label lives in the phase
/// differences between nodes.
///
/// Users shift the data through a gain per (node, channel) drawn from a
/// user-specific range (disjoint when `gain_step > gain_width`), an additive
/// offset per (node, channel), a small per-node phase lag and white noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub users: usize,
    /// Per-activity phase shift of each node, in quarter periods.
    pub quarters: Vec<Vec<u32>>,
    pub windows_per_activity: usize,
    pub channels: usize,
    pub length: usize,
    /// Sinusoid periods per window.
    pub cycles: f64,
    /// User `u` draws gains from `[gain_base + u * gain_step, … + gain_width]`.
    pub gain_base: f64,
    pub gain_step: f64,
    pub gain_width: f64,
    pub offset_std: f64,
    /// Per-node lag drawn uniformly from `[-phase_lag, phase_lag]` radians.
    pub phase_lag: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 4,
            quarters: vec![
                vec![0, 0, 0, 0, 0],
                vec![0, 0, 0, 1, 0],
                vec![0, 0, 0, 2, 0],
                vec![0, 0, 1, 1, 0],
            ],
            windows_per_activity: 24,
            channels: 3,
            length: 32,
            cycles: 2.0,
            gain_base: 0.5,
            gain_step: 0.1,
            gain_width: 0.4,
            offset_std: 0.1,
            phase_lag: 0.25,
            noise: 0.1,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn user_name(u: usize) -> String {
        format!("U{}", u + 1)
    }

    fn cluster_name(u: usize) -> String {
        let mut name = String::new();
        let mut k = u;
        loop {
            name.insert(0, (b'A' + (k % 26) as u8) as char);
            if k < 26 {
                break;
            }
            k = k / 26 - 1;
        }
        name
    }

    pub fn activities(&self) -> usize {
        self.quarters.len()
    }

    /// One cluster per user: `A = [U1]`, `B = [U2]`, …
    pub fn clusters(&self) -> ClusterMap {
        ClusterMap::new((0..self.users).map(|u| (Self::cluster_name(u), vec![Self::user_name(u)])))
            .expect("distinct users")
    }

    /// Phase shift of each node under `activity`, in radians.
    pub fn shifts(&self, activity: usize) -> Vec<f64> {
        self.quarters[activity].iter().map(|&q| (q % 4) as f64 * PI / 2.0).collect()
    }

    pub fn validate(&self, nodes: usize) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Config(format!("synthetic spec: {m}")));
        if self.users == 0 || self.windows_per_activity == 0 || self.channels == 0 || self.length == 0 {
            return bad("users, windows, channels and length must be positive");
        }
        if self.activities() < 2 {
            return bad("quarters needs at least two activity rows");
        }
        if let Some(row) = self.quarters.iter().find(|r| r.len() != nodes) {
            return bad(&format!("every quarters row needs {nodes} entries, found {}", row.len()));
        }
        // a common shift of all nodes is absorbed by the uniform window phase
        let canon = |r: &Vec<u32>| r.iter().map(|&q| (q + 4 - r[0] % 4) % 4).collect::<Vec<_>>();
        for (i, a) in self.quarters.iter().enumerate() {
            if self.quarters[..i].iter().any(|b| canon(a) == canon(b)) {
                return bad(&format!("activity {i} differs from an earlier one only by a common shift"));
            }
        }
        if !(self.gain_base > 0.0 && self.gain_width >= 0.0 && self.gain_step >= 0.0) {
            return bad("gains must be positive");
        }
        if !(self.cycles > 0.0 && self.noise >= 0.0 && self.offset_std >= 0.0 && self.phase_lag >= 0.0) {
            return bad("cycles must be positive and noise, offset and lag non-negative");
        }
        Ok(())
    }
}

/// Generates `users × activities × windows_per_activity` windows over `nodes`
/// positions, ordered by user, then activity, then window.
pub fn generate_synthetic(spec: &SynthSpec, nodes: usize) -> Result<SampleSet, DataError> {
    spec.validate(nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let (c_n, t_n) = (spec.channels, spec.length);
    let mut set = SampleSet::empty(
        nodes,
        c_n,
        t_n,
        (0..spec.activities()).map(|a| format!("pattern {a}")).collect(),
        spec.clusters().names(),
    );
    for u in 0..spec.users {
        let lo = spec.gain_base + u as f64 * spec.gain_step;
        let gain: Vec<f64> = (0..nodes * c_n).map(|_| lo + spec.gain_width * rng.random::<f64>()).collect();
        let offset: Vec<f64> = (0..nodes * c_n).map(|_| spec.offset_std * unit.sample(&mut rng)).collect();
        let lag: Vec<f64> = (0..nodes)
            .map(|_| spec.phase_lag * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        for a in 0..spec.activities() {
            let shifts = spec.shifts(a);
            for w in 0..spec.windows_per_activity {
                let phi = 2.0 * PI * rng.random::<f64>();
                let mut x = Vec::with_capacity(nodes * c_n * t_n);
                for n in 0..nodes {
                    for c in 0..c_n {
                        let r = n * c_n + c;
                        let psi = 2.0 * PI * c as f64 / c_n as f64;
                        for t in 0..t_n {
                            let arg = 2.0 * PI * spec.cycles * t as f64 / t_n as f64 + phi + shifts[n] + lag[n] + psi;
                            let v = offset[r] + gain[r] * arg.sin() + spec.noise * unit.sample(&mut rng);
                            x.push(v as f32);
                        }
                    }
                }
                set.samples.push(WindowedSample {
                    x,
                    activity: a,
                    domain: u,
                    subject: SynthSpec::user_name(u),
                    provenance: Provenance {
                        file: format!("synthetic:{}", SynthSpec::user_name(u)),
                        offset: a * spec.windows_per_activity + w,
                    },
                });
            }
        }
    }
    set.validate()?;
    Ok(set)
}

fn pearson_raw(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Largest gap between a window's empirical inter-node correlations (each
/// node's channels concatenated, offsets removed per channel) and the cosine
/// of the activity's phase differences.
pub fn template_error(spec: &SynthSpec, set: &SampleSet, index: usize) -> f64 {
    let s = &set.samples[index];
    let (nodes, len) = (set.nodes, set.channels * set.length);
    let series: Vec<Vec<f64>> = (0..nodes)
        .map(|n| {
            let node = &s.x[n * len..(n + 1) * len];
            node.chunks(set.length)
                .flat_map(|ch| {
                    let m = ch.iter().map(|&v| v as f64).sum::<f64>() / ch.len() as f64;
                    ch.iter().map(move |&v| v as f64 - m)
                })
                .collect()
        })
        .collect();
    let shifts = spec.shifts(s.activity);
    let mut worst = 0.0f64;
    for n in 0..nodes {
        for m in n + 1..nodes {
            let gap = pearson_raw(&series[n], &series[m]) - (shifts[n] - shifts[m]).cos();
            worst = worst.max(gap.abs());
        }
    }
    worst
}
