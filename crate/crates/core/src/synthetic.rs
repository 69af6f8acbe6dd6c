// SPDX-License-Identifier: MIT OR Apache-2.0

//! Modulation-stationary sinusoidal users: `X_t = a·t + b + A·sin(2πt/T) + ε_t`.
//!
//! Noise is drawn from a ChaCha8 stream (counter-based, seeded with
//! `seed_from_u64`) through `rand_distr`'s ziggurat standard normal, scaled by
//! `noise_std`. Dataset user `i` uses seed `spec.seed + i`; per-user jitter of
//! `a` and `b` is drawn from stream 1 of `spec.seed`, so it never overlaps a
//! user's noise stream (stream 0).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{DataError, TimeSeriesDataset};
use crate::normalization::Modulations;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUserParams {
    /// Cyclicity `T`, in steps.
    pub period: usize,
    pub amplitude: f64,
    /// Linear slope `a` per step.
    pub slope: f64,
    /// Offset `b`.
    pub offset: f64,
    pub noise_std: f64,
    pub cluster: String,
}

impl SyntheticUserParams {
    /// Shape shared by both clusters of the reference dataset: `A = 1, T = 10, σ = 0.05`.
    pub fn reference(cluster: impl Into<String>, slope: f64, offset: f64) -> Self {
        Self {
            period: 10,
            amplitude: 1.0,
            slope,
            offset,
            noise_std: 0.05,
            cluster: cluster.into(),
        }
    }
}

pub fn generate_user(params: &SyntheticUserParams, length: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 2.0 * PI / params.period.max(1) as f64;
    (0..length)
        .map(|t| {
            let t = t as f64;
            let noise: f64 = if params.noise_std > 0.0 {
                params.noise_std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            params.slope * t + params.offset + params.amplitude * (w * t).sin() + noise
        })
        .collect()
}

/// Approximate modulations of a user, treating the window variance as
/// `a²n²/12 + A²/2 + σ²` (continuous trend, full sinusoid periods, no phase term).
///
/// The exact discrete trend variance is `a²(n²−1)/12`; the gap is O(1/n²).
pub fn closed_form_modulations(
    params: &SyntheticUserParams,
    lookback: usize,
    horizon: usize,
    epsilon: f64,
) -> Modulations {
    let a2 = params.slope * params.slope;
    let base = params.amplitude * params.amplitude / 2.0 + params.noise_std * params.noise_std;
    let l = lookback as f64;
    let h = horizon as f64;
    let sigma_x = (a2 * l * l / 12.0 + base).sqrt();
    let sigma_y = (a2 * h * h / 12.0 + base).sqrt();
    Modulations {
        delta: params.slope * (l + h) / 2.0 / (sigma_x + epsilon),
        lambda: sigma_y / (sigma_x + epsilon),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub count: usize,
    pub base: SyntheticUserParams,
    /// Users draw `slope` uniformly in `base.slope ± slope_jitter`.
    #[serde(default)]
    pub slope_jitter: f64,
    /// Users draw `offset` uniformly in `base.offset ± offset_jitter`.
    #[serde(default)]
    pub offset_jitter: f64,
    /// Multiplies every value of the user's series (level, amplitude and
    /// noise alike); drawn log-uniformly in `[scale_range.0, scale_range.1]`.
    #[serde(default)]
    pub scale_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clusters: Vec<ClusterSpec>,
    pub length: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two clusters: `a = +slope, b = 10 ± 1` and `a = −slope, b = 100 ± 10`.
    pub fn two_cluster(users_per_cluster: usize, length: usize, slope: f64, seed: u64) -> Self {
        Self {
            clusters: vec![
                ClusterSpec {
                    count: users_per_cluster,
                    base: SyntheticUserParams::reference("cluster1", slope, 10.0),
                    slope_jitter: 0.0,
                    offset_jitter: 1.0,
                    scale_range: None,
                },
                ClusterSpec {
                    count: users_per_cluster,
                    base: SyntheticUserParams::reference("cluster2", -slope, 100.0),
                    slope_jitter: 0.0,
                    offset_jitter: 10.0,
                    scale_range: None,
                },
            ],
            length,
            seed,
        }
    }
}

/// User → cluster label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels(pub BTreeMap<String, String>);

impl ClusterLabels {
    pub fn get(&self, user: &str) -> Option<&str> {
        self.0.get(user).map(String::as_str)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["user", "cluster"])?;
        for (u, c) in &self.0 {
            wtr.write_record([u, c])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut map = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(DataError::Malformed("labels csv needs user,cluster".into()));
            }
            map.insert(rec[0].to_owned(), rec[1].to_owned());
        }
        Ok(Self(map))
    }
}

pub struct SyntheticDataset {
    pub dataset: TimeSeriesDataset,
    pub labels: ClusterLabels,
    /// Parameters actually drawn for each user, in dataset order.
    pub users: Vec<SyntheticUserParams>,
}

fn jitter(rng: &mut ChaCha8Rng, base: f64, half_width: f64) -> f64 {
    if half_width > 0.0 {
        base + rng.random_range(-half_width..=half_width)
    } else {
        base
    }
}

pub fn generate_dataset(spec: &SyntheticSpec) -> Result<SyntheticDataset, DataError> {
    let mut param_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    param_rng.set_stream(1);
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut users = Vec::new();
    let mut labels = BTreeMap::new();
    for cluster in &spec.clusters {
        for _ in 0..cluster.count {
            let i = ids.len();
            let mut p = cluster.base.clone();
            p.slope = jitter(&mut param_rng, p.slope, cluster.slope_jitter);
            p.offset = jitter(&mut param_rng, p.offset, cluster.offset_jitter);
            let mut series = generate_user(&p, spec.length, spec.seed.wrapping_add(i as u64));
            if let Some((lo, hi)) = cluster.scale_range {
                let s = (lo.ln() + param_rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
                series.iter_mut().for_each(|v| *v *= s);
                p.slope *= s;
                p.offset *= s;
                p.amplitude *= s;
                p.noise_std *= s;
            }
            let id = format!("u{i:03}");
            labels.insert(id.clone(), p.cluster.clone());
            ids.push(id);
            values.push(series);
            users.push(p);
        }
    }
    let dataset = TimeSeriesDataset::new(ids, values)?;
    Ok(SyntheticDataset {
        dataset,
        labels: ClusterLabels(labels),
        users,
    })
}
