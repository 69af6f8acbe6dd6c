// SPDX-License-Identifier: MIT OR Apache-2.0

//! Energy distances between the windows of two splits, in several feature spaces.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_windows, DataError, SplitAssignment, SplitName, TimeSeriesDataset, WindowPair, WindowSpec};
use crate::normalization::{instance_stats, modulations, NormKind, NormStrategy, DEFAULT_EPSILON};
use crate::training::{FittedNorm, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum ShiftError {
    #[error("points have dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least 2 points per sample, got {0}")]
    TooFewSamples(usize),
    #[error("normalization `{0}` is not available for shift diagnostics")]
    UnsupportedNorm(NormKind),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `Σ_i Σ_{j≠i} ‖p_i − q_j‖` (or all `j` when `skip_diag` is false). Rows are
/// summed in parallel, then reduced in index order.
fn pair_sum(p: &[Vec<f64>], q: &[Vec<f64>], skip_diag: bool) -> f64 {
    let rows: Vec<f64> = p
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            q.iter()
                .enumerate()
                .filter(|(j, _)| !skip_diag || *j != i)
                .map(|(_, b)| dist(a, b))
                .sum::<f64>()
        })
        .collect();
    rows.iter().sum()
}

fn lex_cmp(p: &[Vec<f64>], q: &[Vec<f64>]) -> std::cmp::Ordering {
    p.len().cmp(&q.len()).then_with(|| {
        for (a, b) in p.iter().flatten().zip(q.iter().flatten()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    })
}

/// Squared energy distance (MMD with kernel `−‖x−y‖`).
///
/// Within-sample terms exclude `i = j`. For equal sample sizes the cross term
/// also excludes `i = j`, which makes the estimate of `(P, P)` exactly zero;
/// otherwise the cross term averages all pairs. Arguments are put in a
/// canonical order first, so the result is symmetric bit for bit.
pub fn energy_distance(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64, ShiftError> {
    let (n, m) = (p.len(), q.len());
    if n < 2 || m < 2 {
        return Err(ShiftError::TooFewSamples(n.min(m)));
    }
    let dim = p[0].len();
    if let Some(bad) = p.iter().chain(q).find(|v| v.len() != dim) {
        return Err(ShiftError::DimensionMismatch(dim, bad.len()));
    }
    let (p, q) = if lex_cmp(p, q).is_gt() { (q, p) } else { (p, q) };
    let (n, m) = (p.len() as f64, q.len() as f64);
    let within_p = pair_sum(p, p, true) / (n * (n - 1.0));
    let within_q = pair_sum(q, q, true) / (m * (m - 1.0));
    let cross = if p.len() == q.len() {
        pair_sum(p, q, true) / (n * (n - 1.0))
    } else {
        pair_sum(p, q, false) / (n * m)
    };
    Ok(2.0 * cross - within_p - within_q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Normalized look-back, `ℝ^L`.
    Inputs,
    /// Normalized look-back followed by the horizon, `ℝ^{L+H}`.
    Windows,
    /// Mean and std of the normalized look-back.
    Statistics,
    /// `(delta, lambda)` of the normalized pair, with ε = 0.
    Modulations,
}

impl FeatureSpace {
    pub const ALL: [FeatureSpace; 4] = [
        FeatureSpace::Inputs,
        FeatureSpace::Windows,
        FeatureSpace::Statistics,
        FeatureSpace::Modulations,
    ];

    pub fn dim(self, spec: WindowSpec) -> usize {
        match self {
            FeatureSpace::Inputs => spec.lookback,
            FeatureSpace::Windows => spec.total(),
            FeatureSpace::Statistics | FeatureSpace::Modulations => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSpace::Inputs => "inputs",
            FeatureSpace::Windows => "windows",
            FeatureSpace::Statistics => "statistics",
            FeatureSpace::Modulations => "modulations",
        }
    }
}

impl fmt::Display for FeatureSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSpace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown feature space `{s}`"))
    }
}

/// Normalize each pair with `norm`, then extract the features of `space`.
///
/// The horizon is mapped with the look-back's transform.
pub fn feature_map(
    pairs: &[WindowPair],
    dataset_ids: &[String],
    space: FeatureSpace,
    norm: &FittedNorm,
) -> Result<Vec<Vec<f64>>, ShiftError> {
    pairs
        .iter()
        .map(|w| {
            let t = norm
                .transform(&w.x, &dataset_ids[w.user])
                .map_err(TrainError::from)?;
            let x = t.forward(&w.x);
            Ok(match space {
                FeatureSpace::Inputs => x,
                FeatureSpace::Windows => {
                    let mut v = x;
                    v.extend(t.forward(&w.y));
                    v
                }
                FeatureSpace::Statistics => {
                    let s = instance_stats(&x);
                    vec![s.mu_x, s.sigma_x]
                }
                FeatureSpace::Modulations => {
                    let m = modulations(&x, &t.forward(&w.y), 0.0);
                    vec![m.delta, m.lambda]
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    /// Train against Test1.
    Temporal,
    /// Train against Valid2.
    Spatial,
}

impl ShiftKind {
    pub const ALL: [ShiftKind; 2] = [ShiftKind::Temporal, ShiftKind::Spatial];

    pub fn target(self) -> SplitName {
        match self {
            ShiftKind::Temporal => SplitName::Test1,
            ShiftKind::Spatial => SplitName::Valid2,
        }
    }
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftKind::Temporal => "temporal",
            ShiftKind::Spatial => "spatial",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub window: WindowSpec,
    /// Windows sampled per split.
    pub max_samples: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub norms: Vec<NormKind>,
    pub spaces: Vec<FeatureSpace>,
}

impl ShiftConfig {
    pub fn new(window: WindowSpec, seed: u64) -> Self {
        Self {
            window,
            max_samples: 2000,
            seed,
            epsilon: DEFAULT_EPSILON,
            norms: vec![NormKind::None, NormKind::Standard, NormKind::Instance],
            spaces: FeatureSpace::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEntry {
    pub dataset: String,
    pub space: FeatureSpace,
    pub norm: NormKind,
    pub shift: ShiftKind,
    /// Raw estimate; may be slightly negative.
    pub d2: f64,
    /// `sqrt(max(d2, 0))`.
    pub d: f64,
    pub n_train: usize,
    pub n_other: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub entries: Vec<ShiftEntry>,
}

/// Sampled pairs of each split used by a report; shared by every space and normalization.
#[derive(Debug, Clone)]
pub struct ShiftSamples {
    pub train: Vec<WindowPair>,
    pub others: BTreeMap<ShiftKind, Vec<WindowPair>>,
}

pub fn draw_samples(
    dataset: &TimeSeriesDataset,
    assignment: &SplitAssignment,
    config: &ShiftConfig,
) -> Result<ShiftSamples, ShiftError> {
    let draw = |split, stream: u64| {
        sample_windows(dataset, assignment, split, config.window, config.max_samples, config.seed.wrapping_add(stream))
    };
    let train = draw(SplitName::Train, 0)?;
    let mut others = BTreeMap::new();
    for (i, k) in ShiftKind::ALL.into_iter().enumerate() {
        others.insert(k, draw(k.target(), i as u64 + 1)?);
    }
    Ok(ShiftSamples { train, others })
}

pub fn fit_shift_norm(
    kind: NormKind,
    dataset: &TimeSeriesDataset,
    assignment: &SplitAssignment,
    config: &ShiftConfig,
) -> Result<FittedNorm, ShiftError> {
    if !matches!(kind, NormKind::None | NormKind::Standard | NormKind::Instance) {
        return Err(ShiftError::UnsupportedNorm(kind));
    }
    let strategy = NormStrategy::new(kind).with_epsilon(config.epsilon);
    Ok(FittedNorm::fit(&strategy, dataset, assignment, config.window, None, false)?)
}

pub fn shift_report(
    dataset_name: &str,
    dataset: &TimeSeriesDataset,
    assignment: &SplitAssignment,
    config: &ShiftConfig,
) -> Result<ShiftReport, ShiftError> {
    let samples = draw_samples(dataset, assignment, config)?;
    let ids = dataset.user_ids();
    let mut entries = Vec::new();
    for &norm_kind in &config.norms {
        let norm = fit_shift_norm(norm_kind, dataset, assignment, config)?;
        for &space in &config.spaces {
            let train = feature_map(&samples.train, ids, space, &norm)?;
            for (&shift, pairs) in &samples.others {
                let other = feature_map(pairs, ids, space, &norm)?;
                let d2 = energy_distance(&train, &other)?;
                entries.push(ShiftEntry {
                    dataset: dataset_name.to_owned(),
                    space,
                    norm: norm_kind,
                    shift,
                    d2,
                    d: d2.max(0.0).sqrt(),
                    n_train: train.len(),
                    n_other: other.len(),
                });
            }
        }
    }
    Ok(ShiftReport { entries })
}

impl ShiftReport {
    pub fn get(&self, dataset: &str, space: FeatureSpace, norm: NormKind, shift: ShiftKind) -> Option<&ShiftEntry> {
        self.entries
            .iter()
            .find(|e| e.dataset == dataset && e.space == space && e.norm == norm && e.shift == shift)
    }

    /// One row per (dataset, space); columns `norm/shift` holding `d2`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut cols: Vec<(NormKind, ShiftKind)> = Vec::new();
        let mut rows: Vec<(String, FeatureSpace)> = Vec::new();
        for e in &self.entries {
            if !cols.contains(&(e.norm, e.shift)) {
                cols.push((e.norm, e.shift));
            }
            if !rows.contains(&(e.dataset.clone(), e.space)) {
                rows.push((e.dataset.clone(), e.space));
            }
        }
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["dataset".to_owned(), "space".to_owned()];
        header.extend(cols.iter().map(|(n, s)| format!("{n}/{s}")));
        wtr.write_record(&header)?;
        for (ds, space) in &rows {
            let mut rec = vec![ds.clone(), space.to_string()];
            for &(n, s) in &cols {
                rec.push(self.get(ds, *space, n, s).map(|e| e.d2.to_string()).unwrap_or_default());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Write a feature matrix as CSV (`f0, f1, …` columns plus the user id).
pub fn write_features_csv<W: Write>(
    points: &[Vec<f64>],
    pairs: &[WindowPair],
    dataset_ids: &[String],
    writer: W,
) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let dim = points.first().map_or(0, Vec::len);
    let mut header = vec!["user".to_owned()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    wtr.write_record(&header)?;
    for (p, w) in points.iter().zip(pairs) {
        let mut rec = vec![dataset_ids[w.user].clone()];
        rec.extend(p.iter().map(f64::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
