// SPDX-License-Identifier: MIT OR Apache-2.0

//! Training and evaluation of a forecaster behind a normalization strategy.
//!
//! The per-window pipeline is: resolve the strategy on the look-back,
//! normalize, run the forecaster, map the output back to the look-back's
//! standardized frame (`ẏ`), then to data space (`ŷ = (σ_x+ε)·ẏ + μ_x`).
//! Standard backpropagation compares `ŷ` with `y`; normalized backpropagation
//! compares `ẏ` with `ỹ = (y − μ_x)/(σ_x + ε)`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    enumerate_windows, sample_windows, DataError, SplitAssignment, SplitName, TimeSeriesDataset,
    WindowPair, WindowSpec,
};
use crate::forecaster::{
    adam_step, AdamConfig, AdamState, ForecastError, ForecasterKind, Gradients, LinearForecaster,
};
use crate::normalization::{
    cmin_init, fit_global_stats, instance_stats, normalize_target, CminParams, GlobalStats,
    InstanceStats, MinMaxParams, NormContext, NormError, NormKind, NormStrategy, WindowTransform,
};
use crate::synthetic::ClusterLabels;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("inconsistent pipeline: {0}")]
    InconsistentPipeline(String),
}

/// Where the training loss is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpSpace {
    /// Denormalized predictions against raw targets.
    Data,
    /// Standardized predictions against targets standardized with the look-back statistics.
    Normalized,
}

impl fmt::Display for BpSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BpSpace::Data => "data",
            BpSpace::Normalized => "normalized",
        })
    }
}

impl FromStr for BpSpace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "data" | "standard" => Ok(BpSpace::Data),
            "normalized" => Ok(BpSpace::Normalized),
            _ => Err(format!("unknown backpropagation space `{s}`")),
        }
    }
}

pub const DEFAULT_CLUSTER: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: NormStrategy,
    pub bp_space: BpSpace,
    pub forecaster: ForecasterKind,
    pub ma_kernel: usize,
    pub window: WindowSpec,
    pub epochs: usize,
    pub batch_size: usize,
    /// Windows drawn from the training split per epoch.
    pub samples_per_epoch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Validation cadence; `None` means `max(1, epochs / 20)`.
    pub val_every: Option<usize>,
    /// Initialize cmIN output affines from the clusters' mean modulations.
    pub cmin_init: bool,
}

impl TrainConfig {
    /// Desk-scale defaults: 200 epochs, batch 64, learning rate 1e-3.
    pub fn desk(strategy: NormStrategy, bp_space: BpSpace, window: WindowSpec, seed: u64) -> Self {
        Self {
            strategy,
            bp_space,
            forecaster: ForecasterKind::Linear,
            ma_kernel: 25.min(window.lookback.saturating_sub(1) | 1),
            window,
            epochs: 200,
            batch_size: 64,
            samples_per_epoch: 512,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            seed,
            val_every: None,
            cmin_init: true,
        }
    }

    /// Full-scale settings: 1200 epochs, batch 256, learning rate 1e-5.
    pub fn paper_scale(mut self) -> Self {
        self.epochs = 1200;
        self.batch_size = 256;
        self.adam.lr = 1e-5;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.strategy.validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.bp_space == BpSpace::Normalized && !self.strategy.kind.is_instance() {
            return Err(TrainError::InvalidConfig(format!(
                "normalized backpropagation needs an instance strategy, got `{}`",
                self.strategy.kind
            )));
        }
        if !(self.adam.lr > 0.0) {
            return Err(TrainError::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }

    fn val_every(&self) -> usize {
        self.val_every.unwrap_or(self.epochs / 20).max(1)
    }
}

/// A strategy together with everything fitted on the training data.
///
/// Serializes to the JSON document that makes a trained run reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedNorm {
    pub strategy: NormStrategy,
    #[serde(default)]
    pub global: Option<GlobalStats>,
    #[serde(default)]
    pub minmax: Option<MinMaxParams>,
    #[serde(default)]
    pub relative_mean: Option<f64>,
    #[serde(default)]
    pub per_user: BTreeMap<String, GlobalStats>,
    /// cmIN parameters per cluster.
    #[serde(default)]
    pub clusters: BTreeMap<String, CminParams>,
    #[serde(default)]
    pub user_clusters: BTreeMap<String, String>,
}

impl FittedNorm {
    pub fn unfitted(strategy: NormStrategy) -> Self {
        Self {
            strategy,
            global: None,
            minmax: None,
            relative_mean: None,
            per_user: BTreeMap::new(),
            clusters: BTreeMap::new(),
            user_clusters: BTreeMap::new(),
        }
    }

    /// Fit the strategy's statistics on the training split (stride-H windows).
    ///
    /// Per-user statistics are fitted on the training period of every user,
    /// so users outside the training set still have a context.
    pub fn fit(
        strategy: &NormStrategy,
        dataset: &TimeSeriesDataset,
        assignment: &SplitAssignment,
        spec: WindowSpec,
        labels: Option<&ClusterLabels>,
        init_cmin: bool,
    ) -> Result<Self, TrainError> {
        let mut fitted = Self::unfitted(strategy.clone());
        let train = enumerate_windows(dataset, assignment, SplitName::Train, spec, spec.horizon);
        if train.is_empty() {
            return Err(DataError::NoUsableWindows(SplitName::Train).into());
        }
        let eps = strategy.epsilon;
        match strategy.kind {
            NormKind::Standard => fitted.global = Some(global_or_fallback(&train, eps)?),
            NormKind::Minmax => fitted.minmax = MinMaxParams::fit(&train),
            NormKind::Relative => {
                let n: usize = train.iter().map(|w| w.x.len()).sum();
                let mean = train.iter().flat_map(|w| &w.x).sum::<f64>() / n as f64;
                if mean <= 0.0 {
                    log::warn!("relative normalization with non-positive mean {mean}");
                }
                fitted.relative_mean = Some(mean);
            }
            NormKind::PerUserStandard => {
                let mut all = train.clone();
                all.extend(enumerate_windows(dataset, assignment, SplitName::Valid2, spec, spec.horizon));
                let mut by_user: BTreeMap<usize, Vec<WindowPair>> = BTreeMap::new();
                for w in all {
                    by_user.entry(w.user).or_default().push(w);
                }
                for (u, ws) in by_user {
                    fitted
                        .per_user
                        .insert(dataset.user_ids()[u].clone(), global_or_fallback(&ws, eps)?);
                }
            }
            NormKind::Cmin => {
                let cluster_of = |u: usize| -> String {
                    labels
                        .and_then(|l| l.get(&dataset.user_ids()[u]))
                        .unwrap_or(DEFAULT_CLUSTER)
                        .to_owned()
                };
                for u in 0..dataset.n_users() {
                    fitted
                        .user_clusters
                        .insert(dataset.user_ids()[u].clone(), cluster_of(u));
                }
                let mut groups: BTreeMap<String, Vec<WindowPair>> = BTreeMap::new();
                for c in fitted.user_clusters.values() {
                    groups.entry(c.clone()).or_default();
                }
                for w in train {
                    groups.entry(cluster_of(w.user)).or_default().push(w);
                }
                fitted.clusters = if init_cmin {
                    // Clusters with no training users fall back to identity.
                    let non_empty = groups.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (k.clone(), v.clone())).collect();
                    let mut init = cmin_init(&non_empty, eps)?;
                    for c in groups.keys() {
                        init.entry(c.clone()).or_insert_with(|| CminParams::identity(c.clone()));
                    }
                    init
                } else {
                    groups.keys().map(|c| (c.clone(), CminParams::identity(c.clone()))).collect()
                };
            }
            NormKind::None | NormKind::Instance | NormKind::Revin => {}
        }
        Ok(fitted)
    }

    pub fn cluster_of(&self, user_id: &str) -> &str {
        self.user_clusters.get(user_id).map_or(DEFAULT_CLUSTER, String::as_str)
    }

    pub fn context(&self, x: &[f64], user_id: &str) -> Result<NormContext, NormError> {
        let kind = self.strategy.kind;
        let missing = |needed| NormError::MissingContext { kind, needed };
        Ok(match kind {
            NormKind::None => NormContext::Empty,
            NormKind::Standard => NormContext::Global(self.global.ok_or_else(|| missing("global statistics"))?),
            NormKind::PerUserStandard => NormContext::Global(
                *self.per_user.get(user_id).ok_or_else(|| missing("per-user statistics"))?,
            ),
            NormKind::Minmax => NormContext::MinMax(self.minmax.ok_or_else(|| missing("min-max"))?),
            NormKind::Relative => NormContext::Relative {
                mean: self.relative_mean.ok_or_else(|| missing("mean"))?,
            },
            NormKind::Instance | NormKind::Revin => NormContext::Instance(instance_stats(x)),
            NormKind::Cmin => NormContext::Modulated {
                stats: instance_stats(x),
                params: self
                    .clusters
                    .get(self.cluster_of(user_id))
                    .cloned()
                    .ok_or_else(|| missing("cluster parameters"))?,
            },
        })
    }

    pub fn transform(&self, x: &[f64], user_id: &str) -> Result<WindowTransform, NormError> {
        self.strategy.transform(&self.context(x, user_id)?)
    }

    /// Trainable normalization parameters, flattened: RevIN `[alpha, beta]`,
    /// cmIN `[gamma, nu, alpha, beta]` per cluster in name order.
    pub fn learnable_params(&self) -> Vec<f64> {
        if !self.strategy.learnable_affine {
            return Vec::new();
        }
        match self.strategy.kind {
            NormKind::Revin => vec![self.strategy.affine.alpha, self.strategy.affine.beta],
            NormKind::Cmin => self
                .clusters
                .values()
                .flat_map(|p| [p.gamma, p.nu, p.alpha, p.beta])
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn set_learnable_params(&mut self, params: &[f64]) {
        if !self.strategy.learnable_affine {
            return;
        }
        match self.strategy.kind {
            NormKind::Revin => {
                self.strategy.affine.alpha = params[0];
                self.strategy.affine.beta = params[1];
            }
            NormKind::Cmin => {
                for (p, chunk) in self.clusters.values_mut().zip(params.chunks_exact(4)) {
                    p.gamma = chunk[0];
                    p.nu = chunk[1];
                    p.alpha = chunk[2];
                    p.beta = chunk[3];
                }
            }
            _ => {}
        }
    }

    fn learnable_offset(&self, user_id: &str) -> Option<usize> {
        if !self.strategy.learnable_affine {
            return None;
        }
        match self.strategy.kind {
            NormKind::Revin => Some(0),
            NormKind::Cmin => {
                let c = self.cluster_of(user_id);
                self.clusters.keys().position(|k| k == c).map(|i| 4 * i)
            }
            _ => None,
        }
    }
}

fn global_or_fallback(windows: &[WindowPair], epsilon: f64) -> Result<GlobalStats, NormError> {
    match fit_global_stats(windows) {
        Err(NormError::DegenerateData { mu, n }) => {
            log::warn!("degenerate training data ({n} points equal {mu}); sigma set to epsilon");
            Ok(GlobalStats { mu, sigma: epsilon.max(f64::MIN_POSITIVE) })
        }
        other => other,
    }
}

/// Every intermediate of one window's forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub stats: InstanceStats,
    pub transform: WindowTransform,
    pub input: Vec<f64>,
    pub model_out: Vec<f64>,
    /// Output mapped to the look-back's standardized frame (after the inverse affine).
    pub standardized: Vec<f64>,
    /// Denormalized prediction.
    pub prediction: Vec<f64>,
}

pub fn run_pipeline(
    model: &LinearForecaster,
    norm: &FittedNorm,
    x: &[f64],
    user_id: &str,
) -> Result<PipelineOutput, TrainError> {
    let transform = norm.transform(x, user_id)?;
    let input = transform.forward(x);
    let model_out = model.forward(&input)?;
    let standardized = transform.to_standardized(&model_out)?;
    let prediction = transform.from_standardized(&standardized);
    Ok(PipelineOutput {
        stats: instance_stats(x),
        transform,
        input,
        model_out,
        standardized,
        prediction,
    })
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64
}

/// Loss of one window in the chosen space (mean over the horizon).
///
/// Without normalization both spaces coincide.
pub fn compute_loss(
    output: &PipelineOutput,
    y: &[f64],
    strategy: &NormStrategy,
    bp_space: BpSpace,
) -> Result<f64, TrainError> {
    match (strategy.kind, bp_space) {
        (NormKind::None, _) | (_, BpSpace::Data) => Ok(mse(&output.prediction, y)),
        (k, BpSpace::Normalized) if k.is_instance() => {
            let target = normalize_target(y, output.stats, strategy.epsilon);
            Ok(mse(&output.standardized, &target))
        }
        (k, BpSpace::Normalized) => Err(TrainError::InconsistentPipeline(format!(
            "`{k}` has no instance frame to compute a normalized loss in"
        ))),
    }
}

/// Normalized MSE of a denormalized prediction: the MSE after standardizing
/// both prediction and target with the look-back statistics.
pub fn nmse(prediction: &[f64], y: &[f64], stats: InstanceStats, epsilon: f64) -> f64 {
    mse(&normalize_target(prediction, stats, epsilon), &normalize_target(y, stats, epsilon))
}

/// Mean training loss over `batch` and its gradients with respect to the
/// forecaster and the learnable normalization parameters.
///
/// Gradients of the affine parameters flow through both the input map and
/// the output map.
pub fn pipeline_gradients(
    model: &LinearForecaster,
    norm: &FittedNorm,
    dataset_ids: &[String],
    batch: &[WindowPair],
    bp_space: BpSpace,
) -> Result<(f64, Gradients, Vec<f64>), TrainError> {
    if batch.is_empty() {
        return Err(ForecastError::EmptyBatch.into());
    }
    let eps = norm.strategy.epsilon;
    let h = model.horizon() as f64;
    let scale = 2.0 / (batch.len() as f64 * h);
    let mut grads = Gradients::zeros_like(model);
    let mut norm_grads = vec![0.0; norm.learnable_params().len()];
    let mut loss = 0.0;
    let normalized = bp_space == BpSpace::Normalized && norm.strategy.kind != NormKind::None;
    for w in batch {
        let uid = &dataset_ids[w.user];
        let out = run_pipeline(model, norm, &w.x, uid)?;
        let t = out.transform;
        // dL/dẏ for this window
        let g_std: Vec<f64> = if normalized {
            let target = normalize_target(&w.y, out.stats, eps);
            loss += mse(&out.standardized, &target);
            out.standardized.iter().zip(&target).map(|(a, b)| scale * (a - b)).collect()
        } else {
            loss += mse(&out.prediction, &w.y);
            out.prediction
                .iter()
                .zip(&w.y)
                .map(|(a, b)| scale * (a - b) * t.denom)
                .collect()
        };
        let g_model: Vec<f64> = g_std.iter().map(|g| g * t.out_scale / t.in_scale).collect();
        let g_input = model.backward(&out.input, &g_model, &mut grads)?;
        if let Some(off) = norm.learnable_offset(uid) {
            let z: Vec<f64> = w.x.iter().map(|v| (v - t.center) / t.denom).collect();
            let in_path_scale: f64 = g_input.iter().zip(&z).map(|(g, z)| g * z).sum();
            let in_path_shift: f64 = g_input.iter().sum();
            let centered: Vec<f64> = out.model_out.iter().map(|f| (f - t.in_shift) / t.in_scale).collect();
            let d_out_scale: f64 = g_std.iter().zip(&centered).map(|(g, c)| g * c).sum();
            let d_out_shift: f64 = g_std.iter().sum();
            let d_in_scale = in_path_scale - t.out_scale / t.in_scale * d_out_scale;
            let d_in_shift = in_path_shift - t.out_scale / t.in_scale * d_out_shift;
            match norm.strategy.kind {
                NormKind::Revin => {
                    norm_grads[off] += d_in_scale;
                    norm_grads[off + 1] += d_in_shift;
                }
                NormKind::Cmin => {
                    norm_grads[off] += d_in_scale;
                    norm_grads[off + 1] += d_in_shift;
                    norm_grads[off + 2] += d_out_scale;
                    norm_grads[off + 3] += d_out_shift;
                }
                _ => {}
            }
        }
    }
    Ok((loss / batch.len() as f64, grads, norm_grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub mse: f64,
    pub nmse: f64,
    pub windows: usize,
}

/// Evaluation metrics per split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable(pub BTreeMap<SplitName, SplitMetrics>);

impl MetricTable {
    pub fn get(&self, split: SplitName) -> Option<&SplitMetrics> {
        self.0.get(&split)
    }
}

/// MSE and nMSE over the given windows (mean over windows and horizon).
pub fn score_windows(
    model: &LinearForecaster,
    norm: &FittedNorm,
    dataset_ids: &[String],
    windows: &[WindowPair],
) -> Result<SplitMetrics, TrainError> {
    let eps = norm.strategy.epsilon;
    let per_window: Vec<(f64, f64)> = windows
        .par_iter()
        .map(|w| {
            let out = run_pipeline(model, norm, &w.x, &dataset_ids[w.user])?;
            Ok((mse(&out.prediction, &w.y), nmse(&out.prediction, &w.y, out.stats, eps)))
        })
        .collect::<Result<_, TrainError>>()?;
    let n = per_window.len() as f64;
    let (m, nm) = per_window.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    Ok(SplitMetrics {
        mse: m / n,
        nmse: nm / n,
        windows: per_window.len(),
    })
}

/// Exhaustive stride-H evaluation of each split.
pub fn evaluate(
    model: &LinearForecaster,
    norm: &FittedNorm,
    dataset: &TimeSeriesDataset,
    assignment: &SplitAssignment,
    spec: WindowSpec,
    splits: &[SplitName],
) -> Result<MetricTable, TrainError> {
    let mut table = MetricTable::default();
    for &split in splits {
        let windows = enumerate_windows(dataset, assignment, split, spec, spec.horizon);
        if windows.is_empty() {
            return Err(DataError::NoUsableWindows(split).into());
        }
        table
            .0
            .insert(split, score_windows(model, norm, dataset.user_ids(), &windows)?);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_mse: Option<f64>,
    pub val_nmse: Option<f64>,
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["epoch", "loss", "val_mse", "val_nmse"])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in history {
        wtr.write_record([r.epoch.to_string(), r.loss.to_string(), opt(r.val_mse), opt(r.val_nmse)])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LinearForecaster,
    pub norm: FittedNorm,
    pub metrics: MetricTable,
    pub history: Vec<EpochRecord>,
    /// Epoch of the retained snapshot (0 = initialization).
    pub best_epoch: usize,
}

/// Mix a base seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const INIT_STREAM: u64 = 0xA11CE;

/// Train with Adam on windows sampled from the training split.
///
/// Validation runs every `val_every` epochs on the pooled Valid1–3 windows;
/// the snapshot with the best validation score (nMSE under normalized
/// backpropagation, MSE otherwise) is returned and evaluated on every split.
pub fn train(
    config: &TrainConfig,
    dataset: &TimeSeriesDataset,
    assignment: &SplitAssignment,
    labels: Option<&ClusterLabels>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let spec = config.window;
    let mut norm = FittedNorm::fit(&config.strategy, dataset, assignment, spec, labels, config.cmin_init)?;
    let mut model = LinearForecaster::init(
        config.forecaster,
        spec.lookback,
        spec.horizon,
        config.ma_kernel,
        derive_seed(config.seed, INIT_STREAM),
    )?;
    let mut adam = AdamState::for_model(&model, config.adam);
    let mut norm_params = norm.learnable_params();
    let mut norm_adam = AdamState::new(norm_params.len(), config.adam);

    let val_windows: Vec<WindowPair> = [SplitName::Valid1, SplitName::Valid2, SplitName::Valid3]
        .iter()
        .flat_map(|&s| enumerate_windows(dataset, assignment, s, spec, spec.horizon))
        .collect();
    let select = |m: &SplitMetrics| match config.bp_space {
        BpSpace::Normalized => m.nmse,
        BpSpace::Data => m.mse,
    };
    let ids = dataset.user_ids();
    let mut best = None;
    if !val_windows.is_empty() {
        let m = score_windows(&model, &norm, ids, &val_windows)?;
        best = Some((select(&m), 0, model.clone(), norm.clone()));
    }

    let mut history = Vec::with_capacity(config.epochs);
    let every = config.val_every();
    for epoch in 1..=config.epochs {
        let pairs = sample_windows(
            dataset,
            assignment,
            SplitName::Train,
            spec,
            config.samples_per_epoch,
            derive_seed(config.seed, epoch as u64),
        )?;
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for batch in pairs.chunks(config.batch_size) {
            let (loss, grads, ng) = pipeline_gradients(&model, &norm, ids, batch, config.bp_space)?;
            adam_step(&mut model, &grads, &mut adam)?;
            if !norm_params.is_empty() {
                norm_adam.update(&mut norm_params, &ng)?;
                norm.set_learnable_params(&norm_params);
            }
            epoch_loss += loss;
            n_batches += 1;
        }
        let mut record = EpochRecord {
            epoch,
            loss: epoch_loss / n_batches.max(1) as f64,
            val_mse: None,
            val_nmse: None,
        };
        if !val_windows.is_empty() && (epoch % every == 0 || epoch == config.epochs) {
            let m = score_windows(&model, &norm, ids, &val_windows)?;
            record.val_mse = Some(m.mse);
            record.val_nmse = Some(m.nmse);
            let score = select(&m);
            // NaN scores never replace a finite snapshot.
            if best.as_ref().is_none_or(|(b, ..)| score < *b || b.is_nan()) {
                best = Some((score, epoch, model.clone(), norm.clone()));
            }
        }
        history.push(record);
    }
    let (best_epoch, model, norm) = match best {
        Some((_, e, m, n)) => (e, m, n),
        None => (config.epochs, model, norm),
    };
    let metrics = evaluate(&model, &norm, dataset, assignment, spec, &SplitName::EVAL)?;
    Ok(TrainOutcome {
        model,
        norm,
        metrics,
        history,
        best_epoch,
    })
}
