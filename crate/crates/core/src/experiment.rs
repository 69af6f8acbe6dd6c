// SPDX-License-Identifier: MIT OR Apache-2.0

//! Config-driven grids of (setting × cell × seed) training runs.
//!
//! Layout of an output directory:
//!
//! ```text
//! results.json                 aggregated metrics, one entry per (setting, cell)
//! user_stats.csv               per-user mean and std over the whole series
//! settings/<L-H>/split.json    split assignment; removals.csv; examples.json
//! runs/<L-H>/<cell>/seed-<s>/  result.json, history.csv, model.json, norm.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    clean_dataset, enumerate_windows, six_way_split, DataError, RemovalReport, SplitAssignment, SplitName,
    TimeSeriesDataset, WindowSpec, DEFAULT_DROP_THRESHOLD,
};
use crate::forecaster::{ForecasterKind, LinearForecaster};
use crate::normalization::{mean, std_dev, NormKind, NormStrategy, VarianceConvention, DEFAULT_EPSILON};
use crate::shift::{shift_report, ShiftConfig, ShiftError};
use crate::synthetic::{generate_dataset, ClusterLabels, SyntheticSpec};
use crate::training::{
    run_pipeline, train, write_history_csv, BpSpace, FittedNorm, MetricTable, TrainConfig, TrainError,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("no results in {0}")]
    MissingResults(PathBuf),
}

impl ExperimentError {
    /// Whether the failure comes from the configuration rather than the data or the filesystem.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_) | ExperimentError::Toml(_) | ExperimentError::Train(TrainError::InvalidConfig(_))
        )
    }
}

type Result<T, E = ExperimentError> = std::result::Result<T, E>;

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ExperimentError::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
        path: path.to_owned(),
        source,
    })
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Two clusters of sinusoidal users with opposite trends.
    Synthetic {
        users_per_cluster: usize,
        length: usize,
        slope: f64,
        #[serde(default)]
        seed: u64,
        /// Log-uniform per-user scale multiplier range.
        #[serde(default)]
        scale_range: Option<(f64, f64)>,
    },
    /// Wide or long CSV; `labels` is an optional `user,cluster` CSV.
    Csv {
        path: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default)]
        name: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_out_fraction")]
    pub out_fraction: f64,
    #[serde(default = "default_periods")]
    pub periods: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_drop_threshold")]
    pub drop_threshold: f64,
}

fn default_out_fraction() -> f64 {
    0.2
}
fn default_periods() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}
fn default_drop_threshold() -> f64 {
    DEFAULT_DROP_THRESHOLD
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            out_fraction: default_out_fraction(),
            periods: default_periods(),
            seed: 0,
            drop_threshold: default_drop_threshold(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 200 epochs, batch 64, lr 1e-3.
    #[default]
    Desk,
    /// 1200 epochs, batch 256, lr 1e-5.
    Paper,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub forecaster: Option<ForecasterKind>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub samples_per_epoch: Option<usize>,
    pub ma_kernel: Option<usize>,
    pub val_every: Option<usize>,
}

/// One table column: a strategy trained with one backpropagation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub strategy: NormKind,
    #[serde(default = "default_bp")]
    pub bp_space: BpSpace,
    /// Train the affine parameters (RevIN `alpha, beta`; cmIN's table).
    #[serde(default)]
    pub affine: bool,
    /// Initialize cmIN from the clusters' mean modulations.
    #[serde(default = "default_true")]
    pub cmin_init: bool,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub label: Option<String>,
}

fn default_bp() -> BpSpace {
    BpSpace::Data
}
fn default_true() -> bool {
    true
}

impl CellConfig {
    pub fn new(strategy: NormKind, bp_space: BpSpace) -> Self {
        Self {
            strategy,
            bp_space,
            affine: false,
            cmin_init: true,
            epsilon: None,
            label: None,
        }
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut s = self.strategy.to_string();
        if self.affine {
            s.push_str("+affine");
        }
        if self.strategy == NormKind::Cmin && self.cmin_init {
            s.push_str("+init");
        }
        format!("{s}/{}", self.bp_space)
    }

    /// Directory-safe form of the label.
    pub fn id(&self) -> String {
        self.label()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' })
            .collect()
    }

    pub fn strategy(&self) -> NormStrategy {
        NormStrategy::new(self.strategy)
            .with_epsilon(self.epsilon.unwrap_or(DEFAULT_EPSILON))
            .learnable(self.affine)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSection {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
}

fn default_max_samples() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// `[L, H]` pairs.
    pub settings: Vec<[usize; 2]>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub exclude_users: Vec<String>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub training: TrainingSection,
    pub cells: Vec<CellConfig>,
    #[serde(default)]
    pub shift: Option<ShiftSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a TOML config; relative dataset paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DatasetSource::Csv { path, labels, .. } = &mut cfg.dataset {
            if path.is_relative() {
                *path = base.join(&*path);
            }
            if let Some(l) = labels.as_mut().filter(|l| l.is_relative()) {
                *l = base.join(&*l);
            }
        }
        if let Some(out) = cfg.output_dir.as_mut().filter(|o| o.is_relative()) {
            *out = base.join(&*out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.settings.is_empty() || self.cells.is_empty() || self.seeds.is_empty() {
            return bad("settings, cells and seeds must all be non-empty".into());
        }
        let mut labels = Vec::new();
        for cell in &self.cells {
            let id = cell.id();
            if labels.contains(&id) {
                return bad(format!("duplicate cell `{}`", cell.label()));
            }
            labels.push(id);
        }
        for &[l, h] in &self.settings {
            let spec = WindowSpec::new(l, h).map_err(|e| ExperimentError::Config(e.to_string()))?;
            for cell in &self.cells {
                self.train_config(cell, spec, 0).validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
            }
        }
        if let DatasetSource::Synthetic { users_per_cluster, length, .. } = self.dataset {
            if users_per_cluster == 0 || length == 0 {
                return bad("synthetic dataset needs users and length".into());
            }
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        match &self.dataset {
            DatasetSource::Synthetic { .. } => "synthetic".into(),
            DatasetSource::Csv { name: Some(n), .. } => n.clone(),
            DatasetSource::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned()),
        }
    }

    pub fn train_config(&self, cell: &CellConfig, spec: WindowSpec, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::desk(cell.strategy(), cell.bp_space, spec, seed);
        if self.training.preset == Preset::Paper {
            cfg = cfg.paper_scale();
        }
        let t = &self.training;
        if let Some(f) = t.forecaster {
            cfg.forecaster = f;
        }
        if let Some(v) = t.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = t.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = t.lr {
            cfg.adam.lr = v;
        }
        if let Some(v) = t.samples_per_epoch {
            cfg.samples_per_epoch = v;
        }
        if let Some(v) = t.ma_kernel {
            cfg.ma_kernel = v;
        }
        cfg.val_every = t.val_every;
        cfg.cmin_init = cell.cmin_init;
        cfg
    }
}

pub struct LoadedDataset {
    pub dataset: TimeSeriesDataset,
    pub labels: Option<ClusterLabels>,
    pub removals: RemovalReport,
}

/// Build or read the dataset and drop excluded users.
pub fn load_dataset(config: &ExperimentConfig) -> Result<LoadedDataset> {
    let (dataset, labels) = match &config.dataset {
        DatasetSource::Synthetic {
            users_per_cluster,
            length,
            slope,
            seed,
            scale_range,
        } => {
            let mut spec = SyntheticSpec::two_cluster(*users_per_cluster, *length, *slope, *seed);
            for c in &mut spec.clusters {
                c.scale_range = *scale_range;
            }
            let out = generate_dataset(&spec)?;
            (out.dataset, Some(out.labels))
        }
        DatasetSource::Csv { path, labels, .. } => {
            let file = fs::File::open(path).map_err(io_err(path))?;
            let ds = TimeSeriesDataset::read_csv(file)?;
            let labels = match labels {
                Some(p) => Some(ClusterLabels::read_csv(fs::File::open(p).map_err(io_err(p))?)?),
                None => None,
            };
            (ds, labels)
        }
    };
    let (dataset, removals) = dataset.exclude_users(&config.exclude_users)?;
    Ok(LoadedDataset {
        dataset,
        labels,
        removals,
    })
}

/// One finished (setting, cell, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub lookback: usize,
    pub horizon: usize,
    pub cell: String,
    pub strategy: NormKind,
    pub bp_space: BpSpace,
    pub seed: u64,
    pub best_epoch: usize,
    pub train_config: TrainConfig,
    pub metrics: MetricTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let m = mean(values);
        let std = if values.len() > 1 {
            std_dev(values, m, VarianceConvention::Unbiased)
        } else {
            0.0
        };
        Self { mean: m, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub mse: MeanStd,
    pub nmse: MeanStd,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub best_epoch: usize,
    pub metrics: MetricTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub dataset: String,
    pub lookback: usize,
    pub horizon: usize,
    pub cell: String,
    pub strategy: NormKind,
    pub bp_space: BpSpace,
    pub metrics: BTreeMap<SplitName, AggregateMetrics>,
    pub runs: Vec<RunSummary>,
}

impl ResultEntry {
    pub fn setting(&self) -> String {
        format!("{}-{}", self.lookback, self.horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub schema_version: u32,
    pub dataset: String,
    /// Column order for tables.
    pub cells: Vec<String>,
    pub entries: Vec<ResultEntry>,
}

impl ExperimentResults {
    pub fn get(&self, lookback: usize, horizon: usize, cell: &str) -> Option<&ResultEntry> {
        self.entries
            .iter()
            .find(|e| e.lookback == lookback && e.horizon == horizon && e.cell == cell)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("results.json");
        if !path.exists() {
            return Err(ExperimentError::MissingResults(dir.to_owned()));
        }
        read_json(&path)
    }
}

/// Aggregate runs of one (setting, cell) across seeds; seeds sorted ascending.
pub fn aggregate(records: &[RunRecord]) -> Option<ResultEntry> {
    let first = records.first()?;
    let mut runs: Vec<&RunRecord> = records.iter().collect();
    runs.sort_by_key(|r| r.seed);
    let mut metrics = BTreeMap::new();
    for split in SplitName::EVAL {
        let per: Vec<_> = runs.iter().filter_map(|r| r.metrics.get(split)).collect();
        if per.len() != runs.len() {
            continue;
        }
        let mse: Vec<f64> = per.iter().map(|m| m.mse).collect();
        let nmse: Vec<f64> = per.iter().map(|m| m.nmse).collect();
        metrics.insert(
            split,
            AggregateMetrics {
                mse: MeanStd::of(&mse),
                nmse: MeanStd::of(&nmse),
                windows: per[0].windows,
            },
        );
    }
    Some(ResultEntry {
        dataset: first.dataset.clone(),
        lookback: first.lookback,
        horizon: first.horizon,
        cell: first.cell.clone(),
        strategy: first.strategy,
        bp_space: first.bp_space,
        metrics,
        runs: runs
            .iter()
            .map(|r| RunSummary {
                seed: r.seed,
                best_epoch: r.best_epoch,
                metrics: r.metrics.clone(),
            })
            .collect(),
    })
}

/// A Test2 window with every cell's prediction, for overlay plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionExample {
    pub user: String,
    pub start: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub predictions: BTreeMap<String, Vec<f64>>,
}

/// A cleaned dataset and its split for one (L, H) setting.
pub struct SettingData {
    pub spec: WindowSpec,
    pub dataset: TimeSeriesDataset,
    pub assignment: SplitAssignment,
    pub removals: RemovalReport,
}

impl SettingData {
    /// Write `split.json` and `removals.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(&dir.join("split.json"), &self.assignment)?;
        self.removals.write_csv(create_file(&dir.join("removals.csv"))?)?;
        Ok(())
    }
}

/// Clean constant windows for this setting and split the users and periods.
pub fn prepare_setting(config: &ExperimentConfig, loaded: &LoadedDataset, spec: WindowSpec) -> Result<SettingData> {
    let (dataset, mut removals) = clean_dataset(&loaded.dataset, spec, config.split.drop_threshold);
    removals.merge(loaded.removals.clone());
    let assignment = six_way_split(
        &dataset,
        config.split.out_fraction,
        config.split.periods,
        spec,
        config.split.seed,
    )?;
    Ok(SettingData {
        spec,
        dataset,
        assignment,
        removals,
    })
}

#[derive(Debug, Clone, Copy)]
struct Job {
    setting: usize,
    cell: usize,
    seed: u64,
}

fn run_dir(out: &Path, spec: WindowSpec, cell: &CellConfig, seed: u64) -> PathBuf {
    out.join("runs").join(spec.to_string()).join(cell.id()).join(format!("seed-{seed}"))
}

/// A finished run is reused when its record parses and matches the job exactly.
fn try_resume(dir: &Path, expected: &TrainConfig, dataset: &str, cell: &str) -> Option<RunRecord> {
    let path = dir.join("result.json");
    if !path.exists() || !dir.join("model.json").exists() || !dir.join("norm.json").exists() {
        return None;
    }
    let rec: RunRecord = read_json(&path).ok()?;
    (rec.train_config == *expected && rec.dataset == dataset && rec.cell == cell).then_some(rec)
}

fn load_model(dir: &Path) -> Result<(LinearForecaster, FittedNorm)> {
    Ok((read_json(&dir.join("model.json"))?, read_json(&dir.join("norm.json"))?))
}

/// Per-user mean and unbiased std of the observed values.
pub fn write_user_stats(
    dataset: &TimeSeriesDataset,
    labels: Option<&ClusterLabels>,
    path: &Path,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create_file(path)?);
    wtr.write_record(["user", "cluster", "mu", "sigma"]).map_err(DataError::from)?;
    for (u, id) in dataset.user_ids().iter().enumerate() {
        let obs: Vec<f64> = dataset
            .series(u)
            .iter()
            .zip(dataset.mask(u))
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .collect();
        let mu = mean(&obs);
        let sigma = if obs.len() > 1 {
            std_dev(&obs, mu, VarianceConvention::Unbiased)
        } else {
            0.0
        };
        let cluster = labels.and_then(|l| l.get(id)).unwrap_or("");
        wtr.write_record([id.as_str(), cluster, &mu.to_string(), &sigma.to_string()])
            .map_err(DataError::from)?;
    }
    wtr.flush().map_err(io_err(path))?;
    Ok(())
}

/// Run every (setting × cell × seed), reusing finished runs, and write `results.json`.
///
/// `jobs = 0` uses all cores. Results do not depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<ExperimentResults> {
    config.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let loaded = load_dataset(config)?;
    let name = config.dataset_name();
    write_user_stats(&loaded.dataset, loaded.labels.as_ref(), &out.join("user_stats.csv"))?;

    let mut settings = Vec::new();
    for &[l, h] in &config.settings {
        let spec = WindowSpec::new(l, h)?;
        let prepared = prepare_setting(config, &loaded, spec)?;
        prepared.write(&out.join("settings").join(spec.to_string()))?;
        settings.push(prepared);
    }

    let jobs_list: Vec<Job> = (0..settings.len())
        .flat_map(|s| {
            (0..config.cells.len())
                .flat_map(move |c| config.seeds.iter().map(move |&seed| Job { setting: s, cell: c, seed }))
        })
        .collect();

    let run_one = |job: &Job| -> Result<RunRecord> {
        let sd = &settings[job.setting];
        let cell = &config.cells[job.cell];
        let tc = config.train_config(cell, sd.spec, job.seed);
        let dir = run_dir(out, sd.spec, cell, job.seed);
        if let Some(rec) = try_resume(&dir, &tc, &name, &cell.label()) {
            log::info!("reusing {}", dir.display());
            return Ok(rec);
        }
        log::info!("training {} {} seed {}", sd.spec, cell.label(), job.seed);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let outcome = train(&tc, &sd.dataset, &sd.assignment, loaded.labels.as_ref())?;
        write_history_csv(&outcome.history, create_file(&dir.join("history.csv"))?)?;
        write_json(&dir.join("model.json"), &outcome.model)?;
        write_json(&dir.join("norm.json"), &outcome.norm)?;
        let rec = RunRecord {
            dataset: name.clone(),
            lookback: sd.spec.lookback,
            horizon: sd.spec.horizon,
            cell: cell.label(),
            strategy: cell.strategy,
            bp_space: cell.bp_space,
            seed: job.seed,
            best_epoch: outcome.best_epoch,
            train_config: tc,
            metrics: outcome.metrics,
        };
        // Written last: its presence marks the run as complete.
        write_json(&dir.join("result.json"), &rec)?;
        Ok(rec)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| jobs_list.par_iter().map(run_one).collect::<Result<_>>())?;

    let mut entries = Vec::new();
    for (s, sd) in settings.iter().enumerate() {
        for c in 0..config.cells.len() {
            let group: Vec<RunRecord> = jobs_list
                .iter()
                .zip(&records)
                .filter(|(j, _)| j.setting == s && j.cell == c)
                .map(|(_, r)| r.clone())
                .collect();
            entries.extend(aggregate(&group));
        }
        write_example(config, sd, out)?;
        if let Some(sh) = config.shift.as_ref().filter(|s| s.enabled) {
            let mut cfg = ShiftConfig::new(sd.spec, config.split.seed);
            cfg.max_samples = sh.max_samples;
            let report = shift_report(&name, &sd.dataset, &sd.assignment, &cfg)?;
            let dir = out.join("settings").join(sd.spec.to_string());
            write_json(&dir.join("shift.json"), &report)?;
            report.write_csv(create_file(&dir.join("shift.csv"))?)?;
        }
    }
    let results = ExperimentResults {
        schema_version: SCHEMA_VERSION,
        dataset: name,
        cells: config.cells.iter().map(CellConfig::label).collect(),
        entries,
    };
    write_json(&out.join("results.json"), &results)?;
    Ok(results)
}

/// Predictions of every cell's first-seed model on the first Test2 window.
fn write_example(config: &ExperimentConfig, sd: &SettingData, out: &Path) -> Result<()> {
    let windows = enumerate_windows(&sd.dataset, &sd.assignment, SplitName::Test2, sd.spec, sd.spec.horizon);
    let Some(w) = windows.first() else {
        return Ok(());
    };
    let ids = sd.dataset.user_ids();
    let seed = config.seeds[0];
    let mut predictions = BTreeMap::new();
    for cell in &config.cells {
        let (model, norm) = load_model(&run_dir(out, sd.spec, cell, seed))?;
        let p = run_pipeline(&model, &norm, &w.x, &ids[w.user])?;
        predictions.insert(cell.label(), p.prediction);
    }
    let example = PredictionExample {
        user: ids[w.user].clone(),
        start: w.start,
        x: w.x.clone(),
        y: w.y.clone(),
        predictions,
    };
    write_json(&out.join("settings").join(sd.spec.to_string()).join("examples.json"), &example)
}
