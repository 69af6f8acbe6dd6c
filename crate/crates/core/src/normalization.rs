// SPDX-License-Identifier: MIT OR Apache-2.0

//! Normalization and denormalization strategies.
//!
//! Every strategy reduces, for one window, to an affine [`WindowTransform`]:
//!
//! ```text
//! x̃ = s_in · (x − center) / denom + o_in
//! ŷ = denom · (s_out · (f(x̃) − o_in) / s_in + o_out) + center
//! ```
//!
//! Symmetric strategies use `s_out = 1, o_out = 0`, which makes the output
//! map the exact inverse of the input map. cmIN keeps a separate output
//! affine, initialized from the cluster's mean modulations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::WindowPair;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum NormError {
    #[error("degenerate data: all {n} points equal {mu}, sigma would be 0")]
    DegenerateData { mu: f64, n: usize },
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("strategy `{kind}` needs {needed} context")]
    MissingContext { kind: NormKind, needed: &'static str },
    #[error("zero input scale, the output map cannot be inverted")]
    ZeroScale,
    #[error("cluster `{0}` has no training pairs")]
    EmptyCluster(String),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
}

/// Denominator used for variances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConvention {
    /// Divide by n − 1.
    #[default]
    Unbiased,
    /// Divide by n.
    Population,
}

impl VarianceConvention {
    fn denominator(self, n: usize) -> f64 {
        match self {
            VarianceConvention::Unbiased => (n - 1) as f64,
            VarianceConvention::Population => n as f64,
        }
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard deviation around `mu`; 0 for fewer than two points.
pub fn std_dev(x: &[f64], mu: f64, convention: VarianceConvention) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let ss: f64 = x.iter().map(|v| (v - mu) * (v - mu)).sum();
    (ss / convention.denominator(x.len())).sqrt()
}

/// Mean and standard deviation shared by every window of the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    pub mu: f64,
    pub sigma: f64,
}

/// Grand mean and (NL − 1)-denominator standard deviation over all look-back
/// points of `windows`.
pub fn fit_global_stats(windows: &[WindowPair]) -> Result<GlobalStats, NormError> {
    let n: usize = windows.iter().map(|w| w.x.len()).sum();
    if n < 2 {
        return Err(NormError::TooFewPoints(n));
    }
    let mu = windows.iter().flat_map(|w| &w.x).sum::<f64>() / n as f64;
    let ss: f64 = windows
        .iter()
        .flat_map(|w| &w.x)
        .map(|v| (v - mu) * (v - mu))
        .sum();
    let sigma = (ss / (n - 1) as f64).sqrt();
    if sigma == 0.0 {
        return Err(NormError::DegenerateData { mu, n });
    }
    Ok(GlobalStats { mu, sigma })
}

/// Per-window mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub mu_x: f64,
    pub sigma_x: f64,
}

/// Mean and unbiased standard deviation of a look-back.
pub fn instance_stats(x: &[f64]) -> InstanceStats {
    instance_stats_with(x, VarianceConvention::Unbiased)
}

pub fn instance_stats_with(x: &[f64], convention: VarianceConvention) -> InstanceStats {
    let mu_x = mean(x);
    InstanceStats {
        mu_x,
        sigma_x: std_dev(x, mu_x, convention),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMaxParams {
    pub min: f64,
    pub max: f64,
}

impl MinMaxParams {
    pub fn fit(windows: &[WindowPair]) -> Option<Self> {
        let mut it = windows.iter().flat_map(|w| w.x.iter().copied());
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Some(Self { min, max })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for AffineParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
        }
    }
}

/// cmIN parameters of one cluster: input affine `(gamma, nu)` and the
/// separate output affine `(alpha, beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CminParams {
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub cluster: String,
}

impl CminParams {
    pub fn identity(cluster: impl Into<String>) -> Self {
        Self {
            gamma: 1.0,
            nu: 0.0,
            alpha: 1.0,
            beta: 0.0,
            cluster: cluster.into(),
        }
    }

    pub fn input_affine(&self) -> AffineParams {
        AffineParams {
            alpha: self.gamma,
            beta: self.nu,
        }
    }

    pub fn output_affine(&self) -> AffineParams {
        AffineParams {
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    None,
    Standard,
    Minmax,
    Relative,
    PerUserStandard,
    Instance,
    Revin,
    Cmin,
}

impl NormKind {
    pub const ALL: [NormKind; 8] = [
        NormKind::None,
        NormKind::Standard,
        NormKind::Minmax,
        NormKind::Relative,
        NormKind::PerUserStandard,
        NormKind::Instance,
        NormKind::Revin,
        NormKind::Cmin,
    ];

    /// Uses the look-back's own statistics.
    pub fn is_instance(self) -> bool {
        matches!(self, NormKind::Instance | NormKind::Revin | NormKind::Cmin)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::None => "none",
            NormKind::Standard => "standard",
            NormKind::Minmax => "minmax",
            NormKind::Relative => "relative",
            NormKind::PerUserStandard => "per_user_standard",
            NormKind::Instance => "instance",
            NormKind::Revin => "revin",
            NormKind::Cmin => "cmin",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_user" => Ok(NormKind::PerUserStandard),
            _ => NormKind::ALL
                .into_iter()
                .find(|k| k.as_str() == s)
                .ok_or_else(|| format!("unknown normalization `{s}`")),
        }
    }
}

/// A normalization family with its numerical-stability constant and, for
/// RevIN, the global affine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStrategy {
    pub kind: NormKind,
    pub epsilon: f64,
    /// Whether the affine parameters (RevIN's `alpha, beta`, cmIN's per-cluster
    /// table) are trained.
    #[serde(default)]
    pub learnable_affine: bool,
    #[serde(default)]
    pub affine: AffineParams,
}

impl NormStrategy {
    pub fn new(kind: NormKind) -> Self {
        Self {
            kind,
            epsilon: DEFAULT_EPSILON,
            learnable_affine: false,
            affine: AffineParams::default(),
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_affine(mut self, alpha: f64, beta: f64) -> Self {
        self.affine = AffineParams { alpha, beta };
        self
    }

    pub fn learnable(mut self, learnable: bool) -> Self {
        self.learnable_affine = learnable;
        self
    }

    pub fn validate(&self) -> Result<(), NormError> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(NormError::BadEpsilon(self.epsilon));
        }
        Ok(())
    }

    /// Resolve this strategy on one window's context.
    pub fn transform(&self, ctx: &NormContext) -> Result<WindowTransform, NormError> {
        let eps = self.epsilon;
        let missing = |needed| NormError::MissingContext {
            kind: self.kind,
            needed,
        };
        let t = match (self.kind, ctx) {
            (NormKind::None, _) => WindowTransform::identity(),
            (NormKind::Standard | NormKind::PerUserStandard, NormContext::Global(g)) => {
                WindowTransform::symmetric(g.mu, g.sigma + eps)
            }
            (NormKind::Standard | NormKind::PerUserStandard, _) => {
                return Err(missing("global or per-user statistics"))
            }
            (NormKind::Minmax, NormContext::MinMax(m)) => {
                WindowTransform::symmetric(m.min, m.max - m.min + eps)
            }
            (NormKind::Minmax, _) => return Err(missing("min-max")),
            (NormKind::Relative, NormContext::Relative { mean }) => {
                WindowTransform::symmetric(0.0, mean + eps)
            }
            (NormKind::Relative, _) => return Err(missing("mean")),
            (NormKind::Instance, NormContext::Instance(s) | NormContext::Modulated { stats: s, .. }) => {
                WindowTransform::symmetric(s.mu_x, s.sigma_x + eps)
            }
            (NormKind::Revin, NormContext::Instance(s) | NormContext::Modulated { stats: s, .. }) => {
                let a = self.affine;
                WindowTransform {
                    in_scale: a.alpha,
                    in_shift: a.beta,
                    ..WindowTransform::symmetric(s.mu_x, s.sigma_x + eps)
                }
            }
            (NormKind::Instance | NormKind::Revin, _) => return Err(missing("instance")),
            (NormKind::Cmin, NormContext::Modulated { stats, params }) => WindowTransform {
                center: stats.mu_x,
                denom: stats.sigma_x + eps,
                in_scale: params.gamma,
                in_shift: params.nu,
                out_scale: params.alpha,
                out_shift: params.beta,
            },
            (NormKind::Cmin, _) => return Err(missing("instance statistics and cluster parameters")),
        };
        Ok(t)
    }
}

/// What a strategy needs to know about the window being transformed.
#[derive(Debug, Clone, PartialEq)]
pub enum NormContext {
    Empty,
    Global(GlobalStats),
    MinMax(MinMaxParams),
    Relative { mean: f64 },
    Instance(InstanceStats),
    Modulated { stats: InstanceStats, params: CminParams },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowTransform {
    pub center: f64,
    pub denom: f64,
    pub in_scale: f64,
    pub in_shift: f64,
    pub out_scale: f64,
    pub out_shift: f64,
}

impl WindowTransform {
    pub fn identity() -> Self {
        Self::symmetric(0.0, 1.0)
    }

    pub fn symmetric(center: f64, denom: f64) -> Self {
        Self {
            center,
            denom,
            in_scale: 1.0,
            in_shift: 0.0,
            out_scale: 1.0,
            out_shift: 0.0,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|v| self.in_scale * (v - self.center) / self.denom + self.in_shift)
            .collect()
    }

    /// Model output mapped back into the look-back's standardized frame,
    /// i.e. after the inverse (or output) affine layer.
    pub fn to_standardized(&self, model_out: &[f64]) -> Result<Vec<f64>, NormError> {
        if self.in_scale == 0.0 {
            return Err(NormError::ZeroScale);
        }
        Ok(model_out
            .iter()
            .map(|v| self.out_scale * (v - self.in_shift) / self.in_scale + self.out_shift)
            .collect())
    }

    /// Standardized frame back to data space.
    pub fn from_standardized(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| self.denom * v + self.center).collect()
    }

    pub fn inverse(&self, model_out: &[f64]) -> Result<Vec<f64>, NormError> {
        Ok(self.from_standardized(&self.to_standardized(model_out)?))
    }
}

pub fn normalize(x: &[f64], strategy: &NormStrategy, ctx: &NormContext) -> Result<Vec<f64>, NormError> {
    Ok(strategy.transform(ctx)?.forward(x))
}

pub fn denormalize(
    y_model: &[f64],
    strategy: &NormStrategy,
    ctx: &NormContext,
) -> Result<Vec<f64>, NormError> {
    strategy.transform(ctx)?.inverse(y_model)
}

/// Horizon expressed in the paired look-back's frame: `(y − μ_x) / (σ_x + ε)`.
pub fn normalize_target(y: &[f64], stats: InstanceStats, epsilon: f64) -> Vec<f64> {
    let d = stats.sigma_x + epsilon;
    y.iter().map(|v| (v - stats.mu_x) / d).collect()
}

/// Horizon statistics relative to the look-back: `delta = (μ_y − μ_x)/(σ_x + ε)`,
/// `lambda = σ_y/(σ_x + ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulations {
    pub delta: f64,
    pub lambda: f64,
}

pub fn modulations(x: &[f64], y: &[f64], epsilon: f64) -> Modulations {
    modulations_with(x, y, epsilon, VarianceConvention::Unbiased)
}

pub fn modulations_with(
    x: &[f64],
    y: &[f64],
    epsilon: f64,
    convention: VarianceConvention,
) -> Modulations {
    let sx = instance_stats_with(x, convention);
    let sy = instance_stats_with(y, convention);
    let d = sx.sigma_x + epsilon;
    Modulations {
        delta: (sy.mu_x - sx.mu_x) / d,
        lambda: sy.sigma_x / d,
    }
}

/// Per-cluster cmIN initialization: `(gamma, nu) = (1, 0)` and
/// `(beta, alpha)` = the cluster's mean `(delta, lambda)` over its training pairs.
pub fn cmin_init(
    groups: &BTreeMap<String, Vec<WindowPair>>,
    epsilon: f64,
) -> Result<BTreeMap<String, CminParams>, NormError> {
    cmin_init_with(groups, epsilon, VarianceConvention::Unbiased)
}

pub fn cmin_init_with(
    groups: &BTreeMap<String, Vec<WindowPair>>,
    epsilon: f64,
    convention: VarianceConvention,
) -> Result<BTreeMap<String, CminParams>, NormError> {
    groups
        .iter()
        .map(|(cluster, pairs)| {
            if pairs.is_empty() {
                return Err(NormError::EmptyCluster(cluster.clone()));
            }
            let (sd, sl) = pairs.iter().fold((0.0, 0.0), |(sd, sl), p| {
                let m = modulations_with(&p.x, &p.y, epsilon, convention);
                (sd + m.delta, sl + m.lambda)
            });
            let n = pairs.len() as f64;
            Ok((
                cluster.clone(),
                CminParams {
                    gamma: 1.0,
                    nu: 0.0,
                    alpha: sl / n,
                    beta: sd / n,
                    cluster: cluster.clone(),
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair(x: Vec<f64>, y: Vec<f64>) -> WindowPair {
        WindowPair { x, y, user: 0, start: 0 }
    }

    #[test]
    fn global_stats_hand_sum() {
        let w = vec![pair(vec![1.0, 2.0, 3.0], vec![]), pair(vec![3.0, 4.0, 5.0], vec![])];
        let g = fit_global_stats(&w).unwrap();
        assert_abs_diff_eq!(g.mu, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.sigma, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn global_stats_degenerate() {
        let w = vec![pair(vec![4.0; 5], vec![])];
        assert!(matches!(fit_global_stats(&w), Err(NormError::DegenerateData { .. })));
    }

    #[test]
    fn global_stats_of_standardized_data() {
        let raw: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 * 0.3 - 4.0).collect();
        let g = fit_global_stats(&[pair(raw.clone(), vec![])]).unwrap();
        let z: Vec<f64> = raw.iter().map(|v| (v - g.mu) / g.sigma).collect();
        let g2 = fit_global_stats(&[pair(z, vec![])]).unwrap();
        assert_abs_diff_eq!(g2.mu, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g2.sigma, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn instance_stats_examples() {
        assert_eq!(instance_stats(&[1.0, 2.0, 3.0]), InstanceStats { mu_x: 2.0, sigma_x: 1.0 });
        assert_eq!(instance_stats(&[5.0; 4]), InstanceStats { mu_x: 5.0, sigma_x: 0.0 });
        let s = instance_stats(&[0.0, 10.0]);
        assert_eq!(s.mu_x, 5.0);
        assert_abs_diff_eq!(s.sigma_x, 50f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn normalize_examples() {
        let x = [1.0, 2.0, 3.0];
        let ctx = NormContext::Instance(instance_stats(&x));
        let inst = NormStrategy::new(NormKind::Instance).with_epsilon(0.0);
        assert_eq!(normalize(&x, &inst, &ctx).unwrap(), vec![-1.0, 0.0, 1.0]);
        let revin = NormStrategy::new(NormKind::Revin).with_epsilon(0.0).with_affine(2.0, 1.0);
        assert_eq!(normalize(&x, &revin, &ctx).unwrap(), vec![-1.0, 1.0, 3.0]);
        let mm = NormStrategy::new(NormKind::Minmax).with_epsilon(0.0);
        let ctx = NormContext::MinMax(MinMaxParams { min: 2.0, max: 6.0 });
        assert_eq!(normalize(&[2.0, 4.0, 6.0], &mm, &ctx).unwrap(), vec![0.0, 0.5, 1.0]);
        let none = NormStrategy::new(NormKind::None);
        assert_eq!(normalize(&x, &none, &NormContext::Empty).unwrap(), x.to_vec());
    }

    #[test]
    fn missing_context_is_reported() {
        let s = NormStrategy::new(NormKind::Standard);
        assert!(matches!(
            normalize(&[1.0, 2.0], &s, &NormContext::Empty),
            Err(NormError::MissingContext { kind: NormKind::Standard, .. })
        ));
        let c = NormStrategy::new(NormKind::Cmin);
        let ctx = NormContext::Instance(instance_stats(&[1.0, 2.0]));
        assert!(normalize(&[1.0, 2.0], &c, &ctx).is_err());
    }

    #[test]
    fn revin_denormalize_by_hand() {
        let s = NormStrategy::new(NormKind::Revin).with_epsilon(0.0).with_affine(2.0, 1.0);
        let ctx = NormContext::Instance(InstanceStats { mu_x: 10.0, sigma_x: 3.0 });
        assert_eq!(denormalize(&[1.0], &s, &ctx).unwrap(), vec![10.0]);
        let zero = NormStrategy::new(NormKind::Revin).with_affine(0.0, 1.0);
        assert!(matches!(denormalize(&[1.0], &zero, &ctx), Err(NormError::ZeroScale)));
    }

    #[test]
    fn instance_round_trip() {
        let x = [3.0, -1.5, 7.25, 0.5, 2.0];
        let ctx = NormContext::Instance(instance_stats(&x));
        let s = NormStrategy::new(NormKind::Instance);
        let back = denormalize(&normalize(&x, &s, &ctx).unwrap(), &s, &ctx).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_cmin_is_instance() {
        let x = [3.0, -1.5, 7.25, 0.5];
        let stats = instance_stats(&x);
        let cmin = NormStrategy::new(NormKind::Cmin);
        let inst = NormStrategy::new(NormKind::Instance);
        let cctx = NormContext::Modulated {
            stats,
            params: CminParams::identity("c"),
        };
        let ictx = NormContext::Instance(stats);
        assert_eq!(normalize(&x, &cmin, &cctx).unwrap(), normalize(&x, &inst, &ictx).unwrap());
        let out = [0.3, -2.0];
        assert_eq!(
            denormalize(&out, &cmin, &cctx).unwrap(),
            denormalize(&out, &inst, &ictx).unwrap()
        );
    }

    #[test]
    fn cmin_output_map_is_not_symmetric() {
        let stats = InstanceStats { mu_x: 1.0, sigma_x: 2.0 };
        let params = CminParams {
            gamma: 2.0,
            nu: 1.0,
            alpha: 3.0,
            beta: -1.0,
            cluster: "c".into(),
        };
        let s = NormStrategy::new(NormKind::Cmin).with_epsilon(0.0);
        let ctx = NormContext::Modulated { stats, params };
        // 2 * (3 * (5 - 1) / 2 + (-1)) + 1 = 11
        assert_eq!(denormalize(&[5.0], &s, &ctx).unwrap(), vec![11.0]);
    }

    #[test]
    fn normalize_target_examples() {
        let s = InstanceStats { mu_x: 4.0, sigma_x: 2.0 };
        assert_eq!(normalize_target(&[4.0, 6.0], s, 0.0), vec![0.0, 1.0]);
        let flat = InstanceStats { mu_x: 1.0, sigma_x: 0.0 };
        let z = normalize_target(&[1.5], flat, 1e-6);
        assert!(z[0] > 1e5);
    }

    #[test]
    fn target_moments_match_modulations() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        let y = [6.0, 9.0, 7.5];
        let eps = 1e-6;
        let z = normalize_target(&y, instance_stats(&x), eps);
        let m = modulations(&x, &y, eps);
        let zs = instance_stats(&z);
        assert_abs_diff_eq!(zs.mu_x, m.delta, epsilon = 1e-12);
        assert_abs_diff_eq!(zs.sigma_x, m.lambda, epsilon = 1e-12);
    }

    #[test]
    fn modulation_examples() {
        let x = [1.0, 5.0, 2.0, 4.0];
        let m = modulations(&x, &x, 0.0);
        assert_eq!((m.delta, m.lambda), (0.0, 1.0));
        let m = modulations(&[0.0, 2.0], &[3.0, 5.0], 0.0);
        assert_abs_diff_eq!(m.delta, 3.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(m.lambda, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn cmin_init_examples() {
        let x = vec![1.0, 3.0, 2.0];
        let mut groups = BTreeMap::new();
        groups.insert("same".to_string(), vec![pair(x.clone(), x.clone()), pair(x.clone(), x)]);
        let p = &cmin_init(&groups, 0.0).unwrap()["same"];
        assert_eq!((p.gamma, p.nu, p.alpha, p.beta), (1.0, 0.0, 1.0, 0.0));

        // Pairs with modulations (1, 2) and (3, 4): x = [0, 2] has mu 1, sigma sqrt 2.
        let s = 2f64.sqrt();
        let mk = |d: f64, l: f64| {
            let mu_y = 1.0 + d * s;
            let half = l * s / 2f64.sqrt();
            pair(vec![0.0, 2.0], vec![mu_y - half, mu_y + half])
        };
        let mut groups = BTreeMap::new();
        groups.insert("c".to_string(), vec![mk(1.0, 2.0), mk(3.0, 4.0)]);
        let p = &cmin_init(&groups, 0.0).unwrap()["c"];
        assert_abs_diff_eq!(p.beta, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.alpha, 3.0, epsilon = 1e-12);

        let mut empty = BTreeMap::new();
        empty.insert("e".to_string(), vec![]);
        assert!(matches!(cmin_init(&empty, 0.0), Err(NormError::EmptyCluster(_))));
    }

    #[test]
    fn strategy_json_round_trip() {
        let s = NormStrategy::new(NormKind::Revin).with_affine(1.5, -0.5).learnable(true);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"kind\":\"revin\""));
        assert_eq!(serde_json::from_str::<NormStrategy>(&json).unwrap(), s);
        assert_eq!("per_user".parse::<NormKind>().unwrap(), NormKind::PerUserStandard);
    }
}
