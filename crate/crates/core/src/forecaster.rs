// SPDX-License-Identifier: MIT OR Apache-2.0

//! Direct multi-step linear forecasters (plain and DLinear-style) with
//! closed-form gradients and an Adam optimizer.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("moving-average kernel must be odd and in 1..={lookback}, got {kernel}")]
    BadKernel { kernel: usize, lookback: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint is inconsistent: {0}")]
    BadCheckpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    Linear,
    Dlinear,
}

impl fmt::Display for ForecasterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForecasterKind::Linear => "linear",
            ForecasterKind::Dlinear => "dlinear",
        })
    }
}

impl FromStr for ForecasterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ForecasterKind::Linear),
            "dlinear" => Ok(ForecasterKind::Dlinear),
            _ => Err(format!("unknown forecaster `{s}`")),
        }
    }
}

/// Centered moving average with edge replication, and the residual.
pub fn moving_average_decompose(x: &[f64], kernel: usize) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
    check_kernel(kernel, x.len())?;
    let trend = moving_average(x, kernel);
    let residual = x.iter().zip(&trend).map(|(a, b)| a - b).collect();
    Ok((trend, residual))
}

fn check_kernel(kernel: usize, lookback: usize) -> Result<(), ForecastError> {
    if kernel.is_multiple_of(2) || kernel > lookback {
        return Err(ForecastError::BadKernel { kernel, lookback });
    }
    Ok(())
}

fn moving_average(x: &[f64], kernel: usize) -> Vec<f64> {
    let half = (kernel / 2) as isize;
    let last = x.len() as isize - 1;
    (0..x.len() as isize)
        .map(|i| {
            let s: f64 = (i - half..=i + half).map(|j| x[j.clamp(0, last) as usize]).sum();
            s / kernel as f64
        })
        .collect()
}

/// Transpose of [`moving_average`] applied to `v`, accumulated into `out`.
fn moving_average_transpose_acc(v: &[f64], kernel: usize, out: &mut [f64]) {
    let half = (kernel / 2) as isize;
    let last = v.len() as isize - 1;
    let k = kernel as f64;
    for (i, &vi) in v.iter().enumerate() {
        let i = i as isize;
        for j in i - half..=i + half {
            out[j.clamp(0, last) as usize] += vi / k;
        }
    }
}

/// `ŷ = W_s·x + b` (linear) or `ŷ = W_t·trend(x) + W_s·(x − trend(x)) + b` (dlinear).
///
/// Parameters live in one row-major buffer laid out as
/// `[W_seasonal (H×L) | W_trend (H×L, dlinear only) | bias (H)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelDoc", try_from = "ModelDoc")]
pub struct LinearForecaster {
    kind: ForecasterKind,
    lookback: usize,
    horizon: usize,
    ma_kernel: usize,
    params: Vec<f64>,
}

impl LinearForecaster {
    pub fn zeros(
        kind: ForecasterKind,
        lookback: usize,
        horizon: usize,
        ma_kernel: usize,
    ) -> Result<Self, ForecastError> {
        if kind == ForecasterKind::Dlinear {
            check_kernel(ma_kernel, lookback)?;
        }
        let n_mats = match kind {
            ForecasterKind::Linear => 1,
            ForecasterKind::Dlinear => 2,
        };
        Ok(Self {
            kind,
            lookback,
            horizon,
            ma_kernel,
            params: vec![0.0; n_mats * horizon * lookback + horizon],
        })
    }

    /// Weights i.i.d. uniform in `±1/L`, bias 0.
    pub fn init(
        kind: ForecasterKind,
        lookback: usize,
        horizon: usize,
        ma_kernel: usize,
        seed: u64,
    ) -> Result<Self, ForecastError> {
        let mut m = Self::zeros(kind, lookback, horizon, ma_kernel)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / lookback as f64;
        let n_w = m.params.len() - horizon;
        for w in &mut m.params[..n_w] {
            *w = rng.random_range(-bound..bound);
        }
        Ok(m)
    }

    pub fn kind(&self) -> ForecasterKind {
        self.kind
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn ma_kernel(&self) -> usize {
        self.ma_kernel
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn hl(&self) -> usize {
        self.horizon * self.lookback
    }

    pub fn w_seasonal(&self) -> &[f64] {
        &self.params[..self.hl()]
    }

    pub fn w_seasonal_mut(&mut self) -> &mut [f64] {
        let hl = self.hl();
        &mut self.params[..hl]
    }

    pub fn w_trend(&self) -> Option<&[f64]> {
        (self.kind == ForecasterKind::Dlinear).then(|| &self.params[self.hl()..2 * self.hl()])
    }

    pub fn w_trend_mut(&mut self) -> Option<&mut [f64]> {
        let hl = self.hl();
        (self.kind == ForecasterKind::Dlinear).then(|| &mut self.params[hl..2 * hl])
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.params.len() - self.horizon..]
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        let n = self.params.len();
        &mut self.params[n - self.horizon..]
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ForecastError> {
        if x.len() != self.lookback {
            return Err(ForecastError::ShapeMismatch {
                expected: self.lookback,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ForecastError> {
        self.check_input(x)?;
        let l = self.lookback;
        let matvec = |w: &[f64], v: &[f64], out: &mut [f64]| {
            for (o, row) in out.iter_mut().zip(w.chunks_exact(l)) {
                *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            }
        };
        let mut out = self.bias().to_vec();
        match self.w_trend() {
            None => matvec(self.w_seasonal(), x, &mut out),
            Some(wt) => {
                let trend = moving_average(x, self.ma_kernel);
                let resid: Vec<f64> = x.iter().zip(&trend).map(|(a, b)| a - b).collect();
                matvec(wt, &trend, &mut out);
                matvec(self.w_seasonal(), &resid, &mut out);
            }
        }
        Ok(out)
    }

    /// Accumulate `∂/∂θ` of `Σ_h g_out[h]·ŷ[h]` into `grads` and return `∂/∂x`.
    pub fn backward(&self, x: &[f64], g_out: &[f64], grads: &mut Gradients) -> Result<Vec<f64>, ForecastError> {
        self.check_input(x)?;
        if g_out.len() != self.horizon {
            return Err(ForecastError::ShapeMismatch {
                expected: self.horizon,
                got: g_out.len(),
            });
        }
        let l = self.lookback;
        let hl = self.hl();
        let n = self.params.len();
        for (gb, g) in grads.0[n - self.horizon..].iter_mut().zip(g_out) {
            *gb += g;
        }
        // outer product into a weight gradient block, transpose product for the input
        let outer_and_back = |w: &[f64], gw: &mut [f64], v: &[f64]| -> Vec<f64> {
            let mut back = vec![0.0; l];
            for (h, &g) in g_out.iter().enumerate() {
                let row = &w[h * l..(h + 1) * l];
                let grow = &mut gw[h * l..(h + 1) * l];
                for i in 0..l {
                    grow[i] += g * v[i];
                    back[i] += g * row[i];
                }
            }
            back
        };
        match self.kind {
            ForecasterKind::Linear => Ok(outer_and_back(self.w_seasonal(), &mut grads.0[..hl], x)),
            ForecasterKind::Dlinear => {
                let trend = moving_average(x, self.ma_kernel);
                let resid: Vec<f64> = x.iter().zip(&trend).map(|(a, b)| a - b).collect();
                let (gs, rest) = grads.0.split_at_mut(hl);
                let g_resid = outer_and_back(self.w_seasonal(), gs, &resid);
                let g_trend = outer_and_back(&self.params[hl..2 * hl], &mut rest[..hl], &trend);
                // x = trend + resid with trend = A x: ∂/∂x = g_resid + Aᵀ(g_trend − g_resid)
                let diff: Vec<f64> = g_trend.iter().zip(&g_resid).map(|(a, b)| a - b).collect();
                let mut g_in = g_resid;
                moving_average_transpose_acc(&diff, self.ma_kernel, &mut g_in);
                Ok(g_in)
            }
        }
    }

    /// Mean over batch and horizon of `(ŷ − target)²`.
    pub fn mse(&self, batch: &[(Vec<f64>, Vec<f64>)]) -> Result<f64, ForecastError> {
        if batch.is_empty() {
            return Err(ForecastError::EmptyBatch);
        }
        let mut total = 0.0;
        for (x, t) in batch {
            let y = self.forward(x)?;
            total += y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / (batch.len() * self.horizon) as f64)
    }
}

/// Exact gradients of [`LinearForecaster::mse`] with respect to every parameter.
pub fn gradients(model: &LinearForecaster, batch: &[(Vec<f64>, Vec<f64>)]) -> Result<Gradients, ForecastError> {
    if batch.is_empty() {
        return Err(ForecastError::EmptyBatch);
    }
    let scale = 2.0 / (batch.len() * model.horizon) as f64;
    let mut grads = Gradients::zeros_like(model);
    for (x, t) in batch {
        if t.len() != model.horizon {
            return Err(ForecastError::ShapeMismatch {
                expected: model.horizon,
                got: t.len(),
            });
        }
        let y = model.forward(x)?;
        let g: Vec<f64> = y.iter().zip(t).map(|(a, b)| scale * (a - b)).collect();
        model.backward(x, &g, &mut grads)?;
    }
    Ok(grads)
}

/// Gradient buffer with the same layout as [`LinearForecaster::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(model: &LinearForecaster) -> Self {
        Self(vec![0.0; model.params.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step_count: 0,
            config,
        }
    }

    pub fn for_model(model: &LinearForecaster, config: AdamConfig) -> Self {
        Self::new(model.params.len(), config)
    }

    /// One bias-corrected Adam update of `params`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), ForecastError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(ForecastError::ShapeMismatch {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step_count += 1;
        let c1 = 1.0 - beta1.powi(self.step_count as i32);
        let c2 = 1.0 - beta2.powi(self.step_count as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

pub fn adam_step(
    model: &mut LinearForecaster,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<(), ForecastError> {
    state.update(&mut model.params, &grads.0)
}

/// Model plus optimizer state, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: LinearForecaster,
    #[serde(default)]
    pub adam: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    kind: ForecasterKind,
    lookback: usize,
    horizon: usize,
    ma_kernel: usize,
    w_seasonal: Vec<f64>,
    #[serde(default)]
    w_trend: Option<Vec<f64>>,
    bias: Vec<f64>,
}

impl From<LinearForecaster> for ModelDoc {
    fn from(m: LinearForecaster) -> Self {
        ModelDoc {
            kind: m.kind,
            lookback: m.lookback,
            horizon: m.horizon,
            ma_kernel: m.ma_kernel,
            w_seasonal: m.w_seasonal().to_vec(),
            w_trend: m.w_trend().map(<[f64]>::to_vec),
            bias: m.bias().to_vec(),
        }
    }
}

impl TryFrom<ModelDoc> for LinearForecaster {
    type Error = ForecastError;

    fn try_from(d: ModelDoc) -> Result<Self, Self::Error> {
        let mut m = LinearForecaster::zeros(d.kind, d.lookback, d.horizon, d.ma_kernel)?;
        let hl = m.hl();
        if d.w_seasonal.len() != hl || d.bias.len() != d.horizon {
            return Err(ForecastError::BadCheckpoint("weight shapes do not match L and H".into()));
        }
        m.w_seasonal_mut().copy_from_slice(&d.w_seasonal);
        m.bias_mut().copy_from_slice(&d.bias);
        match (m.w_trend_mut(), d.w_trend) {
            (Some(dst), Some(src)) if src.len() == hl => dst.copy_from_slice(&src),
            (None, None) => {}
            _ => return Err(ForecastError::BadCheckpoint("trend weights do not match kind".into())),
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn decompose_examples() {
        let x = [1.0, 4.0, -2.0];
        let (t, r) = moving_average_decompose(&x, 1).unwrap();
        assert_eq!(t, x.to_vec());
        assert!(r.iter().all(|&v| v == 0.0));

        let (t, r) = moving_average_decompose(&[0.0, 0.0, 3.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(t, vec![0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(r, vec![0.0, -1.0, 2.0, -1.0, 0.0]);

        let (_, r) = moving_average_decompose(&[2.5; 7], 5).unwrap();
        assert!(r.iter().all(|&v| v.abs() < 1e-15));

        assert!(matches!(moving_average_decompose(&[1.0; 4], 2), Err(ForecastError::BadKernel { .. })));
        assert!(matches!(moving_average_decompose(&[1.0; 4], 5), Err(ForecastError::BadKernel { .. })));
    }

    #[test]
    fn forward_examples() {
        let m = LinearForecaster::zeros(ForecasterKind::Linear, 4, 2, 1).unwrap();
        assert_eq!(m.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(m.forward(&[1.0]), Err(ForecastError::ShapeMismatch { .. })));

        let mut id = LinearForecaster::zeros(ForecasterKind::Linear, 3, 3, 1).unwrap();
        for i in 0..3 {
            id.w_seasonal_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(id.forward(&[0.5, -1.0, 2.0]).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn scalar_gradient() {
        let m = LinearForecaster::zeros(ForecasterKind::Linear, 1, 1, 1).unwrap();
        let g = gradients(&m, &[(vec![1.0], vec![2.0])]).unwrap();
        assert_eq!(g.0, vec![-4.0, -4.0]);
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let m = LinearForecaster::init(ForecasterKind::Dlinear, 6, 2, 3, 1).unwrap();
        let batch: Vec<_> = (0..4)
            .map(|i| {
                let x: Vec<f64> = (0..6).map(|j| ((i * 7 + j * 3) % 5) as f64).collect();
                let y = m.forward(&x).unwrap();
                (x, y)
            })
            .collect();
        assert!(gradients(&m, &batch).unwrap().0.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut m = LinearForecaster::init(ForecasterKind::Linear, 3, 2, 1, 0).unwrap();
        let before = m.clone();
        let mut st = AdamState::for_model(&m, AdamConfig::default());
        adam_step(&mut m, &Gradients::zeros_like(&before), &mut st).unwrap();
        assert_eq!(m, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the update is lr·g/(|g| + eps) ≈ lr·sign(g).
        let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
        let mut p = vec![0.0, 0.0, 0.0];
        let g = [2.0, -0.5, 1e-3];
        let mut st = AdamState::new(3, cfg);
        st.update(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            let expected = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert_abs_diff_eq!(*pi, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn adam_constant_gradient_moves_monotonically() {
        let cfg = AdamConfig { lr: 1e-2, ..AdamConfig::default() };
        let mut p = vec![1.0];
        let mut st = AdamState::new(1, cfg);
        st.update(&mut p, &[3.0]).unwrap();
        let after1 = p[0];
        st.update(&mut p, &[3.0]).unwrap();
        // With a constant gradient both bias-corrected moments equal g and g².
        assert!(after1 < 1.0 && p[0] < after1);
        assert_abs_diff_eq!(1.0 - p[0], 2.0 * cfg.lr * 3.0 / (3.0 + cfg.eps), epsilon = 1e-12);
    }

    #[test]
    fn checkpoint_json_round_trip() {
        let m = LinearForecaster::init(ForecasterKind::Dlinear, 5, 3, 3, 7).unwrap();
        let ck = Checkpoint {
            adam: Some(AdamState::for_model(&m, AdamConfig::default())),
            model: m,
        };
        let json = serde_json::to_string(&ck).unwrap();
        assert!(json.contains("\"w_trend\""));
        assert_eq!(serde_json::from_str::<Checkpoint>(&json).unwrap(), ck);
    }

    #[test]
    fn checkpoint_shape_is_validated() {
        let bad = r#"{"kind":"linear","lookback":2,"horizon":1,"ma_kernel":1,"w_seasonal":[1.0],"bias":[0.0]}"#;
        assert!(serde_json::from_str::<LinearForecaster>(bad).is_err());
    }
}
