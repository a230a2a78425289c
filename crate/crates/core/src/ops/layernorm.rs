use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const LN_EPSILON: f32 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerNormMode {
    /// Statistics over all `c·h·w` elements of each sample.
    PerSample,
    /// A single stored mean and variance shared by every sample.
    FrozenStats,
}

/// Parameter-free normalization `(x − E[x]) / sqrt(Var(x) + ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNormConfig {
    pub epsilon: f32,
    pub mode: LayerNormMode,
    pub frozen_mean: Option<f32>,
    pub frozen_var: Option<f32>,
}

impl Default for LayerNormConfig {
    fn default() -> Self {
        Self {
            epsilon: LN_EPSILON,
            mode: LayerNormMode::PerSample,
            frozen_mean: None,
            frozen_var: None,
        }
    }
}

impl LayerNormConfig {
    pub fn frozen(mean: f32, var: f32) -> Self {
        Self {
            mode: LayerNormMode::FrozenStats,
            frozen_mean: Some(mean),
            frozen_var: Some(var),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "layernorm epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if let Some(var) = self.frozen_var {
            if !(var >= 0.0) {
                return Err(Error::Config(format!(
                    "layernorm frozen variance must be non-negative, got {var}"
                )));
            }
        }
        if self.mode == LayerNormMode::FrozenStats
            && (self.frozen_mean.is_none() || self.frozen_var.is_none())
        {
            return Err(Error::Config(
                "layernorm frozen_stats mode requires stored mean and variance".into(),
            ));
        }
        Ok(())
    }

    /// Per-sample `(mean, 1/sqrt(var + ε))` pairs.
    fn sample_stats(&self, input: &Tensor4) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let d = input.dims();
        let eps = self.epsilon as f64;
        match self.mode {
            LayerNormMode::FrozenStats => {
                let (m, v) = (self.frozen_mean.unwrap(), self.frozen_var.unwrap());
                Ok(vec![(m as f64, 1.0 / (v as f64 + eps).sqrt()); d.n])
            }
            LayerNormMode::PerSample => {
                if d.sample_len() < 2 {
                    return Err(Error::Degenerate(format!(
                        "layernorm needs at least 2 elements per sample, got {}",
                        d.sample_len()
                    )));
                }
                Ok((0..d.n)
                    .map(|i| {
                        let (mean, var) = mean_var(input.sample(i));
                        (mean, 1.0 / (var + eps).sqrt())
                    })
                    .collect())
            }
        }
    }
}

/// Mean and population variance, accumulated in `f64`.
pub(crate) fn mean_var(xs: &[f32]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = xs.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

pub fn layernorm(input: &Tensor4, cfg: &LayerNormConfig) -> Result<Tensor4> {
    let stats = cfg.sample_stats(input)?;
    let d = input.dims();
    let mut out = input.data().to_vec();
    for (chunk, (mean, inv_std)) in out.chunks_mut(d.sample_len()).zip(stats) {
        for v in chunk {
            *v = ((*v as f64 - mean) * inv_std) as f32;
        }
    }
    Tensor4::from_vec(d, out)
}

/// Gradient of [`layernorm`] with respect to its input.
pub fn layernorm_backward(
    input: &Tensor4,
    cfg: &LayerNormConfig,
    grad_out: &Tensor4,
) -> Result<Tensor4> {
    let d = input.dims();
    grad_out.ensure_dims(d, "layernorm_backward grad_out")?;
    let stats = cfg.sample_stats(input)?;
    let per = d.sample_len();
    let mut out = vec![0.0f32; d.len()];
    for (i, (mean, inv_std)) in stats.into_iter().enumerate() {
        let xs = input.sample(i);
        let gs = grad_out.sample(i);
        let dst = &mut out[i * per..(i + 1) * per];
        match cfg.mode {
            LayerNormMode::FrozenStats => {
                for (o, &g) in dst.iter_mut().zip(gs) {
                    *o = (g as f64 * inv_std) as f32;
                }
            }
            LayerNormMode::PerSample => {
                let count = per as f64;
                let mut sum_g = 0.0f64;
                let mut sum_gx = 0.0f64;
                for (&x, &g) in xs.iter().zip(gs) {
                    let xhat = (x as f64 - mean) * inv_std;
                    sum_g += g as f64;
                    sum_gx += g as f64 * xhat;
                }
                for ((o, &x), &g) in dst.iter_mut().zip(xs).zip(gs) {
                    let xhat = (x as f64 - mean) * inv_std;
                    *o = (inv_std / count * (count * g as f64 - sum_g - xhat * sum_gx)) as f32;
                }
            }
        }
    }
    Tensor4::from_vec(d, out)
}
