use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::Param;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f32) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// One bias-corrected Adam update over `params`, then zeroes their gradients.
///
/// All gradients are checked before any parameter is touched, so a
/// non-finite gradient leaves every parameter unchanged.
pub fn adam_step(params: &mut [&mut Param], cfg: &AdamConfig) -> Result<()> {
    for p in params.iter() {
        if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {} at index {i} is {}",
                p.name, p.grad[i]
            )));
        }
    }
    let (lr, b1, b2, eps) = (
        cfg.lr as f64,
        cfg.beta1 as f64,
        cfg.beta2 as f64,
        cfg.eps as f64,
    );
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let Param {
            value, grad, m, v, ..
        } = &mut **p;
        for i in 0..value.len() {
            let g = grad[i] as f64;
            let mi = b1 * m[i] as f64 + (1.0 - b1) * g;
            let vi = b2 * v[i] as f64 + (1.0 - b2) * g * g;
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            value[i] = (value[i] as f64 - update) as f32;
            m[i] = mi as f32;
            v[i] = vi as f32;
        }
        p.zero_grad();
    }
    Ok(())
}
