use crate::error::{Error, Result};
use crate::param::Param;
use crate::tensor::Tensor4;

pub const BN_EPSILON: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;

/// Running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub eps: f32,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
            eps: BN_EPSILON,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub input: Tensor4,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

fn check_affine(input: &Tensor4, gamma: &Param, beta: &Param) -> Result<()> {
    let c = input.dims().c;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!(
            "batchnorm: {c} channels but gamma has {} and beta {} entries",
            gamma.len(),
            beta.len()
        )));
    }
    Ok(())
}

/// Per-channel mean and population variance over (n, h, w).
fn channel_stats(input: &Tensor4) -> Result<Vec<(f64, f64)>> {
    let d = input.dims();
    let count = d.n * d.plane();
    if count < 2 {
        return Err(Error::Degenerate(format!(
            "batchnorm training needs at least 2 values per channel, got {count} for {d}"
        )));
    }
    let plane = d.plane();
    Ok((0..d.c)
        .map(|c| {
            let planes = (0..d.n).map(|n| &input.data()[(n * d.c + c) * plane..][..plane]);
            let mut sum = 0.0f64;
            for p in planes.clone() {
                sum += p.iter().map(|&v| v as f64).sum::<f64>();
            }
            let mean = sum / count as f64;
            let mut sq = 0.0f64;
            for p in planes {
                sq += p.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>();
            }
            (mean, sq / count as f64)
        })
        .collect())
}

fn normalize(
    input: &Tensor4,
    gamma: &Param,
    beta: &Param,
    stats: impl Fn(usize) -> (f64, f64),
) -> Result<Tensor4> {
    let d = input.dims();
    let plane = d.plane();
    let mut out = input.data().to_vec();
    for (i, chunk) in out.chunks_mut(plane).enumerate() {
        let c = i % d.c;
        let (mean, inv_std) = stats(c);
        let (g, b) = (gamma.value[c] as f64, beta.value[c] as f64);
        for v in chunk {
            *v = ((*v as f64 - mean) * inv_std * g + b) as f32;
        }
    }
    Tensor4::from_vec(d, out)
}

/// Batch normalization over (n, h, w) per channel.
///
/// Training mode uses batch statistics and folds them into the running
/// estimates (`running = (1 − momentum)·running + momentum·batch`, with the
/// unbiased variance for `running_var`). Eval mode reads the running
/// estimates and leaves `state` untouched.
pub fn batchnorm_forward(
    input: &Tensor4,
    gamma: &Param,
    beta: &Param,
    state: &mut BatchNormState,
    training: bool,
) -> Result<Tensor4> {
    if !training {
        return batchnorm_eval(input, gamma, beta, state);
    }
    check_affine(input, gamma, beta)?;
    let stats = channel_stats(input)?;
    let eps = state.eps as f64;
    let out = normalize(input, gamma, beta, |c| {
        let (m, var) = stats[c];
        (m, 1.0 / (var + eps).sqrt())
    })?;
    let count = (input.dims().n * input.dims().plane()) as f64;
    let mom = state.momentum as f64;
    for (c, &(mean, var)) in stats.iter().enumerate() {
        let unbiased = var * count / (count - 1.0);
        state.running_mean[c] = ((1.0 - mom) * state.running_mean[c] as f64 + mom * mean) as f32;
        state.running_var[c] = ((1.0 - mom) * state.running_var[c] as f64 + mom * unbiased) as f32;
    }
    Ok(out)
}

pub fn batchnorm_eval(
    input: &Tensor4,
    gamma: &Param,
    beta: &Param,
    state: &BatchNormState,
) -> Result<Tensor4> {
    check_affine(input, gamma, beta)?;
    if state.running_mean.len() != input.dims().c || state.running_var.len() != input.dims().c {
        return Err(Error::Shape(format!(
            "batchnorm: running stats sized {} for {} channels",
            state.running_mean.len(),
            input.dims().c
        )));
    }
    let eps = state.eps as f64;
    normalize(input, gamma, beta, |c| {
        (
            state.running_mean[c] as f64,
            1.0 / (state.running_var[c] as f64 + eps).sqrt(),
        )
    })
}

/// Gradient of the training-mode forward pass. Batch statistics are
/// recomputed from `input`.
pub fn batchnorm_backward(
    input: &Tensor4,
    gamma: &Param,
    eps: f32,
    grad_out: &Tensor4,
) -> Result<BatchNormGrads> {
    let d = input.dims();
    grad_out.ensure_dims(d, "batchnorm_backward grad_out")?;
    if gamma.len() != d.c {
        return Err(Error::Shape(format!(
            "batchnorm_backward: gamma has {} entries for {} channels",
            gamma.len(),
            d.c
        )));
    }
    let stats = channel_stats(input)?;
    let plane = d.plane();
    let count = (d.n * plane) as f64;
    let mut grad_in = vec![0.0f32; d.len()];
    let mut grad_gamma = vec![0.0f32; d.c];
    let mut grad_beta = vec![0.0f32; d.c];

    for c in 0..d.c {
        let (mean, var) = stats[c];
        let inv_std = 1.0 / (var + eps as f64).sqrt();
        let g = gamma.value[c] as f64;
        let offsets: Vec<usize> = (0..d.n).map(|n| (n * d.c + c) * plane).collect();

        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for &o in &offsets {
            for i in o..o + plane {
                let dy = grad_out.data()[i] as f64;
                let xhat = (input.data()[i] as f64 - mean) * inv_std;
                sum_dy += dy;
                sum_dy_xhat += dy * xhat;
            }
        }
        grad_beta[c] = sum_dy as f32;
        grad_gamma[c] = sum_dy_xhat as f32;

        let scale = g * inv_std / count;
        for &o in &offsets {
            for i in o..o + plane {
                let dy = grad_out.data()[i] as f64;
                let xhat = (input.data()[i] as f64 - mean) * inv_std;
                grad_in[i] = (scale * (count * dy - sum_dy - xhat * sum_dy_xhat)) as f32;
            }
        }
    }

    Ok(BatchNormGrads {
        input: Tensor4::from_vec(d, grad_in)?,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}
