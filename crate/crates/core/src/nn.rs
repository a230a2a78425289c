//! Stateful layers: parameters plus the activations cached by a training
//! forward pass. `forward` is the read-only inference path; `forward_train`
//! caches its input, and `backward` accumulates into `Param::grad` and
//! returns the gradient for the layer below.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{self, BatchNormState, Kernel, Stride};
use crate::param::Param;
use crate::tensor::Tensor4;

fn take_cache(cache: &mut Option<Tensor4>, layer: &str) -> Result<Tensor4> {
    cache
        .take()
        .ok_or_else(|| Error::Config(format!("{layer}: backward called without forward_train")))
}

/// Uniform in ±sqrt(6 / fan_in).
fn fan_in_uniform<R: Rng>(rng: &mut R, len: usize, fan_in: usize) -> Vec<f32> {
    let bound = (6.0 / fan_in as f64).sqrt() as f32;
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: Stride,
    cache: Option<Tensor4>,
}

impl Conv2d {
    pub fn new<R: Rng>(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: Kernel,
        stride: Stride,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = c_in * kernel.h * kernel.w;
        let len = c_out * fan_in;
        Ok(Self {
            weight: Param::new(
                format!("{name}.weight"),
                vec![c_out, c_in, kernel.h, kernel.w],
                fan_in_uniform(rng, len, fan_in),
            )?,
            bias: Param::filled(format!("{name}.bias"), vec![c_out], 0.0)?,
            stride,
            cache: None,
        })
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        ops::conv2d_forward(x, &self.weight, &self.bias, self.stride)
    }

    pub fn forward_train(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.forward(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let x = take_cache(&mut self.cache, &self.weight.name)?;
        let g = ops::conv2d_backward(&x, &self.weight, self.stride, grad_out)?;
        self.weight.accumulate(&g.weight)?;
        self.bias.accumulate(&g.bias)?;
        Ok(g.input)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: Stride,
    cache: Option<Tensor4>,
}

impl ConvTranspose2d {
    pub fn new<R: Rng>(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: Kernel,
        stride: Stride,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = c_in * kernel.h * kernel.w;
        let len = c_out * fan_in;
        Ok(Self {
            weight: Param::new(
                format!("{name}.weight"),
                vec![c_in, c_out, kernel.h, kernel.w],
                fan_in_uniform(rng, len, fan_in),
            )?,
            bias: Param::filled(format!("{name}.bias"), vec![c_out], 0.0)?,
            stride,
            cache: None,
        })
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        ops::deconv2d_forward(x, &self.weight, &self.bias, self.stride)
    }

    pub fn forward_train(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.forward(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let x = take_cache(&mut self.cache, &self.weight.name)?;
        let g = ops::deconv2d_backward(&x, &self.weight, self.stride, grad_out)?;
        self.weight.accumulate(&g.weight)?;
        self.bias.accumulate(&g.bias)?;
        Ok(g.input)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub state: BatchNormState,
    cache: Option<Tensor4>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: Param::filled(format!("{name}.gamma"), vec![channels], 1.0)?,
            beta: Param::filled(format!("{name}.beta"), vec![channels], 0.0)?,
            state: BatchNormState::new(channels),
            cache: None,
        })
    }

    /// Eval-mode normalization with the running statistics.
    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        ops::batchnorm_eval(x, &self.gamma, &self.beta, &self.state)
    }

    pub fn forward_train(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = ops::batchnorm_forward(x, &self.gamma, &self.beta, &mut self.state, true)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let x = take_cache(&mut self.cache, &self.gamma.name)?;
        let g = ops::batchnorm_backward(&x, &self.gamma, self.state.eps, grad_out)?;
        self.gamma.accumulate(&g.gamma)?;
        self.beta.accumulate(&g.beta)?;
        Ok(g.input)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.gamma, &self.beta]
    }
}

pub const PRELU_INIT: f32 = 0.25;

#[derive(Clone, Debug)]
pub struct Prelu {
    pub alpha: Param,
    cache: Option<Tensor4>,
}

impl Prelu {
    pub fn new(name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            alpha: Param::filled(format!("{name}.alpha"), vec![channels], PRELU_INIT)?,
            cache: None,
        })
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        ops::prelu_forward(x, &self.alpha)
    }

    pub fn forward_train(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.forward(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let x = take_cache(&mut self.cache, &self.alpha.name)?;
        let g = ops::prelu_backward(&x, &self.alpha, grad_out)?;
        self.alpha.accumulate(&g.alpha)?;
        Ok(g.input)
    }
}
