use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ConvTranspose2d, Prelu};
use crate::ops::{self, BatchNormState, LayerNormConfig};
use crate::param::Param;
use crate::tensor::{MapDims, Tensor4};

/// Conv2d → BatchNorm → PReLU.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub act: Prelu,
}

impl EncoderBlock {
    fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.act.forward(&self.bn.forward(&self.conv.forward(x)?)?)
    }

    fn forward_train(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.conv.forward_train(x)?;
        let y = self.bn.forward_train(&y)?;
        self.act.forward_train(&y)
    }

    fn backward(&mut self, g: &Tensor4) -> Result<Tensor4> {
        let g = self.act.backward(g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

/// ConvTranspose2d, followed by BatchNorm → PReLU except on the output block.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub deconv: ConvTranspose2d,
    pub norm: Option<(BatchNorm2d, Prelu)>,
}

impl DecoderBlock {
    fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.deconv.forward(x)?;
        match &self.norm {
            Some((bn, act)) => act.forward(&bn.forward(&y)?),
            None => Ok(y),
        }
    }

    fn forward_train(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.deconv.forward_train(x)?;
        match &mut self.norm {
            Some((bn, act)) => {
                let y = bn.forward_train(&y)?;
                act.forward_train(&y)
            }
            None => Ok(y),
        }
    }

    fn backward(&mut self, g: &Tensor4) -> Result<Tensor4> {
        let g = match &mut self.norm {
            Some((bn, act)) => {
                let g = act.backward(g)?;
                bn.backward(&g)?
            }
            None => g.clone(),
        };
        self.deconv.backward(&g)
    }
}

#[derive(Clone, Debug)]
pub struct CaeModel {
    pub spec: ArchSpec,
    pub encoder: Vec<EncoderBlock>,
    pub decoder: Vec<DecoderBlock>,
    pub layernorm: LayerNormConfig,
    pub rng_seed: u64,
}

/// Builds the autoencoder with seeded fan-in uniform weights, zero biases,
/// unit batch-norm scale and PReLU slopes of 0.25.
pub fn build_model(spec: ArchSpec, seed: u64) -> Result<CaeModel> {
    let stages = spec.stage_dims()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut encoder = Vec::with_capacity(3);
    for (i, b) in spec.blocks.iter().enumerate() {
        let name = format!("encoder.{i}");
        let (c_in, c_out) = (stages[i].c, stages[i + 1].c);
        encoder.push(EncoderBlock {
            conv: Conv2d::new(&format!("{name}.conv"), c_in, c_out, b.kernel, b.stride, &mut rng)?,
            bn: BatchNorm2d::new(&format!("{name}.bn"), c_out)?,
            act: Prelu::new(&format!("{name}.prelu"), c_out)?,
        });
    }
    let mut decoder = Vec::with_capacity(3);
    for (j, i) in (0..3).rev().enumerate() {
        let name = format!("decoder.{j}");
        let b = spec.blocks[i];
        let (c_in, c_out) = (stages[i + 1].c, stages[i].c);
        let norm = if i > 0 {
            Some((
                BatchNorm2d::new(&format!("{name}.bn"), c_out)?,
                Prelu::new(&format!("{name}.prelu"), c_out)?,
            ))
        } else {
            None
        };
        decoder.push(DecoderBlock {
            deconv: ConvTranspose2d::new(
                &format!("{name}.deconv"),
                c_in,
                c_out,
                b.kernel,
                b.stride,
                &mut rng,
            )?,
            norm,
        });
    }
    Ok(CaeModel {
        spec,
        encoder,
        decoder,
        layernorm: LayerNormConfig::default(),
        rng_seed: seed,
    })
}

impl CaeModel {
    pub fn descriptor_len(&self) -> usize {
        self.spec
            .descriptor_len()
            .expect("spec validated at construction")
    }

    pub fn check_input(&self, f: &Tensor4) -> Result<()> {
        let got = MapDims::from(f.dims());
        if got != self.spec.input {
            return Err(Error::Shape(format!(
                "feature maps are {got}, model expects {}",
                self.spec.input
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, f: &Tensor4) -> Result<Tensor4> {
        self.check_input(f)?;
        ops::layernorm(f, &self.layernorm)
    }

    /// Eval-mode encoder on already normalized input.
    pub fn encoder_forward(&self, x: &Tensor4) -> Result<Tensor4> {
        let mut y = self.encoder[0].forward(x)?;
        for block in &self.encoder[1..] {
            y = block.forward(&y)?;
        }
        Ok(y)
    }

    pub fn decoder_forward(&self, z: &Tensor4) -> Result<Tensor4> {
        let mut y = self.decoder[0].forward(z)?;
        for block in &self.decoder[1..] {
            y = block.forward(&y)?;
        }
        Ok(y)
    }

    /// Global descriptors: layer norm, encoder, flatten (channel-major then
    /// row-major), L2 normalization. One vector per batch sample.
    pub fn encode(&self, f: &Tensor4) -> Result<Vec<Vec<f32>>> {
        let z = self.encoder_forward(&self.normalize(f)?)?;
        (0..z.dims().n)
            .map(|i| ops::l2_normalize(z.sample(i)))
            .collect()
    }

    /// Eval-mode reconstruction and its loss against the normalized input.
    pub fn reconstruct(&self, f: &Tensor4) -> Result<(Tensor4, f64)> {
        let target = self.normalize(f)?;
        let y = self.decoder_forward(&self.encoder_forward(&target)?)?;
        let (loss, _) = ops::mse_loss(&y, &target)?;
        Ok((y, loss))
    }

    /// Training-mode reconstruction: batch statistics, running-stat updates
    /// and activation caching for [`CaeModel::backward`].
    pub fn reconstruct_train(&mut self, f: &Tensor4) -> Result<(Tensor4, f64, Tensor4)> {
        let target = self.normalize(f)?;
        let y = self.forward_train(&target)?;
        let (loss, grad) = ops::mse_loss(&y, &target)?;
        Ok((y, loss, grad))
    }

    pub fn forward_train(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let mut y = x.clone();
        for block in &mut self.encoder {
            y = block.forward_train(&y)?;
        }
        for block in &mut self.decoder {
            y = block.forward_train(&y)?;
        }
        Ok(y)
    }

    /// Backpropagates `grad` through the whole network, accumulating into
    /// every parameter gradient.
    pub fn backward(&mut self, grad: &Tensor4) -> Result<Tensor4> {
        let mut g = grad.clone();
        for block in self.decoder.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        for block in self.encoder.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        Ok(g)
    }

    /// Parameters in declaration order: encoder blocks then decoder blocks,
    /// each as weight, bias, [gamma, beta, alpha].
    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for b in &self.encoder {
            out.extend(b.conv.params());
            out.extend(b.bn.params());
            out.push(&b.act.alpha);
        }
        for b in &self.decoder {
            out.extend(b.deconv.params());
            if let Some((bn, act)) = &b.norm {
                out.extend(bn.params());
                out.push(&act.alpha);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for b in &mut self.encoder {
            out.extend(b.conv.params_mut());
            out.extend(b.bn.params_mut());
            out.push(&mut b.act.alpha);
        }
        for b in &mut self.decoder {
            out.extend(b.deconv.params_mut());
            if let Some((bn, act)) = &mut b.norm {
                out.extend(bn.params_mut());
                out.push(&mut act.alpha);
            }
        }
        out
    }

    /// Batch-norm running statistics with their layer names, in declaration
    /// order.
    pub fn bn_states(&self) -> Vec<(&str, &BatchNormState)> {
        let enc = self.encoder.iter().map(|b| (b.bn.gamma.name.as_str(), &b.bn.state));
        let dec = self
            .decoder
            .iter()
            .filter_map(|b| b.norm.as_ref())
            .map(|(bn, _)| (bn.gamma.name.as_str(), &bn.state));
        enc.chain(dec).collect()
    }

    pub fn bn_states_mut(&mut self) -> Vec<&mut BatchNormState> {
        let enc = self.encoder.iter_mut().map(|b| &mut b.bn.state);
        let dec = self
            .decoder
            .iter_mut()
            .filter_map(|b| b.norm.as_mut())
            .map(|(bn, _)| &mut bn.state);
        enc.chain(dec).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
