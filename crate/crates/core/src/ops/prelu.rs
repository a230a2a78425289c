use crate::error::{Error, Result};
use crate::param::Param;
use crate::tensor::Tensor4;

#[derive(Clone, Debug)]
pub struct PreluGrads {
    pub input: Tensor4,
    pub alpha: Vec<f32>,
}

fn check_alpha(input: &Tensor4, alpha: &Param) -> Result<()> {
    if alpha.len() != input.dims().c {
        return Err(Error::Shape(format!(
            "prelu: alpha has {} entries for {} channels",
            alpha.len(),
            input.dims().c
        )));
    }
    Ok(())
}

/// `x` for `x > 0`, `alpha[c]·x` otherwise (including `x == 0`).
pub fn prelu_forward(input: &Tensor4, alpha: &Param) -> Result<Tensor4> {
    check_alpha(input, alpha)?;
    let d = input.dims();
    let mut out = input.data().to_vec();
    for (i, chunk) in out.chunks_mut(d.plane()).enumerate() {
        let a = alpha.value[i % d.c];
        for v in chunk {
            if *v <= 0.0 {
                *v *= a;
            }
        }
    }
    Tensor4::from_vec(d, out)
}

pub fn prelu_backward(input: &Tensor4, alpha: &Param, grad_out: &Tensor4) -> Result<PreluGrads> {
    check_alpha(input, alpha)?;
    let d = input.dims();
    grad_out.ensure_dims(d, "prelu_backward grad_out")?;
    let plane = d.plane();
    let mut grad_in = vec![0.0f32; d.len()];
    let mut grad_alpha = vec![0.0f64; d.c];
    for (i, (xs, gs)) in input
        .data()
        .chunks(plane)
        .zip(grad_out.data().chunks(plane))
        .enumerate()
    {
        let c = i % d.c;
        let a = alpha.value[c];
        let dst = &mut grad_in[i * plane..(i + 1) * plane];
        for ((dx, &x), &g) in dst.iter_mut().zip(xs).zip(gs) {
            if x > 0.0 {
                *dx = g;
            } else {
                *dx = g * a;
                grad_alpha[c] += g as f64 * x as f64;
            }
        }
    }
    Ok(PreluGrads {
        input: Tensor4::from_vec(d, grad_in)?,
        alpha: grad_alpha.into_iter().map(|v| v as f32).collect(),
    })
}
