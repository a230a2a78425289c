use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Mean squared error averaged over the `c·h·w` elements of each sample and
/// then over the batch. Returns the loss and its gradient with respect to
/// `prediction`.
pub fn mse_loss(prediction: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    let d = prediction.dims();
    if target.dims() != d {
        return Err(Error::Shape(format!(
            "mse_loss: prediction {d} vs target {}",
            target.dims()
        )));
    }
    let total = d.len() as f64;
    let mut sum = 0.0f64;
    let grad: Vec<f32> = prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let diff = p as f64 - t as f64;
            sum += diff * diff;
            (2.0 * diff / total) as f32
        })
        .collect();
    Ok((sum / total, Tensor4::from_vec(d, grad)?))
}
