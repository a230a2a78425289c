use crate::error::{Error, Result};

/// Dot product accumulated in `f64`.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    let norm = dot(v, v).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot L2-normalize a vector of norm {norm}"
        )));
    }
    Ok(v.iter().map(|&x| (x as f64 / norm) as f32).collect())
}
