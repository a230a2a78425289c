use crate::error::{Error, Result};

/// A trainable array together with its gradient and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step_count: u64,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let numel: usize = shape.iter().product();
        if shape.is_empty() || numel == 0 {
            return Err(Error::Shape(format!("param {name}: empty shape {shape:?}")));
        }
        if value.len() != numel {
            return Err(Error::Shape(format!(
                "param {name}: shape {shape:?} needs {numel} values, got {}",
                value.len()
            )));
        }
        Ok(Self {
            name,
            shape,
            grad: vec![0.0; numel],
            m: vec![0.0; numel],
            v: vec![0.0; numel],
            value,
            step_count: 0,
        })
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, fill: f32) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(name, shape, vec![fill; numel])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Adds `delta` into the gradient buffer.
    pub fn accumulate(&mut self, delta: &[f32]) -> Result<()> {
        if delta.len() != self.grad.len() {
            return Err(Error::Shape(format!(
                "param {}: gradient of length {} for {} values",
                self.name,
                delta.len(),
                self.grad.len()
            )));
        }
        for (g, d) in self.grad.iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
