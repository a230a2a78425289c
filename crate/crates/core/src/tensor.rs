use std::fmt;

use crate::error::{Error, Result};

/// Batch, channel, height and width extents of a [`Tensor4`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one batch sample.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_batch(self, n: usize) -> Self {
        Self { n, ..self }
    }
}

impl fmt::Display for Dims4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Channel, height and width of a single feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MapDims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl MapDims {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(self, n: usize) -> Dims4 {
        Dims4::new(n, self.c, self.h, self.w)
    }
}

impl fmt::Display for MapDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

impl From<Dims4> for MapDims {
    fn from(d: Dims4) -> Self {
        Self::new(d.c, d.h, d.w)
    }
}

/// Dense NCHW array of `f32`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: Dims4,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(dims: Dims4) -> Result<Self> {
        check_positive(dims)?;
        Ok(Self {
            dims,
            data: vec![0.0; dims.len()],
        })
    }

    pub fn from_vec(dims: Dims4, data: Vec<f32>) -> Result<Self> {
        check_positive(dims)?;
        if data.len() != dims.len() {
            return Err(Error::Shape(format!(
                "tensor {dims} needs {} elements, got {}",
                dims.len(),
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims4 {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let s = self.dims.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        let d = self.dims;
        self.data[((n * d.c + c) * d.h + h) * d.w + w]
    }

    /// Stacks equally shaped samples (each `c·h·w` long) into one batch.
    pub fn stack<'a, I>(sample_dims: Dims4, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        let per = sample_dims.sample_len();
        let mut data = Vec::new();
        let mut n = 0;
        for s in samples {
            if s.len() != per {
                return Err(Error::Shape(format!(
                    "sample {n} has {} elements, expected {per}",
                    s.len()
                )));
            }
            data.extend_from_slice(s);
            n += 1;
        }
        Self::from_vec(sample_dims.with_batch(n), data)
    }

    pub(crate) fn ensure_dims(&self, expected: Dims4, what: &str) -> Result<()> {
        if self.dims != expected {
            return Err(Error::Shape(format!(
                "{what}: expected {expected}, got {}",
                self.dims
            )));
        }
        Ok(())
    }
}

fn check_positive(dims: Dims4) -> Result<()> {
    if dims.n == 0 || dims.c == 0 || dims.h == 0 || dims.w == 0 {
        return Err(Error::Shape(format!(
            "tensor dims must be strictly positive, got {dims}"
        )));
    }
    Ok(())
}
