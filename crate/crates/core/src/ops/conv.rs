use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::param::Param;
use crate::tensor::{Dims4, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Kernel {
    pub h: usize,
    pub w: usize,
}

impl Kernel {
    pub const fn new(h: usize, w: usize) -> Self {
        Self { h, w }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stride {
    pub h: usize,
    pub w: usize,
}

impl Stride {
    pub const fn new(h: usize, w: usize) -> Self {
        Self { h, w }
    }
}

/// Output extent of a valid (unpadded) strided convolution along one axis,
/// or `None` when the kernel does not fit.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || kernel > input {
        return None;
    }
    Some((input - kernel) / stride + 1)
}

pub fn deconv_output_extent(input: usize, kernel: usize, stride: usize) -> usize {
    (input - 1) * stride + kernel
}

/// Gradients of a convolution-like layer with respect to its input, weight
/// and bias.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Shared geometry: a "wide" tensor with `wide_c` channels at full spatial
/// size and a "narrow" tensor with `narrow_c` channels at strided size. The
/// weight layout is `[narrow_c][wide_c][kh][kw]` for both convolution and
/// transposed convolution, which makes one the exact adjoint of the other.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    wide_c: usize,
    narrow_c: usize,
    kernel: Kernel,
    stride: Stride,
    wide_h: usize,
    wide_w: usize,
    narrow_h: usize,
    narrow_w: usize,
}

impl Geometry {
    fn wide_dims(&self) -> Dims4 {
        Dims4::new(self.n, self.wide_c, self.wide_h, self.wide_w)
    }

    fn narrow_dims(&self) -> Dims4 {
        Dims4::new(self.n, self.narrow_c, self.narrow_h, self.narrow_w)
    }

    fn kernel_len(&self) -> usize {
        self.kernel.h * self.kernel.w
    }
}

fn weight_kernel(weight: &Param, what: &str) -> Result<(usize, usize, Kernel)> {
    match weight.shape[..] {
        [a, b, kh, kw] if kh > 0 && kw > 0 => Ok((a, b, Kernel::new(kh, kw))),
        _ => Err(Error::Shape(format!(
            "{what}: weight {} must be rank 4, got shape {:?}",
            weight.name, weight.shape
        ))),
    }
}

fn check_stride(stride: Stride, what: &str) -> Result<()> {
    if stride.h == 0 || stride.w == 0 {
        return Err(Error::Config(format!("{what}: stride must be positive")));
    }
    Ok(())
}

fn check_bias(bias: &Param, channels: usize, what: &str) -> Result<()> {
    if bias.len() != channels {
        return Err(Error::Shape(format!(
            "{what}: bias {} has {} entries for {channels} output channels",
            bias.name,
            bias.len()
        )));
    }
    Ok(())
}

fn conv_geometry(input: Dims4, weight: &Param, stride: Stride) -> Result<Geometry> {
    check_stride(stride, "conv2d")?;
    let (c_out, c_in, kernel) = weight_kernel(weight, "conv2d")?;
    if c_in != input.c {
        return Err(Error::Shape(format!(
            "conv2d: weight expects {c_in} input channels, input {input} has {}",
            input.c
        )));
    }
    let oh = conv_output_extent(input.h, kernel.h, stride.h).ok_or_else(|| {
        Error::Shape(format!(
            "conv2d: kernel height {} exceeds input height {}",
            kernel.h, input.h
        ))
    })?;
    let ow = conv_output_extent(input.w, kernel.w, stride.w).ok_or_else(|| {
        Error::Shape(format!(
            "conv2d: kernel width {} exceeds input width {}",
            kernel.w, input.w
        ))
    })?;
    Ok(Geometry {
        n: input.n,
        wide_c: c_in,
        narrow_c: c_out,
        kernel,
        stride,
        wide_h: input.h,
        wide_w: input.w,
        narrow_h: oh,
        narrow_w: ow,
    })
}

fn deconv_geometry(input: Dims4, weight: &Param, stride: Stride) -> Result<Geometry> {
    check_stride(stride, "deconv2d")?;
    let (c_in, c_out, kernel) = weight_kernel(weight, "deconv2d")?;
    if c_in != input.c {
        return Err(Error::Shape(format!(
            "deconv2d: weight expects {c_in} input channels, input {input} has {}",
            input.c
        )));
    }
    Ok(Geometry {
        n: input.n,
        wide_c: c_out,
        narrow_c: c_in,
        kernel,
        stride,
        wide_h: deconv_output_extent(input.h, kernel.h, stride.h),
        wide_w: deconv_output_extent(input.w, kernel.w, stride.w),
        narrow_h: input.h,
        narrow_w: input.w,
    })
}

/// Unfolds one wide sample (`wide_c × wide_h × wide_w`) into a
/// `[wide_c·kh·kw][narrow_h·narrow_w]` column matrix.
fn im2col(wide: &[f32], g: &Geometry) -> Vec<f32> {
    let plane_in = g.wide_h * g.wide_w;
    let plane_out = g.narrow_h * g.narrow_w;
    let mut cols = vec![0.0f32; g.wide_c * g.kernel_len() * plane_out];
    let mut rows = cols.chunks_mut(plane_out);
    for a in 0..g.wide_c {
        let src = &wide[a * plane_in..][..plane_in];
        for ky in 0..g.kernel.h {
            for kx in 0..g.kernel.w {
                let dst = rows.next().unwrap();
                for oy in 0..g.narrow_h {
                    let row = &src[(oy * g.stride.h + ky) * g.wide_w + kx..];
                    let out = &mut dst[oy * g.narrow_w..][..g.narrow_w];
                    if g.stride.w == 1 {
                        out.copy_from_slice(&row[..g.narrow_w]);
                    } else {
                        for (ox, o) in out.iter_mut().enumerate() {
                            *o = row[ox * g.stride.w];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// `acc += alpha · x`, widened to `f64`.
#[inline]
fn axpy(acc: &mut [f64], alpha: f64, x: &[f32]) {
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += alpha * v as f64;
    }
}

/// Dot product in `f64` with eight interleaved partial sums combined in a
/// fixed order.
#[inline]
fn dot_lanes(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] += x[i] as f64 * y[i] as f64;
        }
    }
    let mut tail = 0.0f64;
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x as f64 * y as f64;
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
        + tail
}

/// narrow[n][b][oy][ox] = Σ_a Σ_ky Σ_kx w[b][a][ky][kx] · wide[n][a][oy·sh+ky][ox·sw+kx]
fn correlate(wide: &[f32], weight: &[f32], g: &Geometry) -> Vec<f32> {
    let plane_out = g.narrow_h * g.narrow_w;
    let plane_in = g.wide_h * g.wide_w;
    let k_len = g.wide_c * g.kernel_len();
    let mut out = vec![0.0f32; g.n * g.narrow_c * plane_out];
    for (n, out_n) in out.chunks_mut(g.narrow_c * plane_out).enumerate() {
        let cols = im2col(&wide[n * g.wide_c * plane_in..][..g.wide_c * plane_in], g);
        out_n
            .par_chunks_mut(plane_out)
            .enumerate()
            .for_each(|(b, dst)| {
                let mut acc = vec![0.0f64; plane_out];
                let wb = &weight[b * k_len..][..k_len];
                for (k, col) in cols.chunks_exact(plane_out).enumerate() {
                    axpy(&mut acc, wb[k] as f64, col);
                }
                for (d, s) in dst.iter_mut().zip(&acc) {
                    *d = *s as f32;
                }
            });
    }
    out
}

/// Adjoint of [`correlate`]: wide[n][a][oy·sh+ky][ox·sw+kx] += w[b][a][ky][kx] · narrow[n][b][oy][ox]
fn scatter(narrow: &[f32], weight: &[f32], g: &Geometry) -> Vec<f32> {
    let plane_out = g.narrow_h * g.narrow_w;
    let plane_in = g.wide_h * g.wide_w;
    let klen = g.kernel_len();
    let k_len = g.wide_c * klen;
    let mut out = vec![0.0f32; g.n * g.wide_c * plane_in];
    for (n, out_n) in out.chunks_mut(g.wide_c * plane_in).enumerate() {
        let nar = &narrow[n * g.narrow_c * plane_out..][..g.narrow_c * plane_out];
        out_n
            .par_chunks_mut(plane_in)
            .enumerate()
            .for_each(|(a, dst)| {
                let mut acc = vec![0.0f64; plane_in];
                let mut col = vec![0.0f64; plane_out];
                for ky in 0..g.kernel.h {
                    for kx in 0..g.kernel.w {
                        let k = a * klen + ky * g.kernel.w + kx;
                        col.fill(0.0);
                        for (b, src) in nar.chunks_exact(plane_out).enumerate() {
                            axpy_f64(&mut col, weight[b * k_len + k] as f64, src);
                        }
                        for oy in 0..g.narrow_h {
                            let base = (oy * g.stride.h + ky) * g.wide_w + kx;
                            let crow = &col[oy * g.narrow_w..][..g.narrow_w];
                            for (ox, &v) in crow.iter().enumerate() {
                                acc[base + ox * g.stride.w] += v;
                            }
                        }
                    }
                }
                for (d, s) in dst.iter_mut().zip(&acc) {
                    *d = *s as f32;
                }
            });
    }
    out
}

#[inline]
fn axpy_f64(acc: &mut [f64], alpha: f64, x: &[f32]) {
    axpy(acc, alpha, x)
}

/// dw[b][a][ky][kx] = Σ_n Σ_oy Σ_ox narrow[n][b][oy][ox] · wide[n][a][oy·sh+ky][ox·sw+kx]
fn weight_grad(wide: &[f32], narrow: &[f32], g: &Geometry) -> Vec<f32> {
    let plane_out = g.narrow_h * g.narrow_w;
    let plane_in = g.wide_h * g.wide_w;
    let k_len = g.wide_c * g.kernel_len();
    let mut acc = vec![0.0f64; g.narrow_c * k_len];
    for n in 0..g.n {
        let cols = im2col(&wide[n * g.wide_c * plane_in..][..g.wide_c * plane_in], g);
        let nar = &narrow[n * g.narrow_c * plane_out..][..g.narrow_c * plane_out];
        acc.par_chunks_mut(k_len).enumerate().for_each(|(b, dst)| {
            let y = &nar[b * plane_out..][..plane_out];
            for (d, col) in dst.iter_mut().zip(cols.chunks_exact(plane_out)) {
                *d += dot_lanes(y, col);
            }
        });
    }
    acc.into_iter().map(|v| v as f32).collect()
}

fn channel_sums(t: &Tensor4) -> Vec<f32> {
    let d = t.dims();
    let plane = d.plane();
    (0..d.c)
        .map(|c| {
            let mut s = 0.0f64;
            for n in 0..d.n {
                let start = (n * d.c + c) * plane;
                s += t.data()[start..start + plane]
                    .iter()
                    .map(|&v| v as f64)
                    .sum::<f64>();
            }
            s as f32
        })
        .collect()
}

fn add_bias(data: &mut [f32], bias: &[f32], dims: Dims4) {
    let plane = dims.plane();
    for (i, chunk) in data.chunks_mut(plane).enumerate() {
        let b = bias[i % dims.c];
        for v in chunk {
            *v += b;
        }
    }
}

/// Valid cross-correlation. `weight` is `[c_out, c_in, kh, kw]`, `bias` has
/// `c_out` entries.
pub fn conv2d_forward(
    input: &Tensor4,
    weight: &Param,
    bias: &Param,
    stride: Stride,
) -> Result<Tensor4> {
    let g = conv_geometry(input.dims(), weight, stride)?;
    check_bias(bias, g.narrow_c, "conv2d")?;
    let mut out = correlate(input.data(), &weight.value, &g);
    add_bias(&mut out, &bias.value, g.narrow_dims());
    Tensor4::from_vec(g.narrow_dims(), out)
}

pub fn conv2d_backward(
    input: &Tensor4,
    weight: &Param,
    stride: Stride,
    grad_out: &Tensor4,
) -> Result<ConvGrads> {
    let g = conv_geometry(input.dims(), weight, stride)?;
    grad_out.ensure_dims(g.narrow_dims(), "conv2d_backward grad_out")?;
    Ok(ConvGrads {
        input: Tensor4::from_vec(g.wide_dims(), scatter(grad_out.data(), &weight.value, &g))?,
        weight: weight_grad(input.data(), grad_out.data(), &g),
        bias: channel_sums(grad_out),
    })
}

/// Transposed convolution. `weight` is `[c_in, c_out, kh, kw]`; with zero
/// bias this is the exact adjoint of [`conv2d_forward`] under the same weight.
pub fn deconv2d_forward(
    input: &Tensor4,
    weight: &Param,
    bias: &Param,
    stride: Stride,
) -> Result<Tensor4> {
    let g = deconv_geometry(input.dims(), weight, stride)?;
    check_bias(bias, g.wide_c, "deconv2d")?;
    let mut out = scatter(input.data(), &weight.value, &g);
    add_bias(&mut out, &bias.value, g.wide_dims());
    Tensor4::from_vec(g.wide_dims(), out)
}

pub fn deconv2d_backward(
    input: &Tensor4,
    weight: &Param,
    stride: Stride,
    grad_out: &Tensor4,
) -> Result<ConvGrads> {
    let g = deconv_geometry(input.dims(), weight, stride)?;
    grad_out.ensure_dims(g.wide_dims(), "deconv2d_backward grad_out")?;
    Ok(ConvGrads {
        input: Tensor4::from_vec(g.narrow_dims(), correlate(grad_out.data(), &weight.value, &g))?,
        weight: weight_grad(grad_out.data(), input.data(), &g),
        bias: channel_sums(grad_out),
    })
}
