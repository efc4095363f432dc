//! Convolution and dense layers with explicit forward/backward passes.
//!
//! Convolutions run as im2col plus a matrix product so the heavy lifting
//! lands in the gemm kernel; backward reuses the cached column matrix.

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::distributions::uniform::SampleUniform;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Element type the network is generic over: f32 for training and
/// inference, f64 for finite-difference verification.
pub trait Scalar: ndarray::NdFloat + SampleUniform {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// 2-D convolution, stride 1, symmetric zero padding.
/// Weights are laid out `[out_ch, in_ch, kh, kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<F> {
    pub w: Array4<F>,
    pub b: Array1<F>,
    pub pad: usize,
}

pub struct ConvCache<F> {
    cols: Array2<F>,
    in_dim: (usize, usize, usize),
    out_hw: (usize, usize),
}

/// A convolution's post-activation output together with its backward cache.
pub struct ConvCacheBundle<F> {
    pub out: Array3<F>,
    pub cache: ConvCache<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad<F> {
    pub w: Array4<F>,
    pub b: Array1<F>,
}

impl<F: Scalar> Conv2d<F> {
    pub fn zeros(out_ch: usize, in_ch: usize, k: usize, pad: usize) -> Self {
        Conv2d {
            w: Array4::zeros((out_ch, in_ch, k, k)),
            b: Array1::zeros(out_ch),
            pad,
        }
    }

    pub fn fan_in(&self) -> usize {
        let (_, c, kh, kw) = self.w.dim();
        c * kh * kw
    }

    /// Uniform init over +-1/sqrt(fan_in) for weights and bias.
    pub fn init_fan_in(&mut self, rng: &mut ChaCha8Rng) {
        let bound = 1.0 / (self.fan_in() as f64).sqrt();
        for v in self.w.iter_mut() {
            *v = F::from_f64(rng.gen_range(-bound..bound));
        }
        for v in self.b.iter_mut() {
            *v = F::from_f64(rng.gen_range(-bound..bound));
        }
    }

    pub fn out_hw(&self, in_hw: (usize, usize)) -> (usize, usize) {
        let (_, _, kh, kw) = self.w.dim();
        (
            in_hw.0 + 2 * self.pad - kh + 1,
            in_hw.1 + 2 * self.pad - kw + 1,
        )
    }

    pub fn forward(&self, x: &Array3<F>) -> Array3<F> {
        let (y, _) = self.forward_cached(x);
        y
    }

    pub fn forward_cached(&self, x: &Array3<F>) -> (Array3<F>, ConvCache<F>) {
        let (k_out, _, kh, kw) = self.w.dim();
        let in_dim = x.dim();
        let (oh, ow) = self.out_hw((in_dim.1, in_dim.2));
        let cols = im2col(x, kh, kw, self.pad, (oh, ow));
        let w2d = self
            .w
            .view()
            .into_shape((k_out, self.fan_in()))
            .expect("conv weights are contiguous");
        let mut out2d = w2d.dot(&cols);
        out2d += &self.b.view().insert_axis(Axis(1));
        let y = out2d
            .into_shape((k_out, oh, ow))
            .expect("forward output is contiguous");
        (
            y,
            ConvCache {
                cols,
                in_dim,
                out_hw: (oh, ow),
            },
        )
    }

    /// Returns the parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&self, g_out: &Array3<F>, cache: &ConvCache<F>) -> (ConvGrad<F>, Array3<F>) {
        let (k_out, _, kh, kw) = self.w.dim();
        let (oh, ow) = cache.out_hw;
        let g2d = g_out
            .view()
            .into_shape((k_out, oh * ow))
            .expect("output gradient is contiguous");
        let gb = g2d.sum_axis(Axis(1));
        let gw2d = g2d.dot(&cache.cols.t());
        let gw = gw2d
            .into_shape(self.w.dim())
            .expect("weight gradient is contiguous");
        let w2d = self
            .w
            .view()
            .into_shape((k_out, self.fan_in()))
            .expect("conv weights are contiguous");
        let g_cols = w2d.t().dot(&g2d);
        let gx = col2im(&g_cols, cache.in_dim, kh, kw, self.pad, (oh, ow));
        (ConvGrad { w: gw, b: gb }, gx)
    }
}

/// Unfolds `x` into a `[in_ch * kh * kw, oh * ow]` matrix; padded positions
/// stay zero.
fn im2col<F: Scalar>(
    x: &Array3<F>,
    kh: usize,
    kw: usize,
    pad: usize,
    out_hw: (usize, usize),
) -> Array2<F> {
    let (d, h, w) = x.dim();
    let (oh, ow) = out_hw;
    let mut cols = Array2::zeros((d * kh * kw, oh * ow));
    for c in 0..d {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = ox as isize + kx as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cols[[row, oy * ow + ox]] = x[[c, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back onto the input.
fn col2im<F: Scalar>(
    g_cols: &Array2<F>,
    in_dim: (usize, usize, usize),
    kh: usize,
    kw: usize,
    pad: usize,
    out_hw: (usize, usize),
) -> Array3<F> {
    let (d, h, w) = in_dim;
    let (oh, ow) = out_hw;
    let mut gx = Array3::zeros(in_dim);
    for c in 0..d {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = ox as isize + kx as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        gx[[c, iy as usize, ix as usize]] += g_cols[[row, oy * ow + ox]];
                    }
                }
            }
        }
    }
    gx
}

/// Fully connected layer; weights are `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Dense {
            w: Array2::zeros((n_out, n_in)),
            b: Array1::zeros(n_out),
        }
    }

    pub fn init_fan_in(&mut self, rng: &mut ChaCha8Rng) {
        let bound = 1.0 / (self.w.dim().1 as f64).sqrt();
        for v in self.w.iter_mut() {
            *v = F::from_f64(rng.gen_range(-bound..bound));
        }
        for v in self.b.iter_mut() {
            *v = F::from_f64(rng.gen_range(-bound..bound));
        }
    }

    pub fn forward(&self, x: &Array1<F>) -> Array1<F> {
        self.w.dot(x) + &self.b
    }

    pub fn backward(&self, g_out: &Array1<F>, x: &Array1<F>) -> (DenseGrad<F>, Array1<F>) {
        let (n_out, n_in) = self.w.dim();
        let mut gw = Array2::zeros((n_out, n_in));
        for (o, &g) in g_out.iter().enumerate() {
            for (i, &xv) in x.iter().enumerate() {
                gw[[o, i]] = g * xv;
            }
        }
        let gx = self.w.t().dot(g_out);
        (
            DenseGrad {
                w: gw,
                b: g_out.clone(),
            },
            gx,
        )
    }
}

/// In-place rectifier.
pub fn relu<F: Scalar, D: ndarray::Dimension>(x: &mut ndarray::Array<F, D>) {
    x.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

/// Masks a gradient by where the rectifier passed. `out` must be the
/// post-activation values of the same layer.
pub fn relu_backward<F: Scalar, D: ndarray::Dimension>(
    g: &mut ndarray::Array<F, D>,
    out: &ndarray::Array<F, D>,
) {
    g.zip_mut_with(out, |gv, &ov| {
        if ov <= F::zero() {
            *gv = F::zero();
        }
    });
}
