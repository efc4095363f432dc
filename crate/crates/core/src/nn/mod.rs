//! The Q-network: a fixed convolutional architecture mapping a drone's
//! `3 x 20 x 20` observation tensor to five action values, with explicit
//! backpropagation, a rectified-Adam optimizer, binary checkpoints, and an
//! instrumented per-layer operation counter.

mod checkpoint;
mod layer;
mod opcount;
mod radam;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use layer::{relu, relu_backward, Conv2d, ConvGrad, Dense, DenseGrad, Scalar};
pub use opcount::{forward_counted, LayerOps, OpCounts};
pub use radam::RAdam;

use ndarray::{Array1, Array3};
use rand_chacha::ChaCha8Rng;

use crate::coord::ACTIONS;
use crate::error::Error;
use crate::Result;

/// Observation window side the network is built for.
pub const WINDOW: usize = 20;
/// Observation channels: own position, peer positions, value estimate.
pub const IN_CHANNELS: usize = 3;
/// One Q-value per action.
pub const ACTION_COUNT: usize = ACTIONS.len();
/// Flattened size of the last convolution: 5 maps of 14 x 14.
const FLAT: usize = 5 * 14 * 14;
/// Number of parameter tensors (weights and biases of the five layers).
pub const TENSOR_COUNT: usize = 10;

/// Fixed five-layer architecture:
/// three convolutions (20@3x3 pad 1, 20@4x4, 5@4x4, each rectified)
/// followed by dense 980 -> 64 (rectified) and dense 64 -> 5.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<F> {
    pub conv1: Conv2d<F>,
    pub conv2: Conv2d<F>,
    pub conv3: Conv2d<F>,
    pub fc1: Dense<F>,
    pub fc2: Dense<F>,
}

/// Post-activation values kept from a forward pass for backpropagation.
pub struct ForwardCache<F> {
    c1: layer::ConvCacheBundle<F>,
    c2: layer::ConvCacheBundle<F>,
    c3: layer::ConvCacheBundle<F>,
    flat: Array1<F>,
    h1: Array1<F>,
    pub q: Array1<F>,
}

/// Gradients for every parameter tensor, in the same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub conv1: ConvGrad<F>,
    pub conv2: ConvGrad<F>,
    pub conv3: ConvGrad<F>,
    pub fc1: DenseGrad<F>,
    pub fc2: DenseGrad<F>,
}

impl<F: Scalar> QNetwork<F> {
    /// All parameters zero; used as the accumulator shape and in tests.
    pub fn zeros() -> Self {
        QNetwork {
            conv1: Conv2d::zeros(20, IN_CHANNELS, 3, 1),
            conv2: Conv2d::zeros(20, 20, 4, 0),
            conv3: Conv2d::zeros(5, 20, 4, 0),
            fc1: Dense::zeros(64, FLAT),
            fc2: Dense::zeros(ACTION_COUNT, 64),
        }
    }

    /// Fan-in-scaled uniform initialization, fully determined by the RNG
    /// stream.
    pub fn init(rng: &mut ChaCha8Rng) -> Self {
        let mut net = Self::zeros();
        net.conv1.init_fan_in(rng);
        net.conv2.init_fan_in(rng);
        net.conv3.init_fan_in(rng);
        net.fc1.init_fan_in(rng);
        net.fc2.init_fan_in(rng);
        net
    }

    pub fn parameter_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Architecture summary string; hashed into checkpoint fingerprints.
    pub fn descriptor() -> String {
        format!(
            "in{IN_CHANNELS}x{WINDOW}x{WINDOW};conv20@3x3p1/relu;conv20@4x4p0/relu;conv5@4x4p0/relu;dense{FLAT}->64/relu;dense64->{ACTION_COUNT}"
        )
    }

    fn check_input(&self, x: &Array3<F>) -> Result<()> {
        if x.dim() != (IN_CHANNELS, WINDOW, WINDOW) {
            return Err(Error::domain(format!(
                "observation tensor has shape {:?}, need ({IN_CHANNELS}, {WINDOW}, {WINDOW})",
                x.dim()
            )));
        }
        Ok(())
    }

    /// Q-values for one observation tensor.
    pub fn forward(&self, x: &Array3<F>) -> Result<Array1<F>> {
        self.check_input(x)?;
        let mut a1 = self.conv1.forward(x);
        relu(&mut a1);
        let mut a2 = self.conv2.forward(&a1);
        relu(&mut a2);
        let mut a3 = self.conv3.forward(&a2);
        relu(&mut a3);
        let flat = a3
            .into_shape(FLAT)
            .expect("conv output is contiguous")
            .to_owned();
        let mut h1 = self.fc1.forward(&flat);
        relu(&mut h1);
        Ok(self.fc2.forward(&h1))
    }

    /// Forward pass that keeps what backward needs.
    pub fn forward_cached(&self, x: &Array3<F>) -> Result<ForwardCache<F>> {
        self.check_input(x)?;
        let (mut a1, cache1) = self.conv1.forward_cached(x);
        relu(&mut a1);
        let (mut a2, cache2) = self.conv2.forward_cached(&a1);
        relu(&mut a2);
        let (mut a3, cache3) = self.conv3.forward_cached(&a2);
        relu(&mut a3);
        let flat = a3
            .view()
            .into_shape(FLAT)
            .expect("conv output is contiguous")
            .to_owned();
        let mut h1 = self.fc1.forward(&flat);
        relu(&mut h1);
        let q = self.fc2.forward(&h1);
        Ok(ForwardCache {
            c1: layer::ConvCacheBundle { out: a1, cache: cache1 },
            c2: layer::ConvCacheBundle { out: a2, cache: cache2 },
            c3: layer::ConvCacheBundle { out: a3, cache: cache3 },
            flat,
            h1,
            q,
        })
    }

    /// Backpropagates the squared temporal-difference loss
    /// `1/2 (Q(o)[action] - target)^2` for one sample. Only the taken
    /// action's output carries gradient. Returns the loss and all parameter
    /// gradients.
    pub fn backward(&self, cache: &ForwardCache<F>, action: usize, target: F) -> (F, Grads<F>) {
        let diff = cache.q[action] - target;
        let half = F::from_f64(0.5);
        let loss = half * diff * diff;

        let mut gq = Array1::zeros(ACTION_COUNT);
        gq[action] = diff;

        let (gfc2, mut gh1) = self.fc2.backward(&gq, &cache.h1);
        relu_backward(&mut gh1, &cache.h1);
        let (gfc1, gflat) = self.fc1.backward(&gh1, &cache.flat);
        let mut ga3 = gflat
            .into_shape(cache.c3.out.dim())
            .expect("flat gradient is contiguous");
        relu_backward(&mut ga3, &cache.c3.out);
        let (gc3, mut ga2) = self.conv3.backward(&ga3, &cache.c3.cache);
        relu_backward(&mut ga2, &cache.c2.out);
        let (gc2, mut ga1) = self.conv2.backward(&ga2, &cache.c2.cache);
        relu_backward(&mut ga1, &cache.c1.out);
        let (gc1, _gx) = self.conv1.backward(&ga1, &cache.c1.cache);

        (
            loss,
            Grads {
                conv1: gc1,
                conv2: gc2,
                conv3: gc3,
                fc1: gfc1,
                fc2: gfc2,
            },
        )
    }

    /// Parameter tensors as flat slices, in a fixed order shared with
    /// [`Grads::slices`] and the checkpoint layout.
    pub fn param_slices(&self) -> [&[F]; TENSOR_COUNT] {
        [
            self.conv1.w.as_slice().unwrap(),
            self.conv1.b.as_slice().unwrap(),
            self.conv2.w.as_slice().unwrap(),
            self.conv2.b.as_slice().unwrap(),
            self.conv3.w.as_slice().unwrap(),
            self.conv3.b.as_slice().unwrap(),
            self.fc1.w.as_slice().unwrap(),
            self.fc1.b.as_slice().unwrap(),
            self.fc2.w.as_slice().unwrap(),
            self.fc2.b.as_slice().unwrap(),
        ]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [F]; TENSOR_COUNT] {
        [
            self.conv1.w.as_slice_mut().unwrap(),
            self.conv1.b.as_slice_mut().unwrap(),
            self.conv2.w.as_slice_mut().unwrap(),
            self.conv2.b.as_slice_mut().unwrap(),
            self.conv3.w.as_slice_mut().unwrap(),
            self.conv3.b.as_slice_mut().unwrap(),
            self.fc1.w.as_slice_mut().unwrap(),
            self.fc1.b.as_slice_mut().unwrap(),
            self.fc2.w.as_slice_mut().unwrap(),
            self.fc2.b.as_slice_mut().unwrap(),
        ]
    }
}

impl QNetwork<f32> {
    /// Widens every parameter to f64; verification runs use this to compare
    /// against finite differences at full precision.
    pub fn to_f64(&self) -> QNetwork<f64> {
        fn widen<D: ndarray::Dimension>(a: &ndarray::Array<f32, D>) -> ndarray::Array<f64, D> {
            a.mapv(|v| v as f64)
        }
        QNetwork {
            conv1: Conv2d {
                w: widen(&self.conv1.w),
                b: widen(&self.conv1.b),
                pad: self.conv1.pad,
            },
            conv2: Conv2d {
                w: widen(&self.conv2.w),
                b: widen(&self.conv2.b),
                pad: self.conv2.pad,
            },
            conv3: Conv2d {
                w: widen(&self.conv3.w),
                b: widen(&self.conv3.b),
                pad: self.conv3.pad,
            },
            fc1: Dense {
                w: widen(&self.fc1.w),
                b: widen(&self.fc1.b),
            },
            fc2: Dense {
                w: widen(&self.fc2.w),
                b: widen(&self.fc2.b),
            },
        }
    }
}

impl<F: Scalar> Grads<F> {
    pub fn zeros() -> Self {
        let net = QNetwork::<F>::zeros();
        Grads {
            conv1: ConvGrad {
                w: net.conv1.w,
                b: net.conv1.b,
            },
            conv2: ConvGrad {
                w: net.conv2.w,
                b: net.conv2.b,
            },
            conv3: ConvGrad {
                w: net.conv3.w,
                b: net.conv3.b,
            },
            fc1: DenseGrad {
                w: net.fc1.w,
                b: net.fc1.b,
            },
            fc2: DenseGrad {
                w: net.fc2.w,
                b: net.fc2.b,
            },
        }
    }

    pub fn slices(&self) -> [&[F]; TENSOR_COUNT] {
        [
            self.conv1.w.as_slice().unwrap(),
            self.conv1.b.as_slice().unwrap(),
            self.conv2.w.as_slice().unwrap(),
            self.conv2.b.as_slice().unwrap(),
            self.conv3.w.as_slice().unwrap(),
            self.conv3.b.as_slice().unwrap(),
            self.fc1.w.as_slice().unwrap(),
            self.fc1.b.as_slice().unwrap(),
            self.fc2.w.as_slice().unwrap(),
            self.fc2.b.as_slice().unwrap(),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [F]; TENSOR_COUNT] {
        [
            self.conv1.w.as_slice_mut().unwrap(),
            self.conv1.b.as_slice_mut().unwrap(),
            self.conv2.w.as_slice_mut().unwrap(),
            self.conv2.b.as_slice_mut().unwrap(),
            self.conv3.w.as_slice_mut().unwrap(),
            self.conv3.b.as_slice_mut().unwrap(),
            self.fc1.w.as_slice_mut().unwrap(),
            self.fc1.b.as_slice_mut().unwrap(),
            self.fc2.w.as_slice_mut().unwrap(),
            self.fc2.b.as_slice_mut().unwrap(),
        ]
    }

    /// Element-wise accumulate.
    pub fn add_assign(&mut self, other: &Grads<F>) {
        let mut mine = self.slices_mut();
        let theirs = other.slices();
        for (dst, src) in mine.iter_mut().zip(theirs) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }

    /// Element-wise scale, for batch averaging.
    pub fn scale(&mut self, factor: F) {
        for slice in self.slices_mut().iter_mut() {
            for v in slice.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|&v| v.to_f64().is_finite()))
    }
}
