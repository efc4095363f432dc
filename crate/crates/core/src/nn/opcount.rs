//! Instrumented forward pass: a naive loop implementation, independent of
//! the gemm path, that counts every multiplication, addition, and
//! activation application as it executes.
//!
//! Per output neuron the accumulator starts at the bias, then each fan-in
//! element contributes one multiply and one add (padding positions multiply
//! an explicit zero), and writing the activation counts once; that makes
//! `fan_in` multiplies, `fan_in` adds (fan_in - 1 accumulations plus the
//! bias), and one activation, or `2 * fan_in + 1` operations per neuron.

use ndarray::{Array1, Array3};

use super::{layer::Scalar, QNetwork, IN_CHANNELS, WINDOW};
use crate::Result;

/// Operations executed in one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerOps {
    pub mults: u64,
    pub adds: u64,
    pub activations: u64,
}

impl LayerOps {
    pub fn total(&self) -> u64 {
        self.mults + self.adds + self.activations
    }
}

/// Per-layer operation counts for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub layers: [LayerOps; 5],
}

impl OpCounts {
    pub fn grand_total(&self) -> u64 {
        self.layers.iter().map(LayerOps::total).sum()
    }
}

/// Runs the network with naive loops, counting operations at each
/// arithmetic site. Returns the Q-values and the counts; the values agree
/// with [`QNetwork::forward`] up to summation-order rounding.
pub fn forward_counted<F: Scalar>(
    net: &QNetwork<F>,
    x: &Array3<F>,
) -> Result<(Array1<F>, OpCounts)> {
    if x.dim() != (IN_CHANNELS, WINDOW, WINDOW) {
        return Err(crate::error::Error::domain(format!(
            "observation tensor has shape {:?}, need ({IN_CHANNELS}, {WINDOW}, {WINDOW})",
            x.dim()
        )));
    }
    let mut counts = OpCounts::default();

    let a1 = conv_counted(&net.conv1, x, true, &mut counts.layers[0]);
    let a2 = conv_counted(&net.conv2, &a1, true, &mut counts.layers[1]);
    let a3 = conv_counted(&net.conv3, &a2, true, &mut counts.layers[2]);

    let flat: Vec<F> = a3.iter().copied().collect();
    let h1 = dense_counted(&net.fc1, &flat, true, &mut counts.layers[3]);
    let q = dense_counted(&net.fc2, &h1, false, &mut counts.layers[4]);

    Ok((Array1::from_vec(q), counts))
}

fn conv_counted<F: Scalar>(
    conv: &super::Conv2d<F>,
    x: &Array3<F>,
    rectify: bool,
    ops: &mut LayerOps,
) -> Array3<F> {
    let (k_out, d, kh, kw) = conv.w.dim();
    let (_, h, w) = x.dim();
    let pad = conv.pad as isize;
    let (oh, ow) = conv.out_hw((h, w));
    let mut out = Array3::zeros((k_out, oh, ow));
    for k in 0..k_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = conv.b[k];
                for c in 0..d {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = oy as isize + ky as isize - pad;
                            let ix = ox as isize + kx as isize - pad;
                            let xv = if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                x[[c, iy as usize, ix as usize]]
                            } else {
                                F::zero()
                            };
                            let prod = conv.w[[k, c, ky, kx]] * xv;
                            ops.mults += 1;
                            acc += prod;
                            ops.adds += 1;
                        }
                    }
                }
                out[[k, oy, ox]] = apply_activation(acc, rectify, ops);
            }
        }
    }
    out
}

fn dense_counted<F: Scalar>(
    layer: &super::Dense<F>,
    x: &[F],
    rectify: bool,
    ops: &mut LayerOps,
) -> Vec<F> {
    let (n_out, n_in) = layer.w.dim();
    debug_assert_eq!(x.len(), n_in);
    let mut out = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let mut acc = layer.b[o];
        for i in 0..n_in {
            let prod = layer.w[[o, i]] * x[i];
            ops.mults += 1;
            acc += prod;
            ops.adds += 1;
        }
        out.push(apply_activation(acc, rectify, ops));
    }
    out
}

/// The output activation is applied to every neuron (identity on the final
/// layer) and counted as one operation.
fn apply_activation<F: Scalar>(v: F, rectify: bool, ops: &mut LayerOps) -> F {
    ops.activations += 1;
    if rectify && v < F::zero() {
        F::zero()
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use ndarray::Array;
    use rand::Rng;

    #[test]
    fn per_layer_counts_match_the_cost_model() {
        let net = QNetwork::<f32>::zeros();
        let x = Array::zeros((IN_CHANNELS, WINDOW, WINDOW));
        let (_, counts) = forward_counted(&net, &x).unwrap();
        // out_cells * (2 * fan_in + 1)
        assert_eq!(counts.layers[0].total(), 440_000); // 8000 * 55
        assert_eq!(counts.layers[1].total(), 3_704_980); // 5780 * 641
        assert_eq!(counts.layers[2].total(), 628_180); // 980 * 641
        assert_eq!(counts.layers[3].total(), 125_504); // 64 * 1961
        assert_eq!(counts.layers[4].total(), 645); // 5 * 129
        assert_eq!(counts.grand_total(), 4_899_309);
    }

    #[test]
    fn mults_adds_activations_split() {
        let net = QNetwork::<f32>::zeros();
        let x = Array::zeros((IN_CHANNELS, WINDOW, WINDOW));
        let (_, counts) = forward_counted(&net, &x).unwrap();
        let l0 = counts.layers[0];
        assert_eq!(l0.mults, 8000 * 27);
        assert_eq!(l0.adds, 8000 * 27);
        assert_eq!(l0.activations, 8000);
        let l4 = counts.layers[4];
        assert_eq!(l4.mults, 5 * 64);
        assert_eq!(l4.adds, 5 * 64);
        assert_eq!(l4.activations, 5);
    }

    #[test]
    fn counted_forward_agrees_with_gemm_forward() {
        let mut rng = substream(5, Domain::Init, 0);
        let net = QNetwork::<f64>::init(&mut rng);
        let x = Array::from_shape_fn((IN_CHANNELS, WINDOW, WINDOW), |_| {
            rng.gen_range(-1.0..1.0)
        });
        let fast = net.forward(&x).unwrap();
        let (slow, _) = forward_counted(&net, &x).unwrap();
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn final_layer_is_not_rectified() {
        // a network biased strongly negative on the output must emit the
        // negative value, while hidden rectifiers clamp
        let mut net = QNetwork::<f32>::zeros();
        net.fc2.b.fill(-3.0);
        let x = Array::zeros((IN_CHANNELS, WINDOW, WINDOW));
        let (q, _) = forward_counted(&net, &x).unwrap();
        assert!(q.iter().all(|v| *v == -3.0));
        let fast = net.forward(&x).unwrap();
        assert!(fast.iter().all(|v| *v == -3.0));
    }

    #[test]
    fn rejects_wrong_shape() {
        let net = QNetwork::<f32>::zeros();
        let x = Array::zeros((1, WINDOW, WINDOW));
        assert!(forward_counted(&net, &x).is_err());
    }
}
