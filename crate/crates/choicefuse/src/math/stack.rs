use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::num::Scalar;
use crate::{Error, Result};

/// Layer activation. Output layers use `Linear`, all hidden layers `Relu`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Linear,
}

/// One fully connected layer `act(W x + b)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseLayer<S> {
    /// Weights, `out_dim x in_dim`.
    pub weights: Array2<S>,
    /// Bias, `out_dim`.
    pub bias: Array1<S>,
    pub activation: Activation,
}

/// Per-layer parameter gradients, shapes mirroring [`DenseLayer`].
#[derive(Clone, Debug)]
pub struct LayerGrad<S> {
    pub weights: Array2<S>,
    pub bias: Array1<S>,
}

impl<S: Scalar> DenseLayer<S> {
    pub fn new(weights: Array2<S>, bias: Array1<S>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::Shape(format!(
                "bias length {} does not match weight rows {}",
                bias.len(),
                weights.nrows()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) || bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite layer parameters".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Applies the layer to a batch laid out as `n x in_dim`.
    fn apply(&self, x: ArrayView2<'_, S>) -> Array2<S> {
        let mut out = x.dot(&self.weights.t());
        out += &self.bias;
        if self.activation == Activation::Relu {
            out.mapv_inplace(|v| if v > S::zero() { v } else { S::zero() });
        }
        out
    }
}

fn check_chain<S: Scalar>(in_dim: usize, layers: &[DenseLayer<S>]) -> Result<()> {
    let mut dim = in_dim;
    for (i, layer) in layers.iter().enumerate() {
        if layer.in_dim() != dim {
            return Err(Error::Shape(format!(
                "layer {i} expects input dim {}, got {dim}",
                layer.in_dim()
            )));
        }
        dim = layer.out_dim();
    }
    Ok(())
}

/// Composes the layer stack over a single input vector. The last layer is
/// expected to be `Linear` and emits raw utilities.
pub fn forward_stack<S: Scalar>(x: ArrayView1<'_, S>, layers: &[DenseLayer<S>]) -> Result<Array1<S>> {
    let batch = x.insert_axis(Axis(0));
    let cache = forward_batch(batch.view(), layers)?;
    Ok(cache.output.row(0).to_owned())
}

/// Forward-pass cache: the input to each layer plus the final output, all
/// batched as `n x dim`. Post-activations double as the ReLU mask.
#[derive(Clone, Debug)]
pub struct StackCache<S> {
    /// `inputs[i]` is the input to layer `i`; `inputs[0]` is the batch itself.
    pub inputs: Vec<Array2<S>>,
    pub output: Array2<S>,
}

pub fn forward_batch<S: Scalar>(
    x: ArrayView2<'_, S>,
    layers: &[DenseLayer<S>],
) -> Result<StackCache<S>> {
    check_chain(x.ncols(), layers)?;
    let mut inputs = Vec::with_capacity(layers.len());
    let mut current = x.to_owned();
    for layer in layers {
        let next = layer.apply(current.view());
        inputs.push(current);
        current = next;
    }
    Ok(StackCache {
        inputs,
        output: current,
    })
}

/// Reverse pass through the stack. `grad_out` is the gradient of the scalar
/// loss with respect to the stack output (`n x out_dim`). Returns per-layer
/// parameter gradients plus the gradient with respect to the batch input.
pub fn backward_stack<S: Scalar>(
    layers: &[DenseLayer<S>],
    cache: &StackCache<S>,
    grad_out: Array2<S>,
) -> (Vec<LayerGrad<S>>, Array2<S>) {
    assert_eq!(cache.inputs.len(), layers.len(), "cache/stack mismatch");
    let mut grads: Vec<LayerGrad<S>> = Vec::with_capacity(layers.len());
    let mut g = grad_out;
    for (i, layer) in layers.iter().enumerate().rev() {
        if layer.activation == Activation::Relu {
            // Post-activation output of layer i is the input to layer i+1,
            // or the stack output for the last layer.
            let post = if i + 1 < layers.len() {
                &cache.inputs[i + 1]
            } else {
                &cache.output
            };
            g.zip_mut_with(post, |gv, &pv| {
                if pv <= S::zero() {
                    *gv = S::zero();
                }
            });
        }
        let input = &cache.inputs[i];
        let grad_w = g.t().dot(input);
        let grad_b = g.sum_axis(Axis(0));
        let g_in = g.dot(&layer.weights);
        grads.push(LayerGrad {
            weights: grad_w,
            bias: grad_b,
        });
        g = g_in;
    }
    grads.reverse();
    (grads, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2};
    use proptest::prelude::*;

    fn layer(w: Array2<f64>, b: Array1<f64>, act: Activation) -> DenseLayer<f64> {
        DenseLayer::new(w, b, act).unwrap()
    }

    #[test]
    fn relu_clips_negative() {
        let l = layer(
            arr2(&[[1.0, 0.0], [0.0, -1.0]]),
            arr1(&[0.0, 0.0]),
            Activation::Relu,
        );
        let out = forward_stack(arr1(&[1.0, 1.0]).view(), &[l]).unwrap();
        assert_eq!(out, arr1(&[1.0, 0.0]));
    }

    #[test]
    fn zero_input_propagates_with_zero_bias() {
        let layers = vec![
            layer(
                arr2(&[[0.5, -0.3], [1.0, 2.0], [0.1, 0.1]]),
                Array1::zeros(3),
                Activation::Relu,
            ),
            layer(
                arr2(&[[1.0, -1.0, 0.5]]),
                Array1::zeros(1),
                Activation::Linear,
            ),
        ];
        let out = forward_stack(arr1(&[0.0, 0.0]).view(), &layers).unwrap();
        assert_eq!(out, arr1(&[0.0]));
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let layers = vec![
            layer(arr2(&[[1.0, 2.0]]), Array1::zeros(1), Activation::Relu),
            layer(arr2(&[[1.0, 2.0]]), Array1::zeros(1), Activation::Linear),
        ];
        let err = forward_stack(arr1(&[1.0, 1.0]).view(), &layers).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    // Independent layer-by-layer re-evaluation with plain loops.
    fn eval_by_hand(x: &[f64], layers: &[DenseLayer<f64>]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in layers {
            let mut next = vec![0.0; layer.out_dim()];
            for (r, out) in next.iter_mut().enumerate() {
                let mut acc = layer.bias[r];
                for (c, xv) in cur.iter().enumerate() {
                    acc += layer.weights[[r, c]] * xv;
                }
                *out = if layer.activation == Activation::Relu {
                    acc.max(0.0)
                } else {
                    acc
                };
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn random_stack_matches_hand_evaluation() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let dims = [4usize, 6, 5, 3];
            let layers: Vec<_> = dims
                .windows(2)
                .enumerate()
                .map(|(i, w)| {
                    let (din, dout) = (w[0], w[1]);
                    let weights =
                        Array2::from_shape_fn((dout, din), |_| rng.gen_range(-1.0..1.0));
                    let bias = Array1::from_shape_fn(dout, |_| rng.gen_range(-0.5..0.5));
                    let act = if i == 2 {
                        Activation::Linear
                    } else {
                        Activation::Relu
                    };
                    layer(weights, bias, act)
                })
                .collect();
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let got = forward_stack(arr1(&x).view(), &layers).unwrap();
            let want = eval_by_hand(&x, &layers);
            for (g, w) in got.iter().zip(&want) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        // ReLU-only stacks with zero bias are positively homogeneous.
        #[test]
        fn relu_stack_positive_homogeneity(
            seed in 0u64..1000,
            alpha in 0.01f64..10.0,
        ) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let layers: Vec<_> = [(3usize, 4usize), (4, 2)]
                .iter()
                .map(|&(din, dout)| {
                    let w = Array2::from_shape_fn((dout, din), |_| rng.gen_range(-1.0..1.0));
                    layer(w, Array1::zeros(dout), Activation::Relu)
                })
                .collect();
            let x = Array1::from_shape_fn(3, |_| rng.gen_range(-2.0..2.0));
            let base = forward_stack(x.view(), &layers).unwrap();
            let scaled = forward_stack((&x * alpha).view(), &layers).unwrap();
            for (s, b) in scaled.iter().zip(base.iter()) {
                prop_assert!((s - alpha * b).abs() < 1e-9 * (1.0 + b.abs() * alpha));
            }
        }
    }
}
