//! Activation functions and their adjoints. All kinds are total functions;
//! softmax applies along the channel (last) axis.

use super::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
    Linear,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn activate<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Relu => input.map(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::Sigmoid => input.map(sigmoid),
        Activation::Tanh => input.map(|v| v.tanh()),
        Activation::Linear => input.clone(),
        Activation::Softmax => {
            let channels = *input.shape().last().unwrap();
            let rows = input.len() / channels;
            let mut out = input.clone();
            let data = out.data_mut();
            for r in 0..rows {
                let row = &mut data[r * channels..(r + 1) * channels];
                // Shift by the row max for stability; softmax is invariant to it.
                let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
                let mut sum = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    sum = sum + *v;
                }
                for v in row.iter_mut() {
                    *v = *v / sum;
                }
            }
            out
        }
    }
}

/// Adjoint of [`activate`]. `output` must be the forward result for the same
/// `input`; ReLU uses the zero subgradient at the kink.
pub fn activate_backward<T: Scalar>(
    kind: Activation,
    input: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    match kind {
        Activation::Relu => grad_out
            .zip_map(input, |g, x| if x > T::zero() { g } else { T::zero() })
            .expect("shape checked by forward"),
        Activation::Sigmoid => grad_out
            .zip_map(output, |g, s| g * s * (T::one() - s))
            .expect("shape checked by forward"),
        Activation::Tanh => grad_out
            .zip_map(output, |g, t| g * (T::one() - t * t))
            .expect("shape checked by forward"),
        Activation::Linear => grad_out.clone(),
        Activation::Softmax => {
            let channels = *output.shape().last().unwrap();
            let rows = output.len() / channels;
            let mut d = grad_out.clone();
            let s = output.data();
            let g = grad_out.data();
            let dd = d.data_mut();
            for r in 0..rows {
                let base = r * channels;
                let mut dot = T::zero();
                for c in 0..channels {
                    dot = dot + s[base + c] * g[base + c];
                }
                for c in 0..channels {
                    dd[base + c] = s[base + c] * (g[base + c] - dot);
                }
            }
            d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points() {
        let x = Tensor::<f64>::new(&[4], vec![0.0, -3.0, 3.0, 0.5]).unwrap();
        let sig = activate(&x, Activation::Sigmoid);
        assert!((sig.data()[0] - 0.5).abs() < 1e-12);
        let tanh = activate(&x, Activation::Tanh);
        assert_eq!(tanh.data()[0], 0.0);
        let relu = activate(&x, Activation::Relu);
        assert_eq!(relu.data()[1], 0.0);
        assert_eq!(relu.data()[2], 3.0);
        assert_eq!(activate(&x, Activation::Linear), x);
    }

    #[test]
    fn softmax_of_constant_is_uniform() {
        let x = Tensor::filled(&[1, 1, 1, 5], 2.5f64);
        let s = activate(&x, Activation::Softmax);
        for &v in s.data() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shift() {
        let x = Tensor::from_fn(&[2, 2, 2, 3], |i| (i as f64 * 0.37).sin() * 4.0);
        let s = activate(&x, Activation::Softmax);
        for row in s.data().chunks(3) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6);
        }
        let shifted = x.map(|v| v + 17.0);
        let s2 = activate(&shifted, Activation::Softmax);
        assert!(s.max_abs_diff(&s2) < 1e-9);
    }

    #[test]
    fn linear_backward_is_identity() {
        let x = Tensor::from_fn(&[3], |i| i as f64);
        let g = Tensor::from_fn(&[3], |i| (i as f64) * 2.0);
        let out = activate(&x, Activation::Linear);
        assert_eq!(activate_backward(Activation::Linear, &x, &out, &g), g);
    }
}
