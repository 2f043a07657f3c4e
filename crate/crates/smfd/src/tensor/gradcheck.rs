//! Finite-difference verification of analytic adjoints.
//!
//! The checker compares an analytic gradient against central differences of a
//! scalar-valued closure. Ops with tensor outputs are reduced to a scalar by
//! projecting onto fixed weights, so the full Jacobian action is exercised.
//! Run on `f64` with small inputs.

use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, flat element index) of the worst component.
    pub worst: (usize, usize),
    pub tolerance: f64,
    pub pass: bool,
}

const FD_STEP: f64 = 1e-5;

/// Checks `analytic(inputs)` against central finite differences of
/// `value(inputs)`.
///
/// Relative error per component is `|a - n| / max(1, |a|, |n|)`; the report
/// carries the maximum over all components of all inputs. Non-finite analytic
/// gradients fail immediately with their location.
pub fn grad_check<F, G>(
    inputs: &[Tensor<f64>],
    value: F,
    analytic: G,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> f64,
    G: Fn(&[Tensor<f64>]) -> Vec<Tensor<f64>>,
{
    let grads = analytic(inputs);
    if grads.len() != inputs.len() {
        return Err(TensorError::Invalid(format!(
            "analytic closure returned {} gradients for {} inputs",
            grads.len(),
            inputs.len()
        )));
    }
    for (gi, g) in grads.iter().enumerate() {
        if let Some(bad) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                context: format!("analytic gradient of input {gi}"),
                index: bad,
            });
        }
    }

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut max_rel = 0.0f64;
    let mut worst = (0, 0);
    for i in 0..inputs.len() {
        for e in 0..inputs[i].len() {
            let x = inputs[i].data()[e];
            work[i].data_mut()[e] = x + FD_STEP;
            let up = value(&work);
            work[i].data_mut()[e] = x - FD_STEP;
            let down = value(&work);
            work[i].data_mut()[e] = x;
            let numeric = (up - down) / (2.0 * FD_STEP);
            if !numeric.is_finite() {
                return Err(TensorError::NonFinite {
                    context: format!("finite difference of input {i}"),
                    index: e,
                });
            }
            let a = grads[i].data()[e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel > max_rel {
                max_rel = rel;
                worst = (i, e);
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        worst,
        tolerance,
        pass: max_rel <= tolerance,
    })
}

/// Deterministic projection weights used to reduce a tensor output to a
/// scalar: `w_k = sin(3k + phase)` keeps every component exercised.
pub fn projection(shape: &[usize], phase: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |i| (3.0 * i as f64 + phase).sin())
}

/// Scalar projection `sum_k w_k out_k` of a tensor output.
pub fn project(out: &Tensor<f64>, weights: &Tensor<f64>) -> f64 {
    out.data()
        .iter()
        .zip(weights.data())
        .map(|(&a, &b)| a * b)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{
        activate, activate_backward, conv2d, conv2d_backward, Activation, ConvSpec, Padding,
    };

    #[test]
    fn relu_away_from_kink() {
        // Inputs bounded away from 0 so the subgradient choice is irrelevant.
        let x = Tensor::from_fn(&[2, 3, 3, 2], |i| {
            let v = ((i * 29 % 13) as f64 - 6.0) / 3.0;
            if v.abs() < 0.3 {
                v.signum() * 0.3
            } else {
                v
            }
        });
        let w = projection(x.shape(), 0.1);
        let report = grad_check(
            &[x],
            |ins| project(&activate(&ins[0], Activation::Relu), &w),
            |ins| {
                let out = activate(&ins[0], Activation::Relu);
                vec![activate_backward(Activation::Relu, &ins[0], &out, &w)]
            },
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn linear_gradient_is_exactly_one() {
        let x = Tensor::from_fn(&[5], |i| i as f64);
        let w = Tensor::filled(&[5], 1.0);
        let report = grad_check(
            &[x],
            |ins| project(&activate(&ins[0], Activation::Linear), &w),
            |ins| {
                let out = activate(&ins[0], Activation::Linear);
                vec![activate_backward(Activation::Linear, &ins[0], &out, &w)]
            },
            1e-9,
        )
        .unwrap();
        assert!(report.pass);
    }

    #[test]
    fn conv_adjoint_small() {
        let input = Tensor::from_fn(&[1, 4, 4, 2], |i| ((i * 37 % 23) as f64 - 11.0) / 7.0);
        let weights = Tensor::from_fn(&[3, 3, 2, 2], |i| ((i * 17 % 19) as f64 - 9.0) / 5.0);
        let bias = Tensor::from_fn(&[2], |i| i as f64 * 0.1);
        let make = |ins: &[Tensor<f64>]| {
            ConvSpec::new(3, 3, 2, 2, 1, Padding::Same, ins[1].clone(), ins[2].clone()).unwrap()
        };
        let w = projection(&[1, 4, 4, 2], 0.7);
        let report = grad_check(
            &[input, weights, bias],
            |ins| project(&conv2d(&ins[0], &make(ins)).unwrap(), &w),
            |ins| {
                let g = conv2d_backward(&ins[0], &make(ins), &w).unwrap();
                vec![g.d_input, g.d_weights, g.d_bias]
            },
            1e-4,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn non_finite_gradient_is_located() {
        let x = Tensor::from_fn(&[3], |i| i as f64);
        let err = grad_check(
            &[x],
            |_| 0.0,
            |_| {
                vec![Tensor::from_fn(
                    &[3],
                    |i| if i == 1 { f64::NAN } else { 0.0 },
                )]
            },
            1e-4,
        )
        .unwrap_err();
        match err {
            TensorError::NonFinite { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
