//! Finite-difference verification of a few analytic adjoints, the same
//! machinery the acceptance gradient suite runs across 100 seeds.

use smfd::tensor::{
    activate, activate_backward, conv2d, conv2d_backward, grad_check, project, projection,
    Activation, ConvSpec, Padding, Tensor,
};

fn main() {
    // Convolution: input, weights, and bias all checked at once.
    let input = Tensor::from_fn(&[1, 5, 5, 2], |i| ((i * 37 % 23) as f64 - 11.0) / 7.0);
    let weights = Tensor::from_fn(&[3, 3, 2, 3], |i| ((i * 17 % 19) as f64 - 9.0) / 5.0);
    let bias = Tensor::from_fn(&[3], |i| i as f64 * 0.1);
    let spec = |ins: &[Tensor<f64>]| {
        ConvSpec::new(3, 3, 2, 3, 1, Padding::Same, ins[1].clone(), ins[2].clone()).unwrap()
    };
    let w = projection(&[1, 5, 5, 3], 0.25);
    let report = grad_check(
        &[input, weights, bias],
        |ins| project(&conv2d(&ins[0], &spec(ins)).unwrap(), &w),
        |ins| {
            let g = conv2d_backward(&ins[0], &spec(ins), &w).unwrap();
            vec![g.d_input, g.d_weights, g.d_bias]
        },
        1e-4,
    )
    .unwrap();
    println!(
        "conv2d: max relative error {:.3e} (tolerance {:.0e}) -> {}",
        report.max_rel_err,
        report.tolerance,
        if report.pass { "pass" } else { "FAIL" }
    );

    for kind in [Activation::Sigmoid, Activation::Tanh, Activation::Softmax] {
        let x = Tensor::from_fn(&[1, 4, 4, 3], |i| ((i * 29 % 17) as f64 - 8.0) / 4.0);
        let w = projection(&[1, 4, 4, 3], 0.5);
        let report = grad_check(
            &[x],
            |ins| project(&activate(&ins[0], kind), &w),
            |ins| {
                let out = activate(&ins[0], kind);
                vec![activate_backward(kind, &ins[0], &out, &w)]
            },
            1e-6,
        )
        .unwrap();
        println!(
            "{kind:?}: max relative error {:.3e} -> {}",
            report.max_rel_err,
            if report.pass { "pass" } else { "FAIL" }
        );
    }
}
