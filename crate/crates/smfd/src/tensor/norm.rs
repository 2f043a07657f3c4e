//! Per-channel batch normalization with train/inference modes.

use super::{Result, Scalar, Tensor, TensorError};

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Per-channel first/second moments (rank-1 tensors of extent C).
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<T: Scalar = f32> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct BnOutput<T: Scalar = f32> {
    pub output: Tensor<T>,
    /// Batch statistics used for normalization (train mode only).
    pub batch_stats: Option<BnStats<T>>,
    /// Running statistics after the momentum update (train mode with running
    /// stats supplied).
    pub updated_running: Option<BnStats<T>>,
}

fn check_channel_vec<T: Scalar>(t: &Tensor<T>, c: usize, what: &str) -> Result<()> {
    if t.shape() != [c] {
        return Err(TensorError::ShapeMismatch {
            op: "batchnorm",
            detail: format!("{what} shape {:?}, expected [{c}]", t.shape()),
        });
    }
    Ok(())
}

/// Normalizes per channel as `(x - mu) / sqrt(var + eps)` then applies the
/// learnable affine `gamma * xhat + beta`. Train mode uses batch statistics
/// (biased variance) and folds them into the running stats with
/// `running = momentum * running + (1 - momentum) * batch`.
pub fn batchnorm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mode: BnMode,
    eps: T,
    running: Option<&BnStats<T>>,
    momentum: T,
) -> Result<BnOutput<T>> {
    let (n, h, w, c) = input.dims4()?;
    check_channel_vec(gamma, c, "gamma")?;
    check_channel_vec(beta, c, "beta")?;
    if let Some(r) = running {
        check_channel_vec(&r.mean, c, "running mean")?;
        check_channel_vec(&r.var, c, "running var")?;
    }
    if eps <= T::zero() {
        return Err(TensorError::Invalid(
            "batchnorm eps must be positive".into(),
        ));
    }
    let m = n * h * w;
    if m == 0 {
        return Err(TensorError::EmptyOutput {
            op: "batchnorm",
            detail: "zero-element batch".into(),
        });
    }

    let (mean, var) = match mode {
        BnMode::Train => {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for b in 0..n {
                for y in 0..h {
                    for x in 0..w {
                        for ch in 0..c {
                            mean[ch] = mean[ch] + input.at4(b, y, x, ch);
                        }
                    }
                }
            }
            let inv_m = T::one() / T::from_f64(m as f64);
            for ch in 0..c {
                mean[ch] = mean[ch] * inv_m;
            }
            for b in 0..n {
                for y in 0..h {
                    for x in 0..w {
                        for ch in 0..c {
                            let d = input.at4(b, y, x, ch) - mean[ch];
                            var[ch] = var[ch] + d * d;
                        }
                    }
                }
            }
            for ch in 0..c {
                var[ch] = var[ch] * inv_m;
            }
            (mean, var)
        }
        BnMode::Infer => {
            let r = running.ok_or_else(|| {
                TensorError::Invalid("inference-mode batchnorm requires running stats".into())
            })?;
            (r.mean.data().to_vec(), r.var.data().to_vec())
        }
    };

    let mut out = Tensor::zeros(&[n, h, w, c]);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let xhat = (input.at4(b, y, x, ch) - mean[ch]) * inv_std[ch];
                    out.set4(b, y, x, ch, gamma.data()[ch] * xhat + beta.data()[ch]);
                }
            }
        }
    }

    let batch_stats = match mode {
        BnMode::Train => Some(BnStats {
            mean: Tensor::new(&[c], mean.clone())?,
            var: Tensor::new(&[c], var.clone())?,
        }),
        BnMode::Infer => None,
    };
    let updated_running = match (mode, running) {
        (BnMode::Train, Some(r)) => {
            let blend = |old: &[T], new: &[T]| -> Vec<T> {
                old.iter()
                    .zip(new)
                    .map(|(&o, &nv)| momentum * o + (T::one() - momentum) * nv)
                    .collect()
            };
            Some(BnStats {
                mean: Tensor::new(&[c], blend(r.mean.data(), &mean))?,
                var: Tensor::new(&[c], blend(r.var.data(), &var))?,
            })
        }
        _ => None,
    };

    Ok(BnOutput {
        output: out,
        batch_stats,
        updated_running,
    })
}

#[derive(Debug, Clone)]
pub struct BnGrads<T: Scalar = f32> {
    pub d_input: Tensor<T>,
    pub d_gamma: Tensor<T>,
    pub d_beta: Tensor<T>,
}

/// Adjoint of [`batchnorm`].
///
/// Train mode differentiates through the batch statistics; `stats` must be
/// the batch stats returned by the forward pass. Infer mode treats the
/// running statistics as constants.
pub fn batchnorm_backward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    mode: BnMode,
    eps: T,
    stats: &BnStats<T>,
    grad_out: &Tensor<T>,
) -> Result<BnGrads<T>> {
    let (n, h, w, c) = input.dims4()?;
    check_channel_vec(gamma, c, "gamma")?;
    check_channel_vec(&stats.mean, c, "stats mean")?;
    check_channel_vec(&stats.var, c, "stats var")?;
    if grad_out.shape() != input.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "batchnorm_backward",
            detail: format!(
                "grad shape {:?} vs input {:?}",
                grad_out.shape(),
                input.shape()
            ),
        });
    }
    let m = T::from_f64((n * h * w) as f64);
    let inv_std: Vec<T> = stats
        .var
        .data()
        .iter()
        .map(|&v| T::one() / (v + eps).sqrt())
        .collect();

    let mut d_gamma = vec![T::zero(); c];
    let mut d_beta = vec![T::zero(); c];
    let mut sum_dy = vec![T::zero(); c];
    let mut sum_dy_xhat = vec![T::zero(); c];
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let xhat = (input.at4(b, y, x, ch) - stats.mean.data()[ch]) * inv_std[ch];
                    let dy = grad_out.at4(b, y, x, ch);
                    d_gamma[ch] = d_gamma[ch] + dy * xhat;
                    d_beta[ch] = d_beta[ch] + dy;
                    sum_dy[ch] = sum_dy[ch] + dy;
                    sum_dy_xhat[ch] = sum_dy_xhat[ch] + dy * xhat;
                }
            }
        }
    }

    let mut d_input = Tensor::zeros(&[n, h, w, c]);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let dy = grad_out.at4(b, y, x, ch);
                    let g = gamma.data()[ch] * inv_std[ch];
                    let v = match mode {
                        BnMode::Train => {
                            let xhat =
                                (input.at4(b, y, x, ch) - stats.mean.data()[ch]) * inv_std[ch];
                            g * (dy - sum_dy[ch] / m - xhat * sum_dy_xhat[ch] / m)
                        }
                        BnMode::Infer => g * dy,
                    };
                    d_input.set4(b, y, x, ch, v);
                }
            }
        }
    }

    Ok(BnGrads {
        d_input,
        d_gamma: Tensor::new(&[c], d_gamma)?,
        d_beta: Tensor::new(&[c], d_beta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(c: usize) -> Tensor<f64> {
        Tensor::filled(&[c], 1.0)
    }

    #[test]
    fn hand_evaluated_batch() {
        // Batch {1,2,3}: mu=2, sigma^2=2/3.
        let x = Tensor::new(&[3, 1, 1, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let out = batchnorm(
            &x,
            &ones(1),
            &Tensor::zeros(&[1]),
            BnMode::Train,
            1e-12,
            None,
            0.99,
        )
        .unwrap();
        let expect = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((out.output.data()[0] + expect).abs() < 1e-6);
        assert!(out.output.data()[1].abs() < 1e-9);
        assert!((out.output.data()[2] - expect).abs() < 1e-6);
        let stats = out.batch_stats.unwrap();
        assert!((stats.mean.data()[0] - 2.0).abs() < 1e-12);
        assert!((stats.var.data()[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_yields_beta() {
        let x = Tensor::filled(&[2, 3, 3, 2], 5.0);
        let beta = Tensor::new(&[2], vec![0.25, -1.5]).unwrap();
        let out = batchnorm(&x, &ones(2), &beta, BnMode::Train, 1e-5, None, 0.99).unwrap();
        for b in 0..2 {
            for y in 0..3 {
                for x_ in 0..3 {
                    assert!((out.output.at4(b, y, x_, 0) - 0.25).abs() < 1e-9);
                    assert!((out.output.at4(b, y, x_, 1) + 1.5).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn double_application_is_idempotent() {
        let x = Tensor::from_fn(&[4, 2, 2, 3], |i| ((i * 31 % 17) as f64) - 8.0);
        let g = ones(3);
        let b = Tensor::zeros(&[3]);
        let once = batchnorm(&x, &g, &b, BnMode::Train, 1e-9, None, 0.99)
            .unwrap()
            .output;
        let twice = batchnorm(&once, &g, &b, BnMode::Train, 1e-9, None, 0.99)
            .unwrap()
            .output;
        assert!(once.max_abs_diff(&twice) < 1e-6);
    }

    #[test]
    fn train_output_is_standardized() {
        let x = Tensor::from_fn(&[2, 4, 4, 2], |i| ((i * 257 % 101) as f64) * 0.1);
        let out = batchnorm(
            &x,
            &ones(2),
            &Tensor::zeros(&[2]),
            BnMode::Train,
            1e-9,
            None,
            0.99,
        )
        .unwrap()
        .output;
        for ch in 0..2 {
            let mut mean = 0.0;
            let mut var = 0.0;
            let m = 2 * 4 * 4;
            for b in 0..2 {
                for y in 0..4 {
                    for xx in 0..4 {
                        mean += out.at4(b, y, xx, ch);
                    }
                }
            }
            mean /= m as f64;
            for b in 0..2 {
                for y in 0..4 {
                    for xx in 0..4 {
                        var += (out.at4(b, y, xx, ch) - mean).powi(2);
                    }
                }
            }
            var /= m as f64;
            assert!(mean.abs() <= 1e-6, "per-channel mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "per-channel var {var}");
        }
    }

    #[test]
    fn infer_uses_running_stats() {
        let x = Tensor::new(&[1, 1, 1, 1], vec![3.0]).unwrap();
        let running = BnStats {
            mean: Tensor::new(&[1], vec![1.0]).unwrap(),
            var: Tensor::new(&[1], vec![4.0]).unwrap(),
        };
        let out = batchnorm(
            &x,
            &ones(1),
            &Tensor::zeros(&[1]),
            BnMode::Infer,
            1e-12,
            Some(&running),
            0.99,
        )
        .unwrap();
        assert!((out.output.data()[0] - 1.0).abs() < 1e-6);
        assert!(out.updated_running.is_none());
    }

    #[test]
    fn running_update_blends() {
        let x = Tensor::new(&[2, 1, 1, 1], vec![0.0, 2.0]).unwrap();
        let running = BnStats {
            mean: Tensor::new(&[1], vec![10.0]).unwrap(),
            var: Tensor::new(&[1], vec![10.0]).unwrap(),
        };
        let out = batchnorm(
            &x,
            &ones(1),
            &Tensor::zeros(&[1]),
            BnMode::Train,
            1e-5,
            Some(&running),
            0.9,
        )
        .unwrap();
        let upd = out.updated_running.unwrap();
        // batch mean 1, batch var 1.
        assert!((upd.mean.data()[0] - (0.9 * 10.0 + 0.1 * 1.0)).abs() < 1e-12);
        assert!((upd.var.data()[0] - (0.9 * 10.0 + 0.1 * 1.0)).abs() < 1e-12);
    }
}
