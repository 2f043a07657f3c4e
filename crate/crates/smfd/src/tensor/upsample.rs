//! The four upsampling algorithms: nearest-neighbor replication, switch-based
//! un-pooling, transpose convolution, and pixel shuffle (depth-to-space).

use super::conv::{ConvGrads, ConvSpec};
use super::pool::PoolSwitches;
use super::{Result, Scalar, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleMode {
    Nearest,
    Unpool,
    Transpose,
    PixelShuffle,
}

/// Mode-specific companion data for [`upsample`].
pub enum UpsampleAux<'a, T: Scalar> {
    None,
    Switches(&'a PoolSwitches),
    Conv(&'a ConvSpec<T>),
}

/// Unified entry point covering all four modes. `factor` is ignored by
/// `Unpool` (the switches carry the target shape) and must equal the conv
/// stride for `Transpose`.
pub fn upsample<T: Scalar>(
    input: &Tensor<T>,
    mode: UpsampleMode,
    factor: usize,
    aux: UpsampleAux<'_, T>,
) -> Result<Tensor<T>> {
    match (mode, aux) {
        (UpsampleMode::Nearest, UpsampleAux::None) => upsample_nearest(input, factor),
        (UpsampleMode::Unpool, UpsampleAux::Switches(sw)) => unpool(input, sw),
        (UpsampleMode::Transpose, UpsampleAux::Conv(spec)) => {
            if spec.stride != factor {
                return Err(TensorError::Invalid(format!(
                    "transpose upsample factor {factor} != conv stride {}",
                    spec.stride
                )));
            }
            conv2d_transpose(input, spec)
        }
        (UpsampleMode::PixelShuffle, UpsampleAux::None) => pixel_shuffle(input, factor),
        _ => Err(TensorError::Invalid(format!(
            "upsample mode {mode:?} given incompatible auxiliary data"
        ))),
    }
}

/// Repeats each pixel into a factor x factor block.
pub fn upsample_nearest<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(TensorError::Invalid(
            "upsample factor must be positive".into(),
        ));
    }
    let (n, h, w, c) = input.dims4()?;
    let mut out = Tensor::zeros(&[n, h * factor, w * factor, c]);
    for b in 0..n {
        for y in 0..h * factor {
            for x in 0..w * factor {
                for ch in 0..c {
                    out.set4(b, y, x, ch, input.at4(b, y / factor, x / factor, ch));
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample_nearest`]: sums the gradient over each block.
pub fn upsample_nearest_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    factor: usize,
) -> Result<Tensor<T>> {
    let (n, oh, ow, c) = grad_out.dims4()?;
    if factor == 0 || oh % factor != 0 || ow % factor != 0 {
        return Err(TensorError::ShapeMismatch {
            op: "upsample_nearest_backward",
            detail: format!("grad extents {oh}x{ow} not divisible by factor {factor}"),
        });
    }
    let mut d_input = Tensor::zeros(&[n, oh / factor, ow / factor, c]);
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                for ch in 0..c {
                    d_input.add4(b, y / factor, x / factor, ch, grad_out.at4(b, y, x, ch));
                }
            }
        }
    }
    Ok(d_input)
}

/// Scatters pooled values back to their recorded positions, zeros elsewhere.
pub fn unpool<T: Scalar>(input: &Tensor<T>, switches: &PoolSwitches) -> Result<Tensor<T>> {
    switches.validate()?;
    let (n, oh, ow, c) = input.dims4()?;
    if switches.output_shape != [n, oh, ow, c] {
        return Err(TensorError::ShapeMismatch {
            op: "unpool",
            detail: format!(
                "input shape {:?} does not match switch output shape {:?}",
                input.shape(),
                switches.output_shape
            ),
        });
    }
    let [tn, th, tw, tc] = switches.input_shape;
    let mut out = Tensor::zeros(&[tn, th, tw, tc]);
    let (win, stride) = (switches.window, switches.stride);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let flat = ((b * oh + oy) * ow + ox) * c + ch;
                    let idx = switches.index[flat] as usize;
                    out.set4(
                        b,
                        oy * stride + idx / win,
                        ox * stride + idx % win,
                        ch,
                        input.at4(b, oy, ox, ch),
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`unpool`]: gathers the gradient from the switch positions.
pub fn unpool_backward<T: Scalar>(
    switches: &PoolSwitches,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    switches.validate()?;
    if grad_out.shape() != switches.input_shape {
        return Err(TensorError::ShapeMismatch {
            op: "unpool_backward",
            detail: format!(
                "grad shape {:?} does not match unpooled shape {:?}",
                grad_out.shape(),
                switches.input_shape
            ),
        });
    }
    let [n, oh, ow, c] = switches.output_shape;
    let mut d_input = Tensor::zeros(&[n, oh, ow, c]);
    let (win, stride) = (switches.window, switches.stride);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let flat = ((b * oh + oy) * ow + ox) * c + ch;
                    let idx = switches.index[flat] as usize;
                    d_input.set4(
                        b,
                        oy,
                        ox,
                        ch,
                        grad_out.at4(b, oy * stride + idx / win, ox * stride + idx % win, ch),
                    );
                }
            }
        }
    }
    Ok(d_input)
}

/// Transpose convolution as stride-spaced scatter-add of kernel copies.
/// Output extent is `(in - 1) * stride + filter` per axis.
pub fn conv2d_transpose<T: Scalar>(input: &Tensor<T>, spec: &ConvSpec<T>) -> Result<Tensor<T>> {
    spec.validate()?;
    let (n, h, w, c) = input.dims4()?;
    if c != spec.in_ch {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_transpose",
            detail: format!("input has {c} channels, spec expects {}", spec.in_ch),
        });
    }
    let oh = (h - 1) * spec.stride + spec.filter_h;
    let ow = (w - 1) * spec.stride + spec.filter_w;
    let mut out = Tensor::zeros(&[n, oh, ow, spec.out_ch]);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ic in 0..c {
                    let v = input.at4(b, y, x, ic);
                    for fy in 0..spec.filter_h {
                        for fx in 0..spec.filter_w {
                            for oc in 0..spec.out_ch {
                                out.add4(
                                    b,
                                    y * spec.stride + fy,
                                    x * spec.stride + fx,
                                    oc,
                                    v * spec.weights.at4(fy, fx, ic, oc),
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    // Bias applies once per output cell.
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                for oc in 0..spec.out_ch {
                    out.add4(b, y, x, oc, spec.bias.data()[oc]);
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`conv2d_transpose`] via the same scatter index map.
pub fn conv2d_transpose_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    let (n, h, w, c) = input.dims4()?;
    let oh = (h - 1) * spec.stride + spec.filter_h;
    let ow = (w - 1) * spec.stride + spec.filter_w;
    if grad_out.shape() != [n, oh, ow, spec.out_ch] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_transpose_backward",
            detail: format!(
                "grad shape {:?}, expected {:?}",
                grad_out.shape(),
                [n, oh, ow, spec.out_ch]
            ),
        });
    }
    let mut d_input = Tensor::zeros(&[n, h, w, c]);
    let mut d_weights = Tensor::zeros(spec.weights.shape());
    let mut d_bias = Tensor::zeros(&[spec.out_ch]);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ic in 0..c {
                    let v = input.at4(b, y, x, ic);
                    let mut acc = T::zero();
                    for fy in 0..spec.filter_h {
                        for fx in 0..spec.filter_w {
                            for oc in 0..spec.out_ch {
                                let g =
                                    grad_out.at4(b, y * spec.stride + fy, x * spec.stride + fx, oc);
                                acc = acc + g * spec.weights.at4(fy, fx, ic, oc);
                                d_weights.add4(fy, fx, ic, oc, g * v);
                            }
                        }
                    }
                    d_input.set4(b, y, x, ic, acc);
                }
            }
        }
    }
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                for oc in 0..spec.out_ch {
                    d_bias.data_mut()[oc] = d_bias.data()[oc] + grad_out.at4(b, y, x, oc);
                }
            }
        }
    }
    Ok(ConvGrads {
        d_input,
        d_weights,
        d_bias,
    })
}

/// Depth-to-space: `out[y, x, c] = in[y/r, x/r, c*r^2 + (y%r)*r + (x%r)]`.
pub fn pixel_shuffle<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(TensorError::Invalid(
            "pixel shuffle factor must be positive".into(),
        ));
    }
    let (n, h, w, c) = input.dims4()?;
    let r2 = factor * factor;
    if c % r2 != 0 {
        return Err(TensorError::ShapeMismatch {
            op: "pixel_shuffle",
            detail: format!("channels {c} not divisible by factor^2 = {r2}"),
        });
    }
    let oc = c / r2;
    let mut out = Tensor::zeros(&[n, h * factor, w * factor, oc]);
    for b in 0..n {
        for y in 0..h * factor {
            for x in 0..w * factor {
                for ch in 0..oc {
                    let src = ch * r2 + (y % factor) * factor + (x % factor);
                    out.set4(b, y, x, ch, input.at4(b, y / factor, x / factor, src));
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`pixel_shuffle`]; also serves as its adjoint since the
/// operation is a pure permutation.
pub fn space_to_depth<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(TensorError::Invalid(
            "space_to_depth factor must be positive".into(),
        ));
    }
    let (n, oh, ow, oc) = input.dims4()?;
    if oh % factor != 0 || ow % factor != 0 {
        return Err(TensorError::ShapeMismatch {
            op: "space_to_depth",
            detail: format!("extents {oh}x{ow} not divisible by factor {factor}"),
        });
    }
    let (h, w) = (oh / factor, ow / factor);
    let mut out = Tensor::zeros(&[n, h, w, oc * factor * factor]);
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                for ch in 0..oc {
                    let dst = ch * factor * factor + (y % factor) * factor + (x % factor);
                    out.set4(b, y / factor, x / factor, dst, input.at4(b, y, x, ch));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Padding;

    #[test]
    fn nearest_worked_example() {
        let t = Tensor::new(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = upsample_nearest(&t, 2).unwrap();
        let expect = [
            1.0, 1.0, 2.0, 2.0, //
            1.0, 1.0, 2.0, 2.0, //
            3.0, 3.0, 4.0, 4.0, //
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(out.data(), expect);
    }

    #[test]
    fn nearest_replication_keeps_constants() {
        let t = Tensor::filled(&[1, 3, 3, 2], 4.25);
        let out = upsample_nearest(&t, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 4.25));
    }

    #[test]
    fn unpool_worked_example() {
        // Maxima at 1-indexed (1,1), (1,4), (3,1), (3,4) of a 4x4 grid.
        let pooled = Tensor::new(&[1, 2, 2, 1], vec![5.0, 8.0, 3.0, 7.0]).unwrap();
        let switches = PoolSwitches {
            window: 2,
            stride: 2,
            input_shape: [1, 4, 4, 1],
            output_shape: [1, 2, 2, 1],
            index: vec![0, 1, 0, 1],
        };
        let out = unpool(&pooled, &switches).unwrap();
        let expect = [
            5.0, 0.0, 0.0, 8.0, //
            0.0, 0.0, 0.0, 0.0, //
            3.0, 0.0, 0.0, 7.0, //
            0.0, 0.0, 0.0, 0.0,
        ];
        assert_eq!(out.data(), expect);
    }

    #[test]
    fn unpool_inverts_max_pool_support() {
        use crate::tensor::{pool2d, PoolMode};
        let input = Tensor::from_fn(&[1, 6, 6, 2], |i| ((i * 37) % 101) as f64);
        let (pooled, sw) = pool2d(&input, 2, 2, PoolMode::Max).unwrap();
        let restored = unpool(&pooled, sw.as_ref().unwrap()).unwrap();
        // Window maxima survive, everything else is zero.
        let mut nonzero = 0;
        for (a, b) in restored.data().iter().zip(input.data()) {
            if *a != 0.0 {
                assert_eq!(a, b);
                nonzero += 1;
            }
        }
        assert_eq!(nonzero, pooled.len());
    }

    fn transpose_spec(stride: usize) -> ConvSpec<f64> {
        ConvSpec::new(
            2,
            2,
            1,
            1,
            stride,
            Padding::Valid,
            Tensor::new(&[2, 2, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Tensor::zeros(&[1]),
        )
        .unwrap()
    }

    /// Brute-force scatter-add oracle, written independently of the
    /// implementation's loop structure.
    fn transpose_oracle(
        input: &[(usize, usize, f64)],
        k: &[[f64; 2]; 2],
        s: usize,
        out_dim: usize,
    ) -> Vec<f64> {
        let mut out = vec![0.0; out_dim * out_dim];
        for &(y, x, v) in input {
            for (fy, krow) in k.iter().enumerate() {
                for (fx, &kv) in krow.iter().enumerate() {
                    out[(y * s + fy) * out_dim + (x * s + fx)] += v * kv;
                }
            }
        }
        out
    }

    #[test]
    fn transpose_worked_example() {
        let t = Tensor::new(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = conv2d_transpose(&t, &transpose_spec(2)).unwrap();
        let expect = [
            1.0, 2.0, 2.0, 4.0, //
            3.0, 4.0, 6.0, 8.0, //
            3.0, 6.0, 4.0, 8.0, //
            9.0, 12.0, 12.0, 16.0,
        ];
        assert_eq!(out.data(), expect);
        let oracle = transpose_oracle(
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 1, 4.0)],
            &[[1.0, 2.0], [3.0, 4.0]],
            2,
            4,
        );
        assert_eq!(out.data(), oracle.as_slice());
    }

    #[test]
    fn transpose_overlap_sums() {
        // Stride 1 makes kernel copies overlap; compare against the oracle.
        let t = Tensor::new(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = conv2d_transpose(&t, &transpose_spec(1)).unwrap();
        let oracle = transpose_oracle(
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 1, 4.0)],
            &[[1.0, 2.0], [3.0, 4.0]],
            1,
            3,
        );
        assert_eq!(out.data(), oracle.as_slice());
    }

    #[test]
    fn pixel_shuffle_worked_shape() {
        let t = Tensor::from_fn(&[1, 3, 3, 4], |i| i as f64);
        let out = pixel_shuffle(&t, 2).unwrap();
        assert_eq!(out.shape(), &[1, 6, 6, 1]);
        // Spot-check the index map at the first 2x2 block.
        assert_eq!(out.at4(0, 0, 0, 0), t.at4(0, 0, 0, 0));
        assert_eq!(out.at4(0, 0, 1, 0), t.at4(0, 0, 0, 1));
        assert_eq!(out.at4(0, 1, 0, 0), t.at4(0, 0, 0, 2));
        assert_eq!(out.at4(0, 1, 1, 0), t.at4(0, 0, 0, 3));
    }

    #[test]
    fn pixel_shuffle_rejects_bad_channels() {
        let t = Tensor::<f64>::zeros(&[1, 3, 3, 6]);
        assert!(pixel_shuffle(&t, 2).is_err());
    }

    #[test]
    fn shuffle_roundtrip_is_exact() {
        let t = Tensor::from_fn(&[2, 3, 4, 8], |i| (i as f64).sin());
        let back = space_to_depth(&pixel_shuffle(&t, 2).unwrap(), 2).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn dispatcher_checks_aux() {
        let t = Tensor::<f64>::zeros(&[1, 2, 2, 4]);
        assert!(upsample(&t, UpsampleMode::PixelShuffle, 2, UpsampleAux::None).is_ok());
        assert!(upsample(&t, UpsampleMode::Unpool, 2, UpsampleAux::None).is_err());
    }
}
