//! Max/average pooling and the switch bookkeeping needed for un-pooling.

use super::{Result, Scalar, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

/// Positions of the window maxima recorded during max pooling.
///
/// `index[flat(n,oy,ox,c)]` is the flat row-major index of the selected
/// maximum *within its window*, i.e. a value in `0..window*window`. Ties go
/// to the first maximum in row-major window order.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSwitches {
    pub window: usize,
    pub stride: usize,
    pub input_shape: [usize; 4],
    pub output_shape: [usize; 4],
    pub index: Vec<u32>,
}

impl PoolSwitches {
    pub fn validate(&self) -> Result<()> {
        let expect: usize = self.output_shape.iter().product();
        if self.index.len() != expect {
            return Err(TensorError::Invalid(format!(
                "switch table has {} entries, output shape {:?} needs {}",
                self.index.len(),
                self.output_shape,
                expect
            )));
        }
        let limit = (self.window * self.window) as u32;
        if let Some(bad) = self.index.iter().position(|&i| i >= limit) {
            return Err(TensorError::Invalid(format!(
                "switch {bad} points outside its {}x{} window",
                self.window, self.window
            )));
        }
        Ok(())
    }
}

fn pool_extents(h: usize, w: usize, window: usize, stride: usize) -> Result<(usize, usize)> {
    if window == 0 || stride == 0 {
        return Err(TensorError::Invalid(
            "pool window and stride must be positive".into(),
        ));
    }
    if window > h || window > w {
        return Err(TensorError::ShapeMismatch {
            op: "pool2d",
            detail: format!("window {window} larger than spatial extents {h}x{w}"),
        });
    }
    Ok(((h - window) / stride + 1, (w - window) / stride + 1))
}

/// Downsamples by taking the max (returning switches) or mean of each window.
pub fn pool2d<T: Scalar>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
    mode: PoolMode,
) -> Result<(Tensor<T>, Option<PoolSwitches>)> {
    let (n, h, w, c) = input.dims4()?;
    let (oh, ow) = pool_extents(h, w, window, stride)?;
    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    let mut switches = match mode {
        PoolMode::Max => Some(PoolSwitches {
            window,
            stride,
            input_shape: [n, h, w, c],
            output_shape: [n, oh, ow, c],
            index: vec![0; n * oh * ow * c],
        }),
        PoolMode::Avg => None,
    };
    let area = T::from_f64((window * window) as f64);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    match mode {
                        PoolMode::Max => {
                            let mut best = input.at4(b, oy * stride, ox * stride, ch);
                            let mut best_idx = 0u32;
                            for wy in 0..window {
                                for wx in 0..window {
                                    let v = input.at4(b, oy * stride + wy, ox * stride + wx, ch);
                                    if v > best {
                                        best = v;
                                        best_idx = (wy * window + wx) as u32;
                                    }
                                }
                            }
                            out.set4(b, oy, ox, ch, best);
                            let sw = switches.as_mut().unwrap();
                            let flat = ((b * oh + oy) * ow + ox) * c + ch;
                            sw.index[flat] = best_idx;
                        }
                        PoolMode::Avg => {
                            let mut acc = T::zero();
                            for wy in 0..window {
                                for wx in 0..window {
                                    acc =
                                        acc + input.at4(b, oy * stride + wy, ox * stride + wx, ch);
                                }
                            }
                            out.set4(b, oy, ox, ch, acc / area);
                        }
                    }
                }
            }
        }
    }
    Ok((out, switches))
}

/// Adjoint of [`pool2d`]: max routes the gradient to the recorded switch
/// position, avg spreads it uniformly over the window.
pub fn pool2d_backward<T: Scalar>(
    input_shape: &[usize],
    window: usize,
    stride: usize,
    mode: PoolMode,
    switches: Option<&PoolSwitches>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, h, w, c) = match input_shape {
        &[n, h, w, c] => (n, h, w, c),
        _ => {
            return Err(TensorError::ShapeMismatch {
                op: "pool2d_backward",
                detail: format!("input shape {input_shape:?} must be rank 4"),
            })
        }
    };
    let (oh, ow) = pool_extents(h, w, window, stride)?;
    if grad_out.shape() != [n, oh, ow, c] {
        return Err(TensorError::ShapeMismatch {
            op: "pool2d_backward",
            detail: format!(
                "grad shape {:?}, expected {:?}",
                grad_out.shape(),
                [n, oh, ow, c]
            ),
        });
    }
    let mut d_input = Tensor::zeros(&[n, h, w, c]);
    let area = T::from_f64((window * window) as f64);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let g = grad_out.at4(b, oy, ox, ch);
                    match mode {
                        PoolMode::Max => {
                            let sw = switches.ok_or_else(|| {
                                TensorError::Invalid("max pool backward requires switches".into())
                            })?;
                            sw.validate()?;
                            let flat = ((b * oh + oy) * ow + ox) * c + ch;
                            let idx = sw.index[flat] as usize;
                            let (wy, wx) = (idx / window, idx % window);
                            d_input.add4(b, oy * stride + wy, ox * stride + wx, ch, g);
                        }
                        PoolMode::Avg => {
                            let share = g / area;
                            for wy in 0..window {
                                for wx in 0..window {
                                    d_input.add4(b, oy * stride + wy, ox * stride + wx, ch, share);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(d_input)
}
