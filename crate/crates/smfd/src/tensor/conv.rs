//! 2-D convolution with explicit, valid, or same padding, plus its adjoint.

use super::{Result, Scalar, Tensor, TensorError};

/// Padding policy for [`conv2d`].
///
/// `Same` resolves so the output preserves the spatial extents when the
/// stride is 1; with a larger stride the output extent is `ceil(dim/stride)`
/// and any odd leftover padding goes to the bottom/right edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Explicit(usize),
    Valid,
    Same,
}

/// Filter bank for a convolution: weights shaped (Fh, Fw, Cin, Cout) and a
/// per-output-channel bias.
#[derive(Debug, Clone)]
pub struct ConvSpec<T: Scalar = f32> {
    pub filter_h: usize,
    pub filter_w: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub padding: Padding,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvSpec<T> {
    pub fn new(
        filter_h: usize,
        filter_w: usize,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        padding: Padding,
        weights: Tensor<T>,
        bias: Tensor<T>,
    ) -> Result<Self> {
        let spec = Self {
            filter_h,
            filter_w,
            in_ch,
            out_ch,
            stride,
            padding,
            weights,
            bias,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_h == 0 || self.filter_w == 0 || self.in_ch == 0 || self.out_ch == 0 {
            return Err(TensorError::Invalid(
                "conv spec extents must be positive".into(),
            ));
        }
        if self.stride == 0 {
            return Err(TensorError::Invalid("conv stride must be positive".into()));
        }
        let want = [self.filter_h, self.filter_w, self.in_ch, self.out_ch];
        if self.weights.shape() != want {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                detail: format!(
                    "weights shape {:?} does not match declared (Fh,Fw,Cin,Cout)={:?}",
                    self.weights.shape(),
                    want
                ),
            });
        }
        if self.bias.shape() != [self.out_ch] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                detail: format!(
                    "bias shape {:?}, expected [{}]",
                    self.bias.shape(),
                    self.out_ch
                ),
            });
        }
        Ok(())
    }

    /// (top, bottom, left, right) padding for a given input extent pair.
    pub fn resolve_padding(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        match self.padding {
            Padding::Explicit(p) => (p, p, p, p),
            Padding::Valid => (0, 0, 0, 0),
            Padding::Same => {
                let pad = |dim: usize, f: usize| {
                    let out = dim.div_ceil(self.stride);
                    let total = ((out - 1) * self.stride + f).saturating_sub(dim);
                    (total / 2, total - total / 2)
                };
                let (pt, pb) = pad(h, self.filter_h);
                let (pl, pr) = pad(w, self.filter_w);
                (pt, pb, pl, pr)
            }
        }
    }

    /// Output spatial extents via `floor((W - F + 2P) / S) + 1` on the padded
    /// input; errors if either extent drops below 1.
    pub fn output_extents(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (pt, pb, pl, pr) = self.resolve_padding(h, w);
        let ext = |dim: usize, f: usize, before: usize, after: usize| -> Result<usize> {
            let padded = dim + before + after;
            if padded < f {
                return Err(TensorError::EmptyOutput {
                    op: "conv2d",
                    detail: format!("input {dim} + padding {} < filter {f}", before + after),
                });
            }
            Ok((padded - f) / self.stride + 1)
        };
        Ok((
            ext(h, self.filter_h, pt, pb)?,
            ext(w, self.filter_w, pl, pr)?,
        ))
    }
}

/// Windowed dot product plus bias at every stride-spaced anchor.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, spec: &ConvSpec<T>) -> Result<Tensor<T>> {
    spec.validate()?;
    let (n, h, w, c) = input.dims4()?;
    if c != spec.in_ch {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            detail: format!("input has {c} channels, spec expects {}", spec.in_ch),
        });
    }
    let (pt, _, pl, _) = spec.resolve_padding(h, w);
    let (oh, ow) = spec.output_extents(h, w)?;
    let out_ch = spec.out_ch;
    let mut out = Tensor::zeros(&[n, oh, ow, out_ch]);
    let in_data = input.data();
    let w_data = spec.weights.data();
    let bias = spec.bias.data();
    let out_data = out.data_mut();
    let mut acc = vec![T::zero(); out_ch];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                acc.copy_from_slice(bias);
                for fy in 0..spec.filter_h {
                    let iy = (oy * spec.stride + fy) as isize - pt as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for fx in 0..spec.filter_w {
                        let ix = (ox * spec.stride + fx) as isize - pl as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let in_base = ((b * h + iy as usize) * w + ix as usize) * c;
                        let w_base = (fy * spec.filter_w + fx) * c * out_ch;
                        for ic in 0..c {
                            let v = in_data[in_base + ic];
                            let w_row = &w_data[w_base + ic * out_ch..w_base + (ic + 1) * out_ch];
                            for (a, &wv) in acc.iter_mut().zip(w_row) {
                                *a = *a + v * wv;
                            }
                        }
                    }
                }
                let out_base = ((b * oh + oy) * ow + ox) * out_ch;
                out_data[out_base..out_base + out_ch].copy_from_slice(&acc);
            }
        }
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its input, weights and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar = f32> {
    pub d_input: Tensor<T>,
    pub d_weights: Tensor<T>,
    pub d_bias: Tensor<T>,
}

/// Adjoint of [`conv2d`]: scatters `grad_out` back through the same index map.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    spec.validate()?;
    let (n, h, w, c) = input.dims4()?;
    let (pt, _, pl, _) = spec.resolve_padding(h, w);
    let (oh, ow) = spec.output_extents(h, w)?;
    if grad_out.shape() != [n, oh, ow, spec.out_ch] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_backward",
            detail: format!(
                "grad shape {:?}, expected {:?}",
                grad_out.shape(),
                [n, oh, ow, spec.out_ch]
            ),
        });
    }
    let out_ch = spec.out_ch;
    let mut d_input = Tensor::zeros(&[n, h, w, c]);
    let mut d_weights = Tensor::zeros(spec.weights.shape());
    let mut d_bias = Tensor::zeros(&[out_ch]);
    let in_data = input.data();
    let w_data = spec.weights.data();
    let g_data = grad_out.data();
    let di = d_input.data_mut();
    let dw = d_weights.data_mut();
    let db = d_bias.data_mut();
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let g_base = ((b * oh + oy) * ow + ox) * out_ch;
                let g_row = &g_data[g_base..g_base + out_ch];
                for (bias_acc, &g) in db.iter_mut().zip(g_row) {
                    *bias_acc = *bias_acc + g;
                }
                for fy in 0..spec.filter_h {
                    let iy = (oy * spec.stride + fy) as isize - pt as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for fx in 0..spec.filter_w {
                        let ix = (ox * spec.stride + fx) as isize - pl as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let in_base = ((b * h + iy as usize) * w + ix as usize) * c;
                        let w_base = (fy * spec.filter_w + fx) * c * out_ch;
                        for ic in 0..c {
                            let w_row = &w_data[w_base + ic * out_ch..w_base + (ic + 1) * out_ch];
                            let dw_row = &mut dw[w_base + ic * out_ch..w_base + (ic + 1) * out_ch];
                            let v = in_data[in_base + ic];
                            let mut acc = T::zero();
                            for ((&g, &wv), dw_cell) in
                                g_row.iter().zip(w_row).zip(dw_row.iter_mut())
                            {
                                acc = acc + g * wv;
                                *dw_cell = *dw_cell + g * v;
                            }
                            di[in_base + ic] = di[in_base + ic] + acc;
                        }
                    }
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
