//! Tensor-level building blocks that are composites of primitive ops: CBAM
//! attention and the contrast/brightness post-processing step. Both come
//! with hand-derived adjoints so the graph backward pass and the gradient
//! suite can treat them as single layers.

use crate::tensor::{
    activate, conv2d, conv2d_backward, Activation, ConvSpec, Padding, Result as TensorResult,
    Scalar, Tensor, TensorError,
};

/// CBAM parameters: a shared two-layer 1x1-conv MLP for channel attention
/// (weights shaped like conv kernels) and a 7x7 conv for spatial attention.
#[derive(Debug, Clone)]
pub struct CbamParams<T: Scalar = f32> {
    /// (1, 1, C, C/r)
    pub mlp1_w: Tensor<T>,
    pub mlp1_b: Tensor<T>,
    /// (1, 1, C/r, C)
    pub mlp2_w: Tensor<T>,
    pub mlp2_b: Tensor<T>,
    /// (7, 7, 2, 1)
    pub spatial_w: Tensor<T>,
    pub spatial_b: Tensor<T>,
}

pub const CBAM_SPATIAL_FILTER: usize = 7;

impl<T: Scalar> CbamParams<T> {
    pub fn shapes(channels: usize, reduction: usize) -> [(String, Vec<usize>); 6] {
        let reduced = channels / reduction;
        [
            ("mlp1.weight".into(), vec![1, 1, channels, reduced]),
            ("mlp1.bias".into(), vec![reduced]),
            ("mlp2.weight".into(), vec![1, 1, reduced, channels]),
            ("mlp2.bias".into(), vec![channels]),
            (
                "spatial.weight".into(),
                vec![CBAM_SPATIAL_FILTER, CBAM_SPATIAL_FILTER, 2, 1],
            ),
            ("spatial.bias".into(), vec![1]),
        ]
    }

    fn mlp1_spec(&self) -> TensorResult<ConvSpec<T>> {
        let shape = self.mlp1_w.shape();
        ConvSpec::new(
            1,
            1,
            shape[2],
            shape[3],
            1,
            Padding::Valid,
            self.mlp1_w.clone(),
            self.mlp1_b.clone(),
        )
    }

    fn mlp2_spec(&self) -> TensorResult<ConvSpec<T>> {
        let shape = self.mlp2_w.shape();
        ConvSpec::new(
            1,
            1,
            shape[2],
            shape[3],
            1,
            Padding::Valid,
            self.mlp2_w.clone(),
            self.mlp2_b.clone(),
        )
    }

    fn spatial_spec(&self) -> TensorResult<ConvSpec<T>> {
        ConvSpec::new(
            CBAM_SPATIAL_FILTER,
            CBAM_SPATIAL_FILTER,
            2,
            1,
            1,
            Padding::Same,
            self.spatial_w.clone(),
            self.spatial_b.clone(),
        )
    }
}

/// Intermediates needed by [`cbam_backward`].
#[derive(Debug, Clone)]
pub struct CbamCache<T: Scalar = f32> {
    input: Tensor<T>,
    avg_desc: Tensor<T>,
    max_desc: Tensor<T>,
    /// Flat spatial argmax per (n, c) for the global max pool.
    max_pos: Vec<usize>,
    mlp_hidden_pre: [Tensor<T>; 2],
    mlp_hidden: [Tensor<T>; 2],
    /// Channel gate, (N, 1, 1, C).
    channel_gate: Tensor<T>,
    gated: Tensor<T>,
    /// Channel argmax per (n, y, x) for the spatial max map.
    channel_max_pos: Vec<usize>,
    spatial_maps: Tensor<T>,
    /// Spatial gate, (N, H, W, 1).
    spatial_gate: Tensor<T>,
}

impl<T: Scalar> CbamCache<T> {
    /// Channel gate, shaped (N, 1, 1, C); values in (0, 1).
    pub fn channel_gate(&self) -> &Tensor<T> {
        &self.channel_gate
    }

    /// Spatial gate, shaped (N, H, W, 1); values in (0, 1).
    pub fn spatial_gate(&self) -> &Tensor<T> {
        &self.spatial_gate
    }
}

/// Channel attention (global avg+max pool through a shared MLP, sigmoid,
/// scale) followed by spatial attention (channel avg+max maps, 7x7 conv,
/// sigmoid, scale).
pub fn cbam_forward<T: Scalar>(
    input: &Tensor<T>,
    params: &CbamParams<T>,
) -> TensorResult<(Tensor<T>, CbamCache<T>)> {
    let (n, h, w, c) = input.dims4()?;
    if params.mlp1_w.shape()[2] != c {
        return Err(TensorError::ShapeMismatch {
            op: "cbam",
            detail: format!(
                "input has {c} channels, MLP expects {}",
                params.mlp1_w.shape()[2]
            ),
        });
    }
    let area = T::from_f64((h * w) as f64);

    // Global descriptors as (N, 1, 1, C) so the shared MLP is a 1x1 conv.
    let mut avg_desc = Tensor::zeros(&[n, 1, 1, c]);
    let mut max_desc = Tensor::zeros(&[n, 1, 1, c]);
    let mut max_pos = vec![0usize; n * c];
    for b in 0..n {
        for ch in 0..c {
            let mut sum = T::zero();
            let mut best = input.at4(b, 0, 0, ch);
            let mut best_at = 0usize;
            for y in 0..h {
                for x in 0..w {
                    let v = input.at4(b, y, x, ch);
                    sum = sum + v;
                    if v > best {
                        best = v;
                        best_at = y * w + x;
                    }
                }
            }
            avg_desc.set4(b, 0, 0, ch, sum / area);
            max_desc.set4(b, 0, 0, ch, best);
            max_pos[b * c + ch] = best_at;
        }
    }

    let mlp1 = params.mlp1_spec()?;
    let mlp2 = params.mlp2_spec()?;
    let run_mlp = |desc: &Tensor<T>| -> TensorResult<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let pre = conv2d(desc, &mlp1)?;
        let hidden = activate(&pre, Activation::Relu);
        let out = conv2d(&hidden, &mlp2)?;
        Ok((pre, hidden, out))
    };
    let (pre_a, hid_a, out_a) = run_mlp(&avg_desc)?;
    let (pre_m, hid_m, out_m) = run_mlp(&max_desc)?;
    let channel_gate = activate(&out_a.zip_map(&out_m, |a, b| a + b)?, Activation::Sigmoid);

    // x_c = x (.) W_c, broadcast over the spatial extent.
    let mut gated = Tensor::zeros(&[n, h, w, c]);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    gated.set4(
                        b,
                        y,
                        x,
                        ch,
                        input.at4(b, y, x, ch) * channel_gate.at4(b, 0, 0, ch),
                    );
                }
            }
        }
    }

    // Channelwise avg and max maps, concatenated to (N, H, W, 2).
    let inv_c = T::one() / T::from_f64(c as f64);
    let mut spatial_maps = Tensor::zeros(&[n, h, w, 2]);
    let mut channel_max_pos = vec![0usize; n * h * w];
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let mut sum = T::zero();
                let mut best = gated.at4(b, y, x, 0);
                let mut best_ch = 0usize;
                for ch in 0..c {
                    let v = gated.at4(b, y, x, ch);
                    sum = sum + v;
                    if v > best {
                        best = v;
                        best_ch = ch;
                    }
                }
                spatial_maps.set4(b, y, x, 0, sum * inv_c);
                spatial_maps.set4(b, y, x, 1, best);
                channel_max_pos[(b * h + y) * w + x] = best_ch;
            }
        }
    }
    let spatial_gate = activate(
        &conv2d(&spatial_maps, &params.spatial_spec()?)?,
        Activation::Sigmoid,
    );

    let mut out = Tensor::zeros(&[n, h, w, c]);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let g = spatial_gate.at4(b, y, x, 0);
                for ch in 0..c {
                    out.set4(b, y, x, ch, gated.at4(b, y, x, ch) * g);
                }
            }
        }
    }

    Ok((
        out,
        CbamCache {
            input: input.clone(),
            avg_desc,
            max_desc,
            max_pos,
            mlp_hidden_pre: [pre_a, pre_m],
            mlp_hidden: [hid_a, hid_m],
            channel_gate,
            gated,
            channel_max_pos,
            spatial_maps,
            spatial_gate,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct CbamGrads<T: Scalar = f32> {
    pub d_input: Tensor<T>,
    pub d_mlp1_w: Tensor<T>,
    pub d_mlp1_b: Tensor<T>,
    pub d_mlp2_w: Tensor<T>,
    pub d_mlp2_b: Tensor<T>,
    pub d_spatial_w: Tensor<T>,
    pub d_spatial_b: Tensor<T>,
}

/// Adjoint of [`cbam_forward`]. The input gradient accumulates the direct
/// gating path plus the paths through both attention branches.
pub fn cbam_backward<T: Scalar>(
    params: &CbamParams<T>,
    cache: &CbamCache<T>,
    grad_out: &Tensor<T>,
) -> TensorResult<CbamGrads<T>> {
    let (n, h, w, c) = cache.input.dims4()?;
    if grad_out.shape() != cache.input.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "cbam_backward",
            detail: format!(
                "grad shape {:?} vs input {:?}",
                grad_out.shape(),
                cache.input.shape()
            ),
        });
    }

    // out = gated (.) spatial_gate.
    let mut d_gated = Tensor::zeros(&[n, h, w, c]);
    let mut d_spatial_gate = Tensor::zeros(&[n, h, w, 1]);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let sg = cache.spatial_gate.at4(b, y, x, 0);
                let mut acc = T::zero();
                for ch in 0..c {
                    let g = grad_out.at4(b, y, x, ch);
                    d_gated.set4(b, y, x, ch, g * sg);
                    acc = acc + g * cache.gated.at4(b, y, x, ch);
                }
                d_spatial_gate.set4(b, y, x, 0, acc);
            }
        }
    }

    // Through the spatial sigmoid and 7x7 conv.
    let d_spatial_pre =
        d_spatial_gate.zip_map(&cache.spatial_gate, |g, s| g * s * (T::one() - s))?;
    let spatial_grads =
        conv2d_backward(&cache.spatial_maps, &params.spatial_spec()?, &d_spatial_pre)?;

    // Through the channel avg/max maps back onto `gated`.
    let inv_c = T::one() / T::from_f64(c as f64);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                let d_avg = spatial_grads.d_input.at4(b, y, x, 0) * inv_c;
                for ch in 0..c {
                    d_gated.add4(b, y, x, ch, d_avg);
                }
                let best_ch = cache.channel_max_pos[(b * h + y) * w + x];
                d_gated.add4(b, y, x, best_ch, spatial_grads.d_input.at4(b, y, x, 1));
            }
        }
    }

    // gated = input (.) channel_gate.
    let mut d_input = Tensor::zeros(&[n, h, w, c]);
    let mut d_channel_gate = Tensor::zeros(&[n, 1, 1, c]);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let g = d_gated.at4(b, y, x, ch);
                    d_input.add4(b, y, x, ch, g * cache.channel_gate.at4(b, 0, 0, ch));
                    d_channel_gate.add4(b, 0, 0, ch, g * cache.input.at4(b, y, x, ch));
                }
            }
        }
    }

    // Through the channel sigmoid into both MLP branches.
    let d_gate_pre = d_channel_gate.zip_map(&cache.channel_gate, |g, s| g * s * (T::one() - s))?;
    let mlp1 = params.mlp1_spec()?;
    let mlp2 = params.mlp2_spec()?;
    let mut d_mlp1_w = Tensor::zeros(params.mlp1_w.shape());
    let mut d_mlp1_b = Tensor::zeros(params.mlp1_b.shape());
    let mut d_mlp2_w = Tensor::zeros(params.mlp2_w.shape());
    let mut d_mlp2_b = Tensor::zeros(params.mlp2_b.shape());
    let mut d_descs = Vec::with_capacity(2);
    for (i, desc) in [&cache.avg_desc, &cache.max_desc].into_iter().enumerate() {
        let g2 = conv2d_backward(&cache.mlp_hidden[i], &mlp2, &d_gate_pre)?;
        let d_hidden = activate_relu_backward(&cache.mlp_hidden_pre[i], &g2.d_input);
        let g1 = conv2d_backward(desc, &mlp1, &d_hidden)?;
        d_mlp1_w = d_mlp1_w.zip_map(&g1.d_weights, |a, b| a + b)?;
        d_mlp1_b = d_mlp1_b.zip_map(&g1.d_bias, |a, b| a + b)?;
        d_mlp2_w = d_mlp2_w.zip_map(&g2.d_weights, |a, b| a + b)?;
        d_mlp2_b = d_mlp2_b.zip_map(&g2.d_bias, |a, b| a + b)?;
        d_descs.push(g1.d_input);
    }

    // Scatter descriptor gradients: avg spreads uniformly, max goes to the
    // recorded position.
    let area = T::from_f64((h * w) as f64);
    for b in 0..n {
        for ch in 0..c {
            let d_avg = d_descs[0].at4(b, 0, 0, ch) / area;
            for y in 0..h {
                for x in 0..w {
                    d_input.add4(b, y, x, ch, d_avg);
                }
            }
            let pos = cache.max_pos[b * c + ch];
            d_input.add4(b, pos / w, pos % w, ch, d_descs[1].at4(b, 0, 0, ch));
        }
    }

    Ok(CbamGrads {
        d_input,
        d_mlp1_w,
        d_mlp1_b,
        d_mlp2_w,
        d_mlp2_b,
        d_spatial_w: spatial_grads.d_weights,
        d_spatial_b: spatial_grads.d_bias,
    })
}

fn activate_relu_backward<T: Scalar>(pre: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    grad.zip_map(pre, |g, x| if x > T::zero() { g } else { T::zero() })
        .expect("shapes match by construction")
}

/// Brightness/contrast adjustment `(img - mu) * c + mu + b` with `mu` the
/// per-image mean intensity. No clamping here; the network terminal clamps.
pub fn postprocess_image<T: Scalar>(
    img: &Tensor<T>,
    contrast: T,
    brightness: T,
) -> TensorResult<Tensor<T>> {
    let lifted = img.to_nhwc()?;
    let (n, h, w, c) = lifted.dims4()?;
    let mut out = lifted.clone();
    let area = T::from_f64((h * w * c) as f64);
    for b in 0..n {
        let mut mean = T::zero();
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    mean = mean + lifted.at4(b, y, x, ch);
                }
            }
        }
        mean = mean / area;
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let v = (lifted.at4(b, y, x, ch) - mean) * contrast + mean + brightness;
                    out.set4(b, y, x, ch, v);
                }
            }
        }
    }
    out.reshape(img.shape())
}

/// Adjoint of [`postprocess_image`]:
/// `dx = c * dy + (1 - c) * mean(dy)` per image.
pub fn postprocess_image_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    contrast: T,
) -> TensorResult<Tensor<T>> {
    let lifted = grad_out.to_nhwc()?;
    let (n, h, w, c) = lifted.dims4()?;
    let mut out = lifted.clone();
    let area = T::from_f64((h * w * c) as f64);
    for b in 0..n {
        let mut mean = T::zero();
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    mean = mean + lifted.at4(b, y, x, ch);
                }
            }
        }
        mean = mean / area;
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let v = contrast * lifted.at4(b, y, x, ch) + (T::one() - contrast) * mean;
                    out.set4(b, y, x, ch, v);
                }
            }
        }
    }
    out.reshape(grad_out.shape())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, project, projection};

    pub(crate) fn toy_params(c: usize, r: usize, seed: usize) -> CbamParams<f64> {
        let cr = c / r;
        let gen = |shape: &[usize], k: usize| {
            Tensor::from_fn(shape, |i| {
                (((i * 31 + k * 17 + seed * 7) % 23) as f64 - 11.0) / 23.0
            })
        };
        CbamParams {
            mlp1_w: gen(&[1, 1, c, cr], 1),
            mlp1_b: gen(&[cr], 2),
            mlp2_w: gen(&[1, 1, cr, c], 3),
            mlp2_b: gen(&[c], 4),
            spatial_w: gen(&[7, 7, 2, 1], 5),
            spatial_b: gen(&[1], 6),
        }
    }

    #[test]
    fn gates_are_in_open_unit_interval_and_shape_is_kept() {
        let x = Tensor::from_fn(&[2, 5, 5, 4], |i| ((i * 13 % 29) as f64 - 14.0) / 5.0);
        let params = toy_params(4, 2, 0);
        let (out, cache) = cbam_forward(&x, &params).unwrap();
        assert_eq!(out.shape(), x.shape());
        for &g in cache
            .channel_gate
            .data()
            .iter()
            .chain(cache.spatial_gate.data())
        {
            assert!(g > 0.0 && g < 1.0, "gate {g} outside (0,1)");
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let x = Tensor::<f64>::zeros(&[1, 4, 4, 4]);
        let params = toy_params(4, 2, 1);
        let (out, _) = cbam_forward(&x, &params).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cbam_composition_gradient() {
        // Full composite adjoint vs finite differences over input and all
        // six parameter tensors.
        let x = Tensor::from_fn(&[1, 4, 4, 4], |i| (((i * 37) % 19) as f64 - 9.0) / 6.0);
        let params = toy_params(4, 2, 2);
        let inputs = vec![
            x,
            params.mlp1_w.clone(),
            params.mlp1_b.clone(),
            params.mlp2_w.clone(),
            params.mlp2_b.clone(),
            params.spatial_w.clone(),
            params.spatial_b.clone(),
        ];
        let assemble = |ins: &[Tensor<f64>]| CbamParams {
            mlp1_w: ins[1].clone(),
            mlp1_b: ins[2].clone(),
            mlp2_w: ins[3].clone(),
            mlp2_b: ins[4].clone(),
            spatial_w: ins[5].clone(),
            spatial_b: ins[6].clone(),
        };
        let w = projection(&[1, 4, 4, 4], 0.3);
        let report = grad_check(
            &inputs,
            |ins| {
                let (out, _) = cbam_forward(&ins[0], &assemble(ins)).unwrap();
                project(&out, &w)
            },
            |ins| {
                let p = assemble(ins);
                let (_, cache) = cbam_forward(&ins[0], &p).unwrap();
                let g = cbam_backward(&p, &cache, &w).unwrap();
                vec![
                    g.d_input,
                    g.d_mlp1_w,
                    g.d_mlp1_b,
                    g.d_mlp2_w,
                    g.d_mlp2_b,
                    g.d_spatial_w,
                    g.d_spatial_b,
                ]
            },
            1e-4,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn postprocess_constant_shifts_by_brightness() {
        let img = Tensor::filled(&[4, 4, 3], 0.4f64);
        let out = postprocess_image(&img, 2.0, 0.1).unwrap();
        for &v in out.data() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn postprocess_worked_pixel() {
        // Mean 0.5 image; pixel 0.6 maps to 0.8 with c=2, b=0.1.
        let mut img = Tensor::filled(&[2, 2, 1], 0.5f64);
        img.data_mut()[0] = 0.6;
        img.data_mut()[1] = 0.4;
        let out = postprocess_image(&img, 2.0, 0.1).unwrap();
        assert!((out.data()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn postprocess_mean_shift_is_exactly_brightness() {
        let img = Tensor::from_fn(&[1, 6, 6, 3], |i| ((i * 11 % 17) as f64) / 17.0);
        let out = postprocess_image(&img, 2.0, 0.1).unwrap();
        let shift = out.mean() - img.mean();
        assert!((shift - 0.1).abs() < 1e-12);
        // Monotone affine map keeps the argmax pixel.
        let argmax = |t: &Tensor<f64>| {
            t.data()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&img), argmax(&out));
    }

    #[test]
    fn postprocess_gradient() {
        let img = Tensor::from_fn(&[1, 4, 4, 2], |i| ((i * 7 % 13) as f64) / 13.0);
        let w = projection(img.shape(), 0.9);
        let report = grad_check(
            &[img],
            |ins| project(&postprocess_image(&ins[0], 2.0, 0.1).unwrap(), &w),
            |_| vec![postprocess_image_backward(&w, 2.0).unwrap()],
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }
}
