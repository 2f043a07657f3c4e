//! Optimizer, schedule/early-stop state machines, augmentation, fold
//! splitting, and a desk-scale smoke-training loop.

use crate::degrade::resize_bilinear;
use crate::maskops::{one_hot, LabelMask, LabelSpace, MaskError, TrainingPair};
use crate::metrics::{dice_jaccard, dice_loss_grad, MetricError};
use crate::nets::{
    backward, build_network, forward, init_weights, ExecutionOptions, NamedTensorStore, NetConfig,
    NetError, NetKind, NetworkGraph,
};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::{BnMode, Tensor, TensorError};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("gradient shape {actual:?} does not match parameter {name} {expected:?}")]
    GradientShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("dataset too small: {0} samples, need at least 10")]
    DatasetTooSmall(usize),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("smoke training needs at least one pair")]
    NoData,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Adam optimizer state; moments mirror the parameter store shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first_moment: NamedTensorStore,
    second_moment: NamedTensorStore,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: NamedTensorStore::new(),
            second_moment: NamedTensorStore::new(),
        }
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.001)
    }
}

/// One Adam update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, bias-corrected, then
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`. Parameters without a
/// gradient entry are left untouched.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut NamedTensorStore,
    grads: &NamedTensorStore,
) -> Result<()> {
    for (name, grad) in grads.iter() {
        if let Some(bad) = grad.data().iter().position(|v| !v.is_finite()) {
            let _ = bad;
            return Err(TrainError::NonFiniteGradient(name.clone()));
        }
        let Some(param) = params.get(name) else {
            continue;
        };
        if param.shape() != grad.shape() {
            return Err(TrainError::GradientShape {
                name: name.clone(),
                expected: param.shape().to_vec(),
                actual: grad.shape().to_vec(),
            });
        }
        if !state.first_moment.contains(name) {
            state.first_moment.put(name, Tensor::zeros(param.shape()));
            state.second_moment.put(name, Tensor::zeros(param.shape()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - state.beta1.powi(t);
    let correction2 = 1.0 - state.beta2.powi(t);
    for (name, grad) in grads.iter() {
        let Some(param) = params.get_mut(name) else {
            continue;
        };
        let m = state.first_moment.get_mut(name).expect("moment allocated");
        let v = state.second_moment.get_mut(name).expect("moment allocated");
        let (b1, b2) = (state.beta1, state.beta2);
        for i in 0..param.len() {
            let g = grad.data()[i] as f64;
            let mi = b1 * m.data()[i] as f64 + (1.0 - b1) * g;
            let vi = b2 * v.data()[i] as f64 + (1.0 - b2) * g * g;
            m.data_mut()[i] = mi as f32;
            v.data_mut()[i] = vi as f32;
            let m_hat = mi / correction1;
            let v_hat = vi / correction2;
            let update = state.lr * m_hat / (v_hat.sqrt() + state.eps);
            param.data_mut()[i] -= update as f32;
        }
    }
    Ok(())
}

/// Metric that training monitors; both are maximize-mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monitored {
    Dice,
    Ssim,
}

/// Improvement means exceeding the best by at least this margin, so float
/// noise cannot reset the stall counters.
pub const IMPROVEMENT_EPS: f64 = 1e-8;

/// Learning-rate plateau scheduler: after `patience` consecutive epochs
/// without improvement the rate is multiplied by `factor`, never dropping
/// below `floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState {
    pub monitored: Monitored,
    pub best: f64,
    pub stall: usize,
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub floor: f64,
}

impl PlateauState {
    pub fn new(monitored: Monitored, lr: f64) -> Self {
        Self {
            monitored,
            best: f64::NEG_INFINITY,
            stall: 0,
            lr,
            factor: 0.2,
            patience: 5,
            floor: 1e-9,
        }
    }
}

pub fn plateau_step(state: &PlateauState, epoch_metric: f64) -> PlateauState {
    let mut next = state.clone();
    if epoch_metric > state.best + IMPROVEMENT_EPS {
        next.best = epoch_metric;
        next.stall = 0;
        return next;
    }
    next.stall += 1;
    if next.stall >= next.patience {
        next.lr = (next.lr * next.factor).max(next.floor);
        next.stall = 0;
    }
    next
}

/// Early stopping after `patience` consecutive non-improvements.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopState {
    pub best: f64,
    pub stall: usize,
    pub patience: usize,
    pub stopped: bool,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self {
            best: f64::NEG_INFINITY,
            stall: 0,
            patience: 10,
            stopped: false,
        }
    }
}

pub fn early_stop_step(state: &EarlyStopState, epoch_metric: f64) -> EarlyStopState {
    let mut next = state.clone();
    if epoch_metric > state.best + IMPROVEMENT_EPS {
        next.best = epoch_metric;
        next.stall = 0;
        return next;
    }
    next.stall += 1;
    if next.stall >= next.patience {
        next.stopped = true;
    }
    next
}

/// Augmentation ranges. Draw order per sample: rotation angle, flip coin,
/// crop scale, crop x offset, crop y offset, brightness, contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub max_rotation_deg: f64,
    pub flip_probability: f64,
    pub crop_scale: (f64, f64),
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            max_rotation_deg: 30.0,
            flip_probability: 0.5,
            crop_scale: (0.8, 1.0),
            brightness: (0.7, 1.3),
            contrast: (0.7, 1.3),
            seed: 0,
        }
    }
}

/// One concrete augmentation draw.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentDraw {
    pub rotation_deg: f64,
    pub flip: bool,
    pub crop_scale: f64,
    pub crop_x: f64,
    pub crop_y: f64,
    pub brightness: f64,
    pub contrast: f64,
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw {
        rotation_deg: 0.0,
        flip: false,
        crop_scale: 1.0,
        crop_x: 0.0,
        crop_y: 0.0,
        brightness: 1.0,
        contrast: 1.0,
    };

    pub fn sample(spec: &AugmentSpec, draw_seed: u64) -> Self {
        let mut rng = SeededRng::new(derive_seed(spec.seed, draw_seed));
        AugmentDraw {
            rotation_deg: rng.uniform_range(-spec.max_rotation_deg, spec.max_rotation_deg),
            flip: rng.flip(spec.flip_probability),
            crop_scale: rng.uniform_range(spec.crop_scale.0, spec.crop_scale.1),
            crop_x: rng.uniform(),
            crop_y: rng.uniform(),
            brightness: rng.uniform_range(spec.brightness.0, spec.brightness.1),
            contrast: rng.uniform_range(spec.contrast.0, spec.contrast.1),
        }
    }
}

fn rotate_image(img: &Tensor<f32>, degrees: f64, nearest: bool) -> Tensor<f32> {
    if degrees == 0.0 {
        return img.clone();
    }
    let (h, w, c) = img.dims3().expect("rank-3 image");
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = Tensor::zeros(&[h, w, c]);
    for y in 0..h {
        for x in 0..w {
            // Inverse rotation about the image center, constant-0 fill.
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sy = cy + dy * cos - dx * sin;
            let sx = cx + dy * sin + dx * cos;
            if sy < 0.0 || sx < 0.0 || sy > (h - 1) as f64 || sx > (w - 1) as f64 {
                continue;
            }
            for ch in 0..c {
                let v = if nearest {
                    img.at3(sy.round() as usize, sx.round() as usize, ch)
                } else {
                    let y0 = sy.floor() as usize;
                    let x0 = sx.floor() as usize;
                    let y1 = (y0 + 1).min(h - 1);
                    let x1 = (x0 + 1).min(w - 1);
                    let wy = (sy - y0 as f64) as f32;
                    let wx = (sx - x0 as f64) as f32;
                    let top = img.at3(y0, x0, ch) * (1.0 - wx) + img.at3(y0, x1, ch) * wx;
                    let bot = img.at3(y1, x0, ch) * (1.0 - wx) + img.at3(y1, x1, ch) * wx;
                    top * (1.0 - wy) + bot * wy
                };
                out.set3(y, x, ch, v);
            }
        }
    }
    out
}

fn flip_horizontal(img: &Tensor<f32>) -> Tensor<f32> {
    let (h, w, c) = img.dims3().expect("rank-3 image");
    let mut out = Tensor::zeros(&[h, w, c]);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.set3(y, x, ch, img.at3(y, w - 1 - x, ch));
            }
        }
    }
    out
}

fn crop_resize(img: &Tensor<f32>, draw: &AugmentDraw, nearest: bool) -> Tensor<f32> {
    if draw.crop_scale >= 1.0 {
        return img.clone();
    }
    let (h, w, c) = img.dims3().expect("rank-3 image");
    let ch_ = ((h as f64 * draw.crop_scale).round() as usize).clamp(1, h);
    let cw = ((w as f64 * draw.crop_scale).round() as usize).clamp(1, w);
    let oy = ((h - ch_) as f64 * draw.crop_y).round() as usize;
    let ox = ((w - cw) as f64 * draw.crop_x).round() as usize;
    let mut cropped = Tensor::zeros(&[ch_, cw, c]);
    for y in 0..ch_ {
        for x in 0..cw {
            for k in 0..c {
                cropped.set3(y, x, k, img.at3(oy + y, ox + x, k));
            }
        }
    }
    if nearest {
        nearest_resize_rank3(&cropped, h, w)
    } else {
        resize_bilinear(&cropped, h, w).expect("resize back to original extents")
    }
}

fn nearest_resize_rank3(img: &Tensor<f32>, out_h: usize, out_w: usize) -> Tensor<f32> {
    let (h, w, c) = img.dims3().expect("rank-3 image");
    let mut out = Tensor::zeros(&[out_h, out_w, c]);
    for y in 0..out_h {
        let sy = (((y as f64 + 0.5) * h as f64 / out_h as f64 - 0.5).round())
            .clamp(0.0, (h - 1) as f64) as usize;
        for x in 0..out_w {
            let sx = (((x as f64 + 0.5) * w as f64 / out_w as f64 - 0.5).round())
                .clamp(0.0, (w - 1) as f64) as usize;
            for ch in 0..c {
                out.set3(y, x, ch, img.at3(sy, sx, ch));
            }
        }
    }
    out
}

fn mask_to_tensor(mask: &LabelMask) -> Tensor<f32> {
    Tensor::from_fn(&[mask.height, mask.width, 1], |i| mask.labels[i] as f32)
}

fn tensor_to_mask(t: &Tensor<f32>, space: LabelSpace) -> LabelMask {
    let (h, w, _) = t.dims3().expect("rank-3 mask tensor");
    let labels = t.data().iter().map(|&v| v.round() as u8).collect();
    LabelMask::new(h, w, labels, space).expect("labels preserved by nearest resampling")
}

/// Applies one sampled draw: geometric transforms (rotation, flip, crop)
/// hit the sharp image, the degraded image, and the mask identically (the
/// mask via nearest-neighbor resampling); photometric transforms
/// (multiplicative brightness, mean-anchored contrast) hit images only.
/// Image outputs are clamped to [0, 1].
pub fn augment(pair: &TrainingPair, spec: &AugmentSpec, draw_seed: u64) -> Result<TrainingPair> {
    let draw = AugmentDraw::sample(spec, draw_seed);
    augment_with_draw(pair, &draw)
}

pub fn augment_with_draw(pair: &TrainingPair, draw: &AugmentDraw) -> Result<TrainingPair> {
    let geometric = |img: &Tensor<f32>, nearest: bool| -> Tensor<f32> {
        let mut out = rotate_image(img, draw.rotation_deg, nearest);
        if draw.flip {
            out = flip_horizontal(&out);
        }
        crop_resize(&out, draw, nearest)
    };
    let photometric = |img: &Tensor<f32>| -> Tensor<f32> {
        let bright = if draw.brightness == 1.0 {
            img.clone()
        } else {
            img.map(|v| v * draw.brightness as f32)
        };
        let contrasted = if draw.contrast == 1.0 {
            bright
        } else {
            let mean = bright.mean();
            bright.map(|v| (v - mean) * draw.contrast as f32 + mean)
        };
        contrasted.map(|v| v.clamp(0.0, 1.0))
    };

    let sharp = photometric(&geometric(&pair.sharp, false));
    let blurry = photometric(&geometric(&pair.blurry, false));
    let blurry_gray = crate::maskops::grayscale(&blurry)?;
    let mask = tensor_to_mask(
        &geometric(&mask_to_tensor(&pair.mask), true),
        pair.mask.space,
    );
    let mask_onehot = one_hot(&mask, mask.space.class_count())?;
    Ok(TrainingPair {
        sharp,
        blurry,
        blurry_gray,
        mask,
        mask_onehot,
    })
}

/// Deterministic 80:20 test split plus a 5-fold partition of the remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub test: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
}

pub const FOLD_COUNT: usize = 5;
pub const TEST_FRACTION: f64 = 0.2;

pub fn kfold_split(n: usize, seed: u64) -> Result<FoldPlan> {
    if n < 10 {
        return Err(TrainError::DatasetTooSmall(n));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut indices);
    let test_len = ((n as f64) * TEST_FRACTION).round() as usize;
    let test = indices[..test_len].to_vec();
    let pool = &indices[test_len..];
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); FOLD_COUNT];
    for (i, &idx) in pool.iter().enumerate() {
        folds[i % FOLD_COUNT].push(idx);
    }
    Ok(FoldPlan { test, folds })
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub loss: f64,
    pub metric: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub final_weights: NamedTensorStore,
    pub best_weights: NamedTensorStore,
    pub best_metric: f64,
    pub best_step: u64,
    pub trace: Vec<TraceRow>,
}

impl TrainReport {
    /// CSV rows as `step,loss,metric` with a header line.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("step,loss,metric\n");
        for row in &self.trace {
            out.push_str(&format!(
                "{},{:.9e},{:.9e}\n",
                row.step, row.loss, row.metric
            ));
        }
        out
    }
}

fn stack_batch(tensors: &[&Tensor<f32>]) -> Tensor<f32> {
    let (h, w, c) = tensors[0].dims3().expect("rank-3 samples");
    let mut out = Tensor::zeros(&[tensors.len(), h, w, c]);
    for (b, t) in tensors.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out.set4(b, y, x, ch, t.at3(y, x, ch));
                }
            }
        }
    }
    out
}

/// Learning rate of the smoke loop. Higher than the full-training default
/// because the toy runs are only a few hundred steps.
pub const SMOKE_LR: f64 = 0.005;

/// Full-batch smoke training at toy scale.
///
/// SMFD-UNet trains on MSE against the sharp targets and monitors SSIM;
/// the mask generator trains on Dice loss against the one-hot masks and
/// monitors Dice. Weights snapshot whenever the monitored metric improves.
/// Identical seeds produce bit-identical traces.
pub fn train_smoke(
    kind: NetKind,
    config: &NetConfig,
    data: &[TrainingPair],
    steps: u64,
    seed: u64,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(TrainError::NoData);
    }
    let graph = build_network(kind, config)?;
    let mut weights = init_weights(&graph, seed)?;
    let mut adam = AdamState::new(SMOKE_LR);

    let inputs: HashMap<String, Tensor<f32>> = match kind {
        NetKind::MaskGenerator => HashMap::from([(
            "image".to_string(),
            stack_batch(&data.iter().map(|p| &p.blurry_gray).collect::<Vec<_>>()),
        )]),
        NetKind::SmfdUnet => {
            let mut m = HashMap::from([(
                "image".to_string(),
                stack_batch(&data.iter().map(|p| &p.blurry).collect::<Vec<_>>()),
            )]);
            if config.mask_branch {
                m.insert(
                    "mask".to_string(),
                    stack_batch(&data.iter().map(|p| &p.mask_onehot).collect::<Vec<_>>()),
                );
            }
            m
        }
    };
    let target = match kind {
        NetKind::MaskGenerator => {
            stack_batch(&data.iter().map(|p| &p.mask_onehot).collect::<Vec<_>>())
        }
        NetKind::SmfdUnet => stack_batch(&data.iter().map(|p| &p.sharp).collect::<Vec<_>>()),
    };

    let mut best_metric = f64::NEG_INFINITY;
    let mut best_step = 0;
    let mut best_weights = weights.clone();
    let mut trace = Vec::with_capacity(steps as usize);

    for step in 0..steps {
        let (output, exec) = forward(&graph, &weights, &inputs, ExecutionOptions::train())?;
        let (loss, grad) = match kind {
            NetKind::MaskGenerator => {
                let (_, dice_loss, _) = dice_jaccard(&output, &target)?;
                (dice_loss, dice_loss_grad(&output, &target)?)
            }
            NetKind::SmfdUnet => {
                let diff = output.zip_map(&target, |a, b| a - b)?;
                let n = diff.len() as f64;
                let loss = diff
                    .data()
                    .iter()
                    .map(|&d| (d as f64) * (d as f64))
                    .sum::<f64>()
                    / n;
                // d(mse)/d(out) = 2 (out - target) / numel.
                (loss, diff.map(|d| d * (2.0 / n) as f32))
            }
        };
        if !loss.is_finite() {
            return Err(TrainError::Diverged {
                step: step as usize,
                loss,
            });
        }
        let grads = backward(&graph, &weights, &exec, &grad)?;
        adam_step(&mut adam, &mut weights, &grads.params)?;
        for (node, stats) in &exec.updated_running {
            weights.put(&format!("{node}.running_mean"), stats.mean.clone());
            weights.put(&format!("{node}.running_var"), stats.var.clone());
        }

        // Evaluation pass with inference-mode batch norm.
        let metric = evaluate_metric(kind, &graph, &weights, &inputs, &target)?;
        if metric > best_metric + IMPROVEMENT_EPS {
            best_metric = metric;
            best_step = step + 1;
            best_weights = weights.clone();
        }
        trace.push(TraceRow {
            step: step + 1,
            loss,
            metric,
        });
    }

    Ok(TrainReport {
        final_weights: weights,
        best_weights,
        best_metric,
        best_step,
        trace,
    })
}

fn evaluate_metric(
    kind: NetKind,
    graph: &NetworkGraph,
    weights: &NamedTensorStore,
    inputs: &HashMap<String, Tensor<f32>>,
    target: &Tensor<f32>,
) -> Result<f64> {
    let (output, _) = forward(
        graph,
        weights,
        inputs,
        ExecutionOptions {
            bn_mode: BnMode::Infer,
            cbam_identity: false,
        },
    )?;
    match kind {
        NetKind::MaskGenerator => {
            let (dice, _, _) = dice_jaccard(&output, target)?;
            Ok(dice)
        }
        NetKind::SmfdUnet => Ok(crate::metrics::ssim(&output, target, 1.0)?),
    }
}

/// Synthetic toy pairs for smoke training: smooth sinusoid "sharp" images,
/// blurred copies as inputs, and masks derived from the sharp luminance
/// (quantized into the five classes), so both toy tasks are learnable.
pub fn synthetic_pairs(count: usize, size: usize, seed: u64) -> Vec<TrainingPair> {
    (0..count)
        .map(|i| {
            let mut rng = SeededRng::new(derive_seed(seed, i as u64));
            let fx = rng.uniform_range(0.5, 2.0);
            let fy = rng.uniform_range(0.5, 2.0);
            let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
            let sharp = Tensor::from_fn(&[size, size, 3], |idx| {
                let p = idx / 3;
                let ch = idx % 3;
                let y = (p / size) as f64 / size as f64;
                let x = (p % size) as f64 / size as f64;
                let v = 0.5
                    + 0.35
                        * ((std::f64::consts::TAU * (fx * x + fy * y) + phase + ch as f64 * 0.7)
                            .sin());
                v as f32
            });
            // Cheap separable box blur as the degraded input.
            let blurry = box_blur3(&sharp);
            let blurry_gray = crate::maskops::grayscale(&blurry).expect("rgb");
            let sharp_gray = crate::maskops::grayscale(&sharp).expect("rgb");
            let mask = LabelMask::new(
                size,
                size,
                sharp_gray
                    .data()
                    .iter()
                    .map(|&v| ((v * 5.0) as u8).min(4))
                    .collect(),
                LabelSpace::Merged5,
            )
            .expect("labels in range");
            let mask_onehot = one_hot(&mask, 5).expect("labels below class count");
            TrainingPair {
                sharp,
                blurry,
                blurry_gray,
                mask,
                mask_onehot,
            }
        })
        .collect()
}

fn box_blur3(img: &Tensor<f32>) -> Tensor<f32> {
    let (h, w, c) = img.dims3().expect("rank-3 image");
    let mut out = Tensor::zeros(&[h, w, c]);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0f32;
                let mut count = 0.0f32;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let sy = y as i64 + dy;
                        let sx = x as i64 + dx;
                        if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                            acc += img.at3(sy as usize, sx as usize, ch);
                            count += 1.0;
                        }
                    }
                }
                out.set3(y, x, ch, acc / count);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut params = NamedTensorStore::new();
        params.put("w", Tensor::new(&[2], vec![1.0f32, -2.0]).unwrap());
        let mut grads = NamedTensorStore::new();
        grads.put("w", Tensor::new(&[2], vec![0.3f32, -0.7]).unwrap());
        let mut state = AdamState::new(0.01);
        adam_step(&mut state, &mut params, &grads).unwrap();
        let w = params.get("w").unwrap();
        // First step: m_hat = g, v_hat = g^2, update ~ -lr * sign(g).
        assert!((w.data()[0] - (1.0 - 0.01)).abs() < 1e-4);
        assert!((w.data()[1] - (-2.0 + 0.01)).abs() < 1e-4);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut params = NamedTensorStore::new();
        params.put("w", Tensor::new(&[3], vec![0.5f32, -1.5, 3.0]).unwrap());
        let reference = params.clone();
        let mut grads = NamedTensorStore::new();
        grads.put("w", Tensor::zeros(&[3]));
        let mut state = AdamState::default();
        for _ in 0..50 {
            adam_step(&mut state, &mut params, &grads).unwrap();
        }
        assert_eq!(params, reference);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // Independent reference implementation of the update equations,
        // run side by side on f(x) = x^2 from x = 1 with lr = 0.1.
        let mut params = NamedTensorStore::new();
        params.put("x", Tensor::new(&[1], vec![1.0f32]).unwrap());
        let mut state = AdamState::new(0.1);

        let (mut rx, mut rm, mut rv) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=200u64 {
            let g = 2.0 * params.get("x").unwrap().data()[0] as f64;
            let mut grads = NamedTensorStore::new();
            grads.put("x", Tensor::new(&[1], vec![g as f32]).unwrap());
            adam_step(&mut state, &mut params, &grads).unwrap();

            let rg = 2.0 * rx;
            rm = 0.9 * rm + 0.1 * rg;
            rv = 0.999 * rv + 0.001 * rg * rg;
            let mh = rm / (1.0 - 0.9f64.powi(t as i32));
            let vh = rv / (1.0 - 0.999f64.powi(t as i32));
            rx -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        let x = params.get("x").unwrap().data()[0] as f64;
        assert!(x.abs() < 0.05, "x = {x}");
        assert!((x - rx).abs() < 1e-3, "{x} vs reference {rx}");
    }

    #[test]
    fn adam_rejects_non_finite_gradient_by_name() {
        let mut params = NamedTensorStore::new();
        params.put("layer.weight", Tensor::zeros(&[2]));
        let mut grads = NamedTensorStore::new();
        let mut bad = Tensor::zeros(&[2]);
        bad.data_mut()[1] = f32::INFINITY;
        grads.put("layer.weight", bad);
        let mut state = AdamState::default();
        match adam_step(&mut state, &mut params, &grads) {
            Err(TrainError::NonFiniteGradient(name)) => assert_eq!(name, "layer.weight"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn plateau_keeps_lr_on_improvement() {
        let mut state = PlateauState::new(Monitored::Dice, 0.001);
        for metric in [0.5, 0.6, 0.7] {
            state = plateau_step(&state, metric);
        }
        assert_eq!(state.lr, 0.001);
        assert_eq!(state.stall, 0);
    }

    #[test]
    fn plateau_reduces_after_five_flat_epochs() {
        let mut state = PlateauState::new(Monitored::Ssim, 0.001);
        state = plateau_step(&state, 0.7);
        for _ in 0..5 {
            state = plateau_step(&state, 0.7);
        }
        assert!((state.lr - 0.0002).abs() < 1e-12);
        assert_eq!(state.stall, 0);
    }

    #[test]
    fn plateau_never_breaches_floor() {
        let mut state = PlateauState::new(Monitored::Dice, 0.001);
        state = plateau_step(&state, 1.0);
        for _ in 0..500 {
            state = plateau_step(&state, 0.0);
            assert!(state.lr >= 1e-9);
        }
        assert_eq!(state.lr, 1e-9);
    }

    #[test]
    fn early_stop_never_fires_on_improvement() {
        let mut state = EarlyStopState::default();
        for i in 0..100 {
            state = early_stop_step(&state, i as f64);
        }
        assert!(!state.stopped);
    }

    #[test]
    fn early_stop_fires_after_ten_flat_epochs() {
        let mut state = EarlyStopState::default();
        state = early_stop_step(&state, 0.9);
        for i in 0..10 {
            assert!(!state.stopped, "stopped early at {i}");
            state = early_stop_step(&state, 0.9);
        }
        assert!(state.stopped);
    }

    #[test]
    fn early_stop_reset_on_late_improvement() {
        let mut state = EarlyStopState::default();
        state = early_stop_step(&state, 0.5);
        for _ in 0..9 {
            state = early_stop_step(&state, 0.5);
        }
        state = early_stop_step(&state, 0.6);
        assert_eq!(state.stall, 0);
        assert!(!state.stopped);
    }

    fn sample_pair() -> TrainingPair {
        synthetic_pairs(1, 16, 3).pop().unwrap()
    }

    #[test]
    fn identity_draw_keeps_pair() {
        let pair = sample_pair();
        let out = augment_with_draw(&pair, &AugmentDraw::IDENTITY).unwrap();
        assert_eq!(pair.sharp, out.sharp);
        assert_eq!(pair.blurry, out.blurry);
        assert_eq!(pair.mask, out.mask);
    }

    #[test]
    fn flip_twice_restores() {
        let pair = sample_pair();
        let draw = AugmentDraw {
            flip: true,
            ..AugmentDraw::IDENTITY
        };
        let once = augment_with_draw(&pair, &draw).unwrap();
        let twice = augment_with_draw(&once, &draw).unwrap();
        assert_eq!(pair.sharp, twice.sharp);
        assert_eq!(pair.mask, twice.mask);
    }

    #[test]
    fn brightness_scales_gray() {
        let mut pair = sample_pair();
        pair.sharp = Tensor::filled(&[16, 16, 3], 0.5);
        let draw = AugmentDraw {
            brightness: 1.3,
            ..AugmentDraw::IDENTITY
        };
        let out = augment_with_draw(&pair, &draw).unwrap();
        for &v in out.sharp.data() {
            assert!((v - 0.65).abs() < 1e-6);
        }
    }

    #[test]
    fn augment_keeps_mask_label_subset() {
        let pair = sample_pair();
        let spec = AugmentSpec::default();
        let source: Vec<u8> = pair.mask.distinct_labels();
        for draw_seed in 0..20 {
            let out = augment(&pair, &spec, draw_seed).unwrap();
            for l in out.mask.distinct_labels() {
                assert!(source.contains(&l), "draw {draw_seed} invented label {l}");
            }
        }
    }

    #[test]
    fn kfold_worked_example() {
        let plan = kfold_split(100, 4).unwrap();
        assert_eq!(plan.test.len(), 20);
        for fold in &plan.folds {
            assert_eq!(fold.len(), 16);
        }
    }

    #[test]
    fn kfold_deterministic_and_partitions() {
        for n in [10, 37, 100, 203] {
            let a = kfold_split(n, 9).unwrap();
            let b = kfold_split(n, 9).unwrap();
            assert_eq!(a, b);
            let mut all: Vec<usize> = a.test.clone();
            for fold in &a.folds {
                all.extend(fold);
            }
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>(), "n = {n}");
            let sizes: Vec<usize> = a.folds.iter().map(Vec::len).collect();
            let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(max - min <= 1, "unbalanced folds {sizes:?}");
        }
        assert!(kfold_split(9, 0).is_err());
    }

    #[test]
    fn zero_steps_leaves_weights_untouched() {
        let config = NetConfig {
            stages: 2,
            base_channels: 2,
            rdc_depth: 1,
            rdc_growth: 2,
            cbam_reduction: 2,
            input_height: 16,
            input_width: 16,
            ..NetConfig::toy()
        };
        let data = synthetic_pairs(2, 16, 0);
        let report = train_smoke(NetKind::SmfdUnet, &config, &data, 0, 7).unwrap();
        assert!(report.trace.is_empty());
        let graph = build_network(NetKind::SmfdUnet, &config).unwrap();
        assert_eq!(report.final_weights, init_weights(&graph, 7).unwrap());
    }

    #[test]
    fn smoke_traces_are_bit_identical_across_runs() {
        let config = NetConfig {
            stages: 2,
            base_channels: 2,
            rdc_depth: 1,
            rdc_growth: 2,
            cbam_reduction: 2,
            input_height: 16,
            input_width: 16,
            ..NetConfig::toy()
        };
        let data = synthetic_pairs(2, 16, 1);
        let a = train_smoke(NetKind::SmfdUnet, &config, &data, 5, 42).unwrap();
        let b = train_smoke(NetKind::SmfdUnet, &config, &data, 5, 42).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.final_weights, b.final_weights);
        assert_eq!(a.trace_csv(), b.trace_csv());
    }

    #[test]
    fn best_checkpoint_tracks_maximum_metric() {
        let config = NetConfig {
            stages: 2,
            base_channels: 2,
            rdc_depth: 1,
            rdc_growth: 2,
            cbam_reduction: 2,
            input_height: 16,
            input_width: 16,
            ..NetConfig::toy()
        };
        let data = synthetic_pairs(2, 16, 2);
        let report = train_smoke(NetKind::MaskGenerator, &config, &data, 6, 5).unwrap();
        let max = report
            .trace
            .iter()
            .map(|r| r.metric)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((report.best_metric - max).abs() < 1e-12);
    }
}
