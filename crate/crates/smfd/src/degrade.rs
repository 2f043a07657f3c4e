//! Seeded synthetic-degradation pipeline.
//!
//! A [`DegradationPlan`] is a fully materialized record of one sampled
//! corruption: one to three randomized heavy-blur layers, a resolution
//! round trip, then additive Gaussian noise. Applying the same plan to the
//! same image is bit-identical on every platform; a plan can therefore be
//! written to a manifest and replayed later.
//!
//! Pipeline order is fixed: blur layers -> resolution degradation -> noise.

use crate::rng::{mix64, SeededRng};
use crate::tensor::{Tensor, TensorError};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DegradeError {
    #[error("kernel size {0} must be odd")]
    EvenKernel(usize),
    #[error("kernel {k}x{k} too large for {h}x{w} image")]
    KernelTooLarge { k: usize, h: usize, w: usize },
    #[error("image too small: {h}x{w}, need at least 16x16")]
    ImageTooSmall { h: usize, w: usize },
    #[error("direction is only meaningful for motion blur")]
    DirectionOnGaussian,
    #[error("motion blur requires a direction")]
    MissingDirection,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, DegradeError>;

/// Default odd kernel sizes shared by both blur kinds.
pub const DEFAULT_KERNEL_SIZES: [usize; 6] = [15, 21, 25, 31, 35, 41];
pub const SCALE_RANGE: (f64, f64) = (2.0, 4.0);
pub const NOISE_RANGE: (f64, f64) = (5.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurKind {
    Gaussian,
    Motion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionDirection {
    Horizontal,
    Vertical,
    Diagonal,
    AntiDiagonal,
}

pub const ALL_DIRECTIONS: [MotionDirection; 4] = [
    MotionDirection::Horizontal,
    MotionDirection::Vertical,
    MotionDirection::Diagonal,
    MotionDirection::AntiDiagonal,
];

/// One blur operation: kind, odd kernel size, and a direction when motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlurOp {
    pub kind: BlurKind,
    pub kernel_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<MotionDirection>,
}

impl BlurOp {
    pub fn gaussian(kernel_size: usize) -> Self {
        Self {
            kind: BlurKind::Gaussian,
            kernel_size,
            direction: None,
        }
    }

    pub fn motion(kernel_size: usize, direction: MotionDirection) -> Self {
        Self {
            kind: BlurKind::Motion,
            kernel_size,
            direction: Some(direction),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size.is_multiple_of(2) {
            return Err(DegradeError::EvenKernel(self.kernel_size));
        }
        match (self.kind, self.direction) {
            (BlurKind::Gaussian, Some(_)) => Err(DegradeError::DirectionOnGaussian),
            (BlurKind::Motion, None) => Err(DegradeError::MissingDirection),
            _ => Ok(()),
        }
    }
}

/// The four operation sequences a blur layer can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sequence {
    M,
    GM,
    MG,
    GMG,
}

pub const ALL_SEQUENCES: [Sequence; 4] = [Sequence::M, Sequence::GM, Sequence::MG, Sequence::GMG];

impl Sequence {
    /// Letters of the pattern, 'G' for gaussian and 'M' for motion.
    pub fn letters(self) -> &'static [BlurKind] {
        use BlurKind::{Gaussian as G, Motion as M};
        match self {
            Sequence::M => &[M],
            Sequence::GM => &[G, M],
            Sequence::MG => &[M, G],
            Sequence::GMG => &[G, M, G],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlurLayer {
    pub sequence: Sequence,
    pub ops: Vec<BlurOp>,
}

impl BlurLayer {
    /// Ops kinds must spell exactly the sequence letters.
    pub fn validate(&self) -> Result<()> {
        let letters = self.sequence.letters();
        if self.ops.len() != letters.len()
            || self.ops.iter().zip(letters).any(|(op, &k)| op.kind != k)
        {
            return Err(DegradeError::Tensor(TensorError::Invalid(format!(
                "layer ops {:?} do not spell sequence {:?}",
                self.ops.iter().map(|o| o.kind).collect::<Vec<_>>(),
                self.sequence
            ))));
        }
        for op in &self.ops {
            op.validate()?;
        }
        Ok(())
    }
}

/// Fully materialized record of one sampled corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationPlan {
    pub layers: Vec<BlurLayer>,
    pub scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DegradationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.len() > 3 {
            return Err(DegradeError::Tensor(TensorError::Invalid(format!(
                "plan has {} layers, expected 1..=3",
                self.layers.len()
            ))));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        Ok(())
    }
}

/// Gaussian sigma from kernel size by the conventional size rule.
pub fn sigma_for_kernel(kernel_size: usize) -> f64 {
    0.3 * (((kernel_size - 1) as f64) / 2.0 - 1.0) + 0.8
}

/// Materializes a blur op into its kernel (64-bit so normalization holds to
/// 1e-9 even for the largest sizes).
///
/// Gaussian kernels sample `exp(-(x^2+y^2)/(2 sigma^2))` on the integer grid
/// centered at the kernel middle, then renormalize to sum 1. Motion kernels
/// put `1/k` along the direction line through the center.
pub fn make_kernel(op: &BlurOp) -> Result<Tensor<f64>> {
    op.validate()?;
    let k = op.kernel_size;
    let c = (k - 1) as isize / 2;
    match op.kind {
        BlurKind::Gaussian => {
            let sigma = sigma_for_kernel(k);
            let mut data = vec![0f64; k * k];
            let mut sum = 0.0;
            for y in 0..k {
                for x in 0..k {
                    let dy = y as isize - c;
                    let dx = x as isize - c;
                    let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                    data[y * k + x] = v;
                    sum += v;
                }
            }
            for v in &mut data {
                *v /= sum;
            }
            Ok(Tensor::new(&[k, k], data)?)
        }
        BlurKind::Motion => {
            let w = 1.0f64 / k as f64;
            let mut data = vec![0f64; k * k];
            for i in 0..k {
                let (y, x) = match op.direction.unwrap() {
                    MotionDirection::Horizontal => (c as usize, i),
                    MotionDirection::Vertical => (i, c as usize),
                    MotionDirection::Diagonal => (i, i),
                    MotionDirection::AntiDiagonal => (i, k - 1 - i),
                };
                data[y * k + x] = w;
            }
            Ok(Tensor::new(&[k, k], data)?)
        }
    }
}

/// Reflect-101 index: mirrors around the edge without repeating it.
fn reflect101(i: isize, len: usize) -> usize {
    let len = len as isize;
    let mut i = i;
    // At most two folds are needed while the kernel fits the image.
    while i < 0 || i >= len {
        if i < 0 {
            i = -i;
        }
        if i >= len {
            i = 2 * (len - 1) - i;
        }
    }
    i as usize
}

/// Valid-region correlation of a rank-2/3 image with a rank-2 kernel; output
/// extents shrink by kernel-1. Accumulation runs in f64; the f32 result is
/// the worked-example anchor used by [`blur`] after reflect-101 padding.
pub fn convolve_valid(image: &Tensor<f32>, kernel: &Tensor<f64>) -> Result<Tensor<f32>> {
    let (kh, kw) = kernel.dims2()?;
    let img = image.to_nhwc()?;
    let (_, h, w, c) = img.dims4()?;
    if kh > h || kw > w {
        return Err(DegradeError::KernelTooLarge {
            k: kh.max(kw),
            h,
            w,
        });
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = Tensor::zeros(&[oh, ow, c]);
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut acc = 0.0f64;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let kv = kernel.at2(ky, kx);
                        if kv != 0.0 {
                            acc += kv * img.at4(0, y + ky, x + kx, ch) as f64;
                        }
                    }
                }
                out.set3(y, x, ch, acc as f32);
            }
        }
    }
    if image.rank() == 2 {
        return Ok(out.reshape(&[oh, ow])?);
    }
    Ok(out)
}

/// Same-size blur: reflect-101 border handling, output clamped to [0, 255].
/// All kernels used here are symmetric under 180-degree rotation, so
/// correlation and convolution coincide.
pub fn blur(image: &Tensor<f32>, kernel: &Tensor<f64>) -> Result<Tensor<f32>> {
    let (kh, kw) = kernel.dims2()?;
    if kh != kw || kh % 2 == 0 {
        return Err(DegradeError::EvenKernel(kh.max(kw)));
    }
    let img = image.to_nhwc()?;
    let (_, h, w, c) = img.dims4()?;
    if kh > 2 * h.min(w) {
        return Err(DegradeError::KernelTooLarge { k: kh, h, w });
    }
    let r = (kh / 2) as isize;
    let mut out = Tensor::zeros(&[h, w, c]);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0f64;
                for ky in 0..kh {
                    let iy = reflect101(y as isize + ky as isize - r, h);
                    for kx in 0..kw {
                        let kv = kernel.at2(ky, kx);
                        if kv != 0.0 {
                            let ix = reflect101(x as isize + kx as isize - r, w);
                            acc += kv * img.at4(0, iy, ix, ch) as f64;
                        }
                    }
                }
                out.set3(y, x, ch, (acc as f32).clamp(0.0, 255.0));
            }
        }
    }
    match image.rank() {
        2 => Ok(out.reshape(&[h, w])?),
        _ => Ok(out),
    }
}

/// Bilinear resampling with the pixel-center convention
/// `src = (dst + 0.5) * in/out - 0.5` and edge clamping.
pub fn resize_bilinear(image: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let img = image.to_nhwc()?;
    let (_, h, w, c) = img.dims4()?;
    let mut out = Tensor::zeros(&[out_h, out_w, c]);
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for y in 0..out_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for x in 0..out_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let a = img.at4(0, y0, x0, ch) as f64;
                let b = img.at4(0, y0, x1, ch) as f64;
                let d = img.at4(0, y1, x0, ch) as f64;
                let e = img.at4(0, y1, x1, ch) as f64;
                let top = a + (b - a) * wx;
                let bot = d + (e - d) * wx;
                out.set3(y, x, ch, (top + (bot - top) * wy) as f32);
            }
        }
    }
    match image.rank() {
        2 => Ok(out.reshape(&[out_h, out_w])?),
        _ => Ok(out),
    }
}

/// Configuration for plan sampling and combination counting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kernel_sizes: Vec<usize>,
    pub max_layers: usize,
    pub scale_range: (f64, f64),
    pub noise_range: (f64, f64),
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kernel_sizes: DEFAULT_KERNEL_SIZES.to_vec(),
            max_layers: 3,
            scale_range: SCALE_RANGE,
            noise_range: NOISE_RANGE,
        }
    }
}

/// Samples a fully materialized plan from a seed.
///
/// Draw order (fixed): layer count, then per layer the sequence followed by
/// each op's kernel size (and direction for motion ops), then the scale
/// factor, then the noise level.
pub fn sample_plan(seed: u64) -> DegradationPlan {
    sample_plan_with(seed, &PipelineConfig::default())
}

pub fn sample_plan_with(seed: u64, config: &PipelineConfig) -> DegradationPlan {
    let mut rng = SeededRng::new(seed);
    let n_layers = 1 + rng.uniform_index(config.max_layers.max(1));
    let layers = (0..n_layers)
        .map(|_| {
            let sequence = *rng.pick(&ALL_SEQUENCES);
            let ops = sequence
                .letters()
                .iter()
                .map(|&kind| {
                    let kernel_size = *rng.pick(&config.kernel_sizes);
                    match kind {
                        BlurKind::Gaussian => BlurOp::gaussian(kernel_size),
                        BlurKind::Motion => BlurOp::motion(kernel_size, *rng.pick(&ALL_DIRECTIONS)),
                    }
                })
                .collect();
            BlurLayer { sequence, ops }
        })
        .collect();
    let scale = rng.uniform_range(config.scale_range.0, config.scale_range.1);
    let noise_sigma = rng.uniform_range(config.noise_range.0, config.noise_range.1);
    DegradationPlan {
        layers,
        scale,
        noise_sigma,
        seed,
    }
}

const NOISE_STREAM: u64 = 0x6E6F_6973_655F_7374; // distinct stream tag

/// Applies a plan: blur layers in order, bilinear down/up round trip by the
/// scale factor, additive seeded Gaussian noise, clamp to [0, 255].
///
/// Noise draws run in row-major (y, x, channel) order, one normal per value.
pub fn apply_plan(image: &Tensor<f32>, plan: &DegradationPlan) -> Result<Tensor<f32>> {
    plan.validate()?;
    let img = image.to_nhwc()?;
    let (_, h, w, _) = img.dims4()?;
    if h < 16 || w < 16 {
        return Err(DegradeError::ImageTooSmall { h, w });
    }

    let mut current = image.clone();
    for layer in &plan.layers {
        for op in &layer.ops {
            let kernel = make_kernel(op)?;
            current = blur(&current, &kernel)?;
        }
    }

    if plan.scale != 1.0 {
        let dh = ((h as f64 / plan.scale).round() as usize).max(1);
        let dw = ((w as f64 / plan.scale).round() as usize).max(1);
        current = resize_bilinear(&current, dh, dw)?;
        current = resize_bilinear(&current, h, w)?;
    }

    let mut noise_rng = SeededRng::new(mix64(plan.seed ^ NOISE_STREAM));
    let sigma = plan.noise_sigma as f32;
    let mut out = current.to_nhwc()?;
    let (_, oh, ow, oc) = out.dims4()?;
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..oc {
                let z = noise_rng.normal() as f32;
                let v = (out.at4(0, y, x, ch) + sigma * z).clamp(0.0, 255.0);
                out.set4(0, y, x, ch, v);
            }
        }
    }
    match image.rank() {
        2 => Ok(out.reshape(&[oh, ow])?),
        3 => Ok(out.reshape(&[oh, ow, oc])?),
        _ => Ok(out),
    }
}

/// Counting configuration; mirrors the sampling space after discretizing
/// scale and noise.
#[derive(Debug, Clone)]
pub struct CountConfig {
    pub kernel_choices: usize,
    pub direction_choices: usize,
    pub max_layers: usize,
    pub scale_steps: usize,
    pub noise_steps: usize,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self {
            kernel_choices: DEFAULT_KERNEL_SIZES.len(),
            direction_choices: ALL_DIRECTIONS.len(),
            max_layers: 3,
            // (4.0-2.0)/0.1 + 1 and (10.0-5.0)/0.1 + 1.
            scale_steps: 21,
            noise_steps: 51,
        }
    }
}

/// Per-layer combination count: M + GM + MG + GMG.
pub fn combinations_per_layer(config: &CountConfig) -> BigUint {
    let g = BigUint::from(config.kernel_choices);
    let m = BigUint::from(config.kernel_choices * config.direction_choices);
    &m + &g * &m + &m * &g + &g * &m * &g
}

/// Exact total: `sum_{l=1..=L} t^l * scale_steps * noise_steps`.
pub fn count_plans(config: &CountConfig) -> BigUint {
    let t = combinations_per_layer(config);
    let mut blur_total = BigUint::from(0u32);
    let mut power = BigUint::from(1u32);
    for _ in 0..config.max_layers {
        power *= &t;
        blur_total += &power;
    }
    blur_total * config.scale_steps * config.noise_steps
}

/// Materializes every distinct single-layer configuration for a config.
fn enumerate_layers(config: &CountConfig) -> Vec<BlurLayer> {
    let sizes: Vec<usize> = (0..config.kernel_choices).map(|i| 3 + 2 * i).collect();
    let dirs = &ALL_DIRECTIONS[..config.direction_choices];
    let mut layers = Vec::new();
    for &sequence in &ALL_SEQUENCES {
        let mut partial: Vec<Vec<BlurOp>> = vec![Vec::new()];
        for &kind in sequence.letters() {
            let mut next = Vec::new();
            for prefix in &partial {
                for &k in &sizes {
                    match kind {
                        BlurKind::Gaussian => {
                            let mut ops = prefix.clone();
                            ops.push(BlurOp::gaussian(k));
                            next.push(ops);
                        }
                        BlurKind::Motion => {
                            for &dir in dirs {
                                let mut ops = prefix.clone();
                                ops.push(BlurOp::motion(k, dir));
                                next.push(ops);
                            }
                        }
                    }
                }
            }
            partial = next;
        }
        for ops in partial {
            let layer = BlurLayer { sequence, ops };
            layer.validate().expect("enumerated layer must be valid");
            layers.push(layer);
        }
    }
    layers
}

/// Brute-force enumeration of every distinct plan for small configs; must
/// agree with [`count_plans`]. Every enumerated layer is materialized and
/// validated, so this is an independent oracle for the closed form.
pub fn count_plans_brute_force(config: &CountConfig) -> BigUint {
    let layer_space = enumerate_layers(config);
    let mut blur_total = 0u64;
    for depth in 1..=config.max_layers {
        // Odometer over layer_space^depth, counting each tuple once.
        let mut idx = vec![0usize; depth];
        loop {
            blur_total += 1;
            let mut i = 0;
            loop {
                idx[i] += 1;
                if idx[i] < layer_space.len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
                if i == depth {
                    break;
                }
            }
            if i == depth {
                break;
            }
        }
    }
    let mut total = 0u64;
    for _ in 0..config.scale_steps {
        for _ in 0..config.noise_steps {
            total += blur_total;
        }
    }
    BigUint::from(total)
}
