//! Semantic-mask and image preprocessing: label merging, one-hot encoding,
//! grayscale conversion, resizing, normalization.

use crate::degrade::resize_bilinear;
use crate::tensor::{Tensor, TensorError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("label {label} at pixel ({y}, {x}) outside {space:?} range")]
    LabelOutOfRange {
        label: u8,
        y: usize,
        x: usize,
        space: LabelSpace,
    },
    #[error("merge table must map every raw label 0..=18, missing {0}")]
    IncompleteTable(u8),
    #[error("merge table maps {raw} to {merged}, outside the merged range 0..=4")]
    BadMergedLabel { raw: u8, merged: u8 },
    #[error("mask is {mh}x{mw} but images are {ih}x{iw}")]
    ExtentMismatch {
        mh: usize,
        mw: usize,
        ih: usize,
        iw: usize,
    },
    #[error("label {0} not below class count {1}")]
    LabelExceedsClasses(u8, usize),
    #[error("expected {expected} mask, got {actual:?}")]
    WrongSpace {
        expected: &'static str,
        actual: LabelSpace,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, MaskError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    /// CelebAMask-HQ style 19-class labels.
    Raw19,
    /// Five-group labels after merging.
    Merged5,
}

impl LabelSpace {
    pub fn class_count(self) -> usize {
        match self {
            LabelSpace::Raw19 => 19,
            LabelSpace::Merged5 => 5,
        }
    }
}

/// Integer-labeled semantic face mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
    pub space: LabelSpace,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>, space: LabelSpace) -> Result<Self> {
        if labels.len() != height * width {
            return Err(MaskError::Tensor(TensorError::DataLength {
                shape: vec![height, width],
                expected: height * width,
                actual: labels.len(),
            }));
        }
        let mask = Self {
            height,
            width,
            labels,
            space,
        };
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        let limit = self.space.class_count() as u8;
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= limit {
                return Err(MaskError::LabelOutOfRange {
                    label: l,
                    y: i / self.width,
                    x: i % self.width,
                    space: self.space,
                });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Nearest-neighbor resize; never interpolates label values.
    pub fn resize_nearest(&self, out_h: usize, out_w: usize) -> Self {
        let mut labels = Vec::with_capacity(out_h * out_w);
        for y in 0..out_h {
            let sy = (((y as f64 + 0.5) * self.height as f64 / out_h as f64 - 0.5).round())
                .clamp(0.0, (self.height - 1) as f64) as usize;
            for x in 0..out_w {
                let sx = (((x as f64 + 0.5) * self.width as f64 / out_w as f64 - 0.5).round())
                    .clamp(0.0, (self.width - 1) as f64) as usize;
                labels.push(self.at(sy, sx));
            }
        }
        Self {
            height: out_h,
            width: out_w,
            labels,
            space: self.space,
        }
    }

    pub fn distinct_labels(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..=255u8).filter(|&l| seen[l as usize]).collect()
    }
}

/// CelebAMask-HQ raw label ids.
pub mod raw_labels {
    pub const BACKGROUND: u8 = 0;
    pub const SKIN: u8 = 1;
    pub const NOSE: u8 = 2;
    pub const EYEGLASSES: u8 = 3;
    pub const LEFT_EYE: u8 = 4;
    pub const RIGHT_EYE: u8 = 5;
    pub const LEFT_BROW: u8 = 6;
    pub const RIGHT_BROW: u8 = 7;
    pub const LEFT_EAR: u8 = 8;
    pub const RIGHT_EAR: u8 = 9;
    pub const MOUTH: u8 = 10;
    pub const UPPER_LIP: u8 = 11;
    pub const LOWER_LIP: u8 = 12;
    pub const HAIR: u8 = 13;
    pub const HAT: u8 = 14;
    pub const EARRING: u8 = 15;
    pub const NECKLACE: u8 = 16;
    pub const NECK: u8 = 17;
    pub const CLOTH: u8 = 18;
}

/// Merged group ids.
pub mod groups {
    pub const BACKGROUND: u8 = 0;
    pub const COMPONENTS: u8 = 1;
    pub const WEARABLES: u8 = 2;
    pub const SKIN: u8 = 3;
    pub const HAIR: u8 = 4;
}

/// Total surjective map raw label -> merged label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeTable {
    map: [u8; 19],
}

impl Default for MergeTable {
    /// Default grouping: facial components -> 1, wearables -> 2, skin -> 3,
    /// hair -> 4, everything else (background, neck, cloth) -> 0.
    fn default() -> Self {
        use groups as g;
        use raw_labels as r;
        let mut map = [g::BACKGROUND; 19];
        for l in [
            r::NOSE,
            r::LEFT_EYE,
            r::RIGHT_EYE,
            r::LEFT_BROW,
            r::RIGHT_BROW,
            r::LEFT_EAR,
            r::RIGHT_EAR,
            r::MOUTH,
            r::UPPER_LIP,
            r::LOWER_LIP,
        ] {
            map[l as usize] = g::COMPONENTS;
        }
        for l in [r::HAT, r::EARRING, r::EYEGLASSES, r::NECKLACE] {
            map[l as usize] = g::WEARABLES;
        }
        map[r::SKIN as usize] = g::SKIN;
        map[r::HAIR as usize] = g::HAIR;
        Self { map }
    }
}

impl MergeTable {
    pub fn lookup(&self, raw: u8) -> Option<u8> {
        self.map.get(raw as usize).copied()
    }

    /// Reads a `{ "raw": merged }` JSON object; all 19 raw labels required.
    pub fn from_json(json: &str) -> Result<Self> {
        let parsed: BTreeMap<String, u8> = serde_json::from_str(json)
            .map_err(|e| MaskError::Tensor(TensorError::Invalid(format!("merge table: {e}"))))?;
        let mut map = [u8::MAX; 19];
        for (k, v) in parsed {
            let raw: u8 = k.parse().map_err(|_| {
                MaskError::Tensor(TensorError::Invalid(format!(
                    "merge table key {k:?} is not a raw label"
                )))
            })?;
            if raw >= 19 {
                return Err(MaskError::LabelOutOfRange {
                    label: raw,
                    y: 0,
                    x: 0,
                    space: LabelSpace::Raw19,
                });
            }
            if v >= 5 {
                return Err(MaskError::BadMergedLabel { raw, merged: v });
            }
            map[raw as usize] = v;
        }
        if let Some(missing) = map.iter().position(|&v| v == u8::MAX) {
            return Err(MaskError::IncompleteTable(missing as u8));
        }
        Ok(Self { map })
    }

    pub fn to_json(&self) -> String {
        let obj: BTreeMap<String, u8> = self
            .map
            .iter()
            .enumerate()
            .map(|(k, &v)| (k.to_string(), v))
            .collect();
        serde_json::to_string_pretty(&obj).expect("table serializes")
    }
}

/// Per-pixel table lookup from the 19-label space to the 5-group space.
pub fn merge_labels(mask: &LabelMask, table: &MergeTable) -> Result<LabelMask> {
    if mask.space != LabelSpace::Raw19 {
        return Err(MaskError::WrongSpace {
            expected: "raw19",
            actual: mask.space,
        });
    }
    let mut labels = Vec::with_capacity(mask.labels.len());
    for (i, &raw) in mask.labels.iter().enumerate() {
        let merged = table.lookup(raw).ok_or(MaskError::LabelOutOfRange {
            label: raw,
            y: i / mask.width,
            x: i % mask.width,
            space: LabelSpace::Raw19,
        })?;
        labels.push(merged);
    }
    LabelMask::new(mask.height, mask.width, labels, LabelSpace::Merged5)
}

/// H x W x classes one-hot encoding with exactly one 1 per pixel.
pub fn one_hot(mask: &LabelMask, classes: usize) -> Result<Tensor<f32>> {
    let mut out = Tensor::zeros(&[mask.height, mask.width, classes]);
    for y in 0..mask.height {
        for x in 0..mask.width {
            let l = mask.at(y, x);
            if (l as usize) >= classes {
                return Err(MaskError::LabelExceedsClasses(l, classes));
            }
            out.set3(y, x, l as usize, 1.0);
        }
    }
    Ok(out)
}

/// Inverse of [`one_hot`]: channel argmax back to labels. Works on soft
/// predictions too (picks the largest channel, first on ties).
pub fn argmax_labels(t: &Tensor<f32>, space: LabelSpace) -> Result<LabelMask> {
    let (h, w, c) = t.dims3().map_err(MaskError::Tensor)?;
    let mut labels = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut best = 0usize;
            let mut best_v = t.at3(y, x, 0);
            for ch in 1..c {
                let v = t.at3(y, x, ch);
                if v > best_v {
                    best_v = v;
                    best = ch;
                }
            }
            labels.push(best as u8);
        }
    }
    LabelMask::new(h, w, labels, space)
}

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Collapses an H x W x 3 tensor to H x W x 1 using the luma weights.
pub fn grayscale(image: &Tensor<f32>) -> Result<Tensor<f32>> {
    let (h, w, c) = image.dims3().map_err(MaskError::Tensor)?;
    if c != 3 {
        return Err(MaskError::Tensor(TensorError::ShapeMismatch {
            op: "grayscale",
            detail: format!("expected 3 channels, got {c}"),
        }));
    }
    let mut out = Tensor::zeros(&[h, w, 1]);
    for y in 0..h {
        for x in 0..w {
            let v = LUMA_WEIGHTS[0] * image.at3(y, x, 0)
                + LUMA_WEIGHTS[1] * image.at3(y, x, 1)
                + LUMA_WEIGHTS[2] * image.at3(y, x, 2);
            out.set3(y, x, 0, v);
        }
    }
    Ok(out)
}

pub const TRAIN_SIZE: usize = 256;

/// One preprocessed training example.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    /// Sharp target, 256x256x3 in [0, 1].
    pub sharp: Tensor<f32>,
    /// Degraded input, 256x256x3 in [0, 1].
    pub blurry: Tensor<f32>,
    /// Grayscale of the degraded input, 256x256x1.
    pub blurry_gray: Tensor<f32>,
    /// Merged 5-group mask at 256x256.
    pub mask: LabelMask,
    /// One-hot encoding of the mask, 256x256x5.
    pub mask_onehot: Tensor<f32>,
}

/// Resizes (bilinear for images, nearest for the mask), merges labels,
/// one-hot encodes, grayscales the degraded input, and normalizes by 255.
pub fn prepare_pair(
    sharp: &Tensor<f32>,
    blurry: &Tensor<f32>,
    mask: &LabelMask,
    table: &MergeTable,
) -> Result<TrainingPair> {
    prepare_pair_sized(sharp, blurry, mask, table, TRAIN_SIZE)
}

pub fn prepare_pair_sized(
    sharp: &Tensor<f32>,
    blurry: &Tensor<f32>,
    mask: &LabelMask,
    table: &MergeTable,
    size: usize,
) -> Result<TrainingPair> {
    let (sh, sw, _) = sharp.dims3().map_err(MaskError::Tensor)?;
    let (bh, bw, _) = blurry.dims3().map_err(MaskError::Tensor)?;
    if (mask.height, mask.width) != (sh, sw) || (bh, bw) != (sh, sw) {
        return Err(MaskError::ExtentMismatch {
            mh: mask.height,
            mw: mask.width,
            ih: sh,
            iw: sw,
        });
    }
    let normalize = |img: &Tensor<f32>| -> Result<Tensor<f32>> {
        let resized = resize_bilinear(img, size, size)
            .map_err(|e| MaskError::Tensor(TensorError::Invalid(e.to_string())))?;
        Ok(resized.map(|v| v / 255.0))
    };
    let sharp_n = normalize(sharp)?;
    let blurry_n = normalize(blurry)?;
    let blurry_gray = grayscale(&blurry_n)?;
    let merged = merge_labels(&mask.resize_nearest(size, size), table)?;
    let mask_onehot = one_hot(&merged, LabelSpace::Merged5.class_count())?;
    Ok(TrainingPair {
        sharp: sharp_n,
        blurry: blurry_n,
        blurry_gray,
        mask: merged,
        mask_onehot,
    })
}
