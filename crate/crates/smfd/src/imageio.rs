//! PNG adapters: 8-bit RGB images as H x W x 3 tensors holding 0..=255
//! values, and 8-bit single-channel label masks with pixel value = label id.

use crate::maskops::{LabelMask, LabelSpace};
use crate::tensor::Tensor;
use image::{GrayImage, ImageReader, RgbImage};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Decode {
        path: String,
        source: image::ImageError,
    },
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, ImageIoError>;

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Loads a PNG as an RGB tensor with values in [0, 255].
pub fn load_rgb(path: &Path) -> Result<Tensor<f32>> {
    let img = ImageReader::open(path)
        .map_err(|source| ImageIoError::Io {
            path: display(path),
            source,
        })?
        .decode()
        .map_err(|source| ImageIoError::Decode {
            path: display(path),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for pixel in img.pixels() {
        data.extend(pixel.0.iter().map(|&v| v as f32));
    }
    Tensor::new(&[h as usize, w as usize, 3], data).map_err(|e| ImageIoError::Format {
        path: display(path),
        detail: e.to_string(),
    })
}

/// Saves an RGB tensor holding [0, 255] values, rounding to u8.
pub fn save_rgb(path: &Path, tensor: &Tensor<f32>) -> Result<()> {
    let (h, w, c) = tensor.dims3().map_err(|e| ImageIoError::Format {
        path: display(path),
        detail: e.to_string(),
    })?;
    if c != 3 {
        return Err(ImageIoError::Format {
            path: display(path),
            detail: format!("expected 3 channels, got {c}"),
        });
    }
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                tensor.at3(y, x, 0).clamp(0.0, 255.0).round() as u8,
                tensor.at3(y, x, 1).clamp(0.0, 255.0).round() as u8,
                tensor.at3(y, x, 2).clamp(0.0, 255.0).round() as u8,
            ];
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img.save(path).map_err(|source| ImageIoError::Decode {
        path: display(path),
        source,
    })
}

/// Saves a [0, 1] tensor by scaling to the 8-bit range.
pub fn save_unit_rgb(path: &Path, tensor: &Tensor<f32>) -> Result<()> {
    save_rgb(path, &tensor.map(|v| v * 255.0))
}

/// Loads an 8-bit gray PNG as a label mask in the given space.
pub fn load_mask(path: &Path, space: LabelSpace) -> Result<LabelMask> {
    let img = ImageReader::open(path)
        .map_err(|source| ImageIoError::Io {
            path: display(path),
            source,
        })?
        .decode()
        .map_err(|source| ImageIoError::Decode {
            path: display(path),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    LabelMask::new(h as usize, w as usize, img.into_raw(), space).map_err(|e| {
        ImageIoError::Format {
            path: display(path),
            detail: e.to_string(),
        }
    })
}

/// Saves a label mask as an 8-bit gray PNG with pixel value = label id.
pub fn save_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    let img = GrayImage::from_raw(mask.width as u32, mask.height as u32, mask.labels.clone())
        .expect("buffer sized by construction");
    img.save(path).map_err(|source| ImageIoError::Decode {
        path: display(path),
        source,
    })
}

/// Loads an 8-bit gray PNG as raw intensities (no label-space validation).
pub fn load_gray(path: &Path) -> Result<Tensor<f32>> {
    let img = ImageReader::open(path)
        .map_err(|source| ImageIoError::Io {
            path: display(path),
            source,
        })?
        .decode()
        .map_err(|source| ImageIoError::Decode {
            path: display(path),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().iter().map(|&v| v as f32).collect();
    Tensor::new(&[h as usize, w as usize, 1], data).map_err(|e| ImageIoError::Format {
        path: display(path),
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let tensor = Tensor::from_fn(&[9, 7, 3], |i| ((i * 41) % 256) as f32);
        save_rgb(&path, &tensor).unwrap();
        let back = load_rgb(&path).unwrap();
        assert_eq!(tensor, back);
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let mask = LabelMask::new(
            6,
            5,
            (0..30).map(|i| (i % 19) as u8).collect(),
            LabelSpace::Raw19,
        )
        .unwrap();
        save_mask(&path, &mask).unwrap();
        let back = load_mask(&path, LabelSpace::Raw19).unwrap();
        assert_eq!(mask, back);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_rgb(Path::new("/nonexistent/nope.png")),
            Err(ImageIoError::Io { .. })
        ));
    }
}
