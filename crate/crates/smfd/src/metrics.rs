//! Full-reference quality and segmentation metrics: MSE, PSNR, SSIM, Dice
//! (+loss), Jaccard, and the Gaussian Frechet distance core.

use crate::tensor::{Scalar, Tensor, TensorError};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: Vec<usize>, b: Vec<usize> },
    #[error("spatial extents {h}x{w} too small for an 11x11 SSIM window")]
    TooSmallForSsim { h: usize, w: usize },
    #[error("max_value must be positive, got {0}")]
    BadMaxValue(f64),
    #[error("gaussian stats dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("covariance not symmetric within 1e-9 at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("covariance has eigenvalue {0} below the PSD tolerance")]
    NotPsd(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn check_same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(MetricError::ShapeMismatch {
            a: a.shape().to_vec(),
            b: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean squared elementwise difference.
pub fn mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10 log10(max^2 / mse)` in dB; positive infinity when the error is zero.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, max_value: f64) -> Result<f64> {
    if max_value <= 0.0 {
        return Err(MetricError::BadMaxValue(max_value));
    }
    let e = mse(a, b)?;
    Ok(psnr_from_mse(e, max_value))
}

pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * ((max_value * max_value) / mse).log10()
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn ssim_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW - 1) as f64 / 2.0;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5),
/// `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2`, averaged over all valid window
/// positions and channels. Inputs are rank 2, 3, or 4 with matching shapes.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, max_value: f64) -> Result<f64> {
    check_same_shape(a, b)?;
    if max_value <= 0.0 {
        return Err(MetricError::BadMaxValue(max_value));
    }
    let a4 = a.to_nhwc()?;
    let b4 = b.to_nhwc()?;
    let (n, h, w, c) = a4.dims4()?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricError::TooSmallForSsim { h, w });
    }
    let window = ssim_window();
    let c1 = (0.01 * max_value).powi(2);
    let c2 = (0.03 * max_value).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for img in 0..n {
        for ch in 0..c {
            for y in 0..=(h - SSIM_WINDOW) {
                for x in 0..=(w - SSIM_WINDOW) {
                    let mut mu_a = 0.0;
                    let mut mu_b = 0.0;
                    let mut aa = 0.0;
                    let mut bb = 0.0;
                    let mut ab = 0.0;
                    for wy in 0..SSIM_WINDOW {
                        for wx in 0..SSIM_WINDOW {
                            let wt = window[wy * SSIM_WINDOW + wx];
                            let va = a4.at4(img, y + wy, x + wx, ch).to_f64();
                            let vb = b4.at4(img, y + wy, x + wx, ch).to_f64();
                            mu_a += wt * va;
                            mu_b += wt * vb;
                            aa += wt * va * va;
                            bb += wt * vb * vb;
                            ab += wt * va * vb;
                        }
                    }
                    let var_a = aa - mu_a * mu_a;
                    let var_b = bb - mu_b * mu_b;
                    let cov = ab - mu_a * mu_b;
                    let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                    let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                    total += num / den;
                    count += 1;
                }
            }
        }
    }
    Ok(total / count as f64)
}

/// Soft Dice/Jaccard over the channel axis, averaged across channels.
///
/// Counts are sums of elementwise products, so the same code scores hard
/// one-hot masks and probabilistic predictions. A channel empty in both
/// masks scores 1 by convention.
pub fn dice_jaccard<T: Scalar>(pred: &Tensor<T>, truth: &Tensor<T>) -> Result<(f64, f64, f64)> {
    check_same_shape(pred, truth)?;
    let p4 = pred.to_nhwc()?;
    let t4 = truth.to_nhwc()?;
    let (n, h, w, c) = p4.dims4()?;
    let mut dice_sum = 0.0;
    let mut jaccard_sum = 0.0;
    for ch in 0..c {
        let mut inter = 0.0;
        let mut p_sum = 0.0;
        let mut t_sum = 0.0;
        for img in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let p = p4.at4(img, y, x, ch).to_f64();
                    let t = t4.at4(img, y, x, ch).to_f64();
                    inter += p * t;
                    p_sum += p;
                    t_sum += t;
                }
            }
        }
        let dice = if p_sum + t_sum == 0.0 {
            1.0
        } else {
            2.0 * inter / (p_sum + t_sum)
        };
        let union = p_sum + t_sum - inter;
        let jaccard = if union == 0.0 { 1.0 } else { inter / union };
        dice_sum += dice;
        jaccard_sum += jaccard;
    }
    let dice = dice_sum / c as f64;
    let jaccard = jaccard_sum / c as f64;
    Ok((dice, 1.0 - dice, jaccard))
}

/// Gradient of the soft Dice loss with respect to `pred`, matching the
/// channel-mean convention of [`dice_jaccard`]. Channels empty in both masks
/// contribute a zero subgradient.
pub fn dice_loss_grad<T: Scalar>(pred: &Tensor<T>, truth: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape(pred, truth)?;
    let p4 = pred.to_nhwc()?;
    let t4 = truth.to_nhwc()?;
    let (n, h, w, c) = p4.dims4()?;
    let mut inter = vec![0.0f64; c];
    let mut total = vec![0.0f64; c];
    for ch in 0..c {
        for img in 0..n {
            for y in 0..h {
                for x in 0..w {
                    inter[ch] += p4.at4(img, y, x, ch).to_f64() * t4.at4(img, y, x, ch).to_f64();
                    total[ch] += p4.at4(img, y, x, ch).to_f64() + t4.at4(img, y, x, ch).to_f64();
                }
            }
        }
    }
    let mut grad = Tensor::zeros(p4.shape());
    let scale = 2.0 / c as f64;
    for ch in 0..c {
        if total[ch] == 0.0 {
            continue;
        }
        let denom = total[ch] * total[ch];
        for img in 0..n {
            for y in 0..h {
                for x in 0..w {
                    // d(1 - 2I/S)/dp = -2 (t S - I) / S^2, averaged over channels.
                    let t = t4.at4(img, y, x, ch).to_f64();
                    let g = -scale * (t * total[ch] - inter[ch]) / denom;
                    grad.set4(img, y, x, ch, T::from_f64(g));
                }
            }
        }
    }
    grad.reshape(pred.shape()).map_err(MetricError::Tensor)
}

/// Mean vector and covariance matrix of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    /// Row-major d x d symmetric matrix.
    pub cov: Vec<f64>,
}

impl GaussianStats {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(MetricError::DimensionMismatch(d, cov.len()));
        }
        let stats = Self { mean, cov };
        stats.validate()?;
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                if (self.cov[i * d + j] - self.cov[j * d + i]).abs() > 1e-9 {
                    return Err(MetricError::NotSymmetric(i, j));
                }
            }
        }
        Ok(())
    }

    /// Sample statistics from feature rows (biased covariance, 1/n).
    pub fn from_samples(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(MetricError::DimensionMismatch(0, 0));
        }
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for row in rows {
            if row.len() != d {
                return Err(MetricError::DimensionMismatch(d, row.len()));
            }
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = vec![0.0; d * d];
        for row in rows {
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (row[i] - mean[i]) * (row[j] - mean[j]);
                }
            }
        }
        for v in &mut cov {
            *v /= n as f64;
        }
        Self::new(mean, cov)
    }
}

const PSD_TOLERANCE: f64 = 1e-6;

/// Symmetric PSD square root via eigendecomposition, clipping tiny negative
/// eigenvalues to zero. Rejects eigenvalues below `-tol * scale`.
fn sqrt_psd(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let mut values = DVector::zeros(eig.eigenvalues.len());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < -tol * scale {
            return Err(MetricError::NotPsd(l));
        }
        values[i] = l.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&values) * v.transpose())
}

/// Squared Frechet distance between Gaussians:
/// `|mu_p - mu_q|^2 + Tr(Sp + Sq - 2 (Sp Sq)^{1/2})`, computed through the
/// symmetric form `sqrt(Sp^{1/2} Sq Sp^{1/2})` and clamped at zero.
pub fn frechet_distance(p: &GaussianStats, q: &GaussianStats) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(MetricError::DimensionMismatch(p.dim(), q.dim()));
    }
    p.validate()?;
    q.validate()?;
    let d = p.dim();
    let sp = DMatrix::from_row_slice(d, d, &p.cov);
    let sq = DMatrix::from_row_slice(d, d, &q.cov);
    let sp_half = sqrt_psd(&sp, PSD_TOLERANCE)?;
    let inner = &sp_half * &sq * &sp_half;
    let cross = sqrt_psd(&inner, PSD_TOLERANCE)?;
    let mean_term: f64 = p
        .mean
        .iter()
        .zip(&q.mean)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let trace = sp.trace() + sq.trace() - 2.0 * cross.trace();
    Ok((mean_term + trace).max(0.0))
}

/// Flat report of the full-reference metrics; Dice/Jaccard are present only
/// when both inputs were label masks.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub dice: Option<f64>,
    pub jaccard: Option<f64>,
}

impl MetricReport {
    /// Flat JSON object keyed by metric name; infinite PSNR serializes as
    /// the string "inf".
    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        obj.insert("mse".into(), serde_json::json!(self.mse));
        let psnr = if self.psnr_db.is_infinite() {
            serde_json::json!("inf")
        } else {
            serde_json::json!(self.psnr_db)
        };
        obj.insert("psnr_db".into(), psnr);
        obj.insert("ssim".into(), serde_json::json!(self.ssim));
        if let Some(d) = self.dice {
            obj.insert("dice".into(), serde_json::json!(d));
        }
        if let Some(j) = self.jaccard {
            obj.insert("jaccard".into(), serde_json::json!(j));
        }
        serde_json::Value::Object(obj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(seed: usize) -> Tensor<f32> {
        Tensor::from_fn(&[16, 16, 1], |i| {
            (((i * 131 + seed * 17) % 256) as f32) / 255.0
        })
    }

    #[test]
    fn mse_examples() {
        let x = image(0);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
        let zero = Tensor::<f32>::zeros(&[4, 4]);
        let bright = Tensor::filled(&[4, 4], 255.0f32);
        assert_eq!(mse(&zero, &bright).unwrap(), 65_025.0);
        let a = Tensor::new(&[2], vec![0.0f32, 0.0]).unwrap();
        let b = Tensor::new(&[2], vec![3.0f32, 4.0]).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 12.5);
    }

    #[test]
    fn mse_shape_mismatch() {
        let a = Tensor::<f32>::zeros(&[2, 2]);
        let b = Tensor::<f32>::zeros(&[4]);
        assert!(matches!(
            mse(&a, &b),
            Err(MetricError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn psnr_examples() {
        let x = image(3);
        assert!(psnr(&x, &x, 1.0).unwrap().is_infinite());
        // mse = max^2 gives exactly 0 dB.
        assert_eq!(psnr_from_mse(65_025.0, 255.0), 0.0);
        let db = psnr_from_mse(330.19, 255.0);
        assert!((db - 22.94).abs() < 0.01, "got {db}");
    }

    #[test]
    fn psnr_monotone_in_mse() {
        let mut last = f64::INFINITY;
        for mse in [1.0, 2.0, 10.0, 100.0, 1000.0] {
            let db = psnr_from_mse(mse, 255.0);
            assert!(db < last);
            last = db;
        }
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let x = image(1);
        let y = image(2);
        assert!((ssim(&x, &x, 1.0).unwrap() - 1.0).abs() <= 1e-9);
        let xy = ssim(&x, &y, 1.0).unwrap();
        let yx = ssim(&y, &x, 1.0).unwrap();
        assert!((xy - yx).abs() <= 1e-9);
    }

    #[test]
    fn ssim_anticorrelated_checkerboard_is_negative() {
        let x = Tensor::from_fn(&[16, 16], |i| {
            let (y, xx) = (i / 16, i % 16);
            ((y + xx) % 2) as f64
        });
        let inv = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &inv, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let t = Tensor::<f32>::zeros(&[8, 8]);
        assert!(matches!(
            ssim(&t, &t, 1.0),
            Err(MetricError::TooSmallForSsim { .. })
        ));
    }

    #[test]
    fn dice_jaccard_identity_and_disjoint() {
        let a = Tensor::new(&[2, 2, 1], vec![1.0f32, 1.0, 0.0, 0.0]).unwrap();
        let (d, l, j) = dice_jaccard(&a, &a).unwrap();
        assert_eq!((d, l, j), (1.0, 0.0, 1.0));
        let b = Tensor::new(&[2, 2, 1], vec![0.0f32, 0.0, 1.0, 1.0]).unwrap();
        let (d, l, j) = dice_jaccard(&a, &b).unwrap();
        assert_eq!((d, l, j), (0.0, 1.0, 0.0));
    }

    #[test]
    fn dice_jaccard_worked_overlap() {
        // |A| = |B| = 4, |A intersect B| = 2.
        let a = Tensor::new(&[6, 1, 1], vec![1.0f32, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let b = Tensor::new(&[6, 1, 1], vec![1.0f32, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let (d, _, j) = dice_jaccard(&a, &b).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        assert!((j - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dice_jaccard_relation_on_hard_masks() {
        // dice = 2j/(1+j) per channel for hard masks.
        for seed in 0..10usize {
            let a = Tensor::from_fn(&[8, 8, 1], |i| ((i * 7 + seed) % 3 == 0) as u8 as f64);
            let b = Tensor::from_fn(&[8, 8, 1], |i| ((i * 5 + seed) % 4 == 0) as u8 as f64);
            let (d, _, j) = dice_jaccard(&a, &b).unwrap();
            assert!(d + 1e-12 >= j);
            assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_channels_score_one() {
        let z = Tensor::<f32>::zeros(&[4, 4, 2]);
        let (d, l, j) = dice_jaccard(&z, &z).unwrap();
        assert_eq!((d, l, j), (1.0, 0.0, 1.0));
    }

    #[test]
    fn dice_loss_grad_matches_finite_differences() {
        let pred = Tensor::from_fn(&[1, 3, 3, 2], |i| 0.1 + 0.08 * ((i * 13 % 11) as f64));
        let truth = Tensor::from_fn(&[1, 3, 3, 2], |i| ((i * 7) % 3 == 0) as u8 as f64);
        let grad = dice_loss_grad(&pred, &truth).unwrap();
        let mut work = pred.clone();
        for e in 0..pred.len() {
            let x = pred.data()[e];
            let h = 1e-6;
            work.data_mut()[e] = x + h;
            let up = dice_jaccard(&work, &truth).unwrap().1;
            work.data_mut()[e] = x - h;
            let down = dice_jaccard(&work, &truth).unwrap().1;
            work.data_mut()[e] = x;
            let numeric = (up - down) / (2.0 * h);
            assert!(
                (grad.data()[e] - numeric).abs() < 1e-6,
                "elem {e}: analytic {} vs numeric {numeric}",
                grad.data()[e]
            );
        }
    }

    #[test]
    fn frechet_identity_and_scalar_case() {
        let p = GaussianStats::new(vec![0.0], vec![1.0]).unwrap();
        assert!(frechet_distance(&p, &p).unwrap().abs() <= 1e-6);
        let q = GaussianStats::new(vec![3.0], vec![4.0]).unwrap();
        // 9 + 1 + 4 - 2*2 = 10.
        assert!((frechet_distance(&p, &q).unwrap() - 10.0).abs() <= 1e-9);
    }

    #[test]
    fn frechet_diagonal_decomposes() {
        let p = GaussianStats::new(
            vec![0.0, 1.0, -2.0],
            vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.5],
        )
        .unwrap();
        let q = GaussianStats::new(
            vec![1.0, -1.0, 0.5],
            vec![2.0, 0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0, 1.5],
        )
        .unwrap();
        let full = frechet_distance(&p, &q).unwrap();
        let mut per_dim = 0.0;
        for i in 0..3 {
            let pi = GaussianStats::new(vec![p.mean[i]], vec![p.cov[i * 3 + i]]).unwrap();
            let qi = GaussianStats::new(vec![q.mean[i]], vec![q.cov[i * 3 + i]]).unwrap();
            per_dim += frechet_distance(&pi, &qi).unwrap();
        }
        assert!((full - per_dim).abs() < 1e-9, "{full} vs {per_dim}");
    }

    #[test]
    fn frechet_symmetric() {
        let p = GaussianStats::from_samples(&[
            vec![1.0, 2.0],
            vec![2.0, 1.0],
            vec![0.0, 0.5],
            vec![1.5, 1.5],
        ])
        .unwrap();
        let q = GaussianStats::from_samples(&[
            vec![0.0, 0.0],
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![0.5, 0.5],
        ])
        .unwrap();
        let pq = frechet_distance(&p, &q).unwrap();
        let qp = frechet_distance(&q, &p).unwrap();
        assert!((pq - qp).abs() <= 1e-6);
        assert!(pq >= 0.0);
    }

    #[test]
    fn frechet_rejects_dimension_mismatch() {
        let p = GaussianStats::new(vec![0.0], vec![1.0]).unwrap();
        let q = GaussianStats::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            frechet_distance(&p, &q),
            Err(MetricError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn asymmetric_covariance_rejected() {
        assert!(matches!(
            GaussianStats::new(vec![0.0, 0.0], vec![1.0, 0.5, -0.5, 1.0]),
            Err(MetricError::NotSymmetric(0, 1))
        ));
    }

    #[test]
    fn non_psd_rejected() {
        let p = GaussianStats::new(vec![0.0, 0.0], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let q = GaussianStats::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            frechet_distance(&p, &q),
            Err(MetricError::NotPsd(_))
        ));
    }

    #[test]
    fn permutation_invariance() {
        // mse/psnr/dice/jaccard are invariant to a shared spatial permutation.
        let a = Tensor::from_fn(&[12, 1, 1], |i| (i as f64 * 0.7).sin().abs());
        let b = Tensor::from_fn(&[12, 1, 1], |i| (i as f64 * 0.3).cos().abs());
        let perm: Vec<usize> = vec![5, 3, 11, 0, 7, 2, 9, 4, 1, 10, 6, 8];
        let pa = Tensor::from_fn(&[12, 1, 1], |i| a.data()[perm[i]]);
        let pb = Tensor::from_fn(&[12, 1, 1], |i| b.data()[perm[i]]);
        assert!((mse(&a, &b).unwrap() - mse(&pa, &pb).unwrap()).abs() < 1e-12);
        let (d1, _, j1) = dice_jaccard(&a, &b).unwrap();
        let (d2, _, j2) = dice_jaccard(&pa, &pb).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
        assert!((j1 - j2).abs() < 1e-12);
    }

    #[test]
    fn report_serializes_infinity_as_string() {
        let report = MetricReport {
            mse: 0.0,
            psnr_db: f64::INFINITY,
            ssim: 1.0,
            dice: None,
            jaccard: None,
        };
        let json = report.to_json();
        assert_eq!(json["psnr_db"], "inf");
        assert_eq!(json["mse"], 0.0);
        assert!(json.get("dice").is_none());
    }
}
