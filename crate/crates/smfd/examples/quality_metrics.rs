//! Full-reference metrics between a clean image and a degraded copy, plus
//! the Gaussian Frechet distance on feature statistics.

use smfd::degrade::{apply_plan, sample_plan};
use smfd::metrics::{frechet_distance, mse, psnr_from_mse, ssim, GaussianStats, MetricReport};
use smfd::tensor::Tensor;

fn main() {
    let clean = Tensor::from_fn(&[64, 64, 3], |i| {
        let p = i / 3;
        let (y, x) = (p / 64, p % 64);
        (128.0 + 90.0 * ((x as f64 / 9.0).sin() * (y as f64 / 7.0).cos())) as f32
    });
    let degraded = apply_plan(&clean, &sample_plan(7)).unwrap();

    let mse_v = mse(&clean, &degraded).unwrap();
    let report = MetricReport {
        mse: mse_v,
        psnr_db: psnr_from_mse(mse_v, 255.0),
        ssim: ssim(&clean, &degraded, 255.0).unwrap(),
        dice: None,
        jaccard: None,
    };
    println!("clean vs degraded: {}", report.to_json());

    // Frechet distance between two small feature distributions.
    let real = GaussianStats::from_samples(&[
        vec![0.0, 1.0],
        vec![0.5, 0.8],
        vec![-0.2, 1.1],
        vec![0.1, 0.9],
    ])
    .unwrap();
    let generated = GaussianStats::from_samples(&[
        vec![0.4, 0.2],
        vec![0.9, 0.1],
        vec![0.6, 0.5],
        vec![0.2, -0.1],
    ])
    .unwrap();
    println!(
        "frechet(real, generated) = {:.6}",
        frechet_distance(&real, &generated).unwrap()
    );
    println!(
        "frechet(real, real)      = {:.6}",
        frechet_distance(&real, &real).unwrap()
    );
}
