use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::distort::{convolve_separable, gaussian_kernel};
use crate::domain::RasterImage;
use crate::error::Result;
use crate::seed::rng_for;

/// White noise smoothed by a Gaussian of the given sigma, one `size×size`
/// plane, roughly zero-mean with unit-ish spread.
pub(crate) fn smooth_noise(seed: u64, stream: u64, size: usize, sigma: f64) -> Vec<f64> {
    let mut rng = rng_for(seed, stream);
    let raw: Vec<f64> = (0..size * size)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let radius = (3.0 * sigma).ceil() as usize;
    let kernel = gaussian_kernel(2 * radius + 1, sigma);
    let smooth = convolve_separable(&raw, size, size, &kernel);
    let sd = (smooth.iter().map(|v| v * v).sum::<f64>() / smooth.len() as f64).sqrt();
    smooth.into_iter().map(|v| v / sd.max(1e-12)).collect()
}

/// A square multi-frequency texture: per-channel base colour, a few oriented
/// sinusoids and smoothed noise at two scales.
pub fn procedural_image(seed: u64, size: usize) -> Result<RasterImage> {
    let mut rng = rng_for(seed, 0);
    let n = size * size;
    let mut planes = vec![0.0; 3 * n];
    let coarse = smooth_noise(seed, 1, size, size as f64 / 10.0);
    let fine = smooth_noise(seed, 2, size, 1.0);
    for c in 0..3 {
        let base: f64 = rng.random_range(50.0..205.0);
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                let freq = rng.random_range(1.0..8.0) * TAU / size as f64;
                let angle = rng.random_range(0.0..TAU);
                (
                    freq * angle.cos(),
                    freq * angle.sin(),
                    rng.random_range(0.0..TAU),
                    rng.random_range(8.0..30.0),
                )
            })
            .collect();
        let coarse_amp: f64 = rng.random_range(10.0..30.0);
        let fine_amp: f64 = rng.random_range(4.0..14.0);
        for y in 0..size {
            for x in 0..size {
                let i = y * size + x;
                let mut v = base + coarse_amp * coarse[i] + fine_amp * fine[i];
                for &(kx, ky, phase, amp) in &waves {
                    v += amp * (kx * x as f64 + ky * y as f64 + phase).sin();
                }
                planes[c * n + i] = v;
            }
        }
    }
    let data = (0..n)
        .flat_map(|i| (0..3).map(move |c| (i, c)))
        .map(|(i, c)| planes[c * n + i].round().clamp(0.0, 255.0) as u8)
        .collect();
    RasterImage::new(size, size, data)
}
