use std::fmt;
use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageFormat};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::RasterImage;
use crate::error::{Error, Result};
use crate::resample;
use crate::seed::rng_for;

/// One image degradation. Noise sigma is on the 0-255 scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistortionSpec {
    Resize { scale: f64 },
    Blur { kernel: usize },
    Noise { sigma: f64 },
    Jpeg { quality: u8 },
}

impl DistortionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistortionSpec::Resize { scale } => scale > 0.0 && scale <= 1.0,
            DistortionSpec::Blur { kernel } => kernel >= 3 && kernel % 2 == 1,
            DistortionSpec::Noise { sigma } => sigma.is_finite() && sigma >= 0.0,
            DistortionSpec::Jpeg { quality } => (1..=100).contains(&quality),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Spec(format!("{self:?}")))
        }
    }

    /// The robustness ladder: Resize 0.78/0.25, Blur 3/15, Noise 3/15,
    /// JPEG 100/50.
    pub fn robustness_ladder() -> Vec<DistortionSpec> {
        vec![
            DistortionSpec::Resize { scale: 0.78 },
            DistortionSpec::Resize { scale: 0.25 },
            DistortionSpec::Blur { kernel: 3 },
            DistortionSpec::Blur { kernel: 15 },
            DistortionSpec::Noise { sigma: 3.0 },
            DistortionSpec::Noise { sigma: 15.0 },
            DistortionSpec::Jpeg { quality: 100 },
            DistortionSpec::Jpeg { quality: 50 },
        ]
    }

    /// Training-time corruption candidates (noise or JPEG).
    pub fn training_policy() -> Vec<DistortionSpec> {
        vec![
            DistortionSpec::Noise { sigma: 3.0 },
            DistortionSpec::Noise { sigma: 15.0 },
            DistortionSpec::Jpeg { quality: 100 },
            DistortionSpec::Jpeg { quality: 50 },
        ]
    }

    /// Gaussian sigma used for a blur kernel of size `k`.
    pub fn blur_sigma(kernel: usize) -> f64 {
        0.3 * ((kernel as f64 - 1.0) / 2.0 - 1.0) + 0.8
    }
}

impl fmt::Display for DistortionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistortionSpec::Resize { scale } => write!(f, "Resize({scale}x)"),
            DistortionSpec::Blur { kernel } => write!(f, "Blur(k={kernel})"),
            DistortionSpec::Noise { sigma } => write!(f, "Noise(sigma={sigma})"),
            DistortionSpec::Jpeg { quality } => write!(f, "Compress(q={quality})"),
        }
    }
}

/// Output side length of a resize: round-half-up of `scale * side`.
pub fn resized_side(side: usize, scale: f64) -> usize {
    (scale * side as f64 + 0.5).floor() as usize
}

pub fn apply_distortion(
    img: &RasterImage,
    spec: &DistortionSpec,
    seed: u64,
) -> Result<RasterImage> {
    spec.validate()?;
    match *spec {
        DistortionSpec::Resize { scale } => {
            let w = resized_side(img.width(), scale);
            let h = resized_side(img.height(), scale);
            resize_bilinear(img, w, h)
        }
        DistortionSpec::Blur { kernel } => Ok(gaussian_blur(img, kernel)),
        DistortionSpec::Noise { sigma } => Ok(add_noise(img, sigma, seed)),
        DistortionSpec::Jpeg { quality } => jpeg_round_trip(img, quality),
    }
}

fn to_planes(img: &RasterImage) -> Vec<f64> {
    let n = img.width() * img.height();
    let mut out = vec![0.0; 3 * n];
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * n + i] = px[c] as f64;
        }
    }
    out
}

fn from_planes(planes: &[f64], w: usize, h: usize) -> Result<RasterImage> {
    let n = w * h;
    let mut data = vec![0u8; 3 * n];
    for i in 0..n {
        for c in 0..3 {
            data[3 * i + c] = planes[c * n + i].round().clamp(0.0, 255.0) as u8;
        }
    }
    RasterImage::new(w, h, data)
}

pub fn resize_bilinear(img: &RasterImage, w: usize, h: usize) -> Result<RasterImage> {
    let planes = to_planes(img);
    let out = resample::bilinear(&planes, 3, img.height(), img.width(), h, w);
    from_planes(&out, w, h)
}

/// Reflect-101 index into `0..n`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

pub(crate) fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable convolution of one `w×h` plane with reflect-101 borders.
pub(crate) fn convolve_separable(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * plane[y * w + reflect(x as isize + j as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * tmp[reflect(y as isize + j as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

fn gaussian_blur(img: &RasterImage, size: usize) -> RasterImage {
    let kernel = gaussian_kernel(size, DistortionSpec::blur_sigma(size));
    let (w, h) = (img.width(), img.height());
    let planes = to_planes(img);
    let out: Vec<f64> = planes
        .chunks(w * h)
        .flat_map(|p| convolve_separable(p, w, h, &kernel))
        .collect();
    from_planes(&out, w, h).expect("same size as input")
}

fn add_noise(img: &RasterImage, sigma: f64, seed: u64) -> RasterImage {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = rng_for(seed, 0x6e6f697365);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let data = img
        .data()
        .iter()
        .map(|&v| {
            (v as f64 + normal.sample(&mut rng))
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    RasterImage::new(img.width(), img.height(), data).expect("same size as input")
}

pub fn jpeg_round_trip(img: &RasterImage, quality: u8) -> Result<RasterImage> {
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut Cursor::new(&mut buf), quality)
        .encode(
            img.data(),
            img.width() as u32,
            img.height() as u32,
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::Format(format!("jpeg encode: {e}")))?;
    let decoded = image::load_from_memory_with_format(&buf, ImageFormat::Jpeg)
        .map_err(|e| Error::Format(format!("jpeg decode: {e}")))?
        .to_rgb8();
    RasterImage::new(img.width(), img.height(), decoded.into_raw())
}

/// Sum of absolute differences between horizontally and vertically
/// adjacent samples, over all channels.
pub fn total_variation(img: &RasterImage) -> u64 {
    let (w, h) = (img.width(), img.height());
    let mut tv = 0u64;
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            if x + 1 < w {
                let q = img.pixel(x + 1, y);
                tv += (0..3).map(|c| p[c].abs_diff(q[c]) as u64).sum::<u64>();
            }
            if y + 1 < h {
                let q = img.pixel(x, y + 1);
                tv += (0..3).map(|c| p[c].abs_diff(q[c]) as u64).sum::<u64>();
            }
        }
    }
    tv
}

/// Peak signal-to-noise ratio in dB (infinite for identical images).
pub fn psnr(a: &RasterImage, b: &RasterImage) -> f64 {
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}
