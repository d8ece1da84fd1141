use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::texture::smooth_noise;
use crate::domain::BinaryMask;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for};

const MAX_ATTEMPTS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeRegime {
    Blob,
    Polygon,
}

/// Target area band (fractions of the image) and shape family of a mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskGranularity {
    pub lo: f64,
    pub hi: f64,
    pub regime: ShapeRegime,
}

impl MaskGranularity {
    pub fn new(lo: f64, hi: f64, regime: ShapeRegime) -> Result<Self> {
        let g = Self { lo, hi, regime };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo > 0.0 && self.lo < self.hi && self.hi <= 0.5 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "granularity band [{}, {}] must satisfy 0 < lo < hi <= 0.5",
                self.lo, self.hi
            )))
        }
    }

    /// Inclusive pixel-count range for an image of `n` pixels.
    pub fn pixel_range(&self, n: usize) -> (usize, usize) {
        let lo = (self.lo * n as f64 - 1e-9).ceil() as usize;
        let hi = (self.hi * n as f64 + 1e-9).floor() as usize;
        (lo.max(1), hi)
    }

    pub fn contains(&self, area_fraction: f64) -> bool {
        area_fraction >= self.lo - 1e-12 && area_fraction <= self.hi + 1e-12
    }

    /// Fine, medium and coarse bands in both shape regimes.
    pub fn presets() -> Vec<MaskGranularity> {
        let mut out = Vec::new();
        for (lo, hi) in [(0.02, 0.05), (0.05, 0.10), (0.10, 0.25)] {
            for regime in [ShapeRegime::Blob, ShapeRegime::Polygon] {
                out.push(MaskGranularity { lo, hi, regime });
            }
        }
        out
    }
}

pub fn make_mask(seed: u64, granularity: &MaskGranularity, size: usize) -> Result<BinaryMask> {
    granularity.validate()?;
    let (min_px, max_px) = granularity.pixel_range(size * size);
    if min_px > max_px {
        return Err(Error::Generation(format!(
            "band [{}, {}] holds no pixel count on a {size}x{size} image",
            granularity.lo, granularity.hi
        )));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let s = derive_seed(seed, attempt);
        let mask = match granularity.regime {
            ShapeRegime::Blob => blob(s, size, min_px, max_px),
            ShapeRegime::Polygon => polygon(s, size, min_px, max_px),
        };
        if let Some(m) = mask {
            let area = m.positives();
            if area >= min_px && area <= max_px && is_connected(&m) {
                return Ok(m);
            }
        }
    }
    Err(Error::Generation(format!(
        "no {:?} mask in band [{}, {}] after {MAX_ATTEMPTS} attempts",
        granularity.regime, granularity.lo, granularity.hi
    )))
}

struct Cand {
    value: f64,
    idx: usize,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

fn neighbours(i: usize, size: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % size, i / size);
    [
        (x > 0).then(|| i - 1),
        (x + 1 < size).then(|| i + 1),
        (y > 0).then(|| i - size),
        (y + 1 < size).then(|| i + size),
    ]
    .into_iter()
    .flatten()
}

/// Thresholded smooth noise: grow the superlevel set around the field's peak
/// one pixel at a time until it holds exactly the target count.
fn blob(seed: u64, size: usize, min_px: usize, max_px: usize) -> Option<BinaryMask> {
    let mut rng = rng_for(seed, 0);
    let target = rng.random_range(min_px..=max_px);
    let sigma = rng.random_range(size as f64 / 16.0..size as f64 / 6.0);
    let field = smooth_noise(seed, 1, size, sigma);
    let start = (0..field.len()).max_by(|&a, &b| field[a].total_cmp(&field[b]))?;
    let mut inside = vec![0u8; size * size];
    let mut queued = vec![false; size * size];
    let mut heap = BinaryHeap::new();
    heap.push(Cand {
        value: field[start],
        idx: start,
    });
    queued[start] = true;
    let mut count = 0;
    while count < target {
        let c = heap.pop()?;
        inside[c.idx] = 1;
        count += 1;
        for nb in neighbours(c.idx, size) {
            if !queued[nb] {
                queued[nb] = true;
                heap.push(Cand {
                    value: field[nb],
                    idx: nb,
                });
            }
        }
    }
    BinaryMask::new(size, size, inside).ok()
}

fn rasterize_polygon(verts: &[(f64, f64)], size: usize) -> BinaryMask {
    BinaryMask::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut inside = false;
        let mut j = verts.len() - 1;
        for i in 0..verts.len() {
            let (xi, yi) = verts[i];
            let (xj, yj) = verts[j];
            if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    })
}

/// Random star-shaped polygon; its scale is bisected so the rasterized area
/// lands on a sampled target.
fn polygon(seed: u64, size: usize, min_px: usize, max_px: usize) -> Option<BinaryMask> {
    let mut rng = rng_for(seed, 0);
    let target = rng.random_range(min_px..=max_px);
    let s = size as f64;
    let cx = rng.random_range(0.3 * s..0.7 * s);
    let cy = rng.random_range(0.3 * s..0.7 * s);
    let n = rng.random_range(5..=9);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let radial: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..1.0)).collect();
    let shape = |r: f64| {
        let verts: Vec<(f64, f64)> = angles
            .iter()
            .zip(&radial)
            .map(|(a, f)| (cx + r * f * a.cos(), cy + r * f * a.sin()))
            .collect();
        rasterize_polygon(&verts, size)
    };
    let (mut lo, mut hi) = (0.0, 2.0 * s);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if shape(mid).positives() >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let m = shape(hi);
    let area = m.positives();
    (area >= min_px && area <= max_px).then_some(m)
}

/// 4-connectivity of the positive set (an empty mask is not connected).
pub fn is_connected(mask: &BinaryMask) -> bool {
    let (w, h) = (mask.width(), mask.height());
    let data = mask.data();
    let Some(start) = data.iter().position(|&v| v == 1) else {
        return false;
    };
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut reached = 0;
    while let Some(i) = queue.pop_front() {
        reached += 1;
        let (x, y) = (i % w, i / w);
        let nbs = [
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
        ];
        for nb in nbs.into_iter().flatten() {
            if data[nb] == 1 && !seen[nb] {
                seen[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    reached == mask.positives()
}
