use crate::error::{shape_err, Error, Result};

/// Smallest accepted image side.
pub const MIN_SIDE: usize = 16;

/// An 8-bit RGB image stored row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(shape_err!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
            ));
        }
        if data.len() != width * height * 3 {
            return Err(shape_err!(
                "image data has {} bytes, expected {}",
                data.len(),
                width * height * 3
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    fn of(width: usize, mut inside: impl FnMut(usize) -> bool, len: usize) -> Option<Self> {
        let mut bb: Option<BoundingBox> = None;
        for i in (0..len).filter(|&i| inside(i)) {
            let (x, y) = (i % width, i / width);
            bb = Some(match bb {
                None => BoundingBox {
                    x0: x,
                    y0: y,
                    x1: x,
                    y1: y,
                },
                Some(b) => BoundingBox {
                    x0: b.x0.min(x),
                    y0: b.y0.min(y),
                    x1: b.x1.max(x),
                    y1: b.y1.max(y),
                },
            });
        }
        bb
    }
}

/// Per-pixel ground truth with values in {0, 1}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(shape_err!(
                "mask data has {} values, expected {}",
                data.len(),
                width * height
            ));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Contract(format!("mask value {v} is not 0 or 1")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..width * height)
            .map(|i| f(i % width, i / width) as u8)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn positives(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn area_fraction(&self) -> f64 {
        self.positives() as f64 / self.data.len() as f64
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        BoundingBox::of(self.width, |i| self.data[i] == 1, self.data.len())
    }

    /// Lossless view as a score map (0.0 / 1.0).
    pub fn to_score_map(&self) -> ScoreMap {
        ScoreMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Nearest-neighbour resample to a new size.
    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        let data = (0..width * height)
            .map(|i| {
                let (x, y) = (i % width, i / width);
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
                self.data[sy.min(self.height - 1) * self.width + sx.min(self.width - 1)]
            })
            .collect();
        BinaryMask {
            width,
            height,
            data,
        }
    }
}

/// Per-pixel forgery probability in [0, 1]. Out-of-range values are
/// rejected, never clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ScoreMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(shape_err!(
                "score map has {} values, expected {}",
                data.len(),
                width * height
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("score {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_f64(width: usize, height: usize, data: &[f64]) -> Result<Self> {
        Self::new(width, height, data.iter().map(|&v| v as f32).collect())
    }

    pub fn uniform(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Pixels scoring at least `tau`.
    pub fn threshold(&self, tau: f32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| (v >= tau) as u8).collect(),
        }
    }

    pub fn bounding_box(&self, tau: f32) -> Option<BoundingBox> {
        BoundingBox::of(self.width, |i| self.data[i] >= tau, self.data.len())
    }

    /// Bilinear resample (half-pixel centres). Convex combinations keep the
    /// values inside [0, 1].
    pub fn resize_bilinear(&self, width: usize, height: usize) -> ScoreMap {
        let src: Vec<f64> = self.data.iter().map(|&v| v as f64).collect();
        let out = crate::resample::bilinear(&src, 1, self.height, self.width, height, width);
        ScoreMap {
            width,
            height,
            data: out
                .into_iter()
                .map(|v| (v as f32).clamp(0.0, 1.0))
                .collect(),
        }
    }
}
