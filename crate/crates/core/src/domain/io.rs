use std::fs;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use super::{BinaryMask, RasterImage, ScoreMap};
use crate::error::{Error, Result};

/// Decode a PNG or JPEG file into an RGB raster.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::Format(format!(
            "{}: unsupported format {format:?}",
            path.display()
        )));
    }
    let decoded = image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    RasterImage::new(w as usize, h as usize, decoded.into_raw())
}

/// Write an image as 8-bit RGB PNG.
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .expect("raster invariant guarantees buffer length");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_write_error(path, e))
}

/// Write a mask as a single-channel PNG holding 0 and 255.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let px = mask.data().iter().map(|&v| v * 255).collect();
    let buf = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, px)
        .expect("mask invariant guarantees buffer length");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_write_error(path, e))
}

/// Read a mask PNG, thresholding at 128.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let gray = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = gray.dimensions();
    let data = gray
        .into_raw()
        .into_iter()
        .map(|v| (v >= 128) as u8)
        .collect();
    BinaryMask::new(w as usize, h as usize, data)
}

#[derive(Serialize, Deserialize)]
struct ScoreSidecar {
    width: usize,
    height: usize,
}

/// Write raw little-endian f32 scores to `path` and `{width, height}` to
/// the `.json` sibling.
pub fn save_score_map(map: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = map.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = path.with_extension("json");
    let meta = serde_json::to_string(&ScoreSidecar {
        width: map.width(),
        height: map.height(),
    })
    .expect("sidecar serializes");
    fs::write(&sidecar, meta).map_err(|e| Error::io(sidecar, e))
}

pub fn load_score_map(path: impl AsRef<Path>) -> Result<ScoreMap> {
    let path = path.as_ref();
    let sidecar = path.with_extension("json");
    let meta = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let meta: ScoreSidecar = serde_json::from_str(&meta)
        .map_err(|e| Error::Format(format!("{}: {e}", sidecar.display())))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.width * meta.height * 4 {
        return Err(Error::Format(format!(
            "{}: {} bytes for a {}x{} map",
            path.display(),
            bytes.len(),
            meta.width,
            meta.height
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ScoreMap::new(meta.width, meta.height, data)
}

fn image_write_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}
