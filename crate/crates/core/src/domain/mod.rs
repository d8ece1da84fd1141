//! Shared data model: images, masks, score maps, configuration and the
//! dataset manifest, together with their on-disk formats.

mod config;
mod io;
mod manifest;
mod raster;

pub use config::ToyConfig;
pub use io::{load_image, load_mask, load_score_map, save_image, save_mask, save_score_map};
pub use manifest::{
    validate_manifest, DatasetManifest, ForgeryType, Label, ManifestEntry, Violation,
};
pub use raster::{BinaryMask, BoundingBox, RasterImage, ScoreMap, MIN_SIDE};
