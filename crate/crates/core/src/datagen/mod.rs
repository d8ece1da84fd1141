//! Procedural forgery synthesis: textures, masks, the three tampering
//! operations, distortions and manifest emission.

mod dataset;
mod distort;
mod forge;
mod mask;
mod texture;

pub use dataset::{
    build_dataset, caption_for, rebuild_entry, synthesize, verify_rebuild, DatasetRequest,
    DistortionPolicy, Sample, SourcePool,
};
pub use distort::{
    apply_distortion, jpeg_round_trip, psnr, resize_bilinear, resized_side, total_variation,
    DistortionSpec,
};
pub use forge::{copy_move, removal_fill, splice};
pub use mask::{is_connected, make_mask, MaskGranularity, ShapeRegime};
pub use texture::procedural_image;
