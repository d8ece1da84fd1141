//! Forgery localization and detection toolkit at desk scale.

pub mod bridge;
pub mod datagen;
pub mod domain;
pub mod encoders;
mod error;
pub mod eval;
pub mod expert;
pub mod nn;
pub mod resample;
pub mod seed;
pub mod verify;

pub use error::{Error, Result};
