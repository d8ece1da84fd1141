use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and hyper-parameters of the desk-scale model.
///
/// The defaults keep four evenly spaced encoder taps over an eight block
/// encoder, 64x64 inputs and 8x8 patches (64 patch tokens).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub image_size: usize,
    pub patch_size: usize,
    /// Width `d` of both vision towers and the text tower.
    pub embed_dim: usize,
    /// Key dimension `d_e` of the stage projections and fusion attention.
    pub key_dim: usize,
    pub encoder_depth: usize,
    /// 1-based block indices whose outputs are tapped.
    pub tap_blocks: Vec<usize>,
    /// Number of template tokens `E` per class prompt.
    pub template_len: usize,
    /// Length `m` of each learnable object embedding.
    pub object_embed_len: usize,
    /// Number of mask tokens `k` produced by the mask encoder.
    pub mask_tokens: usize,
    /// Number of learnable prompt tokens between image and mask tokens.
    pub prompt_tokens: usize,
    pub lambda_cls: f64,
    pub lambda_loc: f64,
    pub rng_seed: u64,
    /// Width of the decision-head token space.
    pub token_dim: usize,
    /// Hidden width multiplier of transformer feed-forward layers.
    pub ffn_mult: usize,
    /// Channel width of the first decoder convolutions.
    pub decoder_width: usize,
    /// `false` replaces the learnable object embeddings with the frozen
    /// embedding of the word "object".
    pub object_prompt: bool,
    /// `false` drops the trainable vocabulary tower; its role is taken by
    /// the frozen patch tower.
    pub vocab_encoder: bool,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            embed_dim: 64,
            key_dim: 64,
            encoder_depth: 8,
            tap_blocks: vec![2, 4, 6, 8],
            template_len: 4,
            object_embed_len: 12,
            mask_tokens: 4,
            prompt_tokens: 4,
            lambda_cls: 1.0,
            lambda_loc: 1.0,
            rng_seed: 0,
            token_dim: 32,
            ffn_mult: 2,
            decoder_width: 32,
            object_prompt: true,
            vocab_encoder: true,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.patch_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return fail(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.image_size < crate::domain::MIN_SIDE {
            return fail(format!("image_size {} below minimum", self.image_size));
        }
        if self.tap_blocks.is_empty() {
            return fail("tap_blocks is empty".into());
        }
        if self.tap_blocks[0] == 0 || self.tap_blocks.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!(
                "tap_blocks {:?} must be strictly increasing 1-based indices",
                self.tap_blocks
            ));
        }
        if *self.tap_blocks.last().unwrap() > self.encoder_depth {
            return fail(format!(
                "tap block {} exceeds encoder depth {}",
                self.tap_blocks.last().unwrap(),
                self.encoder_depth
            ));
        }
        if self.object_embed_len == 0 {
            return fail("object_embed_len m must be at least 1".into());
        }
        if self.template_len == 0 {
            return fail("template_len must be at least 1".into());
        }
        if !(self.lambda_cls >= 0.0 && self.lambda_loc >= 0.0) {
            return fail("loss weights must be non-negative".into());
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("key_dim", self.key_dim),
            ("token_dim", self.token_dim),
            ("ffn_mult", self.ffn_mult),
            ("decoder_width", self.decoder_width),
            ("mask_tokens", self.mask_tokens),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn num_stages(&self) -> usize {
        self.tap_blocks.len()
    }

    /// Channels entering the decoder: `f_cross`, `f_enhanced`, `f_vocab`.
    pub fn decoder_in_channels(&self) -> usize {
        2 + self.key_dim + self.embed_dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = ToyConfig::default();
        c.validate().unwrap();
        assert_eq!(c.num_patches(), 64);
        assert_eq!(c.decoder_in_channels(), 2 + 2 * 64);
    }

    #[test]
    fn rejects_bad_taps_and_m() {
        let mut c = ToyConfig {
            tap_blocks: vec![2, 2],
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.tap_blocks = vec![4, 9];
        assert!(c.validate().is_err());
        c.tap_blocks = vec![8];
        c.validate().unwrap();
        c.object_embed_len = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ToyConfig = serde_json::from_str(r#"{"object_embed_len": 24}"#).unwrap();
        assert_eq!(c.object_embed_len, 24);
        assert_eq!(c.tap_blocks, vec![2, 4, 6, 8]);
    }
}
