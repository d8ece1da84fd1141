use rand::Rng;

use crate::domain::{ScoreMap, ToyConfig};
use crate::error::{shape_err, Result};
use crate::nn::layers::Conv3x3;
use crate::nn::{Graph, ParamStore, Tensor, Var};

/// Shrinks the output convolution at init so training starts near p = 0.5.
const OUTPUT_INIT_SCALE: f64 = 0.1;

/// Four 3x3 convolutions over the patch grid with two x2 bilinear
/// upsamplings; the input grid is resized and concatenated before the third
/// convolution. Logits are resized to the image size before the sigmoid
/// (`decoder/*`).
#[derive(Clone, Debug)]
pub struct DecoderNet {
    conv1: Conv3x3,
    conv2: Conv3x3,
    conv3: Conv3x3,
    conv4: Conv3x3,
    image_size: usize,
}

impl DecoderNet {
    pub const PREFIX: &'static str = "decoder";

    pub fn new(store: &mut ParamStore, cfg: &ToyConfig, rng: &mut impl Rng) -> Self {
        let c = cfg.decoder_in_channels();
        let w = cfg.decoder_width;
        let half = (w / 2).max(1);
        let conv4 = Conv3x3::new(store, "decoder/conv4", (half, 1), true, rng);
        store.tensor_mut(conv4.weight).scale(OUTPUT_INIT_SCALE);
        Self {
            conv1: Conv3x3::new(store, "decoder/conv1", (c, w), true, rng),
            conv2: Conv3x3::new(store, "decoder/conv2", (w, w), true, rng),
            conv3: Conv3x3::new(store, "decoder/conv3", (w + c, half), true, rng),
            conv4,
            image_size: cfg.image_size,
        }
    }

    /// Logits `[1, H, W]` from the three per-patch inputs, concatenated in
    /// the order `[f_cross, f_enhanced, f_vocab]`.
    pub fn logits(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        f_cross: Var,
        f_enhanced: Var,
        f_vocab: Var,
    ) -> Result<Var> {
        let p = g.value(f_cross).rows();
        let side = (p as f64).sqrt().round() as usize;
        if side * side != p || p == 0 {
            return Err(shape_err!("{p} patches do not form a square grid"));
        }
        let tokens = g.concat_cols(&[f_cross, f_enhanced, f_vocab])?;
        let c = g.value(tokens).cols();
        let grid = g.transpose(tokens)?;
        let grid = g.reshape(grid, &[c, side, side])?;

        let h = self.conv1.forward(g, store, grid)?;
        let h = g.gelu(h);
        let h = g.resize(h, 2 * side, 2 * side)?;
        let h = self.conv2.forward(g, store, h)?;
        let h = g.gelu(h);
        let skip = g.resize(grid, 2 * side, 2 * side)?;
        let h = g.concat_rows(&[h, skip])?;
        let h = self.conv3.forward(g, store, h)?;
        let h = g.gelu(h);
        let h = g.resize(h, 4 * side, 4 * side)?;
        let h = self.conv4.forward(g, store, h)?;
        g.resize(h, self.image_size, self.image_size)
    }

    /// Probability map `[1, H, W]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        f_cross: Var,
        f_enhanced: Var,
        f_vocab: Var,
    ) -> Result<Var> {
        let l = self.logits(g, store, f_cross, f_enhanced, f_vocab)?;
        Ok(g.sigmoid(l))
    }
}

pub fn decode_mask(
    f_cross: &Tensor,
    f_enhanced: &Tensor,
    f_vocab: &Tensor,
    dec: &DecoderNet,
    store: &ParamStore,
) -> Result<ScoreMap> {
    let (p1, p2, p3) = (f_cross.rows(), f_enhanced.rows(), f_vocab.rows());
    if p1 != p2 || p2 != p3 {
        return Err(shape_err!("patch counts differ: {p1}, {p2}, {p3}"));
    }
    let mut g = Graph::new();
    let (a, b, c) = (
        g.input(f_cross.clone()),
        g.input(f_enhanced.clone()),
        g.input(f_vocab.clone()),
    );
    let out = dec.forward(&mut g, store, a, b, c)?;
    prob_to_score_map(g.value(out))
}

/// Convert a `[1, H, W]` probability tensor.
pub fn prob_to_score_map(t: &Tensor) -> Result<ScoreMap> {
    match t.shape() {
        [1, h, w] => ScoreMap::from_f64(*w, *h, t.data()),
        s => Err(shape_err!("score tensor must be [1,h,w], got {s:?}")),
    }
}
