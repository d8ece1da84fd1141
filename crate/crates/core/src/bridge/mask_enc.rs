use rand::Rng;

use crate::domain::{ScoreMap, ToyConfig};
use crate::error::{shape_err, Result};
use crate::nn::layers::{attention, LayerNorm, Linear, TransformerBlock};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};

const POS_STD: f64 = 0.5;
const QUERY_STD: f64 = 1.0;

/// Turns a score map into `k` mask tokens: patch embedding, one
/// self-attention block, then cross-attention from `k` learned queries
/// (`mask_enc/*`).
#[derive(Clone, Debug)]
pub struct MaskEncoder {
    embed: Linear,
    pos: ParamId,
    block: TransformerBlock,
    queries: ParamId,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    ln: LayerNorm,
    patch_size: usize,
    image_size: usize,
    token_dim: usize,
}

impl MaskEncoder {
    pub const PREFIX: &'static str = "mask_enc";

    pub fn new(store: &mut ParamStore, cfg: &ToyConfig, rng: &mut impl Rng) -> Self {
        let t = cfg.token_dim;
        let p2 = cfg.patch_size * cfg.patch_size;
        Self {
            embed: Linear::new(store, "mask_enc/embed", (p2, t), true, true, rng),
            pos: store.add_normal("mask_enc/pos", &[cfg.num_patches(), t], POS_STD, true, rng),
            block: TransformerBlock::new(store, "mask_enc/block0", t, cfg.ffn_mult, true, rng),
            queries: store.add_normal(
                "mask_enc/queries",
                &[cfg.mask_tokens, t],
                QUERY_STD,
                true,
                rng,
            ),
            q: Linear::new(store, "mask_enc/xattn/q", (t, t), true, true, rng),
            k: Linear::new(store, "mask_enc/xattn/k", (t, t), true, true, rng),
            v: Linear::new(store, "mask_enc/xattn/v", (t, t), true, true, rng),
            out: Linear::new(store, "mask_enc/xattn/o", (t, t), true, true, rng),
            ln: LayerNorm::new(store, "mask_enc/ln", t, true),
            patch_size: cfg.patch_size,
            image_size: cfg.image_size,
            token_dim: t,
        }
    }

    /// `score: [1, H, W]` probabilities to `[k, token_dim]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, score: Var) -> Result<Var> {
        let s = g.value(score).shape();
        if s != [1, self.image_size, self.image_size] {
            return Err(shape_err!(
                "mask encoder expects [1, {n}, {n}], got {s:?}",
                n = self.image_size
            ));
        }
        let centred = g.add_scalar(score, -0.5);
        let patches = g.patchify(centred, self.patch_size)?;
        let x = self.embed.forward(g, store, patches)?;
        let pos = g.param(store, self.pos);
        let x = g.add(x, pos)?;
        let x = self.block.forward(g, store, x)?;
        let queries = g.param(store, self.queries);
        let q = self.q.forward(g, store, queries)?;
        let k = self.k.forward(g, store, x)?;
        let v = self.v.forward(g, store, x)?;
        let a = attention(g, q, k, v, self.token_dim)?;
        let a = self.out.forward(g, store, a)?;
        let y = g.add(queries, a)?;
        self.ln.forward(g, store, y)
    }
}

pub fn score_tensor(score: &ScoreMap) -> Tensor {
    Tensor::new(
        &[1, score.height(), score.width()],
        score.data().iter().map(|&v| v as f64).collect(),
    )
    .expect("score dims")
}

pub fn encode_mask_tokens(
    score: &ScoreMap,
    enc: &MaskEncoder,
    store: &ParamStore,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let s = g.input(score_tensor(score));
    let out = enc.forward(&mut g, store, s)?;
    Ok(g.value(out).clone())
}
