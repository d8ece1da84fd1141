use rand::Rng;
use serde::Serialize;

use super::explain::Verdict;
use super::tokens::TokenSequence;
use crate::domain::ToyConfig;
use crate::error::{shape_err, Result};
use crate::nn::layers::{LayerNorm, Linear, TransformerBlock};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};

const POS_STD: f64 = 0.5;
const EMBED_STD: f64 = 1.0;

/// The fixed text instruction appended after the mask tokens.
pub const INSTRUCTION: [&str; 8] = [
    "is",
    "there",
    "any",
    "forgery",
    "information",
    "in",
    "this",
    "image",
];

/// Two transformer blocks over the interleaved sequence, mean pooling and a
/// two-way readout (`head/*`). Also owns the instruction word embeddings.
#[derive(Clone, Debug)]
pub struct DecisionHead {
    text_embed: ParamId,
    pos: ParamId,
    blocks: Vec<TransformerBlock>,
    ln: LayerNorm,
    cls: Linear,
    max_len: usize,
}

impl DecisionHead {
    pub const PREFIX: &'static str = "head";

    pub fn new(store: &mut ParamStore, cfg: &ToyConfig, rng: &mut impl Rng) -> Self {
        let t = cfg.token_dim;
        let max_len = cfg.num_patches() + cfg.prompt_tokens + cfg.mask_tokens + INSTRUCTION.len();
        Self {
            text_embed: store.add_normal(
                "head/text_embed",
                &[INSTRUCTION.len(), t],
                EMBED_STD,
                true,
                rng,
            ),
            pos: store.add_normal("head/pos", &[max_len, t], POS_STD, true, rng),
            blocks: (0..2)
                .map(|i| {
                    TransformerBlock::new(
                        store,
                        &format!("head/block{i}"),
                        t,
                        cfg.ffn_mult,
                        true,
                        rng,
                    )
                })
                .collect(),
            ln: LayerNorm::new(store, "head/ln_f", t, true),
            cls: Linear::new(store, "head/cls", (t, 2), true, true, rng),
            max_len,
        }
    }

    /// Instruction tokens `[8, token_dim]`.
    pub fn text_tokens(&self, g: &mut Graph, store: &ParamStore) -> Result<Var> {
        let table = g.param(store, self.text_embed);
        let ids: Vec<usize> = (0..INSTRUCTION.len()).collect();
        g.gather_rows(table, &ids)
    }

    /// Sequence `[len, token_dim]` to logits `[1, 2]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, seq: Var) -> Result<Var> {
        let len = g.value(seq).rows();
        if len == 0 || len > self.max_len {
            return Err(shape_err!(
                "sequence length {len} outside 1..={}",
                self.max_len
            ));
        }
        let pos = g.param(store, self.pos);
        let pos = g.slice_rows(pos, 0, len)?;
        let mut x = g.add(seq, pos)?;
        for b in &self.blocks {
            x = b.forward(g, store, x)?;
        }
        let x = self.ln.forward(g, store, x)?;
        let pooled = g.mean_rows(x)?;
        self.cls.forward(g, store, pooled)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub logits: [f64; 2],
}

impl Classification {
    /// Verdict is the larger logit; ties resolve to authentic.
    pub fn from_logits(logits: [f64; 2]) -> Self {
        let idx = if logits[1] > logits[0] { 1 } else { 0 };
        Self {
            verdict: Verdict::from_index(idx),
            logits,
        }
    }

    pub(crate) fn from_tensor(t: &Tensor) -> Self {
        Self::from_logits([t.data()[0], t.data()[1]])
    }
}

pub fn classify(
    seq: &TokenSequence,
    head: &DecisionHead,
    store: &ParamStore,
) -> Result<Classification> {
    let mut g = Graph::new();
    let s = g.input(seq.tokens.clone());
    let logits = head.forward(&mut g, store, s)?;
    Ok(Classification::from_tensor(g.value(logits)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_order() {
        assert_eq!(
            Classification::from_logits([2.0, -1.0]).verdict,
            Verdict::Authentic
        );
        assert_eq!(
            Classification::from_logits([-2.0, 1.0]).verdict,
            Verdict::Forged
        );
    }
}
