//! Parameterized building blocks. Each block only holds [`ParamId`]s; the
//! values live in a [`ParamStore`] so that one store can be checkpointed,
//! frozen or perturbed as a whole.

use rand::Rng;

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    /// `x · W + b` with `W: [in, out]`, init N(0, 1/in).
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: (usize, usize),
        bias: bool,
        trainable: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let (d_in, d_out) = dims;
        let weight = store.add_normal(
            format!("{name}/w"),
            &[d_in, d_out],
            1.0 / (d_in as f64).sqrt(),
            trainable,
            rng,
        );
        let bias = bias.then(|| store.add(format!("{name}/b"), Tensor::zeros(&[d_out]), trainable));
        Self { weight, bias }
    }

    pub fn from_tensor(store: &mut ParamStore, name: &str, w: Tensor, trainable: bool) -> Self {
        Self {
            weight: store.add(format!("{name}/w"), w, trainable),
            bias: None,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(store, b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, trainable: bool) -> Self {
        Self {
            gain: store.add(format!("{name}/g"), Tensor::full(&[dim], 1.0), trainable),
            bias: store.add(format!("{name}/b"), Tensor::zeros(&[dim]), trainable),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let n = g.layer_norm_rows(x)?;
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        let y = g.mul_row(n, gain)?;
        g.add_row(y, bias)
    }
}

/// `softmax(q kᵀ / √d) v`.
pub fn attention(g: &mut Graph, q: Var, k: Var, v: Var, key_dim: usize) -> Result<Var> {
    let scores = g.matmul_nt(q, k)?;
    let scaled = g.scale(scores, 1.0 / (key_dim as f64).sqrt());
    let weights = g.softmax_rows(scaled)?;
    g.matmul(weights, v)
}

/// Single-head pre-norm transformer block:
/// `x + Attn(LN(x))`, then `x + FFN(LN(x))`.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    dim: usize,
}

impl TransformerBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        ffn_mult: usize,
        trainable: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let hidden = dim * ffn_mult;
        Self {
            ln1: LayerNorm::new(store, &format!("{name}/ln1"), dim, trainable),
            q: Linear::new(
                store,
                &format!("{name}/attn/q"),
                (dim, dim),
                true,
                trainable,
                rng,
            ),
            k: Linear::new(
                store,
                &format!("{name}/attn/k"),
                (dim, dim),
                true,
                trainable,
                rng,
            ),
            v: Linear::new(
                store,
                &format!("{name}/attn/v"),
                (dim, dim),
                true,
                trainable,
                rng,
            ),
            out: Linear::new(
                store,
                &format!("{name}/attn/o"),
                (dim, dim),
                true,
                trainable,
                rng,
            ),
            ln2: LayerNorm::new(store, &format!("{name}/ln2"), dim, trainable),
            ff1: Linear::new(
                store,
                &format!("{name}/ff1"),
                (dim, hidden),
                true,
                trainable,
                rng,
            ),
            ff2: Linear::new(
                store,
                &format!("{name}/ff2"),
                (hidden, dim),
                true,
                trainable,
                rng,
            ),
            dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.ln1.forward(g, store, x)?;
        let q = self.q.forward(g, store, h)?;
        let k = self.k.forward(g, store, h)?;
        let v = self.v.forward(g, store, h)?;
        let a = attention(g, q, k, v, self.dim)?;
        let a = self.out.forward(g, store, a)?;
        let x = g.add(x, a)?;
        let h = self.ln2.forward(g, store, x)?;
        let h = self.ff1.forward(g, store, h)?;
        let h = g.gelu(h);
        let h = self.ff2.forward(g, store, h)?;
        g.add(x, h)
    }
}

/// 3x3 same-padding convolution over `[c, h, w]`.
#[derive(Clone, Debug)]
pub struct Conv3x3 {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv3x3 {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: (usize, usize),
        trainable: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let (c_in, c_out) = channels;
        let fan_in = c_in * 9;
        Self {
            weight: store.add_normal(
                format!("{name}/w"),
                &[c_out, fan_in],
                (2.0 / fan_in as f64).sqrt(),
                trainable,
                rng,
            ),
            bias: store.add(format!("{name}/b"), Tensor::zeros(&[c_out]), trainable),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.conv3x3(x, w, b)
    }
}
