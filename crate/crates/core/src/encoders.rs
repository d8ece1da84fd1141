//! Toy vision and text towers, the learnable prompt bank, per-stage
//! projections and the image projector.
//!
//! Parameter namespaces: `patch_enc/*` (frozen), `vocab_enc/*`,
//! `text_tower/*` (frozen), `prompt_bank/*`, `proj/stage{i}/*`,
//! `img_proj/*` (frozen).

use rand::Rng;

use crate::domain::{RasterImage, ToyConfig};
use crate::error::{shape_err, Error, Result};
use crate::nn::layers::{LayerNorm, Linear, TransformerBlock};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};

const PIXEL_MEAN: f64 = 0.5;
const PIXEL_SCALE: f64 = 0.25;
const POS_STD: f64 = 0.5;
const TOKEN_STD: f64 = 1.0;
const OBJECT_STD: f64 = 0.5;

/// `[3, h, w]` tensor with channels standardized around mid-grey.
pub fn image_tensor(img: &RasterImage, cfg: &ToyConfig) -> Result<Tensor> {
    if !img.same_dims(cfg.image_size, cfg.image_size) {
        return Err(shape_err!(
            "image is {}x{}, model expects {}x{}",
            img.width(),
            img.height(),
            cfg.image_size,
            cfg.image_size
        ));
    }
    let (w, h) = (img.width(), img.height());
    let mut data = vec![0.0; 3 * w * h];
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = (px[c] as f64 / 255.0 - PIXEL_MEAN) / PIXEL_SCALE;
        }
    }
    Tensor::new(&[3, h, w], data)
}

/// Graph-level tower output: tapped block outputs and the final normalized
/// state.
#[derive(Clone, Debug)]
pub struct TowerVars {
    pub taps: Vec<Var>,
    pub last: Var,
}

/// Patch embedding, learned position embedding, pre-norm transformer blocks
/// and a final layer norm.
#[derive(Clone, Debug)]
pub struct VisionTower {
    patch_embed: Linear,
    pos: ParamId,
    blocks: Vec<TransformerBlock>,
    final_ln: LayerNorm,
    tap_blocks: Vec<usize>,
    patch_size: usize,
}

impl VisionTower {
    fn new(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &ToyConfig,
        trainable: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let d = cfg.embed_dim;
        let patch_dim = 3 * cfg.patch_size * cfg.patch_size;
        let patch_embed = Linear::new(
            store,
            &format!("{prefix}/patch_embed"),
            (patch_dim, d),
            true,
            trainable,
            rng,
        );
        let pos = store.add_normal(
            format!("{prefix}/pos"),
            &[cfg.num_patches(), d],
            POS_STD,
            trainable,
            rng,
        );
        let blocks = (0..cfg.encoder_depth)
            .map(|i| {
                TransformerBlock::new(
                    store,
                    &format!("{prefix}/block{i}"),
                    d,
                    cfg.ffn_mult,
                    trainable,
                    rng,
                )
            })
            .collect();
        let final_ln = LayerNorm::new(store, &format!("{prefix}/ln_f"), d, trainable);
        Self {
            patch_embed,
            pos,
            blocks,
            final_ln,
            tap_blocks: cfg.tap_blocks.clone(),
            patch_size: cfg.patch_size,
        }
    }

    /// Run on a `[3, h, w]` image node. `position` toggles the position
    /// embedding (off only for diagnostics).
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        image: Var,
        position: bool,
    ) -> Result<TowerVars> {
        let patches = g.patchify(image, self.patch_size)?;
        let mut x = self.patch_embed.forward(g, store, patches)?;
        if position {
            let pos = g.param(store, self.pos);
            x = g.add(x, pos)?;
        }
        let mut taps = Vec::with_capacity(self.tap_blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(g, store, x)?;
            if self.tap_blocks.contains(&(i + 1)) {
                taps.push(x);
            }
        }
        let last = self.final_ln.forward(g, store, x)?;
        Ok(TowerVars { taps, last })
    }

    fn run(
        &self,
        store: &ParamStore,
        image: &Tensor,
        position: bool,
    ) -> Result<(Vec<Tensor>, Tensor)> {
        let mut g = Graph::new();
        let x = g.input(image.clone());
        let out = self.forward(&mut g, store, x, position)?;
        let taps = out.taps.iter().map(|&v| g.value(v).clone()).collect();
        Ok((taps, g.value(out.last).clone()))
    }
}

/// Per-stage feature matrices of one tower, each `P×d`.
#[derive(Clone, Debug, PartialEq)]
pub struct StageFeatures {
    pub stages: Vec<Tensor>,
}

/// Frozen tower (`patch_enc/*`).
#[derive(Clone, Debug)]
pub struct PatchEncoder {
    pub tower: VisionTower,
}

impl PatchEncoder {
    pub const PREFIX: &'static str = "patch_enc";

    pub fn new(store: &mut ParamStore, cfg: &ToyConfig, rng: &mut impl Rng) -> Self {
        Self {
            tower: VisionTower::new(store, Self::PREFIX, cfg, false, rng),
        }
    }
}

/// Trainable twin of the patch tower (`vocab_enc/*`).
#[derive(Clone, Debug)]
pub struct VocabularyEncoder {
    pub tower: VisionTower,
}

impl VocabularyEncoder {
    pub const PREFIX: &'static str = "vocab_enc";

    pub fn new(store: &mut ParamStore, cfg: &ToyConfig, rng: &mut impl Rng) -> Self {
        Self {
            tower: VisionTower::new(store, Self::PREFIX, cfg, true, rng),
        }
    }
}

/// Frozen tower features of one image: stage taps plus the final state
/// (the image projector's input).
#[derive(Clone, Debug, PartialEq)]
pub struct PatchOutput {
    pub stages: StageFeatures,
    pub last: Tensor,
}

pub fn encode_patch_output(
    image: &RasterImage,
    enc: &PatchEncoder,
    store: &ParamStore,
    cfg: &ToyConfig,
    position: bool,
) -> Result<PatchOutput> {
    let (stages, last) = enc.tower.run(store, &image_tensor(image, cfg)?, position)?;
    Ok(PatchOutput {
        stages: StageFeatures { stages },
        last,
    })
}

pub fn encode_stages(
    image: &RasterImage,
    enc: &PatchEncoder,
    store: &ParamStore,
    cfg: &ToyConfig,
) -> Result<StageFeatures> {
    Ok(encode_patch_output(image, enc, store, cfg, true)?.stages)
}

/// Vocabulary-side stage features plus the final-layer output `f_vocab`.
#[derive(Clone, Debug, PartialEq)]
pub struct VocabFeatures {
    pub stages: StageFeatures,
    pub f_vocab: Tensor,
}

pub fn encode_vocab_stages(
    image: &RasterImage,
    enc: &VocabularyEncoder,
    store: &ParamStore,
    cfg: &ToyConfig,
) -> Result<VocabFeatures> {
    let (stages, f_vocab) = enc.tower.run(store, &image_tensor(image, cfg)?, true)?;
    Ok(VocabFeatures {
        stages: StageFeatures { stages },
        f_vocab,
    })
}

/// Word list of the text tower's embedding table.
pub const TEXT_VOCAB: [&str; 6] = ["a", "photo", "of", "pristine", "forged", "object"];

fn word_id(w: &str) -> usize {
    TEXT_VOCAB
        .iter()
        .position(|v| *v == w)
        .expect("word in vocabulary")
}

/// Last `len` words of a class template, left-padded with "a" when `len`
/// exceeds the template.
pub fn template_words(forged: bool, len: usize) -> Vec<&'static str> {
    let full = [
        "a",
        "photo",
        "of",
        "a",
        if forged { "forged" } else { "pristine" },
    ];
    let mut out = vec!["a"; len.saturating_sub(full.len())];
    out.extend_from_slice(&full[full.len().saturating_sub(len)..]);
    out
}

/// Frozen text tower (`text_tower/*`): token table, position embedding, one
/// transformer block, last-token pooling, projection to `d_e`, L2 norm.
#[derive(Clone, Debug)]
pub struct TextTower {
    pub table: ParamId,
    pos: ParamId,
    block: TransformerBlock,
    final_ln: LayerNorm,
    proj: Linear,
    max_len: usize,
}

impl TextTower {
    pub const PREFIX: &'static str = "text_tower";

    pub fn new(store: &mut ParamStore, cfg: &ToyConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.embed_dim;
        let max_len = cfg.template_len + cfg.object_embed_len.max(1);
        Self {
            table: store.add_normal(
                "text_tower/tok",
                &[TEXT_VOCAB.len(), d],
                TOKEN_STD,
                false,
                rng,
            ),
            pos: store.add_normal("text_tower/pos", &[max_len, d], POS_STD, false, rng),
            block: TransformerBlock::new(store, "text_tower/block0", d, cfg.ffn_mult, false, rng),
            final_ln: LayerNorm::new(store, "text_tower/ln_f", d, false),
            proj: Linear::new(
                store,
                "text_tower/proj",
                (d, cfg.key_dim),
                false,
                false,
                rng,
            ),
            max_len,
        }
    }

    /// Encode one `[len, d]` embedding sequence to a unit `[1, d_e]` row.
    pub fn encode_sequence(&self, g: &mut Graph, store: &ParamStore, seq: Var) -> Result<Var> {
        let len = g.value(seq).rows();
        if len == 0 || len > self.max_len {
            return Err(shape_err!(
                "text sequence length {len} outside 1..={}",
                self.max_len
            ));
        }
        let pos = g.param(store, self.pos);
        let pos = g.slice_rows(pos, 0, len)?;
        let x = g.add(seq, pos)?;
        let x = self.block.forward(g, store, x)?;
        let x = self.final_ln.forward(g, store, x)?;
        let last = g.slice_rows(x, len - 1, 1)?;
        let y = self.proj.forward(g, store, last)?;
        g.l2_normalize_rows(y)
    }

    pub fn embed_words(&self, g: &mut Graph, store: &ParamStore, words: &[&str]) -> Result<Var> {
        let table = g.param(store, self.table);
        let ids: Vec<usize> = words.iter().map(|w| word_id(w)).collect();
        g.gather_rows(table, &ids)
    }
}

/// Template embeddings plus the learnable object embeddings
/// (`prompt_bank/object_p`, `prompt_bank/object_n`, each `[m, d]`).
#[derive(Clone, Debug)]
pub struct PromptBank {
    pub object_p: Option<ParamId>,
    pub object_n: Option<ParamId>,
    template_len: usize,
}

impl PromptBank {
    pub const PREFIX: &'static str = "prompt_bank";

    /// With `cfg.object_prompt == false` no learnable embeddings are created
    /// and both classes use the frozen token "object".
    pub fn new(store: &mut ParamStore, cfg: &ToyConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.object_embed_len == 0 {
            return Err(Error::Config(
                "object_embed_len m must be at least 1".into(),
            ));
        }
        let shape = [cfg.object_embed_len, cfg.embed_dim];
        let (object_p, object_n) = if cfg.object_prompt {
            (
                Some(store.add_normal("prompt_bank/object_p", &shape, OBJECT_STD, true, rng)),
                Some(store.add_normal("prompt_bank/object_n", &shape, OBJECT_STD, true, rng)),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            object_p,
            object_n,
            template_len: cfg.template_len,
        })
    }

    /// Embedding sequence `[M_1..M_E][object-p]` or `[N_1..N_E][object-n]`.
    pub fn sequence(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        tower: &TextTower,
        forged: bool,
    ) -> Result<Var> {
        let template = tower.embed_words(g, store, &template_words(forged, self.template_len))?;
        let object = match (forged, self.object_p, self.object_n) {
            (false, Some(p), _) => g.param(store, p),
            (true, _, Some(n)) => g.param(store, n),
            _ => tower.embed_words(g, store, &["object"])?,
        };
        g.concat_rows(&[template, object])
    }
}

/// `F_text` as a graph node: row 0 authentic, row 1 forged, unit rows.
pub fn text_features(
    g: &mut Graph,
    store: &ParamStore,
    bank: &PromptBank,
    tower: &TextTower,
) -> Result<Var> {
    let mut rows = Vec::with_capacity(2);
    for forged in [false, true] {
        let seq = bank.sequence(g, store, tower, forged)?;
        rows.push(tower.encode_sequence(g, store, seq)?);
    }
    g.concat_rows(&rows)
}

pub fn encode_text_prompts(
    bank: &PromptBank,
    tower: &TextTower,
    store: &ParamStore,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let t = text_features(&mut g, store, bank, tower)?;
    Ok(g.value(t).clone())
}

/// Which tower a stage projection belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Patch,
    Vocab,
}

impl Side {
    fn as_str(self) -> &'static str {
        match self {
            Side::Patch => "patch",
            Side::Vocab => "vocab",
        }
    }
}

/// Unshared per-stage linear maps `d -> d_e` (`proj/stage{i}/{patch,vocab}`).
#[derive(Clone, Debug)]
pub struct StageProjections {
    patch: Vec<Linear>,
    vocab: Vec<Linear>,
}

impl StageProjections {
    pub const PREFIX: &'static str = "proj";

    pub fn new(store: &mut ParamStore, cfg: &ToyConfig, rng: &mut impl Rng) -> Self {
        let mut make = |side: Side| {
            (1..=cfg.num_stages())
                .map(|i| {
                    Linear::new(
                        store,
                        &format!("proj/stage{i}/{}", side.as_str()),
                        (cfg.embed_dim, cfg.key_dim),
                        false,
                        true,
                        rng,
                    )
                })
                .collect::<Vec<_>>()
        };
        let patch = make(Side::Patch);
        let vocab = make(Side::Vocab);
        Self { patch, vocab }
    }

    pub fn num_stages(&self) -> usize {
        self.patch.len()
    }

    /// Projection layer of 1-based `stage` on `side`.
    pub fn layer(&self, stage: usize, side: Side) -> Result<&Linear> {
        let list = match side {
            Side::Patch => &self.patch,
            Side::Vocab => &self.vocab,
        };
        stage
            .checked_sub(1)
            .and_then(|i| list.get(i))
            .ok_or_else(|| Error::Config(format!("unknown stage {stage} (have {})", list.len())))
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        raw: Var,
        stage: usize,
        side: Side,
    ) -> Result<Var> {
        self.layer(stage, side)?.forward(g, store, raw)
    }
}

pub fn project_stage(
    raw: &Tensor,
    stage: usize,
    side: Side,
    proj: &StageProjections,
    store: &ParamStore,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.input(raw.clone());
    let y = proj.forward(&mut g, store, x, stage, side)?;
    Ok(g.value(y).clone())
}

/// Frozen two-layer MLP from tower width to decision-head token width,
/// applied per patch (`img_proj/*`).
#[derive(Clone, Debug)]
pub struct ImageProjector {
    fc1: Linear,
    fc2: Linear,
}

impl ImageProjector {
    pub const PREFIX: &'static str = "img_proj";

    pub fn new(store: &mut ParamStore, cfg: &ToyConfig, rng: &mut impl Rng) -> Self {
        Self {
            fc1: Linear::new(
                store,
                "img_proj/fc1",
                (cfg.embed_dim, cfg.token_dim),
                true,
                false,
                rng,
            ),
            fc2: Linear::new(
                store,
                "img_proj/fc2",
                (cfg.token_dim, cfg.token_dim),
                true,
                false,
                rng,
            ),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, store, x)?;
        let h = g.gelu(h);
        self.fc2.forward(g, store, h)
    }

    pub fn project(&self, store: &ParamStore, features: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.input(features.clone());
        let y = self.forward(&mut g, store, x)?;
        Ok(g.value(y).clone())
    }
}
