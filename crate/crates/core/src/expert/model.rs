use std::path::Path;

use serde_json::json;

use super::decoder::{prob_to_score_map, DecoderNet};
use super::fusion::{attention_fusion_graph, cross_modal_graph};
use crate::domain::{RasterImage, ScoreMap, ToyConfig};
use crate::encoders::{
    encode_patch_output, image_tensor, text_features, PatchEncoder, PatchOutput, PromptBank, Side,
    StageProjections, TextTower, VocabularyEncoder,
};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint};
use crate::nn::{Graph, ParamStore, Tensor, Var};
use crate::seed::rng_for;

/// RNG streams used to initialize each component from `rng_seed`.
pub(crate) mod streams {
    pub const PATCH_ENC: u64 = 1;
    pub const VOCAB_ENC: u64 = 2;
    pub const TEXT: u64 = 3;
    pub const PROMPTS: u64 = 4;
    pub const PROJ: u64 = 5;
    pub const DECODER: u64 = 6;
    pub const IMG_PROJ: u64 = 7;
    pub const MASK_ENC: u64 = 8;
    pub const PROMPT_TOKENS: u64 = 9;
    pub const HEAD: u64 = 10;
}

/// Namespaces whose parameters the localization stage trains.
pub const EXPERT_TRAINABLE: [&str; 4] = ["prompt_bank/", "proj/", "vocab_enc/", "decoder/"];
/// Every namespace that belongs to the localization expert.
pub const EXPERT_PREFIXES: [&str; 6] = [
    "patch_enc/",
    "vocab_enc/",
    "text_tower/",
    "prompt_bank/",
    "proj/",
    "decoder/",
];

/// The forgery-localization expert: both vision towers, the text tower and
/// prompts, stage projections and the decoder, all sharing one store.
#[derive(Clone, Debug)]
pub struct ExpertModel {
    pub cfg: ToyConfig,
    pub store: ParamStore,
    pub patch_enc: PatchEncoder,
    /// `None` when the configuration drops the vocabulary tower.
    pub vocab_enc: Option<VocabularyEncoder>,
    pub text: TextTower,
    pub prompts: PromptBank,
    pub proj: StageProjections,
    pub decoder: DecoderNet,
}

/// Graph nodes of one image's forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ExpertVars {
    pub f_cross: Var,
    pub f_enhanced: Var,
    pub f_vocab: Var,
    /// `[1, H, W]` probabilities.
    pub prob: Var,
}

impl ExpertModel {
    pub fn new(cfg: &ToyConfig) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let s = cfg.rng_seed;
        let patch_enc = PatchEncoder::new(&mut store, cfg, &mut rng_for(s, streams::PATCH_ENC));
        let vocab_enc = cfg
            .vocab_encoder
            .then(|| VocabularyEncoder::new(&mut store, cfg, &mut rng_for(s, streams::VOCAB_ENC)));
        let text = TextTower::new(&mut store, cfg, &mut rng_for(s, streams::TEXT));
        let prompts = PromptBank::new(&mut store, cfg, &mut rng_for(s, streams::PROMPTS))?;
        let proj = StageProjections::new(&mut store, cfg, &mut rng_for(s, streams::PROJ));
        let decoder = DecoderNet::new(&mut store, cfg, &mut rng_for(s, streams::DECODER));
        Ok(Self {
            cfg: cfg.clone(),
            store,
            patch_enc,
            vocab_enc,
            text,
            prompts,
            proj,
            decoder,
        })
    }

    /// Frozen-tower features, cacheable across training steps.
    pub fn patch_features(&self, img: &RasterImage) -> Result<PatchOutput> {
        encode_patch_output(img, &self.patch_enc, &self.store, &self.cfg, true)
    }

    pub fn text_graph(&self, g: &mut Graph) -> Result<Var> {
        text_features(g, &self.store, &self.prompts, &self.text)
    }

    /// One image through projections, fusion and decoder. `cached` must be
    /// the frozen tower's output for `image`.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        f_text: Var,
        image: &Tensor,
        cached: &PatchOutput,
    ) -> Result<ExpertVars> {
        let patch_taps: Vec<Var> = cached
            .stages
            .stages
            .iter()
            .map(|t| g.input(t.clone()))
            .collect();
        let (vocab_taps, f_vocab) = match &self.vocab_enc {
            Some(enc) => {
                let x = g.input(image.clone());
                let out = enc.tower.forward(g, &self.store, x, true)?;
                (out.taps, out.last)
            }
            None => (patch_taps.clone(), g.input(cached.last.clone())),
        };
        let mut patch_proj = Vec::with_capacity(patch_taps.len());
        let mut vocab_proj = Vec::with_capacity(patch_taps.len());
        for (i, (&p, &v)) in patch_taps.iter().zip(&vocab_taps).enumerate() {
            patch_proj.push(self.proj.forward(g, &self.store, p, i + 1, Side::Patch)?);
            vocab_proj.push(self.proj.forward(g, &self.store, v, i + 1, Side::Vocab)?);
        }
        let f_cross = cross_modal_graph(g, &patch_proj, f_text)?;
        let (f_enhanced, _) =
            attention_fusion_graph(g, &patch_proj, &vocab_proj, self.cfg.key_dim)?;
        let prob = self
            .decoder
            .forward(g, &self.store, f_cross, f_enhanced, f_vocab)?;
        Ok(ExpertVars {
            f_cross,
            f_enhanced,
            f_vocab,
            prob,
        })
    }

    /// Forgery probability map of one image.
    pub fn localize(&self, img: &RasterImage) -> Result<ScoreMap> {
        let cached = self.patch_features(img)?;
        self.localize_cached(img, &cached)
    }

    pub fn localize_cached(&self, img: &RasterImage, cached: &PatchOutput) -> Result<ScoreMap> {
        let mut g = Graph::new();
        let t = self.text_graph(&mut g)?;
        let vars = self.forward_graph(&mut g, t, &image_tensor(img, &self.cfg)?, cached)?;
        prob_to_score_map(g.value(vars.prob))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(
            path,
            &self.store,
            &json!({"kind": "flexpert", "config": self.cfg}),
        )
    }

    /// Rebuild from a checkpoint written by [`ExpertModel::save`] (or by the
    /// bridge, whose checkpoints contain the expert too).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (stored, meta) = load_checkpoint(path)?;
        let cfg = config_from_meta(&meta)?;
        let mut model = Self::new(&cfg)?;
        model.store.load_required(&stored, &EXPERT_PREFIXES)?;
        Ok(model)
    }
}

pub(crate) fn config_from_meta(meta: &serde_json::Value) -> Result<ToyConfig> {
    let cfg = meta
        .get("config")
        .ok_or_else(|| Error::Format("checkpoint metadata has no config".into()))?;
    serde_json::from_value(cfg.clone())
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))
}

/// Tensor-level composite: image to score map.
pub fn flexpert_forward(img: &RasterImage, model: &ExpertModel) -> Result<ScoreMap> {
    model.localize(img)
}

/// Model configuration stored in any expert or bridge checkpoint.
pub fn checkpoint_config(path: impl AsRef<Path>) -> Result<ToyConfig> {
    let (_, meta) = load_checkpoint(path)?;
    config_from_meta(&meta)
}
