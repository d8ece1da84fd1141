use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::head::{Classification, DecisionHead};
use super::mask_enc::{score_tensor, MaskEncoder};
use super::tokens::{assemble_graph, Role};
use crate::domain::{ForgeryType, Label, RasterImage, ScoreMap, ToyConfig};
use crate::encoders::{image_tensor, ImageProjector, PatchOutput};
use crate::error::{Error, Result};
use crate::expert::{
    config_from_meta, dice_loss_graph, mask_tensor, prob_to_score_map, streams, ExpertModel,
    TrainingItem, EXPERT_PREFIXES,
};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::seed::rng_for;

const PROMPT_STD: f64 = 1.0;

/// Namespaces added on top of the expert.
pub const BRIDGE_PREFIXES: [&str; 4] = ["img_proj/", "mask_enc/", "prompt_tokens/", "head/"];

/// Which mask feeds the mask encoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    /// The expert's own prediction (gradients flow back into the expert).
    #[default]
    Predicted,
    GroundTruth,
}

/// Expert plus image projector, mask encoder, prompt tokens and decision
/// head, all in the expert's parameter store.
#[derive(Clone, Debug)]
pub struct BridgeModel {
    pub expert: ExpertModel,
    pub img_proj: ImageProjector,
    pub mask_enc: MaskEncoder,
    pub prompt_tokens: ParamId,
    pub head: DecisionHead,
}

/// Per-image tensors that stay fixed while training.
#[derive(Clone, Debug)]
pub struct BridgeSample {
    pub image: Tensor,
    pub cached: PatchOutput,
    pub image_tokens: Tensor,
    pub mask: Tensor,
    pub label: Label,
}

#[derive(Clone, Debug)]
pub struct BridgeVars {
    pub prob: Var,
    pub logits: Var,
    pub roles: Vec<Role>,
}

/// Loss nodes of one sample. `loss` omits any term whose weight is zero;
/// `ce` and `dice` are always present for logging.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub loss: Var,
    pub ce: Var,
    pub dice: Var,
    pub logits: Var,
    pub prob: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub classification: Classification,
    pub score_map: ScoreMap,
}

impl BridgeModel {
    pub fn new(cfg: &ToyConfig) -> Result<Self> {
        Ok(Self::from_expert(ExpertModel::new(cfg)?))
    }

    /// Attach freshly initialized bridge components to a (trained) expert.
    pub fn from_expert(mut expert: ExpertModel) -> Self {
        let cfg = expert.cfg.clone();
        let s = cfg.rng_seed;
        let store = &mut expert.store;
        let img_proj = ImageProjector::new(store, &cfg, &mut rng_for(s, streams::IMG_PROJ));
        let mask_enc = MaskEncoder::new(store, &cfg, &mut rng_for(s, streams::MASK_ENC));
        let prompt_tokens = store.add_normal(
            "prompt_tokens/embed",
            &[cfg.prompt_tokens, cfg.token_dim],
            PROMPT_STD,
            true,
            &mut rng_for(s, streams::PROMPT_TOKENS),
        );
        let head = DecisionHead::new(store, &cfg, &mut rng_for(s, streams::HEAD));
        Self {
            expert,
            img_proj,
            mask_enc,
            prompt_tokens,
            head,
        }
    }

    /// Build from `cfg` and copy every expert parameter from a localization
    /// checkpoint. A missing checkpoint is a configuration error.
    pub fn from_expert_checkpoint(cfg: &ToyConfig, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::Config(format!(
                "expert checkpoint {} does not exist",
                path.display()
            )));
        }
        let (stored, _) = load_checkpoint(path)?;
        let mut model = Self::new(cfg)?;
        model
            .expert
            .store
            .load_required(&stored, &EXPERT_PREFIXES)?;
        Ok(model)
    }

    pub fn cfg(&self) -> &ToyConfig {
        &self.expert.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.expert.store
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(
            path,
            self.store(),
            &json!({"kind": "bridge", "config": self.cfg()}),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (stored, meta) = load_checkpoint(path)?;
        let cfg = config_from_meta(&meta)?;
        let mut model = Self::new(&cfg)?;
        let all: Vec<&str> = EXPERT_PREFIXES
            .iter()
            .chain(&BRIDGE_PREFIXES)
            .copied()
            .collect();
        model.expert.store.load_required(&stored, &all)?;
        Ok(model)
    }

    pub fn prepare(&self, img: &RasterImage, mask: Tensor, label: Label) -> Result<BridgeSample> {
        let cached = self.expert.patch_features(img)?;
        let image_tokens = self.img_proj.project(self.store(), &cached.last)?;
        Ok(BridgeSample {
            image: image_tensor(img, self.cfg())?,
            cached,
            image_tokens,
            mask,
            label,
        })
    }

    pub fn prepare_item(&self, item: &TrainingItem) -> Result<BridgeSample> {
        self.prepare(&item.image, mask_tensor(&item.mask), item.label)
    }

    /// Head logits from a sequence whose mask tokens come from `mask_prob`
    /// (`[1, H, W]`).
    fn head_graph(
        &self,
        g: &mut Graph,
        image_tokens: &Tensor,
        mask_prob: Var,
    ) -> Result<(Var, Vec<Role>)> {
        let store = self.store();
        let image = g.input(image_tokens.clone());
        let prompt = g.param(store, self.prompt_tokens);
        let mask = self.mask_enc.forward(g, store, mask_prob)?;
        let text = self.head.text_tokens(g, store)?;
        let (seq, roles) = assemble_graph(g, [image, prompt, mask, text])?;
        Ok((self.head.forward(g, store, seq)?, roles))
    }

    pub fn forward_graph(
        &self,
        g: &mut Graph,
        f_text: Var,
        sample: &BridgeSample,
        source: MaskSource,
    ) -> Result<BridgeVars> {
        let vars = self
            .expert
            .forward_graph(g, f_text, &sample.image, &sample.cached)?;
        let mask_in = match source {
            MaskSource::Predicted => vars.prob,
            MaskSource::GroundTruth => g.input(sample.mask.clone()),
        };
        let (logits, roles) = self.head_graph(g, &sample.image_tokens, mask_in)?;
        Ok(BridgeVars {
            prob: vars.prob,
            logits,
            roles,
        })
    }

    /// `λ_cls · CE(logits, label) + λ_loc · dice(prediction, mask)`.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        f_text: Var,
        sample: &BridgeSample,
        source: MaskSource,
    ) -> Result<LossVars> {
        let v = self.forward_graph(g, f_text, sample, source)?;
        let ce = g.cross_entropy(v.logits, sample.label.index())?;
        let dice = dice_loss_graph(g, v.prob, &sample.mask)?;
        let cfg = self.cfg();
        let mut terms = Vec::with_capacity(2);
        if cfg.lambda_cls != 0.0 {
            terms.push(g.scale(ce, cfg.lambda_cls));
        }
        if cfg.lambda_loc != 0.0 {
            terms.push(g.scale(dice, cfg.lambda_loc));
        }
        let loss = match terms.as_slice() {
            [] => g.scale(ce, 0.0),
            [t] => *t,
            [a, b] => g.add(*a, *b)?,
            _ => unreachable!(),
        };
        Ok(LossVars {
            loss,
            ce,
            dice,
            logits: v.logits,
            prob: v.prob,
        })
    }

    /// Localize, encode the predicted mask and classify.
    pub fn detect(&self, img: &RasterImage) -> Result<Detection> {
        let score_map = self.expert.localize(img)?;
        let classification = self.classify_with_mask(img, &score_map)?;
        Ok(Detection {
            classification,
            score_map,
        })
    }

    /// Classify `img` with an externally supplied mask (e.g. ground truth).
    pub fn classify_with_mask(&self, img: &RasterImage, mask: &ScoreMap) -> Result<Classification> {
        let cached = self.expert.patch_features(img)?;
        let tokens = self.img_proj.project(self.store(), &cached.last)?;
        let mut g = Graph::new();
        let m = g.input(score_tensor(mask));
        let (logits, _) = self.head_graph(&mut g, &tokens, m)?;
        Ok(Classification::from_tensor(g.value(logits)))
    }

    /// Verdict plus rendered explanation. `forgery_type` is supplied by the
    /// caller since the head only decides authentic versus forged; it is
    /// required when the verdict is forged.
    pub fn explain(
        &self,
        img: &RasterImage,
        forgery_type: Option<ForgeryType>,
    ) -> Result<(Detection, String)> {
        let det = self.detect(img)?;
        let verdict = det.classification.verdict;
        let kind = match (verdict, forgery_type) {
            (super::Verdict::Authentic, t) => t.unwrap_or(ForgeryType::None),
            (super::Verdict::Forged, Some(t)) => t,
            (super::Verdict::Forged, None) => {
                return Err(Error::Config(
                    "forged verdict needs a forgery type for the explanation".into(),
                ))
            }
        };
        let text = super::render_explanation(verdict, kind, &det.score_map)?;
        Ok((det, text))
    }
}

pub(crate) fn prob_map(g: &Graph, prob: Var) -> Result<ScoreMap> {
    prob_to_score_map(g.value(prob))
}
