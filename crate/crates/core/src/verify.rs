//! Whole-model gradient checks on a small synthetic sample.

use crate::bridge::{BridgeModel, MaskSource};
use crate::datagen::{synthesize, MaskGranularity, ShapeRegime, SourcePool};
use crate::domain::{ForgeryType, ToyConfig};
use crate::error::Result;
use crate::expert::{dice_loss_graph, mask_tensor, ExpertModel, TrainingItem};
use crate::nn::{grad_check, GradCheckOptions, GradCheckReport, ParamStore};

/// One forged item from `seed`, sized for `cfg`.
pub fn probe_item(cfg: &ToyConfig, seed: u64) -> Result<TrainingItem> {
    let g = MaskGranularity::new(0.10, 0.25, ShapeRegime::Blob)?;
    let s = synthesize(
        seed,
        ForgeryType::Splicing,
        Some(&g),
        &[],
        &SourcePool::Procedural,
        cfg.image_size,
    )?;
    Ok(TrainingItem {
        id: "probe".into(),
        image: s.image,
        mask: s.final_mask,
        label: s.label,
        forgery_type: s.forgery_type,
    })
}

/// Check every trainable expert parameter against the dice loss of one
/// image (text prompts, projections, fusion, vocabulary tower, decoder).
pub fn expert_grad_check(
    model: &mut ExpertModel,
    item: &TrainingItem,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let cached = model.patch_features(&item.image)?;
    let image = crate::encoders::image_tensor(&item.image, &model.cfg)?;
    let target = mask_tensor(&item.mask);
    // Architecture handle without parameters; each probe supplies its own store.
    let frozen = ExpertModel {
        store: ParamStore::new(),
        ..model.clone()
    };
    grad_check(
        &mut model.store,
        |g, store| {
            let m = ExpertModel {
                store: store.clone(),
                ..frozen.clone()
            };
            let t = m.text_graph(g)?;
            let v = m.forward_graph(g, t, &image, &cached)?;
            let l = dice_loss_graph(g, v.prob, &target)?;
            Ok(g.scale(l, m.cfg.lambda_loc))
        },
        opts,
    )
}

/// Check every trainable parameter of the joint model against the
/// weighted classification and localization loss of one image.
pub fn bridge_grad_check(
    model: &mut BridgeModel,
    item: &TrainingItem,
    source: MaskSource,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let sample = model.prepare_item(item)?;
    let mut frozen = model.clone();
    frozen.expert.store = ParamStore::new();
    grad_check(
        &mut model.expert.store,
        |g, store| {
            let mut m = frozen.clone();
            m.expert.store = store.clone();
            let t = m.expert.text_graph(g)?;
            Ok(m.loss_graph(g, t, &sample, source)?.loss)
        },
        opts,
    )
}
