use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::decoder::prob_to_score_map;
use super::loss::{dice_loss_graph, mask_tensor};
use super::model::ExpertModel;
use crate::domain::{
    load_image, load_mask, validate_manifest, BinaryMask, DatasetManifest, ForgeryType, Label,
    RasterImage, ToyConfig,
};
use crate::encoders::{image_tensor, PatchOutput};
use crate::error::{Error, Result};
use crate::eval::pixel_auc;
use crate::nn::{Adam, Graph, Tensor};
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seed of the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 8,
            lr: 5e-4,
            seed: 0,
        }
    }
}

/// One labelled training image with its ground truth.
#[derive(Clone, Debug)]
pub struct TrainingItem {
    pub id: String,
    pub image: RasterImage,
    pub mask: BinaryMask,
    pub label: Label,
    pub forgery_type: ForgeryType,
}

/// Load every entry of a manifest. Manifest violations and an empty
/// manifest are configuration errors.
pub fn load_training_set(manifest: &DatasetManifest) -> Result<Vec<TrainingItem>> {
    if manifest.is_empty() {
        return Err(Error::Config("manifest has no entries".into()));
    }
    let violations = validate_manifest(manifest);
    if let Some(v) = violations.first() {
        return Err(Error::Config(format!(
            "manifest has {} violation(s), first: {v}",
            violations.len()
        )));
    }
    manifest
        .entries
        .iter()
        .map(|e| {
            Ok(TrainingItem {
                id: e.id.clone(),
                image: load_image(manifest.resolve(&e.image_path))?,
                mask: load_mask(manifest.resolve(&e.mask_path))?,
                label: e.label,
                forgery_type: e.forgery_type,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean pixel AUC of this epoch's training predictions over images
    /// whose mask has both classes.
    pub pixel_auc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean batch dice loss before each optimizer step.
    pub loss_curve: Vec<f64>,
    pub epochs: Vec<EpochLog>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_curve.last().copied()
    }
}

/// Model inputs prepared once per training run.
pub(crate) struct Prepared {
    pub images: Vec<Tensor>,
    pub masks: Vec<Tensor>,
    pub cached: Vec<PatchOutput>,
}

pub(crate) fn prepare(model: &ExpertModel, items: &[TrainingItem]) -> Result<Prepared> {
    let mut p = Prepared {
        images: Vec::with_capacity(items.len()),
        masks: Vec::with_capacity(items.len()),
        cached: Vec::with_capacity(items.len()),
    };
    for it in items {
        p.images.push(image_tensor(&it.image, &model.cfg)?);
        p.masks.push(mask_tensor(&it.mask));
        p.cached.push(model.patch_features(&it.image)?);
    }
    Ok(p)
}

pub(crate) fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, epoch as u64));
    order
}

pub(crate) fn check_options(opts: &TrainOptions, items: usize) -> Result<()> {
    if items == 0 {
        return Err(Error::Config("no training items".into()));
    }
    if opts.batch_size == 0 || opts.lr.is_nan() || opts.lr <= 0.0 {
        return Err(Error::Config("batch_size and lr must be positive".into()));
    }
    Ok(())
}

/// Optimize the expert's trainable parameters (object prompts, stage
/// projections, vocabulary tower, decoder) on `λ_loc · dice`. `on_epoch` is
/// called after every epoch.
pub fn train_expert(
    model: &mut ExpertModel,
    items: &[TrainingItem],
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    check_options(opts, items.len())?;
    let data = prepare(model, items)?;
    let mut adam = Adam::new(opts.lr);
    let mut report = TrainReport::default();
    for epoch in 0..opts.epochs {
        let mut losses = Vec::new();
        let mut aucs = Vec::new();
        for batch in epoch_order(opts.seed, epoch, items.len()).chunks(opts.batch_size) {
            let mut g = Graph::new();
            let f_text = model.text_graph(&mut g)?;
            let mut terms = Vec::with_capacity(batch.len());
            for &i in batch {
                let v = model.forward_graph(&mut g, f_text, &data.images[i], &data.cached[i])?;
                terms.push(dice_loss_graph(&mut g, v.prob, &data.masks[i])?);
                if let Ok(auc) = pixel_auc(&prob_to_score_map(g.value(v.prob))?, &items[i].mask) {
                    aucs.push(auc);
                }
            }
            let mean = g.mean_of(&terms)?;
            let loss = g.scale(mean, model.cfg.lambda_loc);
            g.backward(loss)?;
            adam.step(&mut model.store, &g.param_grads());
            let value = g.value(mean).data()[0];
            losses.push(value);
            report.loss_curve.push(value);
        }
        let log = EpochLog {
            epoch,
            mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            pixel_auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        };
        on_epoch(&log);
        report.epochs.push(log);
    }
    Ok(report)
}

/// Build a fresh expert from `cfg`, train it on `manifest` and optionally
/// write a checkpoint.
pub fn train_flexpert(
    manifest: &DatasetManifest,
    cfg: &ToyConfig,
    opts: &TrainOptions,
    checkpoint: Option<&Path>,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(ExpertModel, TrainReport)> {
    let items = load_training_set(manifest)?;
    let mut model = ExpertModel::new(cfg)?;
    let report = train_expert(&mut model, &items, opts, on_epoch)?;
    if let Some(path) = checkpoint {
        model.save(path)?;
    }
    Ok((model, report))
}
