use rayon::prelude::*;
use serde::Serialize;

use super::metrics::evaluate_localization;
use super::tables::{fmt_metric, render_table};
use crate::datagen::{apply_distortion, resize_bilinear, DistortionSpec};
use crate::domain::{BinaryMask, ScoreMap, ToyConfig};
use crate::error::{Error, Result};
use crate::expert::{train_expert, ExpertModel, TrainOptions, TrainingItem};
use crate::seed::derive_seed;

use super::LocalizationResult;

/// Score every item with the expert.
pub fn evaluate_expert(model: &ExpertModel, items: &[TrainingItem]) -> Result<LocalizationResult> {
    let maps = items
        .par_iter()
        .map(|it| model.localize(&it.image))
        .collect::<Result<Vec<ScoreMap>>>()?;
    evaluate_localization(
        items
            .iter()
            .zip(&maps)
            .map(|(it, m)| (it.id.as_str(), m, &it.mask)),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub rung: String,
    pub mean_auc: Option<f64>,
    pub mean_f1: Option<f64>,
    pub images: usize,
}

/// Score one (possibly distorted) copy of each item. Images whose size
/// changed are resized back to the model's input size; the prediction is
/// then resized to the distorted size and compared with a nearest-neighbour
/// resize of the ground truth.
fn distorted_result(
    model: &ExpertModel,
    items: &[TrainingItem],
    spec: Option<&DistortionSpec>,
    seed: u64,
) -> Result<LocalizationResult> {
    let size = model.cfg.image_size;
    let scored = items
        .par_iter()
        .enumerate()
        .map(|(i, it)| -> Result<(ScoreMap, BinaryMask)> {
            let img = match spec {
                Some(s) => apply_distortion(&it.image, s, derive_seed(seed, i as u64))?,
                None => it.image.clone(),
            };
            let (w, h) = (img.width(), img.height());
            let input = if (w, h) == (size, size) {
                img
            } else {
                resize_bilinear(&img, size, size)?
            };
            let mut map = model.localize(&input)?;
            let mut gt = it.mask.clone();
            if (w, h) != (size, size) {
                map = map.resize_bilinear(w, h);
                gt = gt.resize_nearest(w, h);
            }
            Ok((map, gt))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_localization(
        items
            .iter()
            .zip(&scored)
            .map(|(it, (m, g))| (it.id.as_str(), m, g)),
    )
}

/// Baseline row plus one row per rung; each row is the mean pixel AUC and
/// F1 over images whose ground truth has both classes.
pub fn robustness_sweep(
    model: &ExpertModel,
    items: &[TrainingItem],
    ladder: &[DistortionSpec],
    seed: u64,
) -> Result<Vec<RobustnessRow>> {
    for s in ladder {
        s.validate()?;
    }
    let row = |rung: String, r: LocalizationResult| RobustnessRow {
        rung,
        mean_auc: r.mean_auc,
        mean_f1: r.mean_f1,
        images: r.per_image.len() - r.skipped.len(),
    };
    let mut rows = vec![row(
        "Original".into(),
        distorted_result(model, items, None, seed)?,
    )];
    for s in ladder {
        rows.push(row(
            s.to_string(),
            distorted_result(model, items, Some(s), seed)?,
        ));
    }
    Ok(rows)
}

pub fn robustness_table(rows: &[RobustnessRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.rung.clone(),
                fmt_metric(r.mean_auc),
                fmt_metric(r.mean_f1),
                r.images.to_string(),
            ]
        })
        .collect();
    render_table(&["distortion", "AUC", "F1", "images"], &body)
}

/// One trained configuration scored on the evaluation items.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantRow {
    pub variant: String,
    pub mean_f1: Option<f64>,
    pub mean_auc: Option<f64>,
    pub final_loss: Option<f64>,
}

fn train_and_score(
    name: String,
    cfg: &ToyConfig,
    train: &[TrainingItem],
    eval: &[TrainingItem],
    opts: &TrainOptions,
) -> Result<VariantRow> {
    let mut model = ExpertModel::new(cfg)?;
    let report = train_expert(&mut model, train, opts, |_| {})?;
    let r = evaluate_expert(&model, eval)?;
    Ok(VariantRow {
        variant: name,
        mean_f1: r.mean_f1,
        mean_auc: r.mean_auc,
        final_loss: report.final_loss(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbedSizeRow {
    pub m: usize,
    pub mean_f1: Option<f64>,
    pub mean_auc: Option<f64>,
    pub final_loss: Option<f64>,
}

/// Train one expert per object-embedding length `m` with the same seeds and
/// report mean pixel F1. Runs sequentially.
pub fn embed_size_sweep(
    train: &[TrainingItem],
    eval: &[TrainingItem],
    base: &ToyConfig,
    m_values: &[usize],
    opts: &TrainOptions,
) -> Result<Vec<EmbedSizeRow>> {
    if m_values.is_empty() {
        return Err(Error::Config("m sweep needs at least one value".into()));
    }
    m_values
        .iter()
        .map(|&m| {
            let cfg = ToyConfig {
                object_embed_len: m,
                ..base.clone()
            };
            let r = train_and_score(m.to_string(), &cfg, train, eval, opts)?;
            Ok(EmbedSizeRow {
                m,
                mean_f1: r.mean_f1,
                mean_auc: r.mean_auc,
                final_loss: r.final_loss,
            })
        })
        .collect()
}

pub fn embed_size_table(rows: &[EmbedSizeRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                fmt_metric(r.mean_f1),
                fmt_metric(r.mean_auc),
                fmt_metric(r.final_loss),
            ]
        })
        .collect();
    render_table(&["m", "F1", "AUC", "final loss"], &body)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Ablation {
    Full,
    WithoutObject,
    WithoutVocab,
    WithoutMultiScale,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::WithoutObject,
        Ablation::WithoutVocab,
        Ablation::WithoutMultiScale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "Full",
            Ablation::WithoutObject => "w/o Object",
            Ablation::WithoutVocab => "w/o Vocab",
            Ablation::WithoutMultiScale => "w/o Multi-scale",
        }
    }

    /// The base config with this component removed. Dropping multi-scale
    /// keeps only the last encoder block as a tap.
    pub fn apply(self, base: &ToyConfig) -> ToyConfig {
        let mut cfg = base.clone();
        match self {
            Ablation::Full => {}
            Ablation::WithoutObject => cfg.object_prompt = false,
            Ablation::WithoutVocab => cfg.vocab_encoder = false,
            Ablation::WithoutMultiScale => cfg.tap_blocks = vec![cfg.encoder_depth],
        }
        cfg
    }
}

pub fn run_ablations(
    train: &[TrainingItem],
    eval: &[TrainingItem],
    base: &ToyConfig,
    variants: &[Ablation],
    opts: &TrainOptions,
) -> Result<Vec<VariantRow>> {
    variants
        .iter()
        .map(|v| train_and_score(v.name().to_string(), &v.apply(base), train, eval, opts))
        .collect()
}

pub fn ablation_table(rows: &[VariantRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.variant.clone(),
                fmt_metric(r.mean_f1),
                fmt_metric(r.mean_auc),
                fmt_metric(r.final_loss),
            ]
        })
        .collect();
    render_table(&["variant", "F1", "AUC", "final loss"], &body)
}
