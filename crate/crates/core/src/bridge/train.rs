use std::path::Path;

use serde::Serialize;

use super::model::{prob_map, BridgeModel, MaskSource};
use super::Verdict;
use crate::domain::{DatasetManifest, ToyConfig};
use crate::error::Result;
use crate::eval::pixel_auc;
use crate::expert::{check_options, epoch_order, load_training_set, TrainOptions, TrainingItem};
use crate::nn::{Adam, Graph};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BridgeEpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_ce: f64,
    /// Logged even when its weight is zero.
    pub mean_dice: f64,
    /// Verdict accuracy of this epoch's training forward passes.
    pub accuracy: f64,
    pub pixel_auc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BridgeReport {
    pub loss_curve: Vec<f64>,
    pub epochs: Vec<BridgeEpochLog>,
}

impl BridgeReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }
}

/// Jointly optimize the bridge and the expert's trainable parameters.
pub fn fit_bridge(
    model: &mut BridgeModel,
    items: &[TrainingItem],
    opts: &TrainOptions,
    source: MaskSource,
    mut on_epoch: impl FnMut(&BridgeEpochLog),
) -> Result<BridgeReport> {
    check_options(opts, items.len())?;
    let samples = items
        .iter()
        .map(|it| model.prepare_item(it))
        .collect::<Result<Vec<_>>>()?;
    let mut adam = Adam::new(opts.lr);
    let mut report = BridgeReport::default();
    for epoch in 0..opts.epochs {
        let (mut loss_sum, mut ce_sum, mut dice_sum, mut correct) = (0.0, 0.0, 0.0, 0usize);
        let mut steps = 0usize;
        let mut aucs = Vec::new();
        for batch in epoch_order(opts.seed, epoch, items.len()).chunks(opts.batch_size) {
            let mut g = Graph::new();
            let f_text = model.expert.text_graph(&mut g)?;
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let lv = model.loss_graph(&mut g, f_text, &samples[i], source)?;
                losses.push(lv.loss);
                ce_sum += g.value(lv.ce).data()[0];
                dice_sum += g.value(lv.dice).data()[0];
                let l = g.value(lv.logits).data();
                let verdict = Verdict::from_index(usize::from(l[1] > l[0]));
                if verdict == Verdict::from(items[i].label) {
                    correct += 1;
                }
                if let Ok(a) = pixel_auc(&prob_map(&g, lv.prob)?, &items[i].mask) {
                    aucs.push(a);
                }
            }
            let loss = g.mean_of(&losses)?;
            g.backward(loss)?;
            adam.step(&mut model.expert.store, &g.param_grads());
            let v = g.value(loss).data()[0];
            report.loss_curve.push(v);
            loss_sum += v;
            steps += 1;
        }
        let n = items.len() as f64;
        let log = BridgeEpochLog {
            epoch,
            mean_loss: loss_sum / steps as f64,
            mean_ce: ce_sum / n,
            mean_dice: dice_sum / n,
            accuracy: correct as f64 / n,
            pixel_auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
        };
        on_epoch(&log);
        report.epochs.push(log);
    }
    Ok(report)
}

/// Load the expert checkpoint into a bridge built from `cfg`, train on
/// `manifest` and optionally save the joint checkpoint.
pub fn train_bridge(
    manifest: &DatasetManifest,
    flexpert_checkpoint: &Path,
    cfg: &ToyConfig,
    opts: &TrainOptions,
    source: MaskSource,
    checkpoint_out: Option<&Path>,
    on_epoch: impl FnMut(&BridgeEpochLog),
) -> Result<(BridgeModel, BridgeReport)> {
    let mut model = BridgeModel::from_expert_checkpoint(cfg, flexpert_checkpoint)?;
    let items = load_training_set(manifest)?;
    let report = fit_bridge(&mut model, &items, opts, source, on_epoch)?;
    if let Some(p) = checkpoint_out {
        model.save(p)?;
    }
    Ok((model, report))
}
