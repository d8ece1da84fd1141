use rayon::prelude::*;
use serde::Serialize;

use super::metrics::image_accuracy;
use super::rouge::{mean_rouge, rouge, RougeScores};
use crate::bridge::{render_explanation, BridgeModel, MaskSource, Verdict};
use crate::domain::{Label, ScoreMap};
use crate::error::{Error, Result};
use crate::expert::TrainingItem;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageDetection {
    pub id: String,
    pub label: Label,
    pub verdict: Verdict,
    pub logits: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionResult {
    pub mask_source: MaskSource,
    pub accuracy: f64,
    pub per_image: Vec<ImageDetection>,
}

/// Image-level accuracy. With [`MaskSource::GroundTruth`] the mask encoder
/// sees the true mask instead of the expert's prediction.
pub fn evaluate_detection(
    model: &BridgeModel,
    items: &[TrainingItem],
    source: MaskSource,
) -> Result<DetectionResult> {
    let per_image = items
        .par_iter()
        .map(|it| {
            let c = match source {
                MaskSource::Predicted => model.detect(&it.image)?.classification,
                MaskSource::GroundTruth => {
                    model.classify_with_mask(&it.image, &it.mask.to_score_map())?
                }
            };
            Ok(ImageDetection {
                id: it.id.clone(),
                label: it.label,
                verdict: c.verdict,
                logits: c.logits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdicts: Vec<Label> = per_image.iter().map(|d| d.verdict.label()).collect();
    let labels: Vec<Label> = per_image.iter().map(|d| d.label).collect();
    Ok(DetectionResult {
        mask_source: source,
        accuracy: image_accuracy(&verdicts, &labels)?,
        per_image,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageExplanation {
    pub id: String,
    /// `None` when a forged verdict came with no region to describe; the
    /// image then scores zero.
    pub candidate: Option<String>,
    pub reference: String,
    pub scores: RougeScores,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplanationResult {
    pub mean: RougeScores,
    pub unrendered: usize,
    pub per_image: Vec<ImageExplanation>,
}

fn render(verdict: Verdict, it: &TrainingItem, map: &ScoreMap) -> Result<Option<String>> {
    match render_explanation(verdict, it.forgery_type, map) {
        Ok(t) => Ok(Some(t)),
        Err(Error::Contract(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// ROUGE of the rendered explanation against each item's reference text.
/// The forgery type slot is filled from the item.
pub fn evaluate_explanations(
    model: &BridgeModel,
    items: &[(TrainingItem, String)],
) -> Result<ExplanationResult> {
    let per_image = items
        .par_iter()
        .map(|(it, reference)| {
            let det = model.detect(&it.image)?;
            let candidate = render(det.classification.verdict, it, &det.score_map)?;
            let scores = match &candidate {
                Some(c) => rouge(c, reference)?,
                None => RougeScores::default(),
            };
            Ok(ImageExplanation {
                id: it.id.clone(),
                candidate,
                reference: reference.clone(),
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<RougeScores> = per_image.iter().map(|e| e.scores).collect();
    Ok(ExplanationResult {
        mean: mean_rouge(&all).ok_or_else(|| Error::Contract("no items to explain".into()))?,
        unrendered: per_image.iter().filter(|e| e.candidate.is_none()).count(),
        per_image,
    })
}
