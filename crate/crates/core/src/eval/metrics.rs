use serde::Serialize;

use crate::domain::{BinaryMask, Label, ScoreMap};
use crate::error::{shape_err, Error, Result};

/// Default binarization level for pixel F1.
pub const F1_THRESHOLD: f32 = 0.5;

fn check_pair(score: &ScoreMap, gt: &BinaryMask) -> Result<()> {
    if score.width() != gt.width() || score.height() != gt.height() {
        return Err(shape_err!(
            "score map {}x{} vs mask {}x{}",
            score.width(),
            score.height(),
            gt.width(),
            gt.height()
        ));
    }
    Ok(())
}

/// Mann-Whitney AUC of `scores` against binary `labels`, ties counted as
/// one half. Computed from average ranks with exact integer arithmetic.
pub fn auc_from_pairs(scores: &[f32], labels: &[u8]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative pixel".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the positive rank sum, ranks starting at 1
    let mut twice_rank_sum = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_avg_rank = (i + 1 + j + 1) as u64;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        twice_rank_sum += twice_avg_rank * pos_in_group;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

pub fn pixel_auc(score: &ScoreMap, gt: &BinaryMask) -> Result<f64> {
    check_pair(score, gt)?;
    auc_from_pairs(score.data(), gt.data())
}

/// Confusion counts of `{score >= tau}` against the mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn of(scores: &[f32], labels: &[u8], tau: f32) -> Self {
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= tau, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        c
    }

    /// `2tp / (2tp + fp + fn)`; 1 when there is nothing to find and nothing
    /// was predicted.
    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }
}

pub fn pixel_f1(score: &ScoreMap, gt: &BinaryMask, tau: f32) -> Result<f64> {
    check_pair(score, gt)?;
    Ok(Confusion::of(score.data(), gt.data(), tau).f1())
}

pub fn image_accuracy(verdicts: &[Label], labels: &[Label]) -> Result<f64> {
    if verdicts.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} verdicts for {} labels",
            verdicts.len(),
            labels.len()
        )));
    }
    if verdicts.is_empty() {
        return Err(Error::Contract("accuracy of an empty list".into()));
    }
    let hits = verdicts.iter().zip(labels).filter(|(v, l)| v == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageLocalization {
    pub id: String,
    /// `None` when the mask has a single class.
    pub pixel_auc: Option<f64>,
    pub pixel_f1: f64,
}

/// Per-image metrics, their means over images with a defined AUC, and the
/// pooled-pixel variants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationResult {
    pub per_image: Vec<ImageLocalization>,
    pub mean_auc: Option<f64>,
    pub mean_f1: Option<f64>,
    pub pooled_auc: Option<f64>,
    pub pooled_f1: f64,
    /// Ids left out of the means because their AUC is undefined.
    pub skipped: Vec<String>,
}

pub fn evaluate_localization<'a>(
    items: impl IntoIterator<Item = (&'a str, &'a ScoreMap, &'a BinaryMask)>,
) -> Result<LocalizationResult> {
    let mut per_image = Vec::new();
    let mut skipped = Vec::new();
    let (mut all_scores, mut all_labels) = (Vec::new(), Vec::new());
    for (id, score, gt) in items {
        let f1 = pixel_f1(score, gt, F1_THRESHOLD)?;
        let auc = match pixel_auc(score, gt) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => {
                skipped.push(id.to_string());
                None
            }
            Err(e) => return Err(e),
        };
        all_scores.extend_from_slice(score.data());
        all_labels.extend_from_slice(gt.data());
        per_image.push(ImageLocalization {
            id: id.to_string(),
            pixel_auc: auc,
            pixel_f1: f1,
        });
    }
    let defined: Vec<&ImageLocalization> =
        per_image.iter().filter(|r| r.pixel_auc.is_some()).collect();
    let mean = |f: &dyn Fn(&ImageLocalization) -> f64| {
        (!defined.is_empty())
            .then(|| defined.iter().map(|r| f(r)).sum::<f64>() / defined.len() as f64)
    };
    let mean_auc = mean(&|r| r.pixel_auc.unwrap());
    let mean_f1 = mean(&|r| r.pixel_f1);
    Ok(LocalizationResult {
        mean_auc,
        mean_f1,
        pooled_auc: auc_from_pairs(&all_scores, &all_labels).ok(),
        pooled_f1: Confusion::of(&all_scores, &all_labels, F1_THRESHOLD).f1(),
        per_image,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: &[f32]) -> ScoreMap {
        ScoreMap::new(v.len(), 1, v.to_vec()).unwrap()
    }

    fn mask(v: &[u8]) -> BinaryMask {
        BinaryMask::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn auc_examples() {
        let gt = mask(&[1, 0, 1, 0]);
        assert_eq!(pixel_auc(&map(&[0.9, 0.8, 0.7, 0.1]), &gt).unwrap(), 0.75);
        assert_eq!(pixel_auc(&map(&[1.0, 0.0, 1.0, 0.0]), &gt).unwrap(), 1.0);
        assert_eq!(pixel_auc(&map(&[0.0, 1.0, 0.0, 1.0]), &gt).unwrap(), 0.0);
        assert_eq!(pixel_auc(&map(&[0.5; 4]), &gt).unwrap(), 0.5);
        assert!(matches!(
            pixel_auc(&map(&[0.5; 4]), &mask(&[1; 4])),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn f1_examples() {
        let gt = mask(&[1, 1, 1, 0, 0]);
        // tp = 2, fp = 1, fn = 1
        let f = pixel_f1(&map(&[0.9, 0.6, 0.1, 0.7, 0.2]), &gt, 0.5).unwrap();
        assert!((f - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(pixel_f1(&map(&[0.0; 5]), &gt, 0.5).unwrap(), 0.0);
        assert_eq!(pixel_f1(&gt.to_score_map(), &gt, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_examples() {
        use Label::*;
        assert_eq!(
            image_accuracy(&[Forged, Authentic], &[Forged, Authentic]).unwrap(),
            1.0
        );
        assert_eq!(
            image_accuracy(&[Forged, Authentic], &[Authentic, Forged]).unwrap(),
            0.0
        );
        assert_eq!(
            image_accuracy(
                &[Forged, Forged, Authentic, Authentic],
                &[Forged, Forged, Authentic, Forged]
            )
            .unwrap(),
            0.75
        );
        assert!(matches!(
            image_accuracy(&[Forged], &[]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn aggregates_skip_single_class() {
        let a = (map(&[0.9, 0.1]), mask(&[1, 0]));
        let b = (map(&[0.2, 0.1]), mask(&[0, 0]));
        let r = evaluate_localization([("a", &a.0, &a.1), ("b", &b.0, &b.1)]).unwrap();
        assert_eq!(r.mean_auc, Some(1.0));
        assert_eq!(r.skipped, vec!["b".to_string()]);
        assert_eq!(r.pooled_auc, Some(1.0));
    }
}
