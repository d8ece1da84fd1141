use crate::domain::{BinaryMask, ScoreMap};
use crate::error::{shape_err, Result};
use crate::nn::{Graph, Tensor, Var};

pub const DICE_SMOOTHING: f64 = 1.0;

/// `1 - (2 Σ p·y + ε) / (Σ p + Σ y + ε)` as a graph node; `target` holds the
/// ground truth with the same shape as `pred`.
pub fn dice_loss_graph(g: &mut Graph, pred: Var, target: &Tensor) -> Result<Var> {
    if g.value(pred).shape() != target.shape() {
        return Err(shape_err!(
            "prediction {:?} vs target {:?}",
            g.value(pred).shape(),
            target.shape()
        ));
    }
    let y = g.input(target.clone());
    let py = g.mul(pred, y)?;
    let inter = g.sum(py);
    let num = g.scale(inter, 2.0);
    let num = g.add_scalar(num, DICE_SMOOTHING);
    let sp = g.sum(pred);
    let den = g.add_scalar(sp, target.sum() + DICE_SMOOTHING);
    let ratio = g.div(num, den)?;
    let neg = g.scale(ratio, -1.0);
    Ok(g.add_scalar(neg, 1.0))
}

/// `[1, H, W]` tensor view of a mask.
pub fn mask_tensor(mask: &BinaryMask) -> Tensor {
    Tensor::new(
        &[1, mask.height(), mask.width()],
        mask.data().iter().map(|&v| v as f64).collect(),
    )
    .expect("mask dims")
}

pub fn dice_loss(pred: &ScoreMap, gt: &BinaryMask) -> Result<f64> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(shape_err!(
            "prediction {}x{} vs mask {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        ));
    }
    let mut g = Graph::new();
    let p = g.input(Tensor::new(
        &[1, pred.height(), pred.width()],
        pred.data().iter().map(|&v| v as f64).collect(),
    )?);
    let l = dice_loss_graph(&mut g, p, &mask_tensor(gt))?;
    Ok(g.value(l).data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_zero() {
        let m = BinaryMask::from_fn(8, 8, |x, y| (x + y) % 3 == 0);
        assert_eq!(dice_loss(&m.to_score_map(), &m).unwrap(), 0.0);
        let empty = BinaryMask::zeros(16, 16);
        assert_eq!(dice_loss(&empty.to_score_map(), &empty).unwrap(), 0.0);
    }

    #[test]
    fn zero_prediction_on_four_ones() {
        let y = BinaryMask::ones(2, 2);
        let p = ScoreMap::uniform(2, 2, 0.0).unwrap();
        assert!((dice_loss(&p, &y).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let y = BinaryMask::ones(2, 2);
        let p = ScoreMap::uniform(3, 2, 0.0).unwrap();
        assert!(dice_loss(&p, &y).is_err());
    }
}
