use crate::error::{shape_err, Result};
use crate::nn::{Graph, Tensor, Var};

/// `f_cross = mean_i softmax_rows(F̃ⁱ_patch · F_textᵀ)`, shape `P×2`.
pub fn cross_modal_graph(g: &mut Graph, patch_proj: &[Var], f_text: Var) -> Result<Var> {
    if g.value(f_text).rows() != 2 || g.value(f_text).shape().len() != 2 {
        return Err(shape_err!(
            "F_text must have 2 rows, got shape {:?}",
            g.value(f_text).shape()
        ));
    }
    if patch_proj.is_empty() {
        return Err(shape_err!("no stages to fuse"));
    }
    let mut per_stage = Vec::with_capacity(patch_proj.len());
    for &p in patch_proj {
        let logits = g.matmul_nt(p, f_text)?;
        per_stage.push(g.softmax_rows(logits)?);
    }
    g.mean_of(&per_stage)
}

/// `αⁱ = softmax_rows(F̃ⁱ_patch F̃ⁱ_vocabᵀ / √d_e)` for every stage and
/// `f_enhanced = mean_i αⁱ F̃ⁱ_vocab`.
pub fn attention_fusion_graph(
    g: &mut Graph,
    patch_proj: &[Var],
    vocab_proj: &[Var],
    key_dim: usize,
) -> Result<(Var, Vec<Var>)> {
    if patch_proj.len() != vocab_proj.len() || patch_proj.is_empty() {
        return Err(shape_err!(
            "{} query stages vs {} key/value stages",
            patch_proj.len(),
            vocab_proj.len()
        ));
    }
    let mut alphas = Vec::with_capacity(patch_proj.len());
    let mut outs = Vec::with_capacity(patch_proj.len());
    for (&q, &kv) in patch_proj.iter().zip(vocab_proj) {
        let scores = g.matmul_nt(q, kv)?;
        let scaled = g.scale(scores, 1.0 / (key_dim as f64).sqrt());
        let alpha = g.softmax_rows(scaled)?;
        outs.push(g.matmul(alpha, kv)?);
        alphas.push(alpha);
    }
    Ok((g.mean_of(&outs)?, alphas))
}

/// Per-patch class distribution (columns: authentic, forged).
#[derive(Clone, Debug, PartialEq)]
pub struct CrossModalMap {
    pub f_cross: Tensor,
}

pub fn cross_modal_reasoning(patch_proj: &[Tensor], f_text: &Tensor) -> Result<CrossModalMap> {
    let mut g = Graph::new();
    let stages: Vec<Var> = patch_proj.iter().map(|t| g.input(t.clone())).collect();
    let t = g.input(f_text.clone());
    let out = cross_modal_graph(&mut g, &stages, t)?;
    Ok(CrossModalMap {
        f_cross: g.value(out).clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedFeature {
    pub f_enhanced: Tensor,
    /// Attention weights of each stage, `P×P`.
    pub alphas: Vec<Tensor>,
}

pub fn attention_fusion(
    patch_proj: &[Tensor],
    vocab_proj: &[Tensor],
    key_dim: usize,
) -> Result<FusedFeature> {
    let mut g = Graph::new();
    let q: Vec<Var> = patch_proj.iter().map(|t| g.input(t.clone())).collect();
    let kv: Vec<Var> = vocab_proj.iter().map(|t| g.input(t.clone())).collect();
    let (out, alphas) = attention_fusion_graph(&mut g, &q, &kv, key_dim)?;
    Ok(FusedFeature {
        f_enhanced: g.value(out).clone(),
        alphas: alphas.iter().map(|&a| g.value(a).clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_text_rows_give_half() {
        let p = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.3, 0.7]]).unwrap();
        let t = Tensor::from_rows(&[vec![0.6, 0.8], vec![0.6, 0.8]]).unwrap();
        let m = cross_modal_reasoning(&[p.clone(), p.clone(), p.clone(), p], &t).unwrap();
        assert!(m.f_cross.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn text_row_count_checked() {
        let p = Tensor::zeros(&[3, 2]);
        let t = Tensor::zeros(&[3, 2]);
        assert!(cross_modal_reasoning(&[p], &t).is_err());
    }

    #[test]
    fn stage_mismatch_checked() {
        let p = Tensor::zeros(&[3, 2]);
        assert!(attention_fusion(&[p.clone(), p.clone()], &[p], 2).is_err());
    }
}
