use fgl_core::bridge::{
    assemble_token_sequence, classify, encode_mask_tokens, fit_bridge, BridgeModel, Classification,
    MaskSource, Role, Verdict, AUTHENTIC_RESPONSE,
};
use fgl_core::domain::{BinaryMask, ForgeryType, Label, ScoreMap, ToyConfig};
use fgl_core::eval::{evaluate_detection, evaluate_explanations};
use fgl_core::expert::{ExpertModel, TrainOptions, TrainingItem};
use fgl_core::nn::{GradCheckOptions, Graph, Tensor};
use fgl_core::verify::{bridge_grad_check, probe_item};
use fgl_core::Error;

fn small() -> ToyConfig {
    ToyConfig {
        image_size: 32,
        patch_size: 8,
        embed_dim: 16,
        key_dim: 16,
        encoder_depth: 2,
        tap_blocks: vec![1, 2],
        token_dim: 16,
        decoder_width: 8,
        ..ToyConfig::default()
    }
}

fn authentic(cfg: &ToyConfig, seed: u64) -> TrainingItem {
    let mut it = probe_item(cfg, seed).unwrap();
    it.image = fgl_core::datagen::procedural_image(seed + 1000, cfg.image_size).unwrap();
    it.mask = BinaryMask::zeros(cfg.image_size, cfg.image_size);
    it.label = Label::Authentic;
    it.forgery_type = ForgeryType::None;
    it
}

#[test]
fn default_sequence_layout() {
    let cfg = ToyConfig::default();
    let t = |n| Tensor::zeros(&[n, cfg.token_dim]);
    let n_text = fgl_core::bridge::INSTRUCTION.len();
    let s = assemble_token_sequence(
        &t(cfg.num_patches()),
        &t(cfg.prompt_tokens),
        &t(cfg.mask_tokens),
        &t(n_text),
    )
    .unwrap();
    assert_eq!(s.len(), 80);
    assert_eq!(s.span(Role::Mask), 68..72);
}

#[test]
fn mask_encoder_output_shape_and_sensitivity() {
    let cfg = small();
    let m = BridgeModel::new(&cfg).unwrap();
    let n = cfg.image_size;
    let zeros = ScoreMap::uniform(n, n, 0.0).unwrap();
    let ones = ScoreMap::uniform(n, n, 1.0).unwrap();
    let a = encode_mask_tokens(&zeros, &m.mask_enc, m.store()).unwrap();
    let b = encode_mask_tokens(&ones, &m.mask_enc, m.store()).unwrap();
    assert_eq!(a.shape(), &[cfg.mask_tokens, cfg.token_dim]);
    assert_ne!(a, b);
    assert_eq!(
        a,
        encode_mask_tokens(&zeros, &m.mask_enc, m.store()).unwrap()
    );
    let wrong = ScoreMap::uniform(n / 2, n / 2, 0.0).unwrap();
    assert!(matches!(
        encode_mask_tokens(&wrong, &m.mask_enc, m.store()),
        Err(Error::Shape(_))
    ));
}

#[test]
fn classification_is_argmax_and_reproducible() {
    assert_eq!(
        Classification::from_logits([0.1, 0.2]).verdict,
        Verdict::Forged
    );
    assert_eq!(
        Classification::from_logits([0.2, 0.1]).verdict,
        Verdict::Authentic
    );
    assert_eq!(
        Classification::from_logits([0.0, 0.0]).verdict,
        Verdict::Authentic
    );
    let cfg = small();
    let m = BridgeModel::new(&cfg).unwrap();
    let it = probe_item(&cfg, 2).unwrap();
    let a = m.detect(&it.image).unwrap();
    let b = m.detect(&it.image).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        a.classification,
        Classification::from_logits(a.classification.logits)
    );
}

#[test]
fn token_order_matters() {
    let cfg = small();
    let m = BridgeModel::new(&cfg).unwrap();
    let it = probe_item(&cfg, 3).unwrap();
    let s = m.prepare_item(&it).unwrap();
    let mask = encode_mask_tokens(&it.mask.to_score_map(), &m.mask_enc, m.store()).unwrap();
    let prompt = m.store().tensor(m.prompt_tokens).clone();
    let mut g = Graph::new();
    let text = m.head.text_tokens(&mut g, m.store()).unwrap();
    let text = g.value(text).clone();
    let fwd = assemble_token_sequence(&s.image_tokens, &prompt, &mask, &text).unwrap();
    let swapped = assemble_token_sequence(&s.image_tokens, &mask, &prompt, &text).unwrap();
    let a = classify(&fwd, &m.head, m.store()).unwrap();
    let b = classify(&swapped, &m.head, m.store()).unwrap();
    assert_ne!(a.logits, b.logits);
    let direct = m
        .classify_with_mask(&it.image, &it.mask.to_score_map())
        .unwrap();
    for k in 0..2 {
        assert!((direct.logits[k] - a.logits[k]).abs() < 1e-9);
    }
}

#[test]
fn classification_only_loss_gradients() {
    let cfg = ToyConfig {
        lambda_loc: 0.0,
        ..small()
    };
    let mut m = BridgeModel::new(&cfg).unwrap();
    let it = probe_item(&cfg, 4).unwrap();
    let r = bridge_grad_check(
        &mut m,
        &it,
        MaskSource::Predicted,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(r.passed(), "{:?}", r.worst());

    let s = m.prepare_item(&it).unwrap();
    let mut g = Graph::new();
    let t = m.expert.text_graph(&mut g).unwrap();
    let lv = m.loss_graph(&mut g, t, &s, MaskSource::Predicted).unwrap();
    let (loss, ce, dice) = (
        g.value(lv.loss).data()[0],
        g.value(lv.ce).data()[0],
        g.value(lv.dice).data()[0],
    );
    assert_eq!(loss, ce);
    assert!(dice > 0.0 && dice < 1.0);
}

#[test]
fn joint_loss_gradients_with_ground_truth_masks() {
    let cfg = small();
    let mut m = BridgeModel::new(&cfg).unwrap();
    let it = probe_item(&cfg, 5).unwrap();
    let r = bridge_grad_check(
        &mut m,
        &it,
        MaskSource::GroundTruth,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(r.passed(), "{:?}", r.worst());
}

#[test]
fn missing_expert_checkpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = BridgeModel::from_expert_checkpoint(&small(), dir.path().join("nope.ckpt"));
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn checkpoints_round_trip() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let expert = ExpertModel::new(&cfg).unwrap();
    let ep = dir.path().join("expert.ckpt");
    expert.save(&ep).unwrap();
    let m = BridgeModel::from_expert_checkpoint(&cfg, &ep).unwrap();
    let bp = dir.path().join("bridge.ckpt");
    m.save(&bp).unwrap();
    let back = BridgeModel::load(&bp).unwrap();
    let it = probe_item(&cfg, 6).unwrap();
    assert_eq!(
        m.detect(&it.image).unwrap(),
        back.detect(&it.image).unwrap()
    );
    // An expert checkpoint lacks the bridge namespaces.
    assert!(matches!(BridgeModel::load(&ep), Err(Error::Config(_))));
}

#[test]
fn training_runs_and_reduces_loss() {
    let cfg = small();
    let mut m = BridgeModel::new(&cfg).unwrap();
    let items: Vec<_> = (0..2)
        .map(|s| probe_item(&cfg, s).unwrap())
        .chain((0..2).map(|s| authentic(&cfg, s)))
        .collect();
    let opts = TrainOptions {
        epochs: 30,
        batch_size: 4,
        lr: 1e-3,
        seed: 0,
    };
    let mut seen = 0;
    let r = fit_bridge(&mut m, &items, &opts, MaskSource::Predicted, |_| seen += 1).unwrap();
    assert_eq!(seen, 30);
    assert!(r.loss_curve.last().unwrap() < r.loss_curve.first().unwrap());
    let det = evaluate_detection(&m, &items, MaskSource::GroundTruth).unwrap();
    assert_eq!(det.per_image.len(), 4);
    assert_eq!(det.mask_source, MaskSource::GroundTruth);
}

#[test]
fn explanations() {
    let cfg = small();
    let m = BridgeModel::new(&cfg).unwrap();
    let it = probe_item(&cfg, 7).unwrap();
    let (det, text) = m.explain(&it.image, Some(ForgeryType::Splicing)).unwrap();
    match det.classification.verdict {
        Verdict::Authentic => assert_eq!(text, AUTHENTIC_RESPONSE),
        Verdict::Forged => assert!(text.contains("pasted")),
    }
    if det.classification.verdict == Verdict::Forged {
        assert!(matches!(m.explain(&it.image, None), Err(Error::Config(_))));
    }
    let refs = vec![(it.clone(), "a reference sentence".to_string())];
    let r = evaluate_explanations(&m, &refs).unwrap();
    assert_eq!(r.per_image.len(), 1);
    assert!(r.mean.rouge_l.f1 >= 0.0);
}
