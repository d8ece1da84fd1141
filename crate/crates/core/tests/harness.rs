use fgl_core::datagen::DistortionSpec;
use fgl_core::domain::ToyConfig;
use fgl_core::eval::{
    ablation_table, embed_size_sweep, embed_size_table, evaluate_expert, robustness_sweep,
    robustness_table, run_ablations, write_csv, write_json, Ablation,
};
use fgl_core::expert::{ExpertModel, TrainOptions, TrainingItem};
use fgl_core::verify::probe_item;
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

fn items(cfg: &ToyConfig, n: u64) -> Vec<TrainingItem> {
    (0..n).map(|s| probe_item(cfg, s).unwrap()).collect()
}

fn quick() -> TrainOptions {
    TrainOptions {
        epochs: 2,
        batch_size: 2,
        lr: 5e-4,
        seed: 0,
    }
}

#[test]
fn empty_ladder_gives_baseline_only() {
    let cfg = small();
    let m = ExpertModel::new(&cfg).unwrap();
    let rows = robustness_sweep(&m, &items(&cfg, 2), &[], 0).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].rung, "Original");
    let table = robustness_table(&rows);
    assert_eq!(table.lines().filter(|l| l.contains("Original")).count(), 1);
}

#[test]
fn zero_noise_rung_equals_baseline() {
    let cfg = small();
    let m = ExpertModel::new(&cfg).unwrap();
    let its = items(&cfg, 3);
    let rows = robustness_sweep(&m, &its, &[DistortionSpec::Noise { sigma: 0.0 }], 9).unwrap();
    assert_eq!(rows[0].mean_auc, rows[1].mean_auc);
    assert_eq!(rows[0].mean_f1, rows[1].mean_f1);
    let base = evaluate_expert(&m, &its).unwrap();
    assert_eq!(rows[0].mean_auc, base.mean_auc);
}

#[test]
fn full_ladder_has_one_row_per_rung() {
    let cfg = ToyConfig {
        image_size: 64,
        ..small()
    };
    let m = ExpertModel::new(&cfg).unwrap();
    let ladder = DistortionSpec::robustness_ladder();
    let rows = robustness_sweep(&m, &items(&cfg, 2), &ladder, 0).unwrap();
    let names: Vec<_> = rows.iter().map(|r| r.rung.as_str()).collect();
    assert_eq!(
        names,
        [
            "Original",
            "Resize(0.78x)",
            "Resize(0.25x)",
            "Blur(k=3)",
            "Blur(k=15)",
            "Noise(sigma=3)",
            "Noise(sigma=15)",
            "Compress(q=100)",
            "Compress(q=50)"
        ]
    );
    assert!(rows.iter().all(|r| r.images == 2 && r.mean_auc.is_some()));
    let bad = [DistortionSpec::Blur { kernel: 2 }];
    assert!(robustness_sweep(&m, &items(&cfg, 1), &bad, 0).is_err());
}

#[test]
fn single_m_sweep_is_deterministic() {
    let cfg = small();
    let its = items(&cfg, 2);
    let a = embed_size_sweep(&its, &its, &cfg, &[12], &quick()).unwrap();
    let b = embed_size_sweep(&its, &its, &cfg, &[12], &quick()).unwrap();
    assert_eq!(a.len(), 1);
    assert_eq!(a[0].m, 12);
    assert_eq!(a, b);
    assert!(embed_size_table(&a).contains("12"));
    assert!(matches!(
        embed_size_sweep(&its, &its, &cfg, &[], &quick()),
        Err(Error::Config(_))
    ));
}

#[test]
fn ablation_variants_change_the_config() {
    let base = ToyConfig::default();
    assert_eq!(Ablation::Full.apply(&base), base);
    assert!(!Ablation::WithoutObject.apply(&base).object_prompt);
    assert!(!Ablation::WithoutVocab.apply(&base).vocab_encoder);
    assert_eq!(
        Ablation::WithoutMultiScale.apply(&base).tap_blocks,
        vec![base.encoder_depth]
    );
    for a in Ablation::ALL {
        a.apply(&base).validate().unwrap();
    }
    let p = |c: &ToyConfig| ExpertModel::new(c).unwrap().store.trainable_ids().len();
    assert!(p(&Ablation::WithoutVocab.apply(&base)) < p(&base));
    assert!(p(&Ablation::WithoutObject.apply(&base)) < p(&base));
}

#[test]
fn ablations_produce_a_table_and_files() {
    let cfg = small();
    let its = items(&cfg, 2);
    let rows = run_ablations(&its, &its, &cfg, &Ablation::ALL, &quick()).unwrap();
    let table = ablation_table(&rows);
    for a in Ablation::ALL {
        assert!(table.contains(a.name()), "{table}");
    }
    assert!(rows
        .iter()
        .all(|r| r.final_loss.is_some_and(f64::is_finite)));
    let dir = tempfile::tempdir().unwrap();
    write_csv(&rows, dir.path().join("ablations.csv")).unwrap();
    write_json(&rows, dir.path().join("ablations.json")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("ablations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("variant,"));
}
