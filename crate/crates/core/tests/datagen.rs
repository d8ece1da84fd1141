mod common;

use fgl_core::datagen::{
    apply_distortion, build_dataset, is_connected, make_mask, rebuild_entry, resized_side,
    synthesize, verify_rebuild, DatasetRequest, DistortionPolicy, DistortionSpec, MaskGranularity,
    ShapeRegime, SourcePool,
};
use fgl_core::domain::{
    load_image, load_mask, save_image, validate_manifest, DatasetManifest, ForgeryType, Label,
    RasterImage,
};
use fgl_core::Error;

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["images", "masks"] {
        let mut names: Vec<_> = std::fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        for p in names {
            out.push((
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            ));
        }
    }
    out.push((
        "manifest".into(),
        std::fs::read(dir.join("manifest.json")).unwrap(),
    ));
    out
}

#[test]
fn forgeries_only_touch_masked_pixels() {
    for g in MaskGranularity::presets() {
        for (i, t) in ForgeryType::FORGED.iter().enumerate() {
            for seed in 0..6u64 {
                let s = synthesize(
                    seed * 31 + i as u64,
                    *t,
                    Some(&g),
                    &[],
                    &SourcePool::Procedural,
                    64,
                )
                .unwrap();
                assert_eq!(
                    common::changed_outside(&s.source, &s.tampered, &s.mask),
                    0,
                    "{t} {g:?}"
                );
                assert!(
                    g.contains(s.mask.area_fraction()),
                    "{t} {g:?} {}",
                    s.mask.area_fraction()
                );
                assert_eq!(s.label, Label::Forged);
            }
        }
    }
}

#[test]
fn authentic_sample_is_the_source() {
    let s = synthesize(5, ForgeryType::None, None, &[], &SourcePool::Procedural, 64).unwrap();
    assert_eq!(s.source, s.tampered);
    assert_eq!(s.mask.positives(), 0);
    assert_eq!(s.label, Label::Authentic);
    let e = synthesize(
        5,
        ForgeryType::Splicing,
        None,
        &[],
        &SourcePool::Procedural,
        64,
    );
    assert!(matches!(e, Err(Error::Config(_))));
}

#[test]
fn masks_are_connected_and_in_band() {
    for regime in [ShapeRegime::Blob, ShapeRegime::Polygon] {
        let g = MaskGranularity::new(0.02, 0.05, regime).unwrap();
        let (lo, hi) = g.pixel_range(64 * 64);
        for seed in 0..40 {
            let m = make_mask(seed, &g, 64).unwrap();
            assert!(is_connected(&m));
            assert!((lo..=hi).contains(&m.positives()));
        }
    }
    assert!(MaskGranularity::new(0.3, 0.2, ShapeRegime::Blob).is_err());
    assert!(MaskGranularity::new(0.1, 0.6, ShapeRegime::Blob).is_err());
}

#[test]
fn splice_and_copy_move_leave_visible_changes() {
    let g = MaskGranularity::new(0.10, 0.25, ShapeRegime::Blob).unwrap();
    for t in [
        ForgeryType::Splicing,
        ForgeryType::CopyMove,
        ForgeryType::Removal,
    ] {
        let s = synthesize(9, t, Some(&g), &[], &SourcePool::Procedural, 64).unwrap();
        assert_ne!(s.source, s.tampered, "{t}");
    }
}

#[test]
fn distortions_resize_mask_with_image() {
    let g = MaskGranularity::new(0.05, 0.10, ShapeRegime::Polygon).unwrap();
    let d = [
        DistortionSpec::Resize { scale: 0.78 },
        DistortionSpec::Jpeg { quality: 50 },
    ];
    let s = synthesize(
        3,
        ForgeryType::Splicing,
        Some(&g),
        &d,
        &SourcePool::Procedural,
        64,
    )
    .unwrap();
    let side = resized_side(64, 0.78);
    assert_eq!(side, 50);
    assert!(s.image.same_dims(side, side));
    assert_eq!((s.final_mask.width(), s.final_mask.height()), (side, side));
    assert!(s.tampered.same_dims(64, 64));
}

#[test]
fn zero_noise_is_identity_and_noise_is_seeded() {
    let img = fgl_core::datagen::procedural_image(1, 32).unwrap();
    let same = apply_distortion(&img, &DistortionSpec::Noise { sigma: 0.0 }, 4).unwrap();
    assert_eq!(same, img);
    let a = apply_distortion(&img, &DistortionSpec::Noise { sigma: 15.0 }, 4).unwrap();
    let b = apply_distortion(&img, &DistortionSpec::Noise { sigma: 15.0 }, 4).unwrap();
    let c = apply_distortion(&img, &DistortionSpec::Noise { sigma: 15.0 }, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(apply_distortion(&img, &DistortionSpec::Blur { kernel: 4 }, 0).is_err());
    assert!(apply_distortion(&img, &DistortionSpec::Jpeg { quality: 0 }, 0).is_err());
}

#[test]
fn dataset_is_valid_and_rebuilds_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut req = DatasetRequest::new(12, 4, 77);
    req.policy = DistortionPolicy::training_default();
    let m = build_dataset(&req, &SourcePool::Procedural, dir.path(), 2).unwrap();
    assert_eq!(m.len(), 16);
    assert_eq!(validate_manifest(&m), vec![]);
    assert!(verify_rebuild(&m, &SourcePool::Procedural, 64)
        .unwrap()
        .is_empty());

    let loaded = DatasetManifest::load(dir.path().join("manifest.json")).unwrap();
    assert_eq!(loaded.entries.len(), 16);
    let e = &loaded.entries[0];
    let s = rebuild_entry(e, &SourcePool::Procedural, 64).unwrap();
    assert_eq!(load_image(loaded.resolve(&e.image_path)).unwrap(), s.image);
    assert_eq!(
        load_mask(loaded.resolve(&e.mask_path)).unwrap(),
        s.final_mask
    );
    let types: Vec<_> = loaded
        .entries
        .iter()
        .take(3)
        .map(|e| e.forgery_type)
        .collect();
    assert_eq!(types, ForgeryType::FORGED.to_vec());
}

#[test]
fn output_does_not_depend_on_worker_count() {
    let req = DatasetRequest::new(6, 2, 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    build_dataset(&req, &SourcePool::Procedural, a.path(), 1).unwrap();
    build_dataset(&req, &SourcePool::Procedural, b.path(), 4).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), fb.len());
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na != "manifest" {
            assert_eq!(ba, bb, "{na}");
        }
    }
}

#[test]
fn tampered_file_fails_rebuild_check() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_dataset(
        &DatasetRequest::new(2, 1, 8),
        &SourcePool::Procedural,
        dir.path(),
        1,
    )
    .unwrap();
    let e = &m.entries[1];
    let mut img = load_image(m.resolve(&e.image_path)).unwrap();
    let p = img.pixel(0, 0);
    img.set_pixel(0, 0, [p[0] ^ 1, p[1], p[2]]);
    save_image(&img, m.resolve(&e.image_path)).unwrap();
    assert_eq!(
        verify_rebuild(&m, &SourcePool::Procedural, 64).unwrap(),
        vec![e.id.clone()]
    );
}

#[test]
fn image_pool_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    for (i, c) in [[200u8, 10, 10], [10, 200, 10]].iter().enumerate() {
        save_image(
            &RasterImage::filled(40, 30, *c).unwrap(),
            dir.path().join(format!("s{i}.png")),
        )
        .unwrap();
    }
    let pool = SourcePool::from_dir(dir.path(), 32).unwrap();
    let g = MaskGranularity::new(0.05, 0.10, ShapeRegime::Blob).unwrap();
    let s = synthesize(1, ForgeryType::Splicing, Some(&g), &[], &pool, 32).unwrap();
    assert!(s.image.same_dims(32, 32));
    assert_eq!(common::changed_outside(&s.source, &s.tampered, &s.mask), 0);
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(
        SourcePool::from_dir(empty.path(), 32),
        Err(Error::Config(_))
    ));
}

#[test]
fn bad_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut req = DatasetRequest::new(2, 0, 1);
    req.types = vec![ForgeryType::None];
    assert!(matches!(
        build_dataset(&req, &SourcePool::Procedural, dir.path(), 1),
        Err(Error::Config(_))
    ));
    let mut req = DatasetRequest::new(2, 0, 1);
    req.granularities.clear();
    assert!(build_dataset(&req, &SourcePool::Procedural, dir.path(), 1).is_err());
}
