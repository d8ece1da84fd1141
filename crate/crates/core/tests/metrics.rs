mod common;

use common::{brute_auc, brute_lcs, ngram_matches, prf, tokens};
use fgl_core::domain::{BinaryMask, Label, ScoreMap};
use fgl_core::eval::{
    auc_from_pairs, evaluate_localization, image_accuracy, lcs_len, pixel_auc, pixel_f1, rouge,
    tokenize, Prf, F1_THRESHOLD,
};
use fgl_core::seed::rng_for;
use fgl_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn map(w: usize, h: usize, v: &[f32]) -> ScoreMap {
    ScoreMap::new(w, h, v.to_vec()).unwrap()
}

fn mask(w: usize, h: usize, v: &[u8]) -> BinaryMask {
    BinaryMask::new(w, h, v.to_vec()).unwrap()
}

#[test]
fn auc_matches_pairwise_concordance() {
    let mut rng = rng_for(200, 0);
    let mut checked = 0;
    while checked < 200 {
        let (w, h) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let n = w * h;
        // Coarse levels force plenty of ties.
        let levels = rng.random_range(2..10);
        let s: Vec<f32> = (0..n)
            .map(|_| rng.random_range(0..levels) as f32 / levels as f32)
            .collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        match brute_auc(&s, &y) {
            Some(want) => {
                assert_eq!(pixel_auc(&map(w, h, &s), &mask(w, h, &y)).unwrap(), want);
                checked += 1;
            }
            None => assert!(matches!(
                pixel_auc(&map(w, h, &s), &mask(w, h, &y)),
                Err(Error::UndefinedMetric(_))
            )),
        }
    }
}

#[test]
fn auc_worked_example() {
    let a = pixel_auc(
        &map(4, 1, &[0.9, 0.8, 0.7, 0.1]),
        &mask(4, 1, &[1, 0, 1, 0]),
    )
    .unwrap();
    assert_eq!(a, 0.75);
}

#[test]
fn auc_extremes() {
    let y = [1u8, 0, 0, 1, 1, 0];
    let s: Vec<f32> = y.iter().map(|&v| v as f32).collect();
    let inv: Vec<f32> = s.iter().map(|v| 1.0 - v).collect();
    assert_eq!(auc_from_pairs(&s, &y).unwrap(), 1.0);
    assert_eq!(auc_from_pairs(&inv, &y).unwrap(), 0.0);
    assert!(auc_from_pairs(&[0.5, 0.1], &[1, 1]).is_err());
}

proptest! {
    #[test]
    fn auc_invariant_under_monotone_maps(
        s in prop::collection::vec(0.0f32..1.0, 2..64),
        seed in any::<u64>(),
    ) {
        let mut rng = rng_for(seed, 0);
        let y: Vec<u8> = s.iter().map(|_| u8::from(rng.random_bool(0.5))).collect();
        prop_assume!(y.contains(&0) && y.contains(&1));
        let t: Vec<f32> = s.iter().map(|v| (3.0 * v).exp() * 0.1 + 2.0).collect();
        prop_assert_eq!(auc_from_pairs(&s, &y).unwrap(), auc_from_pairs(&t, &y).unwrap());
    }
}

#[test]
fn f1_cases() {
    let gt = mask(4, 1, &[1, 1, 1, 0]);
    // tp=2, fp=1, fn=1
    let s = map(4, 1, &[0.9, 0.6, 0.2, 0.7]);
    assert!((pixel_f1(&s, &gt, F1_THRESHOLD).unwrap() - 4.0 / 6.0).abs() < 1e-3);
    assert_eq!(pixel_f1(&gt.to_score_map(), &gt, 0.5).unwrap(), 1.0);
    assert_eq!(pixel_f1(&map(4, 1, &[0.0; 4]), &gt, 0.5).unwrap(), 0.0);
}

#[test]
fn accuracy_cases() {
    use Label::{Authentic as A, Forged as F};
    assert_eq!(image_accuracy(&[A, F], &[A, F]).unwrap(), 1.0);
    assert_eq!(image_accuracy(&[A, F], &[F, A]).unwrap(), 0.0);
    assert_eq!(image_accuracy(&[A, F, F, A], &[A, F, F, F]).unwrap(), 0.75);
    assert!(matches!(
        image_accuracy(&[A], &[A, F]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn localization_aggregates_skip_single_class() {
    let gt = mask(2, 2, &[1, 0, 0, 0]);
    let empty = mask(2, 2, &[0, 0, 0, 0]);
    let s = map(2, 2, &[0.9, 0.1, 0.2, 0.3]);
    let r = evaluate_localization([("a", &s, &gt), ("b", &s, &empty)]).unwrap();
    assert_eq!(r.skipped, vec!["b".to_string()]);
    assert_eq!(r.mean_auc, Some(1.0));
    assert!(r.pooled_auc.is_some());
}

const WORDS: [&str; 7] = ["the", "cat", "sat", "lay", "down", "mat", "on"];

fn random_text(rng: &mut impl Rng) -> String {
    let n = rng.random_range(1..=10);
    (0..n)
        .map(|_| {
            let w = WORDS[rng.random_range(0..WORDS.len())];
            if rng.random_bool(0.2) {
                w.to_uppercase()
            } else {
                w.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(if rng.random_bool(0.5) { " " } else { ", " })
}

fn check(p: Prf, (m, c, r): (usize, usize, usize)) {
    let (pp, rr, ff) = prf(m, c, r);
    assert_eq!((p.precision, p.recall, p.f1), (pp, rr, ff));
}

#[test]
fn rouge_matches_exhaustive_oracle() {
    let mut rng = rng_for(300, 0);
    for _ in 0..200 {
        let (c, r) = (random_text(&mut rng), random_text(&mut rng));
        let (ct, rt) = (tokens(&c), tokens(&r));
        assert_eq!(tokenize(&c), ct);
        let s = rouge(&c, &r).unwrap();
        check(s.rouge1, ngram_matches(&ct, &rt, 1));
        check(s.rouge2, ngram_matches(&ct, &rt, 2));
        let l = brute_lcs(&ct, &rt);
        assert_eq!(lcs_len(&ct, &rt), l);
        check(s.rouge_l, (l, ct.len(), rt.len()));
    }
}

#[test]
fn rouge_worked_example() {
    let s = rouge("the cat sat", "the cat lay down").unwrap();
    assert_eq!(s.rouge1.precision, 2.0 / 3.0);
    assert_eq!(s.rouge1.recall, 0.5);
    assert!((s.rouge1.f1 - 4.0 / 7.0).abs() < 1e-12);
    let same = rouge("A photo, of a cat", "a photo of a CAT").unwrap();
    assert_eq!(
        (same.rouge1.f1, same.rouge2.f1, same.rouge_l.f1),
        (1.0, 1.0, 1.0)
    );
    let disjoint = rouge("red fox", "blue whale").unwrap();
    assert_eq!(
        (disjoint.rouge1.f1, disjoint.rouge2.f1, disjoint.rouge_l.f1),
        (0.0, 0.0, 0.0)
    );
    assert!(matches!(rouge("...", "text"), Err(Error::Contract(_))));
}
