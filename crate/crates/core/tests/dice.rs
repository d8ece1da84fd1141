mod common;

use fgl_core::domain::{BinaryMask, ScoreMap};
use fgl_core::expert::{dice_loss, dice_loss_graph, DICE_SMOOTHING};
use fgl_core::nn::{Graph, Tensor};
use fgl_core::seed::rng_for;
use proptest::prelude::*;
use rand::Rng;

fn loss(p: &[f64], y: &[f64]) -> f64 {
    let mut g = Graph::new();
    let v = g.input(Tensor::new(&[1, 1, p.len()], p.to_vec()).unwrap());
    let l = dice_loss_graph(
        &mut g,
        v,
        &Tensor::new(&[1, 1, y.len()], y.to_vec()).unwrap(),
    )
    .unwrap();
    g.value(l).data()[0]
}

#[test]
fn smoothing_is_one() {
    assert_eq!(DICE_SMOOTHING, 1.0);
}

#[test]
fn perfect_prediction_is_exactly_zero() {
    let mut rng = rng_for(5, 0);
    for n in 1..200 {
        let y: Vec<f64> = (0..n)
            .map(|_| f64::from(u8::from(rng.random_bool(0.3))))
            .collect();
        assert_eq!(loss(&y, &y), 0.0);
    }
    assert_eq!(loss(&[0.0; 9], &[0.0; 9]), 0.0);
}

#[test]
fn empty_prediction_on_four_positives() {
    assert!((loss(&[0.0; 4], &[1.0; 4]) - 0.8).abs() < 1e-15);
}

#[test]
fn bounded_on_random_pairs() {
    let mut rng = rng_for(6, 0);
    for _ in 0..1000 {
        let n = rng.random_range(1..128);
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n)
            .map(|_| f64::from(u8::from(rng.random_bool(0.5))))
            .collect();
        let l = loss(&p, &y);
        assert!((0.0..1.0).contains(&l), "{l}");
        assert!((l - common::dice(&p, &y)).abs() < 1e-12);
    }
}

#[test]
fn score_map_entry_point() {
    let gt = BinaryMask::from_fn(8, 8, |x, _| x < 3);
    assert_eq!(dice_loss(&gt.to_score_map(), &gt).unwrap(), 0.0);
    let bad = ScoreMap::uniform(4, 4, 0.5).unwrap();
    assert!(dice_loss(&bad, &gt).is_err());
}

proptest! {
    #[test]
    fn more_overlap_never_hurts(n in 2usize..64, k in 1usize..64) {
        let k = k.min(n);
        let y: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i < k))).collect();
        let mut p = vec![0.0; n];
        let mut prev = loss(&p, &y);
        for i in 0..k {
            p[i] = 1.0;
            let cur = loss(&p, &y);
            prop_assert!(cur <= prev);
            prev = cur;
        }
        prop_assert_eq!(prev, 0.0);
    }
}
