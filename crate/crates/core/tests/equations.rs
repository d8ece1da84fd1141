mod common;

use common::{cross_modal, fusion, rand_mat, Mat};
use fgl_core::expert::{attention_fusion, cross_modal_reasoning};
use fgl_core::nn::{scaled_dot_attention, softmax, Tensor};
use fgl_core::seed::rng_for;
use rand::Rng;

fn t(m: &Mat) -> Tensor {
    Tensor::from_rows(m).unwrap()
}

fn max_diff(a: &Tensor, b: &Mat) -> f64 {
    let flat: Vec<f64> = b.iter().flatten().copied().collect();
    a.data()
        .iter()
        .zip(&flat)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn row_sum_err(m: &Tensor) -> f64 {
    (0..m.rows())
        .map(|r| (m.row(r).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

#[test]
fn cross_modal_matches_oracle() {
    let mut rng = rng_for(101, 0);
    for _ in 0..100 {
        let (p, d, s) = (
            rng.random_range(1..20),
            rng.random_range(1..12),
            rng.random_range(1..5),
        );
        let stages: Vec<Mat> = (0..s).map(|_| rand_mat(&mut rng, p, d, 3.0)).collect();
        let text = rand_mat(&mut rng, 2, d, 3.0);
        let got =
            cross_modal_reasoning(&stages.iter().map(t).collect::<Vec<_>>(), &t(&text)).unwrap();
        assert!(max_diff(&got.f_cross, &cross_modal(&stages, &text)) <= 1e-6);
        assert!(row_sum_err(&got.f_cross) <= 1e-6);
    }
}

#[test]
fn fusion_matches_oracle() {
    let mut rng = rng_for(102, 0);
    for _ in 0..100 {
        let (p, d, s) = (
            rng.random_range(1..20),
            rng.random_range(1..12),
            rng.random_range(1..5),
        );
        let q: Vec<Mat> = (0..s).map(|_| rand_mat(&mut rng, p, d, 2.0)).collect();
        let kv: Vec<Mat> = (0..s).map(|_| rand_mat(&mut rng, p, d, 2.0)).collect();
        let got = attention_fusion(
            &q.iter().map(t).collect::<Vec<_>>(),
            &kv.iter().map(t).collect::<Vec<_>>(),
            d,
        )
        .unwrap();
        let (want, alphas) = fusion(&q, &kv, d);
        assert!(max_diff(&got.f_enhanced, &want) <= 1e-6);
        for (a, w) in got.alphas.iter().zip(&alphas) {
            assert!(max_diff(a, w) <= 1e-6);
            assert!(row_sum_err(a) <= 1e-6);
        }
    }
}

#[test]
fn softmax_and_attention_rows_sum_to_one() {
    let mut rng = rng_for(103, 0);
    for _ in 0..100 {
        let (r, c) = (rng.random_range(1..16), rng.random_range(1..16));
        let x = t(&rand_mat(&mut rng, r, c, 50.0));
        assert!(row_sum_err(&softmax(&x, 1).unwrap()) <= 1e-6);
        let col = softmax(&x, 0).unwrap().transpose().unwrap();
        assert!(row_sum_err(&col) <= 1e-6);
        let d = rng.random_range(1..8);
        let q = t(&rand_mat(&mut rng, r, d, 4.0));
        let k = t(&rand_mat(&mut rng, c, d, 4.0));
        let v = t(&rand_mat(&mut rng, c, 3, 4.0));
        let att = scaled_dot_attention(&q, &k, &v, d).unwrap();
        assert!(row_sum_err(&att.weights) <= 1e-6);
    }
}

#[test]
fn softmax_stable_for_large_logits() {
    let x = Tensor::from_rows(&[vec![1000.0, 1000.0, -1000.0]]).unwrap();
    let s = softmax(&x, 1).unwrap();
    assert!((s.data()[0] - 0.5).abs() < 1e-12);
    assert_eq!(s.data()[2], 0.0);
}

#[test]
fn cross_modal_argmax_shift_invariant() {
    // Adding the same vector to both text rows shifts both logits of a
    // patch by the same amount, which softmax ignores.
    let mut rng = rng_for(104, 0);
    for _ in 0..20 {
        let stages: Vec<Mat> = (0..4).map(|_| rand_mat(&mut rng, 16, 6, 1.0)).collect();
        let text = rand_mat(&mut rng, 2, 6, 1.0);
        let a =
            cross_modal_reasoning(&stages.iter().map(t).collect::<Vec<_>>(), &t(&text)).unwrap();
        let u = rand_mat(&mut rng, 1, 6, 5.0).remove(0);
        let shifted: Mat = text
            .iter()
            .map(|r| r.iter().zip(&u).map(|(v, du)| v + du).collect())
            .collect();
        let b =
            cross_modal_reasoning(&stages.iter().map(t).collect::<Vec<_>>(), &t(&shifted)).unwrap();
        for p in 0..16 {
            let arg = |m: &Tensor| usize::from(m.get2(p, 1) > m.get2(p, 0));
            assert_eq!(arg(&a.f_cross), arg(&b.f_cross));
            assert!((a.f_cross.get2(p, 1) - b.f_cross.get2(p, 1)).abs() < 1e-9);
        }
    }
}
