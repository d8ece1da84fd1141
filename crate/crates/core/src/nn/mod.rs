//! Minimal differentiable kernel: tensors, a reverse-mode tape, parameter
//! storage, layers, Adam, checkpoints and a finite-difference checker.

pub mod checkpoint;
mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{
    grad_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck, ProbeMode,
    DEFAULT_STEP, DEFAULT_TOLERANCE,
};
pub use graph::{Gradients, Graph, Var};
pub use optim::Adam;
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

use crate::error::{shape_err, Result};

/// Softmax along `axis` of a tensor of any rank.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(shape_err!("softmax axis {axis} out of range for {shape:?}"));
    }
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = x.data().to_vec();
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let max = (0..len)
                .map(|j| out[at(j)])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..len {
                let e = (out[at(j)] - max).exp();
                out[at(j)] = e;
                sum += e;
            }
            for j in 0..len {
                out[at(j)] /= sum;
            }
        }
    }
    Tensor::new(shape, out)
}

/// Output and attention weights of `softmax(Q Kᵀ / √d_e) V`.
pub struct Attention {
    pub output: Tensor,
    pub weights: Tensor,
}

pub fn scaled_dot_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    key_dim: usize,
) -> Result<Attention> {
    let (_, dq) = q.dims2()?;
    let (pk, dk) = k.dims2()?;
    let (pv, _) = v.dims2()?;
    if dq != dk || pk != pv {
        return Err(shape_err!(
            "attention Q {:?}, K {:?}, V {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        ));
    }
    let mut g = Graph::new();
    let (qv, kv, vv) = (g.input(q.clone()), g.input(k.clone()), g.input(v.clone()));
    let scores = g.matmul_nt(qv, kv)?;
    let scaled = g.scale(scores, 1.0 / (key_dim as f64).sqrt());
    let w = g.softmax_rows(scaled)?;
    let out = g.matmul(w, vv)?;
    Ok(Attention {
        output: g.value(out).clone(),
        weights: g.value(w).clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_cases() {
        let s = softmax(&Tensor::new(&[2], vec![0.0, 0.0]).unwrap(), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        for x in [-30.0, 0.0, 7.5, 1e3] {
            let s = softmax(&Tensor::new(&[3], vec![x; 3]).unwrap(), 0).unwrap();
            for v in s.data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_matches_exp_normalize() {
        let s = softmax(&Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap(), 0).unwrap();
        let z: f64 = (1..=3).map(|i| (i as f64).exp()).sum();
        for (i, v) in s.data().iter().enumerate() {
            assert!((v - ((i + 1) as f64).exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_axis_errors_and_columns() {
        let t = Tensor::matrix(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(softmax(&t, 2).is_err());
        let c = softmax(&t, 0).unwrap();
        assert!((c.get2(0, 0) + c.get2(1, 0) - 1.0).abs() < 1e-15);
        assert!((c.get2(0, 0) - c.get2(0, 1)).abs() < 1e-15);
    }

    #[test]
    fn attention_single_key_returns_value() {
        let q = Tensor::matrix(3, 2, vec![0.3, -1.0, 2.0, 0.1, 9.0, 4.0]).unwrap();
        let k = Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap();
        let v = Tensor::matrix(1, 3, vec![1.5, -2.0, 0.25]).unwrap();
        let a = scaled_dot_attention(&q, &k, &v, 2).unwrap();
        for r in 0..3 {
            assert_eq!(a.output.row(r), v.row(0));
        }
    }

    #[test]
    fn attention_identity_values_expose_weights() {
        let q = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -0.5, 0.0, 1.0]).unwrap();
        let k = Tensor::matrix(3, 3, vec![1.0, 0.0, 0.5, 0.2, 0.3, 0.0, -1.0, 1.0, 1.0]).unwrap();
        let a = scaled_dot_attention(&q, &k, &Tensor::identity(3), 3).unwrap();
        assert!(a.output.max_abs_diff(&a.weights) == 0.0);
    }

    #[test]
    fn attention_shape_mismatch() {
        let q = Tensor::zeros(&[2, 3]);
        let k = Tensor::zeros(&[2, 4]);
        assert!(scaled_dot_attention(&q, &k, &Tensor::zeros(&[2, 1]), 3).is_err());
    }
}
