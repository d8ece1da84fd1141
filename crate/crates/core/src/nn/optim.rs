use std::collections::HashMap;

use super::{Gradients, ParamId, ParamStore, Tensor};

/// Adam with bias correction. Frozen parameters are never touched, even if a
/// gradient for them is supplied.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u32,
    moments: HashMap<ParamId, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (id, g) in grads.iter() {
            if !store.get(id).trainable {
                continue;
            }
            let (m, v) = self
                .moments
                .entry(id)
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let p = store.tensor_mut(id).data_mut();
            for (((p, g), m), v) in p
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Graph;

    #[test]
    fn minimizes_quadratic_and_skips_frozen() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::new(&[2], vec![3.0, -2.0]).unwrap(), true);
        let y = store.add("y", Tensor::new(&[1], vec![5.0]).unwrap(), false);
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let mut g = Graph::new();
            let xv = g.param(&store, x);
            let yv = g.param(&store, y);
            let sq = g.mul(xv, xv).unwrap();
            let s = g.sum(sq);
            let ys = g.sum(yv);
            let l = g.add(s, ys).unwrap();
            g.backward(l).unwrap();
            let mut grads = g.param_grads();
            // even a stray gradient must not move a frozen parameter
            grads.accumulate(&{
                let mut gg = Graph::new();
                let mut s2 = store.clone();
                s2.set_trainable(y, true);
                let yv = gg.param(&s2, y);
                let l = gg.sum(yv);
                gg.backward(l).unwrap();
                gg.param_grads()
            });
            opt.step(&mut store, &grads);
        }
        assert!(store.tensor(x).norm() < 1e-2);
        assert_eq!(store.tensor(y).data(), &[5.0]);
    }
}
