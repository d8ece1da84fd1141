//! Central-difference verification of analytic parameter gradients.
//!
//! Two probing modes are available. `Coordinates` perturbs every scalar of
//! every trainable parameter on its own (exhaustive, fine for small blocks).
//! `Directional` perturbs each parameter tensor along one seeded random unit
//! direction scaled by the tensor's RMS, so the step `h` is taken in
//! normalized parameter units; the analytic side is then `∇L · δ`. This keeps
//! a full-model check to two forward passes per tensor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
const DENOMINATOR_FLOOR: f64 = 1e-8;
const RMS_FLOOR: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeMode {
    Coordinates,
    Directional,
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub mode: ProbeMode,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            mode: ProbeMode::Directional,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub probes: usize,
    /// Largest relative error over this parameter's probes.
    pub relative_error: f64,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub per_parameter: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.per_parameter
            .iter()
            .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

fn eval_loss<F>(store: &ParamStore, loss_fn: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let l = loss_fn(&mut g, store)?;
    let t = g.value(l);
    if t.len() != 1 {
        return Err(Error::Contract(format!(
            "gradient check needs a scalar loss, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.data()[0])
}

/// Central difference of `L(θ + ε δ)` at ε = 0.
fn directional_fd<F>(
    store: &mut ParamStore,
    id: ParamId,
    delta: &[f64],
    h: f64,
    loss_fn: &F,
) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let original = store.tensor(id).clone();
    let shifted = |sign: f64| {
        let data = original
            .data()
            .iter()
            .zip(delta)
            .map(|(p, d)| p + sign * h * d)
            .collect();
        Tensor::new(original.shape(), data).unwrap()
    };
    *store.tensor_mut(id) = shifted(1.0);
    let plus = eval_loss(store, loss_fn);
    *store.tensor_mut(id) = shifted(-1.0);
    let minus = eval_loss(store, loss_fn);
    *store.tensor_mut(id) = original;
    Ok((plus? - minus?) / (2.0 * h))
}

/// Compare analytic and central-difference gradients for every trainable
/// parameter reachable from `loss_fn`. Parameters are restored bit-exactly.
pub fn grad_check<F>(
    store: &mut ParamStore,
    loss_fn: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    if g.value(loss).len() != 1 {
        return Err(Error::Contract(format!(
            "gradient check needs a scalar loss, got shape {:?}",
            g.value(loss).shape()
        )));
    }
    g.backward(loss)?;
    let grads = g.param_grads();
    drop(g);

    let mut per_parameter = Vec::new();
    for id in store.trainable_ids() {
        let analytic_grad = grads
            .get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.tensor(id).shape()));
        let name = store.get(id).name.clone();
        let n = analytic_grad.len();
        let mut check = ParamCheck {
            name,
            probes: 0,
            relative_error: 0.0,
            analytic: 0.0,
            numeric: 0.0,
        };
        let mut record = |a: f64, num: f64| {
            let e = relative_error(a, num);
            check.probes += 1;
            if e >= check.relative_error {
                check.relative_error = e;
                check.analytic = a;
                check.numeric = num;
            }
        };
        match opts.mode {
            ProbeMode::Coordinates => {
                for i in 0..n {
                    let mut delta = vec![0.0; n];
                    delta[i] = 1.0;
                    let num = directional_fd(store, id, &delta, opts.step, &loss_fn)?;
                    record(analytic_grad.data()[i], num);
                }
            }
            ProbeMode::Directional => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, id.0 as u64));
                let mut u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rms = (store.tensor(id).norm() / (n as f64).sqrt()).max(RMS_FLOOR);
                for v in &mut u {
                    *v *= rms / norm;
                }
                let a: f64 = analytic_grad
                    .data()
                    .iter()
                    .zip(&u)
                    .map(|(g, d)| g * d)
                    .sum();
                let num = directional_fd(store, id, &u, opts.step, &loss_fn)?;
                record(a, num);
            }
        }
        per_parameter.push(check);
    }
    let max_relative_error = per_parameter
        .iter()
        .map(|c| c.relative_error)
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        tolerance: opts.tolerance,
        per_parameter,
    })
}
