use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::ModelWeights;
use crate::error::{bail, Result};
use crate::numcore::Tensor;

/// AdamW hyperparameters plus the warmup share of the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    /// Fraction of steps spent ramping the learning rate up from zero.
    pub warmup_frac: f32,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_frac: 0.1,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            bail!(Parameter, "learning rate must be finite and non-negative, got {}", self.lr);
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            bail!(Parameter, "betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            bail!(Parameter, "eps must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            bail!(Parameter, "weight_decay must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            bail!(Parameter, "warmup_frac {} outside [0, 1]", self.warmup_frac);
        }
        Ok(())
    }

    /// Learning rate of 0-based `step` out of `total`: linear warmup over
    /// `ceil(warmup_frac·total)` steps, then linear decay towards zero.
    pub fn lr_at(&self, step: usize, total: usize) -> f32 {
        let warm = libm::ceil(self.warmup_frac as f64 * total as f64) as usize;
        if step < warm {
            self.lr * (step + 1) as f32 / warm as f32
        } else {
            let rest = total.saturating_sub(warm).max(1);
            self.lr * total.saturating_sub(step) as f32 / rest as f32
        }
    }
}

/// Adam moments per parameter, with a per-parameter decay switch.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub decay: Vec<bool>,
    /// Updates applied so far.
    pub step: u64,
}

impl OptimizerState {
    /// Zero moments for parameters of the given shapes.
    pub fn new(params: &[(&[usize], bool)]) -> Self {
        Self {
            m: params.iter().map(|(s, _)| Tensor::zeros(s)).collect(),
            v: params.iter().map(|(s, _)| Tensor::zeros(s)).collect(),
            decay: params.iter().map(|(_, d)| *d).collect(),
            step: 0,
        }
    }

    /// State for every tensor of `weights`, in manifest order; norm
    /// parameters and biases are exempt from decay.
    pub fn for_weights(weights: &ModelWeights<Tensor>) -> Self {
        let named = weights.named();
        let entries: Vec<(&[usize], bool)> = named
            .iter()
            .map(|(name, t)| (t.shape(), !ModelWeights::<Tensor>::is_no_decay(name)))
            .collect();
        Self::new(&entries)
    }
}

/// One decoupled-weight-decay Adam update with bias correction:
/// `p ← p − lr·(m̂/(√v̂ + ε) + λ·p)`, where `λ` is zero for exempt
/// parameters.
pub fn adamw_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut OptimizerState,
    hyper: &AdamWConfig,
    lr: f32,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        bail!(
            Dimension,
            "{} parameters, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.m.len()
        );
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            bail!(Dimension, "parameter {i}: shape {:?} vs gradient {:?}", p.shape(), g.shape());
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(hyper.beta1 as f64, t as f64);
    let bc2 = 1.0 - libm::pow(hyper.beta2 as f64, t as f64);
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    for (i, p) in params.iter_mut().enumerate() {
        let wd = if state.decay[i] { hyper.weight_decay } else { 0.0 };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((pj, &gj), mj), vj) in p.data_mut().iter_mut().zip(grads[i].data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mj = b1 * *mj + (1.0 - b1) * gj;
            *vj = b2 * *vj + (1.0 - b2) * gj * gj;
            let mhat = (*mj as f64 / bc1) as f32;
            let vhat = (*vj as f64 / bc2) as f32;
            *pj -= lr * (mhat / (libm::sqrtf(vhat) + hyper.eps) + wd * *pj);
        }
    }
    Ok(())
}
