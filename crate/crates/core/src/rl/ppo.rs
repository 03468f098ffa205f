//! Clipped-surrogate PPO update with manual gradients and Adam.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::rl::buffer::RolloutBuffer;
use crate::rl::gae;
use crate::rl::net::{Activations, PolicyParams};
use crate::rl::policy::{categorical_entropy, gaussian_entropy, gaussian_log_density, log_softmax};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub minibatches: usize,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub max_grad_norm: f64,
    pub num_envs: usize,
    pub epochs: usize,
    /// Agent decisions per worker per rollout.
    pub rollout_len: usize,
    pub hidden: usize,
    pub adam_eps: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lr: 3e-4,
            minibatches: 10,
            gae_lambda: 0.95,
            gamma: 0.99,
            max_grad_norm: 0.5,
            num_envs: 12,
            epochs: 4,
            rollout_len: 64,
            hidden: 64,
            adam_eps: 1e-5,
        }
    }
}

impl PpoConfig {
    /// Defaults for primitive mode with the discount tied to the episode's
    /// primitive budget.
    pub fn raps(high_level_horizon: u32) -> Result<Self> {
        Ok(Self {
            gamma: crate::pamdp::discount_for_horizon(high_level_horizon)?,
            rollout_len: 64,
            ..Self::default()
        })
    }

    pub fn raw() -> Self {
        Self {
            gamma: 0.99,
            rollout_len: 512,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip.is_nan() || self.clip <= 0.0 {
            bail!(Config, "clip must be positive");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            bail!(Config, "gae_lambda must lie in [0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            bail!(Config, "gamma must lie in (0, 1]");
        }
        if self.minibatches == 0 || self.num_envs == 0 || self.epochs == 0 || self.rollout_len == 0 || self.hidden == 0
        {
            bail!(
                Config,
                "minibatches, num_envs, epochs, rollout_len and hidden must be >= 1"
            );
        }
        if self.num_envs * self.rollout_len < self.minibatches {
            bail!(Config, "rollout smaller than the number of minibatches");
        }
        if !(self.lr > 0.0 && self.max_grad_norm > 0.0) {
            bail!(Config, "lr and max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// Loss terms of one minibatch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Reusable buffers for [`loss_and_grad`].
#[derive(Debug, Clone)]
pub struct Scratch {
    act: Activations,
    logp: Vec<f64>,
    d_logits: Vec<f64>,
    d_mean: Vec<f64>,
}

impl Scratch {
    pub fn new(params: &PolicyParams) -> Self {
        let s = params.shape();
        Self {
            act: params.activations(),
            logp: vec![0.0; s.num_primitives],
            d_logits: vec![0.0; s.num_primitives],
            d_mean: vec![0.0; s.arg_dim],
        }
    }
}

/// Slot offsets of each primitive's argument slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgSlices {
    offsets: Vec<usize>,
    dims: Vec<usize>,
}

impl ArgSlices {
    pub fn new(dims: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut at = 0;
        for d in dims {
            offsets.push(at);
            at += d;
        }
        Self {
            offsets,
            dims: dims.to_vec(),
        }
    }

    pub fn slice(&self, k: usize) -> core::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.dims[k]
    }
}

/// Minibatch view: sample indices plus per-sample advantage and return
/// targets aligned with the buffer.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub buffer: &'a RolloutBuffer,
    pub slices: &'a ArgSlices,
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
    pub indices: &'a [usize],
}

/// PPO loss of a minibatch:
/// `-mean(min(r A, clip(r) A)) - c_ent * mean(H) + c_v * mean((V - R)^2)`.
/// When `grad` is given it is overwritten with the gradient of that loss.
pub fn loss_and_grad(
    params: &PolicyParams,
    batch: Batch<'_>,
    config: &PpoConfig,
    scratch: &mut Scratch,
    mut grad: Option<&mut [f64]>,
) -> LossStats {
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let n = batch.indices.len() as f64;
    let log_std_range = params.log_std_range();
    let mut stats = LossStats::default();
    for &i in batch.indices {
        let obs = batch.buffer.obs(i);
        let k = batch.buffer.primitive(i);
        let u = batch.buffer.unit_args(i);
        let old_lp = batch.buffer.log_prob(i);
        let adv = batch.advantages[i];
        let ret = batch.returns[i];

        params.forward_policy(obs, &mut scratch.act);
        let v = params.forward_value(obs, &mut scratch.act);
        log_softmax(&scratch.act.logits, &mut scratch.logp);
        let h_cat = categorical_entropy(&scratch.logp);
        let slice = batch.slices.slice(k);
        let log_std = params.log_std();

        let mut new_lp = scratch.logp[k];
        let mut entropy = h_cat;
        for j in slice.clone() {
            new_lp += gaussian_log_density(u[j], scratch.act.mean[j], log_std[j]);
            entropy += gaussian_entropy(log_std[j]);
        }
        let ratio = libm::exp(new_lp - old_lp);
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(1.0 - config.clip, 1.0 + config.clip) * adv;
        let surr = surr1.min(surr2);
        let value_err = v - ret;

        stats.policy_loss -= surr / n;
        stats.entropy += entropy / n;
        stats.value_loss += value_err * value_err / n;
        stats.approx_kl += (old_lp - new_lp) / n;
        if libm::fabs(ratio - 1.0) > config.clip {
            stats.clip_fraction += 1.0 / n;
        }

        let Some(g) = grad.as_deref_mut() else {
            continue;
        };
        // d loss / d new_lp through the active branch of the min
        let d_lp = if surr1 <= surr2 { -ratio * adv / n } else { 0.0 };
        let ent_w = config.entropy_coef / n;
        for (j, (dl, lp)) in scratch.d_logits.iter_mut().zip(&scratch.logp).enumerate() {
            let p = libm::exp(*lp);
            let onehot = if j == k { 1.0 } else { 0.0 };
            // -c_ent * dH/dz_j with dH/dz_j = -p_j (log p_j + H)
            *dl = d_lp * (onehot - p) + ent_w * p * (lp + h_cat);
        }
        scratch.d_mean.iter_mut().for_each(|d| *d = 0.0);
        for j in slice {
            let var = libm::exp(2.0 * log_std[j]);
            let diff = u[j] - scratch.act.mean[j];
            scratch.d_mean[j] = d_lp * diff / var;
            g[log_std_range.start + j] += d_lp * (diff * diff / var - 1.0) - ent_w;
        }
        let d_value = 2.0 * config.value_coef * value_err / n;
        params.backward(obs, &mut scratch.act, &scratch.d_logits, &scratch.d_mean, d_value, g);
    }
    stats.loss = stats.policy_loss - config.entropy_coef * stats.entropy + config.value_coef * stats.value_loss;
    stats
}

/// Scale `grad` so that its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= self.lr * mhat / (libm::sqrt(vhat) + self.eps);
        }
    }
}

/// One pass of PPO epochs over a rollout, advanced one gradient step at a
/// time so the caller can interleave evaluation and budget checks.
#[derive(Debug, Clone)]
pub struct PpoUpdate {
    slices: ArgSlices,
    advantages: Vec<f64>,
    returns: Vec<f64>,
    order: Vec<usize>,
    bounds: Vec<usize>,
    epoch: usize,
    minibatch: usize,
    epochs: usize,
    grad: Vec<f64>,
    scratch: Scratch,
}

impl PpoUpdate {
    pub fn new<R: Rng + ?Sized>(
        params: &PolicyParams,
        buffer: &RolloutBuffer,
        arg_dims: &[usize],
        config: &PpoConfig,
        rng: &mut R,
    ) -> Self {
        let (mut advantages, returns) = buffer.advantages(config.gamma, config.gae_lambda);
        gae::normalize(&mut advantages);
        let n = buffer.len();
        let mut order = Vec::with_capacity(n * config.epochs);
        for _ in 0..config.epochs {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            order.extend(perm);
        }
        let m = config.minibatches.min(n.max(1));
        let bounds = (0..=m).map(|b| b * n / m).collect();
        Self {
            slices: ArgSlices::new(arg_dims),
            advantages,
            returns,
            order,
            bounds,
            epoch: 0,
            minibatch: 0,
            epochs: config.epochs,
            grad: vec![0.0; params.len()],
            scratch: Scratch::new(params),
        }
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * (self.bounds.len() - 1)
    }

    /// Apply the next minibatch step. `Ok(None)` once every epoch is done.
    pub fn step(
        &mut self,
        params: &mut PolicyParams,
        adam: &mut Adam,
        buffer: &RolloutBuffer,
        config: &PpoConfig,
    ) -> Result<Option<LossStats>> {
        if self.epoch >= self.epochs {
            return Ok(None);
        }
        let n = buffer.len();
        let base = self.epoch * n;
        let idx = &self.order[base + self.bounds[self.minibatch]..base + self.bounds[self.minibatch + 1]];
        let batch = Batch {
            buffer,
            slices: &self.slices,
            advantages: &self.advantages,
            returns: &self.returns,
            indices: idx,
        };
        let mut stats = loss_and_grad(params, batch, config, &mut self.scratch, Some(&mut self.grad));
        if !stats.loss.is_finite() || self.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite PPO loss: {stats:?}")));
        }
        stats.grad_norm = clip_grad_norm(&mut self.grad, config.max_grad_norm);
        adam.step(params.as_mut_slice(), &self.grad);
        params.clamp_log_std();
        if !params.is_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after update: {stats:?}")));
        }
        self.minibatch += 1;
        if self.minibatch + 1 >= self.bounds.len() {
            self.minibatch = 0;
            self.epoch += 1;
        }
        Ok(Some(stats))
    }
}

/// Mean of per-step statistics over a full update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub steps: usize,
    pub mean: LossStats,
}

impl UpdateDiagnostics {
    pub fn push(&mut self, s: &LossStats) {
        self.steps += 1;
        let w = 1.0 / self.steps as f64;
        let m = &mut self.mean;
        m.loss += (s.loss - m.loss) * w;
        m.policy_loss += (s.policy_loss - m.policy_loss) * w;
        m.value_loss += (s.value_loss - m.value_loss) * w;
        m.entropy += (s.entropy - m.entropy) * w;
        m.approx_kl += (s.approx_kl - m.approx_kl) * w;
        m.clip_fraction += (s.clip_fraction - m.clip_fraction) * w;
        m.grad_norm += (s.grad_norm - m.grad_norm) * w;
    }
}

/// Run every epoch and minibatch of one PPO update.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    arg_dims: &[usize],
    config: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateDiagnostics> {
    let mut update = PpoUpdate::new(params, buffer, arg_dims, config, rng);
    let mut diag = UpdateDiagnostics::default();
    while let Some(s) = update.step(params, adam, buffer, config)? {
        diag.push(&s);
    }
    Ok(diag)
}
