//! Hybrid categorical x diagonal-Gaussian policy.
//!
//! The Gaussian lives in a unit space: a sample `u` for argument `j` maps to
//! the primitive's search space by clipping `u` to `[-1, 1]` and scaling
//! affinely onto `[lo_j, hi_j]`. Log-probabilities and entropies are taken
//! in the unit space and only over the chosen primitive's slice.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{bail, Result};
use crate::pamdp::{HybridAction, HybridActionLayout};
use crate::rl::net::{Activations, PolicyParams};

/// `0.5 * ln(2 pi)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-softmax of `logits` into `out`.
pub fn log_softmax(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + libm::log(logits.iter().map(|l| libm::exp(l - m)).sum::<f64>());
    for (o, l) in out.iter_mut().zip(logits) {
        *o = l - lse;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    log_softmax(logits, &mut out);
    out.iter_mut().for_each(|v| *v = libm::exp(*v));
    out
}

/// Entropy of the categorical with log-probabilities `logp`.
pub fn categorical_entropy(logp: &[f64]) -> f64 {
    -logp.iter().map(|l| libm::exp(*l) * l).sum::<f64>()
}

/// Log-density of `x` under `N(mean, exp(log_std)^2)`.
pub fn gaussian_log_density(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) / libm::exp(log_std);
    -0.5 * z * z - log_std - HALF_LN_2PI
}

pub fn gaussian_entropy(log_std: f64) -> f64 {
    0.5 + HALF_LN_2PI + log_std
}

/// Lowest index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Map unit-space samples onto argument ranges.
pub fn unit_to_args(unit: &[f64], bounds: &[[f64; 2]]) -> Vec<f64> {
    unit.iter()
        .zip(bounds)
        .map(|(u, b)| b[0] + 0.5 * (u.clamp(-1.0, 1.0) + 1.0) * (b[1] - b[0]))
        .collect()
}

/// A sampled hybrid action together with what PPO needs to re-score it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub action: HybridAction,
    pub primitive: usize,
    /// Raw Gaussian sample for every argument (unit space, unclipped).
    pub unit_args: Vec<f64>,
    pub log_prob: f64,
    pub entropy: f64,
}

/// Stateless sampler bound to one parameter set; owns its scratch buffers.
#[derive(Debug, Clone)]
pub struct Policy<'a> {
    params: &'a PolicyParams,
    layout: &'a HybridActionLayout,
    bounds: &'a [[f64; 2]],
    act: Activations,
    logp: Vec<f64>,
}

impl<'a> Policy<'a> {
    pub fn new(params: &'a PolicyParams, layout: &'a HybridActionLayout, bounds: &'a [[f64; 2]]) -> Self {
        let shape = params.shape();
        assert_eq!(shape.num_primitives, layout.num_primitives());
        assert_eq!(shape.arg_dim, layout.total_arg_dim());
        assert_eq!(bounds.len(), layout.total_arg_dim());
        Self {
            params,
            layout,
            bounds,
            act: params.activations(),
            logp: vec![0.0; layout.num_primitives()],
        }
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.params.shape().obs_dim {
            bail!(
                Input,
                "observation has {} entries, expected {}",
                obs.len(),
                self.params.shape().obs_dim
            );
        }
        if obs.iter().any(|v| !v.is_finite()) {
            bail!(Input, "observation contains a non-finite entry");
        }
        Ok(())
    }

    /// Primitive probabilities at `obs`.
    pub fn probabilities(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        self.params.forward_policy(obs, &mut self.act);
        Ok(softmax(&self.act.logits))
    }

    /// Sample a primitive from the categorical, then arguments for every
    /// primitive from the Gaussian.
    pub fn sample<R: Rng + ?Sized>(&mut self, obs: &[f64], rng: &mut R) -> Result<SampledAction> {
        self.check_obs(obs)?;
        self.params.forward_policy(obs, &mut self.act);
        log_softmax(&self.act.logits, &mut self.logp);
        let u: f64 = rng.random();
        let mut k = self.logp.len() - 1;
        let mut acc = 0.0;
        for (i, l) in self.logp.iter().enumerate() {
            acc += libm::exp(*l);
            if u < acc {
                k = i;
                break;
            }
        }
        let log_std = self.params.log_std();
        let unit_args: Vec<f64> = self
            .act
            .mean
            .iter()
            .zip(log_std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + libm::exp(*s) * z
            })
            .collect();
        let (log_prob, entropy) = self.score_current(k, &unit_args);
        Ok(SampledAction {
            action: self.to_action(k, &unit_args),
            primitive: k,
            unit_args,
            log_prob,
            entropy,
        })
    }

    /// Greedy action: most probable primitive (lowest index on ties) with
    /// the Gaussian means as arguments.
    pub fn deterministic(&mut self, obs: &[f64]) -> Result<HybridAction> {
        self.check_obs(obs)?;
        self.params.forward_policy(obs, &mut self.act);
        let k = argmax(&self.act.logits);
        let mean = self.act.mean.clone();
        Ok(self.to_action(k, &mean))
    }

    /// Log-probability and entropy of `(k, unit_args)` at `obs`.
    pub fn score(&mut self, obs: &[f64], k: usize, unit_args: &[f64]) -> Result<(f64, f64)> {
        self.check_obs(obs)?;
        self.params.forward_policy(obs, &mut self.act);
        log_softmax(&self.act.logits, &mut self.logp);
        Ok(self.score_current(k, unit_args))
    }

    fn score_current(&self, k: usize, unit_args: &[f64]) -> (f64, f64) {
        let slice = self.layout.slice(k);
        let log_std = self.params.log_std();
        let mut log_prob = self.logp[k];
        let mut entropy = categorical_entropy(&self.logp);
        for j in slice {
            log_prob += gaussian_log_density(unit_args[j], self.act.mean[j], log_std[j]);
            entropy += gaussian_entropy(log_std[j]);
        }
        (log_prob, entropy)
    }

    fn to_action(&self, k: usize, unit_args: &[f64]) -> HybridAction {
        let mut one_hot = vec![0.0; self.layout.num_primitives()];
        one_hot[k] = 1.0;
        HybridAction {
            one_hot,
            full_args: unit_to_args(unit_args, self.bounds),
        }
    }

    pub fn value(&mut self, obs: &[f64]) -> f64 {
        self.params.forward_value(obs, &mut self.act)
    }
}

/// `ln N(x; mean, std)` written out from the density formula; used by tests
/// as an independent reference.
pub fn reference_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let d = x - mean;
    libm::log(libm::exp(-d * d / (2.0 * std * std)) / (std * libm::sqrt(2.0 * PI)))
}
