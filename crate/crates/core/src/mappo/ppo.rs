//! PPO pieces: generalised advantage estimation, the clipped surrogate, the
//! actor and critic losses with their exact gradients, and Adam.

use alloc::vec;
use alloc::vec::Vec;

use super::mlp::{log_softmax, ForwardCache, Mlp};
use crate::math;
use crate::Result;

/// How a trajectory continues after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepEnd {
    /// The next entry in the sequence is the next step.
    Continue,
    /// The episode ended in an absorbing state; no bootstrap.
    Terminal,
    /// The episode was cut off; bootstrap from this value of the next state.
    Truncated(f64),
}

/// GAE(gamma, lambda). Returns `(advantages, returns)` with
/// `returns = advantages + values`.
///
/// The final entry must not be [`StepEnd::Continue`]; it is treated as
/// `Truncated(0.0)` if it is.
pub fn advantages(
    rewards: &[f64],
    values: &[f64],
    ends: &[StepEnd],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && ends.len() == n, "misaligned GAE inputs");
    let mut adv = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let (next_value, cont) = match ends[t] {
            StepEnd::Continue if t + 1 < n => (values[t + 1], 1.0),
            StepEnd::Continue => (0.0, 0.0),
            StepEnd::Terminal => (0.0, 0.0),
            StepEnd::Truncated(v) => (v, 0.0),
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        carry = delta + gamma * lambda * cont * carry;
        adv[t] = carry;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Mean over the batch of `min(r A, clip(r, 1-eps, 1+eps) A)` with
/// `r = exp(logp_new - logp_old)`.
pub fn ppo_surrogate(logp_new: &[f64], logp_old: &[f64], adv: &[f64], clip_eps: f64) -> f64 {
    let n = logp_new.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = (0..n)
        .map(|i| {
            let ratio = math::exp(logp_new[i] - logp_old[i]);
            clipped_term(ratio, adv[i], clip_eps)
        })
        .sum();
    sum / n as f64
}

fn clipped_term(ratio: f64, adv: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * adv).min(clipped * adv)
}

/// `d/d ratio` of the clipped term: `A` while the unclipped branch is the
/// minimum, 0 once the clip binds.
fn clipped_term_slope(ratio: f64, adv: f64, clip_eps: f64) -> f64 {
    let active = if adv >= 0.0 { ratio < 1.0 + clip_eps } else { ratio > 1.0 - clip_eps };
    if active {
        adv
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PolicySample<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub logp_old: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicyLoss {
    /// `-(surrogate + entropy_coef * entropy)`, the minimised quantity.
    pub loss: f64,
    pub surrogate: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Actor loss over a batch; if `grad` is given, its exact gradient is
/// accumulated into it.
pub fn policy_loss(
    actor: &Mlp,
    batch: &[PolicySample<'_>],
    clip_eps: f64,
    entropy_coef: f64,
    mut grad: Option<&mut [f64]>,
) -> Result<PolicyLoss> {
    let n = batch.len().max(1) as f64;
    let mut cache = ForwardCache::default();
    let mut out = PolicyLoss::default();
    let mut d_logits = Vec::new();
    for s in batch {
        actor.forward(s.state, &mut cache)?;
        let logp = log_softmax(cache.output());
        let probs: Vec<f64> = logp.iter().map(|l| math::exp(*l)).collect();
        let entropy: f64 = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        let log_ratio = logp[s.action] - s.logp_old;
        let ratio = math::exp(log_ratio);
        out.surrogate += clipped_term(ratio, s.advantage, clip_eps);
        out.entropy += entropy;
        out.approx_kl += (ratio - 1.0) - log_ratio;
        if (ratio - 1.0).abs() > clip_eps {
            out.clip_fraction += 1.0;
        }
        if let Some(g) = grad.as_deref_mut() {
            // dL/dlogp_a = -slope * ratio; dlogp_a/dz_j = [j == a] - p_j
            // dH/dz_j = -p_j (log p_j + H)
            let k = -clipped_term_slope(ratio, s.advantage, clip_eps) * ratio;
            d_logits.clear();
            d_logits.extend(probs.iter().zip(&logp).enumerate().map(|(j, (p, l))| {
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                let d_surr = k * (onehot - p);
                let d_ent = entropy_coef * p * (l + entropy);
                (d_surr + d_ent) / n
            }));
            actor.backward(&cache, &d_logits, g);
        }
    }
    out.surrogate /= n;
    out.entropy /= n;
    out.clip_fraction /= n;
    out.approx_kl /= n;
    out.loss = -(out.surrogate + entropy_coef * out.entropy);
    Ok(out)
}

/// `value_coef * mean((V(s) - R)^2)`; accumulates its gradient into `grad`
/// when given.
pub fn value_loss(
    critic: &Mlp,
    states: &[&[f64]],
    returns: &[f64],
    value_coef: f64,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    let n = states.len().max(1) as f64;
    let mut cache = ForwardCache::default();
    let mut loss = 0.0;
    for (s, r) in states.iter().zip(returns) {
        critic.forward(s, &mut cache)?;
        let err = cache.output()[0] - r;
        loss += err * err;
        if let Some(g) = grad.as_deref_mut() {
            critic.backward(&cache, &[2.0 * value_coef * err / n], g);
        }
    }
    Ok(value_coef * loss / n)
}

/// Adaptive-moment gradient descent.
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
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - math::powf(self.beta1, t);
        let bc2 = 1.0 - math::powf(self.beta2, t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (math::sqrt(v_hat) + self.eps);
        }
    }
}

/// Scales `grad` down so its L2 norm is at most `max_norm`; returns the
/// original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = math::sqrt(grad.iter().map(|g| g * g).sum());
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_single_terminal_step() {
        let (a, r) = advantages(&[1.0], &[0.0], &[StepEnd::Terminal], 0.99, 0.95);
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn gae_lambda_zero_is_one_step_td() {
        let rewards = [0.5, 1.0, 0.0, 2.0];
        let values = [0.1, 0.2, 0.3, 0.4];
        let ends = [StepEnd::Continue, StepEnd::Continue, StepEnd::Continue, StepEnd::Truncated(0.7)];
        let (a, _) = advantages(&rewards, &values, &ends, 0.9, 0.0);
        for t in 0..4 {
            let next = if t + 1 < 4 { values[t + 1] } else { 0.7 };
            assert!((a[t] - (rewards[t] + 0.9 * next - values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn surrogate_examples() {
        let ln = math::ln;
        assert!((ppo_surrogate(&[0.0, 0.0], &[0.0, 0.0], &[1.0, -3.0], 0.2) + 1.0).abs() < 1e-15);
        assert!((ppo_surrogate(&[ln(1.5)], &[0.0], &[1.0], 0.2) - 1.2).abs() < 1e-12);
        assert!((ppo_surrogate(&[ln(0.5)], &[0.0], &[-1.0], 0.2) + 0.8).abs() < 1e-12);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = vec![1.0, -1.0];
        let mut opt = Adam::new(2, 0.1);
        opt.step(&mut p, &[2.0, -2.0]);
        // first bias-corrected step is exactly lr * sign(g)
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn grad_norm_clip() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
