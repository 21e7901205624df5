//! Randomized binary power policy on top of the per-node logits.
//!
//! Node `i` transmits at `p0` with probability `π_i = sigmoid(z_i)`, otherwise
//! stays silent; nodes draw independently so `log Ψ = Σ_i log ψ_i`.

use rand::Rng as _;

use crate::aggnn::FilterTensor;
use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Logits are clamped to this magnitude before the sigmoid.
pub const LOGIT_CLAMP: f64 = 30.0;

pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub probs: Vec<f64>,
    pub actions: Vec<f64>,
    /// `∂ log ψ_i / ∂ z_i`: `1 − π_i` when transmitting, `−π_i` otherwise.
    pub score: Vec<f64>,
    pub p0: f64,
}

impl PolicySample {
    /// Build from explicit on/off decisions (used by exhaustive enumeration).
    pub fn from_decisions(z: &[f64], on: &[bool], p0: f64) -> Result<Self> {
        check_p0(p0)?;
        if z.len() != on.len() {
            return Err(Error::dim("policy decisions", z.len(), on.len()));
        }
        let probs: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let actions = on.iter().map(|&b| if b { p0 } else { 0.0 }).collect();
        let score = probs
            .iter()
            .zip(on)
            .map(|(&p, &b)| if b { 1.0 - p } else { -p })
            .collect();
        Ok(Self {
            probs,
            actions,
            score,
            p0,
        })
    }

    pub fn m(&self) -> usize {
        self.probs.len()
    }

    pub fn total_power(&self) -> f64 {
        self.actions.iter().sum()
    }

    /// Probability of the sampled joint action under the policy.
    pub fn joint_probability(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.actions)
            .map(|(&p, &a)| if a > 0.0 { p } else { 1.0 - p })
            .product()
    }
}

fn check_p0(p0: f64) -> Result<()> {
    if p0 > 0.0 && p0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p0 must be > 0, got {p0}")))
    }
}

/// Independent Bernoulli draws from one generator, node order.
pub fn sample(z: &[f64], p0: f64, rng: &mut rng::Rng) -> Result<PolicySample> {
    let on: Vec<bool> = z.iter().map(|&v| rng.random::<f64>() < sigmoid(v)).collect();
    PolicySample::from_decisions(z, &on, p0)
}

/// Independent Bernoulli draws where node `i` at step `t` uses the substream
/// `(seed, t, i)`, so draws do not depend on evaluation order.
pub fn sample_keyed(z: &[f64], p0: f64, seed: u64, t: u64) -> Result<PolicySample> {
    let on: Vec<bool> = z
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut r = rng::substream(seed, &[stream::POLICY, t, i as u64]);
            r.random::<f64>() < sigmoid(v)
        })
        .collect();
    PolicySample::from_decisions(z, &on, p0)
}

/// Evaluation-mode actions: `p0 · 1{π_i ≥ 1/2}`.
pub fn threshold(z: &[f64], p0: f64) -> Vec<f64> {
    z.iter()
        .map(|&v| if sigmoid(v) >= 0.5 { p0 } else { 0.0 })
        .collect()
}

/// Per-node terms `score_i · ∂z_i/∂A` of the log-policy gradient.
pub fn per_node_log_prob_grads(
    sample: &PolicySample,
    dz_da: &[FilterTensor],
) -> Result<Vec<FilterTensor>> {
    if dz_da.len() != sample.m() {
        return Err(Error::dim("per-node gradients", sample.m(), dz_da.len()));
    }
    Ok(dz_da
        .iter()
        .zip(&sample.score)
        .map(|(g, &s)| {
            let mut t = g.clone();
            t.scale(s);
            t
        })
        .collect())
}

/// `∇_A log Ψ = Σ_i score_i · ∂z_i/∂A`.
pub fn log_prob_grad_chain(sample: &PolicySample, dz_da: &[FilterTensor]) -> Result<FilterTensor> {
    if dz_da.len() != sample.m() {
        return Err(Error::dim("per-node gradients", sample.m(), dz_da.len()));
    }
    let first = dz_da
        .first()
        .ok_or_else(|| Error::InvalidSize("no nodes in policy sample".into()))?;
    let mut total = first.zeros_like();
    for (g, &s) in dz_da.iter().zip(&sample.score) {
        total.add_scaled(g, s)?;
    }
    Ok(total)
}
