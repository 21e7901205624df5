//! Model-free primal-dual training of the shared filter tensor.
//!
//! The expected-reward constraint `r ≤ E[f]` carries the multiplier `λ`, the
//! power budget `E[1ᵀp] ≤ P_max` the multiplier `μ`. The filter gradient is a
//! score-function estimate, so the trainer never differentiates the rate.

use crate::aggnn::{self, FilterTensor};
use crate::error::{Error, Result};
use crate::graphflow::ActiveSet;
use crate::policy::{self, PolicySample};
use crate::rewards::{self, RewardConfig};
use crate::sim::{Environment, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// `ĝ = (s − b) Σ_i score_i ∂z_i/∂A`, `s = λᵀf + μ·slack`.
    Global,
    /// `ĝ = Σ_i (λ_i f_i − μ p_i − b_i) score_i ∂z_i/∂A`: each node is
    /// credited only with its own reward and power.
    PerNode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub eps_a: f64,
    pub eps_r: f64,
    pub eps_dual: f64,
    pub estimator: Estimator,
    /// EMA decay of the reward baseline; `None` disables it.
    pub baseline_decay: Option<f64>,
    /// Heavy-ball coefficient on the filter update; `None` is plain SGA.
    pub momentum: Option<f64>,
    /// EMA decay of the mean squared centered signal; when set, node weights
    /// are divided by its square root so the step no longer scales with the
    /// network's reward magnitude.
    pub signal_norm_decay: Option<f64>,
    /// Rescale the filter gradient to at most this norm.
    pub grad_clip: Option<f64>,
    pub divergence_bound: f64,
    pub reward: RewardConfig,
    /// Substream seed for policy draws.
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            eps_a: 5e-3,
            eps_r: 1e-2,
            eps_dual: 1e-2,
            estimator: Estimator::Global,
            baseline_decay: Some(0.99),
            momentum: None,
            signal_norm_decay: None,
            grad_clip: None,
            divergence_bound: 1e9,
            reward: RewardConfig {
                kind: rewards::RewardKind::SumRate,
                noise_floor: 1.0,
                eta0: 0.0,
                p_max: 12.5,
                p0: 1.0,
                interference: rewards::InterferenceModel::Thresholded,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub a: FilterTensor,
    pub a_local: Vec<FilterTensor>,
    pub r: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu_p: f64,
    pub tau: usize,
    baseline: Option<Vec<f64>>,
    velocity: Option<FilterTensor>,
    signal_sq: Option<f64>,
}

impl TrainerState {
    /// `r = 0`, `λ = 1`, `μ = 0`, every local copy equal to `a`.
    pub fn new(a: FilterTensor, m: usize) -> Self {
        Self {
            a_local: vec![a.clone(); m],
            a,
            r: vec![0.0; m],
            lambda: vec![1.0; m],
            mu_p: 0.0,
            tau: 0,
            baseline: None,
            velocity: None,
            signal_sq: None,
        }
    }

    pub fn m(&self) -> usize {
        self.r.len()
    }

    /// Stochastic Lagrangian `u0(r) + λᵀ(f − r) + μ·slack`.
    pub fn lagrangian(&self, f_obs: &[f64], slack_obs: f64) -> f64 {
        let coupling: f64 = self
            .lambda
            .iter()
            .zip(f_obs.iter().zip(&self.r))
            .map(|(l, (f, r))| l * (f - r))
            .sum();
        rewards::utility_u0(&self.r) + coupling + self.mu_p * slack_obs
    }

    /// `r ← r + ε(1 − λ)` (gradient of the sum utility is all-ones).
    pub fn primal_step_r(&mut self, eps: f64) {
        for (r, l) in self.r.iter_mut().zip(&self.lambda) {
            *r += eps * (1.0 - l);
        }
    }

    /// `A ← A + ε·g` (with optional heavy-ball momentum).
    pub fn primal_step_a(&mut self, grad: &FilterTensor, eps: f64, momentum: Option<f64>) -> Result<()> {
        match momentum {
            None => self.a.add_scaled(grad, eps),
            Some(beta) => {
                let v = self.velocity.get_or_insert_with(|| grad.zeros_like());
                v.scale(beta);
                v.add_scaled(grad, 1.0)?;
                self.a.add_scaled(v, eps)
            }
        }
    }

    /// `λ ← [λ − ε(f − r)]⁺`, `μ ← [μ − ε·slack]⁺`.
    pub fn dual_step(&mut self, f_obs: &[f64], slack_obs: f64, eps: f64) -> Result<()> {
        if f_obs.len() != self.m() {
            return Err(Error::dim("dual step rewards", self.m(), f_obs.len()));
        }
        for ((l, f), r) in self.lambda.iter_mut().zip(f_obs).zip(&self.r) {
            *l = (*l - eps * (f - r)).max(0.0);
        }
        self.mu_p = (self.mu_p - eps * slack_obs).max(0.0);
        Ok(())
    }

    /// Active nodes pick up the current central tensor; the rest keep theirs.
    pub fn sync_local_copies(&mut self, active: &ActiveSet) {
        for i in active.indices() {
            if let Some(local) = self.a_local.get_mut(i) {
                local.clone_from(&self.a);
            }
        }
    }
}

/// Per-node reward signals weighting each node's log-policy gradient.
/// Returns one weight per node (all equal for [`Estimator::Global`]).
pub fn signal_weights(
    estimator: Estimator,
    lambda: &[f64],
    mu_p: f64,
    f_obs: &[f64],
    actions: &[f64],
    p_max: f64,
) -> Vec<f64> {
    match estimator {
        Estimator::Global => {
            let s: f64 = lambda.iter().zip(f_obs).map(|(l, f)| l * f).sum::<f64>()
                + mu_p * rewards::power_slack(actions, p_max);
            vec![s; f_obs.len()]
        }
        Estimator::PerNode => lambda
            .iter()
            .zip(f_obs)
            .zip(actions)
            .map(|((l, f), p)| l * f - mu_p * p)
            .collect(),
    }
}

/// Divide `weights` by the running RMS of their entries. The running mean
/// square starts at the first nonzero observation; until then weights pass
/// through unchanged.
pub fn normalize_signal(weights: &mut [f64], mean_sq: &mut Option<f64>, decay: f64) {
    if weights.is_empty() {
        return;
    }
    let sq = weights.iter().map(|w| w * w).sum::<f64>() / weights.len() as f64;
    let v = match mean_sq {
        Some(v) => {
            *v = decay * *v + (1.0 - decay) * sq;
            *v
        }
        None if sq > 0.0 => *mean_sq.insert(sq),
        None => return,
    };
    if v > 0.0 {
        let scale = v.sqrt().recip();
        for w in weights.iter_mut() {
            *w *= scale;
        }
    }
}

/// Score-function gradient `Σ_i weight_i · score_i · ∂z_i/∂A`.
pub fn score_gradient(sample: &PolicySample, dz_da: &[FilterTensor], weights: &[f64]) -> Result<FilterTensor> {
    if weights.len() != sample.m() {
        return Err(Error::dim("signal weights", sample.m(), weights.len()));
    }
    let terms = policy::per_node_log_prob_grads(sample, dz_da)?;
    let mut g = terms
        .first()
        .ok_or_else(|| Error::InvalidSize("no nodes".into()))?
        .zeros_like();
    for (t, &w) in terms.iter().zip(weights) {
        g.add_scaled(t, w)?;
    }
    Ok(g)
}

/// Logits and `∂z_i/∂A_i` for every node, each using its own local copy.
pub fn node_logits(
    local: &[FilterTensor],
    env: &Environment,
    with_grad: bool,
) -> Result<(Vec<f64>, Vec<FilterTensor>)> {
    let agg = env.aggregation();
    let mut z = Vec::with_capacity(local.len());
    let mut grads = Vec::with_capacity(if with_grad { local.len() } else { 0 });
    for (i, a) in local.iter().enumerate() {
        let y = agg.row(i).to_vec();
        let (zi, acts) = aggnn::forward(a, &y)?;
        if with_grad {
            grads.push(aggnn::backward(a, &acts, 1.0)?);
        }
        z.push(zi);
    }
    Ok((z, grads))
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub tau: usize,
    pub u0_r: f64,
    pub sumrate_obs: f64,
    pub power_obs: f64,
    /// Running mean of `1ᵀp` minus `P_max`.
    pub constraint_violation: f64,
    pub lambda_mean: f64,
    pub mu_p: f64,
    pub grad_norm: f64,
}

pub const LOG_HEADER: [&str; 8] = [
    "tau",
    "u0_r",
    "sumrate_obs",
    "power_obs",
    "constraint_violation",
    "lambda_mean",
    "mu_p",
    "grad_norm",
];

impl IterationRecord {
    pub fn to_record(&self) -> [String; 8] {
        [
            self.tau.to_string(),
            format!("{:.10e}", self.u0_r),
            format!("{:.10e}", self.sumrate_obs),
            format!("{:.10e}", self.power_obs),
            format!("{:.10e}", self.constraint_violation),
            format!("{:.10e}", self.lambda_mean),
            format!("{:.10e}", self.mu_p),
            format!("{:.10e}", self.grad_norm),
        ]
    }
}

/// Primal-dual learner driving an [`Environment`].
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainerConfig,
    pub state: TrainerState,
    power_sum: f64,
}

impl Trainer {
    pub fn new(cfg: TrainerConfig, init: FilterTensor, m: usize) -> Result<Self> {
        cfg.reward.validate(m)?;
        for (name, v) in [("eps_a", cfg.eps_a), ("eps_r", cfg.eps_r), ("eps_dual", cfg.eps_dual)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(Self {
            cfg,
            state: TrainerState::new(init, m),
            power_sum: 0.0,
        })
    }

    /// One iteration of the primal-dual loop on the environment's next step.
    /// Returns the log row and the observation so callers can replay the same
    /// realization through other allocation methods.
    pub fn iterate(&mut self, env: &mut Environment) -> Result<(IterationRecord, Observation)> {
        let cfg = self.cfg;
        let obs = env.step()?;
        self.state.sync_local_copies(&obs.active);
        let (z, dz_da) = node_logits(&self.state.a_local, env, true)?;
        let sample = policy::sample_keyed(&z, cfg.reward.p0, cfg.seed, self.state.tau as u64)?;
        let f_obs = cfg.reward.feedback(&sample.actions, &obs.gain, &obs.gso, &obs.x)?;
        let slack = rewards::power_slack(&sample.actions, cfg.reward.p_max);

        let mut weights = signal_weights(
            cfg.estimator,
            &self.state.lambda,
            self.state.mu_p,
            &f_obs,
            &sample.actions,
            cfg.reward.p_max,
        );
        if let Some(decay) = cfg.baseline_decay {
            let b = self.state.baseline.get_or_insert_with(|| weights.clone());
            for (w, bi) in weights.iter_mut().zip(b.iter_mut()) {
                let raw = *w;
                *w -= *bi;
                *bi = decay * *bi + (1.0 - decay) * raw;
            }
        }
        if let Some(decay) = cfg.signal_norm_decay {
            normalize_signal(&mut weights, &mut self.state.signal_sq, decay);
        }
        let mut grad = score_gradient(&sample, &dz_da, &weights)?;
        let grad_norm = grad.norm();
        if let Some(c) = cfg.grad_clip {
            if grad_norm > c {
                grad.scale(c / grad_norm);
            }
        }

        self.state.primal_step_r(cfg.eps_r);
        self.state.primal_step_a(&grad, cfg.eps_a, cfg.momentum)?;
        self.state.dual_step(&f_obs, slack, cfg.eps_dual)?;

        let u0 = rewards::utility_u0(&self.state.r);
        if !(u0.abs() <= cfg.divergence_bound) || !self.state.a.is_finite() {
            return Err(Error::Diverged {
                tau: self.state.tau,
                value: u0.abs(),
                bound: cfg.divergence_bound,
            });
        }
        let power = sample.total_power();
        self.power_sum += power;
        let tau = self.state.tau;
        self.state.tau += 1;
        let m = self.state.m() as f64;
        Ok((
            IterationRecord {
                tau,
                u0_r: u0,
                sumrate_obs: rewards::utility_u0(&f_obs),
                power_obs: power,
                constraint_violation: self.power_sum / (tau + 1) as f64 - cfg.reward.p_max,
                lambda_mean: self.state.lambda.iter().sum::<f64>() / m,
                mu_p: self.state.mu_p,
                grad_norm,
            },
            obs,
        ))
    }
}
