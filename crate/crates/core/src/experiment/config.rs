use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggnn::{self, LayerSpec};
use crate::error::{Error, Result};
use crate::netgen::NodeStateMode;
use crate::pdtrainer::{Estimator, TrainerConfig};
use crate::rewards::{InterferenceModel, RewardConfig, RewardKind};
use crate::rng::{self, stream};
use crate::sim::{ActivationMode, EnvConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Adhoc,
    Cellular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Sync,
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardChoice {
    Sumrate,
    Demand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceChoice {
    Thresholded,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Global,
    PerNode,
}

/// Every knob of a run. Stored as a flat `key = value` file; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologyKind,
    /// Transmitters (ad-hoc pairs or cellular users).
    pub m: usize,
    /// Base stations (cellular only).
    pub n_bs: usize,
    /// Load a fixed network from this JSON file instead of drawing one.
    pub topology_file: String,
    pub gamma: f64,
    pub delta: f64,
    pub sigma: f64,
    pub eta0: f64,
    /// Aggregation sequence length K.
    pub hops: usize,
    pub layers: usize,
    pub features: usize,
    pub taps: usize,
    pub init_scale: f64,
    pub init_mode: InitMode,
    pub p0: f64,
    pub p_max: f64,
    pub noise: f64,
    pub reward: RewardChoice,
    pub interference: InterferenceChoice,
    pub node_state: NodeStateChoice,
    pub demand_rate: f64,
    pub activation: ActivationKind,
    pub act_lambda: f64,
    pub n_act: usize,
    pub eps_a: f64,
    pub eps_r: f64,
    pub eps_dual: f64,
    pub estimator: EstimatorChoice,
    pub ema_baseline: bool,
    pub baseline_decay: f64,
    /// Heavy-ball coefficient; 0 disables momentum.
    pub momentum: f64,
    /// EMA decay of the signal RMS used to normalize policy-gradient
    /// weights; 0 disables normalization.
    pub signal_norm_decay: f64,
    /// Largest filter-gradient norm applied per step; 0 disables clipping.
    pub grad_clip: f64,
    pub divergence_bound: f64,
    pub iterations: usize,
    /// WMMSE sweeps per decision; 0 means "same as hops".
    pub baseline_iters: usize,
    pub seed: u64,
    /// Moving-average window for converged performance.
    pub ma_window: usize,
    /// Steps of frozen-policy evaluation after training and per transfer trial.
    pub eval_steps: usize,
    /// Write a filter checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    pub out_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Signed uniform taps in every layer.
    Symmetric,
    /// Hidden layers start as lag-0 pass-throughs plus the signed draw.
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStateChoice {
    Constant,
    Poisson,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: TopologyKind::Adhoc,
            m: 25,
            n_bs: 5,
            topology_file: String::new(),
            gamma: 2.2,
            delta: 0.3,
            sigma: 1.0,
            eta0: 0.0,
            hops: 5,
            layers: 10,
            features: 1,
            taps: 10,
            init_scale: 0.1,
            init_mode: InitMode::Delta,
            p0: DEFAULT_P0,
            p_max: DEFAULT_P_MAX_FRACTION * 25.0 * DEFAULT_P0,
            noise: 1.0,
            reward: RewardChoice::Sumrate,
            interference: InterferenceChoice::Thresholded,
            node_state: NodeStateChoice::Constant,
            demand_rate: 0.0,
            activation: ActivationKind::Sync,
            act_lambda: 25.0,
            n_act: 100,
            eps_a: 1e-4,
            eps_r: 1e-2,
            eps_dual: 1e-2,
            estimator: EstimatorChoice::Global,
            ema_baseline: true,
            baseline_decay: 0.99,
            momentum: 0.9,
            signal_norm_decay: 0.0,
            grad_clip: 1.0,
            divergence_bound: 1e9,
            iterations: 200_000,
            baseline_iters: 0,
            seed: 1,
            ma_window: 500,
            eval_steps: 2_000,
            checkpoint_every: 0,
            out_dir: "out".into(),
        }
    }
}

/// Default transmit power level.
pub const DEFAULT_P0: f64 = 1.0;
/// Default budget as a fraction of `m·p0`.
pub const DEFAULT_P_MAX_FRACTION: f64 = 0.5;

const KNOWN_KEYS: &[&str] = &[
    "topology",
    "m",
    "n_bs",
    "topology_file",
    "gamma",
    "delta",
    "sigma",
    "eta0",
    "hops",
    "layers",
    "features",
    "taps",
    "init_scale",
    "init_mode",
    "p0",
    "p_max",
    "noise",
    "reward",
    "interference",
    "node_state",
    "demand_rate",
    "activation",
    "act_lambda",
    "n_act",
    "eps_a",
    "eps_r",
    "eps_dual",
    "estimator",
    "ema_baseline",
    "baseline_decay",
    "momentum",
    "signal_norm_decay",
    "grad_clip",
    "divergence_bound",
    "iterations",
    "baseline_iters",
    "seed",
    "ma_window",
    "eval_steps",
    "checkpoint_every",
    "out_dir",
];

impl ExperimentConfig {
    /// Defaults for an `m`-node ad-hoc run with the budget scaled to `m`.
    pub fn for_size(m: usize) -> Self {
        let d = Self::default();
        Self {
            m,
            p_max: DEFAULT_P_MAX_FRACTION * m as f64 * d.p0,
            ..d
        }
    }

    /// Parse a config file. A missing `p_max` scales with `m` and `p0`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let unknown: Vec<String> = table
            .keys()
            .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
            .map(|k| format!("{k}: unknown key"))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Validation(unknown));
        }
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if !table.contains_key("p_max") {
            cfg.p_max = DEFAULT_P_MAX_FRACTION * cfg.m as f64 * cfg.p0;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Check every field; collects all offending keys.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, key: &str, why: String| {
            if !ok {
                bad.push(format!("{key}: {why}"));
            }
        };
        check(self.m >= 1, "m", format!("must be >= 1, got {}", self.m));
        if self.topology == TopologyKind::Cellular {
            check(self.n_bs >= 1, "n_bs", format!("must be >= 1, got {}", self.n_bs));
            check(
                self.m >= self.n_bs,
                "n_bs",
                format!("must not exceed m ({}), got {}", self.m, self.n_bs),
            );
        }
        check(self.gamma > 0.0, "gamma", format!("must be > 0, got {}", self.gamma));
        check(
            (0.0..=1.0).contains(&self.delta),
            "delta",
            format!("must lie in [0, 1], got {}", self.delta),
        );
        check(self.sigma > 0.0, "sigma", format!("must be > 0, got {}", self.sigma));
        check(self.eta0 >= 0.0, "eta0", format!("must be >= 0, got {}", self.eta0));
        check(
            self.seed <= i64::MAX as u64,
            "seed",
            format!("must be at most {}, got {}", i64::MAX, self.seed),
        );
        check(self.hops >= 1, "hops", format!("must be >= 1, got {}", self.hops));
        check(self.layers >= 1, "layers", format!("must be >= 1, got {}", self.layers));
        check(self.features >= 1, "features", format!("must be >= 1, got {}", self.features));
        check(self.taps >= 1, "taps", format!("must be >= 1, got {}", self.taps));
        check(
            self.init_scale > 0.0,
            "init_scale",
            format!("must be > 0, got {}", self.init_scale),
        );
        check(self.p0 > 0.0, "p0", format!("must be > 0, got {}", self.p0));
        check(
            self.p_max > 0.0 && self.p_max <= self.m as f64 * self.p0,
            "p_max",
            format!("must lie in (0, m·p0 = {}], got {}", self.m as f64 * self.p0, self.p_max),
        );
        check(self.noise > 0.0, "noise", format!("must be > 0, got {}", self.noise));
        check(
            self.demand_rate >= 0.0,
            "demand_rate",
            format!("must be >= 0, got {}", self.demand_rate),
        );
        if self.activation == ActivationKind::Async {
            check(
                self.act_lambda > 0.0,
                "act_lambda",
                format!("must be > 0, got {}", self.act_lambda),
            );
            check(self.n_act >= 1, "n_act", format!("must be >= 1, got {}", self.n_act));
        }
        for (key, v) in [("eps_a", self.eps_a), ("eps_r", self.eps_r), ("eps_dual", self.eps_dual)] {
            check(v >= 0.0 && v.is_finite(), key, format!("must be >= 0, got {v}"));
        }
        check(
            (0.0..1.0).contains(&self.baseline_decay),
            "baseline_decay",
            format!("must lie in [0, 1), got {}", self.baseline_decay),
        );
        check(
            (0.0..1.0).contains(&self.momentum),
            "momentum",
            format!("must lie in [0, 1), got {}", self.momentum),
        );
        check(
            (0.0..1.0).contains(&self.signal_norm_decay),
            "signal_norm_decay",
            format!("must lie in [0, 1), got {}", self.signal_norm_decay),
        );
        check(
            self.grad_clip >= 0.0,
            "grad_clip",
            format!("must be >= 0, got {}", self.grad_clip),
        );
        check(
            self.divergence_bound > 0.0,
            "divergence_bound",
            format!("must be > 0, got {}", self.divergence_bound),
        );
        check(self.ma_window >= 1, "ma_window", format!("must be >= 1, got {}", self.ma_window));
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn layer_spec(&self) -> Vec<LayerSpec> {
        aggnn::uniform_layers(self.layers, self.features, self.taps)
    }

    /// Starting filter tensor drawn from the INIT substream.
    pub fn initial_filter(&self) -> Result<aggnn::FilterTensor> {
        let seed = self.seed_for(stream::INIT);
        match self.init_mode {
            InitMode::Symmetric => aggnn::init_filters(self.layer_spec(), self.init_scale, seed),
            InitMode::Delta => aggnn::init_filters_delta(self.layer_spec(), self.init_scale, seed),
        }
    }

    /// WMMSE sweeps per decision.
    pub fn wmmse_iters(&self) -> usize {
        if self.baseline_iters == 0 {
            self.hops
        } else {
            self.baseline_iters
        }
    }

    /// Slots between baseline refreshes: 1 when synchronous, `⌈m/λ⌉` otherwise.
    pub fn baseline_period(&self) -> usize {
        match self.activation {
            ActivationKind::Sync => 1,
            ActivationKind::Async => ((self.m as f64 / self.act_lambda).ceil() as usize).max(1),
        }
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            kind: match self.reward {
                RewardChoice::Sumrate => RewardKind::SumRate,
                RewardChoice::Demand => RewardKind::Demand,
            },
            noise_floor: self.noise,
            eta0: self.eta0,
            p_max: self.p_max,
            p0: self.p0,
            interference: match self.interference {
                InterferenceChoice::Thresholded => InterferenceModel::Thresholded,
                InterferenceChoice::Full => InterferenceModel::Full,
            },
        }
    }

    pub fn env_config(&self, seed: u64) -> EnvConfig {
        EnvConfig {
            hops: self.hops,
            eta0: self.eta0,
            delta: self.delta,
            sigma: self.sigma,
            node_state: match self.node_state {
                NodeStateChoice::Constant => NodeStateMode::ConstantOne,
                NodeStateChoice::Poisson => NodeStateMode::DemandPoisson {
                    rate: self.demand_rate,
                },
            },
            activation: match self.activation {
                ActivationKind::Sync => ActivationMode::Synchronous,
                ActivationKind::Async => ActivationMode::Poisson {
                    lambda: self.act_lambda,
                    n_act: self.n_act,
                },
            },
            seed,
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            eps_a: self.eps_a,
            eps_r: self.eps_r,
            eps_dual: self.eps_dual,
            estimator: match self.estimator {
                EstimatorChoice::Global => Estimator::Global,
                EstimatorChoice::PerNode => Estimator::PerNode,
            },
            baseline_decay: self.ema_baseline.then_some(self.baseline_decay),
            momentum: (self.momentum > 0.0).then_some(self.momentum),
            signal_norm_decay: (self.signal_norm_decay > 0.0).then_some(self.signal_norm_decay),
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
            divergence_bound: self.divergence_bound,
            reward: self.reward_config(),
            seed: self.seed_for(stream::POLICY),
        }
    }

    /// Seed of a named substream of this run's root seed.
    pub fn seed_for(&self, name: u64) -> u64 {
        rng::derive_seed(self.seed, &[name])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!((c.m, c.hops, c.layers, c.features, c.taps), (25, 5, 10, 1, 10));
        assert_eq!((c.delta, c.gamma), (0.3, 2.2));
        assert_eq!(aggnn::FilterTensor::zeros(c.layer_spec()).unwrap().param_count(), 100);
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::for_size(50);
        c.hops = 6;
        c.activation = ActivationKind::Async;
        c.estimator = EstimatorChoice::PerNode;
        c.topology_file = "net.json".into();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn unknown_keys_listed() {
        let err = ExperimentConfig::from_toml_str("m = 10\nhopz = 3\nsede = 1\n").unwrap_err();
        match err {
            Error::Validation(keys) => {
                assert_eq!(keys.len(), 2);
                assert!(keys.iter().any(|k| k.starts_with("hopz")));
                assert!(keys.iter().any(|k| k.starts_with("sede")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_values_listed() {
        let err = ExperimentConfig::from_toml_str("delta = 1.5\nhops = 0\n").unwrap_err();
        match err {
            Error::Validation(keys) => {
                assert!(keys.iter().any(|k| k.starts_with("delta")));
                assert!(keys.iter().any(|k| k.starts_with("hops")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn async_period() {
        let c = ExperimentConfig {
            m: 50,
            activation: ActivationKind::Async,
            act_lambda: 25.0,
            ..ExperimentConfig::for_size(50)
        };
        assert_eq!(c.baseline_period(), 2);
        assert_eq!(ExperimentConfig::default().baseline_period(), 1);
    }

    #[test]
    fn budget_follows_size_unless_given() {
        let c = ExperimentConfig::from_toml_str("m = 50\np0 = 2.0").unwrap();
        assert_eq!(c.p_max, 50.0);
        let c = ExperimentConfig::from_toml_str("m = 50\np_max = 3.0").unwrap();
        assert_eq!(c.p_max, 3.0);
    }
}
