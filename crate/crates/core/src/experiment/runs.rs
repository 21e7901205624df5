use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, TopologyKind};
use crate::aggnn::{self, FilterTensor};
use crate::baselines;
use crate::error::{Error, Result};
use crate::graphflow::{sparsify, ActiveSet, AggregationState};
use crate::netgen::{self, NetworkTopology};
use crate::pdtrainer::{node_logits, IterationRecord, Trainer};
use crate::policy;
use crate::rewards::{self, RewardConfig};
use crate::rng::{self, stream};
use crate::sim::{Environment, Observation};

/// Network for a run: the configured file if set, otherwise a fresh draw.
pub fn build_topology(cfg: &ExperimentConfig) -> Result<NetworkTopology> {
    if !cfg.topology_file.is_empty() {
        let t = NetworkTopology::from_json(&std::fs::read_to_string(&cfg.topology_file)?)?;
        if t.m() != cfg.m {
            return Err(Error::Config(format!(
                "topology file has {} transmitters but m = {}",
                t.m(),
                cfg.m
            )));
        }
        return Ok(t);
    }
    let seed = cfg.seed_for(stream::TOPOLOGY);
    match cfg.topology {
        TopologyKind::Adhoc => netgen::generate_adhoc(cfg.m, cfg.gamma, seed),
        TopologyKind::Cellular => netgen::generate_cellular_with_gamma(cfg.n_bs, cfg.m, cfg.gamma, seed),
    }
}

/// Sum-rates of the three reference allocations at one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BaselineRecord {
    pub tau: usize,
    pub equal: f64,
    pub random: f64,
    pub wmmse: f64,
}

/// Equal, random and WMMSE allocation replayed on the trainer's realizations.
/// Decisions refresh every `period` slots and are held in between.
#[derive(Debug, Clone)]
pub struct BaselineRunner {
    reward: RewardConfig,
    wmmse_iters: usize,
    period: usize,
    rng: rng::Rng,
    held: Option<[Vec<f64>; 3]>,
    slot: usize,
}

impl BaselineRunner {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        Self {
            reward: cfg.reward_config(),
            wmmse_iters: cfg.wmmse_iters(),
            period: cfg.baseline_period(),
            rng: rng::substream(seed, &[stream::BASELINE]),
            held: None,
            slot: 0,
        }
    }

    /// Powers `[equal, random, wmmse]` for this step.
    pub fn allocate(&mut self, obs: &Observation) -> Result<[Vec<f64>; 3]> {
        let m = obs.gain.nrows();
        if self.held.is_none() || self.slot % self.period == 0 {
            let rc = self.reward;
            // WMMSE sees the thresholded channel of every link, awake or not.
            let h = sparsify(&obs.gain, rc.eta0, &ActiveSet::all(m))?;
            let wm = baselines::wmmse(h.h_tilde(), rc.p0, self.wmmse_iters, rc.noise_floor)?;
            self.held = Some([
                baselines::equal_power(m, rc.p_max),
                baselines::random_power(m, rc.p_max, rc.p0, &mut self.rng)?,
                wm.powers,
            ]);
        }
        self.slot += 1;
        Ok(self.held.clone().expect("allocated above"))
    }

    pub fn record(&mut self, tau: usize, obs: &Observation) -> Result<BaselineRecord> {
        let [eq, rnd, wm] = self.allocate(obs)?;
        let score = |p: &[f64]| -> Result<f64> {
            Ok(rewards::utility_u0(&self.reward.feedback(p, &obs.gain, &obs.gso, &obs.x)?))
        };
        Ok(BaselineRecord {
            tau,
            equal: score(&eq)?,
            random: score(&rnd)?,
            wmmse: score(&wm)?,
        })
    }
}

/// Mean of the last `window` values (all of them if fewer).
pub fn tail_mean(values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator, window: usize) -> f64 {
    let n = values.len().min(window);
    if n == 0 {
        return f64::NAN;
    }
    values.rev().take(n).sum::<f64>() / n as f64
}

/// Converged (moving-average) sum-rate of each method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodScores {
    pub aggnn: f64,
    pub equal: f64,
    pub random: f64,
    pub wmmse: f64,
}

/// Frozen-policy performance over an evaluation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub steps: usize,
    /// Policy sampling Bernoulli actions, as during training.
    pub aggnn_sampled: f64,
    /// Deterministic `π ≥ 1/2` thresholding.
    pub aggnn_threshold: f64,
    pub equal: f64,
    pub random: f64,
    pub wmmse: f64,
    pub power_sampled: f64,
    pub power_threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingSummary {
    pub m: usize,
    pub hops: usize,
    pub delta: f64,
    pub iterations: usize,
    pub ma_window: usize,
    pub p0: f64,
    pub p_max: f64,
    /// Mean of the last `ma_window` training sum-rates per method.
    pub final_ma: MethodScores,
    /// Mean total power over the last 10% of iterations.
    pub tail_power: f64,
    pub tail_power_ratio: f64,
    pub eval: Option<EvalResult>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub topology: NetworkTopology,
    pub initial: FilterTensor,
    pub filter: FilterTensor,
    pub log: Vec<IterationRecord>,
    pub baselines: Vec<BaselineRecord>,
    /// `(tau, filter)` snapshots when `checkpoint_every > 0`.
    pub checkpoints: Vec<(usize, FilterTensor)>,
    pub summary: TrainingSummary,
}

impl TrainingRun {
    /// Converged (moving-average) Agg-GNN sum-rate over WMMSE's.
    pub fn relative_to_wmmse(&self) -> f64 {
        self.summary.final_ma.aggnn / self.summary.final_ma.wmmse
    }
}

/// Train on `topology`, replaying every realization through the baselines,
/// then evaluate the frozen filter for `eval_steps` steps.
pub fn run_training(cfg: &ExperimentConfig, topology: &NetworkTopology) -> Result<TrainingRun> {
    cfg.validate()?;
    let start = Instant::now();
    let m = topology.m();
    let init = cfg.initial_filter()?;
    let mut env = Environment::new(topology.pathloss.clone(), &cfg.env_config(cfg.seed_for(stream::FADING)))?;
    let mut trainer = Trainer::new(cfg.trainer_config(), init.clone(), m)?;
    let mut base = BaselineRunner::new(cfg, cfg.seed);
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut brecs = Vec::with_capacity(cfg.iterations);
    let mut checkpoints = Vec::new();
    for tau in 0..cfg.iterations {
        let (rec, obs) = trainer.iterate(&mut env)?;
        brecs.push(base.record(tau, &obs)?);
        log.push(rec);
        if cfg.checkpoint_every > 0 && (tau + 1) % cfg.checkpoint_every == 0 {
            checkpoints.push((tau + 1, trainer.state.a.clone()));
        }
    }
    let filter = trainer.state.a.clone();
    let w = cfg.ma_window;
    let final_ma = MethodScores {
        aggnn: tail_mean(log.iter().map(|r| r.sumrate_obs), w),
        equal: tail_mean(brecs.iter().map(|r| r.equal), w),
        random: tail_mean(brecs.iter().map(|r| r.random), w),
        wmmse: tail_mean(brecs.iter().map(|r| r.wmmse), w),
    };
    let tail = (cfg.iterations / 10).max(1);
    let tail_power = tail_mean(log.iter().map(|r| r.power_obs), tail);
    let eval = if cfg.eval_steps > 0 {
        Some(evaluate_policy(cfg, topology, &filter)?)
    } else {
        None
    };
    let summary = TrainingSummary {
        m,
        hops: cfg.hops,
        delta: cfg.delta,
        iterations: cfg.iterations,
        ma_window: w,
        p0: cfg.p0,
        p_max: cfg.p_max,
        final_ma,
        tail_power,
        tail_power_ratio: tail_power / cfg.p_max,
        eval,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    Ok(TrainingRun {
        topology: topology.clone(),
        initial: init,
        filter,
        log,
        baselines: brecs,
        checkpoints,
        summary,
    })
}

/// Run only the reference allocations for `cfg.iterations` steps.
pub fn run_baselines(cfg: &ExperimentConfig, topology: &NetworkTopology) -> Result<Vec<BaselineRecord>> {
    cfg.validate()?;
    let mut env = Environment::new(topology.pathloss.clone(), &cfg.env_config(cfg.seed_for(stream::FADING)))?;
    let mut base = BaselineRunner::new(cfg, cfg.seed);
    (0..cfg.iterations)
        .map(|tau| {
            let obs = env.step()?;
            base.record(tau, &obs)
        })
        .collect()
}

/// Frozen-filter performance on `topology` over `cfg.eval_steps` steps of a
/// dedicated evaluation channel stream, alongside the baselines.
pub fn evaluate_policy(
    cfg: &ExperimentConfig,
    topology: &NetworkTopology,
    filter: &FilterTensor,
) -> Result<EvalResult> {
    let m = topology.m();
    let eval_seed = cfg.seed_for(stream::EVAL);
    let env_cfg = crate::sim::EnvConfig {
        hops: cfg.hops,
        ..cfg.env_config(eval_seed)
    };
    let mut env = Environment::new(topology.pathloss.clone(), &env_cfg)?;
    let mut base = BaselineRunner::new(cfg, eval_seed);
    let rc = cfg.reward_config();
    let local = vec![filter.clone(); m];
    let steps = cfg.eval_steps.max(1);
    let mut acc = [0.0f64; 7];
    for t in 0..steps {
        let obs = env.step()?;
        let (z, _) = node_logits(&local, &env, false)?;
        let sampled = policy::sample_keyed(&z, rc.p0, eval_seed, t as u64)?;
        let thresh = policy::threshold(&z, rc.p0);
        let b = base.record(t, &obs)?;
        let rate = |p: &[f64]| -> Result<f64> {
            Ok(rewards::utility_u0(&rc.feedback(p, &obs.gain, &obs.gso, &obs.x)?))
        };
        acc[0] += rate(&sampled.actions)?;
        acc[1] += rate(&thresh)?;
        acc[2] += b.equal;
        acc[3] += b.random;
        acc[4] += b.wmmse;
        acc[5] += sampled.total_power();
        acc[6] += thresh.iter().sum::<f64>();
    }
    let n = steps as f64;
    Ok(EvalResult {
        steps,
        aggnn_sampled: acc[0] / n,
        aggnn_threshold: acc[1] / n,
        equal: acc[2] / n,
        random: acc[3] / n,
        wmmse: acc[4] / n,
        power_sampled: acc[5] / n,
        power_threshold: acc[6] / n,
    })
}

/// Outcome of one permutation trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermTrial {
    pub trial: usize,
    /// `max_i |Φ(perm)_i − Φ(orig)_{π(i)}|` over node logits.
    pub policy_deviation: f64,
    /// Same check on per-node rates for a random action vector.
    pub reward_deviation: f64,
}

/// Uniformly random permutation of `0..m`.
pub fn random_permutation(m: usize, r: &mut rng::Rng) -> Vec<usize> {
    rand::seq::index::sample(r, m, m).into_vec()
}

/// `out[i][j] = a[perm[i]][perm[j]]` (i.e. `Πᵀ A Π`).
pub fn permute_matrix(a: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(a.dim(), |(i, j)| a[[perm[i], perm[j]]])
}

pub fn permute_vec<T: Copy>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&p| v[p]).collect()
}

/// Per-node logits after replaying a channel/state/activation history.
pub fn replay_logits(
    filter: &FilterTensor,
    hops: usize,
    eta0: f64,
    history: &[(Array2<f64>, Vec<f64>, ActiveSet)],
) -> Result<Vec<f64>> {
    let m = history.first().map(|h| h.1.len()).unwrap_or(0);
    let mut agg = AggregationState::new(m, hops)?;
    for (gain, x, active) in history {
        agg.advance(&sparsify(gain, eta0, active)?, x)?;
    }
    (0..m)
        .map(|i| Ok(aggnn::forward(filter, &agg.row(i).to_vec())?.0))
        .collect()
}

/// Replay random histories and their relabelings through aggregation and
/// the network; the trial passes when the outputs are the permuted originals.
pub fn permutation_trials(
    filter: &FilterTensor,
    m: usize,
    hops: usize,
    trials: usize,
    asynchronous: bool,
    seed: u64,
) -> Result<Vec<PermTrial>> {
    (0..trials)
        .map(|trial| {
            let mut r = rng::substream(seed, &[stream::TRIAL, trial as u64]);
            let steps = 2 * hops + 1;
            let history: Vec<_> = (0..steps)
                .map(|_| {
                    let gain = Array2::from_shape_fn((m, m), |_| r.random_range(0.0..1.0));
                    let x: Vec<f64> = (0..m).map(|_| r.random_range(0.0..2.0)).collect();
                    let active = if asynchronous {
                        ActiveSet::from_mask((0..m).map(|_| r.random_bool(0.6)).collect())
                    } else {
                        ActiveSet::all(m)
                    };
                    (gain, x, active)
                })
                .collect();
            let perm = if trial == 0 {
                (0..m).collect()
            } else {
                random_permutation(m, &mut r)
            };
            let permuted: Vec<_> = history
                .iter()
                .map(|(g, x, a)| {
                    (
                        permute_matrix(g, &perm),
                        permute_vec(x, &perm),
                        ActiveSet::from_mask(permute_vec(a.mask(), &perm)),
                    )
                })
                .collect();
            let orig = replay_logits(filter, hops, 0.0, &history)?;
            let hat = replay_logits(filter, hops, 0.0, &permuted)?;
            let policy_deviation = hat
                .iter()
                .zip(permute_vec(&orig, &perm))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);

            let (gain, _, _) = history.last().expect("nonempty history");
            let p: Vec<f64> = (0..m).map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
            let rates = rewards::sumrate(&p, gain, None, 1.0)?;
            let rates_hat = rewards::sumrate(&permute_vec(&p, &perm), &permute_matrix(gain, &perm), None, 1.0)?;
            let reward_deviation = rates_hat
                .iter()
                .zip(permute_vec(&rates, &perm))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(PermTrial {
                trial,
                policy_deviation,
                reward_deviation,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    /// Fresh networks from the training generator.
    SameSize,
    /// `m'` transmitters over `[−√(m·m'), √(m·m')]²`, receivers within `±m/4`.
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferRow {
    pub trial: usize,
    pub m: usize,
    pub aggnn_sampled: f64,
    pub aggnn_threshold: f64,
    pub equal: f64,
    pub random: f64,
    pub wmmse: f64,
}

/// Evaluate a frozen filter on `trials` fresh networks of `m_prime` nodes.
/// With `fixed` set, that network is used for every trial instead.
pub fn transfer(
    cfg: &ExperimentConfig,
    filter: &FilterTensor,
    mode: TransferMode,
    m_prime: usize,
    trials: usize,
    fixed: Option<&NetworkTopology>,
) -> Result<Vec<TransferRow>> {
    filter.check_same_shape(&aggnn::FilterTensor::zeros(cfg.layer_spec())?)?;
    let eval_cfg = ExperimentConfig {
        m: m_prime,
        p_max: cfg.p_max * m_prime as f64 / cfg.m as f64,
        ..cfg.clone()
    };
    eval_cfg.validate()?;
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let topo = match fixed {
                Some(t) => t.clone(),
                None => {
                    let seed = rng::derive_seed(cfg.seed, &[stream::TRIAL, trial as u64]);
                    match (mode, cfg.topology) {
                        (TransferMode::SameSize, TopologyKind::Adhoc) => {
                            netgen::generate_adhoc(m_prime, cfg.gamma, seed)?
                        }
                        (TransferMode::SameSize, TopologyKind::Cellular) => {
                            netgen::generate_cellular_with_gamma(cfg.n_bs, m_prime, cfg.gamma, seed)?
                        }
                        (TransferMode::Scaled, _) => netgen::generate_adhoc_in_area(
                            m_prime,
                            ((cfg.m * m_prime) as f64).sqrt(),
                            cfg.m as f64 / 4.0,
                            cfg.gamma,
                            seed,
                        )?,
                    }
                }
            };
            if topo.m() != m_prime {
                return Err(Error::Config(format!(
                    "fixed network has {} nodes, expected {m_prime}",
                    topo.m()
                )));
            }
            let e = evaluate_policy(&eval_cfg, &topo, filter)?;
            Ok(TransferRow {
                trial,
                m: m_prime,
                aggnn_sampled: e.aggnn_sampled,
                aggnn_threshold: e.aggnn_threshold,
                equal: e.equal,
                random: e.random,
                wmmse: e.wmmse,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Hops,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub aggnn: f64,
    pub wmmse: f64,
    pub equal: f64,
    pub random: f64,
    /// Agg-GNN sum-rate divided by WMMSE's.
    pub relative: f64,
}

/// Train one policy per axis value (concurrently) and report its converged
/// moving-average sum-rate relative to WMMSE on the same realizations.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    values
        .par_iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match axis {
                SweepAxis::Hops => {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::Config(format!("hop count must be a positive integer, got {v}")));
                    }
                    c.hops = v as usize;
                }
                SweepAxis::Delta => c.delta = v,
            }
            let topo = build_topology(&c)?;
            let run = run_training(&c, &topo)?;
            let f = run.summary.final_ma;
            Ok(SweepRow {
                value: v,
                aggnn: f.aggnn,
                wmmse: f.wmmse,
                equal: f.equal,
                random: f.random,
                relative: run.relative_to_wmmse(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_mean_windows() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(tail_mean(v.iter().copied(), 2), 3.5);
        assert_eq!(tail_mean(v.iter().copied(), 10), 2.5);
        assert!(tail_mean(std::iter::empty::<f64>(), 3).is_nan());
    }

    #[test]
    fn permute_helpers() {
        let a = Array2::from_shape_fn((3, 3), |(i, j)| (10 * i + j) as f64);
        let p = [2, 0, 1];
        let b = permute_matrix(&a, &p);
        assert_eq!(b[[0, 0]], 22.0);
        assert_eq!(b[[0, 1]], 20.0);
        assert_eq!(permute_vec(&[5, 6, 7], &p), vec![7, 5, 6]);
    }

    #[test]
    fn identity_permutation_exact() {
        let f = aggnn::init_filters(aggnn::uniform_layers(3, 2, 3), 1.0, 4).unwrap();
        let trials = permutation_trials(&f, 6, 3, 1, false, 9).unwrap();
        assert_eq!(trials[0].policy_deviation, 0.0);
        assert_eq!(trials[0].reward_deviation, 0.0);
    }

    #[test]
    fn zero_iterations_returns_initial_filter() {
        let cfg = ExperimentConfig {
            iterations: 0,
            eval_steps: 0,
            ..ExperimentConfig::for_size(5)
        };
        let topo = build_topology(&cfg).unwrap();
        let run = run_training(&cfg, &topo).unwrap();
        assert_eq!(run.filter, run.initial);
        assert!(run.log.is_empty() && run.baselines.is_empty());
    }
}
