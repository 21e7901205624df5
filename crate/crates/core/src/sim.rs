//! One simulated time step: channel, node states, activation, sparsified
//! GSO and the aggregation sequences built from it.

use ndarray::Array2;

use crate::error::Result;
use crate::graphflow::{sparsify, ActivationSchedule, ActiveSet, AggregationState, GraphShift};
use crate::netgen::{ChannelProcess, NodeStateMode, NodeStateProcess};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationMode {
    Synchronous,
    /// `n_act` random subsets with Poisson(`lambda`) members each.
    Poisson { lambda: f64, n_act: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub hops: usize,
    pub eta0: f64,
    pub delta: f64,
    pub sigma: f64,
    pub node_state: NodeStateMode,
    pub activation: ActivationMode,
    pub seed: u64,
}

/// What the network looks like at one time step.
#[derive(Debug, Clone)]
pub struct Observation {
    pub t: usize,
    pub gain: Array2<f64>,
    pub gso: GraphShift,
    pub active: ActiveSet,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Environment {
    channel: ChannelProcess,
    node_state: NodeStateProcess,
    schedule: ActivationSchedule,
    agg: AggregationState,
    eta0: f64,
    t: usize,
}

impl Environment {
    pub fn new(pathloss: Array2<f64>, cfg: &EnvConfig) -> Result<Self> {
        let m = pathloss.nrows();
        let schedule = match cfg.activation {
            ActivationMode::Synchronous => ActivationSchedule::synchronous(m),
            ActivationMode::Poisson { lambda, n_act } => {
                ActivationSchedule::poisson_subsets(m, lambda, n_act, cfg.seed)?
            }
        };
        Ok(Self {
            channel: ChannelProcess::new(pathloss, cfg.delta, cfg.sigma, cfg.seed)?,
            node_state: NodeStateProcess::new(m, cfg.node_state, cfg.seed)?,
            schedule,
            agg: AggregationState::new(m, cfg.hops)?,
            eta0: cfg.eta0,
            t: 0,
        })
    }

    pub fn m(&self) -> usize {
        self.agg.m()
    }

    /// Draw the next state and perform that step's neighbor exchange. The
    /// first call observes the initial channel.
    pub fn step(&mut self) -> Result<Observation> {
        if self.t > 0 {
            self.channel.step();
            self.node_state.step();
        }
        let active = self.schedule.sample();
        let gso = sparsify(self.channel.gain(), self.eta0, &active)?;
        let x = self.node_state.x().to_vec();
        self.agg.advance(&gso, &x)?;
        let obs = Observation {
            t: self.t,
            gain: self.channel.gain().clone(),
            gso,
            active,
            x,
        };
        self.t += 1;
        Ok(obs)
    }

    /// Aggregation sequences after the latest step.
    pub fn aggregation(&self) -> &AggregationState {
        &self.agg
    }

    pub fn channel(&self) -> &ChannelProcess {
        &self.channel
    }
}
