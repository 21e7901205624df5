//! Decentralized wireless power control with aggregation graph neural
//! networks.
//!
//! * [`netgen`] draws network layouts and drives the fading channel.
//! * [`graphflow`] sparsifies the channel into a graph shift operator and
//!   builds each node's delayed aggregation sequence.
//! * [`aggnn`] is the shared per-node convolutional policy network.
//! * [`policy`] turns logits into randomized on/off power decisions.
//! * [`rewards`] holds rate, utility and budget functions.
//! * [`pdtrainer`] learns the filter tensor with a primal-dual policy
//!   gradient.
//! * [`baselines`] provides WMMSE, equal and random allocation.
//! * [`experiment`] wires everything into reproducible runs.

pub mod aggnn;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod graphflow;
pub mod netgen;
pub mod pdtrainer;
pub mod policy;
pub mod rewards;
pub mod rng;
pub mod sim;

pub use aggnn::{FilterTensor, LayerActivations, LayerSpec};
pub use error::{Error, Result};
pub use experiment::ExperimentConfig;
pub use graphflow::{ActivationSchedule, ActiveSet, AggregationState, GraphShift};
pub use netgen::{ChannelProcess, NetworkTopology, NodeStateMode, NodeStateProcess};
pub use pdtrainer::{Estimator, IterationRecord, Trainer, TrainerConfig, TrainerState};
pub use policy::PolicySample;
pub use rewards::{InterferenceModel, RewardConfig, RewardKind};
