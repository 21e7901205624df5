//! Experiment orchestration: configuration, training runs with paired
//! baselines, frozen-policy evaluation, permutation checks, transference and
//! parameter sweeps, plus their CSV/JSON outputs.

mod config;
mod output;
mod runs;

pub use config::{
    ActivationKind, EstimatorChoice, ExperimentConfig, InitMode, InterferenceChoice, NodeStateChoice,
    RewardChoice, TopologyKind, DEFAULT_P0, DEFAULT_P_MAX_FRACTION,
};
pub use output::{
    write_baseline_csv, write_permtest_csv, write_sweep_csv, write_training_log, write_transfer_csv,
};
pub use runs::{
    build_topology, evaluate_policy, permutation_trials, permute_matrix, permute_vec,
    random_permutation, replay_logits, run_baselines, run_training, sweep, tail_mean, transfer,
    BaselineRecord, BaselineRunner, EvalResult, MethodScores, PermTrial, SweepAxis, SweepRow,
    TrainingRun, TrainingSummary, TransferMode, TransferRow,
};
