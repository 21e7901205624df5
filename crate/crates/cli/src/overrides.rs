use clap::Args;

macro_rules! overrides {
    ($($(#[$doc:meta])* $key:ident: $ty:ty),* $(,)?) => {
        /// Per-key overrides of the configuration file.
        #[derive(Debug, Default, Args)]
        #[command(next_help_heading = "Configuration overrides")]
        pub struct Overrides {
            $(
                $(#[$doc])*
                #[arg(long, global = true)]
                pub $key: Option<$ty>,
            )*
        }

        impl Overrides {
            /// Write every given flag into `table` under its config key.
            pub fn apply(&self, table: &mut toml::Table) -> anyhow::Result<()> {
                $(
                    if let Some(v) = &self.$key {
                        table.insert(stringify!($key).to_owned(), toml::Value::try_from(v.clone())?);
                    }
                )*
                Ok(())
            }
        }
    };
}

overrides! {
    /// adhoc | cellular
    topology: String,
    m: i64,
    n_bs: i64,
    topology_file: String,
    gamma: f64,
    delta: f64,
    sigma: f64,
    eta0: f64,
    hops: i64,
    layers: i64,
    features: i64,
    taps: i64,
    init_scale: f64,
    /// symmetric | delta
    init_mode: String,
    p0: f64,
    p_max: f64,
    noise: f64,
    /// sumrate | demand
    reward: String,
    /// thresholded | full
    interference: String,
    /// constant | poisson
    node_state: String,
    demand_rate: f64,
    /// sync | async
    activation: String,
    act_lambda: f64,
    n_act: i64,
    eps_a: f64,
    eps_r: f64,
    eps_dual: f64,
    /// global | per_node
    estimator: String,
    ema_baseline: bool,
    baseline_decay: f64,
    momentum: f64,
    signal_norm_decay: f64,
    grad_clip: f64,
    divergence_bound: f64,
    iterations: i64,
    baseline_iters: i64,
    seed: i64,
    ma_window: i64,
    eval_steps: i64,
    checkpoint_every: i64,
    out_dir: String,
}
