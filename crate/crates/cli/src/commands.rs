use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aggnet_core::experiment::{self, SweepAxis, TransferMode};
use aggnet_core::{Error, ExperimentConfig, FilterTensor, NetworkTopology};
use log::info;

use crate::{Axis, Cli, Command, Mode};

/// Print a result line; a reader that closed the pipe early is not an error.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// A failed command and the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Property(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Property(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Property(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Csv(_) => Failure::Io(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut table = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    cli.overrides
        .apply(&mut table)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(ExperimentConfig::from_toml_str(&table.to_string())?)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

fn load_filter(path: &Path) -> Result<FilterTensor, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(FilterTensor::from_text(&text)?)
}

fn load_filter_for(cfg: &ExperimentConfig, path: &Path) -> Result<FilterTensor, Failure> {
    let f = load_filter(path)?;
    if f.layers() != cfg.layer_spec().as_slice() {
        return Err(Failure::Validation(format!(
            "{}: layer spec does not match the configured layers/features/taps",
            path.display()
        )));
    }
    Ok(f)
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Train => train(&cfg),
        Command::Baseline => baseline(&cfg),
        Command::Eval { filter } => eval(&cfg, filter),
        Command::Permtest {
            trials,
            filter,
            asynchronous,
            tolerance,
        } => permtest(&cfg, *trials, filter.as_deref(), *asynchronous, *tolerance),
        Command::Transfer {
            filter,
            mode,
            m_prime,
            trials,
        } => transfer(&cfg, filter, *mode, m_prime.unwrap_or(cfg.m), *trials),
        Command::Sweep { axis, values } => sweep(&cfg, *axis, values),
    }
}

fn train(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let dir = out_dir(cfg)?;
    let topo = experiment::build_topology(cfg)?;
    info!("training m = {} for {} iterations", topo.m(), cfg.iterations);
    let run = experiment::run_training(cfg, &topo)?;
    experiment::write_training_log(create(&dir.join("train_log.csv"))?, &run.log)?;
    experiment::write_baseline_csv(create(&dir.join("baselines.csv"))?, &run.baselines)?;
    write(&dir.join("filter.txt"), &run.filter.to_text())?;
    write(&dir.join("topology.json"), &topo.to_json()?)?;
    write(&dir.join("config.toml"), &cfg.to_toml_string())?;
    if !run.checkpoints.is_empty() {
        let cdir = dir.join("checkpoints");
        fs::create_dir_all(&cdir).map_err(|e| io_err(&cdir, e))?;
        for (tau, f) in &run.checkpoints {
            write(&cdir.join(format!("filter_{tau:08}.txt")), &f.to_text())?;
        }
    }
    let summary = to_json(&run.summary);
    write(&dir.join("summary.json"), &summary)?;
    emit(&summary);
    Ok(())
}

fn baseline(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let dir = out_dir(cfg)?;
    let topo = experiment::build_topology(cfg)?;
    let rows = experiment::run_baselines(cfg, &topo)?;
    experiment::write_baseline_csv(create(&dir.join("baselines.csv"))?, &rows)?;
    let w = cfg.ma_window;
    let ma = serde_json::json!({
        "equal": experiment::tail_mean(rows.iter().map(|r| r.equal), w),
        "random": experiment::tail_mean(rows.iter().map(|r| r.random), w),
        "wmmse": experiment::tail_mean(rows.iter().map(|r| r.wmmse), w),
    });
    emit(&to_json(&ma));
    Ok(())
}

fn eval(cfg: &ExperimentConfig, filter: &Path) -> Result<(), Failure> {
    let f = load_filter_for(cfg, filter)?;
    let topo = experiment::build_topology(cfg)?;
    let res = experiment::evaluate_policy(cfg, &topo, &f)?;
    let dir = out_dir(cfg)?;
    let text = to_json(&res);
    write(&dir.join("eval.json"), &text)?;
    emit(&text);
    Ok(())
}

fn permtest(
    cfg: &ExperimentConfig,
    trials: usize,
    filter: Option<&Path>,
    asynchronous: bool,
    tolerance: f64,
) -> Result<(), Failure> {
    let f = match filter {
        Some(p) => load_filter(p)?,
        None => cfg.initial_filter()?,
    };
    let rows = experiment::permutation_trials(&f, cfg.m, cfg.hops, trials, asynchronous, cfg.seed)?;
    let dir = out_dir(cfg)?;
    experiment::write_permtest_csv(create(&dir.join("permtest.csv"))?, &rows)?;
    let worst = rows
        .iter()
        .map(|r| r.policy_deviation.max(r.reward_deviation))
        .fold(0.0, f64::max);
    emit(&format!("trials = {trials}, max deviation = {worst:e}, tolerance = {tolerance:e}"));
    if worst > tolerance || worst.is_nan() {
        return Err(Failure::Property(format!(
            "equivariance violated: deviation {worst:e} exceeds {tolerance:e}"
        )));
    }
    Ok(())
}

fn transfer(cfg: &ExperimentConfig, filter: &Path, mode: Mode, m_prime: usize, trials: usize) -> Result<(), Failure> {
    let f = load_filter_for(cfg, filter)?;
    let mode = match mode {
        Mode::SameSize => TransferMode::SameSize,
        Mode::Scaled => TransferMode::Scaled,
    };
    let fixed: Option<NetworkTopology> = if cfg.topology_file.is_empty() {
        None
    } else {
        Some(experiment::build_topology(cfg)?)
    };
    let rows = experiment::transfer(cfg, &f, mode, m_prime, trials, fixed.as_ref())?;
    let dir = out_dir(cfg)?;
    let name = match mode {
        TransferMode::SameSize => format!("transfer_same_m{m_prime}.csv"),
        TransferMode::Scaled => format!("transfer_scaled_m{m_prime}.csv"),
    };
    experiment::write_transfer_csv(create(&dir.join(name))?, &rows)?;
    let n = rows.len().max(1) as f64;
    let mean = |g: fn(&experiment::TransferRow) -> f64| rows.iter().map(g).sum::<f64>() / n;
    emit(&to_json(&serde_json::json!({
            "trials": rows.len(),
            "m": m_prime,
            "aggnn": mean(|r| r.aggnn_threshold),
            "aggnn_sampled": mean(|r| r.aggnn_sampled),
            "equal": mean(|r| r.equal),
            "random": mean(|r| r.random),
            "wmmse": mean(|r| r.wmmse),
        })));
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, axis: Axis, values: &[f64]) -> Result<(), Failure> {
    let axis = match axis {
        Axis::Hops => SweepAxis::Hops,
        Axis::Delta => SweepAxis::Delta,
    };
    let rows = experiment::sweep(cfg, axis, values)?;
    let dir = out_dir(cfg)?;
    let name = match axis {
        SweepAxis::Hops => "sweep_hops.csv",
        SweepAxis::Delta => "sweep_delta.csv",
    };
    experiment::write_sweep_csv(create(&dir.join(name))?, axis, &rows)?;
    emit(&to_json(&rows));
    Ok(())
}
