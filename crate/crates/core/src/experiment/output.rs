use std::io::Write;

use super::runs::{BaselineRecord, PermTrial, SweepAxis, SweepRow, TransferRow};
use crate::error::Result;
use crate::pdtrainer::{IterationRecord, LOG_HEADER};

fn num(v: f64) -> String {
    format!("{v:.10e}")
}

/// Training log; the header is written even when there are no rows.
pub fn write_training_log<W: Write>(w: W, rows: &[IterationRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(LOG_HEADER)?;
    for r in rows {
        wtr.write_record(r.to_record())?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_baseline_csv<W: Write>(w: W, rows: &[BaselineRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["tau", "equal", "random", "wmmse"])?;
    for r in rows {
        wtr.write_record([r.tau.to_string(), num(r.equal), num(r.random), num(r.wmmse)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_transfer_csv<W: Write>(w: W, rows: &[TransferRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["trial", "m", "aggnn", "aggnn_sampled", "equal", "random", "wmmse"])?;
    for r in rows {
        wtr.write_record([
            r.trial.to_string(),
            r.m.to_string(),
            num(r.aggnn_threshold),
            num(r.aggnn_sampled),
            num(r.equal),
            num(r.random),
            num(r.wmmse),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, axis: SweepAxis, rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let name = match axis {
        SweepAxis::Hops => "hops",
        SweepAxis::Delta => "delta",
    };
    wtr.write_record([name, "aggnn", "wmmse", "equal", "random", "relative"])?;
    for r in rows {
        let v = match axis {
            SweepAxis::Hops => format!("{}", r.value as usize),
            SweepAxis::Delta => format!("{}", r.value),
        };
        wtr.write_record([v, num(r.aggnn), num(r.wmmse), num(r.equal), num(r.random), num(r.relative)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_permtest_csv<W: Write>(w: W, rows: &[PermTrial]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["trial", "policy_deviation", "reward_deviation"])?;
    for r in rows {
        wtr.write_record([r.trial.to_string(), num(r.policy_deviation), num(r.reward_deviation)])?;
    }
    wtr.flush()?;
    Ok(())
}
