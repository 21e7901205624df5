//! Feedback functions `f`, utility `u0` and the power-budget slack.
//!
//! Rates use the natural logarithm; `gain` holds channel magnitudes and is
//! squared here.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graphflow::GraphShift;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    SumRate,
    /// Rate minus the node's demand `x_i`.
    Demand,
}

/// Which transmitters count as interferers at receiver `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterferenceModel {
    /// Only the thresholded, active neighborhood `N_i`.
    Thresholded,
    /// Every other transmitter.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub kind: RewardKind,
    pub noise_floor: f64,
    pub eta0: f64,
    pub p_max: f64,
    pub p0: f64,
    pub interference: InterferenceModel,
}

impl RewardConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.noise_floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise floor must be > 0, got {}",
                self.noise_floor
            )));
        }
        if !(self.p0 > 0.0) {
            return Err(Error::InvalidParameter(format!("p0 must be > 0, got {}", self.p0)));
        }
        if !(self.p_max > 0.0 && self.p_max <= m as f64 * self.p0) {
            return Err(Error::InvalidParameter(format!(
                "P_max must lie in (0, m·p0] = (0, {}], got {}",
                m as f64 * self.p0,
                self.p_max
            )));
        }
        Ok(())
    }

    /// Per-node feedback for the configured reward and interference model.
    pub fn feedback(&self, p: &[f64], gain: &Array2<f64>, gs: &GraphShift, x: &[f64]) -> Result<Vec<f64>> {
        let neighbors = match self.interference {
            InterferenceModel::Thresholded => Some(gs.mask()),
            InterferenceModel::Full => None,
        };
        match self.kind {
            RewardKind::SumRate => sumrate(p, gain, neighbors, self.noise_floor),
            RewardKind::Demand => demand_reward(p, gain, x, neighbors, self.noise_floor),
        }
    }
}

fn check_dims(p: &[f64], gain: &Array2<f64>, neighbors: Option<&Array2<bool>>) -> Result<usize> {
    let m = p.len();
    if gain.dim() != (m, m) {
        return Err(Error::dim("gain matrix", m, gain.nrows()));
    }
    if let Some(n) = neighbors {
        if n.dim() != (m, m) {
            return Err(Error::dim("neighbor mask", m, n.nrows()));
        }
    }
    Ok(m)
}

/// `rate_i = ln(1 + g_ii² p_i / (noise + Σ_{j∈N_i, j≠i} g_ij² p_j))`.
/// `neighbors = None` counts every transmitter as an interferer.
pub fn sumrate(
    p: &[f64],
    gain: &Array2<f64>,
    neighbors: Option<&Array2<bool>>,
    noise: f64,
) -> Result<Vec<f64>> {
    let m = check_dims(p, gain, neighbors)?;
    Ok((0..m)
        .map(|i| {
            let interference: f64 = (0..m)
                .filter(|&j| j != i && neighbors.is_none_or(|n| n[[i, j]]))
                .map(|j| gain[[i, j]].powi(2) * p[j])
                .sum();
            (gain[[i, i]].powi(2) * p[i] / (noise + interference)).ln_1p()
        })
        .collect())
}

/// `f_i = rate_i − x_i`.
pub fn demand_reward(
    p: &[f64],
    gain: &Array2<f64>,
    x: &[f64],
    neighbors: Option<&Array2<bool>>,
    noise: f64,
) -> Result<Vec<f64>> {
    if x.len() != p.len() {
        return Err(Error::dim("demand vector", p.len(), x.len()));
    }
    let mut r = sumrate(p, gain, neighbors, noise)?;
    r.iter_mut().zip(x).for_each(|(v, d)| *v -= d);
    Ok(r)
}

/// `u0(r) = Σ r_i`.
pub fn utility_u0(r: &[f64]) -> f64 {
    r.iter().sum()
}

/// `P_max − Σ p_i`; its expectation must stay nonnegative.
pub fn power_slack(p: &[f64], p_max: f64) -> f64 {
    p_max - p.iter().sum::<f64>()
}
