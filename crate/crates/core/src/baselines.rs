//! Model-based (WMMSE) and naive (equal, random) power allocations.

use ndarray::Array2;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// Block-coordinate state of the weighted-MMSE iteration.
///
/// `v` are transmit amplitudes (`p = v²`), `u` receive scalars, `w` MSE
/// weights. The gain matrix uses the same orientation as the rate formula:
/// `g[i][j]` is the amplitude of transmitter `j` seen at receiver `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub p_cap: f64,
    /// Set when some update hit 0/0 (a node with no usable channel); that
    /// node's amplitude is forced to zero.
    pub degenerate: bool,
}

impl WmmseState {
    /// Full-power start, `v_i = √p_cap`.
    pub fn new(m: usize, p_cap: f64) -> Result<Self> {
        if !(p_cap >= 0.0 && p_cap.is_finite()) {
            return Err(Error::InvalidParameter(format!("power cap must be >= 0, got {p_cap}")));
        }
        Ok(Self {
            v: vec![p_cap.sqrt(); m],
            u: vec![0.0; m],
            w: vec![1.0; m],
            p_cap,
            degenerate: false,
        })
    }

    /// `p_i = v_i²`, clipped so rounding never pushes it past the cap.
    pub fn powers(&self) -> Vec<f64> {
        self.v.iter().map(|v| (v * v).min(self.p_cap)).collect()
    }

    /// One sweep of the `u`, `w`, `v` updates.
    pub fn step(&mut self, gain: &Array2<f64>, noise: f64) {
        let m = self.v.len();
        for i in 0..m {
            let received: f64 = (0..m).map(|j| (gain[[i, j]] * self.v[j]).powi(2)).sum();
            self.u[i] = gain[[i, i]] * self.v[i] / (noise + received);
            self.w[i] = 1.0 / (1.0 - self.u[i] * gain[[i, i]] * self.v[i]);
        }
        let cap = self.p_cap.sqrt();
        for i in 0..m {
            let num = self.w[i] * self.u[i] * gain[[i, i]];
            let den: f64 = (0..m)
                .map(|j| (gain[[j, i]] * self.u[j]).powi(2) * self.w[j])
                .sum();
            self.v[i] = if den > 0.0 {
                (num / den).clamp(0.0, cap)
            } else {
                if num == 0.0 {
                    self.degenerate = true;
                }
                0.0
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseOutput {
    pub powers: Vec<f64>,
    pub degenerate: bool,
}

/// Run `iters` WMMSE sweeps from full power with per-node cap `p_cap`.
pub fn wmmse(gain: &Array2<f64>, p_cap: f64, iters: usize, noise: f64) -> Result<WmmseOutput> {
    let m = gain.nrows();
    if gain.ncols() != m {
        return Err(Error::dim("gain columns", m, gain.ncols()));
    }
    if gain.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidParameter("gain must be nonnegative".into()));
    }
    let mut st = WmmseState::new(m, p_cap)?;
    for _ in 0..iters {
        st.step(gain, noise);
    }
    if st.degenerate {
        log::warn!("wmmse: zero-gain node encountered; its power is set to zero");
    }
    Ok(WmmseOutput {
        powers: st.powers(),
        degenerate: st.degenerate,
    })
}

/// Every transmitter gets `P_max / m`.
pub fn equal_power(m: usize, p_max: f64) -> Vec<f64> {
    vec![p_max / m as f64; m]
}

/// Probability with which the random baseline transmits at full power.
pub fn random_power_probability(m: usize, p_max: f64, p0: f64) -> Result<f64> {
    let q = p_max / (p0 * m as f64);
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!(
            "random baseline probability P_max/(p0·m) = {q} is outside [0, 1]"
        )));
    }
    Ok(q)
}

/// Each transmitter independently uses `p0` with probability `P_max/(p0·m)`.
pub fn random_power(m: usize, p_max: f64, p0: f64, rng: &mut rng::Rng) -> Result<Vec<f64>> {
    let q = random_power_probability(m, p_max, p0)?;
    Ok((0..m)
        .map(|_| if rng.random::<f64>() < q { p0 } else { 0.0 })
        .collect())
}
