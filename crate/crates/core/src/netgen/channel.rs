use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Gauss–Markov Rayleigh fading on top of a static pathloss matrix.
///
/// Each complex fading entry evolves as
/// `h(t+1) = √(1−δ)·h(t) + √δ·w(t+1)` with `w` complex normal, per-part
/// variance σ². Entry `(i, j)` draws from its own substream keyed by
/// `(seed, i, j)`, so trajectories do not depend on evaluation order.
#[derive(Debug, Clone)]
pub struct ChannelProcess {
    pathloss: Array2<f64>,
    fading_re: Array2<f64>,
    fading_im: Array2<f64>,
    gain: Array2<f64>,
    delta: f64,
    sigma: f64,
    streams: Vec<rng::Rng>,
}

impl ChannelProcess {
    /// Start the process from its stationary law: real and imaginary parts
    /// i.i.d. N(0, σ²).
    pub fn new(pathloss: Array2<f64>, delta: f64, sigma: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!("delta must lie in [0, 1], got {delta}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        let (rows, cols) = pathloss.dim();
        if rows != cols {
            return Err(Error::dim("pathloss columns", rows, cols));
        }
        if pathloss.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("pathloss must be finite and nonnegative".into()));
        }
        let mut streams: Vec<rng::Rng> = (0..rows * cols)
            .map(|e| rng::substream(seed, &[stream::FADING, (e / cols) as u64, (e % cols) as u64]))
            .collect();
        let mut fading_re = Array2::zeros((rows, cols));
        let mut fading_im = Array2::zeros((rows, cols));
        for (e, r) in streams.iter_mut().enumerate() {
            let idx = (e / cols, e % cols);
            fading_re[idx] = sigma * r.sample::<f64, _>(StandardNormal);
            fading_im[idx] = sigma * r.sample::<f64, _>(StandardNormal);
        }
        let mut cp = Self {
            gain: Array2::zeros((rows, cols)),
            pathloss,
            fading_re,
            fading_im,
            delta,
            sigma,
            streams,
        };
        cp.refresh_gain();
        Ok(cp)
    }

    fn refresh_gain(&mut self) {
        ndarray::Zip::from(&mut self.gain)
            .and(&self.pathloss)
            .and(&self.fading_re)
            .and(&self.fading_im)
            .for_each(|g, &pl, &re, &im| *g = pl * re.hypot(im));
    }

    /// Advance one time step.
    pub fn step(&mut self) {
        if self.delta == 0.0 {
            return;
        }
        let keep = (1.0 - self.delta).sqrt();
        let innov = self.delta.sqrt() * self.sigma;
        let cols = self.gain.ncols();
        for (e, r) in self.streams.iter_mut().enumerate() {
            let idx = (e / cols, e % cols);
            let wr: f64 = r.sample(StandardNormal);
            let wi: f64 = r.sample(StandardNormal);
            self.fading_re[idx] = keep * self.fading_re[idx] + innov * wr;
            self.fading_im[idx] = keep * self.fading_im[idx] + innov * wi;
        }
        self.refresh_gain();
    }

    /// Channel magnitudes `|h_ij| = pathloss_ij · |h^f_ij|`.
    pub fn gain(&self) -> &Array2<f64> {
        &self.gain
    }

    pub fn fading_re(&self) -> &Array2<f64> {
        &self.fading_re
    }

    pub fn fading_im(&self) -> &Array2<f64> {
        &self.fading_im
    }

    pub fn pathloss(&self) -> &Array2<f64> {
        &self.pathloss
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn m(&self) -> usize {
        self.gain.nrows()
    }
}
