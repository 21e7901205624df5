use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeStateMode {
    /// `x(t) = 1` for every node; the power-control experiments ignore x.
    ConstantOne,
    /// Fresh Poisson packet arrivals each step.
    DemandPoisson { rate: f64 },
}

#[derive(Debug, Clone)]
pub struct NodeStateProcess {
    x: Vec<f64>,
    mode: NodeStateMode,
    poisson: Option<Poisson<f64>>,
    rng: rng::Rng,
}

impl NodeStateProcess {
    pub fn new(m: usize, mode: NodeStateMode, seed: u64) -> Result<Self> {
        let poisson = match mode {
            NodeStateMode::ConstantOne => None,
            NodeStateMode::DemandPoisson { rate } if rate < 0.0 || !rate.is_finite() => {
                return Err(Error::InvalidParameter(format!(
                    "demand rate must be nonnegative, got {rate}"
                )))
            }
            // Poisson(0) is degenerate at zero and not constructible.
            NodeStateMode::DemandPoisson { rate } if rate == 0.0 => None,
            NodeStateMode::DemandPoisson { rate } => Some(
                Poisson::new(rate).map_err(|e| Error::InvalidParameter(e.to_string()))?,
            ),
        };
        let mut ns = Self {
            x: vec![0.0; m],
            mode,
            poisson,
            rng: rng::substream(seed, &[stream::NODE_STATE]),
        };
        ns.step();
        Ok(ns)
    }

    /// Draw the next node state.
    pub fn step(&mut self) {
        match (self.mode, &self.poisson) {
            (NodeStateMode::ConstantOne, _) => self.x.fill(1.0),
            (NodeStateMode::DemandPoisson { .. }, None) => self.x.fill(0.0),
            (NodeStateMode::DemandPoisson { .. }, Some(p)) => {
                for v in &mut self.x {
                    *v = p.sample(&mut self.rng);
                }
            }
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn mode(&self) -> NodeStateMode {
        self.mode
    }
}
