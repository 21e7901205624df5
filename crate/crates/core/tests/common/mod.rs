//! Independent reference implementations shared by the integration suites.

#![allow(dead_code)]

use aggnet_core::aggnn::{self, FilterTensor, LayerSpec};
use aggnet_core::graphflow::{sparsify, ActiveSet, AggregationState};
use aggnet_core::pdtrainer::{self, Estimator};
use aggnet_core::policy::{self, PolicySample};
use aggnet_core::rewards;
use aggnet_core::rng;
use ndarray::Array2;
use rand::Rng as _;

/// Direct nested-loop evaluation of the layered causal convolution with
/// ReLU on hidden layers and mean readout.
pub fn naive_forward(a: &FilterTensor, y: &[f64]) -> f64 {
    let n = y.len();
    let mut cur: Vec<Vec<f64>> = vec![y.to_vec()];
    let layers = a.layers().to_vec();
    for (l, spec) in layers.iter().enumerate() {
        let mut next = vec![vec![0.0; n]; spec.out_features];
        for (f, out) in next.iter_mut().enumerate() {
            for t in 0..n {
                let mut acc = 0.0;
                for (g, input) in cur.iter().enumerate() {
                    for k in 0..spec.taps {
                        if t >= k {
                            acc += a.tap(l, f, g, k) * input[t - k];
                        }
                    }
                }
                out[t] = if l + 1 < layers.len() { acc.max(0.0) } else { acc };
            }
        }
        cur = next;
    }
    cur[0].iter().sum::<f64>() / n as f64
}

/// Central finite-difference gradient of `f` with respect to every tap.
pub fn fd_gradient(a: &FilterTensor, h: f64, f: impl Fn(&FilterTensor) -> f64) -> Vec<f64> {
    let mut probe = a.clone();
    (0..a.param_count())
        .map(|p| {
            let orig = probe.as_slice()[p];
            probe.as_mut_slice()[p] = orig + h;
            let up = f(&probe);
            probe.as_mut_slice()[p] = orig - h;
            let down = f(&probe);
            probe.as_mut_slice()[p] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinatewise relative error, with `floor` guarding the
/// denominator of coordinates that are zero in both.
pub fn max_rel_err(analytic: &[f64], reference: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(reference)
        .map(|(a, r)| (a - r).abs() / a.abs().max(r.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// `y^{(k)}(t) = H̃(t) H̃(t−1) ⋯ H̃(t−k+1) x(t−k)`, zero before time 0.
pub fn product_formula(shifts: &[Array2<f64>], xs: &[Vec<f64>], t: usize, k: usize) -> Vec<f64> {
    let m = xs[0].len();
    if k > t {
        return vec![0.0; m];
    }
    let mut v = ndarray::Array1::from(xs[t - k].clone());
    for s in (0..k).rev() {
        v = shifts[t - s].dot(&v);
    }
    v.to_vec()
}

/// A random channel/state/activation history and its masked shifts.
pub struct History {
    pub gains: Vec<Array2<f64>>,
    pub xs: Vec<Vec<f64>>,
    pub active: Vec<ActiveSet>,
    pub shifts: Vec<Array2<f64>>,
}

pub fn random_history(m: usize, steps: usize, eta0: f64, asynchronous: bool, seed: u64) -> History {
    let mut r = rng::substream(seed, &[1]);
    let mut h = History {
        gains: vec![],
        xs: vec![],
        active: vec![],
        shifts: vec![],
    };
    for _ in 0..steps {
        let g = Array2::from_shape_fn((m, m), |_| r.random_range(0.0..1.0));
        let x: Vec<f64> = (0..m).map(|_| r.random_range(0.0..2.0)).collect();
        let a = if asynchronous {
            ActiveSet::from_mask((0..m).map(|_| r.random_bool(0.5)).collect())
        } else {
            ActiveSet::all(m)
        };
        h.shifts.push(sparsify(&g, eta0, &a).unwrap().h_tilde().clone());
        h.gains.push(g);
        h.xs.push(x);
        h.active.push(a);
    }
    h
}

/// Run the recursive aggregation over a history, returning every state.
pub fn aggregate(h: &History, k: usize, eta0: f64) -> Vec<Array2<f64>> {
    let m = h.xs[0].len();
    let mut agg = AggregationState::new(m, k).unwrap();
    h.gains
        .iter()
        .zip(&h.xs)
        .zip(&h.active)
        .map(|((g, x), a)| {
            agg.advance(&sparsify(g, eta0, a).unwrap(), x).unwrap();
            agg.y().clone()
        })
        .collect()
}

/// Frozen two-node (or small) instance for exhaustive-outcome checks.
pub struct Frozen {
    pub gain: Array2<f64>,
    pub ys: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub p0: f64,
    pub p_max: f64,
    pub noise: f64,
}

impl Frozen {
    pub fn logits(&self, a: &FilterTensor) -> Vec<f64> {
        self.ys.iter().map(|y| aggnn::forward(a, y).unwrap().0).collect()
    }

    pub fn signal(&self, actions: &[f64]) -> f64 {
        let f = rewards::sumrate(actions, &self.gain, None, self.noise).unwrap();
        self.lambda.iter().zip(&f).map(|(l, v)| l * v).sum::<f64>()
            + self.mu * rewards::power_slack(actions, self.p_max)
    }

    pub fn outcomes(&self) -> Vec<Vec<bool>> {
        let m = self.ys.len();
        (0..1usize << m)
            .map(|bits| (0..m).map(|i| bits >> i & 1 == 1).collect())
            .collect()
    }

    /// `E[λᵀf + μ·slack]` by summing over every joint action.
    pub fn expected_objective(&self, a: &FilterTensor) -> f64 {
        let z = self.logits(a);
        self.outcomes()
            .iter()
            .map(|on| {
                let s = PolicySample::from_decisions(&z, on, self.p0).unwrap();
                s.joint_probability() * self.signal(&s.actions)
            })
            .sum()
    }

    /// Analytic gradient of the expected objective by the product rule:
    /// `∂P(o)/∂z_i = ±π_i(1−π_i) Π_{j≠i} q_j`.
    pub fn analytic_gradient(&self, a: &FilterTensor) -> FilterTensor {
        let m = self.ys.len();
        let (z, dz): (Vec<f64>, Vec<FilterTensor>) = self
            .ys
            .iter()
            .map(|y| {
                let (zi, acts) = aggnn::forward(a, y).unwrap();
                (zi, aggnn::backward(a, &acts, 1.0).unwrap())
            })
            .unzip();
        let pi: Vec<f64> = z.iter().map(|&v| policy::sigmoid(v)).collect();
        let mut g = a.zeros_like();
        for on in self.outcomes() {
            let actions: Vec<f64> = on.iter().map(|&b| if b { self.p0 } else { 0.0 }).collect();
            let s = self.signal(&actions);
            for i in 0..m {
                let mut d = if on[i] { 1.0 } else { -1.0 } * pi[i] * (1.0 - pi[i]);
                for j in (0..m).filter(|&j| j != i) {
                    d *= if on[j] { pi[j] } else { 1.0 - pi[j] };
                }
                g.add_scaled(&dz[i], s * d).unwrap();
            }
        }
        g
    }

    /// Probability-weighted average of the stochastic estimator over all
    /// outcomes (no baseline).
    pub fn estimator_expectation(&self, a: &FilterTensor, estimator: Estimator) -> FilterTensor {
        let (z, dz): (Vec<f64>, Vec<FilterTensor>) = self
            .ys
            .iter()
            .map(|y| {
                let (zi, acts) = aggnn::forward(a, y).unwrap();
                (zi, aggnn::backward(a, &acts, 1.0).unwrap())
            })
            .unzip();
        let mut mean = a.zeros_like();
        for on in self.outcomes() {
            let s = PolicySample::from_decisions(&z, &on, self.p0).unwrap();
            let f = rewards::sumrate(&s.actions, &self.gain, None, self.noise).unwrap();
            let w = pdtrainer::signal_weights(estimator, &self.lambda, self.mu, &f, &s.actions, self.p_max);
            let g = pdtrainer::score_gradient(&s, &dz, &w).unwrap();
            mean.add_scaled(&g, s.joint_probability()).unwrap();
        }
        mean
    }
}

pub fn small_layers() -> Vec<LayerSpec> {
    aggnn::uniform_layers(3, 2, 3)
}

/// True when some hidden pre-activation is nonzero but within `margin` of
/// the ReLU kink, where a finite-difference stencil may straddle it.
pub fn near_kink(a: &FilterTensor, ys: &[Vec<f64>], margin: f64) -> bool {
    let hidden = a.layers().len() - 1;
    ys.iter().any(|y| {
        let (_, acts) = aggnn::forward(a, y).unwrap();
        (0..hidden).any(|l| acts.pre_activation(l).iter().any(|v| *v != 0.0 && v.abs() < margin))
    })
}
