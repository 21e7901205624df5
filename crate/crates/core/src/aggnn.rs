//! Aggregation GNN: a causal 1-D convolutional network shared by every node
//! and applied to that node's aggregation sequence.
//!
//! Layer `l` maps `F_{l−1}` input sequences to `F_l` output sequences of the
//! same length `K` with
//!
//! ```text
//! v_f[n] = Σ_g Σ_{k=0}^{K_l−1} α_l^{fg}[k] · y_g[n − k]     (y_g[<0] = 0)
//! ```
//!
//! followed by ReLU on every layer but the last. The last layer has a single
//! feature whose sequence mean is the node's logit `z`.

use std::fmt::Write as _;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub in_features: usize,
    pub out_features: usize,
    pub taps: usize,
}

impl LayerSpec {
    pub fn new(in_features: usize, out_features: usize, taps: usize) -> Self {
        Self {
            in_features,
            out_features,
            taps,
        }
    }

    pub fn param_count(&self) -> usize {
        self.in_features * self.out_features * self.taps
    }
}

/// Layer list for `layers` layers of `features` features and `taps` taps.
/// The first layer reads one feature, the last emits one.
pub fn uniform_layers(layers: usize, features: usize, taps: usize) -> Vec<LayerSpec> {
    (0..layers)
        .map(|l| {
            let f_in = if l == 0 { 1 } else { features };
            let f_out = if l + 1 == layers { 1 } else { features };
            LayerSpec::new(f_in, f_out, taps)
        })
        .collect()
}

/// Ten single-feature layers of ten taps: 100 parameters.
pub fn default_layers() -> Vec<LayerSpec> {
    uniform_layers(10, 1, 10)
}

fn validate_layers(layers: &[LayerSpec]) -> Result<()> {
    let (first, last) = match (layers.first(), layers.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Structure("layer spec is empty".into())),
    };
    if first.in_features != 1 {
        return Err(Error::Structure(format!(
            "first layer must read one feature, got {}",
            first.in_features
        )));
    }
    if last.out_features != 1 {
        return Err(Error::Structure(format!(
            "last layer must emit one feature, got {}",
            last.out_features
        )));
    }
    for (l, pair) in layers.windows(2).enumerate() {
        if pair[0].out_features != pair[1].in_features {
            return Err(Error::Structure(format!(
                "layer {} emits {} features but layer {} reads {}",
                l,
                pair[0].out_features,
                l + 1,
                pair[1].in_features
            )));
        }
    }
    if let Some(l) = layers.iter().position(|s| s.taps == 0 || s.out_features == 0) {
        return Err(Error::Structure(format!("layer {l} has zero taps or features")));
    }
    Ok(())
}

/// All filter taps `{α_l^{fg}}` stored flat, layer by layer, `[f][g][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTensor {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    taps: Vec<f64>,
}

impl FilterTensor {
    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        validate_layers(&layers)?;
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for s in &layers {
            offsets.push(total);
            total += s.param_count();
        }
        Ok(Self {
            layers,
            offsets,
            taps: vec![0.0; total],
        })
    }

    pub fn from_taps(layers: Vec<LayerSpec>, taps: Vec<f64>) -> Result<Self> {
        let mut t = Self::zeros(layers)?;
        if taps.len() != t.taps.len() {
            return Err(Error::dim("filter taps", t.taps.len(), taps.len()));
        }
        t.taps = taps;
        Ok(t)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            offsets: self.offsets.clone(),
            taps: vec![0.0; self.taps.len()],
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.taps.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.taps
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.taps
    }

    fn index(&self, l: usize, f: usize, g: usize, k: usize) -> usize {
        let s = &self.layers[l];
        self.offsets[l] + (f * s.in_features + g) * s.taps + k
    }

    /// Tap `[α_l^{fg}]_k` (zero-based).
    pub fn tap(&self, l: usize, f: usize, g: usize, k: usize) -> f64 {
        self.taps[self.index(l, f, g, k)]
    }

    pub fn set_tap(&mut self, l: usize, f: usize, g: usize, k: usize, v: f64) {
        let i = self.index(l, f, g, k);
        self.taps[i] = v;
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.layers != other.layers {
            return Err(Error::Structure(format!(
                "filter layouts differ: {:?} vs {:?}",
                self.layers, other.layers
            )));
        }
        Ok(())
    }

    /// `self += a · other`.
    pub fn add_scaled(&mut self, other: &Self, a: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (x, y) in self.taps.iter_mut().zip(&other.taps) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.taps.iter_mut().for_each(|x| *x *= a);
    }

    pub fn norm(&self) -> f64 {
        self.taps.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.taps.iter().all(|x| x.is_finite())
    }

    /// Text form: a header, one `in out taps` line per layer, then one tap per
    /// line with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "aggnn-filters v1");
        let _ = writeln!(s, "layers {}", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(s, "{} {} {}", l.in_features, l.out_features, l.taps);
        }
        let _ = writeln!(s, "taps {}", self.taps.len());
        for t in &self.taps {
            let _ = writeln!(s, "{t:.16e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("filter tensor: {msg}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("aggnn-filters v1") {
            return Err(bad("missing header"));
        }
        let count = |line: Option<&str>, key: &str| -> Result<usize> {
            line.and_then(|l| l.strip_prefix(key))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(&format!("expected `{key} <count>`")))
        };
        let n_layers = count(lines.next(), "layers")?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let fields: Vec<usize> = lines
                .next()
                .ok_or_else(|| bad("truncated layer list"))?
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad("bad layer line")))
                .collect::<Result<_>>()?;
            match fields[..] {
                [i, o, k] => layers.push(LayerSpec::new(i, o, k)),
                _ => return Err(bad("layer line needs three integers")),
            }
        }
        let n_taps = count(lines.next(), "taps")?;
        let taps: Vec<f64> = lines
            .map(|l| l.parse().map_err(|_| bad(&format!("bad tap value `{l}`"))))
            .collect::<Result<_>>()?;
        if taps.len() != n_taps {
            return Err(bad(&format!("declared {n_taps} taps, found {}", taps.len())));
        }
        Self::from_taps(layers, taps)
    }
}

/// Taps i.i.d. uniform in `[−scale/√K_l, scale/√K_l]`.
pub fn init_filters(layers: Vec<LayerSpec>, scale: f64, seed: u64) -> Result<FilterTensor> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("init scale must be > 0, got {scale}")));
    }
    let mut t = FilterTensor::zeros(layers)?;
    let mut r = rng::substream(seed, &[stream::INIT]);
    for l in 0..t.layers.len() {
        let bound = scale / (t.layers[l].taps as f64).sqrt();
        let (start, len) = (t.offsets[l], t.layers[l].param_count());
        for v in &mut t.taps[start..start + len] {
            *v = r.random_range(-bound..=bound);
        }
    }
    Ok(t)
}

/// Delta initialization: [`init_filters`] draws, plus a unit lag-0 tap
/// from input feature `f mod F_in` to output feature `f` in every hidden
/// layer. Hidden layers start as near pass-throughs; the output layer keeps
/// its plain draw.
pub fn init_filters_delta(layers: Vec<LayerSpec>, scale: f64, seed: u64) -> Result<FilterTensor> {
    let mut t = init_filters(layers, scale, seed)?;
    for l in 0..t.layers.len() - 1 {
        let LayerSpec { in_features, out_features, .. } = t.layers[l];
        for f in 0..out_features {
            let g = f % in_features;
            let v = t.tap(l, f, g, 0) + 1.0;
            t.set_tap(l, f, g, 0, v);
        }
    }
    Ok(t)
}

/// Intermediate sequences of one forward pass, kept for backpropagation.
/// Each entry is feature-major: `[feature * K + n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    seq_len: usize,
    layers: Vec<LayerSpec>,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl LayerActivations {
    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Input sequences to layer `l` (`y_{i(l−1)}`).
    pub fn input(&self, l: usize) -> &[f64] {
        &self.inputs[l]
    }

    /// Pre-activations of layer `l` (`v_il`).
    pub fn pre_activation(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }

    /// Final-layer output sequence.
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Evaluate the network on one aggregation sequence; returns the scalar logit
/// `z` and the activations needed by [`backward`].
pub fn forward(a: &FilterTensor, y: &[f64]) -> Result<(f64, LayerActivations)> {
    let k = y.len();
    if k == 0 {
        return Err(Error::InvalidParameter("aggregation sequence must be nonempty".into()));
    }
    let last = a.layers.len() - 1;
    let mut inputs = Vec::with_capacity(a.layers.len());
    let mut pre = Vec::with_capacity(a.layers.len());
    let mut current = y.to_vec();
    for (l, s) in a.layers.iter().enumerate() {
        let mut v = vec![0.0; s.out_features * k];
        for f in 0..s.out_features {
            for g in 0..s.in_features {
                let w = &a.taps[a.index(l, f, g, 0)..a.index(l, f, g, 0) + s.taps];
                let src = &current[g * k..(g + 1) * k];
                let dst = &mut v[f * k..(f + 1) * k];
                for (n, out) in dst.iter_mut().enumerate() {
                    *out += w
                        .iter()
                        .take(n + 1)
                        .enumerate()
                        .map(|(j, wj)| wj * src[n - j])
                        .sum::<f64>();
                }
            }
        }
        let next = if l == last {
            v.clone()
        } else {
            v.iter().copied().map(relu).collect()
        };
        inputs.push(std::mem::replace(&mut current, next));
        pre.push(v);
    }
    let z = current.iter().sum::<f64>() / k as f64;
    Ok((
        z,
        LayerActivations {
            seq_len: k,
            layers: a.layers.clone(),
            inputs,
            pre,
        },
    ))
}

/// Gradient of `upstream · z` with respect to every tap. ReLU'(0) = 0.
pub fn backward(a: &FilterTensor, acts: &LayerActivations, upstream: f64) -> Result<FilterTensor> {
    if acts.layers != a.layers {
        return Err(Error::Structure(
            "activations were produced by a filter tensor with a different layout".into(),
        ));
    }
    let k = acts.seq_len;
    let mut grad = a.zeros_like();
    if upstream == 0.0 {
        return Ok(grad);
    }
    let last = a.layers.len() - 1;
    // Gradient w.r.t. the current layer's output sequences.
    let mut d_out = vec![upstream / k as f64; k];
    for l in (0..=last).rev() {
        let s = a.layers[l];
        let pre = &acts.pre[l];
        let d_pre: Vec<f64> = if l == last {
            d_out
        } else {
            d_out
                .iter()
                .zip(pre)
                .map(|(d, &p)| if p > 0.0 { *d } else { 0.0 })
                .collect()
        };
        let input = &acts.inputs[l];
        let mut d_in = vec![0.0; s.in_features * k];
        for f in 0..s.out_features {
            for g in 0..s.in_features {
                let base = a.index(l, f, g, 0);
                for j in 0..s.taps.min(k) {
                    let mut gw = 0.0;
                    let w = a.taps[base + j];
                    for n in j..k {
                        let dp = d_pre[f * k + n];
                        gw += dp * input[g * k + n - j];
                        d_in[g * k + n - j] += dp * w;
                    }
                    grad.taps[base + j] += gw;
                }
            }
        }
        d_out = d_in;
    }
    Ok(grad)
}
