//! Graph shift operators, node activation and the delayed aggregation
//! sequences every node builds from one neighbor exchange per time step.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Membership mask over nodes `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActiveSet(Vec<bool>);

impl ActiveSet {
    pub fn all(m: usize) -> Self {
        Self(vec![true; m])
    }

    pub fn none(m: usize) -> Self {
        Self(vec![false; m])
    }

    pub fn from_indices(m: usize, members: &[usize]) -> Result<Self> {
        let mut mask = vec![false; m];
        for &i in members {
            *mask
                .get_mut(i)
                .ok_or_else(|| Error::InvalidParameter(format!("node {i} out of range for m = {m}")))? =
                true;
        }
        Ok(Self(mask))
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self(mask)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.get(i).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn mask(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Debug, Clone)]
enum ScheduleMode {
    Synchronous,
    Asynchronous { subsets: Vec<ActiveSet>, rng: rng::Rng },
}

/// Which nodes are awake at each time step.
#[derive(Debug, Clone)]
pub struct ActivationSchedule {
    m: usize,
    mode: ScheduleMode,
}

impl ActivationSchedule {
    pub fn synchronous(m: usize) -> Self {
        Self {
            m,
            mode: ScheduleMode::Synchronous,
        }
    }

    /// Asynchronous schedule drawing uniformly from an explicit subset list.
    pub fn from_subsets(m: usize, subsets: Vec<ActiveSet>, seed: u64) -> Result<Self> {
        if subsets.is_empty() {
            return Err(Error::Config("asynchronous schedule needs at least one active subset".into()));
        }
        if let Some(s) = subsets.iter().find(|s| s.m() != m) {
            return Err(Error::dim("active subset", m, s.m()));
        }
        Ok(Self {
            m,
            mode: ScheduleMode::Asynchronous {
                subsets,
                rng: rng::substream(seed, &[stream::ACTIVATION, 1]),
            },
        })
    }

    /// Asynchronous schedule over `n_act` pre-generated subsets, each with
    /// Poisson(`lambda`) members (clamped to `[1, m]`) chosen uniformly.
    pub fn poisson_subsets(m: usize, lambda: f64, n_act: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSize("m must be at least 1".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("activation rate must be > 0, got {lambda}")));
        }
        let poisson = Poisson::new(lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = rng::substream(seed, &[stream::ACTIVATION, 0]);
        let subsets = (0..n_act)
            .map(|_| {
                let size = (poisson.sample(&mut rng) as usize).clamp(1, m);
                let mut mask = vec![false; m];
                for i in index::sample(&mut rng, m, size) {
                    mask[i] = true;
                }
                ActiveSet(mask)
            })
            .collect();
        Self::from_subsets(m, subsets, seed)
    }

    pub fn is_synchronous(&self) -> bool {
        matches!(self.mode, ScheduleMode::Synchronous)
    }

    pub fn subsets(&self) -> &[ActiveSet] {
        match &self.mode {
            ScheduleMode::Synchronous => &[],
            ScheduleMode::Asynchronous { subsets, .. } => subsets,
        }
    }

    /// Active set for the next time step.
    pub fn sample(&mut self) -> ActiveSet {
        match &mut self.mode {
            ScheduleMode::Synchronous => ActiveSet::all(self.m),
            ScheduleMode::Asynchronous { subsets, rng } => {
                subsets[rng.random_range(0..subsets.len())].clone()
            }
        }
    }
}

/// Sparsified channel `H̃ = H ∘ Q` used as the graph shift operator.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphShift {
    h_tilde: Array2<f64>,
    mask: Array2<bool>,
    eta0: f64,
}

/// Keep entry `(i, j)` iff `gain[i][j] ≥ eta0` and `j` is active.
pub fn sparsify(gain: &Array2<f64>, eta0: f64, active: &ActiveSet) -> Result<GraphShift> {
    if !(eta0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("eta0 must be >= 0, got {eta0}")));
    }
    let (m, cols) = gain.dim();
    if m != cols {
        return Err(Error::dim("gain columns", m, cols));
    }
    if active.m() != m {
        return Err(Error::dim("active set", m, active.m()));
    }
    let mask = Array2::from_shape_fn((m, m), |(i, j)| gain[[i, j]] >= eta0 && active.contains(j));
    let h_tilde = Array2::from_shape_fn((m, m), |(i, j)| if mask[[i, j]] { gain[[i, j]] } else { 0.0 });
    Ok(GraphShift { h_tilde, mask, eta0 })
}

impl GraphShift {
    pub fn from_matrix(h_tilde: Array2<f64>) -> Self {
        let mask = h_tilde.mapv(|v| v != 0.0);
        Self {
            h_tilde,
            mask,
            eta0: 0.0,
        }
    }

    pub fn h_tilde(&self) -> &Array2<f64> {
        &self.h_tilde
    }

    /// `Q`: whether `j ∈ N_i`.
    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn m(&self) -> usize {
        self.h_tilde.nrows()
    }

    /// One hop of aggregation: `H̃ · signal`.
    pub fn shift(&self, signal: ArrayView1<f64>) -> Result<Array1<f64>> {
        if signal.len() != self.m() {
            return Err(Error::dim("shift signal", self.m(), signal.len()));
        }
        Ok(self.h_tilde.dot(&signal))
    }
}

/// Per-node aggregation sequences `y_i(t) = [y_i^(0); …; y_i^(K−1)]`, one row
/// per node.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationState {
    y: Array2<f64>,
    prev_y: Array2<f64>,
}

impl AggregationState {
    /// Cold start: every entry zero until real exchanges fill it.
    pub fn new(m: usize, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidParameter("sequence length K must be at least 1".into()));
        }
        Ok(Self {
            y: Array2::zeros((m, k)),
            prev_y: Array2::zeros((m, k)),
        })
    }

    pub fn k(&self) -> usize {
        self.y.ncols()
    }

    pub fn m(&self) -> usize {
        self.y.nrows()
    }

    /// Current sequences, `m × K`.
    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn prev_y(&self) -> &Array2<f64> {
        &self.prev_y
    }

    /// Sequence held at node `i`.
    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.y.row(i)
    }

    /// Advance one time step with a single neighbor exchange:
    /// `y^(0)(t) = x(t)` and `y^(k)(t) = H̃(t) · y^(k−1)(t−1)`.
    ///
    /// Every node receives; inactive transmitters are already masked out as
    /// zero columns of `H̃`.
    pub fn advance(&mut self, gs: &GraphShift, x_now: &[f64]) -> Result<()> {
        let m = self.m();
        if gs.m() != m {
            return Err(Error::dim("graph shift", m, gs.m()));
        }
        if x_now.len() != m {
            return Err(Error::dim("node state", m, x_now.len()));
        }
        std::mem::swap(&mut self.prev_y, &mut self.y);
        let k = self.k();
        for (i, &xi) in x_now.iter().enumerate() {
            self.y[[i, 0]] = xi;
        }
        if k > 1 {
            let shifted = gs.h_tilde().dot(&self.prev_y.slice(ndarray::s![.., ..k - 1]));
            self.y.slice_mut(ndarray::s![.., 1..]).assign(&shifted);
        }
        Ok(())
    }

    /// Debug dump with columns `t,node,k,value`; writes the header when asked.
    pub fn write_csv<W: Write>(&self, w: W, t: usize, header: bool) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        if header {
            wtr.write_record(["t", "node", "k", "value"])?;
        }
        for ((node, k), v) in self.y.indexed_iter() {
            wtr.write_record(&[t.to_string(), node.to_string(), k.to_string(), format!("{v:e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_threshold_all_active_is_identity() {
        let g = array![[0.3, 0.0, 1.2], [0.1, 0.4, 0.2], [2.0, 0.5, 0.9]];
        let gs = sparsify(&g, 0.0, &ActiveSet::all(3)).unwrap();
        assert_eq!(gs.h_tilde(), &g);
    }

    #[test]
    fn single_entry_below_threshold() {
        let g = array![[0.5, 0.05], [0.2, 0.5]];
        let gs = sparsify(&g, 0.1, &ActiveSet::all(2)).unwrap();
        assert_eq!(gs.h_tilde(), &array![[0.5, 0.0], [0.2, 0.5]]);
    }

    #[test]
    fn inactive_columns_zeroed() {
        let mut r = rng::substream(3, &[]);
        let g = Array2::from_shape_fn((5, 5), |_| r.random_range(0.0..1.0));
        // Nodes 2 and 4 in one-based numbering.
        let active = ActiveSet::from_indices(5, &[1, 3]).unwrap();
        let gs = sparsify(&g, 0.0, &active).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if j == 1 || j == 3 { g[[i, j]] } else { 0.0 };
                assert_eq!(gs.h_tilde()[[i, j]], expect);
            }
        }
    }

    #[test]
    fn negative_threshold_rejected() {
        assert!(sparsify(&Array2::zeros((2, 2)), -1.0, &ActiveSet::all(2)).is_err());
    }

    #[test]
    fn shift_swaps() {
        let gs = GraphShift::from_matrix(array![[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(gs.shift(array![1.0, 2.0].view()).unwrap(), array![2.0, 1.0]);
        assert_eq!(gs.shift(array![0.0, 0.0].view()).unwrap(), array![0.0, 0.0]);
        assert!(gs.shift(array![1.0].view()).is_err());
    }

    #[test]
    fn shift_matches_naive_matvec() {
        let mut r = rng::substream(5, &[]);
        let h = Array2::from_shape_fn((4, 4), |_| r.random_range(0.0..2.0));
        let x: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let out = GraphShift::from_matrix(h.clone()).shift(ArrayView1::from(&x)).unwrap();
        for i in 0..4 {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += h[[i, j]] * x[j];
            }
            assert!((out[i] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn k_zero_rejected() {
        assert!(matches!(AggregationState::new(3, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn all_inactive_zeroes_shifted_entries() {
        let mut st = AggregationState::new(3, 3).unwrap();
        let gs_full = GraphShift::from_matrix(Array2::ones((3, 3)));
        for _ in 0..3 {
            st.advance(&gs_full, &[1.0, 2.0, 3.0]).unwrap();
        }
        let gs = sparsify(&Array2::ones((3, 3)), 0.0, &ActiveSet::none(3)).unwrap();
        st.advance(&gs, &[1.0, 2.0, 3.0]).unwrap();
        for i in 0..3 {
            assert_eq!(st.y()[[i, 0]], (i + 1) as f64);
            assert_eq!(st.y()[[i, 1]], 0.0);
            assert_eq!(st.y()[[i, 2]], 0.0);
        }
    }

    #[test]
    fn synchronous_schedule_is_full() {
        let mut s = ActivationSchedule::synchronous(25);
        assert_eq!(s.sample(), ActiveSet::all(25));
    }

    #[test]
    fn single_subset_always_drawn() {
        let only = ActiveSet::from_indices(4, &[2]).unwrap();
        let mut s = ActivationSchedule::from_subsets(4, vec![only.clone()], 1).unwrap();
        for _ in 0..20 {
            assert_eq!(s.sample(), only);
        }
    }

    #[test]
    fn empty_subset_list_rejected() {
        assert!(matches!(
            ActivationSchedule::from_subsets(4, vec![], 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_dump_has_one_row_per_entry() {
        let mut st = AggregationState::new(2, 2).unwrap();
        st.advance(&GraphShift::from_matrix(Array2::eye(2)), &[1.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        st.write_csv(&mut buf, 0, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().next().unwrap(), "t,node,k,value");
    }
}
