mod common;

use aggnet_core::aggnn::{self, FilterTensor};
use aggnet_core::baselines::{wmmse, WmmseState};
use aggnet_core::pdtrainer::Estimator;
use aggnet_core::policy::{self, PolicySample};
use aggnet_core::rewards::{sumrate, utility_u0};
use aggnet_core::rng;
use common::*;
use ndarray::{array, Array2};
use rand::Rng as _;

fn random_y(r: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.5..1.5)).collect()
}

#[test]
fn forward_matches_naive_loops() {
    let mut r = rng::substream(11, &[]);
    for trial in 0..30 {
        let layers = if trial % 2 == 0 { aggnn::default_layers() } else { small_layers() };
        let a = aggnn::init_filters(layers, 1.0, trial).unwrap();
        let n = 1 + trial as usize % 7;
        let y = random_y(&mut r, n);
        let (z, _) = aggnn::forward(&a, &y).unwrap();
        let reference = naive_forward(&a, &y);
        assert!((z - reference).abs() <= 1e-12 * reference.abs().max(1.0), "{z} vs {reference}");
    }
}

#[test]
fn aggregation_matches_product_formula() {
    for asynchronous in [false, true] {
        for m in 1..=5 {
            for k in 1..=4 {
                let steps = 3 * k + 2;
                let h = random_history(m, steps, 0.2, asynchronous, (m * 10 + k) as u64);
                let states = aggregate(&h, k, 0.2);
                for (t, y) in states.iter().enumerate() {
                    for kk in 0..k {
                        let expect = product_formula(&h.shifts, &h.xs, t, kk);
                        for i in 0..m {
                            let got = y[[i, kk]];
                            assert!(
                                (got - expect[i]).abs() <= 1e-10,
                                "m={m} k={k} t={t} kk={kk} i={i}: {got} vs {}",
                                expect[i]
                            );
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn forward_gradient_matches_finite_differences() {
    let mut r = rng::substream(12, &[]);
    for trial in 0..24u64 {
        let layers = if trial % 3 == 0 { aggnn::default_layers() } else { small_layers() };
        let a = aggnn::init_filters_delta(layers, 0.5, trial).unwrap();
        let y = random_y(&mut r, 5);
        if near_kink(&a, std::slice::from_ref(&y), 1e-4) {
            continue;
        }
        let (_, acts) = aggnn::forward(&a, &y).unwrap();
        let g = aggnn::backward(&a, &acts, 1.0).unwrap();
        let fd = fd_gradient(&a, 1e-5, |p| aggnn::forward(p, &y).unwrap().0);
        let err = max_rel_err(g.as_slice(), &fd, 1e-6);
        assert!(err <= 1e-4, "trial {trial}: rel err {err}");
    }
}

fn log_psi(a: &FilterTensor, ys: &[Vec<f64>], on: &[bool]) -> f64 {
    ys.iter()
        .zip(on)
        .map(|(y, &o)| {
            let p = policy::sigmoid(aggnn::forward(a, y).unwrap().0);
            if o { p.ln() } else { (1.0 - p).ln() }
        })
        .sum()
}

#[test]
fn log_policy_gradient_matches_finite_differences() {
    let mut r = rng::substream(13, &[]);
    for trial in 0..24u64 {
        let a = aggnn::init_filters_delta(small_layers(), 0.7, 100 + trial).unwrap();
        let m = 2 + trial as usize % 4;
        let ys: Vec<Vec<f64>> = (0..m).map(|_| random_y(&mut r, 4)).collect();
        let on: Vec<bool> = (0..m).map(|_| r.random_bool(0.5)).collect();
        if near_kink(&a, &ys, 1e-4) {
            continue;
        }
        let (z, dz): (Vec<f64>, Vec<FilterTensor>) = ys
            .iter()
            .map(|y| {
                let (zi, acts) = aggnn::forward(&a, y).unwrap();
                (zi, aggnn::backward(&a, &acts, 1.0).unwrap())
            })
            .unzip();
        let s = PolicySample::from_decisions(&z, &on, 1.0).unwrap();
        let g = policy::log_prob_grad_chain(&s, &dz).unwrap();
        let fd = fd_gradient(&a, 1e-5, |p| log_psi(p, &ys, &on));
        let err = max_rel_err(g.as_slice(), &fd, 1e-6);
        assert!(err <= 1e-4, "trial {trial}: rel err {err}");
    }
}

fn frozen(gain: Array2<f64>, seed: u64) -> (Frozen, FilterTensor) {
    let mut r = rng::substream(seed, &[]);
    let inst = Frozen {
        gain,
        ys: (0..2).map(|_| random_y(&mut r, 3)).collect(),
        lambda: vec![0.7, 1.3],
        mu: 0.4,
        p0: 1.5,
        p_max: 2.0,
        noise: 1.0,
    };
    (inst, aggnn::init_filters_delta(small_layers(), 0.8, seed).unwrap())
}

#[test]
fn global_estimator_is_unbiased_by_enumeration() {
    for seed in 0..5 {
        let (inst, a) = frozen(array![[1.2, 0.6], [0.9, 0.8]], seed);
        let est = inst.estimator_expectation(&a, Estimator::Global);
        let exact = inst.analytic_gradient(&a);
        let fd = fd_gradient(&a, 1e-5, |p| inst.expected_objective(p));
        for ((e, x), d) in est.as_slice().iter().zip(exact.as_slice()).zip(&fd) {
            assert!((e - x).abs() <= 1e-8, "{e} vs {x}");
            assert!((x - d).abs() <= 1e-6 * x.abs().max(1.0), "{x} vs fd {d}");
        }
    }
}

#[test]
fn per_node_estimator_is_unbiased_without_interference() {
    for seed in 0..5 {
        let (inst, a) = frozen(array![[1.2, 0.0], [0.0, 0.8]], seed);
        let est = inst.estimator_expectation(&a, Estimator::PerNode);
        let exact = inst.analytic_gradient(&a);
        for (e, x) in est.as_slice().iter().zip(exact.as_slice()) {
            assert!((e - x).abs() <= 1e-8, "{e} vs {x}");
        }
    }
}

fn random_gain(m: usize, r: &mut rng::Rng) -> Array2<f64> {
    Array2::from_shape_fn((m, m), |(i, j)| {
        if i == j { r.random_range(0.5..2.0) } else { r.random_range(0.0..0.8) }
    })
}

#[test]
fn wmmse_asymmetric_strong_cross_silences_one_link() {
    let gain = array![[1.0, 4.0], [4.0, 0.9]];
    let out = wmmse(&gain, 10.0, 300, 1.0).unwrap();
    assert!(out.powers[0].min(out.powers[1]) < 0.05, "{:?}", out.powers);
    let achieved = utility_u0(&sumrate(&out.powers, &gain, None, 1.0).unwrap());
    let equal = utility_u0(&sumrate(&[10.0, 10.0], &gain, None, 1.0).unwrap());
    assert!(achieved >= equal);
    assert!(achieved >= 0.98 * grid_optimum(&gain, 10.0, 100));
}

#[test]
fn wmmse_sum_rate_never_decreases() {
    let mut r = rng::substream(14, &[]);
    for trial in 0..40 {
        let m = 2 + trial % 9;
        let gain = random_gain(m, &mut r);
        let mut st = WmmseState::new(m, r.random_range(0.5..10.0)).unwrap();
        let mut prev = utility_u0(&sumrate(&st.powers(), &gain, None, 1.0).unwrap());
        for _ in 0..50 {
            st.step(&gain, 1.0);
            let now = utility_u0(&sumrate(&st.powers(), &gain, None, 1.0).unwrap());
            assert!(now >= prev - 1e-9, "trial {trial}: {now} < {prev}");
            prev = now;
        }
    }
}

#[test]
fn wmmse_respects_caps() {
    let mut r = rng::substream(15, &[]);
    for trial in 0..40 {
        let m = 1 + trial % 12;
        let cap = r.random_range(0.1..20.0);
        let out = wmmse(&random_gain(m, &mut r), cap, 1 + trial % 7, 1.0).unwrap();
        assert!(out.powers.iter().all(|&p| (0.0..=cap).contains(&p)), "{:?} cap {cap}", out.powers);
    }
}

/// Exhaustive `points × points` power grid over `[0, cap]²`.
fn grid_optimum(gain: &Array2<f64>, cap: f64, points: usize) -> f64 {
    let mut best = 0.0f64;
    for a in 0..=points {
        for b in 0..=points {
            let p = [cap * a as f64 / points as f64, cap * b as f64 / points as f64];
            best = best.max(utility_u0(&sumrate(&p, gain, None, 1.0).unwrap()));
        }
    }
    best
}

#[test]
fn wmmse_two_link_weak_interference_near_grid_optimum() {
    let mut r = rng::substream(16, &[]);
    for trial in 0..30 {
        let gain = Array2::from_shape_fn((2, 2), |(i, j)| {
            if i == j { r.random_range(0.5..2.0) } else { r.random_range(0.0..0.15) }
        });
        let cap = r.random_range(1.0..10.0);
        let out = wmmse(&gain, cap, 500, 1.0).unwrap();
        let achieved = utility_u0(&sumrate(&out.powers, &gain, None, 1.0).unwrap());
        let best = grid_optimum(&gain, cap, 100);
        assert!(achieved >= 0.98 * best, "trial {trial}: wmmse {achieved} vs grid {best}");
    }
}
