use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub type Point = [f64; 2];

/// Default pathloss exponent.
pub const DEFAULT_GAMMA: f64 = 2.2;

/// Transmitter/receiver layout with its static large-scale pathloss.
///
/// `pathloss[[i, j]] = ‖tx_i − rx_{r(j)}‖^(−γ)`; row `i` is transmitter `i`,
/// column `j` is the receiver serving transmitter `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub tx_pos: Vec<Point>,
    pub rx_pos: Vec<Point>,
    pub pairing: Vec<usize>,
    pub gamma: f64,
    pub seed: u64,
    pub pathloss: Array2<f64>,
}

/// On-disk form of a topology. Pathloss is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub tx_pos: Vec<Point>,
    pub rx_pos: Vec<Point>,
    pub pairing: Vec<usize>,
    pub gamma: f64,
    pub seed: u64,
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn uniform_in(rng: &mut rng::Rng, center: Point, half: f64) -> Point {
    [
        center[0] + rng.random_range(-half..=half),
        center[1] + rng.random_range(-half..=half),
    ]
}

impl NetworkTopology {
    /// Build from explicit positions. Every transmitter/receiver pair must be
    /// at nonzero distance so that the pathloss stays finite.
    pub fn from_positions(
        tx_pos: Vec<Point>,
        rx_pos: Vec<Point>,
        pairing: Vec<usize>,
        gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        let m = tx_pos.len();
        if m == 0 {
            return Err(Error::InvalidSize("at least one transmitter required".into()));
        }
        if rx_pos.is_empty() {
            return Err(Error::InvalidSize("at least one receiver required".into()));
        }
        if pairing.len() != m {
            return Err(Error::dim("pairing", m, pairing.len()));
        }
        if let Some(&bad) = pairing.iter().find(|&&r| r >= rx_pos.len()) {
            return Err(Error::InvalidParameter(format!(
                "pairing refers to receiver {bad} but only {} exist",
                rx_pos.len()
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
        let pathloss = Array2::from_shape_fn((m, m), |(i, j)| {
            distance(tx_pos[i], rx_pos[pairing[j]]).powf(-gamma)
        });
        if let Some(bad) = pathloss.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coincident transmitter and receiver positions (pathloss {bad})"
            )));
        }
        Ok(Self {
            tx_pos,
            rx_pos,
            pairing,
            gamma,
            seed,
            pathloss,
        })
    }

    /// Number of transmitters.
    pub fn m(&self) -> usize {
        self.tx_pos.len()
    }

    /// Number of receivers.
    pub fn n(&self) -> usize {
        self.rx_pos.len()
    }

    pub fn to_doc(&self) -> TopologyDoc {
        TopologyDoc {
            tx_pos: self.tx_pos.clone(),
            rx_pos: self.rx_pos.clone(),
            pairing: self.pairing.clone(),
            gamma: self.gamma,
            seed: self.seed,
        }
    }

    pub fn from_doc(doc: TopologyDoc) -> Result<Self> {
        Self::from_positions(doc.tx_pos, doc.rx_pos, doc.pairing, doc.gamma, doc.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(s)?)
    }
}

/// Ad-hoc network: transmitters uniform in `[−m, m]²`, each receiver uniform
/// in the `±m/4` box around its transmitter, pairing `r(i) = i`.
pub fn generate_adhoc(m: usize, gamma: f64, seed: u64) -> Result<NetworkTopology> {
    generate_adhoc_in_area(m, m as f64, m as f64 / 4.0, gamma, seed)
}

/// Ad-hoc network with an explicit transmitter half-width and receiver offset.
///
/// Transference across scale keeps density fixed by dropping `m'` transmitters
/// in `[−√(m·m'), √(m·m')]²` while keeping the offset at `m/4`.
pub fn generate_adhoc_in_area(
    m: usize,
    half_width: f64,
    rx_offset: f64,
    gamma: f64,
    seed: u64,
) -> Result<NetworkTopology> {
    if m == 0 {
        return Err(Error::InvalidSize("m must be at least 1".into()));
    }
    if !(half_width > 0.0 && rx_offset > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "area half-width ({half_width}) and receiver offset ({rx_offset}) must be positive"
        )));
    }
    let mut rng = rng::substream(seed, &[stream::TOPOLOGY]);
    let tx_pos: Vec<Point> = (0..m)
        .map(|_| uniform_in(&mut rng, [0.0, 0.0], half_width))
        .collect();
    let mut rx_pos = Vec::with_capacity(m);
    for &a in &tx_pos {
        // Resample receivers that land exactly on a transmitter.
        let b = loop {
            let b = uniform_in(&mut rng, a, rx_offset);
            if tx_pos.iter().all(|&t| distance(t, b) > 0.0) {
                break b;
            }
        };
        rx_pos.push(b);
    }
    NetworkTopology::from_positions(tx_pos, rx_pos, (0..m).collect(), gamma, seed)
}

/// Grid placement of `n_bs` base stations over `[−half, half]²`; returns the
/// station centers and the (width, height) of each grid cell.
pub fn base_station_grid(n_bs: usize, half: f64) -> (Vec<Point>, f64, f64) {
    let cols = (n_bs as f64).sqrt().ceil() as usize;
    let rows = n_bs.div_ceil(cols);
    let w = 2.0 * half / cols as f64;
    let h = 2.0 * half / rows as f64;
    let centers = (0..n_bs)
        .map(|b| {
            let (r, c) = (b / cols, b % cols);
            [-half + (c as f64 + 0.5) * w, -half + (r as f64 + 0.5) * h]
        })
        .collect();
    (centers, w, h)
}

/// Index of the nearest base station for every user (lowest index on ties).
pub fn assign_nearest(users: &[Point], stations: &[Point]) -> Vec<usize> {
    users
        .iter()
        .map(|&u| {
            stations
                .iter()
                .enumerate()
                .map(|(b, &s)| (b, distance(u, s)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
                .0
        })
        .collect()
}

/// Multi-cell uplink: `m_users` user transmitters served by `n_bs` base
/// station receivers on a regular grid spanning `[−m_users, m_users]²`.
///
/// Users are split evenly across cells (remainder to the lowest-index cells)
/// and dropped uniformly inside their station's grid cell, so the nearest
/// station is always the serving one.
pub fn generate_cellular(n_bs: usize, m_users: usize, seed: u64) -> Result<NetworkTopology> {
    generate_cellular_with_gamma(n_bs, m_users, DEFAULT_GAMMA, seed)
}

pub fn generate_cellular_with_gamma(
    n_bs: usize,
    m_users: usize,
    gamma: f64,
    seed: u64,
) -> Result<NetworkTopology> {
    if n_bs == 0 {
        return Err(Error::InvalidSize("n_bs must be at least 1".into()));
    }
    if m_users < n_bs {
        return Err(Error::InvalidSize(format!(
            "m_users ({m_users}) must be at least n_bs ({n_bs})"
        )));
    }
    let half = m_users as f64;
    let (stations, w, h) = base_station_grid(n_bs, half);
    let mut rng = rng::substream(seed, &[stream::TOPOLOGY]);
    let base = m_users / n_bs;
    let extra = m_users % n_bs;
    let mut users = Vec::with_capacity(m_users);
    for (b, &c) in stations.iter().enumerate() {
        let count = base + usize::from(b < extra);
        for _ in 0..count {
            let u = loop {
                let u = [
                    c[0] + rng.random_range(-w / 2.0..w / 2.0),
                    c[1] + rng.random_range(-h / 2.0..h / 2.0),
                ];
                if stations.iter().all(|&s| distance(s, u) > 0.0) {
                    break u;
                }
            };
            users.push(u);
        }
    }
    let pairing = assign_nearest(&users, &stations);
    NetworkTopology::from_positions(users, stations, pairing, gamma, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adhoc_positions_respect_boxes() {
        let t = generate_adhoc(25, 2.2, 7).unwrap();
        assert_eq!(t.m(), 25);
        assert_eq!(t.n(), 25);
        for i in 0..25 {
            let a = t.tx_pos[i];
            let b = t.rx_pos[i];
            assert!(a[0].abs() <= 25.0 && a[1].abs() <= 25.0);
            assert!((a[0] - b[0]).abs() <= 6.25 && (a[1] - b[1]).abs() <= 6.25);
            assert_eq!(t.pairing[i], i);
        }
        assert!(t.pathloss.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn unit_distance_gives_unit_pathloss() {
        let t = NetworkTopology::from_positions(
            vec![[0.0, 0.0]],
            vec![[1.0, 0.0]],
            vec![0],
            2.2,
            0,
        )
        .unwrap();
        assert_eq!(t.pathloss[[0, 0]], 1.0);
    }

    #[test]
    fn two_pair_pathloss_table() {
        let t = NetworkTopology::from_positions(
            vec![[0.0, 0.0], [10.0, 0.0]],
            vec![[0.0, 1.0], [10.0, 1.0]],
            vec![0, 1],
            2.2,
            0,
        )
        .unwrap();
        // Hand table: direct links at distance 1, cross links at √101.
        let cross = 101f64.sqrt().powf(-2.2);
        let expected = [[1.0, cross], [cross, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t.pathloss[[i, j]] - expected[i][j]).abs() < 1e-15);
            }
        }
        assert!((cross - 0.006_240_889_438_574).abs() < 1e-14);
    }

    #[test]
    fn zero_m_rejected() {
        assert!(matches!(generate_adhoc(0, 2.2, 1), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn coincident_positions_rejected() {
        let r = NetworkTopology::from_positions(
            vec![[1.0, 1.0]],
            vec![[1.0, 1.0]],
            vec![0],
            2.2,
            0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn cellular_even_split() {
        let t = generate_cellular(5, 50, 3).unwrap();
        assert_eq!(t.m(), 50);
        assert_eq!(t.n(), 5);
        let mut counts = [0usize; 5];
        for &r in &t.pairing {
            counts[r] += 1;
        }
        assert_eq!(counts, [10; 5]);
    }

    #[test]
    fn cellular_remainder_to_low_cells() {
        let t = generate_cellular(3, 8, 1).unwrap();
        let mut counts = [0usize; 3];
        for &r in &t.pairing {
            counts[r] += 1;
        }
        assert_eq!(counts, [3, 3, 2]);
    }

    #[test]
    fn cellular_single_pair() {
        let t = generate_cellular(1, 1, 0).unwrap();
        assert_eq!(t.pairing, vec![0]);
    }

    #[test]
    fn cellular_too_few_users() {
        assert!(matches!(generate_cellular(3, 2, 0), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn nearest_station_matches_exhaustive_check() {
        let stations = [[-5.0, 0.0], [5.0, 0.0]];
        let users = [[-4.0, 1.0], [0.5, 3.0], [-0.1, -2.0], [9.0, 9.0]];
        let pairing = assign_nearest(&users, &stations);
        for (u, &r) in users.iter().zip(&pairing) {
            let d = |s: Point| ((u[0] - s[0]).powi(2) + (u[1] - s[1]).powi(2)).sqrt();
            for s in &stations {
                assert!(d(stations[r]) <= d(*s));
            }
        }
        assert_eq!(pairing, vec![0, 1, 0, 1]);
    }

    #[test]
    fn json_round_trip() {
        let t = generate_adhoc(6, 2.2, 11).unwrap();
        let back = NetworkTopology::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn same_seed_same_topology() {
        assert_eq!(generate_adhoc(10, 2.2, 5).unwrap(), generate_adhoc(10, 2.2, 5).unwrap());
        assert_ne!(generate_adhoc(10, 2.2, 5).unwrap(), generate_adhoc(10, 2.2, 6).unwrap());
    }
}
