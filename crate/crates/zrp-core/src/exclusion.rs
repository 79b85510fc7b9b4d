//! Bijection between the constant-rate zero-range process and the
//! asymmetric simple exclusion process, with an exact generator
//! conjugation check.
//!
//! An exclusion configuration on 1..=(N+k-1) with k particles has N-1
//! empty sites z_1 < ... < z_{N-1}; with z_0 = 0 and z_N = N+k the gaps
//! z_i - z_{i-1} - 1 are the zero-range occupancies. The boundary value
//! z_N = N+k is the unique choice conserving the particle count.

use crate::lattice::{Configuration, Direction};
use crate::mixing::{state_count, MixingError, StateIndex};
use crate::sim::{Control, EventEngine, JumpProcess, SimError, TrajectorySample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExclusionError {
    #[error("expected {expected} empty sites, found {found}")]
    BadShape { expected: usize, found: usize },
    #[error("occupancies must be 0 or 1")]
    NotBinary,
    #[error("state space too large: {0}")]
    TooLarge(u128),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Hard-core configuration on sites 1..=(n_zrp + k - 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExclusionConfig {
    pub occupancy: Vec<u8>,
}

impl ExclusionConfig {
    pub fn new(occupancy: Vec<u8>) -> Result<Self, ExclusionError> {
        if occupancy.iter().any(|&x| x > 1) {
            return Err(ExclusionError::NotBinary);
        }
        Ok(Self { occupancy })
    }

    pub fn particles(&self) -> usize {
        self.occupancy.iter().filter(|&&x| x == 1).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.occupancy).expect("serializing a vec of ints cannot fail")
    }
}

/// Exclusion -> zero-range: gaps between consecutive empty sites.
pub fn sep_to_zrp(xi: &ExclusionConfig, n_zrp: usize) -> Result<Configuration, ExclusionError> {
    let empties: Vec<usize> = xi
        .occupancy
        .iter()
        .enumerate()
        .filter(|(_, &x)| x == 0)
        .map(|(i, _)| i + 1)
        .collect();
    if empties.len() != n_zrp - 1 {
        return Err(ExclusionError::BadShape { expected: n_zrp - 1, found: empties.len() });
    }
    let k = xi.particles();
    let mut z = Vec::with_capacity(n_zrp + 1);
    z.push(0usize);
    z.extend(&empties);
    z.push(n_zrp + k);
    let occupancy = z.windows(2).map(|w| (w[1] - w[0] - 1) as u32).collect();
    Ok(Configuration::new(occupancy))
}

/// Zero-range -> exclusion: empty sites at i + h(i).
pub fn zrp_to_sep(eta: &Configuration) -> ExclusionConfig {
    let n = eta.len();
    let k = eta.mass() as usize;
    let mut occ = vec![1u8; n + k - 1];
    let mut h = 0usize;
    for i in 1..n {
        h += eta.occupancy[i - 1] as usize;
        occ[i + h - 1] = 0;
    }
    ExclusionConfig { occupancy: occ }
}

/// Asymmetric exclusion dynamics: a particle hops right at rate p and
/// left at rate q onto empty neighbours only.
pub struct AsepProcess {
    pub occ: Vec<u8>,
    pub p: f64,
}

impl JumpProcess for AsepProcess {
    fn num_sites(&self) -> usize {
        self.occ.len()
    }

    fn site_rate(&self, idx: usize, dir: Direction) -> f64 {
        if self.occ[idx] == 0 {
            return 0.0;
        }
        match dir {
            Direction::Right => {
                if idx + 1 < self.occ.len() && self.occ[idx + 1] == 0 {
                    self.p
                } else {
                    0.0
                }
            }
            Direction::Left => {
                if idx > 0 && self.occ[idx - 1] == 0 {
                    1.0 - self.p
                } else {
                    0.0
                }
            }
        }
    }

    fn apply(&mut self, idx: usize, dir: Direction) -> Result<(), SimError> {
        let tgt = match dir {
            Direction::Right => idx + 1,
            Direction::Left => idx - 1,
        };
        self.occ[idx] = 0;
        self.occ[tgt] = 1;
        Ok(())
    }
}

/// Exact event-driven exclusion trajectory on `n_sites` sites.
pub fn simulate_asep(
    n_sites: usize,
    init: &ExclusionConfig,
    p: f64,
    horizon: f64,
    probes: &[f64],
    seed: u64,
) -> Result<TrajectorySample, ExclusionError> {
    assert_eq!(init.occupancy.len(), n_sites);
    let mut times: Vec<f64> = probes.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut engine = EventEngine::new(AsepProcess { occ: init.occupancy.clone(), p });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut snapshots = Vec::with_capacity(times.len());
    let outcome = engine.drive(
        &mut rng,
        horizon,
        &times,
        |_, proc: &AsepProcess| {
            snapshots
                .push(Configuration::new(proc.occ.iter().map(|&x| x as u32).collect()));
        },
        |_, _| Control::Continue,
    )?;
    Ok(TrajectorySample { probe_times: times, snapshots, seed, event_count: outcome.events })
}

/// One-line report of the conjugation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugationReport {
    pub n: usize,
    pub k: u64,
    pub p: f64,
    pub residual: f64,
    pub states: usize,
}

impl std::fmt::Display for ConjugationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "conjugation N={} k={} p={} residual={} states={}",
            self.n, self.k, self.p, self.residual, self.states
        )
    }
}

/// Maximum absolute difference between the constant-rate zero-range
/// generator and the exclusion generator conjugated by the bijection.
/// Exactly zero when the mapping is an identity of generators.
pub fn conjugation_residual(n: usize, k: u64, p: f64, cap: usize) -> Result<ConjugationReport, ExclusionError> {
    let states = state_count(n, k);
    if states > cap as u128 {
        return Err(ExclusionError::TooLarge(states));
    }
    let index = StateIndex::build(n, k, cap).map_err(|e| match e {
        MixingError::TooLarge { states, .. } => ExclusionError::TooLarge(states),
        _ => ExclusionError::TooLarge(0),
    })?;
    let q = 1.0 - p;
    let mut zrp_rates: HashMap<(Vec<u8>, Vec<u8>), f64> = HashMap::new();
    let mut asep_rates: HashMap<(Vec<u8>, Vec<u8>), f64> = HashMap::new();
    for s in 0..index.len() {
        let eta = index.config(s);
        let xi = zrp_to_sep(eta);
        // zero-range transitions, keyed by mapped exclusion pairs
        for (i, &occ) in eta.occupancy.iter().enumerate() {
            if occ == 0 {
                continue;
            }
            for (dir, rate) in [(1i64, p), (-1i64, q)] {
                let j = i as i64 + dir;
                if rate <= 0.0 || j < 0 || j >= n as i64 {
                    continue;
                }
                let mut occ2 = eta.occupancy.clone();
                occ2[i] -= 1;
                occ2[j as usize] += 1;
                let xi2 = zrp_to_sep(&Configuration::new(occ2));
                zrp_rates.insert((xi.occupancy.clone(), xi2.occupancy), rate);
            }
        }
        // exclusion transitions from the mapped state
        let m = xi.occupancy.len();
        for i in 0..m {
            if xi.occupancy[i] == 0 {
                continue;
            }
            for (dir, rate) in [(1i64, p), (-1i64, q)] {
                let j = i as i64 + dir;
                if rate <= 0.0 || j < 0 || j >= m as i64 {
                    continue;
                }
                if xi.occupancy[j as usize] == 1 {
                    continue;
                }
                let mut occ2 = xi.occupancy.clone();
                occ2[i] = 0;
                occ2[j as usize] = 1;
                asep_rates.insert((xi.occupancy.clone(), occ2), rate);
            }
        }
    }
    let mut residual = 0.0_f64;
    for (key, &r1) in &zrp_rates {
        let r2 = asep_rates.get(key).copied().unwrap_or(0.0);
        residual = residual.max((r1 - r2).abs());
    }
    for (key, &r2) in &asep_rates {
        let r1 = zrp_rates.get(key).copied().unwrap_or(0.0);
        residual = residual.max((r1 - r2).abs());
    }
    Ok(ConjugationReport { n, k, p, residual, states: index.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_to_occupancies() {
        let xi = ExclusionConfig::new(vec![1, 1, 0, 0, 1]).unwrap();
        let eta = sep_to_zrp(&xi, 3).unwrap();
        assert_eq!(eta.occupancy, vec![2, 0, 1]);
    }

    #[test]
    fn block_configurations_map_to_extremes() {
        // all particles leftmost <-> wedge
        let xi = ExclusionConfig::new(vec![1, 1, 1, 0, 0]).unwrap();
        let eta = sep_to_zrp(&xi, 3).unwrap();
        assert_eq!(eta.occupancy, vec![3, 0, 0]);
        // all particles rightmost <-> vee
        let xi = ExclusionConfig::new(vec![0, 0, 1, 1, 1]).unwrap();
        let eta = sep_to_zrp(&xi, 3).unwrap();
        assert_eq!(eta.occupancy, vec![0, 0, 3]);
    }

    #[test]
    fn inverse_map() {
        let eta = Configuration::new(vec![2, 0, 1]);
        assert_eq!(zrp_to_sep(&eta).occupancy, vec![1, 1, 0, 0, 1]);
        let wedge = Configuration::new(vec![1, 0]);
        assert_eq!(zrp_to_sep(&wedge).occupancy, vec![1, 0]);
        let vee = Configuration::new(vec![0, 1]);
        assert_eq!(zrp_to_sep(&vee).occupancy, vec![0, 1]);
    }

    #[test]
    fn round_trips_exhaustive() {
        for (n, k) in [(2usize, 1u64), (3, 2), (4, 3), (5, 4), (6, 3)] {
            let index = StateIndex::build(n, k, 20_000).unwrap();
            for s in 0..index.len() {
                let eta = index.config(s);
                let xi = zrp_to_sep(eta);
                assert_eq!(xi.occupancy.len(), n + k as usize - 1);
                assert_eq!(xi.particles() as u64, k);
                let back = sep_to_zrp(&xi, n).unwrap();
                assert_eq!(&back, eta, "round trip failed at state {s}");
            }
        }
    }

    #[test]
    fn bad_shape_detected() {
        let xi = ExclusionConfig::new(vec![1, 1, 1, 1]).unwrap();
        assert!(matches!(
            sep_to_zrp(&xi, 3),
            Err(ExclusionError::BadShape { expected: 2, found: 0 })
        ));
    }

    #[test]
    fn conjugation_residual_zero() {
        for &(n, k, p) in &[(3usize, 2u64, 0.7), (2, 1, 0.6), (4, 3, 1.0), (5, 3, 0.8)] {
            let rep = conjugation_residual(n, k, p, 20_000).unwrap();
            assert_eq!(rep.residual, 0.0, "nonzero residual at ({n},{k},{p})");
        }
    }

    #[test]
    fn blocked_pair_never_moves() {
        let xi = ExclusionConfig::new(vec![1, 1]).unwrap();
        let traj = simulate_asep(2, &xi, 1.0, 10.0, &[10.0], 5).unwrap();
        assert_eq!(traj.event_count, 0);
        assert_eq!(traj.snapshots[0].occupancy, vec![1, 1]);
    }

    #[test]
    fn single_particle_mean_jump_time() {
        // one particle on two sites, p = 1: the jump time is exp(1)
        let xi = ExclusionConfig::new(vec![1, 0]).unwrap();
        let replicas = 100_000u64;
        let mut sum = 0.0;
        for r in 0..replicas {
            let mut engine = EventEngine::new(AsepProcess { occ: xi.occupancy.clone(), p: 1.0 });
            let mut rng = crate::sim::replica_rng(2, r);
            let out = engine
                .drive(&mut rng, 1e9, &[], |_, _| {}, |_, _| Control::Continue)
                .unwrap();
            sum += out.absorbed_at.expect("absorbs after one jump");
        }
        let mean = sum / replicas as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn mapped_trajectory_preserves_particle_count() {
        let eta0 = Configuration::new(vec![1, 1, 0, 0, 1]);
        let xi0 = zrp_to_sep(&eta0);
        let traj = simulate_asep(xi0.occupancy.len(), &xi0, 0.8, 3.0, &[1.0, 3.0], 9).unwrap();
        for snap in &traj.snapshots {
            let xi = ExclusionConfig::new(snap.occupancy.iter().map(|&x| x as u8).collect())
                .unwrap();
            let eta = sep_to_zrp(&xi, 5).unwrap();
            assert_eq!(eta.mass(), 3);
        }
    }
}
