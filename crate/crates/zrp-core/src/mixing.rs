//! Exact small-instance oracles and Monte Carlo mixing statistics.
//!
//! State enumeration of the k-particle configurations on a segment, the
//! product-form stationary law, uniformized transient laws, exact
//! worst-case total-variation curves, and the Monte Carlo upper
//! (coalescence) and lower (left-most statistic) bounds.

use crate::coupling::{coalescence_time, CouplingError};
use crate::lattice::{make_config, Configuration, Direction, InitKind, ProcessSpec};
use crate::rate::RateFunction;
use crate::sim::{replica_rng, simulate, SimError};
use rand::Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MixingError {
    #[error("state space has {states} configurations, cap is {cap}")]
    TooLarge { states: u128, cap: usize },
    #[error("mode not applicable: {0}")]
    BadMode(String),
    #[error("curve never reaches level {theta}")]
    NotCrossed { theta: f64 },
    #[error("spec must use a segment geometry")]
    NotSegment,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// Default cap on enumerable state spaces.
pub const STATE_CAP: usize = 20_000;

/// Number of k-particle configurations on n sites: C(n+k-1, k).
pub fn state_count(n: usize, k: u64) -> u128 {
    let mut c: u128 = 1;
    for j in 0..k as u128 {
        c = c.saturating_mul(n as u128 - 1 + j + 1) / (j + 1);
        if c > u128::MAX / 2 {
            return u128::MAX;
        }
    }
    c
}

/// Ordered enumeration of the configuration space, descending
/// lexicographically: index 0 holds all mass on site 1, the last index
/// all mass on site n.
pub struct StateIndex {
    pub n: usize,
    pub k: u64,
    configs: Vec<Configuration>,
    lookup: HashMap<Vec<u32>, usize>,
}

impl StateIndex {
    pub fn build(n: usize, k: u64, cap: usize) -> Result<Self, MixingError> {
        let states = state_count(n, k);
        if states > cap as u128 {
            return Err(MixingError::TooLarge { states, cap });
        }
        let mut configs = Vec::with_capacity(states as usize);
        let mut current = vec![0u32; n];
        gen_desc(&mut current, 0, k as u32, &mut configs);
        let lookup = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.occupancy.clone(), i))
            .collect();
        Ok(Self { n, k, configs, lookup })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn config(&self, idx: usize) -> &Configuration {
        &self.configs[idx]
    }

    pub fn index_of(&self, cfg: &Configuration) -> Option<usize> {
        self.lookup.get(&cfg.occupancy).copied()
    }

    pub fn wedge_index(&self) -> usize {
        0
    }

    pub fn vee_index(&self) -> usize {
        self.configs.len() - 1
    }

    /// 1-based position of the left-most particle of the indexed state.
    pub fn leftmost(&self, idx: usize) -> usize {
        self.configs[idx].leftmost_occupied().map_or(self.n, |i| i + 1)
    }
}

fn gen_desc(current: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Configuration>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(Configuration::new(current.clone()));
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v;
        gen_desc(current, pos + 1, remaining - v, out);
        current[pos] = 0;
    }
}

/// Sparse rate matrix of the chain over a [`StateIndex`].
pub struct RateMatrix {
    /// Outgoing transitions per state: (target, rate).
    pub rows: Vec<Vec<(usize, f64)>>,
    pub exit: Vec<f64>,
    pub uniformization_rate: f64,
}

impl RateMatrix {
    pub fn assemble(index: &StateIndex, spec: &ProcessSpec) -> Self {
        let mut rows = Vec::with_capacity(index.len());
        let mut exit = Vec::with_capacity(index.len());
        for s in 0..index.len() {
            let cfg = index.config(s);
            let mut row = Vec::new();
            let mut total = 0.0;
            for (i, &occ) in cfg.occupancy.iter().enumerate() {
                if occ == 0 {
                    continue;
                }
                for dir in [Direction::Right, Direction::Left] {
                    let rate = spec.jump_rate(occ, i, dir);
                    if rate > 0.0 {
                        let tgt = match dir {
                            Direction::Right => i + 1,
                            Direction::Left => i - 1,
                        };
                        let mut occ2 = cfg.occupancy.clone();
                        occ2[i] -= 1;
                        occ2[tgt] += 1;
                        let j = index
                            .index_of(&Configuration::new(occ2))
                            .expect("jump target stays in the state space");
                        row.push((j, rate));
                        total += rate;
                    }
                }
            }
            rows.push(row);
            exit.push(total);
        }
        let uniformization_rate = exit.iter().cloned().fold(0.0, f64::max).max(1e-300);
        Self { rows, exit, uniformization_rate }
    }

    /// One step of the uniformized chain: out = v (I + Q / L).
    fn step(&self, v: &[f64], out: &mut [f64]) {
        let lam = self.uniformization_rate;
        for (i, o) in out.iter_mut().enumerate() {
            *o = v[i] * (1.0 - self.exit[i] / lam);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for &(j, rate) in row {
                out[j] += vi * rate / lam;
            }
        }
    }
}

/// Stationary law of the segment process: product weights
/// (p/q)^(site * occupancy) / g(occupancy)!, normalized in log space.
/// Totally asymmetric drift degenerates to the Dirac at the right-packed
/// configuration.
pub fn stationary_law(index: &StateIndex, p: f64, g: &RateFunction) -> Vec<f64> {
    let mut law = vec![0.0; index.len()];
    if p >= 1.0 {
        law[index.vee_index()] = 1.0;
        return law;
    }
    let log_drift = (p / (1.0 - p)).ln();
    let mut logs = Vec::with_capacity(index.len());
    let mut max_log = f64::NEG_INFINITY;
    for s in 0..index.len() {
        let cfg = index.config(s);
        let mut lw = 0.0;
        for (i, &occ) in cfg.occupancy.iter().enumerate() {
            let site = (i + 1) as f64;
            lw += log_drift * site * occ as f64 - g.log_rate_factorial(occ);
        }
        max_log = max_log.max(lw);
        logs.push(lw);
    }
    let mut total = 0.0;
    for (s, lw) in logs.iter().enumerate() {
        law[s] = (lw - max_log).exp();
        total += law[s];
    }
    for v in law.iter_mut() {
        *v /= total;
    }
    law
}

/// sup-norm of pi^T Q, the stationarity residual.
pub fn stationarity_residual(index: &StateIndex, matrix: &RateMatrix, law: &[f64]) -> f64 {
    let mut acc = vec![0.0_f64; index.len()];
    for (i, row) in matrix.rows.iter().enumerate() {
        acc[i] -= law[i] * matrix.exit[i];
        for &(j, rate) in row {
            acc[j] += law[i] * rate;
        }
    }
    acc.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Transient laws by uniformization with adaptive Poisson-tail truncation;
/// absolute error at most `tol` per entry.
pub struct TransientSolver {
    pub index: StateIndex,
    pub matrix: RateMatrix,
    pub tol: f64,
}

impl TransientSolver {
    pub fn new(spec: &ProcessSpec, cap: usize, tol: f64) -> Result<Self, MixingError> {
        let n = match spec.geometry {
            crate::lattice::LatticeGeometry::Segment { n } => n,
            _ => return Err(MixingError::NotSegment),
        };
        let index = StateIndex::build(n, spec.k, cap)?;
        let matrix = RateMatrix::assemble(&index, spec);
        Ok(Self { index, matrix, tol })
    }

    /// Law of the state at each requested time, started from `init`.
    pub fn laws(&self, init: &Configuration, times: &[f64]) -> Result<Vec<Vec<f64>>, MixingError> {
        let s0 = self
            .index
            .index_of(init)
            .ok_or(MixingError::BadMode("initial configuration outside the state space".into()))?;
        Ok(self.laws_from_index(s0, times))
    }

    pub fn laws_from_index(&self, s0: usize, times: &[f64]) -> Vec<Vec<f64>> {
        let lam = self.matrix.uniformization_rate;
        let weights: Vec<Vec<f64>> =
            times.iter().map(|&t| poisson_weights(lam * t, self.tol * 0.5)).collect();
        let n_max = weights.iter().map(|w| w.len()).max().unwrap_or(1);
        let mut v = vec![0.0; self.index.len()];
        v[s0] = 1.0;
        let mut out = vec![vec![0.0; self.index.len()]; times.len()];
        let mut next = vec![0.0; self.index.len()];
        for step_n in 0..n_max {
            for (ti, w) in weights.iter().enumerate() {
                if let Some(&wn) = w.get(step_n) {
                    if wn > 0.0 {
                        for (o, &vi) in out[ti].iter_mut().zip(&v) {
                            *o += wn * vi;
                        }
                    }
                }
            }
            if step_n + 1 < n_max {
                self.matrix.step(&v, &mut next);
                std::mem::swap(&mut v, &mut next);
            }
        }
        out
    }

    pub fn law(&self, init: &Configuration, t: f64) -> Result<Vec<f64>, MixingError> {
        Ok(self.laws(init, &[t])?.pop().unwrap())
    }
}

/// Poisson(mean) probabilities 0..=n_hi covering all but `tol` of the mass.
fn poisson_weights(mean: f64, tol: f64) -> Vec<f64> {
    if mean <= 0.0 {
        return vec![1.0];
    }
    let mode = mean.floor();
    let ln_mode = mode * mean.ln() - mean - ln_gamma(mode + 1.0);
    let w_mode = ln_mode.exp();
    // from the mode, walk down to 0 and up until the mass is covered
    let mut down = Vec::new(); // weights at mode-1, mode-2, ...
    let mut w = w_mode;
    let mut n = mode;
    while n >= 1.0 {
        w *= n / mean;
        if w < 1e-18 * w_mode {
            break;
        }
        down.push(w);
        n -= 1.0;
    }
    let lo = mode as usize - down.len();
    let mut weights = vec![0.0; lo];
    weights.extend(down.iter().rev());
    weights.push(w_mode);
    let mut covered: f64 = weights.iter().sum();
    let mut wn = w_mode;
    let mut m = mode;
    while covered < 1.0 - tol {
        wn *= mean / (m + 1.0);
        m += 1.0;
        weights.push(wn);
        covered += wn;
        if wn < 1e-300 {
            break;
        }
    }
    weights
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, 9 coefficients
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Total-variation distance between two probability vectors.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TvMode {
    /// Worst case over all initial Diracs, by uniformization.
    Exact,
    /// Coalescence bound 2 P(extremal copies differ at t); upper bound.
    McUpper,
    /// Left-most-statistic separation with event {l <= N - epsilon N};
    /// lower bound.
    McLower { epsilon: f64 },
    /// Exact identity for p = 1: d(t) = P(mass remains left of N).
    McIdentity,
}

impl TvMode {
    pub fn label(&self) -> &'static str {
        match self {
            TvMode::Exact => "exact",
            TvMode::McUpper => "mc_upper",
            TvMode::McLower { .. } => "mc_lower",
            TvMode::McIdentity => "mc_identity",
        }
    }
}

/// Time-indexed total-variation curve. Times are microscopic (raw chain
/// clock).
#[derive(Debug, Clone, PartialEq)]
pub struct TVCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub mode: &'static str,
    pub replicas: u64,
    pub seed: u64,
}

impl TVCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value,ci_low,ci_high,mode\n");
        let half = if self.replicas > 0 {
            // Wald half-width at ~95%
            1.96 / (self.replicas as f64).sqrt()
        } else {
            0.0
        };
        for (t, v) in self.times.iter().zip(&self.values) {
            let lo = (v - half).max(0.0);
            let hi = (v + half).min(1.0);
            out.push_str(&format!("{},{},{},{},{}\n", t, v, lo, hi, self.mode));
        }
        out
    }
}

/// Worst-case total-variation curve of `spec` at the given microscopic
/// times, by the requested estimator.
pub fn tv_curve(
    spec: &ProcessSpec,
    times: &[f64],
    mode: TvMode,
    replicas: u64,
    seed: u64,
) -> Result<TVCurve, MixingError> {
    let mut sorted: Vec<f64> = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = match spec.geometry {
        crate::lattice::LatticeGeometry::Segment { n } => n,
        _ => return Err(MixingError::NotSegment),
    };
    let values: Vec<f64> = match mode {
        TvMode::Exact => {
            let solver = TransientSolver::new(spec, STATE_CAP, 1e-10)?;
            let pi = stationary_law(&solver.index, spec.p, &spec.g);
            let states = solver.index.len();
            let per_init: Vec<Vec<f64>> = (0..states)
                .into_par_iter()
                .map(|s0| {
                    solver
                        .laws_from_index(s0, &sorted)
                        .iter()
                        .map(|law| tv_distance(law, &pi))
                        .collect()
                })
                .collect();
            (0..sorted.len())
                .map(|ti| per_init.iter().map(|v| v[ti]).fold(0.0, f64::max))
                .collect()
        }
        TvMode::McUpper => {
            let horizon = sorted.last().copied().unwrap_or(0.0) * 1.0001 + 1.0;
            let survivals: Vec<Option<f64>> = (0..replicas)
                .into_par_iter()
                .map(|r| {
                    let s = replica_rng(seed, r).random::<u64>();
                    coalescence_time(spec, horizon, s)
                })
                .collect::<Result<_, _>>()?;
            sorted
                .iter()
                .map(|&t| {
                    let not_coalesced =
                        survivals.iter().filter(|c| c.map_or(true, |ct| ct > t)).count();
                    (2.0 * not_coalesced as f64 / replicas as f64).min(1.0)
                })
                .collect()
        }
        TvMode::McLower { epsilon } => {
            let threshold = n as f64 - epsilon * n as f64;
            let pi_tail = stationary_leftmost_tail(spec, threshold, seed ^ 0x5bd1_e995)?;
            let wedge = make_config(InitKind::Wedge, spec, None).expect("segment");
            let horizon = sorted.last().copied().unwrap_or(0.0);
            let counts: Vec<Vec<u64>> = (0..replicas)
                .into_par_iter()
                .map(|r| {
                    let s = replica_rng(seed, r).random::<u64>();
                    let traj = simulate(spec, &wedge, horizon, &sorted, s)?;
                    Ok(traj
                        .snapshots
                        .iter()
                        .map(|snap| {
                            let l = snap.leftmost_occupied().map_or(n, |i| i + 1);
                            u64::from((l as f64) <= threshold)
                        })
                        .collect())
                })
                .collect::<Result<_, MixingError>>()?;
            (0..sorted.len())
                .map(|ti| {
                    let hits: u64 = counts.iter().map(|c| c[ti]).sum();
                    (hits as f64 / replicas as f64 - pi_tail).clamp(0.0, 1.0)
                })
                .collect()
        }
        TvMode::McIdentity => {
            if spec.p < 1.0 {
                return Err(MixingError::BadMode(
                    "the identity statistic requires p = 1".into(),
                ));
            }
            let taus = absorption_times(spec, replicas, seed)?;
            sorted
                .iter()
                .map(|&t| {
                    taus.iter().filter(|tau| tau.map_or(true, |v| v > t)).count() as f64
                        / replicas as f64
                })
                .collect()
        }
    };
    if matches!(mode, TvMode::Exact) {
        for w in values.windows(2) {
            debug_assert!(w[1] <= w[0] + 1e-9, "exact TV curve must be non-increasing");
        }
    }
    Ok(TVCurve {
        times: sorted,
        values,
        mode: mode.label(),
        replicas: if matches!(mode, TvMode::Exact) { 0 } else { replicas },
        seed,
    })
}

/// Absorption times of wedge-started replicas under totally asymmetric
/// drift (`None` when not absorbed within a generous horizon).
pub fn absorption_times(
    spec: &ProcessSpec,
    replicas: u64,
    seed: u64,
) -> Result<Vec<Option<f64>>, MixingError> {
    let wedge = make_config(InitKind::Wedge, spec, None).expect("segment");
    let n = spec.geometry.len() as f64;
    let horizon = 40.0 * (n + 2.0) / spec.g.at_one() / (2.0 * spec.p - 1.0) + 100.0;
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            let mut engine = crate::sim::EventEngine::new(crate::sim::ZrpProcess::new(
                spec.clone(),
                wedge.clone(),
            )?);
            let outcome = engine.drive(
                &mut rng,
                horizon,
                &[],
                |_, _| {},
                |_, _| crate::sim::Control::Continue,
            )?;
            Ok(outcome.absorbed_at)
        })
        .collect()
}

/// pi(l(eta) <= threshold) estimated or computed exactly depending on the
/// state-space size; exact 0 for p = 1.
pub fn stationary_leftmost_tail(
    spec: &ProcessSpec,
    threshold: f64,
    seed: u64,
) -> Result<f64, MixingError> {
    let n = match spec.geometry {
        crate::lattice::LatticeGeometry::Segment { n } => n,
        _ => return Err(MixingError::NotSegment),
    };
    if spec.p >= 1.0 {
        return Ok(if n as f64 <= threshold { 1.0 } else { 0.0 });
    }
    if state_count(n, spec.k) <= STATE_CAP as u128 {
        let index = StateIndex::build(n, spec.k, STATE_CAP)?;
        let pi = stationary_law(&index, spec.p, &spec.g);
        return Ok((0..index.len())
            .filter(|&s| index.leftmost(s) as f64 <= threshold)
            .map(|s| pi[s])
            .sum());
    }
    metropolis_leftmost_tail(spec, threshold, 20_000, seed)
}

/// Metropolis estimate of pi(l(eta) <= threshold): symmetric
/// site-and-direction proposals of single-particle moves, burn-in
/// 100 N k moves.
pub fn metropolis_leftmost_tail(
    spec: &ProcessSpec,
    threshold: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, MixingError> {
    let n = match spec.geometry {
        crate::lattice::LatticeGeometry::Segment { n } => n,
        _ => return Err(MixingError::NotSegment),
    };
    let burn_in = 100 * n * spec.k as usize;
    let thin = n * spec.k as usize / 2 + 1;
    let mut rng = replica_rng(seed, 0);
    let mut occ = make_config(InitKind::Vee, spec, None).expect("segment").occupancy;
    let log_drift = (spec.p / spec.q()).ln();
    let mut hits = 0usize;
    let do_move = |occ: &mut Vec<u32>, rng: &mut rand_chacha::ChaCha8Rng| {
        let i = rng.random_range(0..n);
        let dir = if rng.random::<bool>() { 1i64 } else { -1 };
        let j = i as i64 + dir;
        if occ[i] == 0 || j < 0 || j >= n as i64 {
            return;
        }
        let j = j as usize;
        // log pi(eta') - log pi(eta) for moving one particle i -> j
        let delta = log_drift * (j as f64 - i as f64)
            + spec.g.rate(occ[i]).ln()
            - spec.g.rate(occ[j] + 1).ln();
        if delta >= 0.0 || rng.random::<f64>() < delta.exp() {
            occ[i] -= 1;
            occ[j] += 1;
        }
    };
    for _ in 0..burn_in {
        do_move(&mut occ, &mut rng);
    }
    for _ in 0..samples {
        for _ in 0..thin {
            do_move(&mut occ, &mut rng);
        }
        let leftmost = occ.iter().position(|&x| x > 0).map_or(n, |i| i + 1);
        if leftmost as f64 <= threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples as f64)
}

/// First time the curve drops to `theta`, linearly interpolated.
pub fn mixing_time_from_curve(curve: &TVCurve, theta: f64) -> Result<f64, MixingError> {
    if theta >= 1.0 {
        return Ok(0.0);
    }
    let mut prev: Option<(f64, f64)> = None;
    for (&t, &d) in curve.times.iter().zip(&curve.values) {
        if d <= theta {
            return Ok(match prev {
                Some((t0, d0)) if d0 > d => t0 + (d0 - theta) * (t - t0) / (d0 - d),
                _ => t,
            });
        }
        prev = Some((t, d));
    }
    Err(MixingError::NotCrossed { theta })
}

/// Exact stationary tail of the left-most particle against its geometric
/// bound (g(k)/g(1)) (q/p)^delta / (1 - q/p).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeftmostTail {
    pub exact: f64,
    pub bound: f64,
}

pub fn leftmost_tail_check(
    n: usize,
    k: u64,
    p: f64,
    g: &RateFunction,
    delta: u32,
) -> Result<LeftmostTail, MixingError> {
    if p >= 1.0 {
        return Err(MixingError::BadMode("tail bound needs p < 1".into()));
    }
    let index = StateIndex::build(n, k, STATE_CAP)?;
    let pi = stationary_law(&index, p, g);
    let exact: f64 = (0..index.len())
        .filter(|&s| index.leftmost(s) + (delta as usize) <= n)
        .map(|s| pi[s])
        .sum();
    let ratio = (1.0 - p) / p;
    let bound = g.rate(k as u32) / g.at_one() * ratio.powi(delta as i32) / (1.0 - ratio);
    Ok(LeftmostTail { exact, bound })
}
