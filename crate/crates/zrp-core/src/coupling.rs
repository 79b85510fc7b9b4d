//! Order-preserving couplings: paired dynamics, coalescence, the
//! two-species wall process, and the border-comparison experiment.
//!
//! Two processes sharing a site range are run under the joint generator
//! that makes them jump together at the common rate min(a, b) and lets
//! the rate excess move a single copy. When the directed rates satisfy
//! the domination condition (lower copy jumps right at least as fast and
//! left at most as fast, across ordered occupancies), the height-function
//! order is preserved almost surely.

use crate::lattice::{Configuration, Direction, LatticeGeometry, ProcessSpec, SiteRates};
use crate::rate::RateFunction;
use crate::sim::{Control, DriveOutcome, JumpProcess, RateTree, SimError, ZrpProcess};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("domination condition violated at site {site}, occupancies l={l} >= m={m}: lower right rate {lower} < upper right rate {upper}")]
    DominationViolated { site: i64, l: u32, m: u32, lower: f64, upper: f64 },
    #[error("initial heights are not ordered at index {0}")]
    InitialOrder(usize),
    #[error("height order broke at probe t={t}, index {idx}; coupling implementation bug")]
    OrderBroken { t: f64, idx: usize },
    #[error("the two marginals live on different site ranges: {0} vs {1}")]
    SiteMismatch(usize, usize),
    #[error("colored state violates the wall regions at index {0}")]
    RegionViolated(usize),
    #[error("comparison window [{lo}, {hi}] not strictly inside the sub-lattice")]
    WindowTooLarge { lo: i64, hi: i64 },
    #[error("two-species dynamics with q > 0 needs a bounded rate function")]
    UnboundedRate,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Joint engine over two marginals on a common index range.
///
/// Per site and direction the channels are: both jump (rate min),
/// upper-only (excess), lower-only (excess); the per-site weight kept in
/// the rate tree is max(upper, lower) summed over directions.
pub struct JointEngine<A: JumpProcess, B: JumpProcess> {
    pub a: A,
    pub b: B,
    tree: RateTree,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mover {
    Both,
    OnlyA,
    OnlyB,
}

impl<A: JumpProcess, B: JumpProcess> JointEngine<A, B> {
    pub fn new(a: A, b: B) -> Result<Self, CouplingError> {
        if a.num_sites() != b.num_sites() {
            return Err(CouplingError::SiteMismatch(a.num_sites(), b.num_sites()));
        }
        let values = (0..a.num_sites())
            .map(|i| {
                a.site_rate(i, Direction::Right).max(b.site_rate(i, Direction::Right))
                    + a.site_rate(i, Direction::Left).max(b.site_rate(i, Direction::Left))
            })
            .collect();
        Ok(Self { a, b, tree: RateTree::new(values), time: 0.0 })
    }

    fn refresh(&mut self, idx: usize) {
        let v = self.a.site_rate(idx, Direction::Right).max(self.b.site_rate(idx, Direction::Right))
            + self.a.site_rate(idx, Direction::Left).max(self.b.site_rate(idx, Direction::Left));
        self.tree.set(idx, v);
    }

    /// Drive the pair to `horizon`; `at_probe` sees both marginals,
    /// `after_event` additionally sees the touched indices and the mover.
    pub fn drive(
        &mut self,
        rng: &mut impl Rng,
        horizon: f64,
        probes: &[f64],
        mut at_probe: impl FnMut(f64, &A, &B),
        mut after_event: impl FnMut(f64, &A, &B, (usize, usize), Mover) -> Control,
    ) -> Result<DriveOutcome, SimError> {
        let mut events = 0u64;
        let mut absorbed_at = None;
        let mut probe_iter = probes.iter().copied().peekable();
        loop {
            let total = self.tree.total();
            if total <= 1e-300 {
                absorbed_at.get_or_insert(self.time);
                for tp in probe_iter {
                    at_probe(tp, &self.a, &self.b);
                }
                self.time = horizon;
                return Ok(DriveOutcome { events, absorbed_at, stopped_at: horizon });
            }
            let u: f64 = rng.random();
            let dt = -(1.0 - u).ln() / total;
            let t_next = self.time + dt;
            while let Some(&tp) = probe_iter.peek() {
                if tp <= t_next.min(horizon) {
                    at_probe(tp, &self.a, &self.b);
                    probe_iter.next();
                } else {
                    break;
                }
            }
            if t_next > horizon {
                self.time = horizon;
                return Ok(DriveOutcome { events, absorbed_at, stopped_at: horizon });
            }
            self.time = t_next;
            let site = self.tree.select(rng.random::<f64>() * total);
            let a_r = self.a.site_rate(site, Direction::Right);
            let b_r = self.b.site_rate(site, Direction::Right);
            let a_l = self.a.site_rate(site, Direction::Left);
            let b_l = self.b.site_rate(site, Direction::Left);
            let w_r = a_r.max(b_r);
            let w_l = a_l.max(b_l);
            if w_r + w_l <= 0.0 {
                self.tree.set(site, 0.0);
                continue;
            }
            let (dir, ra, rb, w) = if rng.random::<f64>() * (w_r + w_l) < w_r {
                (Direction::Right, a_r, b_r, w_r)
            } else {
                (Direction::Left, a_l, b_l, w_l)
            };
            let v = rng.random::<f64>() * w;
            let mover = if v < ra.min(rb) {
                Mover::Both
            } else if ra > rb {
                Mover::OnlyA
            } else {
                Mover::OnlyB
            };
            match mover {
                Mover::Both => {
                    self.a.apply(site, dir)?;
                    self.b.apply(site, dir)?;
                }
                Mover::OnlyA => self.a.apply(site, dir)?,
                Mover::OnlyB => self.b.apply(site, dir)?,
            }
            events += 1;
            let tgt = match dir {
                Direction::Right => site + 1,
                Direction::Left => site.wrapping_sub(1),
            };
            self.refresh(site);
            if tgt < self.a.num_sites() {
                self.refresh(tgt);
            }
            match after_event(self.time, &self.a, &self.b, (site, tgt), mover) {
                Control::Continue => {}
                Control::Stop => {
                    for tp in probe_iter {
                        at_probe(tp, &self.a, &self.b);
                    }
                    return Ok(DriveOutcome { events, absorbed_at, stopped_at: self.time });
                }
            }
        }
    }
}

/// Two zero-range marginals to be driven jointly. `upper` starts above
/// `lower` in the height order; the domination condition is verified at
/// construction so the order is preserved.
pub struct CoupledPair {
    pub upper: ZrpProcess,
    pub lower: ZrpProcess,
    pub ordered: bool,
}

impl CoupledPair {
    /// Order-preserving pair. Validates the domination condition on the
    /// occupancy range 0..=k and the initial height order.
    pub fn new(
        spec_upper: ProcessSpec,
        cfg_upper: Configuration,
        spec_lower: ProcessSpec,
        cfg_lower: Configuration,
    ) -> Result<Self, CouplingError> {
        if spec_upper.geometry.len() != spec_lower.geometry.len() {
            return Err(CouplingError::SiteMismatch(
                spec_upper.geometry.len(),
                spec_lower.geometry.len(),
            ));
        }
        check_domination(&spec_lower, &spec_upper)?;
        let h_up = cfg_upper.height_function();
        let h_lo = cfg_lower.height_function();
        if !h_up.dominates(&h_lo) {
            let idx = h_up
                .cumulative
                .iter()
                .zip(&h_lo.cumulative)
                .position(|(u, l)| u < l)
                .unwrap_or(0);
            return Err(CouplingError::InitialOrder(idx));
        }
        Ok(Self {
            upper: ZrpProcess::new(spec_upper, cfg_upper)?,
            lower: ZrpProcess::new(spec_lower, cfg_lower)?,
            ordered: true,
        })
    }

    /// Pair without the domination check; no order assertions are made.
    /// Used for same-law comparisons across different lattices.
    pub fn new_unordered(
        spec_a: ProcessSpec,
        cfg_a: Configuration,
        spec_b: ProcessSpec,
        cfg_b: Configuration,
    ) -> Result<Self, CouplingError> {
        if spec_a.geometry.len() != spec_b.geometry.len() {
            return Err(CouplingError::SiteMismatch(spec_a.geometry.len(), spec_b.geometry.len()));
        }
        Ok(Self {
            upper: ZrpProcess::new(spec_a, cfg_a)?,
            lower: ZrpProcess::new(spec_b, cfg_b)?,
            ordered: false,
        })
    }
}

/// Domination condition: for every site and all l >= m, the lower copy's
/// right rate at l dominates the upper's at m, and the lower copy's left
/// rate at m is below the upper's at l. Verified with suffix minima, so
/// the cost is O(k * sites).
fn check_domination(lower: &ProcessSpec, upper: &ProcessSpec) -> Result<(), CouplingError> {
    let k = lower.k.max(upper.k) as u32;
    let sites = lower.geometry.len();
    for idx in 0..sites {
        // min over l >= m of lower right rate must dominate upper right at m
        let mut suffix_min_lower_r = f64::INFINITY;
        let mut suffix_min_upper_l = f64::INFINITY;
        for n in (0..=k).rev() {
            suffix_min_lower_r = suffix_min_lower_r.min(lower.jump_rate(n, idx, Direction::Right));
            suffix_min_upper_l = suffix_min_upper_l.min(upper.jump_rate(n, idx, Direction::Left));
            let upper_r = upper.jump_rate(n, idx, Direction::Right);
            if suffix_min_lower_r < upper_r {
                return Err(CouplingError::DominationViolated {
                    site: lower.geometry.site_of_index(idx),
                    l: n,
                    m: n,
                    lower: suffix_min_lower_r,
                    upper: upper_r,
                });
            }
            let lower_l = lower.jump_rate(n, idx, Direction::Left);
            if lower_l > suffix_min_upper_l {
                return Err(CouplingError::DominationViolated {
                    site: lower.geometry.site_of_index(idx),
                    l: n,
                    m: n,
                    lower: lower_l,
                    upper: suffix_min_upper_l,
                });
            }
        }
    }
    Ok(())
}

/// Trajectories of both marginals at the probe times.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTrajectory {
    pub probe_times: Vec<f64>,
    pub upper_snapshots: Vec<Configuration>,
    pub lower_snapshots: Vec<Configuration>,
    pub seed: u64,
    pub event_count: u64,
}

impl PairedTrajectory {
    /// Long CSV with columns `t,copy,site,occupancy`.
    pub fn to_csv(&self, geometry: &LatticeGeometry) -> String {
        let mut out = String::from("t,copy,site,occupancy\n");
        for (t, (up, lo)) in
            self.probe_times.iter().zip(self.upper_snapshots.iter().zip(&self.lower_snapshots))
        {
            for (idx, &n) in up.occupancy.iter().enumerate() {
                out.push_str(&format!("{},A,{},{}\n", t, geometry.site_of_index(idx), n));
            }
            for (idx, &n) in lo.occupancy.iter().enumerate() {
                out.push_str(&format!("{},B,{},{}\n", t, geometry.site_of_index(idx), n));
            }
        }
        out
    }
}

/// Run a coupled pair, asserting the height order at every probe when the
/// pair was constructed order-preserving.
pub fn simulate_pair(
    pair: CoupledPair,
    horizon: f64,
    probes: &[f64],
    seed: u64,
) -> Result<PairedTrajectory, CouplingError> {
    let ordered = pair.ordered;
    let mut times: Vec<f64> = probes.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut engine = JointEngine::new(pair.upper, pair.lower)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut upper_snapshots = Vec::with_capacity(times.len());
    let mut lower_snapshots = Vec::with_capacity(times.len());
    let mut order_failure: Option<(f64, usize)> = None;
    let outcome = engine.drive(
        &mut rng,
        horizon,
        &times,
        |t, a, b| {
            if ordered && order_failure.is_none() {
                let hu = a.cfg.height_function();
                let hl = b.cfg.height_function();
                if let Some(idx) =
                    hu.cumulative.iter().zip(&hl.cumulative).position(|(u, l)| u < l)
                {
                    order_failure = Some((t, idx));
                }
            }
            upper_snapshots.push(a.cfg.clone());
            lower_snapshots.push(b.cfg.clone());
        },
        |_, _, _, _, _| Control::Continue,
    )?;
    if let Some((t, idx)) = order_failure {
        return Err(CouplingError::OrderBroken { t, idx });
    }
    Ok(PairedTrajectory {
        probe_times: times,
        upper_snapshots,
        lower_snapshots,
        seed,
        event_count: outcome.events,
    })
}

/// First time the copies started from the two extremal configurations
/// coincide; `None` on timeout. The survival probability of this time
/// upper-bounds half the worst-case total-variation distance.
pub fn coalescence_time(spec: &ProcessSpec, t_max: f64, seed: u64) -> Result<Option<f64>, CouplingError> {
    let wedge = crate::lattice::make_config(crate::lattice::InitKind::Wedge, spec, None)
        .expect("segment spec");
    let vee = crate::lattice::make_config(crate::lattice::InitKind::Vee, spec, None)
        .expect("segment spec");
    let pair = CoupledPair::new(spec.clone(), wedge, spec.clone(), vee)?;
    let mut mismatch = pair
        .upper
        .cfg
        .occupancy
        .iter()
        .zip(&pair.lower.cfg.occupancy)
        .filter(|(a, b)| a != b)
        .count();
    if mismatch == 0 {
        return Ok(Some(0.0));
    }
    let mut differs: Vec<bool> = pair
        .upper
        .cfg
        .occupancy
        .iter()
        .zip(&pair.lower.cfg.occupancy)
        .map(|(a, b)| a != b)
        .collect();
    let mut engine = JointEngine::new(pair.upper, pair.lower)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coalesced_at = None;
    engine.drive(
        &mut rng,
        t_max,
        &[],
        |_, _, _| {},
        |t, a, b, (src, tgt), _| {
            for &idx in &[src, tgt] {
                if idx < differs.len() {
                    let now = a.cfg.occupancy[idx] != b.cfg.occupancy[idx];
                    if now != differs[idx] {
                        differs[idx] = now;
                        if now {
                            mismatch += 1;
                        } else {
                            mismatch -= 1;
                        }
                    }
                }
            }
            if mismatch == 0 {
                coalesced_at = Some(t);
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    Ok(coalesced_at)
}

/// Parameters of the two-species wall process on a segment 1..=n.
///
/// Black particles follow the plain dynamics left of the wall; white
/// particles hop on [wall, n] with the flattened rate (p g(1) + q gbar)
/// and bias p g(1) / (p g(1) + q gbar), realized as right rate p g(1) and
/// left rate q gbar. At the wall site, black left-jumps feel the total
/// occupancy of both colors.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredParams {
    pub n: usize,
    /// 1-based wall site, n - ceil(n * beta).
    pub wall: usize,
    pub p: f64,
    pub g: RateFunction,
    pub g_bar: f64,
}

impl ColoredParams {
    pub fn new(n: usize, beta: f64, p: f64, g: RateFunction) -> Result<Self, CouplingError> {
        let g_bar = match g.upper_bound() {
            Some(b) => b,
            None if p >= 1.0 => 0.0, // q = 0: the flattened left rate never fires
            None => return Err(CouplingError::UnboundedRate),
        };
        let wall = n - ((n as f64 * beta).ceil() as usize).min(n - 1);
        Ok(Self { n, wall, p, g, g_bar })
    }
}

/// Occupancies of the two colors; whites never left of the wall, blacks
/// never right of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredState {
    pub params: ColoredParams,
    pub black: Vec<u32>,
    pub white: Vec<u32>,
}

impl ColoredState {
    pub fn new(
        params: ColoredParams,
        black: Vec<u32>,
        white: Vec<u32>,
    ) -> Result<Self, CouplingError> {
        if black.len() != params.n || white.len() != params.n {
            return Err(CouplingError::SiteMismatch(black.len(), white.len()));
        }
        let state = Self { params, black, white };
        state.check_regions()?;
        Ok(state)
    }

    fn check_regions(&self) -> Result<(), CouplingError> {
        let w = self.params.wall; // 1-based
        for (idx, (&b, &wh)) in self.black.iter().zip(&self.white).enumerate() {
            let site = idx + 1;
            if site > w && b > 0 {
                return Err(CouplingError::RegionViolated(idx));
            }
            if site < w && wh > 0 {
                return Err(CouplingError::RegionViolated(idx));
            }
        }
        Ok(())
    }

    /// Combined height function of both colors.
    pub fn total_height(&self) -> Vec<u64> {
        let mut acc = 0u64;
        self.black
            .iter()
            .zip(&self.white)
            .map(|(&b, &w)| {
                acc += (b + w) as u64;
                acc
            })
            .collect()
    }

    pub fn black_at_wall(&self) -> u32 {
        self.black[self.params.wall - 1]
    }
}

impl JumpProcess for ColoredState {
    fn num_sites(&self) -> usize {
        self.params.n
    }

    fn site_rate(&self, idx: usize, dir: Direction) -> f64 {
        let site = idx + 1;
        let w = self.params.wall;
        let p = self.params.p;
        let q = 1.0 - p;
        let g = &self.params.g;
        match dir {
            Direction::Right => {
                if site >= self.params.n {
                    0.0
                } else if site < w {
                    p * g.rate(self.black[idx])
                } else if self.white[idx] >= 1 {
                    p * g.at_one()
                } else {
                    0.0
                }
            }
            Direction::Left => {
                if site <= 1 {
                    0.0
                } else if site < w {
                    q * g.rate(self.black[idx])
                } else if site == w {
                    if self.black[idx] >= 1 {
                        q * g.rate(self.black[idx] + self.white[idx])
                    } else {
                        0.0
                    }
                } else if self.white[idx] >= 1 {
                    q * self.params.g_bar
                } else {
                    0.0
                }
            }
        }
    }

    fn apply(&mut self, idx: usize, dir: Direction) -> Result<(), SimError> {
        let site = idx + 1;
        let w = self.params.wall;
        let black_moves = match dir {
            Direction::Right => site < w,
            Direction::Left => site <= w,
        };
        let tgt = match dir {
            Direction::Right => idx + 1,
            Direction::Left => idx - 1,
        };
        if black_moves {
            self.black[idx] -= 1;
            self.black[tgt] += 1;
        } else {
            self.white[idx] -= 1;
            self.white[tgt] += 1;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColoredTrajectory {
    pub probe_times: Vec<f64>,
    pub black_snapshots: Vec<Vec<u32>>,
    pub white_snapshots: Vec<Vec<u32>>,
    /// First time the wall holds at most one black particle.
    pub tau: Option<f64>,
    pub seed: u64,
    pub event_count: u64,
}

/// Simulate the two-species process, recording the wall stopping time.
pub fn simulate_colored(
    state: ColoredState,
    horizon: f64,
    probes: &[f64],
    seed: u64,
) -> Result<ColoredTrajectory, CouplingError> {
    state.check_regions()?;
    let mut times: Vec<f64> = probes.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut tau = if state.black_at_wall() <= 1 { Some(0.0) } else { None };
    let mut engine = crate::sim::EventEngine::new(state);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut black_snapshots = Vec::with_capacity(times.len());
    let mut white_snapshots = Vec::with_capacity(times.len());
    let outcome = engine.drive(
        &mut rng,
        horizon,
        &times,
        |_, s: &ColoredState| {
            debug_assert!(s.check_regions().is_ok());
            black_snapshots.push(s.black.clone());
            white_snapshots.push(s.white.clone());
        },
        |t, s| {
            if tau.is_none() && s.black_at_wall() <= 1 {
                tau = Some(t);
            }
            Control::Continue
        },
    )?;
    Ok(ColoredTrajectory {
        probe_times: times,
        black_snapshots,
        white_snapshots,
        tau,
        seed,
        event_count: outcome.events,
    })
}

/// Restrict plain dynamics to the sub-segment [lo, hi] (site coordinates)
/// of a larger window geometry: rates vanish outside and jumps may not
/// cross the sub-segment's borders.
pub fn subsegment_on_window(
    window: LatticeGeometry,
    lo: i64,
    hi: i64,
    k: u64,
    p: f64,
    g: RateFunction,
) -> Result<ProcessSpec, crate::lattice::LatticeError> {
    let base = ProcessSpec::new(window, k, p, g.clone())?;
    let q = 1.0 - p;
    let rates: SiteRates = Arc::new(move |n: u32, site: i64, dir: Direction| match dir {
        Direction::Right => {
            if site >= lo && site < hi {
                p * g.rate(n)
            } else {
                0.0
            }
        }
        Direction::Left => {
            if site > lo && site <= hi {
                q * g.rate(n)
            } else {
                0.0
            }
        }
    });
    Ok(base.with_overrides(rates))
}

/// Mean discrepancy series between a window process and its sub-lattice
/// restriction, both started from the same configuration and coupled.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancySeries {
    /// Macroscopic probe times.
    pub s_values: Vec<f64>,
    /// E[(1/N) sum_{window} |eta(i) - eta_sub(i)|] at each probe.
    pub mean_abs: Vec<f64>,
    pub replicas: u64,
}

impl DiscrepancySeries {
    pub fn to_csv(&self, scale_n: usize) -> String {
        let mut out = String::from("t,N,D\n");
        for (s, d) in self.s_values.iter().zip(&self.mean_abs) {
            out.push_str(&format!("{},{},{}\n", s, scale_n, d));
        }
        out
    }
}

/// Couple `spec_full` (window surrogate of the line) with `spec_sub`
/// (same dynamics restricted to a sub-segment) from a common initial
/// configuration, and measure the mean absolute occupancy discrepancy
/// over `window` = [lo, hi] in site coordinates at macroscopic times
/// `s_grid` (microscopic time s N / (p - q)).
#[allow(clippy::too_many_arguments)]
pub fn border_discrepancy(
    spec_full: &ProcessSpec,
    spec_sub: &ProcessSpec,
    init: &Configuration,
    window: (i64, i64),
    sub_range: (i64, i64),
    scale_n: usize,
    s_grid: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<DiscrepancySeries, CouplingError> {
    if window.0 <= sub_range.0 || window.1 >= sub_range.1 {
        return Err(CouplingError::WindowTooLarge { lo: window.0, hi: window.1 });
    }
    let p = spec_full.p;
    let micro: Vec<f64> = s_grid.iter().map(|s| s * scale_n as f64 / (2.0 * p - 1.0)).collect();
    let horizon = micro.last().copied().unwrap_or(0.0);
    let geo = spec_full.geometry;
    let win_idx: Vec<usize> = (0..geo.len())
        .filter(|&i| {
            let s = geo.site_of_index(i);
            s >= window.0 && s <= window.1
        })
        .collect();
    let mut sums = vec![0.0_f64; s_grid.len()];
    for r in 0..replicas {
        let pair = CoupledPair::new_unordered(
            spec_full.clone(),
            init.clone(),
            spec_sub.clone(),
            init.clone(),
        )?;
        let mut engine = JointEngine::new(pair.upper, pair.lower)?;
        let mut rng = crate::sim::replica_rng(seed, r);
        let mut probe_idx = 0usize;
        engine.drive(
            &mut rng,
            horizon,
            &micro,
            |_, a, b| {
                let d: u64 = win_idx
                    .iter()
                    .map(|&i| {
                        (a.cfg.occupancy[i] as i64 - b.cfg.occupancy[i] as i64).unsigned_abs()
                    })
                    .sum();
                sums[probe_idx] += d as f64 / scale_n as f64;
                probe_idx += 1;
            },
            |_, _, _, _, _| Control::Continue,
        )?;
    }
    Ok(DiscrepancySeries {
        s_values: s_grid.to_vec(),
        mean_abs: sums.iter().map(|s| s / replicas as f64).collect(),
        replicas,
    })
}
