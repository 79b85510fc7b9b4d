//! Exact event-driven simulation of continuous-time jump dynamics.
//!
//! One engine drives every process in the crate (plain zero-range,
//! exclusion, coupled pairs, two-species): a process exposes per-site
//! directed rates and a jump action, the engine keeps an indexed rate
//! tree so each event costs O(log N).

use crate::lattice::{Configuration, Direction, ProcessSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("mass reached the surrogate window edge at site {site}; enlarge the window")]
    EdgeReached { site: i64 },
    #[error("initial configuration does not match the spec: {0}")]
    BadInit(String),
    #[error("probe time {0} outside the horizon")]
    BadProbe(f64),
}

/// A continuous-time process with nearest-neighbour jumps on a finite
/// index range.
pub trait JumpProcess {
    fn num_sites(&self) -> usize;

    /// Total clock rate of jumps out of storage index `idx` in `dir`.
    fn site_rate(&self, idx: usize, dir: Direction) -> f64;

    /// Perform one jump. Returns an error when the jump occupies a guarded
    /// surrogate edge.
    fn apply(&mut self, idx: usize, dir: Direction) -> Result<(), SimError>;
}

/// Fenwick tree over non-negative site weights with prefix-sum selection.
pub(crate) struct RateTree {
    tree: Vec<f64>,
    values: Vec<f64>,
    mask: usize,
    set_ops: u64,
}

impl RateTree {
    pub(crate) fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        let mut mask = 1usize;
        while mask * 2 <= n {
            mask *= 2;
        }
        let mut t = Self { tree: vec![0.0; n + 1], values, mask, set_ops: 0 };
        t.rebuild();
        t
    }

    fn rebuild(&mut self) {
        for v in self.tree.iter_mut() {
            *v = 0.0;
        }
        let values = std::mem::take(&mut self.values);
        for (i, &v) in values.iter().enumerate() {
            self.add_raw(i, v);
        }
        self.values = values;
        self.set_ops = 0;
    }

    fn add_raw(&mut self, i: usize, delta: f64) {
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    pub(crate) fn set(&mut self, i: usize, v: f64) {
        let delta = v - self.values[i];
        if delta != 0.0 {
            self.values[i] = v;
            self.add_raw(i, delta);
        }
        self.set_ops += 1;
        if self.set_ops >= 1 << 26 {
            // bound incremental floating-point drift
            self.rebuild();
        }
    }

    pub(crate) fn total(&self) -> f64 {
        let mut s = 0.0;
        let mut j = self.tree.len() - 1;
        while j > 0 {
            s += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        s
    }

    /// Largest index with prefix sum <= u, clamped to valid sites.
    pub(crate) fn select(&self, mut u: f64) -> usize {
        let mut pos = 0usize;
        let mut step = self.mask;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] < u {
                u -= self.tree[next];
                pos = next;
            }
            step /= 2;
        }
        pos.min(self.values.len() - 1)
    }
}

/// Outcome of driving an engine to a horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveOutcome {
    pub events: u64,
    /// Time of the event after which the total rate vanished, if any.
    pub absorbed_at: Option<f64>,
    /// Time at which the drive stopped (horizon, or earlier on request).
    pub stopped_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub struct EventEngine<P: JumpProcess> {
    pub process: P,
    tree: RateTree,
    pub time: f64,
}

impl<P: JumpProcess> EventEngine<P> {
    pub fn new(process: P) -> Self {
        let values = (0..process.num_sites())
            .map(|i| process.site_rate(i, Direction::Right) + process.site_rate(i, Direction::Left))
            .collect();
        Self { process, tree: RateTree::new(values), time: 0.0 }
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    fn refresh(&mut self, idx: usize) {
        let v = self.process.site_rate(idx, Direction::Right)
            + self.process.site_rate(idx, Direction::Left);
        self.tree.set(idx, v);
    }

    /// Advance past all probes in `probes` (sorted ascending), calling
    /// `at_probe` with the state at each probe time, until `horizon`.
    /// `after_event` may stop the drive early.
    pub fn drive(
        &mut self,
        rng: &mut impl Rng,
        horizon: f64,
        probes: &[f64],
        mut at_probe: impl FnMut(f64, &P),
        mut after_event: impl FnMut(f64, &P) -> Control,
    ) -> Result<DriveOutcome, SimError> {
        let mut events = 0u64;
        let mut absorbed_at = None;
        let mut probe_iter = probes.iter().copied().peekable();
        loop {
            let total = self.total_rate();
            if total <= 1e-300 {
                absorbed_at.get_or_insert(self.time);
                while let Some(tp) = probe_iter.next() {
                    at_probe(tp, &self.process);
                }
                self.time = horizon;
                return Ok(DriveOutcome { events, absorbed_at, stopped_at: horizon });
            }
            let u: f64 = rng.random();
            let dt = -(1.0 - u).ln() / total;
            let t_next = self.time + dt;
            while let Some(&tp) = probe_iter.peek() {
                if tp <= t_next.min(horizon) {
                    at_probe(tp, &self.process);
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
            let right = self.process.site_rate(site, Direction::Right);
            let left = self.process.site_rate(site, Direction::Left);
            let site_total = right + left;
            if site_total <= 0.0 {
                // stale leaf from floating-point drift; resync and redraw
                self.tree.rebuild_from(&self.process);
                continue;
            }
            let dir = if rng.random::<f64>() * site_total < right {
                Direction::Right
            } else {
                Direction::Left
            };
            self.process.apply(site, dir)?;
            events += 1;
            self.refresh(site);
            let neighbour = match dir {
                Direction::Right => site + 1,
                Direction::Left => site.wrapping_sub(1),
            };
            if neighbour < self.process.num_sites() {
                self.refresh(neighbour);
            }
            match after_event(self.time, &self.process) {
                Control::Continue => {}
                Control::Stop => {
                    while let Some(tp) = probe_iter.next() {
                        at_probe(tp, &self.process);
                    }
                    return Ok(DriveOutcome { events, absorbed_at, stopped_at: self.time });
                }
            }
        }
    }
}

impl RateTree {
    fn rebuild_from<P: JumpProcess>(&mut self, process: &P) {
        for i in 0..self.values.len() {
            self.values[i] =
                process.site_rate(i, Direction::Right) + process.site_rate(i, Direction::Left);
        }
        self.rebuild();
    }
}

/// Plain zero-range dynamics of a [`ProcessSpec`] acting on a
/// [`Configuration`].
pub struct ZrpProcess {
    pub spec: ProcessSpec,
    pub cfg: Configuration,
    guards: Vec<usize>,
}

impl ZrpProcess {
    pub fn new(spec: ProcessSpec, cfg: Configuration) -> Result<Self, SimError> {
        if cfg.len() != spec.geometry.len() {
            return Err(SimError::BadInit(format!(
                "occupancy has {} sites, lattice has {}",
                cfg.len(),
                spec.geometry.len()
            )));
        }
        if cfg.mass() != spec.k {
            return Err(SimError::BadInit(format!(
                "occupancy mass {} != k = {}",
                cfg.mass(),
                spec.k
            )));
        }
        let guards = spec.geometry.guard_indices();
        for &gidx in &guards {
            if cfg.occupancy[gidx] > 0 {
                return Err(SimError::EdgeReached { site: spec.geometry.site_of_index(gidx) });
            }
        }
        Ok(Self { spec, cfg, guards })
    }
}

impl JumpProcess for ZrpProcess {
    fn num_sites(&self) -> usize {
        self.cfg.len()
    }

    #[inline]
    fn site_rate(&self, idx: usize, dir: Direction) -> f64 {
        self.spec.jump_rate(self.cfg.occupancy[idx], idx, dir)
    }

    fn apply(&mut self, idx: usize, dir: Direction) -> Result<(), SimError> {
        let tgt = match dir {
            Direction::Right => idx + 1,
            Direction::Left => idx - 1,
        };
        self.cfg.occupancy[idx] -= 1;
        self.cfg.occupancy[tgt] += 1;
        if !self.guards.is_empty() && self.guards.contains(&tgt) {
            return Err(SimError::EdgeReached { site: self.spec.geometry.site_of_index(tgt) });
        }
        Ok(())
    }
}

/// Time-indexed snapshots of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub probe_times: Vec<f64>,
    pub snapshots: Vec<Configuration>,
    pub seed: u64,
    pub event_count: u64,
}

impl TrajectorySample {
    /// Long-format CSV with columns `t,site,occupancy`.
    pub fn to_csv(&self, geometry: &crate::lattice::LatticeGeometry) -> String {
        let mut out = String::from("t,site,occupancy\n");
        for (t, snap) in self.probe_times.iter().zip(&self.snapshots) {
            for (idx, &n) in snap.occupancy.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", t, geometry.site_of_index(idx), n));
            }
        }
        out
    }
}

/// Deterministic per-replica stream: replica r of a master seed gets an
/// independent generator.
pub fn replica_rng(master_seed: u64, replica: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(master_seed ^ mix(replica.wrapping_add(0x9E37_79B9_7F4A_7C15))))
}

/// Derived 64-bit seed for replica `replica` of a master seed.
pub fn replica_seed(master_seed: u64, replica: u64) -> u64 {
    mix(master_seed ^ mix(replica.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Exact-law trajectory of `spec` from `init`, sampled at `probes`.
///
/// Deterministic given the seed. Absorbing states idle until the horizon.
pub fn simulate(
    spec: &ProcessSpec,
    init: &Configuration,
    horizon: f64,
    probes: &[f64],
    seed: u64,
) -> Result<TrajectorySample, SimError> {
    let mut times: Vec<f64> = probes.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    if let Some(&last) = times.last() {
        if last > horizon || times[0] < 0.0 {
            return Err(SimError::BadProbe(if last > horizon { last } else { times[0] }));
        }
    }
    let mut engine = EventEngine::new(ZrpProcess::new(spec.clone(), init.clone())?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut snapshots = Vec::with_capacity(times.len());
    let outcome = engine.drive(
        &mut rng,
        horizon,
        &times,
        |_, p| snapshots.push(p.cfg.clone()),
        |_, _| Control::Continue,
    )?;
    debug_assert!(snapshots.iter().all(|s| s.mass() == spec.k), "mass must be conserved");
    Ok(TrajectorySample {
        probe_times: times,
        snapshots,
        seed,
        event_count: outcome.events,
    })
}
