//! Lattice geometry, process specification, configurations and heights.

use crate::rate::RateFunction;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("segment size must be >= 1")]
    EmptySegment,
    #[error("window bounds must be finite and ordered, got [{lo}, {hi}]")]
    BadWindow { lo: i64, hi: i64 },
    #[error("bias p must lie in (1/2, 1], got {0}")]
    BadBias(f64),
    #[error("particle count must be >= 1")]
    NoParticles,
    #[error("custom occupancy carries mass {got}, expected {expected}")]
    BadMass { got: u64, expected: u64 },
    #[error("occupancy length {got} does not fit the lattice of {expected} sites")]
    BadShape { got: usize, expected: usize },
}

/// Finite piece of Z the process lives on.
///
/// Rays and line windows are finite surrogates with inert margins; the
/// simulator reports an error if mass ever touches a surrogate edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LatticeGeometry {
    /// Sites 1..=n with closed boundaries on both ends.
    Segment { n: usize },
    /// Sites window_lo..=right, a finite window of (-inf, right]. The
    /// right boundary is closed, the left edge must stay unoccupied.
    LeftRay { right: i64, window_lo: i64 },
    /// Sites lo..=hi, a finite window of Z. Both edges must stay
    /// unoccupied.
    LineWindow { lo: i64, hi: i64 },
}

impl LatticeGeometry {
    pub fn segment(n: usize) -> Result<Self, LatticeError> {
        if n == 0 {
            return Err(LatticeError::EmptySegment);
        }
        Ok(Self::Segment { n })
    }

    pub fn left_ray(right: i64, window_lo: i64) -> Result<Self, LatticeError> {
        if window_lo >= right {
            return Err(LatticeError::BadWindow { lo: window_lo, hi: right });
        }
        Ok(Self::LeftRay { right, window_lo })
    }

    pub fn line_window(lo: i64, hi: i64) -> Result<Self, LatticeError> {
        if lo >= hi {
            return Err(LatticeError::BadWindow { lo, hi });
        }
        Ok(Self::LineWindow { lo, hi })
    }

    /// Number of active sites.
    pub fn len(&self) -> usize {
        match *self {
            Self::Segment { n } => n,
            Self::LeftRay { right, window_lo } => (right - window_lo + 1) as usize,
            Self::LineWindow { lo, hi } => (hi - lo + 1) as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lattice coordinate of the 0-based storage index.
    pub fn site_of_index(&self, idx: usize) -> i64 {
        match *self {
            Self::Segment { .. } => idx as i64 + 1,
            Self::LeftRay { window_lo, .. } => window_lo + idx as i64,
            Self::LineWindow { lo, .. } => lo + idx as i64,
        }
    }

    /// Whether a jump from storage index `idx` in `dir` stays on the lattice.
    #[inline]
    pub fn can_jump(&self, idx: usize, dir: Direction) -> bool {
        match dir {
            Direction::Right => idx + 1 < self.len(),
            Direction::Left => idx > 0,
        }
    }

    /// Indices whose occupation signals that a surrogate window edge was
    /// reached (empty for a true segment).
    pub fn guard_indices(&self) -> Vec<usize> {
        match *self {
            Self::Segment { .. } => vec![],
            Self::LeftRay { .. } => vec![0],
            Self::LineWindow { lo, hi } => vec![0, (hi - lo) as usize],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Right,
    Left,
}

/// Per-site directed rates for the generic generator form; overrides the
/// homogeneous p*g / q*g rates when present.
pub type SiteRates = Arc<dyn Fn(u32, i64, Direction) -> f64 + Send + Sync>;

/// Everything defining the continuous-time dynamics: geometry, particle
/// count, right bias and jump rates.
#[derive(Clone)]
pub struct ProcessSpec {
    pub geometry: LatticeGeometry,
    pub k: u64,
    pub p: f64,
    pub g: RateFunction,
    pub site_overrides: Option<SiteRates>,
}

impl std::fmt::Debug for ProcessSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProcessSpec")
            .field("geometry", &self.geometry)
            .field("k", &self.k)
            .field("p", &self.p)
            .field("g", &self.g)
            .field("site_overrides", &self.site_overrides.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl ProcessSpec {
    pub fn new(
        geometry: LatticeGeometry,
        k: u64,
        p: f64,
        g: RateFunction,
    ) -> Result<Self, LatticeError> {
        if !(p > 0.5 && p <= 1.0) {
            return Err(LatticeError::BadBias(p));
        }
        if k == 0 {
            return Err(LatticeError::NoParticles);
        }
        Ok(Self { geometry, k, p, g, site_overrides: None })
    }

    pub fn segment(n: usize, k: u64, p: f64, g: RateFunction) -> Result<Self, LatticeError> {
        Self::new(LatticeGeometry::segment(n)?, k, p, g)
    }

    pub fn with_overrides(mut self, rates: SiteRates) -> Self {
        self.site_overrides = Some(rates);
        self
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    /// Directed jump rate out of storage index `idx` at occupancy `n`.
    /// Zero when the jump would leave the lattice.
    #[inline]
    pub fn jump_rate(&self, n: u32, idx: usize, dir: Direction) -> f64 {
        if n == 0 || !self.geometry.can_jump(idx, dir) {
            return 0.0;
        }
        match &self.site_overrides {
            Some(rates) => rates(n, self.geometry.site_of_index(idx), dir),
            None => match dir {
                Direction::Right => self.p * self.g.rate(n),
                Direction::Left => self.q() * self.g.rate(n),
            },
        }
    }
}

/// Occupancy vector over the active sites of a lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    pub occupancy: Vec<u32>,
}

impl Configuration {
    pub fn new(occupancy: Vec<u32>) -> Self {
        Self { occupancy }
    }

    pub fn mass(&self) -> u64 {
        self.occupancy.iter().map(|&n| n as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    /// Cumulative heights h(j) = sum_{i <= j} occupancy(i).
    pub fn height_function(&self) -> HeightFunction {
        let mut acc = 0u64;
        let cumulative = self
            .occupancy
            .iter()
            .map(|&n| {
                acc += n as u64;
                acc
            })
            .collect();
        HeightFunction { cumulative }
    }

    /// 0-based index of the left-most occupied site, if any.
    pub fn leftmost_occupied(&self) -> Option<usize> {
        self.occupancy.iter().position(|&n| n > 0)
    }

    /// JSON array form, the wire format for configurations.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.occupancy).expect("serializing a vec of ints cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        Ok(Self { occupancy: serde_json::from_str(s)? })
    }
}

/// Monotone height encoding of a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeightFunction {
    pub cumulative: Vec<u64>,
}

impl HeightFunction {
    /// h(j) for 0-based j; h(-1) = 0 by convention.
    pub fn at(&self, j: usize) -> u64 {
        self.cumulative[j]
    }

    pub fn total(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }

    /// Pointwise order h >= other.
    pub fn dominates(&self, other: &HeightFunction) -> bool {
        self.cumulative.len() == other.cumulative.len()
            && self.cumulative.iter().zip(&other.cumulative).all(|(a, b)| a >= b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// All k particles on the left-most site.
    Wedge,
    /// All k particles on the right-most site.
    Vee,
    Custom,
}

/// Build an initial configuration for `spec`.
pub fn make_config(
    kind: InitKind,
    spec: &ProcessSpec,
    custom: Option<Vec<u32>>,
) -> Result<Configuration, LatticeError> {
    let len = spec.geometry.len();
    match kind {
        InitKind::Wedge => {
            let mut occ = vec![0u32; len];
            occ[0] = spec.k as u32;
            Ok(Configuration::new(occ))
        }
        InitKind::Vee => {
            let mut occ = vec![0u32; len];
            occ[len - 1] = spec.k as u32;
            Ok(Configuration::new(occ))
        }
        InitKind::Custom => {
            let occ = custom.ok_or(LatticeError::BadMass { got: 0, expected: spec.k })?;
            if occ.len() != len {
                return Err(LatticeError::BadShape { got: occ.len(), expected: len });
            }
            let cfg = Configuration::new(occ);
            if cfg.mass() != spec.k {
                return Err(LatticeError::BadMass { got: cfg.mass(), expected: spec.k });
            }
            Ok(cfg)
        }
    }
}

/// Sum of all enabled clock rates of `cfg` under `spec`.
pub fn total_jump_rate(spec: &ProcessSpec, cfg: &Configuration) -> f64 {
    cfg.occupancy
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            spec.jump_rate(n, idx, Direction::Right) + spec.jump_rate(n, idx, Direction::Left)
        })
        .sum()
}

/// Rescaled cumulative profile x in [0,1] -> h(floor(x N)) / N of a segment
/// configuration.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    heights: Vec<u64>,
    n: usize,
}

pub fn empirical_cdf(cfg: &Configuration, n: usize) -> EmpiricalCdf {
    assert_eq!(cfg.len(), n, "configuration must live on a segment of size N");
    EmpiricalCdf { heights: cfg.height_function().cumulative, n }
}

impl EmpiricalCdf {
    /// Right-continuous step value at x in [0, 1].
    pub fn eval(&self, x: f64) -> f64 {
        if x < 1.0 / self.n as f64 {
            return 0.0;
        }
        let j = ((x * self.n as f64).floor() as usize).min(self.n);
        self.heights[j - 1] as f64 / self.n as f64
    }

    pub fn terminal(&self) -> f64 {
        *self.heights.last().unwrap() as f64 / self.n as f64
    }
}
