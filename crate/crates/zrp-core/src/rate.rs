//! Jump-rate functions g: N -> [0, inf) for the zero-range dynamics.
//!
//! A rate function must satisfy g(0) = 0 < g(1), be non-decreasing and
//! Lipschitz in the occupancy. Four shapes are supported: constant,
//! linear, piecewise-linear in the occupancy, and an explicit table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("g(0) must be 0, got {0}")]
    NonzeroAtOrigin(f64),
    #[error("g(1) must be positive, got {0}")]
    ZeroAtOne(f64),
    #[error("rate function must be non-decreasing: g({n}) = {curr} < g({m}) = {prev}")]
    Decreasing { n: u32, curr: f64, m: u32, prev: f64 },
    #[error("rate values must be finite and non-negative")]
    Invalid,
}

/// Shape of a rate function, also its JSON declaration in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateShape {
    /// g(n) = rate for all n >= 1.
    Constant { rate: f64 },
    /// g(n) = slope * n (independent walkers).
    Linear { slope: f64 },
    /// Linear interpolation through (0,0) and the given (occupancy, rate)
    /// knots, constant after the last knot. Knots must be strictly
    /// increasing in occupancy.
    Piecewise { knots: Vec<(u32, f64)> },
    /// Explicit values g(0), g(1), ..., extended by the last entry beyond
    /// the stored range.
    Table { values: Vec<f64> },
}

/// A validated jump-rate function together with its Lipschitz constant
/// and (when finite) its supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    shape: RateShape,
    lipschitz: f64,
    upper_bound: Option<f64>,
}

impl RateFunction {
    pub fn constant(rate: f64) -> Result<Self, RateError> {
        Self::new(RateShape::Constant { rate })
    }

    pub fn linear(slope: f64) -> Result<Self, RateError> {
        Self::new(RateShape::Linear { slope })
    }

    pub fn piecewise(knots: Vec<(u32, f64)>) -> Result<Self, RateError> {
        Self::new(RateShape::Piecewise { knots })
    }

    pub fn table(values: Vec<f64>) -> Result<Self, RateError> {
        Self::new(RateShape::Table { values })
    }

    pub fn new(shape: RateShape) -> Result<Self, RateError> {
        let rf = |n: u32| eval_shape(&shape, n);
        let check_range = match &shape {
            RateShape::Constant { .. } => 4,
            RateShape::Linear { .. } => 4,
            RateShape::Piecewise { knots } => knots.last().map_or(1, |k| k.0) + 2,
            RateShape::Table { values } => values.len() as u32 + 1,
        };
        for n in 0..=check_range {
            let v = rf(n);
            if !v.is_finite() || v < 0.0 {
                return Err(RateError::Invalid);
            }
        }
        if rf(0) != 0.0 {
            return Err(RateError::NonzeroAtOrigin(rf(0)));
        }
        if rf(1) <= 0.0 {
            return Err(RateError::ZeroAtOne(rf(1)));
        }
        let mut lipschitz = 0.0_f64;
        for n in 0..check_range {
            let (a, b) = (rf(n), rf(n + 1));
            if b < a {
                return Err(RateError::Decreasing { n: n + 1, curr: b, m: n, prev: a });
            }
            lipschitz = lipschitz.max(b - a);
        }
        let upper_bound = match &shape {
            RateShape::Constant { rate } => Some(*rate),
            RateShape::Linear { .. } => None,
            RateShape::Piecewise { knots } => knots.last().map(|k| k.1),
            RateShape::Table { values } => values.last().copied(),
        };
        Ok(Self { shape, lipschitz, upper_bound })
    }

    /// Rate at occupancy `n`.
    #[inline]
    pub fn rate(&self, n: u32) -> f64 {
        eval_shape(&self.shape, n)
    }

    /// sup |g(n+1) - g(n)|.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// sup g when finite (bounded shapes), `None` for linear.
    pub fn upper_bound(&self) -> Option<f64> {
        self.upper_bound
    }

    pub fn shape(&self) -> &RateShape {
        &self.shape
    }

    /// g(1), the rate out of a singly occupied site.
    pub fn at_one(&self) -> f64 {
        self.rate(1)
    }

    /// log g(n)! = sum_{j=1}^{n} log g(j). Factorial convention: empty
    /// product for n = 0.
    pub fn log_rate_factorial(&self, n: u32) -> f64 {
        (1..=n).map(|j| self.rate(j).ln()).sum()
    }
}

fn eval_shape(shape: &RateShape, n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    match shape {
        RateShape::Constant { rate } => *rate,
        RateShape::Linear { slope } => slope * n as f64,
        RateShape::Piecewise { knots } => {
            let mut prev = (0u32, 0.0f64);
            for &(kn, kv) in knots {
                if n <= kn {
                    let span = (kn - prev.0) as f64;
                    return prev.1 + (kv - prev.1) * (n - prev.0) as f64 / span;
                }
                prev = (kn, kv);
            }
            prev.1
        }
        RateShape::Table { values } => {
            let idx = (n as usize).min(values.len().saturating_sub(1));
            values.get(idx).copied().unwrap_or(0.0)
        }
    }
}
