//! Grand-canonical family, macroscopic flux and its Legendre conjugate.
//!
//! For a rate function g the single-site weight at fugacity phi is
//! phi^n / g(n)! with partition function Z(phi). The flux maps a density
//! alpha to the unique fugacity whose grand-canonical mean is alpha; its
//! conjugate drives the Hopf-Lax evaluation in [`crate::hj`].

use crate::rate::RateFunction;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FluxError {
    #[error("series diverges at fugacity {phi} (no geometric decay within {max_terms} terms); fugacity at or beyond the convergence radius")]
    Divergence { phi: f64, max_terms: usize },
    #[error("cannot bracket density {alpha} below the fugacity radius")]
    UnreachableDensity { alpha: f64 },
    #[error("sampled fugacity-to-mean map is not increasing near alpha = {alpha}")]
    NonMonotone { alpha: f64 },
    #[error("flux tabulation has inconsistent second differences; neither convex, concave, nor linear")]
    MixedConvexity,
    #[error("operation requires a strictly concave flux, model is {0:?}")]
    NotConcave(Convexity),
    #[error("operation is degenerate for a linear flux")]
    LinearFlux,
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

/// Default cap on series terms before declaring divergence.
pub const MAX_SERIES_TERMS: usize = 20_000_000;

/// Partition function value together with the truncation index used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition {
    pub z: f64,
    pub n_cut: u32,
}

/// Z(phi) = sum_k phi^k / g(k)! to relative accuracy `tol`.
///
/// Truncation stops once the running term has decreased for five
/// consecutive indices, is below tol times the partial sum, and the
/// geometric tail bound is below tol times the partial sum. Persistent
/// growth signals a fugacity at or beyond the convergence radius.
pub fn eval_partition(g: &RateFunction, phi: f64, tol: f64) -> Result<Partition, FluxError> {
    series_sums(g, phi, tol).map(|s| Partition { z: s.z, n_cut: s.n_cut })
}

/// Mean occupancy E[X] under the grand-canonical law at fugacity `phi`.
pub fn mean_density(g: &RateFunction, phi: f64, tol: f64) -> Result<f64, FluxError> {
    series_sums(g, phi, tol).map(|s| s.mean)
}

struct SeriesSums {
    z: f64,
    mean: f64,
    n_cut: u32,
}

fn series_sums(g: &RateFunction, phi: f64, tol: f64) -> Result<SeriesSums, FluxError> {
    if !(phi >= 0.0) || !phi.is_finite() {
        return Err(FluxError::BadArgument(format!("fugacity must be finite and >= 0, got {phi}")));
    }
    if phi == 0.0 {
        return Ok(SeriesSums { z: 1.0, mean: 0.0, n_cut: 0 });
    }
    // bounded rates have convergence radius sup g exactly
    if g.upper_bound().is_some_and(|gbar| phi >= gbar) {
        return Err(FluxError::Divergence { phi, max_terms: 0 });
    }
    let mut term = 1.0_f64; // phi^n / g(n)!
    let mut z = 1.0_f64;
    let mut first_moment = 0.0_f64;
    let mut decreasing_run = 0u32;
    let mut prev_term = f64::INFINITY;
    for n in 1..=MAX_SERIES_TERMS {
        let ratio = phi / g.rate(n as u32);
        term *= ratio;
        if !term.is_finite() || term > 1e250 {
            return Err(FluxError::Divergence { phi, max_terms: n });
        }
        z += term;
        first_moment += n as f64 * term;
        if term < prev_term {
            decreasing_run += 1;
        } else {
            decreasing_run = 0;
        }
        prev_term = term;
        if decreasing_run >= 5 && term <= tol * z && ratio < 1.0 {
            // geometric tail bound for both series; the first-moment tail
            // carries an extra factor ~ n/(1-r)
            let tail = term * ratio / (1.0 - ratio);
            let moment_tail = tail * (n as f64 + 1.0 / (1.0 - ratio));
            if tail <= tol * z && moment_tail <= tol * first_moment.max(z) {
                return Ok(SeriesSums { z, mean: first_moment / z, n_cut: n as u32 });
            }
        }
    }
    Err(FluxError::Divergence { phi, max_terms: MAX_SERIES_TERMS })
}

/// Single-site grand-canonical law at fugacity `phi`, truncated so the
/// discarded tail mass is at most `tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrandCanonical {
    pub fugacity: f64,
    pub pmf: Vec<f64>,
    pub truncation_mass: f64,
    pub partition_z: f64,
}

impl GrandCanonical {
    pub fn build(g: &RateFunction, phi: f64, tol: f64) -> Result<Self, FluxError> {
        let part = eval_partition(g, phi, tol * 1e-2)?;
        let mut weights = vec![1.0_f64];
        let mut term = 1.0_f64;
        let mut acc = 1.0_f64;
        let mut n = 0u32;
        while acc < (1.0 - tol) * part.z && n < part.n_cut + 64 {
            n += 1;
            term *= phi / g.rate(n);
            weights.push(term);
            acc += term;
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / part.z).collect();
        let truncation_mass = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
        Ok(Self { fugacity: phi, pmf, truncation_mass, partition_z: part.z })
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    StrictlyConvex,
    StrictlyConcave,
    Linear,
}

/// Tabulation parameters for [`FluxModel::build`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FluxModelConfig {
    pub alpha_max: f64,
    pub tol: f64,
    pub grid_points: usize,
}

impl Default for FluxModelConfig {
    fn default() -> Self {
        Self { alpha_max: 4.0, tol: 1e-10, grid_points: 2048 }
    }
}

/// Tabulated macroscopic flux with exact point queries.
///
/// The grid holds flux values obtained by inverting the fugacity-to-mean
/// map by bisection; `flux_at` and `conjugate_at` re-run the exact
/// inversion rather than interpolating, so their accuracy is set by the
/// series tolerance, not the grid spacing.
#[derive(Debug, Clone)]
pub struct FluxModel {
    g: RateFunction,
    pub config: FluxModelConfig,
    pub density_grid: Vec<f64>,
    pub flux_values: Vec<f64>,
    pub flux_derivative: Vec<f64>,
    pub fugacity_radius: f64,
    pub convexity: Convexity,
}

/// Value and maximizer of the conjugate, with a flag for suprema attained
/// only at the search boundary (the reported value is then a lower bound).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conjugate {
    pub value: f64,
    pub argmax: f64,
    pub boundary_max: bool,
}

impl FluxModel {
    pub fn build(g: &RateFunction, config: FluxModelConfig) -> Result<Self, FluxError> {
        if config.alpha_max <= 0.0 || config.grid_points < 8 {
            return Err(FluxError::BadArgument("alpha_max must be > 0 and grid_points >= 8".into()));
        }
        let m = config.grid_points;
        let h = config.alpha_max / (m - 1) as f64;
        let density_grid: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
        let mut flux_values = Vec::with_capacity(m);
        for &a in &density_grid {
            flux_values.push(invert_mean(g, a, config.tol)?);
        }
        for w in flux_values.windows(2) {
            if w[1] <= w[0] {
                return Err(FluxError::NonMonotone { alpha: w[0] });
            }
        }
        let mut flux_derivative = vec![0.0; m];
        flux_derivative[0] = g.at_one(); // exact limit of the mean map at zero density
        for i in 1..m - 1 {
            flux_derivative[i] = (flux_values[i + 1] - flux_values[i - 1]) / (2.0 * h);
        }
        flux_derivative[m - 1] = (flux_values[m - 1] - flux_values[m - 2]) / h;

        let scale = flux_values.last().unwrap().abs().max(1.0);
        let lin_tol = (1e-12 + 20.0 * config.tol) * scale;
        let mut pos = 0usize;
        let mut neg = 0usize;
        let mut zero = 0usize;
        for i in 1..m - 1 {
            let d2 = flux_values[i + 1] - 2.0 * flux_values[i] + flux_values[i - 1];
            if d2 > lin_tol {
                pos += 1;
            } else if d2 < -lin_tol {
                neg += 1;
            } else {
                zero += 1;
            }
        }
        let convexity = if neg == 0 && pos > 0 && zero <= m / 16 {
            Convexity::StrictlyConvex
        } else if pos == 0 && neg > 0 && zero <= m / 16 {
            Convexity::StrictlyConcave
        } else if pos == 0 && neg == 0 {
            Convexity::Linear
        } else {
            return Err(FluxError::MixedConvexity);
        };
        let fugacity_radius = g.upper_bound().unwrap_or(f64::INFINITY);
        Ok(Self {
            g: g.clone(),
            config,
            density_grid,
            flux_values,
            flux_derivative,
            fugacity_radius,
            convexity,
        })
    }

    pub fn rate_function(&self) -> &RateFunction {
        &self.g
    }

    /// Flux at density `alpha`, by fresh bisection of the mean map.
    pub fn flux_at(&self, alpha: f64) -> Result<f64, FluxError> {
        invert_mean(&self.g, alpha, self.config.tol)
    }

    /// Flux derivative by small-step central differences of exact values.
    pub fn derivative_at(&self, alpha: f64) -> Result<f64, FluxError> {
        if alpha <= 0.0 {
            return Ok(self.g.at_one());
        }
        let h = 1e-5 * (1.0 + alpha);
        let lo = (alpha - h).max(0.0);
        let f_hi = self.flux_at(alpha + h)?;
        let f_lo = self.flux_at(lo)?;
        Ok((f_hi - f_lo) / (alpha + h - lo))
    }

    /// Conjugate at `x`: sup_a (a x - Phi(a)) for convex flux,
    /// sup_a (a x + Phi(a)) for concave flux. The maximizer doubles as the
    /// conjugate's derivative.
    pub fn conjugate_at(&self, x: f64) -> Result<Conjugate, FluxError> {
        let sign = match self.convexity {
            Convexity::StrictlyConvex => -1.0,
            Convexity::StrictlyConcave => 1.0,
            Convexity::Linear => return Err(FluxError::LinearFlux),
        };
        let obj = |a: f64| -> f64 {
            let phi = invert_mean(&self.g, a, self.config.tol).unwrap_or(f64::NAN);
            a * x + sign * phi
        };
        let cap = 1e4_f64.max(4.0 * self.config.alpha_max);
        // grow the bracket while the objective still increases at its end;
        // for a bounded rate, obj(a) <= a x + gbar for all a, so expansion
        // can stop as soon as the line a x + gbar falls below the best
        // value seen (x < 0 only)
        let bound_line = self.g.upper_bound().filter(|_| x < 0.0);
        let mut hi = self.config.alpha_max.max(1.0);
        let mut boundary_max = false;
        loop {
            let f_hi = obj(hi);
            let f_in = obj(hi * (1.0 - 1e-4));
            if !(f_hi > f_in) {
                break;
            }
            if let Some(gbar) = bound_line {
                if 2.0 * hi * x + sign * gbar <= f_hi {
                    // nothing beyond 2*hi can import
                    hi *= 2.0;
                    break;
                }
            }
            if hi >= cap {
                boundary_max = true;
                break;
            }
            hi = (hi * 2.0).min(cap);
        }
        let (mut best_a, mut best_v) = golden_max(&obj, 0.0, hi, 90);
        // parabolic polish
        for _ in 0..2 {
            let d = 1e-6 * (1.0 + best_a);
            let (fl, fc, fr) = (obj(best_a - d.min(best_a)), best_v, obj(best_a + d));
            let denom = fl - 2.0 * fc + fr;
            if denom < 0.0 {
                let step = 0.5 * d * (fl - fr) / denom;
                let cand = (best_a + step).clamp(0.0, hi);
                let fcand = obj(cand);
                if fcand > best_v {
                    best_a = cand;
                    best_v = fcand;
                }
            }
        }
        if 0.0 > best_v {
            // alpha = 0 supports the conjugate from below: Psi >= 0
            best_a = 0.0;
            best_v = 0.0;
        }
        if boundary_max && best_a > 0.95 * hi {
            best_a = hi;
            best_v = obj(hi);
        } else {
            boundary_max = false;
        }
        Ok(Conjugate { value: best_v, argmax: best_a, boundary_max })
    }

    /// CSV dump with columns `alpha,phi,phi_prime`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,phi,phi_prime\n");
        for i in 0..self.density_grid.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.density_grid[i], self.flux_values[i], self.flux_derivative[i]
            ));
        }
        out
    }
}

/// The unique fugacity whose grand-canonical mean is `alpha`.
///
/// Safeguarded Newton on the strictly increasing mean map; the fugacity
/// derivative of the mean is Var(X)/phi, so each Newton step costs one
/// extra moment in the same series pass.
pub fn invert_mean(g: &RateFunction, alpha: f64, tol: f64) -> Result<f64, FluxError> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(FluxError::BadArgument(format!("density must be finite and >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    // mean and variance in one pass; divergence treated as mean = +inf
    let moments = |phi: f64| -> Result<Option<(f64, f64)>, FluxError> {
        match series_moments(g, phi, tol) {
            Ok(m) => Ok(Some(m)),
            Err(FluxError::Divergence { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let mut hi = g.at_one().min(1.0);
    let mut hi_mean;
    let mut grow = 0;
    loop {
        hi_mean = moments(hi)?;
        if hi_mean.map_or(true, |(m, _)| m >= alpha) {
            break;
        }
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(FluxError::UnreachableDensity { alpha });
        }
    }
    let mut lo = if grow == 0 { 0.0 } else { hi / 2.0 };
    let mut phi = match hi_mean {
        // secant-style initial guess inside the bracket
        Some((m, _)) if m > alpha => hi * alpha / m,
        _ => 0.5 * (lo + hi),
    };
    for _ in 0..60 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        if !(phi > lo && phi < hi) {
            phi = 0.5 * (lo + hi);
        }
        match moments(phi)? {
            None => {
                hi = phi;
                phi = 0.5 * (lo + hi);
            }
            Some((mean, var)) => {
                if (mean - alpha).abs() <= 0.5 * tol * alpha {
                    return Ok(phi);
                }
                if mean >= alpha {
                    hi = phi;
                } else {
                    lo = phi;
                }
                // Newton step on mean(phi) - alpha with d mean/d phi = var/phi
                let step = if var > 0.0 { (alpha - mean) * phi / var } else { 0.0 };
                phi += step;
            }
        }
    }
    Ok(0.5 * (lo + hi))
}

fn series_moments(g: &RateFunction, phi: f64, tol: f64) -> Result<(f64, f64), FluxError> {
    if phi == 0.0 {
        return Ok((0.0, 0.0));
    }
    if g.upper_bound().is_some_and(|gbar| phi >= gbar) {
        return Err(FluxError::Divergence { phi, max_terms: 0 });
    }
    let mut term = 1.0_f64;
    let mut z = 1.0_f64;
    let mut s1 = 0.0_f64;
    let mut s2 = 0.0_f64;
    let mut decreasing_run = 0u32;
    let mut prev_term = f64::INFINITY;
    for n in 1..=MAX_SERIES_TERMS {
        let ratio = phi / g.rate(n as u32);
        term *= ratio;
        if !term.is_finite() || term > 1e250 {
            return Err(FluxError::Divergence { phi, max_terms: n });
        }
        let nf = n as f64;
        z += term;
        s1 += nf * term;
        s2 += nf * nf * term;
        if term < prev_term {
            decreasing_run += 1;
        } else {
            decreasing_run = 0;
        }
        prev_term = term;
        if decreasing_run >= 5 && term <= tol * z && ratio < 1.0 {
            let tail = term * ratio / (1.0 - ratio);
            let n_eff = nf + 1.0 / (1.0 - ratio);
            if tail <= tol * z && tail * n_eff * n_eff <= tol * s2.max(z) {
                let mean = s1 / z;
                let var = (s2 / z - mean * mean).max(0.0);
                return Ok((mean, var));
            }
        }
    }
    Err(FluxError::Divergence { phi, max_terms: MAX_SERIES_TERMS })
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    const INV_GOLD: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_GOLD * (b - a);
    let mut x2 = a + INV_GOLD * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_GOLD * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_GOLD * (b - a);
            f1 = f(x1);
        }
        if (b - a).abs() < 1e-12 * (1.0 + a.abs() + b.abs()) {
            break;
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_rate() -> RateFunction {
        RateFunction::constant(1.0).unwrap()
    }

    fn lin_rate() -> RateFunction {
        RateFunction::linear(1.0).unwrap()
    }

    #[test]
    fn partition_geometric_series() {
        // Z(phi) = 1/(1-phi) for the constant rate
        let p = eval_partition(&const_rate(), 0.5, 1e-12).unwrap();
        assert!((p.z - 2.0).abs() < 1e-10, "Z = {}", p.z);
    }

    #[test]
    fn partition_at_zero_fugacity() {
        let p = eval_partition(&lin_rate(), 0.0, 1e-12).unwrap();
        assert_eq!(p.z, 1.0);
        assert_eq!(p.n_cut, 0);
    }

    #[test]
    fn partition_exponential_series() {
        // Z(phi) = e^phi for the linear rate
        let p = eval_partition(&lin_rate(), 1.0, 1e-13).unwrap();
        assert!((p.z - 1.0f64.exp()).abs() < 1e-11, "Z = {}", p.z);
    }

    #[test]
    fn partition_diverges_beyond_radius() {
        let err = eval_partition(&const_rate(), 1.0, 1e-10);
        assert!(matches!(err, Err(FluxError::Divergence { .. })));
    }

    #[test]
    fn mean_geometric() {
        let m = mean_density(&const_rate(), 0.5, 1e-12).unwrap();
        assert!((m - 1.0).abs() < 1e-10, "mean = {m}");
    }

    #[test]
    fn mean_zero_fugacity() {
        assert_eq!(mean_density(&const_rate(), 0.0, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn mean_poisson() {
        let m = mean_density(&lin_rate(), 2.0, 1e-12).unwrap();
        assert!((m - 2.0).abs() < 1e-10, "mean = {m}");
    }

    #[test]
    fn grand_canonical_pmf_matches_weights() {
        let gc = GrandCanonical::build(&const_rate(), 0.5, 1e-10).unwrap();
        assert!(gc.truncation_mass <= 1e-10);
        // geometric law: pmf(n) = (1-phi) phi^n
        for (n, p) in gc.pmf.iter().enumerate().take(10) {
            assert!((p - 0.5 * 0.5f64.powi(n as i32)).abs() < 1e-10);
        }
        let total: f64 = gc.pmf.iter().sum();
        assert!((total + gc.truncation_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flux_model_constant_rate() {
        let model = FluxModel::build(&const_rate(), FluxModelConfig::default()).unwrap();
        assert_eq!(model.convexity, Convexity::StrictlyConcave);
        assert_eq!(model.fugacity_radius, 1.0);
        let phi1 = model.flux_at(1.0).unwrap();
        assert!((phi1 - 0.5).abs() < 1e-9, "Phi(1) = {phi1}");
        assert_eq!(model.flux_at(0.0).unwrap(), 0.0);
        // closed form Phi(alpha) = alpha/(1+alpha) across the grid
        for (a, phi) in model.density_grid.iter().zip(&model.flux_values) {
            assert!((phi - a / (1.0 + a)).abs() < 1e-9, "alpha={a} phi={phi}");
        }
    }

    #[test]
    fn flux_model_linear_rate() {
        let cfg = FluxModelConfig { grid_points: 256, ..Default::default() };
        let model = FluxModel::build(&lin_rate(), cfg).unwrap();
        assert_eq!(model.convexity, Convexity::Linear);
        assert!(model.fugacity_radius.is_infinite());
        for (a, phi) in model.density_grid.iter().zip(&model.flux_values) {
            assert!((phi - a).abs() < 1e-9);
        }
    }

    #[test]
    fn conjugate_constant_rate_interior() {
        let model = FluxModel::build(&const_rate(), FluxModelConfig::default()).unwrap();
        // closed form Psi(x) = (1 - sqrt(-x))^2 with maximizer sqrt(-1/x) - 1
        let c = model.conjugate_at(-0.25).unwrap();
        assert!((c.value - 0.25).abs() < 1e-8, "Psi(-1/4) = {}", c.value);
        assert!((c.argmax - 1.0).abs() < 1e-4, "argmax = {}", c.argmax);
        assert!(!c.boundary_max);
    }

    #[test]
    fn conjugate_constant_rate_supporting_origin() {
        let model = FluxModel::build(&const_rate(), FluxModelConfig::default()).unwrap();
        let c = model.conjugate_at(-1.0).unwrap();
        assert!(c.value.abs() < 1e-10);
        assert!(c.argmax.abs() < 1e-4);
    }

    #[test]
    fn conjugate_boundary_supremum_at_zero() {
        let model = FluxModel::build(&const_rate(), FluxModelConfig::default()).unwrap();
        let c = model.conjugate_at(0.0).unwrap();
        assert!(c.boundary_max, "supremum at x=0 is only approached");
        assert!((c.value - 1.0).abs() < 1e-3, "boundary value {}", c.value);
    }

    #[test]
    fn conjugate_rejects_linear() {
        let cfg = FluxModelConfig { grid_points: 128, ..Default::default() };
        let model = FluxModel::build(&lin_rate(), cfg).unwrap();
        assert!(matches!(model.conjugate_at(-0.5), Err(FluxError::LinearFlux)));
    }

    #[test]
    fn derivative_endpoints() {
        let model = FluxModel::build(&const_rate(), FluxModelConfig::default()).unwrap();
        assert_eq!(model.flux_derivative[0], 1.0);
        // Phi'(alpha) = 1/(1+alpha)^2
        let d = model.derivative_at(1.0).unwrap();
        assert!((d - 0.25).abs() < 1e-7, "Phi'(1) = {d}");
    }

    #[test]
    fn round_trip_density() {
        let model = FluxModel::build(&const_rate(), FluxModelConfig::default()).unwrap();
        for &a in &[0.25, 1.0, 2.5, 4.0] {
            let phi = model.flux_at(a).unwrap();
            let back = mean_density(model.rate_function(), phi, 1e-12).unwrap();
            assert!((back - a).abs() < 1e-8, "alpha={a} back={back}");
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let cfg = FluxModelConfig { grid_points: 16, ..Default::default() };
        let model = FluxModel::build(&const_rate(), cfg).unwrap();
        let csv = model.to_csv();
        assert!(csv.starts_with("alpha,phi,phi_prime\n"));
        assert_eq!(csv.lines().count(), 17);
    }
}
