//! Macroscopic description: Hopf-Lax profiles, equilibrium time, fronts.
//!
//! For a strictly convex flux the profile from initial cumulative data
//! U0 is U(t,x) = inf_y [U0(y) + t Psi((x-y)/t)] with Psi the convex
//! conjugate of Phi; for a strictly concave flux it is
//! U(t,x) = sup_y [U0(y) - t Psi((y-x)/t)] with Psi the conjugate of
//! -Phi. Initial data are read lower semicontinuously in the convex case
//! and upper semicontinuously in the concave case.
//!
//! Time conventions: `hopf_lax_eval` takes the hydrodynamic time directly.
//! The profile and front operations taking a bias `p` accept macroscopic
//! time t (microscopic time / N) and apply the (2p-1) speedup internally.

use crate::flux::{Convexity, FluxError, FluxModel};
use serde::{Deserialize, Serialize};

/// Tolerance used to declare the profile flat at equilibrium.
const EQ_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    /// Mass `mass` concentrated at the origin.
    Dirac { mass: f64 },
    /// Atoms (position, mass).
    MeasureAtoms { atoms: Vec<(f64, f64)> },
    /// Continuous piecewise-linear cumulative function through
    /// (breakpoints[i], values[i]); constant outside the table.
    CdfTable { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl InitialData {
    pub fn dirac(mass: f64) -> Self {
        Self::Dirac { mass }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Self::Dirac { mass } => *mass,
            Self::MeasureAtoms { atoms } => atoms.iter().map(|a| a.1).sum(),
            Self::CdfTable { values, .. } => values.last().copied().unwrap_or(0.0),
        }
    }

    /// Positions where the cumulative function can kink or jump.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Dirac { .. } => vec![0.0],
            Self::MeasureAtoms { atoms } => atoms.iter().map(|a| a.0).collect(),
            Self::CdfTable { breakpoints, .. } => breakpoints.clone(),
        }
    }

    /// Cumulative value at `y` under the given semicontinuity convention.
    fn eval(&self, y: f64, convention: Semicontinuity) -> f64 {
        let strict = matches!(convention, Semicontinuity::Lower);
        match self {
            Self::Dirac { mass } => {
                let in_mass = if strict { y > 0.0 } else { y >= 0.0 };
                if in_mass {
                    *mass
                } else {
                    0.0
                }
            }
            Self::MeasureAtoms { atoms } => atoms
                .iter()
                .filter(|(a, _)| if strict { *a < y } else { *a <= y })
                .map(|(_, m)| m)
                .sum(),
            Self::CdfTable { breakpoints, values } => {
                if breakpoints.is_empty() {
                    return 0.0;
                }
                if y <= breakpoints[0] {
                    return values[0];
                }
                if y >= *breakpoints.last().unwrap() {
                    return *values.last().unwrap();
                }
                let i = breakpoints.partition_point(|&b| b <= y) - 1;
                let w = (y - breakpoints[i]) / (breakpoints[i + 1] - breakpoints[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Semicontinuity {
    /// Convex flux: U0(y) = mass of (-inf, y).
    Lower,
    /// Concave flux: U0(y) = mass of (-inf, y].
    Upper,
}

/// Initial data paired with a flux model; evaluation convention follows
/// the model's convexity.
pub struct MacroProfile<'a> {
    pub model: &'a FluxModel,
    pub data: InitialData,
    pub convention: Semicontinuity,
}

impl<'a> MacroProfile<'a> {
    pub fn new(model: &'a FluxModel, data: InitialData) -> Result<Self, FluxError> {
        let convention = match model.convexity {
            Convexity::StrictlyConvex => Semicontinuity::Lower,
            Convexity::StrictlyConcave => Semicontinuity::Upper,
            Convexity::Linear => return Err(FluxError::LinearFlux),
        };
        Ok(Self { model, data, convention })
    }
}

fn psi(model: &FluxModel, z: f64) -> Result<f64, FluxError> {
    Ok(model.conjugate_at(z)?.value)
}

/// Inverse of the non-decreasing conjugate on [-g(1), 0] (concave flux).
fn psi_inverse(model: &FluxModel, w: f64) -> Result<f64, FluxError> {
    let g1 = model.rate_function().at_one();
    let mut lo = -g1;
    let mut hi = 0.0_f64;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if psi(model, mid)? >= w {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Variational Hopf-Lax value at hydrodynamic time `t > 0` and position
/// `x`; infimum for convex flux, supremum for concave flux.
pub fn hopf_lax_eval(profile: &MacroProfile, t: f64, x: f64) -> Result<f64, FluxError> {
    if !(t > 0.0) {
        return Err(FluxError::BadArgument(format!("hydrodynamic time must be > 0, got {t}")));
    }
    let model = profile.model;
    let g1 = model.rate_function().at_one();
    let alpha = profile.data.total_mass();
    if alpha == 0.0 {
        return Ok(0.0);
    }
    match model.convexity {
        Convexity::Linear => Err(FluxError::LinearFlux),
        Convexity::StrictlyConvex => {
            // flat conjugate for z <= Phi'(0): the infimum over y >= x - t g(1)
            // is attained at the left end of that ray
            let y_flat = x - t * g1;
            let mut best = profile.data.eval(y_flat, profile.convention);
            // beyond z_cap the penalty alone exceeds the total mass
            let z_cap = find_z_at_level(model, alpha, g1)?;
            let y_lo = x - t * z_cap;
            let obj = |y: f64| -> f64 {
                let pen = psi(model, (x - y) / t).unwrap_or(f64::INFINITY);
                profile.data.eval(y, profile.convention) + t * pen
            };
            best = best.min(search_extremum(&profile.data, y_lo, y_flat, &obj, false));
            Ok(best.clamp(0.0, alpha))
        }
        Convexity::StrictlyConcave => {
            // conjugate vanishes for arguments <= -g(1): the supremum over
            // y <= x - t g(1) is attained at the right end
            let y_flat = x - t * g1;
            let mut best = profile.data.eval(y_flat, profile.convention);
            // where the penalty alone exceeds the total mass the objective
            // cannot beat the flat candidate; cutting there also keeps the
            // conjugate away from its expensive near-zero edge
            let y_hi = match model.rate_function().upper_bound() {
                Some(gbar) if alpha / t < gbar => {
                    (x + t * psi_inverse(model, alpha / t)?).max(y_flat)
                }
                _ => x,
            };
            let obj = |y: f64| -> f64 {
                let pen = psi(model, (y - x) / t).unwrap_or(f64::INFINITY);
                profile.data.eval(y, profile.convention) - t * pen
            };
            best = best.max(search_extremum(&profile.data, y_flat, y_hi, &obj, true));
            Ok(best.clamp(0.0, alpha))
        }
    }
}

/// Smallest z >= g(1) with Psi(z) >= level (convex flux).
fn find_z_at_level(model: &FluxModel, level: f64, g1: f64) -> Result<f64, FluxError> {
    let mut hi = 2.0 * g1.max(1.0);
    let mut grow = 0;
    while psi(model, hi)? < level {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(FluxError::BadArgument(
                "conjugate level set cannot be bracketed; search is non-finite".into(),
            ));
        }
    }
    let mut lo = g1;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if psi(model, mid)? >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Optimize the variational objective over [lo, hi], splitting at the
/// initial data's breakpoints; each piece is unimodal.
fn search_extremum(
    data: &InitialData,
    lo: f64,
    hi: f64,
    obj: &impl Fn(f64) -> f64,
    maximize: bool,
) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    let mut cuts: Vec<f64> = vec![lo, hi];
    for b in data.breakpoints() {
        if b > lo && b < hi {
            cuts.push(b);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = f64::INFINITY;
    for &c in &cuts {
        best = best.min(sign * obj(c));
    }
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 1e-14 {
            continue;
        }
        let (_, v) = golden_min(&|y| sign * obj(y), a, b, 64);
        best = best.min(v);
    }
    sign * best
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    const INV_GOLD: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_GOLD * (b - a);
    let mut x2 = a + INV_GOLD * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 > f2 {
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
        if (b - a).abs() < 1e-13 * (1.0 + a.abs() + b.abs()) {
            break;
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Profile from a Dirac of mass `alpha` at the origin, at macroscopic time
/// `t` and position `x`, including the (2p-1) speedup.
///
/// Uses the collapsed one-dimensional form of the variational formula
/// (one conjugate evaluation per point); agrees with [`hopf_lax_eval`].
pub fn dirac_profile(
    model: &FluxModel,
    alpha: f64,
    p: f64,
    t: f64,
    x: f64,
) -> Result<f64, FluxError> {
    let s = (2.0 * p - 1.0) * t;
    if s <= 0.0 {
        // initial datum
        return Ok(if x > 0.0 { alpha } else { 0.0 });
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let g1 = model.rate_function().at_one();
    match model.convexity {
        Convexity::Linear => Err(FluxError::LinearFlux),
        Convexity::StrictlyConvex => {
            if x <= g1 * s {
                return Ok(0.0);
            }
            let pen = s * psi(model, x / s)?;
            Ok(pen.min(alpha))
        }
        Convexity::StrictlyConcave => {
            if x > g1 * s {
                return Ok(alpha);
            }
            let pen = s * psi(model, -x / s)?;
            Ok((alpha - pen).max(0.0))
        }
    }
}

/// Segment profile v(t, [0, x]) for x in (0, 1]: the upper-semicontinuous
/// envelope of max(U, alpha * 1[x >= 1]).
pub fn segment_profile(
    model: &FluxModel,
    alpha: f64,
    p: f64,
    t: f64,
    x: f64,
) -> Result<f64, FluxError> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(FluxError::BadArgument(format!("x must lie in (0, 1], got {x}")));
    }
    let raw = |xx: f64| -> Result<f64, FluxError> {
        let u = dirac_profile(model, alpha, p, t, xx)?;
        Ok(if xx >= 1.0 { u.max(alpha) } else { u })
    };
    // upper-semicontinuous envelope via one-sided limits
    let delta = 1e-9 * (1.0 + x.abs());
    let mut v = raw(x)?;
    v = v.max(raw(x - delta)?);
    if x + delta <= 1.0 {
        v = v.max(raw(x + delta)?);
    } else {
        v = v.max(alpha);
    }
    Ok(v)
}

/// First macroscopic time at which the Dirac profile has no mass left of
/// the segment's right end; includes the 1/(2p-1) sloweddown.
///
/// Convex flux: 1/((2p-1) g(1)) exactly. Concave flux: bisection of the
/// flatness predicate at the right end.
pub fn equilibrium_time(model: &FluxModel, alpha: f64, p: f64) -> Result<f64, FluxError> {
    if !(alpha > 0.0) {
        return Err(FluxError::BadArgument(format!("alpha must be > 0, got {alpha}")));
    }
    let g1 = model.rate_function().at_one();
    let speed = 2.0 * p - 1.0;
    match model.convexity {
        Convexity::Linear => Err(FluxError::LinearFlux),
        Convexity::StrictlyConvex => Ok(1.0 / (speed * g1)),
        Convexity::StrictlyConcave => {
            // equilibrium in hydrodynamic time: alpha - s Psi(-1/s) <= 0
            let settled = |s: f64| -> Result<bool, FluxError> {
                if s * g1 < 1.0 {
                    return Ok(false);
                }
                Ok(alpha - s * psi(model, -1.0 / s)? <= EQ_TOL)
            };
            let mut hi = (2.0 / g1).max(2.0 * alpha).max(1.0);
            let mut grow = 0;
            while !settled(hi)? {
                hi *= 2.0;
                grow += 1;
                if grow > 80 {
                    return Err(FluxError::BadArgument(
                        "equilibrium-time bisection bracket does not converge".into(),
                    ));
                }
            }
            let mut lo = 1.0 / g1;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if settled(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(0.5 * (lo + hi) / speed)
        }
    }
}

/// Front values and one-sided derivatives at macroscopic time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontValues {
    /// Rescaled position of the left-most macroscopic mass.
    pub l: f64,
    /// Rescaled mass accumulated at the segment's right end.
    pub s: f64,
    /// d/dt of `l`.
    pub l_prime: f64,
    /// d/dt of `s`.
    pub s_prime: f64,
}

/// Explicit front functions of a strictly concave flux, with the scaling
/// L_p^a(t) = a L((2p-1) t / a) and S_p^a(t) = S((2p-1) t).
pub fn front_functions(
    model: &FluxModel,
    alpha: f64,
    p: f64,
    t: f64,
) -> Result<FrontValues, FluxError> {
    if model.convexity != Convexity::StrictlyConcave {
        return Err(FluxError::NotConcave(model.convexity));
    }
    if !(alpha > 0.0) || !(t >= 0.0) {
        return Err(FluxError::BadArgument("need alpha > 0 and t >= 0".into()));
    }
    let g1 = model.rate_function().at_one();
    let speed = 2.0 * p - 1.0;
    // sup Phi = the fugacity radius when g is bounded
    let lambda2 = model.rate_function().upper_bound().unwrap_or(f64::INFINITY);

    let tau = speed * t / alpha;
    let (l, l_prime) = if tau * lambda2 <= 1.0 {
        (0.0, 0.0)
    } else {
        let z = psi_inverse(model, 1.0 / tau)?;
        let a_star = model.conjugate_at(z)?.argmax;
        let slope = if a_star < 1e-9 {
            g1 // limit of Phi(a)/a at vanishing density
        } else {
            model.flux_at(a_star)? / a_star
        };
        (alpha * (-tau * z), speed * slope)
    };

    let u = speed * t;
    let (s, s_prime) = if u * g1 <= 1.0 {
        (0.0, 0.0)
    } else {
        let c = model.conjugate_at(-1.0 / u)?;
        let phi = model.flux_at(c.argmax)?;
        (u * c.value, speed * phi)
    };
    Ok(FrontValues { l, s, l_prime, s_prime })
}

/// Macroscopic front curve CSV with columns `t,L,S,Lprime,Sprime`.
pub fn front_curve_csv(
    model: &FluxModel,
    alpha: f64,
    p: f64,
    times: &[f64],
) -> Result<String, FluxError> {
    let mut out = String::from("t,L,S,Lprime,Sprime\n");
    for &t in times {
        let f = front_functions(model, alpha, p, t)?;
        out.push_str(&format!("{},{},{},{},{}\n", t, f.l, f.s, f.l_prime, f.s_prime));
    }
    Ok(out)
}

/// Domain-of-influence check: data agreeing on (-inf, C] produce equal
/// solutions at x < C + t Phi'(0) (convex flux). Returns whether the two
/// Hopf-Lax values at (t, x) agree within 1e-8.
pub fn influence_check(
    model: &FluxModel,
    data_a: &InitialData,
    data_b: &InitialData,
    t: f64,
    x: f64,
) -> Result<bool, FluxError> {
    let pa = MacroProfile::new(model, data_a.clone())?;
    let pb = MacroProfile::new(model, data_b.clone())?;
    let ua = hopf_lax_eval(&pa, t, x)?;
    let ub = hopf_lax_eval(&pb, t, x)?;
    Ok((ua - ub).abs() <= 1e-8)
}

/// Condition relating the drift budget to the maximal front slopes of a
/// bounded concave flux at the totally asymmetric equilibrium time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition5 {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// Slope bound coming from the left-most front.
    pub front_branch: f64,
    /// Slope bound coming from the terminal stack.
    pub stack_branch: f64,
}

/// Evaluate the strong-asymmetry condition at (p, alpha).
///
/// lhs = (p g(1) - q gbar) / (p - q); rhs is the larger of the two front
/// slopes at the p = 1 equilibrium time.
pub fn check_condition_5(model: &FluxModel, p: f64, alpha: f64) -> Result<Condition5, FluxError> {
    if model.convexity != Convexity::StrictlyConcave {
        return Err(FluxError::NotConcave(model.convexity));
    }
    let gbar = model.rate_function().upper_bound().ok_or_else(|| {
        FluxError::BadArgument("condition requires a bounded rate function".into())
    })?;
    let g1 = model.rate_function().at_one();
    let q = 1.0 - p;
    let t1 = equilibrium_time(model, alpha, 1.0)?;

    let z1 = psi_inverse(model, alpha / t1)?;
    let a1 = model.conjugate_at(z1)?.argmax;
    let front_branch = model.flux_at(a1)? / a1;

    // density whose flux slope matches 1/t1
    let target = 1.0 / t1;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut grow = 0;
    while model.derivative_at(hi)? > target {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(FluxError::BadArgument("flux slope never falls below 1/T_eq".into()));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if model.derivative_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let stack_branch = model.flux_at(0.5 * (lo + hi))?;

    let lhs = (p * g1 - q * gbar) / (p - q);
    let rhs = front_branch.max(stack_branch);
    Ok(Condition5 { holds: lhs > rhs, lhs, rhs, front_branch, stack_branch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::FluxModelConfig;
    use crate::rate::RateFunction;

    fn concave_model() -> FluxModel {
        let g = RateFunction::constant(1.0).unwrap();
        FluxModel::build(&g, FluxModelConfig { grid_points: 512, ..Default::default() }).unwrap()
    }

    fn convex_model() -> FluxModel {
        // strictly convex flux from a strictly convex rate
        let g = RateFunction::table((0..40).map(|n| (n * n) as f64).collect()).unwrap();
        FluxModel::build(&g, FluxModelConfig { grid_points: 512, ..Default::default() }).unwrap()
    }

    #[test]
    fn empty_system_is_zero() {
        let model = concave_model();
        let prof = MacroProfile::new(&model, InitialData::dirac(0.0)).unwrap();
        assert_eq!(hopf_lax_eval(&prof, 2.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn concave_dirac_against_scalar_form() {
        let model = concave_model();
        // 1 - 4 Psi(-1/8) < 0, so the value clamps to zero
        let prof = MacroProfile::new(&model, InitialData::dirac(1.0)).unwrap();
        let v = hopf_lax_eval(&prof, 4.0, 0.5).unwrap();
        let psi_val = (1.0 - (0.125f64).sqrt()).powi(2);
        assert!(1.0 - 4.0 * psi_val < 0.0);
        assert!(v.abs() < 1e-7, "U(4, 0.5) = {v}");
        // beyond the free front the full mass is seen
        let v = hopf_lax_eval(&prof, 4.0, 4.5).unwrap();
        assert!((v - 1.0).abs() < 1e-7);
    }

    #[test]
    fn dirac_profile_matches_hopf_lax() {
        let model = concave_model();
        let prof = MacroProfile::new(&model, InitialData::dirac(1.0)).unwrap();
        for &(t, x) in &[(4.0, 0.5), (4.0, 1.0), (2.0, 0.7), (6.0, 2.0), (1.5, 0.1)] {
            let direct = dirac_profile(&model, 1.0, 1.0, t, x).unwrap();
            let variational = hopf_lax_eval(&prof, t, x).unwrap();
            assert!(
                (direct - variational).abs() < 1e-6,
                "t={t} x={x}: {direct} vs {variational}"
            );
        }
    }

    #[test]
    fn dirac_profile_front_arrival() {
        let model = concave_model();
        // Psi(-1/4) = 1/4, so the mass front exactly reaches x = 1 at t = 4
        let v = dirac_profile(&model, 1.0, 1.0, 4.0, 1.0).unwrap();
        assert!(v.abs() < 1e-7, "U(4,1) = {v}");
        let early = dirac_profile(&model, 1.0, 1.0, 1e-9, 0.5).unwrap();
        assert!((early - 1.0).abs() < 1e-12, "mass ahead of x stays visible, got {early}");
        assert_eq!(dirac_profile(&model, 1.0, 1.0, 2.0, -0.3).unwrap(), 0.0);
    }

    #[test]
    fn convex_dirac_profile_shape() {
        let model = convex_model();
        // flat at zero up to the characteristic speed g(1) = 1
        assert_eq!(dirac_profile(&model, 1.0, 1.0, 2.0, 1.5).unwrap(), 0.0);
        let v = dirac_profile(&model, 1.0, 1.0, 2.0, 4.0).unwrap();
        assert!(v > 0.0 && v <= 1.0);
        let prof = MacroProfile::new(&model, InitialData::dirac(1.0)).unwrap();
        for &(t, x) in &[(2.0, 2.5), (2.0, 4.0), (1.0, 0.5)] {
            let direct = dirac_profile(&model, 1.0, 1.0, t, x).unwrap();
            let variational = hopf_lax_eval(&prof, t, x).unwrap();
            assert!(
                (direct - variational).abs() < 1e-6,
                "t={t} x={x}: {direct} vs {variational}"
            );
        }
    }

    #[test]
    fn segment_profile_conserves_at_right_end() {
        let model = concave_model();
        for &t in &[0.5, 2.0, 4.0, 9.0] {
            let v = segment_profile(&model, 1.0, 1.0, t, 1.0).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "t={t}: v(1) = {v}");
        }
        // before equilibrium some mass still sits left of the right end
        let v = segment_profile(&model, 1.0, 1.0, 3.0, 0.999).unwrap();
        assert!(v < 1.0 - 1e-4);
        // at and after equilibrium the interior is flat
        let v = segment_profile(&model, 1.0, 1.0, 4.5, 0.9).unwrap();
        assert!(v < 1e-7);
    }

    #[test]
    fn equilibrium_time_closed_forms() {
        let model = concave_model();
        // (1 + sqrt(alpha))^2 / (2p - 1)
        let cases = [(1.0, 1.0, 4.0), (1.0, 0.75, 8.0), (0.5, 1.0, (1.0 + 0.5f64.sqrt()).powi(2))];
        for &(alpha, p, expect) in &cases {
            let t = equilibrium_time(&model, alpha, p).unwrap();
            assert!((t - expect).abs() < 1e-4, "alpha={alpha} p={p}: {t} vs {expect}");
        }
        let cvx = convex_model();
        let t = equilibrium_time(&cvx, 1.0, 1.0).unwrap();
        assert!((t - 1.0).abs() < 1e-6, "convex T_eq = {t}");
    }

    #[test]
    fn fronts_closed_form() {
        let model = concave_model();
        // L(t) = S(t) = (sqrt(t) - 1)^2
        let f = front_functions(&model, 1.0, 1.0, 4.0).unwrap();
        assert!((f.l - 1.0).abs() < 1e-6, "L(4) = {}", f.l);
        assert!((f.s - 1.0).abs() < 1e-6, "S(4) = {}", f.s);
        let f = front_functions(&model, 1.0, 1.0, 1.0).unwrap();
        assert!(f.l.abs() < 1e-9 && f.s.abs() < 1e-9);
        let f = front_functions(&model, 1.0, 1.0, 2.25).unwrap();
        assert!((f.l - 0.25).abs() < 1e-6, "L(2.25) = {}", f.l);
        // derivative 1 - 1/sqrt(t)
        assert!((f.l_prime - (1.0 - 1.0 / 1.5)).abs() < 1e-4, "L'(2.25) = {}", f.l_prime);
        assert!((f.s_prime - (1.0 - 1.0 / 1.5)).abs() < 1e-4, "S'(2.25) = {}", f.s_prime);
    }

    #[test]
    fn fronts_reject_convex() {
        let cvx = convex_model();
        assert!(matches!(
            front_functions(&cvx, 1.0, 1.0, 2.0),
            Err(FluxError::NotConcave(_))
        ));
    }

    #[test]
    fn condition5_constant_rate() {
        let model = concave_model();
        let c = check_condition_5(&model, 1.0, 1.0).unwrap();
        assert!(c.holds);
        assert!((c.lhs - 1.0).abs() < 1e-9, "lhs = {}", c.lhs);
        assert!((c.rhs - 0.5).abs() < 1e-3, "rhs = {}", c.rhs);
    }

    #[test]
    fn condition5_small_alpha_still_holds() {
        let model = concave_model();
        let c5 = check_condition_5(&model, 1.0, 0.05).unwrap();
        let c1 = check_condition_5(&model, 1.0, 0.01).unwrap();
        assert!(c5.holds && c1.holds);
        // the stack branch vanishes with alpha
        assert!(c1.stack_branch < c5.stack_branch && c5.stack_branch < 0.2);
    }

    #[test]
    fn condition5_fails_near_symmetric_bias() {
        // bounded rate with gbar > g(1): lhs goes to -inf as p -> 1/2
        let g = RateFunction::piecewise(vec![(2, 2.0)]).unwrap();
        let model =
            FluxModel::build(&g, FluxModelConfig { grid_points: 512, ..Default::default() })
                .unwrap();
        let c = check_condition_5(&model, 0.55, 1.0).unwrap();
        assert!(!c.holds, "lhs = {}, rhs = {}", c.lhs, c.rhs);
        assert!(c.lhs < 0.0);
    }

    #[test]
    fn influence_domain() {
        let model = convex_model();
        let a = InitialData::MeasureAtoms { atoms: vec![(0.0, 1.0)] };
        let b = InitialData::MeasureAtoms { atoms: vec![(0.0, 1.0), (2.0, 3.0)] };
        // data agree on (-inf, C] with C = 1.5; g(1) = 1
        let t = 1.0;
        let x = 1.5 + t * 1.0 / 2.0;
        assert!(influence_check(&model, &a, &b, t, x).unwrap());
        let same = influence_check(&model, &a, &a, 3.0, 10.0).unwrap();
        assert!(same);
    }

    #[test]
    fn monotone_in_data() {
        let model = concave_model();
        let lo = MacroProfile::new(&model, InitialData::dirac(0.5)).unwrap();
        let hi = MacroProfile::new(&model, InitialData::dirac(1.0)).unwrap();
        for &t in &[0.5, 2.0, 5.0] {
            for i in 0..12 {
                let x = -0.5 + 0.3 * i as f64;
                let a = hopf_lax_eval(&lo, t, x).unwrap();
                let b = hopf_lax_eval(&hi, t, x).unwrap();
                assert!(a <= b + 1e-9, "t={t} x={x}: {a} > {b}");
            }
        }
    }

    #[test]
    fn bounds_and_monotone_in_x() {
        let model = concave_model();
        let prof = MacroProfile::new(&model, InitialData::dirac(1.0)).unwrap();
        let mut prev = -1.0;
        for i in 0..30 {
            let x = -0.5 + 0.2 * i as f64;
            let v = hopf_lax_eval(&prof, 3.0, x).unwrap();
            assert!((0.0..=1.0 + 1e-12).contains(&v));
            assert!(v >= prev - 1e-8, "not monotone at x={x}");
            prev = v;
        }
    }

    #[test]
    fn semigroup_property_convex() {
        let model = convex_model();
        // convex Lipschitz data: non-decreasing density, so the evolution
        // is a rarefaction and stays smooth left of the terminal corner's
        // shock, which travels right of the probed window
        let data = InitialData::CdfTable {
            breakpoints: vec![-1.0, 0.0, 1.0],
            values: vec![0.0, 0.2, 1.0],
        };
        let prof = MacroProfile::new(&model, data).unwrap();
        let (s, t) = (0.7, 0.9);
        // tabulate U(t, .) and restart from the interpolated table; the
        // variational map is sup-norm nonexpansive, so the interpolation
        // error bounds the mismatch
        let h = 0.0025;
        let xs: Vec<f64> = (0..=((1.6 - (-3.0)) / h) as usize)
            .map(|i| -3.0 + h * i as f64)
            .collect();
        let vals: Vec<f64> = xs.iter().map(|&x| hopf_lax_eval(&prof, t, x).unwrap()).collect();
        let restart = InitialData::CdfTable { breakpoints: xs, values: vals };
        let prof2 = MacroProfile::new(&model, restart).unwrap();
        for &x in &[-0.5, 0.2, 0.8] {
            let direct = hopf_lax_eval(&prof, t + s, x).unwrap();
            let stepped = hopf_lax_eval(&prof2, s, x).unwrap();
            assert!((direct - stepped).abs() < 1e-5, "x={x}: {direct} vs {stepped}");
        }
    }
}
