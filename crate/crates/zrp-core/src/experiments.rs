//! Monte Carlo experiments at desk scale: hydrodynamic profiles, front
//! trajectories, Poisson-maximum concentration, and empirical probe-time
//! laws for validating the simulator against exact solvers.

use crate::flux::{FluxModel, FluxModelConfig};
use crate::hj::{front_functions, segment_profile};
use crate::lattice::{make_config, InitKind, ProcessSpec};
use crate::mixing::{MixingError, StateIndex};
use crate::sim::{replica_rng, simulate};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

/// Empirical front trajectories with confidence bands and the
/// macroscopic predictions attached.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontSeries {
    /// Macroscopic times (microscopic / N).
    pub times: Vec<f64>,
    pub l_mean: Vec<f64>,
    pub l_ci: Vec<(f64, f64)>,
    pub s_mean: Vec<f64>,
    pub s_ci: Vec<(f64, f64)>,
    pub l_macro: Vec<f64>,
    pub s_macro: Vec<f64>,
    pub replicas: u64,
}

impl FrontSeries {
    /// Long CSV with columns `t,value,ci_low,ci_high,mode`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value,ci_low,ci_high,mode\n");
        for (i, &t) in self.times.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},L_empirical\n",
                t, self.l_mean[i], self.l_ci[i].0, self.l_ci[i].1
            ));
            out.push_str(&format!(
                "{},{},{},{},S_empirical\n",
                t, self.s_mean[i], self.s_ci[i].0, self.s_ci[i].1
            ));
            out.push_str(&format!("{},{},{},{},L_macro\n", t, self.l_macro[i], self.l_macro[i], self.l_macro[i]));
            out.push_str(&format!("{},{},{},{},S_macro\n", t, self.s_macro[i], self.s_macro[i], self.s_macro[i]));
        }
        out
    }
}

fn mean_ci(samples: &[f64]) -> (f64, (f64, f64)) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let half = 1.96 * (var / n).sqrt();
    (mean, (mean - half, mean + half))
}

/// Left-most particle position and terminal stack from wedge-started
/// replicas, rescaled by N, at macroscopic times (microscopic N t),
/// alongside their macroscopic front curves.
pub fn front_trajectory_experiment(
    spec: &ProcessSpec,
    times: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<FrontSeries, MixingError> {
    let n = match spec.geometry {
        crate::lattice::LatticeGeometry::Segment { n } => n,
        _ => return Err(MixingError::NotSegment),
    };
    let wedge = make_config(InitKind::Wedge, spec, None).expect("segment");
    let micro: Vec<f64> = times.iter().map(|t| t * n as f64).collect();
    let horizon = micro.last().copied().unwrap_or(0.0);
    let per_replica: Vec<(Vec<f64>, Vec<f64>)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_rng(seed, r).random::<u64>();
            let traj = simulate(spec, &wedge, horizon, &micro, s)?;
            let l: Vec<f64> = traj
                .snapshots
                .iter()
                .map(|c| c.leftmost_occupied().map_or(n, |i| i + 1) as f64 / n as f64)
                .collect();
            let st: Vec<f64> =
                traj.snapshots.iter().map(|c| c.occupancy[n - 1] as f64 / n as f64).collect();
            Ok((l, st))
        })
        .collect::<Result<_, MixingError>>()?;

    let alpha = spec.k as f64 / n as f64;
    let model = FluxModel::build(&spec.g, FluxModelConfig::default())
        .map_err(|e| MixingError::BadMode(format!("flux model: {e}")))?;
    let mut series = FrontSeries {
        times: times.to_vec(),
        l_mean: vec![],
        l_ci: vec![],
        s_mean: vec![],
        s_ci: vec![],
        l_macro: vec![],
        s_macro: vec![],
        replicas,
    };
    for (ti, &t) in times.iter().enumerate() {
        let ls: Vec<f64> = per_replica.iter().map(|(l, _)| l[ti]).collect();
        let ss: Vec<f64> = per_replica.iter().map(|(_, s)| s[ti]).collect();
        let (lm, lci) = mean_ci(&ls);
        let (sm, sci) = mean_ci(&ss);
        series.l_mean.push(lm);
        series.l_ci.push(lci);
        series.s_mean.push(sm);
        series.s_ci.push(sci);
        let f = front_functions(&model, alpha, spec.p, t)
            .map_err(|e| MixingError::BadMode(format!("front functions: {e}")))?;
        series.l_macro.push(f.l);
        series.s_macro.push(f.s);
    }
    Ok(series)
}

/// Empirical mean rescaled heights against the macroscopic segment
/// profile.
#[derive(Debug, Clone, PartialEq)]
pub struct HydroProfile {
    /// Hydrodynamic times.
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    /// empirical[t][x]
    pub empirical: Vec<Vec<f64>>,
    /// macroscopic[t][x]
    pub macroscopic: Vec<Vec<f64>>,
    pub replicas: u64,
}

impl HydroProfile {
    /// CSV with columns `t,x,empirical,macro`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,empirical,macro\n");
        for (ti, &t) in self.times.iter().enumerate() {
            for (xi, &x) in self.positions.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    t, x, self.empirical[ti][xi], self.macroscopic[ti][xi]
                ));
            }
        }
        out
    }

    pub fn max_abs_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (emp, mac) in self.empirical.iter().zip(&self.macroscopic) {
            for (e, m) in emp.iter().zip(mac) {
                worst = worst.max((e - m).abs());
            }
        }
        worst
    }
}

/// Mean h(floor(x N))/N from wedge-started replicas at hydrodynamic times
/// `times` (microscopic N t / (2p-1)), against the macroscopic profile.
pub fn hydro_profile_experiment(
    spec: &ProcessSpec,
    times: &[f64],
    positions: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<HydroProfile, MixingError> {
    let n = match spec.geometry {
        crate::lattice::LatticeGeometry::Segment { n } => n,
        _ => return Err(MixingError::NotSegment),
    };
    let speed = 2.0 * spec.p - 1.0;
    let wedge = make_config(InitKind::Wedge, spec, None).expect("segment");
    let micro: Vec<f64> = times.iter().map(|t| t * n as f64 / speed).collect();
    let horizon = micro.last().copied().unwrap_or(0.0);
    let sums: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_rng(seed, r).random::<u64>();
            let traj = simulate(spec, &wedge, horizon, &micro, s)?;
            Ok(traj
                .snapshots
                .iter()
                .map(|cfg| {
                    let h = cfg.height_function();
                    positions
                        .iter()
                        .map(|&x| {
                            let j = ((x * n as f64).floor() as usize).clamp(1, n);
                            h.at(j - 1) as f64 / n as f64
                        })
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, MixingError>>()?
        .into_iter()
        .fold(vec![vec![0.0; positions.len()]; times.len()], |mut acc, rep| {
            for (a, r) in acc.iter_mut().zip(rep) {
                for (x, v) in a.iter_mut().zip(r) {
                    *x += v;
                }
            }
            acc
        });
    let empirical: Vec<Vec<f64>> = sums
        .into_iter()
        .map(|row| row.into_iter().map(|v| v / replicas as f64).collect())
        .collect();

    let alpha = spec.k as f64 / n as f64;
    let model = FluxModel::build(&spec.g, FluxModelConfig::default())
        .map_err(|e| MixingError::BadMode(format!("flux model: {e}")))?;
    let mut macroscopic = Vec::with_capacity(times.len());
    for &t in times {
        let row: Result<Vec<f64>, _> = positions
            .iter()
            .map(|&x| segment_profile(&model, alpha, spec.p, t / speed, x))
            .collect();
        macroscopic.push(row.map_err(|e| MixingError::BadMode(format!("profile: {e}")))?);
    }
    Ok(HydroProfile { times: times.to_vec(), positions: positions.to_vec(), empirical, macroscopic, replicas })
}

/// Exceedance statistics of the maximum of ceil(C N) iid Poisson(alpha N)
/// variables against the threshold 3 alpha N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonMaxResult {
    pub n: usize,
    pub frequency: f64,
    /// C N^2 exp(-3 alpha N ln(ln N / (alpha N) + 1)).
    pub analytic_bound: f64,
    pub replicas: u64,
}

pub fn poisson_max_experiment(
    alpha: f64,
    c: f64,
    n: usize,
    replicas: u64,
    seed: u64,
) -> PoissonMaxResult {
    let mean = alpha * n as f64;
    let count = (c * n as f64).ceil() as usize;
    let threshold = 3.0 * mean;
    let exceed: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            let pois = Poisson::new(mean).expect("positive mean");
            let max = (0..count).map(|_| pois.sample(&mut rng)).fold(0.0f64, f64::max);
            u64::from(max >= threshold)
        })
        .sum();
    let gamma = ((n as f64).ln() / mean + 1.0).ln();
    let analytic_bound = c * (n as f64).powi(2) * (-threshold * gamma).exp();
    PoissonMaxResult {
        n,
        frequency: if replicas == 0 { 0.0 } else { exceed as f64 / replicas as f64 },
        analytic_bound,
        replicas,
    }
}

/// Empirical law over the enumerated state space at one probe time,
/// from independent replicas.
pub fn empirical_law(
    spec: &ProcessSpec,
    init: &crate::lattice::Configuration,
    index: &StateIndex,
    t: f64,
    replicas: u64,
    seed: u64,
) -> Result<Vec<f64>, MixingError> {
    let counts: Vec<u64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_rng(seed, r).random::<u64>();
            let traj = simulate(spec, init, t, &[t], s)?;
            Ok(index
                .index_of(&traj.snapshots[0])
                .expect("simulated state stays in the state space") as u64)
        })
        .collect::<Result<Vec<u64>, MixingError>>()?;
    let mut law = vec![0.0; index.len()];
    for idx in counts {
        law[idx as usize] += 1.0;
    }
    for v in law.iter_mut() {
        *v /= replicas as f64;
    }
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::RateFunction;

    #[test]
    fn fronts_at_time_zero() {
        let spec =
            ProcessSpec::segment(50, 50, 1.0, RateFunction::constant(1.0).unwrap()).unwrap();
        let series = front_trajectory_experiment(&spec, &[0.0], 10, 3).unwrap();
        assert!(series.l_mean[0] <= 0.05, "L(0)/N = {}", series.l_mean[0]);
        assert_eq!(series.s_mean[0], 0.0);
        assert_eq!(series.l_macro[0], 0.0);
        assert_eq!(series.s_macro[0], 0.0);
    }

    #[test]
    fn poisson_max_small_instance() {
        let r = poisson_max_experiment(1.0, 1.0, 50, 10_000, 5);
        assert!(r.frequency <= 1e-2, "frequency {}", r.frequency);
        assert!(r.analytic_bound > 0.0);
    }

    #[test]
    fn poisson_max_zero_replicas() {
        let r = poisson_max_experiment(1.0, 1.0, 20, 0, 5);
        assert_eq!(r.frequency, 0.0);
        assert_eq!(r.replicas, 0);
    }

    #[test]
    fn empirical_law_two_states() {
        let spec =
            ProcessSpec::segment(2, 1, 1.0, RateFunction::constant(1.0).unwrap()).unwrap();
        let index = StateIndex::build(2, 1, 100).unwrap();
        let init = crate::lattice::Configuration::new(vec![1, 0]);
        let law = empirical_law(&spec, &init, &index, 1.0, 200_000, 11).unwrap();
        let e = (-1.0f64).exp();
        assert!((law[0] - e).abs() < 0.004, "law = {law:?}");
    }
}
