//! Cross-module invariants: distributional correctness of the simulator
//! and couplings against the exact oracles, order preservation of the
//! two-species process, conjugate duality, and bijection properties.

use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use zrp_core::coupling::{
    border_discrepancy, simulate_pair, subsegment_on_window, ColoredParams, ColoredState,
    CoupledPair, JointEngine,
};
use zrp_core::exclusion::{sep_to_zrp, zrp_to_sep};
use zrp_core::experiments::empirical_law;
use zrp_core::flux::{invert_mean, FluxModel, FluxModelConfig};
use zrp_core::lattice::LatticeGeometry;
use zrp_core::mixing::{
    stationary_law, tv_curve, tv_distance, StateIndex, TransientSolver, TvMode, STATE_CAP,
};
use zrp_core::sim::{replica_rng, replica_seed, Control, EventEngine, ZrpProcess};
use zrp_core::{
    make_config, mean_density, simulate, Configuration, InitKind, ProcessSpec, RateFunction,
};

fn const_spec(n: usize, k: u64, p: f64) -> ProcessSpec {
    ProcessSpec::segment(n, k, p, RateFunction::constant(1.0).unwrap()).unwrap()
}

#[test]
fn first_jump_channels_match_rates() {
    // from (1,1,0) with p = 3/4 the first jump fires one of three
    // channels with rates (0.75, 0.75, 0.25)
    let spec = const_spec(3, 2, 0.75);
    let init = Configuration::new(vec![1, 1, 0]);
    let outcomes = [vec![0u32, 2, 0], vec![1, 0, 1], vec![2, 0, 0]];
    let probs = [0.75 / 1.75, 0.75 / 1.75, 0.25 / 1.75];
    let replicas = 100_000u64;
    let mut counts = [0u64; 3];
    for r in 0..replicas {
        let mut rng = replica_rng(404, r);
        let mut engine = EventEngine::new(ZrpProcess::new(spec.clone(), init.clone()).unwrap());
        let mut first: Option<Vec<u32>> = None;
        engine
            .drive(
                &mut rng,
                1e9,
                &[],
                |_, _| {},
                |_, p: &ZrpProcess| {
                    first = Some(p.cfg.occupancy.clone());
                    Control::Stop
                },
            )
            .unwrap();
        let got = first.expect("a jump always fires");
        let idx = outcomes.iter().position(|o| *o == got).expect("known outcome");
        counts[idx] += 1;
    }
    let mut chi2 = 0.0;
    for (c, p) in counts.iter().zip(&probs) {
        let expect = p * replicas as f64;
        chi2 += (*c as f64 - expect).powi(2) / expect;
    }
    let threshold = ChiSquared::new(2.0).unwrap().inverse_cdf(1.0 - 1e-3);
    assert!(chi2 < threshold, "chi2 = {chi2} >= {threshold}, counts {counts:?}");
}

#[test]
fn monte_carlo_law_matches_uniformization() {
    let spec = const_spec(4, 3, 0.8);
    let index = StateIndex::build(4, 3, STATE_CAP).unwrap();
    let solver = TransientSolver::new(&spec, STATE_CAP, 1e-10).unwrap();
    let init = make_config(InitKind::Wedge, &spec, None).unwrap();
    let t = 1.2;
    let exact = solver.law(&init, t).unwrap();
    let emp = empirical_law(&spec, &init, &index, t, 100_000, 1234).unwrap();
    let d = tv_distance(&emp, &exact);
    assert!(d < 0.01, "TV(empirical, exact) = {d}");
}

#[test]
fn coupled_marginals_have_correct_laws() {
    let spec = const_spec(3, 2, 0.75);
    let solver = TransientSolver::new(&spec, STATE_CAP, 1e-10).unwrap();
    let index = &solver.index;
    let wedge = make_config(InitKind::Wedge, &spec, None).unwrap();
    let vee = make_config(InitKind::Vee, &spec, None).unwrap();
    let t = 0.8;
    let replicas = 100_000u64;
    let mut upper_counts = vec![0u64; index.len()];
    let mut lower_counts = vec![0u64; index.len()];
    for r in 0..replicas {
        let pair =
            CoupledPair::new(spec.clone(), wedge.clone(), spec.clone(), vee.clone()).unwrap();
        let traj = simulate_pair(pair, t, &[t], replica_seed(77, r)).unwrap();
        upper_counts[index.index_of(&traj.upper_snapshots[0]).unwrap()] += 1;
        lower_counts[index.index_of(&traj.lower_snapshots[0]).unwrap()] += 1;
    }
    let to_law = |counts: &[u64]| -> Vec<f64> {
        counts.iter().map(|&c| c as f64 / replicas as f64).collect()
    };
    let exact_upper = solver.law(&wedge, t).unwrap();
    let exact_lower = solver.law(&vee, t).unwrap();
    let du = tv_distance(&to_law(&upper_counts), &exact_upper);
    let dl = tv_distance(&to_law(&lower_counts), &exact_lower);
    assert!(du < 0.01, "upper marginal TV = {du}");
    assert!(dl < 0.01, "lower marginal TV = {dl}");
}

#[test]
fn coalescence_upper_bound_dominates_exact_tv() {
    let spec = const_spec(5, 3, 0.8);
    let times = [1.0, 2.5, 5.0, 9.0];
    let exact = tv_curve(&spec, &times, TvMode::Exact, 0, 0).unwrap();
    let upper = tv_curve(&spec, &times, TvMode::McUpper, 100_000, 5).unwrap();
    for ((&t, &d), &u) in times.iter().zip(&exact.values).zip(&upper.values) {
        let sigma = 2.0 * (0.25 / 100_000.0f64).sqrt();
        assert!(u >= d - 3.0 * sigma, "t={t}: upper bound {u} below exact {d}");
    }
}

#[test]
fn leftmost_statistic_is_dominated_by_exact_tv() {
    let spec = const_spec(5, 3, 0.8);
    let times = [0.5, 1.5, 3.0, 6.0];
    let exact = tv_curve(&spec, &times, TvMode::Exact, 0, 0).unwrap();
    let lower = tv_curve(&spec, &times, TvMode::McLower { epsilon: 0.4 }, 100_000, 6).unwrap();
    for ((&t, &d), &l) in times.iter().zip(&exact.values).zip(&lower.values) {
        let sigma = (0.25 / 100_000.0f64).sqrt();
        assert!(l <= d + 3.0 * sigma, "t={t}: lower statistic {l} above exact {d}");
    }
}

#[test]
fn colored_black_marginal_is_plain_dynamics_left_of_wall() {
    // no white particles: blacks follow the plain dynamics on the
    // sub-segment up to the wall
    let g = RateFunction::constant(1.0).unwrap();
    let n = 6;
    let params = ColoredParams::new(n, 1.0 / 3.0, 0.75, g.clone()).unwrap();
    let wall = params.wall;
    assert_eq!(wall, 4);
    let sub_spec = const_spec(wall, 3, 0.75);
    let solver = TransientSolver::new(&sub_spec, STATE_CAP, 1e-10).unwrap();
    let init_black = vec![2u32, 1, 0, 0];
    let t = 1.0;
    let replicas = 100_000u64;
    let mut counts = vec![0u64; solver.index.len()];
    for r in 0..replicas {
        let mut black = vec![0u32; n];
        black[..wall].copy_from_slice(&init_black);
        let state = ColoredState::new(params.clone(), black, vec![0; n]).unwrap();
        let traj =
            zrp_core::coupling::simulate_colored(state, t, &[t], replica_seed(31, r)).unwrap();
        let snapshot = Configuration::new(traj.black_snapshots[0][..wall].to_vec());
        counts[solver.index.index_of(&snapshot).unwrap()] += 1;
    }
    let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / replicas as f64).collect();
    let exact = solver.law(&Configuration::new(init_black), t).unwrap();
    let d = tv_distance(&emp, &exact);
    assert!(d < 0.01, "black marginal TV = {d}");
}

#[test]
fn colored_pair_preserves_height_order_until_wall_empties() {
    // combined colored heights dominate a plain copy started below, up to
    // the first time the wall holds at most one black particle
    let g = RateFunction::constant(1.0).unwrap();
    let n = 8;
    let k = 6u64;
    let p = 0.8;
    let params = ColoredParams::new(n, 0.25, p, g.clone()).unwrap();
    let wall = params.wall; // site 6
    for seed in 0..60u64 {
        // random plain configuration
        let mut rng = replica_rng(909, seed);
        let mut occ = vec![0u32; n];
        for _ in 0..k {
            let i = rng.random_range(0..n);
            occ[i] += 1;
        }
        let plain = Configuration::new(occ.clone());
        // colored copy: blacks mirror the plain mass, with everything from
        // the wall onwards stacked at the wall; whites take the plain
        // terminal stack
        let whites_at_end = occ[n - 1];
        let mut black = vec![0u32; n];
        black[..wall - 1].copy_from_slice(&occ[..wall - 1]);
        black[wall - 1] = occ[wall - 1..].iter().sum::<u32>() - whites_at_end;
        let mut white = vec![0u32; n];
        white[n - 1] = whites_at_end;
        let colored = ColoredState::new(params.clone(), black, white).unwrap();

        let plain_proc = ZrpProcess::new(const_spec(n, k, p), plain).unwrap();
        let mut engine = JointEngine::new(colored, plain_proc).unwrap();
        let mut rng = replica_rng(910, seed);
        engine
            .drive(
                &mut rng,
                4.0,
                &[],
                |_, _, _| {},
                |t, colored: &ColoredState, plain: &ZrpProcess, _, _| {
                    if colored.black_at_wall() <= 1 {
                        return Control::Stop; // past the stopping time
                    }
                    let ch = colored.total_height();
                    let ph = plain.cfg.height_function();
                    for (j, (&c, &h)) in ch.iter().zip(&ph.cumulative).enumerate() {
                        assert!(
                            c >= h,
                            "order broke at t={t}, site {j}: colored {c} < plain {h} (seed {seed})"
                        );
                    }
                    Control::Continue
                },
            )
            .unwrap();
    }
}

#[test]
fn border_discrepancy_trend_in_system_size() {
    // discrepancies enter the comparison window only from the sub-lattice
    // borders; their reach at fixed macroscopic time fades as N grows
    let g = RateFunction::constant(1.0).unwrap();
    let p = 0.75;
    let s_grid = [0.04, 0.08];
    let mut by_n = Vec::new();
    for &n in &[100usize, 200, 400] {
        // displacement budget in either direction over the horizon
        let margin = (3.0 * (s_grid[1] * n as f64 / 0.5) + 16.0) as i64;
        let geo = LatticeGeometry::line_window(-margin, n as i64 + margin).unwrap();
        let k = n as u64 + 1;
        let full = ProcessSpec::new(geo, k, p, g.clone()).unwrap();
        let sub = subsegment_on_window(geo, 0, n as i64, k, p, g.clone()).unwrap();
        // density one across the whole sub-lattice, active borders
        let mut occ = vec![0u32; geo.len()];
        for site in 0..=n as i64 {
            occ[(site + margin) as usize] = 1;
        }
        let init = Configuration::new(occ);
        let window = ((0.2 * n as f64) as i64, (0.9 * n as f64) as i64);
        let d = border_discrepancy(&full, &sub, &init, window, (0, n as i64), n, &s_grid, 400, 21)
            .unwrap();
        by_n.push(d.mean_abs);
    }
    for si in 0..s_grid.len() {
        for w in by_n.windows(2) {
            assert!(
                w[1][si] <= w[0][si] + 0.003,
                "discrepancy grew with N at s={}: {:?}",
                s_grid[si],
                by_n
            );
        }
    }
}

#[test]
fn empirical_cdf_terminal_value() {
    let spec = const_spec(4, 3, 0.9);
    let init = make_config(InitKind::Wedge, &spec, None).unwrap();
    let traj = simulate(&spec, &init, 2.0, &[2.0], 8).unwrap();
    let cdf = zrp_core::empirical_cdf(&traj.snapshots[0], 4);
    assert!((cdf.terminal() - 0.75).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mean_density_strictly_increasing_in_fugacity(
        knot1 in 1u32..4,
        span in 1u32..5,
        v1 in 0.2f64..2.0,
        gap in 0.1f64..2.0,
        u1 in 0.05f64..0.95,
        u2 in 0.05f64..0.95,
    ) {
        // random non-decreasing piecewise-linear rate
        let knots = vec![(knot1, v1), (knot1 + span, v1 + gap)];
        let g = RateFunction::piecewise(knots).unwrap();
        let gbar = g.upper_bound().unwrap();
        let (a, b) = if u1 < u2 { (u1, u2) } else { (u2, u1) };
        prop_assume!(b - a > 1e-3);
        let m1 = mean_density(&g, a * 0.95 * gbar, 1e-11).unwrap();
        let m2 = mean_density(&g, b * 0.95 * gbar, 1e-11).unwrap();
        prop_assert!(m2 > m1, "mean not increasing: {m1} at {a} vs {m2} at {b}");
    }

    #[test]
    fn flux_round_trip_on_random_density(alpha in 0.01f64..4.0) {
        let g = RateFunction::piecewise(vec![(2, 2.0)]).unwrap();
        let tol = 1e-11;
        let phi = invert_mean(&g, alpha, tol).unwrap();
        let back = mean_density(&g, phi, tol).unwrap();
        prop_assert!((back - alpha).abs() <= 10.0 * tol * (1.0 + alpha),
            "round trip {alpha} -> {phi} -> {back}");
    }

    #[test]
    fn exclusion_round_trip_random(mass in proptest::collection::vec(0u32..4, 2..10)) {
        let eta = Configuration::new(mass);
        prop_assume!(eta.mass() > 0);
        let xi = zrp_to_sep(&eta);
        let back = sep_to_zrp(&xi, eta.len()).unwrap();
        prop_assert_eq!(back, eta.clone());
        // the i-th empty site sits at i + h(i)
        let h = eta.height_function();
        let empties: Vec<usize> = xi
            .occupancy
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == 0)
            .map(|(j, _)| j + 1)
            .collect();
        for (i, &z) in empties.iter().enumerate() {
            prop_assert_eq!(z as u64, (i + 1) as u64 + h.at(i));
        }
    }
}

#[test]
fn fenchel_young_duality_on_convex_model() {
    let g = RateFunction::table((0..40).map(|n| (n * n) as f64).collect()).unwrap();
    let model =
        FluxModel::build(&g, FluxModelConfig { grid_points: 256, ..Default::default() }).unwrap();
    for i in 1..16 {
        let alpha = 0.25 * i as f64;
        let phi = model.flux_at(alpha).unwrap();
        // inequality for arbitrary slopes
        for &x in &[0.5, 1.0, 2.0, 5.0] {
            let psi = model.conjugate_at(x).unwrap().value;
            assert!(phi + psi >= alpha * x - 1e-8, "duality failed at ({alpha}, {x})");
        }
        // equality at the supporting slope
        let x = model.derivative_at(alpha).unwrap();
        let psi = model.conjugate_at(x).unwrap().value;
        assert!(
            (phi + psi - alpha * x).abs() <= 1e-6,
            "no contact at alpha={alpha}: gap {}",
            phi + psi - alpha * x
        );
    }
}

#[test]
fn front_consistency_with_equilibrium_time() {
    // L and S reach their terminal values exactly at the equilibrium time
    let g = RateFunction::constant(1.0).unwrap();
    let model = FluxModel::build(&g, FluxModelConfig::default()).unwrap();
    for &(alpha, p) in &[(1.0f64, 1.0f64), (0.5, 1.0), (2.0, 0.75)] {
        let t_eq = zrp_core::hj::equilibrium_time(&model, alpha, p).unwrap();
        let f = zrp_core::hj::front_functions(&model, alpha, p, t_eq).unwrap();
        assert!((f.l - 1.0).abs() < 1e-4, "L(T_eq) = {} at ({alpha},{p})", f.l);
        assert!((f.s - alpha).abs() < 1e-4, "S(T_eq) = {} at ({alpha},{p})", f.s);
    }
}

#[test]
fn stationary_law_matches_long_run_frequencies() {
    // end-to-end: simulator time averages converge to the product law
    let spec = const_spec(3, 2, 0.7);
    let index = StateIndex::build(3, 2, STATE_CAP).unwrap();
    let pi = stationary_law(&index, 0.7, &spec.g);
    let init = make_config(InitKind::Wedge, &spec, None).unwrap();
    let emp = empirical_law(&spec, &init, &index, 60.0, 100_000, 2718).unwrap();
    let d = tv_distance(&emp, &pi);
    assert!(d < 0.01, "TV to stationary after burn-in = {d}");
}
