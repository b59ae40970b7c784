use std::sync::OnceLock;

use bscsynth::decay::alpha_ref;
use bscsynth::scap::{ControllerId, ControllerTuple, PocSpec, Scap, UtilizationBudget, DWELL};
use bscsynth::scenario::{builtin_benchmark, BenchmarkDef};
use bscsynth::simkit::{sample_x0, simulate, Outcome, SimConfig, X0Sampler};
use bscsynth::synth::{calibrate_level_set, solve_bsc, BackupController, BscOptions, PeriodStatus};
use bscsynth::sysmodel::{discretize, LinearPlant, Polytope};
use bscsynth::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ipd() -> &'static (BenchmarkDef, Vec<BackupController>) {
    static CELL: OnceLock<(BenchmarkDef, Vec<BackupController>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let def = builtin_benchmark("ipd").unwrap();
        let controllers = def.sweep(2.5, &BscOptions::default()).unwrap().controllers;
        (def, controllers)
    })
}

fn matrix(n: usize, m: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, m, &v[..n * m])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zoh_composes_over_periods(
        phi in prop::collection::vec(-2.0..2.0f64, 9),
        gamma in prop::collection::vec(-1.0..1.0f64, 3),
        h1 in 0.01..0.2f64,
        h2 in 0.01..0.2f64,
    ) {
        let plant = LinearPlant::simple(matrix(3, 3, &phi), matrix(3, 1, &gamma), 0.0).unwrap();
        let (a, b) = (discretize(&plant, h1).unwrap(), discretize(&plant, h2).unwrap());
        let ab = discretize(&plant, h1 + h2).unwrap();
        let a_err = (&ab.a - &b.a * &a.a).norm() / ab.a.norm();
        let b_err = (&ab.b - (&b.a * &a.b + &b.b)).norm() / ab.b.norm().max(1e-12);
        prop_assert!(a_err < 1e-12, "A error {a_err}");
        prop_assert!(b_err < 1e-10, "B error {b_err}");
    }

    #[test]
    fn box_membership_matches_bounds(
        half in prop::collection::vec(0.1..5.0f64, 3),
        x in prop::collection::vec(-6.0..6.0f64, 3),
    ) {
        let p = Polytope::symmetric_box(&half).unwrap();
        let x = DVector::from_vec(x);
        let inside = (0..3).all(|i| x[i].abs() <= half[i]);
        prop_assert_eq!(p.contains(&x), inside);
        prop_assert_eq!(p.min_slack(&x) >= 0.0, inside);
    }

    #[test]
    fn target_decay_shrinks_with_longer_deadlines(h_idx in 1usize..=15, dt in 1.0..4.0f64, extra in 0.1..2.0f64) {
        let def = &ipd().0;
        let h = h_idx as f64 * 0.02;
        prop_assume!(dt >= h);
        let short = alpha_ref(&def.sor, &def.por, dt, h).unwrap();
        let long = alpha_ref(&def.sor, &def.por, dt + extra, h).unwrap();
        prop_assert!(long.alpha_ref <= short.alpha_ref);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthesized_certificates_always_hold(
        phi in prop::collection::vec(-2.0..2.0f64, 4),
        gamma in prop::collection::vec(-1.0..1.0f64, 2),
        half in prop::collection::vec(0.2..3.0f64, 2),
        h_idx in 1usize..=5,
        alpha in 0.01..0.3f64,
    ) {
        let plant = LinearPlant::simple(matrix(2, 2, &phi), matrix(2, 1, &gamma), 0.0).unwrap();
        let h = h_idx as f64 * 0.02;
        let lp = discretize(&plant, h).unwrap();
        let sor = Polytope::symmetric_box(&half).unwrap();
        let target = bscsynth::decay::DecayTarget { h, delta_k: 10, alpha_ref: alpha };
        match solve_bsc(&lp, &sor, &target, &BscOptions::default()) {
            Ok(sol) => {
                prop_assert!(sol.certificate.passed());
                let c = &sol.controller;
                prop_assert!((c.alpha - alpha).abs() < 1e-15);
                // Recalibrating a certified level set cannot enlarge it.
                let level = calibrate_level_set(&c.qlf, &sor).unwrap();
                prop_assert!((level - c.level).abs() <= 1e-9 * level);
            }
            Err(e) => prop_assert!(matches!(e, Error::Infeasible { .. } | Error::Solver { .. }), "{e:?}"),
        }
    }

    #[test]
    fn activation_respects_dwell_and_region_membership(seed in 0u64..1_000, tight in 0.02..0.3f64) {
        let (def, controllers) = ipd();
        let budget = UtilizationBudget::new(vec![(0.0, 1.0), (0.2, tight), (0.6, 1.0)]).unwrap();
        let mut scap = Scap::new(
            controllers.iter().cloned().map(ControllerTuple::new).collect(),
            def.poc().unwrap(),
            def.sor.clone(),
            def.por.clone(),
            budget,
            2.5,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = sample_x0(&scap, X0Sampler::Recoverable, &mut rng).unwrap();
        let trace = simulate(&def.plant, &scap, &SimConfig { t_end: 3.0, ..SimConfig::new(x0.clone(), 2.5) }).unwrap();
        prop_assert!(trace.violated_at.is_none(), "violated at {:?}", trace.violated_at);
        let mut since_switch = usize::MAX;
        for s in &trace.samples {
            let d = &s.decision;
            if d.switched.is_some() && d.t > 0.0 {
                prop_assert!(since_switch >= DWELL as usize, "switch after {} instants", since_switch);
                since_switch = 0;
            }
            since_switch = since_switch.saturating_add(1);
            prop_assert_eq!(d.notify || d.util <= d.u_max, true);
            if d.switched.is_some() {
                match d.controller {
                    ControllerId::Poc => prop_assert!(def.por.contains(&s.x)),
                    ControllerId::Bsc(i) => prop_assert!(scap.tuples()[i].sbf(&s.x) <= 0.0),
                }
            }
        }
        // The same scap reused from scratch gives the same decisions.
        scap.initialize(&x0, 0.0).unwrap();
        prop_assert_eq!(scap.events()[0].to, trace.samples[0].decision.controller);
    }
}

#[test]
fn sampled_states_follow_the_exact_zoh_map() {
    let (def, controllers) = ipd();
    let scap = def.scap(controllers, 2.5).unwrap();
    let cfg = def.scenario_config(2.5).unwrap();
    let trace = simulate(&def.plant, &scap, &cfg).unwrap();
    assert!(trace.samples.len() > 5);
    for w in trace.samples.windows(2) {
        let h = w[1].t - w[0].t;
        let lp = discretize(&def.plant, h).unwrap();
        let dx = &w[0].x - &def.plant.x_ref;
        let du = &w[0].u - &def.plant.u_ref;
        let predicted = &def.plant.x_ref + &lp.a * dx + &lp.b * du;
        assert!((&w[1].x - &predicted).norm() <= 1e-8 * predicted.norm().max(1.0), "at t = {}", w[1].t);
    }
}

#[test]
fn noise_free_observer_converges_to_the_state() {
    let (def, controllers) = ipd();
    let scap = def.scap(controllers, 2.5).unwrap();
    // Under the 40 ms primary controller; backup certificates assume the true state.
    let x0 = DVector::from_vec(vec![0.03, 0.0, 0.03, 0.0]);
    let offset = DVector::from_vec(vec![0.01, -0.01, 0.005, 0.0]);
    let cfg = SimConfig { observer_on: true, xhat0: Some(&x0 + &offset), t_end: 5.0, ..SimConfig::new(x0, 2.5) };
    let trace = simulate(&def.plant, &scap, &cfg).unwrap();
    let est = trace.estimates.as_ref().expect("observer records estimates");
    let first = (&est[0] - &trace.states[0]).norm();
    let last = (est.last().unwrap() - trace.states.last().unwrap()).norm();
    assert!(first > 1e-3);
    assert!(last < 0.1 * first, "estimation error {first} -> {last}");
    assert!(!matches!(trace.outcome, Outcome::SafetyViolated { .. }));
    assert_eq!(trace.halted_at, None);
}

#[test]
fn poc_stabilizes_both_benchmarks() {
    for name in ["ipd", "ald"] {
        let def = builtin_benchmark(name).unwrap();
        let poc: PocSpec = def.poc().unwrap();
        let lp = discretize(&def.plant, poc.h).unwrap();
        let acl = lp.closed_loop(&poc.gain);
        let rho = acl.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(rho < 1.0, "{name}: {rho}");
    }
}

#[test]
fn feasibility_diagnostics_cover_every_candidate() {
    let def = builtin_benchmark("ald").unwrap();
    let sweep = def.sweep(1.0, &BscOptions::default()).unwrap();
    assert_eq!(sweep.diagnostics.len(), 15);
    let feasible = sweep.diagnostics.iter().filter(|d| matches!(d.status, PeriodStatus::Feasible { .. })).count();
    assert_eq!(feasible, sweep.controllers.len());
}
