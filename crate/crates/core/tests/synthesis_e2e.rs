//! End-to-end sampled-control synthesis on the worked examples.

mod common;

use common::*;
use reach_core::endpoint;
use reach_core::synthesis::{
    estimate_threshold, n1_interval_demo, separable_endpoint_min, synthesize_conic,
    synthesize_needle_fixed_point, FailureReason, Method, N1Outcome, SynthesisOptions, Verdict,
};
use reach_core::system::Partition;

fn opts() -> SynthesisOptions {
    let mut o = SynthesisOptions::default();
    o.classify.seed = 7;
    o
}

#[test]
fn reference_controls_reach_their_targets() {
    let o = opts();
    let (sys, u, x1) = double_integrator_system();
    let e = endpoint::endpoint(&sys, &u, o.steps_per_unit).unwrap();
    assert!((e - &x1).norm() < 1e-9, "reference endpoint error");

    let (sys, u, x1) = escape_square_system();
    let e = endpoint::endpoint(&sys, &u, o.steps_per_unit).unwrap();
    assert!((e - &x1).norm() < 1e-12);

    let (sys, u, x1) = commensurability_system();
    let e = endpoint::endpoint(&sys, &u, o.steps_per_unit).unwrap();
    assert!((e - &x1).norm() < 1e-9);
}

#[test]
fn conic_synthesis_double_integrator() {
    let (sys, u, x1) = double_integrator_system();
    let o = opts();
    for n in [36, 72] {
        let part = Partition::uniform(sys.horizon, n);
        let report = synthesize_conic(&sys, &u, &x1, &part, &o).unwrap();
        assert_eq!(
            report.verdict,
            Verdict::Success,
            "N={n}: {:?}",
            report.verdict
        );
        assert!(
            report.residual <= 1e-6,
            "N={n}: residual {}",
            report.residual
        );
        let control = report.control.unwrap();
        // the synthesized control is piecewise constant on the partition
        // and feasible
        match &control {
            reach_core::ControlSignal::PiecewiseConstant { partition, values } => {
                assert_eq!(partition.num_intervals(), n);
                for v in values {
                    assert!(sys.constraint.membership(v, 1e-9));
                }
            }
            other => panic!("expected piecewise constant control, got {other:?}"),
        }
    }
}

#[test]
fn needle_synthesis_double_integrator() {
    let (sys, u, x1) = double_integrator_system();
    let o = opts();
    let part = Partition::uniform(sys.horizon, 72);
    let report = synthesize_needle_fixed_point(&sys, &u, &x1, &part, &o).unwrap();
    assert_eq!(report.verdict, Verdict::Success, "{:?}", report.verdict);
    assert!(report.residual <= 1e-6, "residual {}", report.residual);
    let control = report.control.unwrap();
    match &control {
        reach_core::ControlSignal::PiecewiseConstant { values, .. } => {
            for v in values {
                assert!(sys.constraint.membership(v, 1e-9));
            }
        }
        other => panic!("expected piecewise constant control, got {other:?}"),
    }
}

#[test]
fn zero_perturbation_fixed_point() {
    // when u is already piecewise constant on the partition and the target
    // is its averaged endpoint, the solver accepts immediately with zero
    // amplitudes
    let (sys, _, _) = double_integrator_system();
    let o = opts();
    let part = Partition::uniform(sys.horizon, 6);
    let values = (0..6)
        .map(|k| nalgebra::dvector![if k % 2 == 0 { 0.5 } else { -0.5 }])
        .collect();
    let u = reach_core::ControlSignal::piecewise_constant(part.clone(), values).unwrap();
    let x1 = endpoint::endpoint(&sys, &u, o.steps_per_unit).unwrap();
    let report = synthesize_conic(&sys, &u, &x1, &part, &o).unwrap();
    assert_eq!(report.verdict, Verdict::Success);
    assert!(
        report.iterations.len() == 1,
        "accepted at the initial iterate"
    );
    assert!(report.residual <= 1e-10);
}

#[test]
fn escape_square_synthesis_fails_without_certificate() {
    let (sys, u, x1) = escape_square_system();
    let o = opts();
    for n in [4, 16] {
        let part = Partition::uniform(sys.horizon, n);
        let conic = synthesize_conic(&sys, &u, &x1, &part, &o).unwrap();
        assert_eq!(
            conic.verdict,
            Verdict::Failure(FailureReason::NoSpanningCertificate)
        );
        let needle = synthesize_needle_fixed_point(&sys, &u, &x1, &part, &o).unwrap();
        assert_eq!(
            needle.verdict,
            Verdict::Failure(FailureReason::NoSpanningCertificate)
        );
    }
}

#[test]
fn threshold_estimate_double_integrator() {
    let (sys, u, x1) = double_integrator_system();
    let mut o = opts();
    // modest resolution keeps the sweep fast; success is still exact for
    // this nilpotent system
    o.steps_per_unit = 400;
    o.classify.steps_per_unit = 400;
    let est = estimate_threshold(&sys, &u, &x1, 64, Method::Conic, &o).unwrap();
    let delta = est.delta_hat.expect("threshold detected");
    assert!(delta > 0.0);
    // the finest member of the family must have succeeded
    let (_, last) = est.outcomes.last().unwrap();
    assert_eq!(last.verdict, Verdict::Success);
}

#[test]
fn threshold_estimate_escape_square_absent() {
    let (sys, u, x1) = escape_square_system();
    let o = opts();
    let est = estimate_threshold(&sys, &u, &x1, 16, Method::Conic, &o).unwrap();
    assert!(est.delta_hat.is_none());
    assert!(est
        .outcomes
        .iter()
        .all(|(_, r)| r.verdict == Verdict::Failure(FailureReason::NoSpanningCertificate)));
}

#[test]
fn separable_minimum_matches_analytic_bound() {
    // per-interval minimization of ∫ (w - t)² dt gives midpoints and the
    // analytic value 1 + 1/(12 N²) on uniform partitions
    let (sys, _, _) = escape_square_system();
    for n in [2usize, 5, 16] {
        let part = Partition::uniform(1.0, n);
        let (min_val, warg) = separable_endpoint_min(&sys, &part, -2.0, 2.0, 128).unwrap();
        let expected = 1.0 + 1.0 / (12.0 * (n as f64).powi(2));
        assert!(
            (min_val - expected).abs() < 1e-10,
            "N={n}: {min_val} vs {expected}"
        );
        // minimizers are the interval midpoints
        for (i, w) in warg.iter().enumerate() {
            let mid = (i as f64 + 0.5) / n as f64;
            assert!((w - mid).abs() < 1e-6);
        }
    }
}

#[test]
fn n1_demo_reaches_interior_target() {
    // x' = u, U = [0, 1], target T/2 at N = 4
    let sys = reach_core::ControlSystem::new(
        1,
        1,
        1.0,
        nalgebra::dvector![0.0],
        reach_core::Dynamics::LinearAutonomous {
            a: nalgebra::DMatrix::zeros(1, 1),
            b: nalgebra::DMatrix::identity(1, 1),
            drift: nalgebra::DVector::zeros(1),
        },
        reach_core::ConstraintSet::interval(0.0, 1.0),
    )
    .unwrap();
    let part = Partition::uniform(1.0, 4);
    let o = opts();
    let report = n1_interval_demo(&sys, 0.5, &part, 0.0, 1.0, &o).unwrap();
    match report.outcome {
        N1Outcome::Reached { residual, control } => {
            assert!(residual <= 1e-10, "residual {residual}");
            if let reach_core::ControlSignal::PiecewiseConstant { values, .. } = control {
                for v in values {
                    assert!((0.0..=1.0).contains(&v[0]));
                }
            }
        }
        N1Outcome::OutsideHull => panic!("target inside hull expected"),
    }
    // hull max is reached by the bang control u ≡ 1
    assert!((report.hull_max - 1.0).abs() < 1e-9);
    assert!(report.hull_min.abs() < 1e-9);
}

#[test]
fn n1_demo_hull_boundary_target() {
    let sys = reach_core::ControlSystem::new(
        1,
        1,
        1.0,
        nalgebra::dvector![0.0],
        reach_core::Dynamics::LinearAutonomous {
            a: nalgebra::DMatrix::zeros(1, 1),
            b: nalgebra::DMatrix::identity(1, 1),
            drift: nalgebra::DVector::zeros(1),
        },
        reach_core::ConstraintSet::interval(0.0, 1.0),
    )
    .unwrap();
    let part = Partition::uniform(1.0, 3);
    let o = opts();
    let report = n1_interval_demo(&sys, 1.0, &part, 0.0, 1.0, &o).unwrap();
    match report.outcome {
        N1Outcome::Reached { residual, .. } => assert!(residual <= 1e-9),
        N1Outcome::OutsideHull => panic!("hull max is reachable"),
    }
}

#[test]
fn n1_demo_escape_square_target_below_hull() {
    // the ramp target 1 sits strictly below the sampled hull minimum
    let (sys, _, _) = escape_square_system();
    let part = Partition::uniform(1.0, 8);
    let o = opts();
    let report = n1_interval_demo(&sys, 1.0, &part, -2.0, 2.0, &o).unwrap();
    assert!(matches!(report.outcome, N1Outcome::OutsideHull));
    assert!(report.hull_min > 1.0);
    assert!(report.hull_min - 1.0 < 0.01, "hull min close to 1");
}

#[test]
fn synthesized_residual_stable_under_refinement() {
    // guard against integrator-artifact successes: residual at 4x steps
    // stays within 10x
    let (sys, u, x1) = double_integrator_system();
    let o = opts();
    let part = Partition::uniform(sys.horizon, 36);
    let report = synthesize_conic(&sys, &u, &x1, &part, &o).unwrap();
    assert_eq!(report.verdict, Verdict::Success);
    let control = report.control.unwrap();
    let fine = (endpoint::endpoint(&sys, &control, 4000).unwrap() - &x1).norm();
    assert!(
        fine <= 10.0 * report.residual.max(1e-12),
        "coarse {} fine {fine}",
        report.residual
    );
}

#[test]
fn monotone_refinement_on_success() {
    let (sys, u, x1) = double_integrator_system();
    let mut o = opts();
    o.steps_per_unit = 400;
    o.classify.steps_per_unit = 400;
    let mut succeeded_at = None;
    for n in [18, 36, 72] {
        let part = Partition::uniform(sys.horizon, n);
        let report = synthesize_conic(&sys, &u, &x1, &part, &o).unwrap();
        if report.verdict == Verdict::Success {
            succeeded_at = Some(n);
            break;
        }
    }
    let n0 = succeeded_at.expect("some family member succeeds");
    let part = Partition::uniform(sys.horizon, 2 * n0);
    let report = synthesize_conic(&sys, &u, &x1, &part, &o).unwrap();
    assert_eq!(
        report.verdict,
        Verdict::Success,
        "refinement of N={n0} failed"
    );
}

#[test]
fn needle_fixed_point_exact_averaging_one_iteration() {
    // a control already piecewise constant on the partition makes the
    // averaging step exact, so the fixed point is hit on the first outer
    // iteration with zero amplitudes
    let (sys, _, _) = double_integrator_system();
    let o = opts();
    let part = Partition::uniform(sys.horizon, 9);
    let values = (0..9)
        .map(|k| nalgebra::dvector![0.4 * ((k % 3) as f64 - 1.0)])
        .collect();
    let u = reach_core::ControlSignal::piecewise_constant(part.clone(), values).unwrap();
    let x1 = endpoint::endpoint(&sys, &u, o.steps_per_unit).unwrap();
    let report = synthesize_needle_fixed_point(&sys, &u, &x1, &part, &o).unwrap();
    assert_eq!(report.verdict, Verdict::Success);
    assert_eq!(report.iterations.len(), 1, "expected one outer iteration");
    assert!(report.residual <= 1e-9);
}

#[test]
fn needle_synthesis_robust_across_seeds() {
    // the sampled constraint-set values differ per seed; synthesis must not
    let (sys, u, x1) = double_integrator_system();
    for seed in [0u64, 99] {
        let mut o = opts();
        o.classify.seed = seed;
        let part = Partition::uniform(sys.horizon, 72);
        let report = synthesize_needle_fixed_point(&sys, &u, &x1, &part, &o).unwrap();
        assert_eq!(
            report.verdict,
            Verdict::Success,
            "seed {seed}: {:?}",
            report.verdict
        );
        assert!(
            report.residual <= 1e-6,
            "seed {seed}: residual {}",
            report.residual
        );
    }
}

#[test]
fn n1_demo_state_dependent_dynamics() {
    // x' = u - x: endpoints over piecewise-constant controls are found by
    // the bang-value search, and an interior target is reached by bisection
    let sys = reach_core::ControlSystem::new(
        1,
        1,
        1.0,
        nalgebra::dvector![0.0],
        reach_core::Dynamics::LinearAutonomous {
            a: nalgebra::DMatrix::from_element(1, 1, -1.0),
            b: nalgebra::DMatrix::identity(1, 1),
            drift: nalgebra::DVector::zeros(1),
        },
        reach_core::ConstraintSet::interval(0.0, 1.0),
    )
    .unwrap();
    let part = Partition::uniform(1.0, 4);
    let o = opts();
    // max endpoint: u ≡ 1 gives 1 - e^{-T}
    let top = 1.0 - (-1.0f64).exp();
    let report = n1_interval_demo(&sys, 0.5 * top, &part, 0.0, 1.0, &o).unwrap();
    assert!(
        (report.hull_max - top).abs() < 1e-6,
        "hull max {}",
        report.hull_max
    );
    assert!(report.hull_min.abs() < 1e-9);
    match report.outcome {
        N1Outcome::Reached { residual, .. } => assert!(residual <= 1e-10, "residual {residual}"),
        N1Outcome::OutsideHull => panic!("interior target expected reachable"),
    }
}

#[test]
fn conic_amplitude_box_guards_distant_targets() {
    // a target far from the reference endpoint needs amplitudes beyond the
    // feasibility box; the solver reports that instead of rescaling
    let (sys, u, x1) = double_integrator_system();
    let far = nalgebra::dvector![x1[0] + 50.0, x1[1]];
    let o = opts();
    let part = Partition::uniform(sys.horizon, 36);
    let report = synthesize_conic(&sys, &u, &far, &part, &o).unwrap();
    assert!(
        matches!(
            report.verdict,
            Verdict::Failure(FailureReason::AmplitudeBoxExceeded)
                | Verdict::Failure(FailureReason::MaxIterations)
        ),
        "{:?}",
        report.verdict
    );
    assert!(report.residual > 1.0, "residual {}", report.residual);
}
