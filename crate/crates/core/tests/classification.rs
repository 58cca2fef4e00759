//! End-to-end classification of the worked example systems, plus the
//! consistency relations between the three regularity notions.

mod common;

use common::*;
use nalgebra::dvector;
use reach_core::endpoint;
use reach_core::ode;
use reach_core::regularity::{
    classify_strongly_regular, classify_strongly_u_regular, classify_weakly_u_regular,
    control_affine_detect, lift_residual, linear_interior_route, singular_certificate_search,
    ClassifyOptions, Decision, LiftKind,
};
use reach_core::system::Dynamics;

fn opts() -> ClassifyOptions {
    ClassifyOptions {
        seed: 7,
        ..ClassifyOptions::default()
    }
}

#[test]
fn escape_square_ramp_is_weakly_singular() {
    let (sys, u, _) = escape_square_system();
    let o = opts();
    // the differential vanishes identically along the ramp
    let strong = classify_strongly_regular(&sys, &u, &o).unwrap();
    assert_eq!(strong.decision, Decision::NotDetected);
    assert!(strong.margin < 1e-10);
    // any unit costate is a null-gradient certificate
    for psi in [1.0, -1.0] {
        let res = lift_residual(&sys, &u, dvector![psi], LiftKind::Nhg, &o).unwrap();
        assert!(res.residual < 1e-10, "NHG residual {}", res.residual);
    }
    let (min_res, _) = singular_certificate_search(&sys, &u, LiftKind::Nhg, 2, &o).unwrap();
    assert!(min_res < 1e-10);
}

#[test]
fn saturated_integrator_classifications() {
    let (sys, u, _) = saturated_integrator_system();
    let o = opts();

    let strong = classify_strongly_regular(&sys, &u, &o).unwrap();
    assert_eq!(strong.decision, Decision::Regular);
    assert!(strong.margin >= 10.0 * o.tol);

    // at the upper bound only inward perturbations are tangent
    let strong_u = classify_strongly_u_regular(&sys, &u, &o).unwrap();
    assert_eq!(strong_u.decision, Decision::NotDetected);

    let weak_u = classify_weakly_u_regular(&sys, &u, &o).unwrap();
    assert_eq!(weak_u.decision, Decision::NotDetected);

    // Hamiltonian maximization holds with the costate +1 and fails by 2
    // with -1
    let hm_pos = lift_residual(&sys, &u, dvector![1.0], LiftKind::Hm, &o).unwrap();
    assert!(hm_pos.residual < 1e-12, "residual {}", hm_pos.residual);
    let hm_neg = lift_residual(&sys, &u, dvector![-1.0], LiftKind::Hm, &o).unwrap();
    assert!((hm_neg.residual - 2.0).abs() < 1e-12);

    let (min_res, psi) = singular_certificate_search(&sys, &u, LiftKind::Hm, 2, &o).unwrap();
    assert!(min_res < 1e-12);
    assert!(psi[0] > 0.0);
}

#[test]
fn cubic_classifications() {
    let (sys, u, _) = cubic_system();
    let o = opts();

    let strong = classify_strongly_regular(&sys, &u, &o).unwrap();
    assert_eq!(strong.decision, Decision::NotDetected);
    // the variation matrix is identically zero at this control
    assert!(strong.margin < 1e-10);

    let strong_u = classify_strongly_u_regular(&sys, &u, &o).unwrap();
    assert_eq!(strong_u.decision, Decision::NotDetected);

    let weak_u = classify_weakly_u_regular(&sys, &u, &o).unwrap();
    assert_eq!(weak_u.decision, Decision::Regular);
    assert!(weak_u.margin >= 10.0 * o.tol);

    // no Hamiltonian-maximization certificate: both signs of omega beat
    // u = 0 unless the costate vanishes
    let (hm_min, _) = singular_certificate_search(&sys, &u, LiftKind::Hm, 2, &o).unwrap();
    assert!(
        hm_min > 0.5,
        "expected bounded-below HM residual, got {hm_min}"
    );

    // but the null-gradient certificate exists (weakly singular)
    let (nhg_min, _) = singular_certificate_search(&sys, &u, LiftKind::Nhg, 2, &o).unwrap();
    assert!(nhg_min < 1e-12);
}

#[test]
fn bilinear_classifications() {
    let (sys, u, _) = bilinear_system();
    let o = opts();

    let strong = classify_strongly_regular(&sys, &u, &o).unwrap();
    assert_eq!(strong.decision, Decision::NotDetected);

    let weak_u = classify_weakly_u_regular(&sys, &u, &o).unwrap();
    assert_eq!(weak_u.decision, Decision::Regular);
    assert!(weak_u.margin >= 10.0 * o.tol);

    // weakly U-singular via the interior normal cone: gradient condition
    // certificate exists
    let (hg_min, _) = singular_certificate_search(&sys, &u, LiftKind::Hg, 2, &o).unwrap();
    assert!(hg_min < 1e-12);
}

#[test]
fn bang_control_on_finite_set_is_weakly_u_regular() {
    let (sys, u, _) = commensurability_system();
    let o = opts();
    let weak_u = classify_weakly_u_regular(&sys, &u, &o).unwrap();
    assert_eq!(weak_u.decision, Decision::Regular);
    assert!(weak_u.margin >= 10.0 * o.tol);
}

#[test]
fn double_integrator_classifications() {
    let (sys, u, _) = double_integrator_system();
    let o = opts();

    let weak_u = classify_weakly_u_regular(&sys, &u, &o).unwrap();
    assert_eq!(
        weak_u.decision,
        Decision::Regular,
        "margin {}",
        weak_u.margin
    );
    assert!(weak_u.margin >= 10.0 * o.tol);

    let strong_u = classify_strongly_u_regular(&sys, &u, &o).unwrap();
    assert_eq!(
        strong_u.decision,
        Decision::Regular,
        "margin {}",
        strong_u.margin
    );

    let strong = classify_strongly_regular(&sys, &u, &o).unwrap();
    assert_eq!(strong.decision, Decision::Regular);

    // special-case route: Kalman condition plus an interior-valued interval
    let Dynamics::LinearAutonomous { a, b, .. } = &sys.dynamics else {
        panic!("linear dynamics expected")
    };
    let route = linear_interior_route(a, b, &u, &sys.constraint, sys.horizon, 0.1).unwrap();
    assert!(route.kalman);
    let (lo, hi) = route.interior_interval.expect("ramp crosses the interior");
    assert!(lo > 6.0 && hi < 12.0 && hi - lo > 3.0);
    assert!(route.holds);

    assert!(control_affine_detect(&sys, 1).unwrap().is_some());
}

#[test]
fn control_affine_detection_matches_structure() {
    let (cubic, _, _) = cubic_system();
    assert!(control_affine_detect(&cubic, 1).unwrap().is_none());

    let (integrator, _, _) = saturated_integrator_system();
    let form = control_affine_detect(&integrator, 1).unwrap().unwrap();
    let b = form.b_at(&dvector![0.3], 0.5).unwrap();
    assert!((b[(0, 0)] - 1.0).abs() < 1e-12);
    let g = form.g_at(&dvector![0.3], 0.5).unwrap();
    assert!(g[0].abs() < 1e-12);
}

/// Stronger notions imply weaker ones on every example where both verdicts
/// are available.
#[test]
fn consistency_chain_across_examples() {
    let o = opts();
    let cases = vec![
        saturated_integrator_system(),
        cubic_system(),
        double_integrator_system(),
    ];
    for (sys, u, _) in cases {
        if !sys.constraint.is_convex() {
            continue;
        }
        let strong_u = classify_strongly_u_regular(&sys, &u, &o).unwrap();
        if strong_u.decision == Decision::Regular {
            let strong = classify_strongly_regular(&sys, &u, &o).unwrap();
            assert_eq!(strong.decision, Decision::Regular);
            let weak_u = classify_weakly_u_regular(&sys, &u, &o).unwrap();
            assert_eq!(weak_u.decision, Decision::Regular);
        }
    }
}

/// For controls valued well inside a box, the constrained and unconstrained
/// rank tests agree.
#[test]
fn interior_values_shortcut() {
    let (mut sys, _, _) = saturated_integrator_system();
    sys.x0 = dvector![0.0];
    let u = reach_core::ControlSignal::constant(dvector![0.0], 1.0);
    let o = opts();
    let strong = classify_strongly_regular(&sys, &u, &o).unwrap();
    let strong_u = classify_strongly_u_regular(&sys, &u, &o).unwrap();
    assert_eq!(strong.decision, Decision::Regular);
    assert_eq!(strong_u.decision, Decision::Regular);
}

/// Numerical two-sided check of the characterization: a spanning
/// needle-variation cone rules out maximization certificates, and a
/// missing cone direction produces one.
#[test]
fn cone_and_certificate_duality() {
    let o = opts();
    // spanning cone, no certificate
    let (cubic, u0, _) = cubic_system();
    let weak = classify_weakly_u_regular(&cubic, &u0, &o).unwrap();
    let (hm_min, _) = singular_certificate_search(&cubic, &u0, LiftKind::Hm, 720, &o).unwrap();
    assert_eq!(weak.decision, Decision::Regular);
    assert!(weak.margin >= 10.0 * o.tol);
    assert!(hm_min >= o.tol / 10.0);

    // missing direction, certificate with vanishing residual
    let (sat, u1, _) = saturated_integrator_system();
    let weak = classify_weakly_u_regular(&sat, &u1, &o).unwrap();
    let (hm_min, _) = singular_certificate_search(&sat, &u1, LiftKind::Hm, 720, &o).unwrap();
    assert_eq!(weak.decision, Decision::NotDetected);
    assert!(hm_min <= o.tol / 10.0);
}

/// Prop-11-style equivalence on linear systems: the needle-cone verdict
/// agrees with the Kalman-plus-interior oracle.
#[test]
fn linear_system_equivalence() {
    let o = opts();
    let (sys, u, _) = double_integrator_system();
    let Dynamics::LinearAutonomous { a, b, .. } = &sys.dynamics else {
        panic!("linear dynamics expected")
    };
    let weak = classify_weakly_u_regular(&sys, &u, &o).unwrap();
    let route = linear_interior_route(a, b, &u, &sys.constraint, sys.horizon, 0.1).unwrap();
    assert_eq!(weak.decision == Decision::Regular, route.holds);

    // saturated control: no interior interval, and indeed not weakly
    // U-regular
    let (sat_sys, sat_u, _) = saturated_integrator_system();
    let Dynamics::LinearAutonomous { a, b, .. } = &sat_sys.dynamics else {
        panic!("linear dynamics expected")
    };
    let weak = classify_weakly_u_regular(&sat_sys, &sat_u, &o).unwrap();
    let route =
        linear_interior_route(a, b, &sat_u, &sat_sys.constraint, sat_sys.horizon, 0.1).unwrap();
    assert_eq!(weak.decision == Decision::Regular, route.holds);
}

/// Weak extremal lifts annihilate the differential: for the ramp control
/// the pairing vanishes for arbitrary directions.
#[test]
fn lift_certificate_annihilates_differential() {
    let (sys, u, _) = escape_square_system();
    let o = opts();
    let (_, psi) = singular_certificate_search(&sys, &u, LiftKind::Nhg, 2, &o).unwrap();
    let base = ode::integrate_state(&sys, &u, o.steps_per_unit).unwrap();
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let nodes = 8;
        let times: Vec<f64> = (0..nodes).map(|k| k as f64 / nodes as f64).collect();
        let values = (0..nodes)
            .map(|_| dvector![rng.random::<f64>() * 2.0 - 1.0])
            .collect();
        let v = reach_core::ControlSignal::GridSampled {
            times,
            values,
            hold: reach_core::system::Hold::ZeroOrder,
        };
        let d = endpoint::differential_along(&sys, &u, &base, &v, o.steps_per_unit).unwrap();
        assert!(psi.dot(&d).abs() <= 1e-6, "pairing {}", psi.dot(&d));
    }
}
