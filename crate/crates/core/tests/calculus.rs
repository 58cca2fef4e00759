//! Differentiation, integration-order and duality property suites over
//! randomized expressions and systems.

mod common;

use nalgebra::{dvector, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reach_core::expr::{self, eval_with_gradient, Expression};
use reach_core::needle::{fd_check_package, NeedlePackage};
use reach_core::ode;
use reach_core::system::{ConstraintSet, ControlSignal, ControlSystem, Dynamics, Partition};

/// Random arithmetic expression in `n` states, `m` controls and `t`,
/// built from the full operator set with domain-safe arguments for
/// `log`/`sqrt` (squared-plus-one wrappers).
fn random_expression(rng: &mut ChaCha8Rng, n: usize, m: usize, depth: usize) -> String {
    if depth == 0 {
        match rng.random_range(0..4) {
            0 => format!("{:.3}", rng.random::<f64>() * 4.0 - 2.0),
            1 if n > 0 => format!("x{}", rng.random_range(1..=n)),
            2 if m > 0 => format!("u{}", rng.random_range(1..=m)),
            _ => "t".to_string(),
        }
    } else {
        let a = random_expression(rng, n, m, depth - 1);
        let b = random_expression(rng, n, m, depth - 1);
        match rng.random_range(0..9) {
            0 => format!("({a} + {b})"),
            1 => format!("({a} - {b})"),
            2 => format!("({a} * {b})"),
            3 => format!("sin({a})"),
            4 => format!("cos({a})"),
            5 => format!("tanh({a})"),
            6 => format!("({a})^{}", rng.random_range(1..=3)),
            7 => format!("exp(({a}) * 0.25)"),
            // strictly positive argument keeps log/sqrt inside their domain
            8 => format!("log(({a})^2 + 1.5)"),
            _ => unreachable!(),
        }
    }
}

fn central_diff(e: &Expression, x: &[f64], u: &[f64], t: f64, slot: usize, h: f64) -> f64 {
    let bump = |delta: f64| -> f64 {
        let mut xs = x.to_vec();
        let mut us = u.to_vec();
        let mut ts = t;
        if slot < xs.len() {
            xs[slot] += delta;
        } else if slot < xs.len() + us.len() {
            us[slot - xs.len()] += delta;
        } else {
            ts += delta;
        }
        e.eval(&xs, &us, ts).unwrap()
    };
    (bump(h) - bump(-h)) / (2.0 * h)
}

#[test]
fn gradients_match_central_differences_on_random_expressions() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (n, m) = (2, 2);
    let mut checked = 0;
    while checked < 1000 {
        let src = random_expression(&mut rng, n, m, 3);
        let Ok(e) = expr::parse(&src, n, m) else {
            continue;
        };
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let u: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let t = rng.random::<f64>();
        let Ok(ev) = eval_with_gradient(&e, &x, &u, t) else {
            continue;
        };
        if !ev.value.is_finite() || ev.value.abs() > 1e6 {
            continue;
        }
        for slot in 0..n + m + 1 {
            let analytic = if slot < n {
                ev.grad_x[slot]
            } else if slot < n + m {
                ev.grad_u[slot - n]
            } else {
                ev.d_t
            };
            let numeric = central_diff(&e, &x, &u, t, slot, 1e-6);
            let scale = analytic.abs().max(numeric.abs()).max(1.0);
            assert!(
                (analytic - numeric).abs() / scale <= 1e-6,
                "{src}: slot {slot}: {analytic} vs {numeric}"
            );
        }
        checked += 1;
    }
}

#[test]
fn print_parse_roundtrip_evaluates_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let (n, m) = (2, 1);
    for _ in 0..300 {
        let src = random_expression(&mut rng, n, m, 3);
        let Ok(e) = expr::parse(&src, n, m) else {
            continue;
        };
        let printed = e.to_string();
        let reparsed = expr::parse(&printed, n, m)
            .unwrap_or_else(|err| panic!("reparse of `{printed}` failed: {err}"));
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let u: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let t = rng.random::<f64>();
            match (e.eval(&x, &u, t), reparsed.eval(&x, &u, t)) {
                (Ok(a), Ok(b)) => assert!(
                    (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                    "`{src}` vs `{printed}`: {a} vs {b}"
                ),
                (Err(_), Err(_)) => {}
                (a, b) => panic!("domain mismatch for `{src}`: {a:?} vs {b:?}"),
            }
        }
    }
}

/// `x' = (x2, u - x1³ + sin(t))`, a smooth nonlinear testbed.
fn smooth_system(horizon: f64) -> ControlSystem {
    ControlSystem::new(
        2,
        1,
        horizon,
        dvector![0.4, -0.3],
        Dynamics::Expressions(vec![
            expr::parse("x2", 2, 1).unwrap(),
            expr::parse("u1 - x1^3 + sin(t)", 2, 1).unwrap(),
        ]),
        ConstraintSet::AllSpace,
    )
    .unwrap()
}

#[test]
fn rk4_order_four_convergence() {
    let sys = smooth_system(2.0);
    let u = ControlSignal::Analytic {
        exprs: vec![expr::parse("cos(2*t)", 0, 0).unwrap()],
    };
    let reference = ode::integrate_state(&sys, &u, 10_000).unwrap();
    let coarse = ode::integrate_state(&sys, &u, 20).unwrap();
    let fine = ode::integrate_state(&sys, &u, 40).unwrap();
    let e_coarse = (coarse.final_state() - reference.final_state()).norm();
    let e_fine = (fine.final_state() - reference.final_state()).norm();
    let ratio = e_coarse / e_fine;
    assert!(
        (12.0..=20.0).contains(&ratio),
        "halving the step changed the error by {ratio}x ({e_coarse} -> {e_fine})"
    );
}

#[test]
fn duality_identity_on_random_draws() {
    // ⟨p(T), w(T)⟩ = ⟨p(0), w(0)⟩ + ∫ ⟨∇u H, v⟩ dt within 1e-7 across
    // 50 random (system, control, direction, costate) draws
    let mut rng = ChaCha8Rng::seed_from_u64(4711);
    for draw in 0..50 {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random::<f64>() - 0.5);
        let b = DMatrix::from_fn(2, 1, |_, _| rng.random::<f64>() - 0.5);
        let sys = if draw % 2 == 0 {
            ControlSystem::new(
                2,
                1,
                1.5,
                DVector::from_fn(2, |_, _| rng.random::<f64>()),
                Dynamics::LinearAutonomous {
                    a,
                    b,
                    drift: DVector::zeros(2),
                },
                ConstraintSet::AllSpace,
            )
            .unwrap()
        } else {
            smooth_system(1.5)
        };
        let part = Partition::uniform(sys.horizon, 4);
        let u = ControlSignal::piecewise_constant(
            part.clone(),
            (0..4)
                .map(|_| DVector::from_fn(1, |_, _| rng.random::<f64>() - 0.5))
                .collect(),
        )
        .unwrap();
        let v = ControlSignal::piecewise_constant(
            part,
            (0..4)
                .map(|_| DVector::from_fn(1, |_, _| rng.random::<f64>() - 0.5))
                .collect(),
        )
        .unwrap();
        let mut psi = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
        psi /= psi.norm();
        let w_start = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
        let base = ode::integrate_state(&sys, &u, 1000).unwrap();
        let defect = ode::duality_defect(&sys, &u, &base, &v, w_start, psi, 1000).unwrap();
        assert!(defect.abs() <= 1e-7, "draw {draw}: defect {defect}");
    }
}

/// Random polynomial control systems with genuinely nonlinear control
/// dependence, for the first-order finite-difference slope law of the
/// package Jacobian.
fn random_polynomial_system(rng: &mut ChaCha8Rng) -> (ControlSystem, ControlSignal) {
    let n = 1 + rng.random_range(0..2);
    let mut exprs = Vec::with_capacity(n);
    for i in 0..n {
        let lin = rng.random::<f64>() * 1.4 - 0.7;
        // a control-quadratic term bounded away from zero keeps the Taylor
        // remainder (and hence the probed deviation) genuinely first order
        let quad =
            (0.3 + rng.random::<f64>() * 0.7) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let state = rng.random::<f64>() * 0.8 - 0.4;
        let other = if n == 2 {
            format!("x{}", 2 - i)
        } else {
            "x1".to_string()
        };
        exprs.push(
            expr::parse(
                &format!("{lin:.4}*u1 + {quad:.4}*u1^2 + {state:.4}*{other}"),
                n,
                1,
            )
            .unwrap(),
        );
    }
    let sys = ControlSystem::new(
        n,
        1,
        1.0,
        DVector::from_fn(n, |_, _| rng.random::<f64>() * 0.5),
        Dynamics::Expressions(exprs),
        ConstraintSet::interval(-1.0, 1.0),
    )
    .unwrap();
    let u = ControlSignal::constant(DVector::from_element(1, 0.3), 1.0);
    (sys, u)
}

#[test]
fn package_jacobian_first_order_slope_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let alphas = [1e-2, 5e-3, 2.5e-3];
    for draw in 0..20 {
        let (sys, u) = random_polynomial_system(&mut rng);
        let chi = NeedlePackage::new(
            vec![0.25, 0.625],
            vec![vec![dvector![0.9]], vec![dvector![-0.8]]],
            0.05,
            &sys.constraint,
            1.0,
        )
        .unwrap();
        let dir = reach_core::needle::Amplitudes(dvector![1.0, 0.7]);
        let report = fd_check_package(&sys, &u, &chi, &dir, &alphas, 2000).unwrap();
        let devs: Vec<f64> = report.deviations.iter().map(|d| d.unwrap()).collect();
        // deviation/α stays bounded
        for (k, d) in devs.iter().enumerate() {
            assert!(
                d / alphas[k] < 10.0,
                "draw {draw}: dev {d} at α={}",
                alphas[k]
            );
        }
        // halving α halves the deviation (first-order remainder), checked
        // above the integrator noise floor
        for k in 1..devs.len() {
            if devs[k - 1] > 1e-9 {
                let ratio = devs[k] / devs[k - 1];
                assert!(
                    (0.3..=0.7).contains(&ratio),
                    "draw {draw}: deviation ratio {ratio} ({devs:?})"
                );
            }
        }
        checked_nontrivial(&devs, draw);
    }
}

fn checked_nontrivial(devs: &[f64], draw: usize) {
    // the construction guarantees a visible first-order deviation
    assert!(
        devs[0] > 1e-8,
        "draw {draw}: deviation {:?} below the informative floor",
        devs
    );
}

#[test]
fn strong_variation_closed_forms() {
    // f = u: transported jump is ω - u(τ); double integrator: (T - τ, 1)
    // times the jump in the second coordinate
    let sys1 = ControlSystem::new(
        1,
        1,
        1.0,
        dvector![0.0],
        Dynamics::LinearAutonomous {
            a: DMatrix::zeros(1, 1),
            b: DMatrix::identity(1, 1),
            drift: DVector::zeros(1),
        },
        ConstraintSet::interval(-1.0, 1.0),
    )
    .unwrap();
    let u1 = ControlSignal::constant(dvector![1.0], 1.0);
    let base1 = ode::integrate_state(&sys1, &u1, 1000).unwrap();
    let w = reach_core::needle::strong_variation_vector(
        &sys1,
        &u1,
        &base1,
        0.25,
        &dvector![-1.0],
        1000,
    )
    .unwrap();
    assert!((w[0] - (-2.0)).abs() < 1e-9);

    let t_end = 18.0;
    let sys2 = ControlSystem::new(
        2,
        1,
        t_end,
        dvector![78.0, 0.0],
        Dynamics::LinearAutonomous {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            drift: DVector::zeros(2),
        },
        ConstraintSet::interval(-1.0, 1.0),
    )
    .unwrap();
    let u2 = ControlSignal::constant(dvector![0.0], t_end);
    let base2 = ode::integrate_state(&sys2, &u2, 1000).unwrap();
    for tau in [0.0, 4.5, 9.0] {
        let w = reach_core::needle::strong_variation_vector(
            &sys2,
            &u2,
            &base2,
            tau,
            &dvector![1.0],
            1000,
        )
        .unwrap();
        assert!((w[0] - (t_end - tau)).abs() < 1e-9, "tau={tau}: {w:?}");
        assert!((w[1] - 1.0).abs() < 1e-9, "tau={tau}: {w:?}");
    }
}

#[test]
fn escape_square_fd_quotient_slope() {
    // along the ramp the differential vanishes and the quotient is exactly
    // α ∫ v², so deviation/α approaches ∫ v²
    let (sys, u, _) = common::escape_square_system();
    let v = ControlSignal::constant(dvector![1.0], 1.0);
    let alphas = [1e-1, 5e-2, 2.5e-2];
    let report = reach_core::endpoint::fd_consistency(&sys, &u, &v, &alphas, 1000).unwrap();
    assert!(report.reference.norm() < 1e-10);
    for (k, dev) in report.deviations.iter().enumerate() {
        let dev = dev.unwrap();
        // ∫ v² = 1
        assert!(
            (dev / alphas[k] - 1.0).abs() < 1e-6,
            "α={}: {dev}",
            alphas[k]
        );
    }
}

#[test]
fn package_jacobian_at_nonzero_amplitudes_matches_finite_differences() {
    // stacked needles over a ramp segment: the edge-shift sum must agree
    // with central differences of the package map away from zero
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let (sys, u) = random_polynomial_system(&mut rng);
        let chi = NeedlePackage::new(
            vec![0.2, 0.55],
            vec![vec![dvector![0.9], dvector![-0.7]], vec![dvector![-0.85]]],
            0.06,
            &sys.constraint,
            1.0,
        )
        .unwrap();
        let alpha = reach_core::needle::Amplitudes(dvector![0.031, 0.024, 0.041]);
        let jac = reach_core::needle::package_jacobian_at(&sys, &u, &chi, &alpha, 4000).unwrap();
        let psi = |a: &DVector<f64>| -> DVector<f64> {
            let varied = reach_core::needle::apply_package(
                &u,
                &chi,
                &reach_core::needle::Amplitudes(a.clone()),
            )
            .unwrap();
            ode::integrate_state(&sys, &varied, 4000)
                .unwrap()
                .final_state()
                .clone()
        };
        let h = 2e-4;
        for col in 0..3 {
            let mut up = alpha.0.clone();
            up[col] += h;
            let mut dn = alpha.0.clone();
            dn[col] -= h;
            let fd = (psi(&up) - psi(&dn)) / (2.0 * h);
            let err = (&fd - jac.column(col)).norm();
            let scale = fd.norm().max(1e-6);
            assert!(
                err / scale < 2e-2,
                "column {col}: fd {:?} vs jac {:?}",
                fd.as_slice(),
                jac.column(col).as_slice()
            );
        }
    }
}
