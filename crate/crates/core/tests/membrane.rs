use myelin_core::expr::Expr;
use myelin_core::membrane::{gating_closed_form, gating_from_samples, Gate, MembraneError, MembraneModel};
use proptest::prelude::*;

#[test]
fn exp_step_is_exact_for_frozen_voltage() {
    let m = MembraneModel::excitable();
    let g0 = [0.2];
    let exact = gating_closed_form(&m, &g0, &|_| 0.4, 0.7, 16).unwrap();
    let mut g = g0.to_vec();
    m.exp_step(&mut g, 0.4, 0.7);
    assert!((g[0] - exact[0]).abs() < 1e-13);
}

#[test]
fn samples_agree_with_quadrature() {
    let m = MembraneModel::excitable();
    let v = |t: f64| 0.3 + 0.2 * (3.0 * t).sin();
    let exact = gating_closed_form(&m, &[0.5], &v, 1.0, 32).unwrap();
    let times: Vec<f64> = (0..=400).map(|k| k as f64 / 400.0).collect();
    let vs: Vec<f64> = times.iter().map(|&t| v(t)).collect();
    let g = gating_from_samples(&m, &[0.5], &times, &vs).unwrap();
    assert!((g[0] - exact[0]).abs() < 1e-5);
}

#[test]
fn hh_has_no_closed_form() {
    let m = MembraneModel::hodgkin_huxley();
    assert!(matches!(gating_closed_form(&m, &[0.1, 0.6, 0.3], &|_| 0.0, 1.0, 4), Err(MembraneError::VoltageDependentDecay)));
}

#[test]
fn bad_parameters_are_rejected() {
    let mut g = Gate::fixed(1.0, 0.0);
    g.h_min = -1.0;
    assert!(MembraneModel::linear_gate(g, 1.0).validate().is_err());
    assert!(MembraneModel::passive(1.0, 0.0).validate().is_err());
    let mut m = MembraneModel::excitable();
    m.g0 = Some(vec![Expr::constant(0.1), Expr::constant(0.2)]);
    assert!(m.validate().is_err());
    m.g0 = Some(vec![Expr::constant(1.5)]);
    assert!(m.initial_gating(0.0).is_err());
}

#[test]
fn lipschitz_constants_bound_the_gate() {
    let m = MembraneModel::excitable();
    let (l1, l2) = m.lipschitz().unwrap();
    let gate = match &m.kinetics {
        myelin_core::membrane::Kinetics::Gated(g) => g[0].clone(),
        _ => unreachable!(),
    };
    let h = 1e-6;
    for k in 0..200 {
        let v = -1.0 + k as f64 * 0.01;
        assert!(((gate.drive(v + h) - gate.drive(v)) / h).abs() <= l2 * (1.0 + 1e-4));
    }
    assert_eq!(l1, 5.0);
    assert!(MembraneModel::hodgkin_huxley().lipschitz().is_none());
}

proptest! {
    #[test]
    fn gating_stays_in_the_unit_interval(
        g0 in 0.0f64..=1.0,
        vs in prop::collection::vec(-3.0f64..3.0, 1..50),
        dt in 1e-4f64..2.0,
    ) {
        for m in [MembraneModel::excitable(), MembraneModel::hodgkin_huxley()] {
            let mut g = vec![g0; m.m()];
            for &v in &vs {
                m.exp_step(&mut g, v, dt);
                prop_assert!(g.iter().all(|x| (0.0..=1.0).contains(x)), "{:?}", g);
            }
            prop_assert!(m.i_ion(0.5, &g).is_ok());
        }
    }

    #[test]
    fn current_splits_into_conductance_and_source(v in -5.0f64..5.0, g in 0.0f64..=1.0) {
        let m = MembraneModel::excitable();
        let (c, s) = m.split(&[g]);
        prop_assert!(c > 0.0);
        prop_assert!((m.i_ion(v, &[g]).unwrap() - (c * v - s)).abs() < 1e-12);
    }
}
