use std::f64::consts::PI;

use myelin_core::meshing::build_cell_mesh_with;
use myelin_core::node_constant::{
    alpha0, core_depth, delta_max, lambda_bar_closed_form, richardson, solve_alpha, solve_lambda_delta, test_function_energy,
    verify_theta_properties, NodeError,
};
use myelin_core::{CellGeometry, MeshParams};
use proptest::prelude::*;

#[test]
fn reference_closed_form() {
    let v = lambda_bar_closed_form(&CellGeometry::reference()).unwrap();
    assert!((v - 5.443310539518173).abs() < 1e-12);
}

#[test]
fn eigenvalue_sits_below_the_test_field_and_scales_with_delta() {
    let g = CellGeometry::reference();
    let lb = lambda_bar_closed_form(&g).unwrap();
    let delta = 0.1;
    let mesh = build_cell_mesh_with(&g, &MeshParams::new(0.05, 1.5).with_core_depth(core_depth(&g, delta))).unwrap();
    let r = solve_lambda_delta(&mesh, &g, delta).unwrap();
    let ub = test_function_energy(delta, &g, &mesh).unwrap();
    assert!(r.lambda_delta <= ub, "{} > {}", r.lambda_delta, ub);
    assert!(r.residual <= 1e-8);
    let ratio = r.lambda_delta / (delta * lb);
    assert!(ratio > 1.0 && ratio < 1.4, "{ratio}");

    let t = verify_theta_properties(&mesh, &r).unwrap();
    // sign fixed so the axon sits on the positive side
    assert!(t.mean_jump > 0.0);
    assert!(t.theta_linf <= 1.5);
}

#[test]
fn oversized_delta_is_rejected() {
    let g = CellGeometry::reference();
    let d = 2.0 * delta_max(&g);
    let mesh = build_cell_mesh_with(&g, &MeshParams::new(0.05, 1.5).with_core_depth(4.0)).unwrap();
    assert!(matches!(test_function_energy(d, &g, &mesh), Err(NodeError::DeltaTooLarge(_))));
    assert!(matches!(solve_alpha(0.7, 1.0, 1.0, 1.0), Err(NodeError::DeltaTooLarge(_))));
}

#[test]
fn shallow_cores_are_rejected() {
    let g = CellGeometry::reference();
    let mesh = build_cell_mesh_with(&g, &MeshParams::new(0.05, 1.5).with_core_depth(4.0)).unwrap();
    assert!(matches!(test_function_energy(0.01, &g, &mesh), Err(NodeError::MeshTooCoarse)));
}

#[test]
fn alpha_approaches_its_limit() {
    let a0 = alpha0(PI / 2.0, 1.0, 1.0);
    assert!((a0 - 6f64.sqrt() / PI).abs() < 1e-14);
    let mut last = f64::INFINITY;
    for d in [1e-2, 1e-3, 1e-4, 1e-5] {
        let e = (solve_alpha(d, PI / 2.0, 1.0, 1.0).unwrap().alpha - a0).abs();
        assert!(e < last);
        last = e;
    }
    assert!(last < 1e-3 * a0);
}

#[test]
fn richardson_removes_the_leading_term() {
    let f = |h: f64| 3.0 + 0.7 * h * h;
    assert!((richardson(f(0.1), f(0.05), 2.0) - 3.0).abs() < 1e-14);
}

proptest! {
    #[test]
    fn closed_form_falls_as_the_corner_opens(phi in 0.3f64..2.8, dphi in 0.01f64..0.3) {
        prop_assume!(phi + dphi < 3.0);
        let g = CellGeometry { a: 0.0, b: 1.0, ..CellGeometry::reference() };
        let lo = lambda_bar_closed_form(&CellGeometry { phi_a: phi, phi_b: phi, ..g.clone() }).unwrap();
        let hi = lambda_bar_closed_form(&CellGeometry { phi_a: phi + dphi, phi_b: phi + dphi, ..g }).unwrap();
        prop_assert!(hi < lo);
    }

    #[test]
    fn alpha_stays_below_the_pole(d in 1e-4f64..0.5, phi in 0.2f64..2.9, si in 0.2f64..5.0, se in 0.2f64..5.0) {
        // past this the root leaves the first branch
        prop_assume!(alpha0(phi, si, se) * d < 0.25);
        let a = solve_alpha(d, phi, si, se).unwrap();
        prop_assert!(a.alpha > 0.0 && a.s() < 0.5);
    }
}
