use std::f64::consts::PI;

use myelin_core::fem::{self, DofMap, JumpSpace};
use myelin_core::meshing::{build_cell_mesh, build_cell_mesh_with, mesh_quality};
use myelin_core::{CellGeometry, MeshParams, MyelinShape, Region};
use proptest::prelude::*;

fn region_volume(mesh: &myelin_core::AxiMesh, r: Region) -> f64 {
    let d = DofMap::periodic(mesh, None);
    fem::volume_weights(mesh, &d, Some(r)).iter().sum()
}

#[test]
fn reference_mesh_reproduces_cell_measures() {
    let g = CellGeometry::reference();
    let m = g.measures();
    let mesh = build_cell_mesh(&g, 0.025, 1.5).unwrap();
    mesh.check().unwrap();
    assert!((region_volume(&mesh, Region::Intra) - m.vol_yi).abs() < 1e-12 * m.vol_yi);
    // the outline is polygonal in the mesh, so sheath and extracellular
    // volumes carry a small chord error
    for (r, exact) in [(Region::Myelin, m.vol_ym), (Region::Extra, m.vol_ye)] {
        let v = region_volume(&mesh, r);
        assert!((v - exact).abs() < 2e-3 * exact, "{r:?}: {v} vs {exact}");
    }
    let total: f64 = [Region::Intra, Region::Myelin, Region::Extra].iter().map(|&r| region_volume(&mesh, r)).sum();
    assert!((total - m.vol_y).abs() < 1e-12 * m.vol_y);
}

#[test]
fn node_is_the_jump_surface() {
    let g = CellGeometry::reference();
    let mesh = build_cell_mesh(&g, 0.05, 1.5).unwrap();
    let d = DofMap::periodic(&mesh, None);
    let j = JumpSpace::new(&mesh, &d).unwrap();
    let exact = 2.0 * PI * g.r0 * (g.b - g.a);
    assert!((j.area() - exact).abs() < 1e-12 * exact);
    for &(i, e) in &mesh.jump_pairs {
        assert_eq!(mesh.vertices[i], mesh.vertices[e]);
        let y = mesh.vertices[i][0];
        assert!(y > g.a && y < g.b);
    }
}

#[test]
fn quality_is_bounded() {
    for h in [0.05, 0.025] {
        let q = mesh_quality(&build_cell_mesh(&CellGeometry::reference(), h, 1.5).unwrap());
        assert!(q.min_angle_deg > 15.0, "{q:?}");
        assert_eq!(q.flagged, 0);
    }
}

#[test]
fn deep_cores_keep_quality() {
    let g = CellGeometry::reference();
    let p = MeshParams::new(0.05, 1.5).with_core_depth(60.0);
    let mesh = build_cell_mesh_with(&g, &p).unwrap();
    let deepest = mesh.frames.iter().flatten().map(|f| f.log_rho).filter(|l| l.is_finite()).fold(0.0, f64::min);
    assert!(deepest <= -60.0);
    assert!(mesh_quality(&mesh).min_angle_deg > 15.0);
}

#[test]
fn replicated_mesh_scales_volumes() {
    let g = CellGeometry::reference();
    let cell = build_cell_mesh(&g, 0.07, 1.0).unwrap();
    let (m, left, right) = cell.replicate(3);
    assert_eq!(m.n_vertices(), 3 * cell.n_vertices());
    assert_eq!(left.len(), right.len());
    let one = region_volume(&cell, Region::Extra);
    let three = region_volume(&m, Region::Extra);
    assert!((three - 3.0 * one).abs() < 1e-12 * three);
    for (&l, &r) in left.iter().zip(&right) {
        assert!((m.vertices[r][0] - m.vertices[l][0] - 3.0).abs() < 1e-12);
    }
}

#[test]
fn bare_cell_has_no_sheath() {
    let g = CellGeometry::bare(0.5, 1.0, 1.0, 1.0);
    let mesh = build_cell_mesh(&g, 0.05, 1.5).unwrap();
    assert!(mesh.regions.iter().all(|&r| r != Region::Myelin));
    assert!((region_volume(&mesh, Region::Extra) - 0.75 * PI).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_cells_mesh_consistently(
        a in 0.2f64..0.4,
        len in 0.15f64..0.4,
        phi_a in 0.9f64..2.2,
        phi_b in 0.9f64..2.2,
        t in 0.12f64..0.3,
    ) {
        let g = CellGeometry { a, b: a + len, phi_a, phi_b, myelin: MyelinShape::Bulge { thickness: t }, ..CellGeometry::reference() };
        prop_assume!(g.clone().validate().is_ok());
        let mesh = build_cell_mesh(&g, 0.035, 1.5).unwrap();
        mesh.check().unwrap();
        let m = g.measures();
        prop_assert!((region_volume(&mesh, Region::Intra) - m.vol_yi).abs() < 1e-10);
        let ym = region_volume(&mesh, Region::Myelin);
        prop_assert!((ym - m.vol_ym).abs() < 5e-3 * m.vol_ym, "{} vs {}", ym, m.vol_ym);
        let d = DofMap::periodic(&mesh, None);
        let area = JumpSpace::new(&mesh, &d).unwrap().area();
        prop_assert!((area - m.area_gamma).abs() < 1e-10);
    }
}
