use myelin_core::fem::{self, Conductivity, CsrMatrix, DofMap, JumpSpace, MeanConstraint, SpdSolver};
use myelin_core::meshing::build_cell_mesh;
use myelin_core::{CellGeometry, Region};
use proptest::prelude::*;

fn reference_setup() -> (myelin_core::AxiMesh, DofMap) {
    let mesh = build_cell_mesh(&CellGeometry::reference(), 0.05, 1.5).unwrap();
    let d = DofMap::periodic(&mesh, None);
    (mesh, d)
}

#[test]
fn stiffness_is_symmetric_with_constant_kernel() {
    let (mesh, d) = reference_setup();
    let k = fem::assemble_stiffness(&mesh, &d, &Conductivity { sigma_i: 1.0, sigma_e: 2.0, sigma_m: 1e-4 });
    assert!(k.constant_kernel);
    assert!(k.matrix.is_symmetric());
    let ones = vec![1.0; d.n];
    let k1 = k.matrix.apply(&ones);
    assert!(k1.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn radial_field_energy_is_the_volume() {
    // |∇r| = 1 and r is periodic and continuous, so ∫σ|∇r|² is exact for P1
    let (mesh, d) = reference_setup();
    let verts: Vec<f64> = mesh.vertices.iter().map(|p| p[1]).collect();
    let x = d.from_vertices(&verts);
    let k = fem::assemble_stiffness(&mesh, &d, &Conductivity { sigma_i: 1.0, sigma_e: 1.0, sigma_m: 1.0 });
    let vol: f64 = fem::volume_weights(&mesh, &d, None).iter().sum();
    assert!((k.quad_form(&x) - vol).abs() < 1e-11 * vol);
    let m = fem::assemble_volume_mass(&mesh, &d);
    let ones = vec![1.0; d.n];
    assert!((m.quad_form(&ones) - vol).abs() < 1e-12 * vol);
}

#[test]
fn jump_mass_integrates_the_jump() {
    let (mesh, d) = reference_setup();
    let j = JumpSpace::new(&mesh, &d).unwrap();
    let b = fem::assemble_jump_mass(&mesh, &d).unwrap();
    assert!(b.matrix.is_symmetric());
    // unit jump: 1 on every intracellular copy
    let mut x = vec![0.0; d.n];
    for &(i, e) in &j.pairs {
        if i != e {
            x[i] = 1.0;
        }
    }
    let g = CellGeometry::reference();
    let exact = g.measures().area_gamma;
    // the apexes carry zero jump, so the P1 jump falls off on the end edges
    let q = b.quad_form(&x);
    assert!(q < exact && q > 0.8 * exact, "{q} vs {exact}");
    // constants have no jump
    let ones = vec![1.0; d.n];
    assert!(b.quad_form(&ones).abs() < 1e-14);
}

#[test]
fn region_functionals_split_the_volume() {
    let (mesh, d) = reference_setup();
    let ones = vec![1.0; d.n];
    let total: f64 = [Region::Intra, Region::Myelin, Region::Extra].iter().map(|&r| fem::region_l2_sq(&mesh, &d, &ones, 0.0, r)).sum();
    let vol: f64 = fem::volume_weights(&mesh, &d, None).iter().sum();
    assert!((total - vol).abs() < 1e-12 * vol);
}

#[test]
fn singular_solve_with_mean_constraint() {
    let (mesh, d) = reference_setup();
    let k = fem::assemble_stiffness(&mesh, &d, &Conductivity { sigma_i: 1.0, sigma_e: 1.0, sigma_m: 0.01 });
    let w = fem::volume_weights(&mesh, &d, None);
    let target: Vec<f64> = mesh.vertices.iter().map(|p| p[1] * p[1]).collect();
    let mut u = d.from_vertices(&target);
    let c = MeanConstraint { weights: w.clone() };
    c.apply(&mut u);
    let rhs = k.matrix.apply(&u);
    let x = fem::solve_spd(&k, &rhs, Some(&c)).unwrap();
    let err = x.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-7, "{err}");
}

fn spd_from(n: usize, entries: &[(usize, usize, f64)]) -> CsrMatrix {
    // graph Laplacian of the random edges plus a positive diagonal
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 1.0 + i as f64 * 0.01));
    }
    for &(i, j, w) in entries {
        let (i, j) = (i % n, j % n);
        if i != j {
            t.extend([(i, i, w), (j, j, w), (i, j, -w), (j, i, -w)]);
        }
    }
    CsrMatrix::from_triplets(n, t)
}

proptest! {
    #[test]
    fn from_triplets_sums_duplicates(entries in prop::collection::vec((0usize..6, 0usize..6, -5.0f64..5.0), 0..40)) {
        let m = CsrMatrix::from_triplets(6, entries.clone());
        let mut dense = [[0.0f64; 6]; 6];
        for &(i, j, v) in &entries {
            dense[i][j] += v;
        }
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((m.get(i, j) - dense[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spd_solver_inverts_random_systems(
        n in 2usize..40,
        edges in prop::collection::vec((0usize..40, 0usize..40, 0.1f64..3.0), 0..120),
        seed in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let a = spd_from(n, &edges);
        let x: Vec<f64> = seed[..n].to_vec();
        let b = a.apply(&x);
        let s = SpdSolver::with_matrix(a, false).unwrap();
        let y = s.solve(&b).unwrap();
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn rcm_is_a_permutation(n in 1usize..50, edges in prop::collection::vec((0usize..50, 0usize..50, 1.0f64..2.0), 0..100)) {
        let a = spd_from(n, &edges);
        let mut p = fem::rcm(&a);
        p.sort_unstable();
        prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
    }
}
