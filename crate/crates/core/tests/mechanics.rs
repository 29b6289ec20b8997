//! Equilibrium invariants: energy identity and sign of the volume-fraction
//! sensitivities.

mod common;

use multitop::fem::{element_b_matrix, element_stiffness, element_tensor, Fields, FemModel, SolverKind};
use multitop::materials::{MaterialClass, Tensor4};
use multitop::mesh::{build_rect_mesh_with, Fix, Mesh, Triangulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cantilever() -> Mesh {
    let mut mesh = build_rect_mesh_with(6.0, 3.0, 6, 3, Triangulation::Crossed).unwrap();
    mesh.fix_where(|p| p[0] < 1e-9, Fix::XY);
    mesh.add_point_load([6.0, 0.0], [0.2, -1.0]);
    mesh.add_edge_traction(|p| p[1] > 3.0 - 1e-9, [0.0, -0.1]);
    mesh
}

fn classes() -> Vec<MaterialClass> {
    vec![
        MaterialClass::constant("fiber", Tensor4::orthotropic(665.5, 332.8, 142.6, 95.2), 1.0).with_free_orientation(std::f64::consts::PI),
        MaterialClass::isotropic("soft", 120.0, 0.35, 0.2).unwrap(),
    ]
}

fn random_physical(ne: usize, seed: u64) -> Fields {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Fields::uniform(2, ne, &[0.5, 0.5], &[0.0, 0.0], &[0.0, 0.0]);
    for l in 0..ne {
        let a: f64 = rng.random_range(0.01..1.0);
        f.z[0][l] = a;
        f.z[1][l] = rng.random_range(0.001..(1.0 - a).max(0.002));
        f.theta[0][l] = rng.random_range(0.0..std::f64::consts::PI);
    }
    f
}

/// Strain energy `sum_l u_l^T K_l u_l` from element matrices built directly
/// from the node coordinates.
fn element_energy_sum(mesh: &Mesh, classes: &[MaterialClass], phys: &Fields, p: f64, u: &[f64]) -> f64 {
    let nodes = mesh.nodes();
    mesh.triangles()
        .iter()
        .enumerate()
        .map(|(l, t)| {
            let (b, area) = element_b_matrix(t.map(|k| nodes[k]));
            let k = element_stiffness(&b, area, &element_tensor(classes, phys, p, l));
            let ue: Vec<f64> = t.iter().flat_map(|&n| [u[2 * n], u[2 * n + 1]]).collect();
            (0..6).map(|r| (0..6).map(|c| ue[r] * k[6 * r + c] * ue[c]).sum::<f64>()).sum::<f64>()
        })
        .sum()
}

#[test]
fn compliance_equals_twice_the_strain_energy() {
    let mesh = cantilever();
    let classes = classes();
    let fem = FemModel::new(&mesh, SolverKind::Cholesky).unwrap();
    for (seed, p) in [(1, 1.0), (2, 3.0), (3, 2.5)] {
        let phys = random_physical(mesh.num_elements(), seed);
        let st = fem.solve(&classes, &phys, p).unwrap();
        let f = mesh.load_vector();
        let fu: f64 = f.iter().zip(&st.u).map(|(a, b)| a * b).sum();
        let uku = element_energy_sum(&mesh, &classes, &phys, p, &st.u);
        assert!((fu - st.compliance).abs() <= 1e-12 * fu.abs());
        assert!((fu - uku).abs() <= 1e-9 * fu.abs(), "f.u = {fu}, u.K.u = {uku}");
        let sens = fem.sensitivities(&classes, &phys, p, &st.u);
        let energy: f64 = sens.element_energy.iter().sum();
        assert!((energy - uku).abs() <= 1e-9 * uku);
    }
}

#[test]
fn adding_material_never_increases_compliance() {
    let mesh = cantilever();
    let classes = classes();
    let fem = FemModel::new(&mesh, SolverKind::Cholesky).unwrap();
    let p = 3.0;
    let phys = random_physical(mesh.num_elements(), 9);
    let st = fem.solve(&classes, &phys, p).unwrap();
    let sens = fem.sensitivities(&classes, &phys, p, &st.u);
    for i in 0..2 {
        assert!(sens.s_z[i].iter().all(|&s| s >= 0.0));
    }
    for l in (0..mesh.num_elements()).step_by(7) {
        for i in 0..2 {
            let mut more = phys.clone();
            more.z[i][l] += 1e-3;
            let c = fem.solve(&classes, &more, p).unwrap().compliance;
            assert!(c <= st.compliance * (1.0 + 1e-14), "element {l}, class {i}: {} -> {c}", st.compliance);
        }
    }
}
