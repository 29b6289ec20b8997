//! Invariants of the multiplier solves, the filters, tensor rotation and
//! rounding on randomized inputs.

mod common;

use std::f64::consts::PI;

use multitop::filter::build_filter;
use multitop::materials::Tensor4;
use multitop::mesh::{build_lshape_mesh_with, build_rect_mesh, build_rect_mesh_with, Mesh, Triangulation};
use multitop::optimizer::postprocess_round;
use proptest::prelude::*;

fn arb_tensor() -> impl Strategy<Value = Tensor4> {
    prop::array::uniform9(-1.0..1.0f64).prop_map(|a| {
        // A A^T + I is symmetric positive definite
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| a[3 * i + k] * a[3 * j + k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        Tensor4::from_matrix(m)
    })
}

fn arb_triangulation() -> impl Strategy<Value = Triangulation> {
    prop_oneof![Just(Triangulation::Diagonal), Just(Triangulation::Crossed)]
}

/// Barycentric coordinates of the centroid are all bounded away from zero.
fn centroids_inside(mesh: &Mesh) -> bool {
    let nodes = mesh.nodes();
    mesh.triangles().iter().zip(mesh.centroids()).all(|(t, c)| {
        let [a, b, d] = t.map(|k| nodes[k]);
        let cross = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
        let total = cross(a, b, d);
        [cross(*c, b, d), cross(a, *c, d), cross(a, b, *c)].iter().all(|w| w / total > 0.3)
    })
}

fn sorted(mut v: [f64; 3]) -> [f64; 3] {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn multipliers_are_monotone_and_complementary(seed in any::<u64>()) {
        if let Err(e) = common::check_multipliers(seed) {
            prop_assert!(false, "{}", e);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn rotations_compose(c in arb_tensor(), a in -7.0..7.0f64, b in -7.0..7.0f64) {
        let lhs = c.rotate(a).rotate(b);
        let rhs = c.rotate(a + b);
        prop_assert!(lhs.relative_difference(&rhs) < 1e-12);
    }

    #[test]
    fn half_turn_is_identity(c in arb_tensor()) {
        prop_assert!(c.rotate(PI).relative_difference(&c) < 1e-12);
    }

    #[test]
    fn rotation_preserves_eigenvalues(c in arb_tensor(), a in -7.0..7.0f64) {
        let e0 = sorted(c.eigenvalues());
        let e1 = sorted(c.rotate(a).eigenvalues());
        for k in 0..3 {
            prop_assert!((e0[k] - e1[k]).abs() <= 1e-10 * e0[2]);
        }
    }

    #[test]
    fn filter_invariants(
        nx in 2usize..9,
        ny in 1usize..6,
        lx in 0.5..4.0f64,
        ly in 0.5..4.0f64,
        radius_factor in 0.5..3.0f64,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mesh = build_rect_mesh(lx, ly, nx, ny).unwrap();
        let h = (lx / nx as f64).max(ly / ny as f64);
        let f = build_filter(mesh.centroids(), mesh.areas(), radius_factor * h);
        let ne = mesh.num_elements();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..ne).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..ne).map(|_| rng.random_range(-1.0..1.0)).collect();

        for v in f.apply(&vec![0.37; ne]) {
            prop_assert!((v - 0.37).abs() < 1e-14);
        }
        let fx = f.apply(&x);
        let fty = f.apply_transpose(&y);
        let lhs: f64 = fx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&fty).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12 * ne as f64);
        let (lo, hi) = x.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        for v in &fx {
            prop_assert!(*v >= lo - 1e-14 && *v <= hi + 1e-14);
        }

        let period = if seed % 2 == 0 { PI } else { PI / 2.0 };
        let angle = rng.random_range(0.0..period);
        let shifted: Vec<f64> = (0..ne).map(|l| angle + period * (l % 3) as f64).collect();
        for v in f.apply_circular(&shifted, period) {
            let d = (v - angle).rem_euclid(period);
            prop_assert!(d.min(period - d) < 1e-12);
        }
    }

    #[test]
    fn rounding_picks_at_most_one_class(
        z in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 20), 1..5),
    ) {
        let (r, label) = postprocess_round(&z);
        for l in 0..20 {
            let ones: Vec<usize> = (0..z.len()).filter(|&i| r[i][l] == 1.0).collect();
            prop_assert!(ones.len() <= 1);
            prop_assert!((0..z.len()).all(|i| r[i][l] == 0.0 || r[i][l] == 1.0));
            let best = (0..z.len()).max_by(|&a, &b| z[a][l].total_cmp(&z[b][l])).unwrap();
            match label[l] {
                Some(i) => {
                    prop_assert_eq!(ones, vec![i]);
                    prop_assert_eq!(i, best);
                    prop_assert!(z[i][l] > 0.5);
                }
                None => {
                    prop_assert!(ones.is_empty());
                    prop_assert!(z[best][l] <= 0.5);
                }
            }
        }
    }

    #[test]
    fn rectangle_meshes_cover_the_domain(
        nx in 1usize..12,
        ny in 1usize..12,
        lx in 0.1..30.0f64,
        ly in 0.1..30.0f64,
        tri in arb_triangulation(),
    ) {
        let mesh = build_rect_mesh_with(lx, ly, nx, ny, tri).unwrap();
        prop_assert!((mesh.total_area() - lx * ly).abs() <= 1e-12 * lx * ly);
        prop_assert!(centroids_inside(&mesh));
        let fine = build_rect_mesh_with(lx, ly, 2 * nx, 2 * ny, tri).unwrap();
        prop_assert_eq!(fine.num_elements(), 4 * mesh.num_elements());
        prop_assert!((fine.total_area() - mesh.total_area()).abs() <= 1e-12 * lx * ly);
    }

    #[test]
    fn lshape_meshes_cover_the_domain(half in 1usize..8, size in 0.5..20.0f64, tri in arb_triangulation()) {
        let mesh = build_lshape_mesh_with(size, 2 * half, tri).unwrap();
        let area = 0.75 * size * size;
        prop_assert!((mesh.total_area() - area).abs() <= 1e-12 * area);
        prop_assert!(centroids_inside(&mesh));
        let fine = build_lshape_mesh_with(size, 4 * half, tri).unwrap();
        prop_assert_eq!(fine.num_elements(), 4 * mesh.num_elements());
    }

    #[test]
    fn filter_is_linear_and_circular_filter_equivariant(
        n in 2usize..7,
        radius in 0.3..2.5f64,
        alpha in -3.0..3.0f64,
        beta in -3.0..3.0f64,
        shift in -4.0..4.0f64,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mesh = build_rect_mesh(n as f64, n as f64, n, n).unwrap();
        let f = build_filter(mesh.centroids(), mesh.areas(), radius);
        let ne = mesh.num_elements();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..ne).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..ne).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
        let (fu, fv, fm) = (f.apply(&u), f.apply(&v), f.apply(&mix));
        for l in 0..ne {
            prop_assert!((fm[l] - (alpha * fu[l] + beta * fv[l])).abs() < 1e-12);
        }
        let period = PI;
        // angles clustered within a quarter period keep the resultant away from zero
        let theta: Vec<f64> = (0..ne).map(|_| rng.random_range(0.0..0.25 * period)).collect();
        let moved: Vec<f64> = theta.iter().map(|t| (t + shift).rem_euclid(period)).collect();
        let a = f.apply_circular(&theta, period);
        let b = f.apply_circular(&moved, period);
        for l in 0..ne {
            let d = (b[l] - (a[l] + shift)).rem_euclid(period);
            prop_assert!(d.min(period - d) < 1e-10);
        }
    }
}
