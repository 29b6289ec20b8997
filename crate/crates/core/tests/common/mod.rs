//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::io::Write as _;
use std::sync::Arc;

use multitop::fem::{DesignField, FemModel, Fields, Sensitivities, SolverKind};
use multitop::filter::{build_filter, FilterOperator};
use multitop::materials::{DatabaseInterval, HomogenizedDatabase, MaterialClass, Tensor4};
use multitop::mesh::{build_rect_mesh, Fix, Mesh};
use multitop::optimizer::{build_update_data, filter_fields, solve_lambda, MassEvaluator, OcParams, UpdateData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes a line past the test harness output capture so that it shows up
/// in plain `cargo test` logs.
pub fn report(line: &str) {
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{line}");
}

/// A randomized update problem on 50 elements with one parametrized and two
/// fixed classes.
pub struct UpdateCase {
    pub mesh: Mesh,
    pub classes: Vec<MaterialClass>,
    pub filter: FilterOperator,
    pub data: UpdateData,
    pub params: OcParams,
    pub mass_limit: f64,
}

pub fn synthetic_database() -> Arc<HomogenizedDatabase> {
    let interval = DatabaseInterval {
        samples: [-0.2, 0.0, 0.2],
        tensors: [
            Tensor4::orthotropic(500.0, 200.0, 90.0, 60.0),
            Tensor4::orthotropic(665.5, 332.8, 142.6, 95.2),
            Tensor4::orthotropic(800.0, 420.0, 170.0, 120.0),
        ],
    };
    Arc::new(HomogenizedDatabase::new("stripes", vec![interval]).unwrap())
}

pub fn random_update_case(seed: u64) -> UpdateCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = build_rect_mesh(5.0, 5.0, 5, 5).unwrap();
    let ne = mesh.num_elements();
    assert_eq!(ne, 50);
    let classes = vec![
        MaterialClass::tabulated("stripes", synthetic_database(), 1.0, 0.1).unwrap(),
        MaterialClass::isotropic("a", 200.0, 0.3, 0.7).unwrap(),
        MaterialClass::isotropic("b", 900.0, 0.25, 1.3).unwrap(),
    ];
    let radius = rng.random_range(0.5..2.0);
    let filter = build_filter(mesh.centroids(), mesh.areas(), radius);
    let mut params = OcParams::default();
    if rng.random_bool(0.5) {
        params.move_limit = 1.0;
    }
    let mut control = Fields::uniform(3, ne, &[0.3; 3], &[0.0; 3], &[0.0; 3]);
    for l in 0..ne {
        // iterates of the optimizer always satisfy sum_i z_il <= 1
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let total = rng.random_range(3.0 * params.z_min..1.0);
        let s: f64 = raw.iter().sum();
        for i in 0..3 {
            control.z[i][l] = params.z_min + (total - 3.0 * params.z_min) * raw[i] / s;
        }
        control.m[0][l] = rng.random_range(-0.2..0.2);
    }
    let physical = filter_fields(&filter, &classes, &control);
    let energy = |rng: &mut ChaCha8Rng| rng.random_range(0.0..10.0f64).powi(2);
    let sens = Sensitivities {
        s_z: (0..3).map(|_| (0..ne).map(|_| energy(&mut rng)).collect()).collect(),
        s_m: vec![
            (0..ne).map(|_| rng.random_range(-5.0..20.0)).collect(),
            vec![0.0; ne],
            vec![0.0; ne],
        ],
        s_theta: vec![vec![0.0; ne]; 3],
        element_energy: (0..ne).map(|_| energy(&mut rng)).collect(),
    };
    let design = DesignField { control, physical };
    let data = build_update_data(&filter, &classes, &design, &sens, params.eps_scale);
    let mut case = UpdateCase {
        mesh,
        classes,
        filter,
        data,
        params,
        mass_limit: 0.0,
    };
    // budgets between the lightest and the heaviest update reachable in one
    // move-limited step, and some inactive ones above
    let zero = vec![0.0; ne];
    let ev = case.evaluator(&zero);
    let heavy = ev.mass(0.0).unwrap();
    let light = ev.mass(1e12 * case.data.num_z.iter().flatten().fold(1.0, |a: f64, &b| a.max(b))).unwrap();
    let mass_limit = light + rng.random_range(0.02..1.2) * (heavy - light);
    case.mass_limit = mass_limit;
    case
}

impl UpdateCase {
    pub fn evaluator<'a>(&'a self, mu_guess: &'a [f64]) -> MassEvaluator<'a> {
        MassEvaluator {
            data: &self.data,
            params: &self.params,
            filter: &self.filter,
            classes: &self.classes,
            areas: self.mesh.areas(),
            mu_guess,
        }
    }
}

/// Checks, on one random case, that `Z_l(mu)` and `M(Lambda)` are
/// non-increasing over 50-point sweeps and that the bisection results
/// satisfy the complementarity conditions to the configured tolerances.
pub fn check_multipliers(seed: u64) -> Result<(), String> {
    let case = random_update_case(seed);
    let params = &case.params;
    let ne = case.mesh.num_elements();
    let zero = vec![0.0; ne];
    let ev = case.evaluator(&zero);
    let mu_scale = (0..3)
        .flat_map(|i| case.data.num_z[i].iter().copied())
        .fold(0.0f64, f64::max)
        + case.data.eps;
    let sweep = |scale: f64| -> Vec<f64> {
        std::iter::once(0.0)
            .chain((0..49).map(|k| scale * 10f64.powf(-4.0 + 8.0 * k as f64 / 48.0)))
            .collect()
    };
    let lambda_probe = 1e-3 * mu_scale;
    for l in 0..ne {
        let zs: Vec<f64> = sweep(mu_scale)
            .iter()
            .map(|&mu| case.data.z_sum(params, lambda_probe, mu, l))
            .collect();
        for k in 1..zs.len() {
            if zs[k] > zs[k - 1] + 1e-12 {
                return Err(format!("seed {seed}: Z_{l}(mu) increases at sweep point {k}: {} -> {}", zs[k - 1], zs[k]));
            }
        }
    }
    // the sweep resolves each mu_l to round-off so that M(Lambda) is sampled
    // exactly rather than up to the bisection tolerance
    let mut tight = params.clone();
    tight.bisection_tol = 1e-13;
    let tight_ev = MassEvaluator {
        params: &tight,
        ..case.evaluator(&zero)
    };
    let dm: f64 = case.data.dmass_z.iter().flatten().sum();
    let lambda_scale = case.data.num_z.iter().flatten().sum::<f64>() / dm;
    let masses: Vec<f64> = sweep(lambda_scale)
        .iter()
        .map(|&lam| tight_ev.mass(lam).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    for k in 1..masses.len() {
        if masses[k] > masses[k - 1] + 1e-10 * case.mass_limit {
            return Err(format!("seed {seed}: M(Lambda) increases at sweep point {k}: {} -> {}", masses[k - 1], masses[k]));
        }
    }
    let sol = solve_lambda(&ev, case.mass_limit, 0.0).map_err(|e| e.to_string())?;
    let tol = params.bisection_tol;
    if sol.lambda < 0.0 {
        return Err(format!("seed {seed}: negative Lambda {}", sol.lambda));
    }
    if sol.mass > case.mass_limit * (1.0 + tol) {
        return Err(format!("seed {seed}: mass {} above budget {}", sol.mass, case.mass_limit));
    }
    if sol.lambda > 0.0 && (sol.mass - case.mass_limit).abs() > tol * case.mass_limit {
        return Err(format!(
            "seed {seed}: Lambda = {} > 0 but mass {} misses the budget {}",
            sol.lambda, sol.mass, case.mass_limit
        ));
    }
    let itol = params.inner_tol();
    for l in 0..ne {
        let s: f64 = (0..3).map(|i| sol.z[i][l]).sum();
        let mu = sol.mu[l];
        if mu < 0.0 || s > 1.0 + itol || (mu > 0.0 && (s - 1.0).abs() > itol) {
            return Err(format!("seed {seed}: element {l} violates complementarity: mu = {mu}, sum z = {s}"));
        }
    }
    Ok(())
}

/// Closed-form homogenized tensor of a rank-1 laminate with layers normal to
/// y: the normal block (yy, xy) combines harmonically, the tangential block
/// by partial inversion.
pub fn laminate_closed_form(a: &Tensor4, b: &Tensor4, fraction_a: f64) -> Tensor4 {
    let fs = [fraction_a, 1.0 - fraction_a];
    let mats = [*a.matrix(), *b.matrix()];
    let inv2 = |m: [[f64; 2]; 2]| {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
    };
    let mut nn_inv_mean = [[0.0; 2]; 2];
    let mut nn_inv_nt_mean = [0.0; 2];
    let mut schur_mean = 0.0;
    for (c, f) in mats.iter().zip(fs) {
        let nn = [[c[1][1], c[1][2]], [c[2][1], c[2][2]]];
        let nt = [c[1][0], c[2][0]];
        let inv = inv2(nn);
        let inv_nt = [inv[0][0] * nt[0] + inv[0][1] * nt[1], inv[1][0] * nt[0] + inv[1][1] * nt[1]];
        for r in 0..2 {
            for s in 0..2 {
                nn_inv_mean[r][s] += f * inv[r][s];
            }
            nn_inv_nt_mean[r] += f * inv_nt[r];
        }
        schur_mean += f * (c[0][0] - nt[0] * inv_nt[0] - nt[1] * inv_nt[1]);
    }
    let nn_star = inv2(nn_inv_mean);
    let nt_star = [
        nn_star[0][0] * nn_inv_nt_mean[0] + nn_star[0][1] * nn_inv_nt_mean[1],
        nn_star[1][0] * nn_inv_nt_mean[0] + nn_star[1][1] * nn_inv_nt_mean[1],
    ];
    let tt_star = schur_mean + nt_star[0] * nn_inv_nt_mean[0] + nt_star[1] * nn_inv_nt_mean[1];
    Tensor4::from_components(tt_star, nn_star[0][0], nt_star[0], nn_star[1][1], nt_star[1], nn_star[0][1])
}

/// Plane-strain isotropic Voigt matrix from Young's modulus and Poisson's ratio,
/// written out independently of the library.
pub fn plane_strain(young: f64, poisson: f64) -> Tensor4 {
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    Tensor4::orthotropic(lambda + 2.0 * mu, lambda + 2.0 * mu, lambda, mu)
}

struct GradientSetup {
    mesh: Mesh,
    classes: Vec<MaterialClass>,
    filter: FilterOperator,
    fem: FemModel,
}

/// Ten triangles, two classes: a tabulated class with free orientation
/// (period pi) and a fixed isotropic class.
fn setup() -> GradientSetup {
    let mut mesh = build_rect_mesh(5.0, 1.0, 5, 1).unwrap();
    assert_eq!(mesh.num_elements(), 10);
    mesh.fix_where(|p| p[0] < 1e-9, Fix::XY);
    mesh.add_point_load([5.0, 0.0], [0.3, -1.0]);
    mesh.add_point_load([3.0, 1.0], [0.0, -0.5]);
    let interval = DatabaseInterval {
        samples: [-0.2, 0.0, 0.2],
        tensors: [
            Tensor4::orthotropic(500.0, 200.0, 90.0, 60.0),
            Tensor4::orthotropic(665.5, 332.8, 142.6, 95.2),
            Tensor4::from_components(800.0, 420.0, 170.0, 120.0, 15.0, -10.0),
        ],
    };
    let db = Arc::new(HomogenizedDatabase::new("stripes", vec![interval]).unwrap());
    let classes = vec![
        MaterialClass::tabulated("stripes", db, 1.0, 0.1).unwrap().with_free_orientation(PI),
        MaterialClass::isotropic("iso", 300.0, 0.3, 0.5).unwrap(),
    ];
    let filter = build_filter(mesh.centroids(), mesh.areas(), 1.5);
    let fem = FemModel::new(&mesh, SolverKind::Cholesky).unwrap();
    GradientSetup {
        mesh,
        classes,
        filter,
        fem,
    }
}

fn random_control(ne: usize, seed: u64) -> Fields {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Fields::uniform(2, ne, &[0.4, 0.3], &[0.0, 0.0], &[0.0, 0.0]);
    for l in 0..ne {
        f.z[0][l] = rng.random_range(0.2..0.6);
        f.z[1][l] = rng.random_range(0.1..0.4);
        f.m[0][l] = rng.random_range(-0.15..0.15);
        // angles spread over a third of the period keep the circular means well defined
        f.theta[0][l] = rng.random_range(0.3..1.3);
    }
    f
}

fn compliance(s: &GradientSetup, control: &Fields, p: f64) -> f64 {
    let phys = filter_fields(&s.filter, &s.classes, control);
    s.fem.solve(&s.classes, &phys, p).unwrap().compliance
}

/// Analytic gradients `(dc/dz, dc/dm, dc/dtheta)` per class and element.
fn analytic(s: &GradientSetup, control: &Fields, p: f64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let phys = filter_fields(&s.filter, &s.classes, control);
    let st = s.fem.solve(&s.classes, &phys, p).unwrap();
    let sens = s.fem.sensitivities(&s.classes, &phys, p, &st.u);
    let gz = (0..2)
        .map(|i| s.filter.apply_transpose(&sens.s_z[i]).iter().map(|v| -v).collect())
        .collect();
    let gm = s.filter.apply_transpose(&sens.s_m[0]).iter().map(|v| -v).collect();
    let gt = s.filter.chain_rule_theta(&control.theta[0], PI, &sens.s_theta[0]);
    (gz, gm, gt)
}

fn central_difference(s: &GradientSetup, control: &Fields, p: f64, perturb: impl Fn(&mut Fields, f64)) -> f64 {
    let h = 1e-6;
    let mut plus = control.clone();
    perturb(&mut plus, h);
    let mut minus = control.clone();
    perturb(&mut minus, -h);
    (compliance(s, &plus, p) - compliance(s, &minus, p)) / (2.0 * h)
}

/// Largest per-component relative error, with a floor of `1e-6` times the
/// largest component for entries that vanish.
fn max_relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return f64::INFINITY;
    }
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / a.abs().max(1e-6 * scale))
        .fold(0.0, f64::max)
}

/// Worst relative error of the analytic gradient against central
/// differences for each variable family, on the 10-element two-class problem.
pub fn gradient_errors(p: f64, seed: u64) -> Vec<(String, f64)> {
    let s = setup();
    let ne = s.mesh.num_elements();
    let control = random_control(ne, seed);
    let (gz, gm, gt) = analytic(&s, &control, p);
    let mut out = Vec::new();
    for i in 0..2 {
        let fd: Vec<f64> = (0..ne)
            .map(|l| central_difference(&s, &control, p, |f, h| f.z[i][l] += h))
            .collect();
        out.push((format!("dc/dz_{i}"), max_relative_error(&gz[i], &fd)));
    }
    let fd: Vec<f64> = (0..ne)
        .map(|l| central_difference(&s, &control, p, |f, h| f.m[0][l] += h))
        .collect();
    out.push(("dc/dm".into(), max_relative_error(&gm, &fd)));
    let fd: Vec<f64> = (0..ne)
        .map(|l| central_difference(&s, &control, p, |f, h| f.theta[0][l] += h))
        .collect();
    out.push(("dc/dtheta".into(), max_relative_error(&gt, &fd)));
    out
}
