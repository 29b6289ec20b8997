//! P1 finite elements for plane linear elasticity with multimaterial,
//! anisotropic element stiffness, plus compliance sensitivities.

mod system;

use rayon::prelude::*;

pub use system::{PatternSolver, SolverKind, SparsePattern};

use crate::error::{Error, Result};
use crate::materials::{MaterialClass, Tensor4};
use crate::mesh::Mesh;

/// Per-class, per-element design variables, indexed `[class][element]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    pub z: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

impl Fields {
    pub fn uniform(n_classes: usize, n_elems: usize, z: &[f64], m: &[f64], theta: &[f64]) -> Self {
        Fields {
            z: (0..n_classes).map(|i| vec![z[i]; n_elems]).collect(),
            m: (0..n_classes).map(|i| vec![m[i]; n_elems]).collect(),
            theta: (0..n_classes).map(|i| vec![theta[i]; n_elems]).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.z.len()
    }

    pub fn num_elements(&self) -> usize {
        self.z.first().map_or(0, Vec::len)
    }
}

/// Control variables (what the optimizer updates) and their filtered,
/// physical counterparts (what the mechanics sees).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignField {
    pub control: Fields,
    pub physical: Fields,
}

/// Strain matrix of a P1 triangle acting on `(u1x, u1y, u2x, u2y, u3x, u3y)`
/// and producing `(e_xx, e_yy, 2 e_xy)`.
pub type BMatrix = [[f64; 6]; 3];

pub fn element_b_matrix(p: [[f64; 2]; 3]) -> (BMatrix, f64) {
    let [[x1, y1], [x2, y2], [x3, y3]] = p;
    let area2 = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1);
    let b = [y2 - y3, y3 - y1, y1 - y2];
    let c = [x3 - x2, x1 - x3, x2 - x1];
    let mut bm = [[0.0; 6]; 3];
    for i in 0..3 {
        bm[0][2 * i] = b[i] / area2;
        bm[1][2 * i + 1] = c[i] / area2;
        bm[2][2 * i] = c[i] / area2;
        bm[2][2 * i + 1] = b[i] / area2;
    }
    (bm, 0.5 * area2)
}

/// `area * B^T D B`, row-major 6x6.
pub fn element_stiffness(b: &BMatrix, area: f64, d: &Tensor4) -> [f64; 36] {
    let dm = d.matrix();
    let mut db = [[0.0; 6]; 3];
    for r in 0..3 {
        for j in 0..6 {
            db[r][j] = (0..3).map(|s| dm[r][s] * b[s][j]).sum();
        }
    }
    let mut k = [0.0; 36];
    for i in 0..6 {
        for j in 0..6 {
            k[i * 6 + j] = area * (0..3).map(|r| b[r][i] * db[r][j]).sum::<f64>();
        }
    }
    k
}

/// Interpolated element tensor `sum_i z_i^p Q(theta_i) E_i(m_i)` at one element.
pub fn element_tensor(classes: &[MaterialClass], phys: &Fields, p: f64, elem: usize) -> Tensor4 {
    let mut d = Tensor4::ZERO;
    for (i, class) in classes.iter().enumerate() {
        let e = oriented_stiffness(class, phys.m[i][elem], phys.theta[i][elem]);
        d += phys.z[i][elem].powf(p) * e;
    }
    d
}

fn oriented_stiffness(class: &MaterialClass, m: f64, theta: f64) -> Tensor4 {
    let e = class.stiffness(m);
    match class.period() {
        Some(_) => e.rotate(theta),
        None => e,
    }
}

/// Displacement solution of one equilibrium problem.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    /// Full displacement vector (`2 * num_nodes`, zeros on fixed dofs).
    pub u: Vec<f64>,
    pub compliance: f64,
}

/// Partial derivatives of the compliance *energy terms* with respect to the
/// physical variables, indexed `[class][element]`. The compliance derivative
/// is the negative of each entry.
#[derive(Debug, Clone)]
pub struct Sensitivities {
    pub s_z: Vec<Vec<f64>>,
    pub s_m: Vec<Vec<f64>>,
    pub s_theta: Vec<Vec<f64>>,
    /// Element strain energies `u_l^T K_l u_l`.
    pub element_energy: Vec<f64>,
}

/// Mesh-dependent finite element data: strain matrices, dof elimination,
/// sparsity pattern and the bound solver.
#[derive(Debug)]
pub struct FemModel {
    bmats: Vec<BMatrix>,
    areas: Vec<f64>,
    elem_dofs: Vec<[usize; 6]>,
    free_of: Vec<usize>,
    scatter: Vec<[usize; 36]>,
    load_full: Vec<f64>,
    load_reduced: Vec<f64>,
    solver: PatternSolver,
}

impl FemModel {
    pub fn new(mesh: &Mesh, kind: SolverKind) -> Result<Self> {
        let fixed = mesh.fixed_dofs();
        if fixed.is_empty() {
            return Err(Error::Setup("no Dirichlet boundary conditions; the problem is singular".into()));
        }
        let ndof = mesh.num_dofs();
        let mut free_of = vec![usize::MAX; ndof];
        let mut next = 0;
        let mut fixed_iter = fixed.iter().peekable();
        for (d, slot) in free_of.iter_mut().enumerate() {
            if fixed_iter.peek() == Some(&&d) {
                fixed_iter.next();
            } else {
                *slot = next;
                next += 1;
            }
        }
        let elem_dofs: Vec<[usize; 6]> = mesh
            .triangles()
            .iter()
            .map(|t| [2 * t[0], 2 * t[0] + 1, 2 * t[1], 2 * t[1] + 1, 2 * t[2], 2 * t[2] + 1])
            .collect();
        let reduced: Vec<[usize; 6]> = elem_dofs.iter().map(|d| d.map(|g| free_of[g])).collect();
        let pattern = SparsePattern::from_elements(next, &reduced);
        let scatter = pattern.scatter_map::<6, 36>(&reduced);
        let mut bmats = Vec::with_capacity(mesh.num_elements());
        let mut areas = Vec::with_capacity(mesh.num_elements());
        for t in mesh.triangles() {
            let (b, a) = element_b_matrix(t.map(|v| mesh.nodes()[v]));
            bmats.push(b);
            areas.push(a);
        }
        let load_full = mesh.load_vector();
        let load_reduced = (0..ndof)
            .filter(|&d| free_of[d] != usize::MAX)
            .map(|d| load_full[d])
            .collect();
        let solver = PatternSolver::new(pattern, kind)?;
        Ok(FemModel {
            bmats,
            areas,
            elem_dofs,
            free_of,
            scatter,
            load_full,
            load_reduced,
            solver,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.bmats.len()
    }

    pub fn num_free_dofs(&self) -> usize {
        self.solver.pattern().n
    }

    pub fn load(&self) -> &[f64] {
        &self.load_full
    }

    /// Element tensors for the physical design at penalization `p`.
    pub fn element_tensors(&self, classes: &[MaterialClass], phys: &Fields, p: f64) -> Vec<Tensor4> {
        (0..self.num_elements())
            .into_par_iter()
            .map(|l| element_tensor(classes, phys, p, l))
            .collect()
    }

    /// Reduced stiffness values for the given element tensors.
    pub fn assemble(&self, tensors: &[Tensor4]) -> Vec<f64> {
        let locals: Vec<[f64; 36]> = (0..self.num_elements())
            .into_par_iter()
            .map(|l| element_stiffness(&self.bmats[l], self.areas[l], &tensors[l]))
            .collect();
        // sequential scatter keeps the summation order fixed
        let mut values = vec![0.0; self.solver.pattern().nnz()];
        for (ke, map) in locals.iter().zip(&self.scatter) {
            for k in 0..36 {
                if map[k] != usize::MAX {
                    values[map[k]] += ke[k];
                }
            }
        }
        values
    }

    pub fn solve_tensors(&self, tensors: &[Tensor4]) -> Result<Equilibrium> {
        let values = self.assemble(tensors);
        let x = self.solver.solve(&values, std::slice::from_ref(&self.load_reduced))?;
        let mut u = vec![0.0; self.free_of.len()];
        for (g, &r) in self.free_of.iter().enumerate() {
            if r != usize::MAX {
                u[g] = x[0][r];
            }
        }
        let compliance = u.iter().zip(&self.load_full).map(|(a, b)| a * b).sum();
        Ok(Equilibrium { u, compliance })
    }

    /// Assembles and solves `K(design) u = f`.
    pub fn solve(&self, classes: &[MaterialClass], phys: &Fields, p: f64) -> Result<Equilibrium> {
        let tensors = self.element_tensors(classes, phys, p);
        self.solve_tensors(&tensors)
    }

    /// Engineering strains `(e_xx, e_yy, 2 e_xy)` per element.
    pub fn element_strains(&self, u: &[f64]) -> Vec<[f64; 3]> {
        self.bmats
            .iter()
            .zip(&self.elem_dofs)
            .map(|(b, dofs)| {
                let mut g = [0.0; 3];
                for r in 0..3 {
                    g[r] = (0..6).map(|j| b[r][j] * u[dofs[j]]).sum();
                }
                g
            })
            .collect()
    }

    /// Compliance sensitivities with respect to the physical variables.
    pub fn sensitivities(&self, classes: &[MaterialClass], phys: &Fields, p: f64, u: &[f64]) -> Sensitivities {
        let strains = self.element_strains(u);
        let n = classes.len();
        let per_elem: Vec<(Vec<[f64; 3]>, f64)> = (0..self.num_elements())
            .into_par_iter()
            .map(|l| {
                let g = strains[l];
                let a = self.areas[l];
                let mut out = Vec::with_capacity(n);
                let mut energy = 0.0;
                for (i, class) in classes.iter().enumerate() {
                    let z = phys.z[i][l];
                    let m = phys.m[i][l];
                    let th = phys.theta[i][l];
                    let zp = z.powf(p);
                    let (qe, qde, dqe) = match class.period() {
                        Some(_) => {
                            let e = class.stiffness(m);
                            (
                                e.rotate(th),
                                if class.is_parametrized() {
                                    class.stiffness_derivative(m).rotate(th)
                                } else {
                                    Tensor4::ZERO
                                },
                                e.rotate_derivative(th),
                            )
                        }
                        None => (
                            class.stiffness(m),
                            if class.is_parametrized() {
                                class.stiffness_derivative(m)
                            } else {
                                Tensor4::ZERO
                            },
                            Tensor4::ZERO,
                        ),
                    };
                    let w = a * qe.energy(g);
                    energy += zp * w;
                    out.push([
                        p * z.powf(p - 1.0) * w,
                        zp * a * qde.energy(g),
                        zp * a * dqe.energy(g),
                    ]);
                }
                (out, energy)
            })
            .collect();
        let mut s = Sensitivities {
            s_z: vec![vec![0.0; self.num_elements()]; n],
            s_m: vec![vec![0.0; self.num_elements()]; n],
            s_theta: vec![vec![0.0; self.num_elements()]; n],
            element_energy: Vec::with_capacity(self.num_elements()),
        };
        for (l, (vals, e)) in per_elem.into_iter().enumerate() {
            for (i, v) in vals.into_iter().enumerate() {
                s.s_z[i][l] = v[0];
                s.s_m[i][l] = v[1];
                s.s_theta[i][l] = v[2];
            }
            s.element_energy.push(e);
        }
        s
    }
}

/// `sum_i sum_l |e_l| z_il rho_i(m_il)` for the physical fields.
pub fn total_mass(mesh: &Mesh, classes: &[MaterialClass], phys: &Fields) -> f64 {
    let areas = mesh.areas();
    let mut total = 0.0;
    for (i, c) in classes.iter().enumerate() {
        for l in 0..areas.len() {
            total += areas[l] * phys.z[i][l] * c.density(phys.m[i][l]);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, Fix};

    #[test]
    fn b_matrix_reproduces_affine_strain() {
        let p = [[0.1, 0.2], [1.3, 0.1], [0.4, 1.1]];
        let (b, area) = element_b_matrix(p);
        assert!(area > 0.0);
        // u = (a x + c y, d x + e y) has strain (a, e, c + d)
        let (a, c, d, e) = (0.3, -0.7, 0.25, 1.1);
        let mut u = [0.0; 6];
        for i in 0..3 {
            u[2 * i] = a * p[i][0] + c * p[i][1];
            u[2 * i + 1] = d * p[i][0] + e * p[i][1];
        }
        let g: Vec<f64> = (0..3).map(|r| (0..6).map(|j| b[r][j] * u[j]).sum()).collect();
        assert!((g[0] - a).abs() < 1e-14);
        assert!((g[1] - e).abs() < 1e-14);
        assert!((g[2] - (c + d)).abs() < 1e-14);
    }

    #[test]
    fn element_stiffness_has_rigid_modes() {
        let p = [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9]];
        let (b, area) = element_b_matrix(p);
        let k = element_stiffness(&b, area, &Tensor4::isotropic(10.0, 0.25).unwrap());
        let modes = [
            [1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            [-p[0][1], p[0][0], -p[1][1], p[1][0], -p[2][1], p[2][0]],
        ];
        for mode in modes {
            for i in 0..6 {
                let r: f64 = (0..6).map(|j| k[i * 6 + j] * mode[j]).sum();
                assert!(r.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unconstrained_problem_is_rejected() {
        let mut mesh = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        mesh.add_point_load([1.0, 1.0], [0.0, -1.0]);
        assert!(matches!(FemModel::new(&mesh, SolverKind::Cholesky), Err(Error::Setup(_))));
        // a single fixed component leaves rigid modes
        mesh.fix_nearest([0.0, 0.0], Fix::X);
        let fem = FemModel::new(&mesh, SolverKind::Cholesky).unwrap();
        let classes = vec![MaterialClass::isotropic("a", 1.0, 0.3, 1.0).unwrap()];
        let phys = Fields::uniform(1, mesh.num_elements(), &[1.0], &[0.0], &[0.0]);
        assert!(matches!(fem.solve(&classes, &phys, 1.0), Err(Error::Solver(_))));
    }
}
