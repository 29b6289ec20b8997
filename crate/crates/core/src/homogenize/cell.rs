//! Periodic cell problems on a pixel grid with bilinear elements and the
//! resulting homogenized stiffness.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{PatternSolver, SolverKind, SparsePattern};
use crate::linalg::{inv3, Mat3};
use crate::materials::Tensor4;

/// Unit macroscopic strains in engineering form, in the order xx, yy, xy.
pub const STRAIN_BASIS: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

const CELL_RESIDUAL_TOL: f64 = 1e-9;

/// One constant stiffness tensor per pixel of a periodic `nx x ny` grid,
/// stored row by row like the phase field.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessField {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub tensors: Vec<Tensor4>,
}

impl StiffnessField {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, tensors: Vec<Tensor4>) -> Result<Self> {
        if nx < 2 || ny < 2 || tensors.len() != nx * ny || !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stiffness field {nx}x{ny} on {lx}x{ly} with {} tensors (need at least 2x2)",
                tensors.len()
            )));
        }
        Ok(StiffnessField { nx, ny, lx, ly, tensors })
    }

    pub fn uniform(nx: usize, ny: usize, lx: f64, ly: f64, c: Tensor4) -> Result<Self> {
        Self::new(nx, ny, lx, ly, vec![c; nx * ny])
    }

    /// Arithmetic mean of the pixel tensors (upper bound).
    pub fn voigt_bound(&self) -> Tensor4 {
        let mut s = Tensor4::ZERO;
        for t in &self.tensors {
            s += *t;
        }
        (1.0 / self.tensors.len() as f64) * s
    }

    /// Inverse of the mean compliance (lower bound).
    pub fn reuss_bound(&self) -> Result<Tensor4> {
        let mut s: Mat3 = [[0.0; 3]; 3];
        for t in &self.tensors {
            let inv = t
                .inverse_matrix()
                .ok_or_else(|| Error::Numerical("singular pixel stiffness".into()))?;
            for a in 0..3 {
                for b in 0..3 {
                    s[a][b] += inv[a][b] / self.tensors.len() as f64;
                }
            }
        }
        let c = inv3(&s).ok_or_else(|| Error::Numerical("singular mean compliance".into()))?;
        Ok(Tensor4::from_matrix(c))
    }
}

/// Element integrals of the bilinear pixel element of size `hx x hy`
/// (2x2 Gauss rule). Local nodes are (0,0), (hx,0), (hx,hy), (0,hy); local
/// dofs interleave x and y.
struct PixelElement {
    /// `k[a][b] = int B_a^T B_b` for strain rows `a`, `b`, so that the
    /// element matrix is `sum_ab D_ab k[a][b]`.
    k: [[[[f64; 8]; 8]; 3]; 3],
    /// `int B`.
    bbar: [[f64; 8]; 3],
    area: f64,
}

impl PixelElement {
    fn new(hx: f64, hy: f64) -> Self {
        let g = 1.0 / 3f64.sqrt();
        let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
        let w = 0.25 * hx * hy;
        let mut k = [[[[0.0; 8]; 8]; 3]; 3];
        let mut bbar = [[0.0; 8]; 3];
        for &(xi, eta) in &[(-g, -g), (g, -g), (g, g), (-g, g)] {
            let mut b = [[0.0; 8]; 3];
            for (n, &(cx, cy)) in corners.iter().enumerate() {
                let dx = 0.25 * cx * (1.0 + cy * eta) * 2.0 / hx;
                let dy = 0.25 * cy * (1.0 + cx * xi) * 2.0 / hy;
                b[0][2 * n] = dx;
                b[1][2 * n + 1] = dy;
                b[2][2 * n] = dy;
                b[2][2 * n + 1] = dx;
            }
            for a in 0..3 {
                for i in 0..8 {
                    bbar[a][i] += w * b[a][i];
                }
                for c in 0..3 {
                    for i in 0..8 {
                        for j in 0..8 {
                            k[a][c][i][j] += w * b[a][i] * b[c][j];
                        }
                    }
                }
            }
        }
        PixelElement { k, bbar, area: hx * hy }
    }

    fn stiffness(&self, d: &Tensor4) -> [[f64; 8]; 8] {
        let dm = d.matrix();
        let mut ke = [[0.0; 8]; 8];
        for a in 0..3 {
            for c in 0..3 {
                let s = dm[a][c];
                if s == 0.0 {
                    continue;
                }
                for i in 0..8 {
                    for j in 0..8 {
                        ke[i][j] += s * self.k[a][c][i][j];
                    }
                }
            }
        }
        ke
    }

    /// `int B^T D e` for a constant strain `e`.
    fn load(&self, d: &Tensor4, e: [f64; 3]) -> [f64; 8] {
        let s = d.stress(e);
        let mut f = [0.0; 8];
        for i in 0..8 {
            f[i] = (0..3).map(|a| self.bbar[a][i] * s[a]).sum();
        }
        f
    }
}

/// Assembled and factorized periodic cell problem. Node `(i, j)` is the pixel
/// corner at `(i hx, j hy)`; node 0 is pinned to remove the rigid
/// translations, and correctors are shifted to zero mean afterwards.
pub struct CellProblem {
    field: StiffnessField,
    element: PixelElement,
    elem_nodes: Vec<[usize; 4]>,
    elem_dofs: Vec<[usize; 8]>,
    values: Vec<f64>,
    solver: PatternSolver,
}

impl std::fmt::Debug for CellProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CellProblem")
            .field("nx", &self.field.nx)
            .field("ny", &self.field.ny)
            .finish()
    }
}

impl CellProblem {
    pub fn new(field: StiffnessField) -> Result<Self> {
        if let Some(l) = field.tensors.iter().position(|t| !t.is_positive_definite()) {
            return Err(Error::InvalidArgument(format!(
                "pixel {l} has a stiffness tensor that is not positive definite"
            )));
        }
        let (nx, ny) = (field.nx, field.ny);
        let element = PixelElement::new(field.lx / nx as f64, field.ly / ny as f64);
        let node = |i: usize, j: usize| (j % ny) * nx + (i % nx);
        let elem_nodes: Vec<[usize; 4]> = (0..nx * ny)
            .map(|e| {
                let (i, j) = (e % nx, e / nx);
                [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]
            })
            .collect();
        let reduced = |dof: usize| if dof < 2 { usize::MAX } else { dof - 2 };
        let elem_dofs: Vec<[usize; 8]> = elem_nodes
            .iter()
            .map(|ns| {
                let mut d = [0; 8];
                for (k, &n) in ns.iter().enumerate() {
                    d[2 * k] = reduced(2 * n);
                    d[2 * k + 1] = reduced(2 * n + 1);
                }
                d
            })
            .collect();
        let ndof = 2 * nx * ny - 2;
        let pattern = SparsePattern::from_elements(ndof, &elem_dofs);
        let scatter: Vec<[usize; 64]> = pattern.scatter_map(&elem_dofs);
        let local: Vec<[[f64; 8]; 8]> = field.tensors.par_iter().map(|d| element.stiffness(d)).collect();
        let mut values = vec![0.0; pattern.nnz()];
        for (ke, map) in local.iter().zip(&scatter) {
            for i in 0..8 {
                for j in 0..8 {
                    let p = map[i * 8 + j];
                    if p != usize::MAX {
                        values[p] += ke[i][j];
                    }
                }
            }
        }
        let solver = PatternSolver::new(pattern, SolverKind::Cholesky)?;
        Ok(CellProblem {
            field,
            element,
            elem_nodes,
            elem_dofs,
            values,
            solver,
        })
    }

    pub fn field(&self) -> &StiffnessField {
        &self.field
    }

    /// Correctors for the given macroscopic strains, as full nodal vectors
    /// `[w_x(node 0), w_y(node 0), ...]` with zero mean.
    pub fn solve(&self, strains: &[[f64; 3]]) -> Result<Vec<Vec<f64>>> {
        let ndof = self.solver.pattern().n;
        let rhs: Vec<Vec<f64>> = strains
            .iter()
            .map(|&e| {
                let mut f = vec![0.0; ndof];
                for (d, dofs) in self.field.tensors.iter().zip(&self.elem_dofs) {
                    let fe = self.element.load(d, e);
                    for k in 0..8 {
                        if dofs[k] != usize::MAX {
                            f[dofs[k]] -= fe[k];
                        }
                    }
                }
                f
            })
            .collect();
        let sols = self.solver.solve(&self.values, &rhs)?;
        let mut ax = vec![0.0; ndof];
        let nn = self.field.nx * self.field.ny;
        let mut out = Vec::with_capacity(sols.len());
        for (x, b) in sols.into_iter().zip(&rhs) {
            self.solver.pattern().matvec(&self.values, &x, &mut ax);
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let rn = ax.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if bn > 0.0 && rn > CELL_RESIDUAL_TOL * bn {
                return Err(Error::Solver(format!(
                    "cell problem residual {:.3e} exceeds {CELL_RESIDUAL_TOL:e}",
                    rn / bn
                )));
            }
            let mut w = vec![0.0; 2 * nn];
            w[2..].copy_from_slice(&x);
            let (mx, my) = w
                .chunks_exact(2)
                .fold((0.0, 0.0), |(a, b), c| (a + c[0], b + c[1]));
            for c in w.chunks_exact_mut(2) {
                c[0] -= mx / nn as f64;
                c[1] -= my / nn as f64;
            }
            out.push(w);
        }
        Ok(out)
    }

    /// `(1/|Y|) int D (e_a + sym grad w_a) : (e_b + sym grad w_b)`.
    pub fn energy_product(&self, ea: [f64; 3], wa: &[f64], eb: [f64; 3], wb: &[f64]) -> f64 {
        let total: f64 = (0..self.field.tensors.len())
            .into_par_iter()
            .map(|e| {
                let d = &self.field.tensors[e];
                let mut ua = [0.0; 8];
                let mut ub = [0.0; 8];
                for (k, &n) in self.elem_nodes[e].iter().enumerate() {
                    ua[2 * k] = wa[2 * n];
                    ua[2 * k + 1] = wa[2 * n + 1];
                    ub[2 * k] = wb[2 * n];
                    ub[2 * k + 1] = wb[2 * n + 1];
                }
                let ke = self.element.stiffness(d);
                let mut kub = [0.0; 8];
                for i in 0..8 {
                    kub[i] = (0..8).map(|j| ke[i][j] * ub[j]).sum();
                }
                let fa = self.element.load(d, ea);
                let fb = self.element.load(d, eb);
                let mut s = self.element.area * d.bilinear(ea, eb);
                for i in 0..8 {
                    s += fa[i] * ub[i] + fb[i] * ua[i] + ua[i] * kub[i];
                }
                s
            })
            .sum();
        total / (self.field.lx * self.field.ly)
    }
}

/// Stiffness field together with the three correctors of the unit strains.
#[derive(Debug)]
pub struct CellElasticity {
    pub problem: CellProblem,
    pub correctors: [Vec<f64>; 3],
}

impl CellElasticity {
    pub fn solve(field: StiffnessField) -> Result<Self> {
        let problem = CellProblem::new(field)?;
        let mut w = problem.solve(&STRAIN_BASIS)?.into_iter();
        let correctors = [w.next().unwrap(), w.next().unwrap(), w.next().unwrap()];
        Ok(CellElasticity { problem, correctors })
    }
}

/// Corrector for one unit strain (`ij` = 0, 1, 2 for xx, yy, xy).
pub fn solve_cell_problem(field: &StiffnessField, ij: usize) -> Result<Vec<f64>> {
    if ij > 2 {
        return Err(Error::InvalidArgument(format!("strain index {ij} out of range 0..3")));
    }
    let problem = CellProblem::new(field.clone())?;
    Ok(problem.solve(&[STRAIN_BASIS[ij]])?.pop().unwrap())
}

pub fn homogenized_tensor(cell: &CellElasticity) -> Tensor4 {
    let mut c: Mat3 = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let v = cell
                .problem
                .energy_product(STRAIN_BASIS[a], &cell.correctors[a], STRAIN_BASIS[b], &cell.correctors[b]);
            c[a][b] = v;
            c[b][a] = v;
        }
    }
    Tensor4::from_matrix(c)
}

/// Homogenized tensor of a stiffness field.
pub fn homogenize_field(field: StiffnessField) -> Result<Tensor4> {
    Ok(homogenized_tensor(&CellElasticity::solve(field)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_cell_reproduces_pointwise_tensor() {
        let c = Tensor4::isotropic(1000.0, 0.3).unwrap();
        let f = StiffnessField::uniform(6, 5, 1.0, 0.8, c).unwrap();
        let cell = CellElasticity::solve(f).unwrap();
        for w in &cell.correctors {
            assert!(w.iter().all(|v| v.abs() < 1e-12));
        }
        assert!(homogenized_tensor(&cell).relative_difference(&c) < 1e-12);
    }

    #[test]
    fn element_matrix_annihilates_translations() {
        let el = PixelElement::new(0.5, 0.25);
        let ke = el.stiffness(&Tensor4::isotropic(1.0, 0.25).unwrap());
        for i in 0..8 {
            let sx: f64 = (0..4).map(|n| ke[i][2 * n]).sum();
            let sy: f64 = (0..4).map(|n| ke[i][2 * n + 1]).sum();
            assert!(sx.abs() < 1e-13 && sy.abs() < 1e-13);
        }
    }

    #[test]
    fn bounds_bracket_two_phase_cell() {
        let a = Tensor4::isotropic(1000.0, 0.3).unwrap();
        let b = Tensor4::isotropic(100.0, 0.3).unwrap();
        let n = 8;
        let t = (0..n * n)
            .map(|k| if (k % n + k / n) % 3 == 0 { a } else { b })
            .collect();
        let f = StiffnessField::new(n, n, 1.0, 1.0, t).unwrap();
        let e = homogenize_field(f.clone()).unwrap();
        assert!(f.reuss_bound().unwrap().loewner_le(&e, 1e-10));
        assert!(e.loewner_le(&f.voigt_bound(), 1e-10));
    }
}
