//! Reduced sparse stiffness pattern and the linear solvers.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Linear solver used for the equilibrium systems.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverKind {
    /// Sparse Cholesky with a fill-reducing ordering computed once per pattern.
    #[default]
    Cholesky,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient { rel_tol: f64, max_iter: usize },
}

/// Symmetric sparse matrix pattern in compressed-row form (full, both
/// triangles). Because the matrix is symmetric the same arrays also describe
/// it in compressed-column form.
#[derive(Debug, Clone)]
pub struct SparsePattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl SparsePattern {
    /// Builds the pattern from element dof lists; entries `usize::MAX` are skipped.
    pub fn from_elements<const K: usize>(n: usize, elems: &[[usize; K]]) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for dofs in elems {
            for &a in dofs {
                if a == usize::MAX {
                    continue;
                }
                for &b in dofs {
                    if b != usize::MAX {
                        rows[a].push(b);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        SparsePattern { n, row_ptr, col_idx }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Position of entry `(row, col)` in the value array.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        self.col_idx[lo..hi].binary_search(&col).ok().map(|k| lo + k)
    }

    /// Scatter map from local element matrix entries (row-major) to value
    /// positions; `usize::MAX` where the row or column is eliminated.
    pub fn scatter_map<const K: usize, const KK: usize>(&self, elems: &[[usize; K]]) -> Vec<[usize; KK]> {
        assert_eq!(K * K, KK);
        elems
            .iter()
            .map(|dofs| {
                let mut map = [usize::MAX; KK];
                for a in 0..K {
                    for b in 0..K {
                        if dofs[a] != usize::MAX && dofs[b] != usize::MAX {
                            map[a * K + b] = self.position(dofs[a], dofs[b]).expect("entry in pattern");
                        }
                    }
                }
                map
            })
            .collect()
    }

    pub fn matvec(&self, values: &[f64], x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += values[k] * x[self.col_idx[k]];
            }
            y[r] = s;
        }
    }

    pub fn diagonal(&self, values: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.position(r, r).map_or(0.0, |k| values[k]))
            .collect()
    }
}

/// A solver bound to one sparsity pattern. For Cholesky the symbolic
/// factorization (ordering and elimination tree) is computed once here and
/// reused for every numeric factorization.
pub struct PatternSolver {
    pattern: SparsePattern,
    kind: SolverKind,
    symbolic: Option<(SymbolicSparseColMat<usize>, SymbolicLlt<usize>)>,
}

impl std::fmt::Debug for PatternSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PatternSolver")
            .field("n", &self.pattern.n)
            .field("nnz", &self.pattern.nnz())
            .field("kind", &self.kind)
            .finish()
    }
}

impl PatternSolver {
    pub fn new(pattern: SparsePattern, kind: SolverKind) -> Result<Self> {
        let symbolic = match kind {
            SolverKind::Cholesky => {
                let sym = SymbolicSparseColMat::new_checked(
                    pattern.n,
                    pattern.n,
                    pattern.row_ptr.clone(),
                    None,
                    pattern.col_idx.clone(),
                );
                let llt = SymbolicLlt::try_new(sym.as_ref(), Side::Lower)
                    .map_err(|e| Error::Solver(format!("symbolic factorization failed: {e:?}")))?;
                Some((sym, llt))
            }
            SolverKind::ConjugateGradient { .. } => None,
        };
        Ok(PatternSolver {
            pattern,
            kind,
            symbolic,
        })
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    /// Solves `K x = b` for each right-hand side. Cholesky solves get one
    /// step of iterative refinement and fail if the matrix is not positive
    /// definite or the normwise backward error
    /// `|b - Kx| / (|K| |x| + |b|)` (infinity norms) exceeds `1e-9`.
    pub fn solve(&self, values: &[f64], rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.pattern.n;
        match (&self.kind, &self.symbolic) {
            (SolverKind::Cholesky, Some((sym, llt_sym))) => {
                let mat = SparseColMatRef::new(sym.as_ref(), values);
                let llt = Llt::try_new_with_symbolic(llt_sym.clone(), mat, Side::Lower).map_err(|e| {
                    Error::Solver(format!(
                        "stiffness matrix is not positive definite ({e:?}); check that rigid-body motions are constrained"
                    ))
                })?;
                let solve = |cols: &[Vec<f64>]| -> Vec<Vec<f64>> {
                    let mut b = Mat::<f64>::from_fn(n, cols.len(), |i, j| cols[j][i]);
                    llt.solve_in_place(b.as_mut());
                    (0..cols.len()).map(|j| (0..n).map(|i| b[(i, j)]).collect()).collect()
                };
                let mut sols = solve(rhs);
                let residual = |x: &[f64], b: &[f64]| -> Vec<f64> {
                    let mut ax = vec![0.0; n];
                    self.pattern.matvec(values, x, &mut ax);
                    b.iter().zip(&ax).map(|(b, a)| b - a).collect()
                };
                let res: Vec<Vec<f64>> = sols.iter().zip(rhs).map(|(x, b)| residual(x, b)).collect();
                for (x, d) in sols.iter_mut().zip(solve(&res)) {
                    for (xi, di) in x.iter_mut().zip(d) {
                        *xi += di;
                    }
                }
                let k_norm = self.inf_norm(values);
                for (x, b) in sols.iter().zip(rhs) {
                    if x.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Solver("solution contains non-finite values".into()));
                    }
                    let rn = inf(&residual(x, b));
                    let scale = k_norm * inf(x) + inf(b);
                    if scale > 0.0 && rn > 1e-9 * scale {
                        return Err(Error::Solver(format!(
                            "backward error {:.3e} too large; the system is singular or ill-conditioned",
                            rn / scale
                        )));
                    }
                }
                Ok(sols)
            }
            (SolverKind::ConjugateGradient { rel_tol, max_iter }, _) => rhs
                .iter()
                .map(|b| pcg(&self.pattern, values, b, *rel_tol, *max_iter))
                .collect(),
            _ => unreachable!("Cholesky solver always carries a symbolic factorization"),
        }
    }

    /// Largest absolute row sum.
    fn inf_norm(&self, values: &[f64]) -> f64 {
        (0..self.pattern.n)
            .map(|r| values[self.pattern.row_ptr[r]..self.pattern.row_ptr[r + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(p: &SparsePattern, values: &[f64], b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = p.n;
    let diag = p.diagonal(values);
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Solver("non-positive diagonal entry; matrix is not positive definite".into()));
    }
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for _ in 0..max_iter {
        p.matvec(values, &d, &mut q);
        let dq = dot(&d, &q);
        if !(dq > 0.0) {
            return Err(Error::Solver("conjugate gradients broke down; matrix is not positive definite".into()));
        }
        let alpha = rz / dq;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * q[i];
        }
        if norm(&r) <= rel_tol * bn {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
    }
    Err(Error::Solver(format!(
        "conjugate gradients did not reach relative residual {rel_tol:e} in {max_iter} iterations"
    )))
}
