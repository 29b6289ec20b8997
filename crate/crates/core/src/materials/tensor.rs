use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inv3, sym3_eigenvalues, Mat3};

/// Pair index of the strain/stress components in the order (xx, yy, xy).
const PAIR: [[usize; 2]; 2] = [[0, 2], [2, 1]];

/// Full 2D fourth-order elasticity tensor indexed `[i][j][k][l]`.
pub type Full4 = [[[[f64; 2]; 2]; 2]; 2];

/// Fourth-order 2D stiffness tensor with major and minor symmetries.
///
/// Stored as the symmetric 3x3 array `C[a][b]` of tensor components over the
/// index pairs (xx, yy, xy), i.e. entry `[0][2]` is `C_xxxy`. Acting on the
/// engineering strain vector `(e_xx, e_yy, 2 e_xy)` this is the usual Voigt
/// stiffness matrix: stress = `C * gamma` and energy density = `gamma^T C gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "TensorRepr", into = "TensorRepr")]
pub struct Tensor4 {
    c: Mat3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRepr {
    xxxx: f64,
    yyyy: f64,
    xxyy: f64,
    xyxy: f64,
    #[serde(default)]
    xxxy: f64,
    #[serde(default)]
    yyxy: f64,
}

impl From<TensorRepr> for Tensor4 {
    fn from(r: TensorRepr) -> Self {
        Tensor4::from_components(r.xxxx, r.yyyy, r.xxyy, r.xyxy, r.xxxy, r.yyxy)
    }
}

impl From<Tensor4> for TensorRepr {
    fn from(t: Tensor4) -> Self {
        TensorRepr {
            xxxx: t.xxxx(),
            yyyy: t.yyyy(),
            xxyy: t.xxyy(),
            xyxy: t.xyxy(),
            xxxy: t.xxxy(),
            yyxy: t.yyxy(),
        }
    }
}

impl Tensor4 {
    pub const ZERO: Tensor4 = Tensor4 { c: [[0.0; 3]; 3] };

    pub fn from_components(xxxx: f64, yyyy: f64, xxyy: f64, xyxy: f64, xxxy: f64, yyxy: f64) -> Self {
        Tensor4 {
            c: [[xxxx, xxyy, xxxy], [xxyy, yyyy, yyxy], [xxxy, yyxy, xyxy]],
        }
    }

    /// Orthotropic tensor aligned with the axes.
    pub fn orthotropic(xxxx: f64, yyyy: f64, xxyy: f64, xyxy: f64) -> Self {
        Self::from_components(xxxx, yyyy, xxyy, xyxy, 0.0, 0.0)
    }

    /// Builds from a 3x3 matrix, symmetrizing it.
    pub fn from_matrix(m: Mat3) -> Self {
        let mut c = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                c[a][b] = 0.5 * (m[a][b] + m[b][a]);
            }
        }
        Tensor4 { c }
    }

    /// Isotropic tensor from the Lamé parameters.
    pub fn from_lame(lambda: f64, mu: f64) -> Self {
        Self::orthotropic(lambda + 2.0 * mu, lambda + 2.0 * mu, lambda, mu)
    }

    /// Plane-strain isotropic tensor from Young's modulus and Poisson ratio.
    pub fn isotropic(young: f64, poisson: f64) -> Result<Self> {
        if !(young > 0.0) || !young.is_finite() {
            return Err(Error::OutOfRange {
                what: "Young's modulus".into(),
                value: young,
                lower: 0.0,
                upper: f64::INFINITY,
            });
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::OutOfRange {
                what: "Poisson ratio".into(),
                value: poisson,
                lower: -1.0,
                upper: 0.5,
            });
        }
        let (lambda, mu) = lame_plane_strain(young, poisson);
        Ok(Self::from_lame(lambda, mu))
    }

    pub fn xxxx(&self) -> f64 {
        self.c[0][0]
    }
    pub fn yyyy(&self) -> f64 {
        self.c[1][1]
    }
    pub fn xxyy(&self) -> f64 {
        self.c[0][1]
    }
    pub fn xyxy(&self) -> f64 {
        self.c[2][2]
    }
    pub fn xxxy(&self) -> f64 {
        self.c[0][2]
    }
    pub fn yyxy(&self) -> f64 {
        self.c[1][2]
    }

    /// The 3x3 (Voigt, engineering shear) matrix.
    pub fn matrix(&self) -> &Mat3 {
        &self.c
    }

    /// Mandel form `S C S` with `S = diag(1, 1, sqrt 2)`; its eigenvalues are
    /// the eigenvalues of the tensor as a map on symmetric 2x2 tensors.
    pub fn mandel(&self) -> Mat3 {
        let s = [1.0, 1.0, std::f64::consts::SQRT_2];
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = s[a] * self.c[a][b] * s[b];
            }
        }
        m
    }

    /// Tensor eigenvalues (ascending), invariant under rotation.
    pub fn eigenvalues(&self) -> [f64; 3] {
        sym3_eigenvalues(&self.mandel())
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues()[0] > 0.0
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.c[PAIR[i][j]][PAIR[k][l]]
    }

    pub fn to_full(&self) -> Full4 {
        let mut f = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        f[i][j][k][l] = self.get(i, j, k, l);
                    }
                }
            }
        }
        f
    }

    /// Reads the (xx, yy, xy) components of a full tensor, averaging the
    /// entries that minor symmetry identifies.
    pub fn from_full(f: &Full4) -> Self {
        let pairs = [[[0, 0]], [[1, 1]], [[0, 1]]];
        let mut c = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let [i, j] = pairs[a][0];
                let [k, l] = pairs[b][0];
                let v = 0.25 * (f[i][j][k][l] + f[j][i][k][l] + f[i][j][l][k] + f[j][i][l][k]);
                let w = 0.25 * (f[k][l][i][j] + f[l][k][i][j] + f[k][l][j][i] + f[l][k][j][i]);
                c[a][b] = 0.5 * (v + w);
            }
        }
        Tensor4 { c }
    }

    /// Stress `(s_xx, s_yy, s_xy)` from engineering strain `(e_xx, e_yy, 2 e_xy)`.
    pub fn stress(&self, gamma: [f64; 3]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for a in 0..3 {
            s[a] = (0..3).map(|b| self.c[a][b] * gamma[b]).sum();
        }
        s
    }

    /// `C : e : e` for engineering strain `gamma`.
    pub fn energy(&self, gamma: [f64; 3]) -> f64 {
        let s = self.stress(gamma);
        s[0] * gamma[0] + s[1] * gamma[1] + s[2] * gamma[2]
    }

    /// Bilinear form `C : a : b` for engineering strains.
    pub fn bilinear(&self, a: [f64; 3], b: [f64; 3]) -> f64 {
        let s = self.stress(a);
        s[0] * b[0] + s[1] * b[1] + s[2] * b[2]
    }

    /// `Q(theta) C`: components `R_ip R_jq R_kr R_ls C_pqrs` with `R` the
    /// counter-clockwise rotation by `theta`.
    pub fn rotate(&self, theta: f64) -> Self {
        let r = rotation(theta);
        Self::from_full(&transform(&self.to_full(), [&r, &r, &r, &r]))
    }

    /// `d/dtheta [Q(theta) C]`.
    pub fn rotate_derivative(&self, theta: f64) -> Self {
        let r = rotation(theta);
        let dr = rotation_derivative(theta);
        let full = self.to_full();
        let mut acc = [[[[0.0; 2]; 2]; 2]; 2];
        for slot in 0..4 {
            let mut mats = [&r, &r, &r, &r];
            mats[slot] = &dr;
            let t = transform(&full, mats);
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            acc[i][j][k][l] += t[i][j][k][l];
                        }
                    }
                }
            }
        }
        Self::from_full(&acc)
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Max component difference relative to the largest component of `self`.
    pub fn relative_difference(&self, other: &Tensor4) -> f64 {
        (*self - *other).max_abs() / self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Inverse in the same engineering-strain representation (the compliance).
    pub fn inverse_matrix(&self) -> Option<Mat3> {
        inv3(&self.c)
    }

    /// `true` if `other - self` is positive semidefinite up to `tol * |self|`.
    pub fn loewner_le(&self, other: &Tensor4, tol: f64) -> bool {
        let d = *other - *self;
        d.eigenvalues()[0] >= -tol * self.max_abs()
    }
}

pub fn lame_plane_strain(young: f64, poisson: f64) -> (f64, f64) {
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    (lambda, mu)
}

pub fn rotation(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    [[c, -s], [s, c]]
}

fn rotation_derivative(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    [[-s, -c], [c, -s]]
}

fn transform(c: &Full4, m: [&[[f64; 2]; 2]; 4]) -> Full4 {
    let mut out = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let mut s = 0.0;
                    for p in 0..2 {
                        for q in 0..2 {
                            for r in 0..2 {
                                for t in 0..2 {
                                    s += m[0][i][p] * m[1][j][q] * m[2][k][r] * m[3][l][t] * c[p][q][r][t];
                                }
                            }
                        }
                    }
                    out[i][j][k][l] = s;
                }
            }
        }
    }
    out
}

impl Add for Tensor4 {
    type Output = Tensor4;
    fn add(mut self, o: Tensor4) -> Tensor4 {
        self += o;
        self
    }
}

impl AddAssign for Tensor4 {
    fn add_assign(&mut self, o: Tensor4) {
        for a in 0..3 {
            for b in 0..3 {
                self.c[a][b] += o.c[a][b];
            }
        }
    }
}

impl Sub for Tensor4 {
    type Output = Tensor4;
    fn sub(mut self, o: Tensor4) -> Tensor4 {
        for a in 0..3 {
            for b in 0..3 {
                self.c[a][b] -= o.c[a][b];
            }
        }
        self
    }
}

impl Mul<Tensor4> for f64 {
    type Output = Tensor4;
    fn mul(self, mut t: Tensor4) -> Tensor4 {
        for row in t.c.iter_mut() {
            for v in row.iter_mut() {
                *v *= self;
            }
        }
        t
    }
}
