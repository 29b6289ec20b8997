//! Fixed-point update of `z` and `m` and the nested bisection for the mass
//! multiplier `Lambda` and the per-element multipliers `mu_l`.

use rayon::prelude::*;

use super::{OcParams, UpdateRule};
use crate::error::{Error, Result};
use crate::filter::FilterOperator;
use crate::materials::MaterialClass;

const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 200;

/// Everything the update needs from one iteration, indexed `[class][element]`.
///
/// `num_*` are the filtered energy sensitivities (the numerators of `B` and
/// `D` without `eps`), `dmass_*` the filtered mass derivatives.
#[derive(Debug, Clone)]
pub struct UpdateData {
    pub z: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub num_z: Vec<Vec<f64>>,
    pub dmass_z: Vec<Vec<f64>>,
    pub num_m: Vec<Vec<f64>>,
    pub dmass_m: Vec<Vec<f64>>,
    /// Parameter bounds of parametrized classes.
    pub m_bounds: Vec<Option<(f64, f64)>>,
    pub eps: f64,
}

impl UpdateData {
    pub fn num_classes(&self) -> usize {
        self.z.len()
    }

    pub fn num_elements(&self) -> usize {
        self.z.first().map_or(0, Vec::len)
    }

    /// Updated `z_il` for multipliers `lambda` and `mu`.
    pub fn z_new(&self, params: &OcParams, lambda: f64, mu: f64, i: usize, l: usize) -> f64 {
        let z = self.z[i][l];
        let b = (self.num_z[i][l] + self.eps) / (lambda * self.dmass_z[i][l] + mu + self.eps);
        match params.update_rule {
            UpdateRule::Enhanced => {
                let lo = (z - params.move_limit).max(params.z_min);
                let hi = z + params.move_limit;
                (b.powf(params.eta) * z).clamp(lo, hi)
            }
            UpdateRule::Plain => (b * z).max(params.z_min),
        }
    }

    /// `sum_i z_il` after the update.
    pub fn z_sum(&self, params: &OcParams, lambda: f64, mu: f64, l: usize) -> f64 {
        (0..self.num_classes()).map(|i| self.z_new(params, lambda, mu, i, l)).sum()
    }

    /// Updated `m_il` for mass multiplier `lambda` (unchanged for classes
    /// without a parameter).
    pub fn m_new(&self, params: &OcParams, lambda: f64, i: usize, l: usize) -> f64 {
        let m = self.m[i][l];
        let Some((lower, upper)) = self.m_bounds[i] else {
            return m;
        };
        // a stiffness derivative that is not positive semidefinite can give a
        // negative energy term; it is cut at zero so D stays positive
        let num = self.num_m[i][l].max(0.0);
        let d = (num + self.eps) / (lambda * self.dmass_m[i][l] + self.eps);
        let delta = params.delta;
        match params.update_rule {
            UpdateRule::Enhanced => {
                let trial = lower - delta + d.powf(params.eta) * (m - lower + delta);
                let lo = (m - params.move_limit).max(lower);
                let hi = (m + params.move_limit).min(upper);
                trial.clamp(lo, hi)
            }
            UpdateRule::Plain => (lower - delta + d * (m - lower + delta)).clamp(lower, upper),
        }
    }
}

/// Result of the inner loop in one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSolution {
    pub mu: f64,
    pub z_sum: f64,
}

/// Finds `mu_l >= 0` with `sum_i z_il <= 1 + tol` and `mu_l (sum_i z_il - 1) ~ 0`
/// (to `tol`). `Z_l(mu)` is continuous and non-increasing, so the root is
/// bracketed by doubling from the warm start and refined by bisection.
pub fn solve_mu(data: &UpdateData, params: &OcParams, lambda: f64, l: usize, guess: f64, tol: f64) -> Result<MuSolution> {
    let zs = |mu: f64| data.z_sum(params, lambda, mu, l);
    let z0 = zs(0.0);
    if z0 <= 1.0 + tol {
        return Ok(MuSolution { mu: 0.0, z_sum: z0 });
    }
    // with mu >= max_i(num_z + eps) every B <= 1, hence z_new <= z
    let safe = (0..data.num_classes())
        .map(|i| data.num_z[i][l] + data.eps)
        .fold(0.0f64, f64::max);
    let mut hi = if guess > 0.0 { guess } else { safe };
    let mut lo = 0.0;
    let mut z_hi = zs(hi);
    let mut n = 0;
    while z_hi > 1.0 + tol {
        lo = hi;
        hi *= 2.0;
        z_hi = zs(hi);
        n += 1;
        if n > MAX_DOUBLINGS {
            return Err(Error::Numerical(format!(
                "element {l}: could not bracket the partition-of-unity multiplier"
            )));
        }
    }
    if lo == 0.0 {
        // tighten from below when the warm start overshoots
        let mut probe = hi * 0.5;
        for _ in 0..60 {
            let zp = zs(probe);
            if zp > 1.0 + tol {
                lo = probe;
                break;
            }
            hi = probe;
            z_hi = zp;
            probe *= 0.5;
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if (z_hi - 1.0).abs() <= tol || hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let zm = zs(mid);
        if zm > 1.0 + tol {
            lo = mid;
        } else {
            hi = mid;
            z_hi = zm;
        }
    }
    Ok(MuSolution { mu: hi, z_sum: z_hi })
}

/// Outcome of the outer loop: multipliers and the updated control variables.
#[derive(Debug, Clone)]
pub struct MultiplierSolution {
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    /// Mass of the filtered updated design.
    pub mass: f64,
    pub mass_evaluations: usize,
}

/// Context for evaluating `M(Lambda)`.
pub struct MassEvaluator<'a> {
    pub data: &'a UpdateData,
    pub params: &'a OcParams,
    pub filter: &'a FilterOperator,
    pub classes: &'a [MaterialClass],
    pub areas: &'a [f64],
    pub mu_guess: &'a [f64],
}

/// Per-element multipliers `mu`, fractions `z[i]` and parameters `m[i]`.
pub type ClassUpdate = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Mass followed by the fields of [`ClassUpdate`].
type MassEvaluation = (f64, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

impl MassEvaluator<'_> {
    /// Updated variables and per-element multipliers for a given `lambda`.
    pub fn update(&self, lambda: f64) -> Result<ClassUpdate> {
        let n = self.data.num_classes();
        let ne = self.data.num_elements();
        let tol = self.params.inner_tol();
        let per_elem: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..ne)
            .into_par_iter()
            .map(|l| {
                let sol = solve_mu(self.data, self.params, lambda, l, self.mu_guess[l], tol)?;
                let z = (0..n).map(|i| self.data.z_new(self.params, lambda, sol.mu, i, l)).collect();
                let m = (0..n).map(|i| self.data.m_new(self.params, lambda, i, l)).collect();
                Ok((sol.mu, z, m))
            })
            .collect::<Result<_>>()?;
        let mut mu = Vec::with_capacity(ne);
        let mut z = vec![vec![0.0; ne]; n];
        let mut m = vec![vec![0.0; ne]; n];
        for (l, (mu_l, zl, ml)) in per_elem.into_iter().enumerate() {
            mu.push(mu_l);
            for i in 0..n {
                z[i][l] = zl[i];
                m[i][l] = ml[i];
            }
        }
        Ok((mu, z, m))
    }

    /// Mass of the filtered fields.
    pub fn mass_of(&self, z: &[Vec<f64>], m: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (i, class) in self.classes.iter().enumerate() {
            let zh = self.filter.apply(&z[i]);
            let mh = if class.is_parametrized() {
                self.filter.apply(&m[i])
            } else {
                m[i].clone()
            };
            for l in 0..zh.len() {
                total += self.areas[l] * zh[l] * class.density(mh[l]);
            }
        }
        total
    }

    pub fn mass(&self, lambda: f64) -> Result<f64> {
        let (_, z, m) = self.update(lambda)?;
        Ok(self.mass_of(&z, &m))
    }
}

/// Finds `Lambda >= 0` such that the filtered updated mass satisfies
/// `M <= M_lim (1 + tol)` and `Lambda (M - M_lim) ~ 0`, by bracketing from
/// `guess` and bisection. `M(Lambda)` is continuous and non-increasing.
pub fn solve_lambda(ev: &MassEvaluator<'_>, mass_limit: f64, guess: f64) -> Result<MultiplierSolution> {
    let tol = ev.params.bisection_tol;
    let upper = mass_limit * (1.0 + tol);
    let mut evals = 0;
    let mut eval = |lambda: f64| -> Result<MassEvaluation> {
        evals += 1;
        let (mu, z, m) = ev.update(lambda)?;
        let mass = ev.mass_of(&z, &m);
        Ok((mass, mu, z, m))
    };
    let at_zero = eval(0.0)?;
    if at_zero.0 <= upper {
        return Ok(MultiplierSolution {
            lambda: 0.0,
            mu: at_zero.1,
            z: at_zero.2,
            m: at_zero.3,
            mass: at_zero.0,
            mass_evaluations: evals,
        });
    }
    let scale = {
        let d = ev.data;
        let num: f64 = d.num_z.iter().flatten().sum::<f64>() + d.eps;
        let den: f64 = d.dmass_z.iter().flatten().sum::<f64>();
        if den > 0.0 {
            num / den
        } else {
            1.0
        }
    };
    let mut lo = 0.0;
    let mut hi = if guess > 0.0 { guess } else { scale };
    let mut best = eval(hi)?;
    let mut n = 0;
    while best.0 > upper {
        lo = hi;
        hi *= 2.0;
        best = eval(hi)?;
        n += 1;
        if n > MAX_DOUBLINGS {
            return Err(Error::Infeasible(format!(
                "mass multiplier could not be bracketed: mass {} stays above the budget {mass_limit}",
                best.0
            )));
        }
    }
    if lo == 0.0 {
        let mut probe = 0.5 * hi;
        for _ in 0..60 {
            let r = eval(probe)?;
            if r.0 > upper {
                lo = probe;
                break;
            }
            hi = probe;
            best = r;
            probe *= 0.5;
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if (best.0 - mass_limit).abs() <= tol * mass_limit || hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let r = eval(mid)?;
        if r.0 > upper {
            lo = mid;
        } else {
            hi = mid;
            best = r;
        }
    }
    Ok(MultiplierSolution {
        lambda: hi,
        mu: best.1,
        z: best.2,
        m: best.3,
        mass: best.0,
        mass_evaluations: evals,
    })
}

/// Largest violation of the optimality conditions at the current design for
/// the given multipliers, measured as the change one undamped fixed-point
/// step would make: `max |max(z_min, B z) - z|` and the analogous projected
/// step for `m`. Both vanish exactly at KKT points.
pub fn kkt_residual(data: &UpdateData, params: &OcParams, lambda: f64, mu: &[f64]) -> f64 {
    let plain = OcParams {
        update_rule: UpdateRule::Plain,
        ..params.clone()
    };
    let mut r = 0.0f64;
    for l in 0..data.num_elements() {
        for i in 0..data.num_classes() {
            r = r.max((data.z_new(&plain, lambda, mu[l], i, l) - data.z[i][l]).abs());
            if data.m_bounds[i].is_some() {
                r = r.max((data.m_new(&plain, lambda, i, l) - data.m[i][l]).abs());
            }
        }
    }
    r
}
