//! Area-weighted cone filter on element centroids, its circular variant for
//! periodic orientation fields, and the corresponding chain rules.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;

/// Squared resultant length below which the circular mean is undefined and
/// taken to be zero.
const CIRCULAR_DEGENERATE: f64 = 1e-24;

/// Row-stochastic filter matrix `H` with `H_lr = K(d_lr) |e_r| / sum_s K(d_ls) |e_s|`
/// and cone kernel `K(d) = max(0, r_min - d)`.
#[derive(Debug, Clone)]
pub struct FilterOperator {
    r_min: f64,
    areas: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    // transpose, for gathers of the form sum_r H_rl x_r
    t_ptr: Vec<usize>,
    t_rows: Vec<usize>,
    t_vals: Vec<f64>,
}

pub fn build_filter(centroids: &[[f64; 2]], areas: &[f64], r_min: f64) -> FilterOperator {
    FilterOperator::build(centroids, areas, r_min)
}

impl FilterOperator {
    pub fn build(centroids: &[[f64; 2]], areas: &[f64], r_min: f64) -> Self {
        let n = centroids.len();
        assert_eq!(n, areas.len());
        let rows: Vec<Vec<(usize, f64)>> = if r_min > 0.0 {
            let key = |p: [f64; 2]| ((p[0] / r_min).floor() as i64, (p[1] / r_min).floor() as i64);
            let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
            for (r, &c) in centroids.iter().enumerate() {
                buckets.entry(key(c)).or_default().push(r);
            }
            (0..n)
                .into_par_iter()
                .map(|l| {
                    let c = centroids[l];
                    let (kx, ky) = key(c);
                    let mut row = Vec::new();
                    for dx in -1..=1 {
                        for dy in -1..=1 {
                            if let Some(b) = buckets.get(&(kx + dx, ky + dy)) {
                                for &r in b {
                                    let d = ((centroids[r][0] - c[0]).powi(2) + (centroids[r][1] - c[1]).powi(2)).sqrt();
                                    let w = (r_min - d).max(0.0) * areas[r];
                                    if w > 0.0 {
                                        row.push((r, w));
                                    }
                                }
                            }
                        }
                    }
                    row.sort_unstable_by_key(|e| e.0);
                    let total: f64 = row.iter().map(|e| e.1).sum();
                    for e in row.iter_mut() {
                        e.1 /= total;
                    }
                    row
                })
                .collect()
        } else {
            (0..n).map(|l| vec![(l, 1.0)]).collect()
        };
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in &rows {
            for &(c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        let mut counts = vec![0usize; n + 1];
        for &c in &cols {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let t_ptr = counts.clone();
        let mut fill = counts;
        let mut t_rows = vec![0; cols.len()];
        let mut t_vals = vec![0.0; cols.len()];
        for l in 0..n {
            for k in row_ptr[l]..row_ptr[l + 1] {
                let c = cols[k];
                t_rows[fill[c]] = l;
                t_vals[fill[c]] = vals[k];
                fill[c] += 1;
            }
        }
        FilterOperator {
            r_min,
            areas: areas.to_vec(),
            row_ptr,
            cols,
            vals,
            t_ptr,
            t_rows,
            t_vals,
        }
    }

    pub fn radius(&self) -> f64 {
        self.r_min
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    /// Nonzeros of row `l` as `(column, weight)`.
    pub fn row(&self, l: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[l]..self.row_ptr[l + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    /// `H x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|l| self.row(l).map(|(r, w)| w * x[r]).sum())
            .collect()
    }

    /// `H^T y`, i.e. `(H^T y)_l = sum_r H_rl y_r`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|l| {
                (self.t_ptr[l]..self.t_ptr[l + 1])
                    .map(|k| self.t_vals[k] * y[self.t_rows[k]])
                    .sum()
            })
            .collect()
    }

    /// Circular filter for angles of the given period; results lie in `[0, period)`.
    pub fn apply_circular(&self, theta: &[f64], period: f64) -> Vec<f64> {
        let w = 2.0 * PI / period;
        let (s, c) = self.resultants(theta, w);
        s.iter()
            .zip(&c)
            .map(|(&s, &c)| {
                if s * s + c * c <= CIRCULAR_DEGENERATE {
                    0.0
                } else {
                    let a = s.atan2(c) / w;
                    let a = if a < 0.0 { a + period } else { a };
                    if a >= period {
                        0.0
                    } else {
                        a
                    }
                }
            })
            .collect()
    }

    fn resultants(&self, theta: &[f64], w: f64) -> (Vec<f64>, Vec<f64>) {
        let sc: Vec<(f64, f64)> = theta.iter().map(|&t| (w * t).sin_cos()).collect();
        (0..self.len())
            .into_par_iter()
            .map(|l| {
                let mut s = 0.0;
                let mut c = 0.0;
                for (r, h) in self.row(l) {
                    s += h * sc[r].0;
                    c += h * sc[r].1;
                }
                (s, c)
            })
            .unzip()
    }

    /// Sensitivity numerator and mass derivative for the `z` of one class:
    /// `(sum_r H_rl s_r, sum_r H_rl |e_r| rho(m_hat_r))`.
    pub fn chain_rule_z(&self, s_z: &[f64], rho_hat: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mass: Vec<f64> = rho_hat.iter().zip(&self.areas).map(|(r, a)| r * a).collect();
        (self.apply_transpose(s_z), self.apply_transpose(&mass))
    }

    /// Same for `m`: `(sum_r H_rl s_r, sum_r H_rl |e_r| z_hat_r rho'(m_hat_r))`.
    pub fn chain_rule_m(&self, s_m: &[f64], z_hat: &[f64], drho_hat: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mass: Vec<f64> = (0..self.len())
            .map(|r| self.areas[r] * z_hat[r] * drho_hat[r])
            .collect();
        (self.apply_transpose(s_m), self.apply_transpose(&mass))
    }

    /// Compliance derivative with respect to the unfiltered angles, given the
    /// energy sensitivities `s_theta` at the filtered angles (`dc/dtheta_hat = -s_theta`).
    pub fn chain_rule_theta(&self, theta: &[f64], period: f64, s_theta: &[f64]) -> Vec<f64> {
        let w = 2.0 * PI / period;
        let (s, c) = self.resultants(theta, w);
        let gs: Vec<f64> = (0..self.len())
            .map(|r| {
                let d = s[r] * s[r] + c[r] * c[r];
                if d <= CIRCULAR_DEGENERATE {
                    0.0
                } else {
                    s_theta[r] * s[r] / d
                }
            })
            .collect();
        let gc: Vec<f64> = (0..self.len())
            .map(|r| {
                let d = s[r] * s[r] + c[r] * c[r];
                if d <= CIRCULAR_DEGENERATE {
                    0.0
                } else {
                    s_theta[r] * c[r] / d
                }
            })
            .collect();
        let ts = self.apply_transpose(&gs);
        let tc = self.apply_transpose(&gc);
        theta
            .iter()
            .enumerate()
            .map(|(l, &t)| {
                let (sn, cs) = (w * t).sin_cos();
                -(cs * tc[l] + sn * ts[l])
            })
            .collect()
    }
}
