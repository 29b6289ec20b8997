//! Pseudo-spectral solver for the Cahn-Hilliard-Oono equation
//! `phi_t = Lap(-gamma^-2 Lap phi + phi^3 - phi) - (phi - m)` on a periodic
//! rectangle.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Order-parameter field on a periodic `nx x ny` pixel grid covering `lx x ly`.
/// Values are stored row by row: `phi[j * nx + i]` sits at the center of
/// pixel `(i, j)`, `i` along x.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCell {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub phi: Vec<f64>,
    pub m: f64,
    pub gamma: f64,
}

impl PeriodicCell {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64, phi: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || !(lx > 0.0) || !(ly > 0.0) || phi.len() != nx * ny {
            return Err(Error::InvalidArgument(format!(
                "cell {nx}x{ny} of size {lx}x{ly} with {} values",
                phi.len()
            )));
        }
        let m = phi.iter().sum::<f64>() / phi.len() as f64;
        Ok(PeriodicCell {
            nx,
            ny,
            lx,
            ly,
            phi,
            m,
            gamma: f64::NAN,
        })
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.phi[j * self.nx + i]
    }

    pub fn mean(&self) -> f64 {
        self.phi.iter().sum::<f64>() / self.phi.len() as f64
    }

    /// The cell turned by a quarter turn counter-clockwise. The grid and the
    /// cell sides are swapped, so rectangular cells rotate exactly.
    pub fn rotated_quarter(&self) -> Result<Self> {
        let (nx, ny) = (self.ny, self.nx);
        let mut phi = vec![0.0; nx * ny];
        // a point (x, y) moves to (-y, x); pixel (i, j) lands on (ny-1-j, i)
        for j in 0..self.ny {
            for i in 0..self.nx {
                phi[i * nx + (self.ny - 1 - j)] = self.at(i, j);
            }
        }
        Ok(PeriodicCell {
            nx,
            ny,
            lx: self.ly,
            ly: self.lx,
            phi,
            ..self.clone()
        })
    }

    /// Flat binary dump: a text header line `nx ny Lx Ly`, then the field as
    /// little-endian `f64`, row-major.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = format!("{} {} {} {}\n", self.nx, self.ny, self.lx, self.ly).into_bytes();
        for v in &self.phi {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse("phase field dump", "missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|e| Error::parse("phase field dump", e.to_string()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::parse("phase field dump", "header must be `nx ny Lx Ly`"));
        }
        let bad = |e: String| Error::parse("phase field dump header", e);
        let nx: usize = parts[0].parse().map_err(|e| bad(format!("{e}")))?;
        let ny: usize = parts[1].parse().map_err(|e| bad(format!("{e}")))?;
        let lx: f64 = parts[2].parse().map_err(|e| bad(format!("{e}")))?;
        let ly: f64 = parts[3].parse().map_err(|e| bad(format!("{e}")))?;
        let body = &bytes[nl + 1..];
        if body.len() != 8 * nx * ny {
            return Err(Error::parse(
                "phase field dump",
                format!("expected {} bytes of data, found {}", 8 * nx * ny, body.len()),
            ));
        }
        let phi = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        PeriodicCell::new(nx, ny, lx, ly, phi)
    }
}

/// Two-dimensional complex FFT on a row-major `nx x ny` array.
pub(crate) struct Fft2 {
    nx: usize,
    ny: usize,
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            nx,
            ny,
            fx: planner.plan_fft_forward(nx),
            fy: planner.plan_fft_forward(ny),
            ix: planner.plan_fft_inverse(nx),
            iy: planner.plan_fft_inverse(ny),
        }
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (nx, ny) = (self.nx, self.ny);
        rows.process(data);
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = data[j * nx + i];
            }
            cols.process(&mut col);
            for j in 0..ny {
                data[j * nx + i] = col[j];
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fx, &self.fy);
    }

    /// Inverse transform including the `1 / (nx ny)` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.ix, &self.iy);
        let s = 1.0 / (self.nx * self.ny) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// Angular wavenumbers of the FFT bins along one axis.
pub(crate) fn wavenumbers(n: usize, len: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * PI * k / len
        })
        .collect()
}

/// Initial condition of the phase-field run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChoInit {
    /// `phi = m` exactly.
    Uniform,
    /// `m` plus uniform noise of the given amplitude (mean removed).
    Noise { amplitude: f64 },
    /// Stripes aligned with x: `m + a cos(2 pi periods y / Ly)` plus noise.
    Stripes { periods: usize, amplitude: f64, noise: f64 },
    /// Hexagonal spot lattice with wavenumber `k` (sum of three cosines);
    /// the sign of `amplitude` selects maxima (A spots) or minima (B spots)
    /// at the lattice points.
    Hexagonal { k: f64, amplitude: f64, noise: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoParams {
    pub m: f64,
    pub gamma: f64,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dt: f64,
    pub max_time: f64,
    /// Splitting constant of the stabilized scheme (at least 2).
    pub stabilization: f64,
    /// Stop once `max |phi^{n+1} - phi^n| / dt` falls below this.
    pub stationarity_tol: f64,
    pub seed: u64,
    pub init: ChoInit,
}

impl ChoParams {
    pub fn new(m: f64, gamma: f64, n: usize, length: f64) -> Self {
        ChoParams {
            m,
            gamma,
            nx: n,
            ny: n,
            lx: length,
            ly: length,
            dt: 0.01,
            max_time: 200.0,
            stabilization: 2.0,
            stationarity_tol: 1e-6,
            seed: 0,
            init: ChoInit::Noise { amplitude: 0.05 },
        }
    }
}

/// Wavelength of the fastest-growing mode of the linearized equation at
/// mean `m`, `2 pi / k*` with `k*^2 = gamma^2 (1 - 3 m^2) / 2`. `None` if the
/// uniform state is linearly stable.
pub fn linear_wavelength(m: f64, gamma: f64) -> Option<f64> {
    let a = 1.0 - 3.0 * m * m;
    if a <= 0.0 {
        return None;
    }
    Some(2.0 * PI / (gamma * (a / 2.0).sqrt()))
}

#[derive(Debug, Clone)]
pub struct ChoResult {
    pub cell: PeriodicCell,
    pub time: f64,
    pub steps: usize,
    pub converged: bool,
    /// Final `max |phi^{n+1} - phi^n| / dt`.
    pub stationarity: f64,
    /// Lyapunov energy, sampled every `energy_stride` steps (first and last included).
    pub energy: Vec<f64>,
    pub max_mean_drift: f64,
}

/// Mean Lyapunov energy density
/// `<|grad phi|^2 / (2 gamma^2) + F(phi)> + 1/2 <(phi - m)(-Lap)^{-1}(phi - m)>`
/// with `F(s) = (1 - s^2)^2 / 4`.
pub fn cho_energy(cell: &PeriodicCell, gamma: f64) -> f64 {
    let fft = Fft2::new(cell.nx, cell.ny);
    energy_with(&fft, cell, gamma)
}

fn energy_with(fft: &Fft2, cell: &PeriodicCell, gamma: f64) -> f64 {
    let (nx, ny) = (cell.nx, cell.ny);
    let n = (nx * ny) as f64;
    let kx = wavenumbers(nx, cell.lx);
    let ky = wavenumbers(ny, cell.ly);
    let mut buf: Vec<Complex64> = cell.phi.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut buf);
    let local: f64 = cell.phi.iter().map(|&s| 0.25 * (1.0 - s * s).powi(2)).sum::<f64>() / n;
    let mut spectral = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let k2 = kx[i] * kx[i] + ky[j] * ky[j];
            if k2 == 0.0 {
                continue;
            }
            let a = buf[j * nx + i].norm_sqr() / (n * n);
            spectral += a * (0.5 * k2 / (gamma * gamma) + 0.5 / k2);
        }
    }
    local + spectral
}

/// Integrates the CHO equation with the stabilized semi-implicit scheme
/// `(1 + dt(k^4/gamma^2 + S k^2 + 1)) phi^{n+1} = phi^n - dt k^2 [phi^3 - (1+S) phi]^n`
/// (for `k != 0`; the mean is held fixed) until stationary or `max_time`.
pub fn solve_cho(params: &ChoParams) -> Result<ChoResult> {
    let ChoParams {
        m,
        gamma,
        nx,
        ny,
        lx,
        ly,
        dt,
        max_time,
        stabilization,
        stationarity_tol,
        seed,
        init,
    } = params.clone();
    if !(m.abs() < 1.0) {
        return Err(Error::OutOfRange {
            what: "mean order parameter m".into(),
            value: m,
            lower: -1.0,
            upper: 1.0,
        });
    }
    if !(gamma > 0.0) || !(dt > 0.0) || !(max_time >= 0.0) || nx < 2 || ny < 2 || !(lx > 0.0 && ly > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid phase-field settings: gamma {gamma}, dt {dt}, max_time {max_time}, grid {nx}x{ny}, cell {lx}x{ly}"
        )));
    }
    if stabilization < 2.0 {
        return Err(Error::InvalidArgument(format!(
            "stabilization constant must be at least 2, got {stabilization}"
        )));
    }
    let phi0 = initial_field(&params.clone(), seed, init);
    let mut cell = PeriodicCell {
        nx,
        ny,
        lx,
        ly,
        phi: phi0,
        m,
        gamma,
    };
    let fft = Fft2::new(nx, ny);
    let kx = wavenumbers(nx, lx);
    let ky = wavenumbers(ny, ly);
    let n = nx * ny;
    let mut k2 = vec![0.0; n];
    let mut denom = vec![0.0; n];
    for j in 0..ny {
        for i in 0..nx {
            let q = kx[i] * kx[i] + ky[j] * ky[j];
            k2[j * nx + i] = q;
            denom[j * nx + i] = 1.0 + dt * (q * q / (gamma * gamma) + stabilization * q + 1.0);
        }
    }
    let mut phat: Vec<Complex64> = cell.phi.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut phat);
    let mean_mode = Complex64::new(m * n as f64, 0.0);
    phat[0] = mean_mode;
    let mut g = vec![Complex64::new(0.0, 0.0); n];
    let mut next = vec![Complex64::new(0.0, 0.0); n];

    let energy_stride = 50;
    let mut energy = vec![energy_with(&fft, &cell, gamma)];
    let mut time = 0.0;
    let mut steps = 0;
    let mut stationarity = f64::INFINITY;
    let mut max_mean_drift = 0.0f64;
    let max_steps = (max_time / dt).ceil() as usize;
    while steps < max_steps {
        for (gv, &p) in g.iter_mut().zip(&cell.phi) {
            *gv = Complex64::new(p * p * p - (1.0 + stabilization) * p, 0.0);
        }
        fft.forward(&mut g);
        for k in 1..n {
            next[k] = (phat[k] - dt * k2[k] * g[k]) / denom[k];
        }
        next[0] = mean_mode;
        phat.copy_from_slice(&next);
        fft.inverse(&mut next);
        let mut change = 0.0f64;
        let mut sup = 0.0f64;
        for (p, v) in cell.phi.iter_mut().zip(&next) {
            change = change.max((v.re - *p).abs());
            sup = sup.max(v.re.abs());
            *p = v.re;
        }
        steps += 1;
        time += dt;
        if !(sup <= 2.0) {
            return Err(Error::Instability(format!(
                "|phi| reached {sup:.3} at t = {time:.4}; reduce the time step (dt = {dt})"
            )));
        }
        max_mean_drift = max_mean_drift.max((cell.mean() - m).abs());
        stationarity = change / dt;
        if steps % energy_stride == 0 {
            energy.push(energy_with(&fft, &cell, gamma));
        }
        if stationarity <= stationarity_tol {
            break;
        }
    }
    if steps % energy_stride != 0 || steps == 0 {
        energy.push(energy_with(&fft, &cell, gamma));
    }
    if max_steps == 0 {
        stationarity = 0.0;
    }
    Ok(ChoResult {
        cell,
        time,
        steps,
        converged: stationarity <= stationarity_tol,
        stationarity,
        energy,
        max_mean_drift,
    })
}

fn initial_field(p: &ChoParams, seed: u64, init: ChoInit) -> Vec<f64> {
    let (nx, ny) = (p.nx, p.ny);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = |amp: f64| -> Vec<f64> {
        if amp == 0.0 {
            return vec![0.0; nx * ny];
        }
        let mut v: Vec<f64> = (0..nx * ny).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        v
    };
    let xy = |i: usize, j: usize| ((i as f64 + 0.5) * p.lx / nx as f64, (j as f64 + 0.5) * p.ly / ny as f64);
    let mut phi = match init {
        ChoInit::Uniform => vec![p.m; nx * ny],
        ChoInit::Noise { amplitude } => noise(amplitude).into_iter().map(|v| p.m + v).collect(),
        ChoInit::Stripes {
            periods,
            amplitude,
            noise: a,
        } => {
            let nz = noise(a);
            let mut v = vec![0.0; nx * ny];
            for j in 0..ny {
                for i in 0..nx {
                    let (_, y) = xy(i, j);
                    v[j * nx + i] = p.m + amplitude * (2.0 * PI * periods as f64 * y / p.ly).cos() + nz[j * nx + i];
                }
            }
            v
        }
        ChoInit::Hexagonal { k, amplitude, noise: a } => {
            let nz = noise(a);
            let s3 = 3f64.sqrt();
            let dirs = [(0.0, 1.0), (0.5 * s3, 0.5), (0.5 * s3, -0.5)];
            let mut v = vec![0.0; nx * ny];
            for j in 0..ny {
                for i in 0..nx {
                    let (x, y) = xy(i, j);
                    let s: f64 = dirs.iter().map(|(dx, dy)| (k * (dx * x + dy * y)).cos()).sum();
                    v[j * nx + i] = p.m + amplitude * s / 3.0 + nz[j * nx + i];
                }
            }
            v
        }
    };
    // remove the discretization error of the template mean
    let mean = phi.iter().sum::<f64>() / phi.len() as f64;
    let shift = p.m - mean;
    phi.iter_mut().for_each(|x| *x += shift);
    phi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let f = Fft2::new(8, 6);
        let orig: Vec<Complex64> = (0..48).map(|i| Complex64::new((i as f64).sin(), 0.0)).collect();
        let mut v = orig.clone();
        f.forward(&mut v);
        f.inverse(&mut v);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn uniform_state_is_stationary() {
        let mut p = ChoParams::new(0.1, 20.0, 16, 1.0);
        p.init = ChoInit::Uniform;
        let r = solve_cho(&p).unwrap();
        assert!(r.converged);
        assert_eq!(r.steps, 1);
        assert!(r.cell.phi.iter().all(|&v| (v - 0.1).abs() < 1e-14));
    }

    #[test]
    fn mean_conserved_and_energy_decreases() {
        let mut p = ChoParams::new(0.0, 20.0, 32, 1.5);
        p.max_time = 2.0;
        p.seed = 7;
        let r = solve_cho(&p).unwrap();
        assert!(r.max_mean_drift < 1e-10);
        for w in r.energy.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn binary_round_trip() {
        let c = PeriodicCell::new(3, 2, 1.5, 1.0, vec![0.1, -0.2, 0.3, 1.0 / 3.0, 0.5, -0.6]).unwrap();
        let back = PeriodicCell::from_binary(&c.to_binary()).unwrap();
        assert_eq!(back.phi, c.phi);
        assert_eq!((back.nx, back.ny, back.lx, back.ly), (3, 2, 1.5, 1.0));
    }

    #[test]
    fn quarter_rotation_cycles() {
        let phi: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let c = PeriodicCell::new(4, 3, 1.0, 0.6, phi).unwrap();
        let r = c.rotated_quarter().unwrap();
        assert_eq!((r.nx, r.ny, r.lx, r.ly), (3, 4, 0.6, 1.0));
        // the pixel at the origin corner moves to the right edge
        assert_eq!(r.at(2, 0), c.at(0, 0));
        let r4 = c
            .rotated_quarter()
            .unwrap()
            .rotated_quarter()
            .unwrap()
            .rotated_quarter()
            .unwrap()
            .rotated_quarter()
            .unwrap();
        assert_eq!(r4.phi, c.phi);
    }
}
