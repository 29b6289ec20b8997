//! Pattern classes of the copolymer phase diagram and detection of the
//! pattern present in a computed field.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cho::{wavenumbers, Fft2, PeriodicCell};
use crate::error::{Error, Result};

/// Lower threshold of the phase diagram: stripes for `|m| < M1`.
pub const M1: f64 = 0.2;
/// Upper threshold: spots for `M1 < |m| < M2`, disorder beyond.
pub const M2: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternClass {
    /// Spots of A (`phi > 0`) in a B matrix.
    ASpots,
    Stripes,
    /// Spots of B (`phi < 0`) in an A matrix.
    BSpots,
}

impl PatternClass {
    pub const ALL: [PatternClass; 3] = [PatternClass::ASpots, PatternClass::Stripes, PatternClass::BSpots];

    /// Closed parameter interval used as the material class bounds.
    pub fn interval(self) -> (f64, f64) {
        match self {
            PatternClass::ASpots => (-M2, -M1),
            PatternClass::Stripes => (-M1, M1),
            PatternClass::BSpots => (M1, M2),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PatternClass::ASpots => "A-spots",
            PatternClass::Stripes => "stripes",
            PatternClass::BSpots => "B-spots",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        PatternClass::ALL.into_iter().find(|c| c.label().eq_ignore_ascii_case(s))
    }

    pub fn is_spots(self) -> bool {
        self != PatternClass::Stripes
    }
}

impl fmt::Display for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Expected pattern for a mean order parameter. The class intervals are open,
/// so the thresholds themselves and `|m| >= M2` are rejected.
pub fn classify_pattern(m: f64) -> Result<PatternClass> {
    if !m.is_finite() || m.abs() >= M2 {
        return Err(Error::Classification(format!(
            "m = {m} lies in the disordered region |m| >= {M2}; no regular pattern forms"
        )));
    }
    if m.abs() == M1 {
        return Err(Error::Classification(format!(
            "m = {m} is the threshold between stripes and spots; the pattern is not determined"
        )));
    }
    Ok(if m < -M1 {
        PatternClass::ASpots
    } else if m < M1 {
        PatternClass::Stripes
    } else {
        PatternClass::BSpots
    })
}

/// Connected region of one phase on the periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// `true` for the A phase (`phi > 0`).
    pub phase_a: bool,
    pub pixels: usize,
    /// Rank of the lattice of winding vectors: 0 for an isolated blob, 1 for
    /// a band that closes on itself across the periodic boundary, 2 for a
    /// region percolating in every direction.
    pub winding_rank: usize,
    /// Square root of the ratio of the second-moment eigenvalues (1 for a
    /// disc); only meaningful for rank 0.
    pub elongation: f64,
}

/// Summary of a phase field used to recognize its pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldAnalysis {
    pub components: Vec<Component>,
    /// Dominant wavevector `(kx, ky)` of `phi - m` (angular wavenumbers).
    pub dominant_wavevector: (f64, f64),
    /// Share of the fluctuation power carried by the dominant `+-k` pair.
    pub spectral_concentration: f64,
}

impl FieldAnalysis {
    /// Angle of the dominant wavevector in `[0, pi)`, i.e. the stripe normal.
    pub fn normal_angle(&self) -> f64 {
        let (kx, ky) = self.dominant_wavevector;
        ky.atan2(kx).rem_euclid(PI)
    }

    fn phase(&self, a: bool) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(move |c| c.phase_a == a)
    }

    pub fn describe(&self) -> String {
        let summary = |a: bool| {
            let ranks: Vec<String> = self
                .phase(a)
                .map(|c| format!("{}px/r{}/e{:.2}", c.pixels, c.winding_rank, c.elongation))
                .collect();
            ranks.join(" ")
        };
        format!(
            "A components [{}], B components [{}], dominant k = ({:.3}, {:.3}), concentration {:.2}",
            summary(true),
            summary(false),
            self.dominant_wavevector.0,
            self.dominant_wavevector.1,
            self.spectral_concentration
        )
    }
}

/// Components smaller than this share of the cell are treated as noise.
const MIN_COMPONENT_SHARE: f64 = 0.002;

pub fn analyze_field(cell: &PeriodicCell) -> FieldAnalysis {
    let components = components(cell);
    let (dominant_wavevector, spectral_concentration) = spectrum(cell);
    FieldAnalysis {
        components,
        dominant_wavevector,
        spectral_concentration,
    }
}

/// Detects the pattern in a field from the topology of its phases.
pub fn classify_field(cell: &PeriodicCell) -> Result<(PatternClass, FieldAnalysis)> {
    let a = analyze_field(cell);
    let ranks = |phase: bool| -> Vec<usize> { a.phase(phase).map(|c| c.winding_rank).collect() };
    let (ra, rb) = (ranks(true), ranks(false));
    let spots_of = |minor: &[usize], major: &[usize]| {
        !minor.is_empty() && minor.iter().all(|&r| r == 0) && major.len() == 1 && major[0] == 2
    };
    let class = if !ra.is_empty() && !rb.is_empty() && ra.iter().chain(&rb).all(|&r| r == 1) {
        Some(PatternClass::Stripes)
    } else if spots_of(&ra, &rb) {
        Some(PatternClass::ASpots)
    } else if spots_of(&rb, &ra) {
        Some(PatternClass::BSpots)
    } else {
        None
    };
    match class {
        Some(c) => Ok((c, a)),
        None => Err(Error::Classification(format!(
            "field with mean {:.4} matches no regular pattern: {}",
            cell.mean(),
            a.describe()
        ))),
    }
}

fn components(cell: &PeriodicCell) -> Vec<Component> {
    let (nx, ny) = (cell.nx, cell.ny);
    let n = nx * ny;
    let phase: Vec<bool> = cell.phi.iter().map(|&v| v > 0.0).collect();
    let mut label = vec![usize::MAX; n];
    // unwrapped pixel coordinates of the first visit
    let mut pos = vec![(0i64, 0i64); n];
    let min_pixels = ((MIN_COMPONENT_SHARE * n as f64).ceil() as usize).max(1);
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if label[seed] != usize::MAX {
            continue;
        }
        let id = seed;
        let p = phase[seed];
        label[seed] = id;
        pos[seed] = ((seed % nx) as i64, (seed / nx) as i64);
        queue.push_back(seed);
        let mut windings: Vec<(i64, i64)> = Vec::new();
        let mut count = 0usize;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        while let Some(q) = queue.pop_front() {
            count += 1;
            let (ux, uy) = pos[q];
            let (fx, fy) = (ux as f64, uy as f64);
            sx += fx;
            sy += fy;
            sxx += fx * fx;
            syy += fy * fy;
            sxy += fx * fy;
            let (i, j) = (q % nx, q / nx);
            for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let ii = (i as i64 + di).rem_euclid(nx as i64) as usize;
                let jj = (j as i64 + dj).rem_euclid(ny as i64) as usize;
                let r = jj * nx + ii;
                if phase[r] != p {
                    continue;
                }
                let expect = (ux + di, uy + dj);
                if label[r] == usize::MAX {
                    label[r] = id;
                    pos[r] = expect;
                    queue.push_back(r);
                } else {
                    let (ex, ey) = (expect.0 - pos[r].0, expect.1 - pos[r].1);
                    if ex != 0 || ey != 0 {
                        windings.push((ex / nx as i64, ey / ny as i64));
                    }
                }
            }
        }
        if count < min_pixels {
            continue;
        }
        let c = count as f64;
        let (mx, my) = (sx / c, sy / c);
        let (vxx, vyy, vxy) = (sxx / c - mx * mx, syy / c - my * my, sxy / c - mx * my);
        let tr = vxx + vyy;
        let disc = ((vxx - vyy).powi(2) + 4.0 * vxy * vxy).sqrt();
        let (l1, l2) = (0.5 * (tr + disc), 0.5 * (tr - disc));
        let elongation = if l2 > 1e-12 { (l1 / l2).sqrt() } else { f64::INFINITY };
        out.push(Component {
            phase_a: p,
            pixels: count,
            winding_rank: lattice_rank(&windings),
            elongation,
        });
    }
    out
}

fn lattice_rank(v: &[(i64, i64)]) -> usize {
    let Some(&first) = v.iter().find(|w| **w != (0, 0)) else {
        return 0;
    };
    if v.iter().any(|w| first.0 * w.1 - first.1 * w.0 != 0) {
        2
    } else {
        1
    }
}

fn spectrum(cell: &PeriodicCell) -> ((f64, f64), f64) {
    let (nx, ny) = (cell.nx, cell.ny);
    let fft = Fft2::new(nx, ny);
    let mean = cell.mean();
    let mut buf: Vec<Complex64> = cell.phi.iter().map(|&v| Complex64::new(v - mean, 0.0)).collect();
    fft.forward(&mut buf);
    let kx = wavenumbers(nx, cell.lx);
    let ky = wavenumbers(ny, cell.ly);
    let mut total = 0.0;
    let mut best = (0usize, 0.0f64);
    for (k, v) in buf.iter().enumerate() {
        let p = v.norm_sqr();
        total += p;
        if k != 0 && p > best.1 {
            best = (k, p);
        }
    }
    let (bi, bj) = (best.0 % nx, best.0 / nx);
    // conjugate partner carries the same power
    let partner = ((ny - bj) % ny) * nx + (nx - bi) % nx;
    let pair = if partner == best.0 { best.1 } else { 2.0 * best.1 };
    let conc = if total > 0.0 { pair / total } else { 0.0 };
    // report the representative with ky >= 0 (kx >= 0 when ky = 0)
    let (mut x, mut y) = (kx[bi], ky[bj]);
    if y < 0.0 || (y == 0.0 && x < 0.0) {
        x = -x;
        y = -y;
    }
    ((x, y), conc)
}
