//! Diblock-copolymer microstructures: phase-field patterns from the
//! Cahn-Hilliard-Oono equation, periodic homogenization of the resulting
//! two-phase cells, and databases of homogenized tensors.

pub mod cell;
pub mod cho;
pub mod pattern;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cell::{
    homogenize_field, homogenized_tensor, solve_cell_problem, CellElasticity, CellProblem, StiffnessField,
    STRAIN_BASIS,
};
pub use cho::{cho_energy, linear_wavelength, solve_cho, ChoInit, ChoParams, ChoResult, PeriodicCell};
pub use pattern::{analyze_field, classify_field, classify_pattern, FieldAnalysis, PatternClass, M1, M2};

use crate::error::{Error, Result};
use crate::materials::{density_affine, lame_plane_strain, DatabaseInterval, HomogenizedDatabase, MaterialClass};
use crate::Tensor4;

/// Elastic constants and specific weights of the two pure phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseProperties {
    pub young_a: f64,
    pub poisson_a: f64,
    pub young_b: f64,
    pub poisson_b: f64,
    pub rho_a: f64,
    pub rho_b: f64,
}

impl Default for PhaseProperties {
    fn default() -> Self {
        PhaseProperties::with_ratio(10.0)
    }
}

impl PhaseProperties {
    /// `E_A = 1000`, `E_B = 1000 / ratio`, both `nu = 0.3`, and densities in
    /// the same ratio (`rho_A = 1`).
    pub fn with_ratio(ratio: f64) -> Self {
        PhaseProperties {
            young_a: 1000.0,
            poisson_a: 0.3,
            young_b: 1000.0 / ratio,
            poisson_b: 0.3,
            rho_a: 1.0,
            rho_b: 1.0 / ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Tensor4::isotropic(self.young_a, self.poisson_a)?;
        Tensor4::isotropic(self.young_b, self.poisson_b)?;
        if !(self.rho_a > 0.0 && self.rho_b > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "phase densities must be positive, got {} and {}",
                self.rho_a, self.rho_b
            )));
        }
        if self.rho_a < self.rho_b {
            return Err(Error::InvalidArgument(
                "the density must not decrease with m, so rho_a >= rho_b is required".into(),
            ));
        }
        Ok(())
    }

    pub fn density(&self, m: f64) -> f64 {
        density_affine(m, self.rho_a, self.rho_b)
    }
}

/// Pixelwise isotropic stiffness whose Lamé parameters are affine in the
/// order parameter (clamped to `[-1, 1]`): phase A at `phi = 1`, B at `phi = -1`.
pub fn phase_to_stiffness(cell: &PeriodicCell, props: &PhaseProperties) -> StiffnessField {
    let (la, ma) = lame_plane_strain(props.young_a, props.poisson_a);
    let (lb, mb) = lame_plane_strain(props.young_b, props.poisson_b);
    let tensors = cell
        .phi
        .iter()
        .map(|&p| {
            let p = p.clamp(-1.0, 1.0);
            let lambda = 0.5 * (la + lb) + 0.5 * (la - lb) * p;
            let mu = 0.5 * (ma + mb) + 0.5 * (ma - mb) * p;
            Tensor4::from_lame(lambda, mu)
        })
        .collect();
    StiffnessField {
        nx: cell.nx,
        ny: cell.ny,
        lx: cell.lx,
        ly: cell.ly,
        tensors,
    }
}

/// Numerical settings of the pattern generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogenizeSettings {
    pub gamma: f64,
    /// Grid points along the longer cell side.
    pub grid: usize,
    /// Stripe periods per square stripe cell.
    pub periods: usize,
    /// Stripe period and spot-lattice wavelength as a multiple of the
    /// fastest linear wavelength at `m = 0`.
    pub cell_scale: f64,
    pub dt: f64,
    pub max_time: f64,
    pub stationarity_tol: f64,
    /// Amplitude of the seeded noise added to the initial template.
    pub noise: f64,
}

impl Default for HomogenizeSettings {
    fn default() -> Self {
        HomogenizeSettings {
            gamma: 20.0,
            grid: 128,
            periods: 2,
            cell_scale: 4.0,
            dt: 0.05,
            max_time: 2000.0,
            stationarity_tol: 1e-6,
            noise: 0.05,
        }
    }
}

impl HomogenizeSettings {
    /// Stripe period and wavelength of the spot lattice.
    pub fn pattern_wavelength(&self) -> f64 {
        self.cell_scale * linear_wavelength(0.0, self.gamma).expect("m = 0 is linearly unstable")
    }

    /// Phase-field run for parameter `m` in the cell geometry and template of
    /// `class`: a square cell holding `periods` stripes, or a `a x a sqrt(3)`
    /// rectangle holding two spots of a hexagonal lattice.
    pub fn cho_params(&self, class: PatternClass, m: f64, seed: u64) -> ChoParams {
        let lambda = self.pattern_wavelength();
        let mut p = ChoParams::new(m, self.gamma, self.grid, 1.0);
        p.dt = self.dt;
        p.max_time = self.max_time;
        p.stationarity_tol = self.stationarity_tol;
        p.seed = seed;
        let amp = 0.8;
        match class {
            PatternClass::Stripes => {
                let l = self.periods as f64 * lambda;
                p.lx = l;
                p.ly = l;
                p.init = ChoInit::Stripes {
                    periods: self.periods,
                    amplitude: amp,
                    noise: self.noise,
                };
            }
            PatternClass::ASpots | PatternClass::BSpots => {
                let k = 2.0 * PI / lambda;
                let a = 4.0 * PI / (3f64.sqrt() * k);
                p.lx = a;
                p.ly = a * 3f64.sqrt();
                p.ny = self.grid;
                p.nx = ((self.grid as f64) / 3f64.sqrt()).round() as usize;
                let sign = if class == PatternClass::ASpots { 1.0 } else { -1.0 };
                p.init = ChoInit::Hexagonal {
                    k,
                    amplitude: sign * amp,
                    noise: self.noise,
                };
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || self.grid < 8 || self.periods == 0 || !(self.cell_scale > 0.0) || !(self.dt > 0.0) || !(self.max_time > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid homogenization settings {self:?}")));
        }
        Ok(())
    }
}

/// One homogenized sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedSample {
    pub m: f64,
    pub class: PatternClass,
    /// Tensor in the canonical frame (stripes along x).
    pub tensor: Tensor4,
    /// Tensor in the frame of the computed cell.
    pub raw_tensor: Tensor4,
    pub density: f64,
    /// `|2 C_xyxy / (C_xxxx - C_xxyy) - 1|`, zero for an isotropic tensor.
    pub isotropy_deviation: f64,
    /// Angle of the dominant wavevector of the pattern.
    pub normal_angle: f64,
    pub seed: u64,
    pub cho_time: f64,
    pub cho_converged: bool,
}

pub fn isotropy_deviation(c: &Tensor4) -> f64 {
    (2.0 * c.xyxy() / (c.xxxx() - c.xxyy()) - 1.0).abs()
}

/// Pattern, cell problems and homogenized tensor for `m` inside the phase
/// region it belongs to.
pub fn homogenize_for_m(
    m: f64,
    settings: &HomogenizeSettings,
    props: &PhaseProperties,
    seed: u64,
) -> Result<(HomogenizedSample, PeriodicCell)> {
    let class = classify_pattern(m)?;
    homogenize_sample(class, m, settings, props, seed)
}

/// Same as [`homogenize_for_m`] with the pattern class given explicitly,
/// which admits the closed interval of the class (its endpoints are
/// thresholds of the phase diagram).
pub fn homogenize_sample(
    class: PatternClass,
    m: f64,
    settings: &HomogenizeSettings,
    props: &PhaseProperties,
    seed: u64,
) -> Result<(HomogenizedSample, PeriodicCell)> {
    settings.validate()?;
    props.validate()?;
    let (lo, hi) = class.interval();
    if !(m >= lo - 1e-12 && m <= hi + 1e-12) {
        return Err(Error::OutOfRange {
            what: format!("m for the {class} class"),
            value: m,
            lower: lo,
            upper: hi,
        });
    }
    let run = solve_cho(&settings.cho_params(class, m, seed))?;
    if !run.converged {
        log::warn!(
            "phase field at m = {m} not stationary after t = {} (rate {:.2e})",
            run.time,
            run.stationarity
        );
    }
    let (found, analysis) = classify_field(&run.cell).map_err(|e| match e {
        Error::Classification(msg) => Error::Classification(format!("m = {m}: {msg}")),
        other => other,
    })?;
    if found != class {
        return Err(Error::Classification(format!(
            "m = {m}: expected {class} but the field shows {found}; {}",
            analysis.describe()
        )));
    }
    let raw = homogenize_field(phase_to_stiffness(&run.cell, props))?;
    let normal_angle = analysis.normal_angle();
    let tensor = match class {
        PatternClass::Stripes => raw.rotate(-(normal_angle - 0.5 * PI)),
        _ => raw,
    };
    info!(
        "m = {m:+.3} ({class}): t = {:.1}, xxxx {:.3}, yyyy {:.3}, xxyy {:.3}, xyxy {:.3}",
        run.time,
        tensor.xxxx(),
        tensor.yyyy(),
        tensor.xxyy(),
        tensor.xyxy()
    );
    let sample = HomogenizedSample {
        m,
        class,
        tensor,
        raw_tensor: raw,
        density: props.density(m),
        isotropy_deviation: isotropy_deviation(&tensor),
        normal_angle,
        seed,
        cho_time: run.time,
        cho_converged: run.converged,
    };
    Ok((sample, run.cell))
}

/// Homogenizes the cell and its quarter-turned copy and returns the largest
/// component deviation between the latter and the rotated tensor of the
/// former, relative to the largest component.
pub fn rotation_consistency_check(e_star: &Tensor4, cell: &PeriodicCell, props: &PhaseProperties, angle: f64) -> Result<f64> {
    let quarter = (angle / (0.5 * PI)).round();
    if (angle - quarter * 0.5 * PI).abs() > 1e-12 || quarter.rem_euclid(4.0) != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "rotation check supports only a quarter turn, got {angle}"
        )));
    }
    let rotated = cell.rotated_quarter()?;
    let e_rot = homogenize_field(phase_to_stiffness(&rotated, props))?;
    Ok(e_star.rotate(angle).relative_difference(&e_rot))
}

/// One material class of a database file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseClass {
    pub class: PatternClass,
    pub database: HomogenizedDatabase,
    pub samples: Vec<HomogenizedSample>,
}

/// Serialized copolymer database: the tabulated tensors of the three classes
/// plus everything needed to regenerate them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseFile {
    pub phases: PhaseProperties,
    pub settings: HomogenizeSettings,
    pub seed: u64,
    pub classes: Vec<DatabaseClass>,
}

impl DatabaseFile {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("database", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let db: DatabaseFile = serde_json::from_str(text).map_err(|e| Error::parse("database", e.to_string()))?;
        for c in &db.classes {
            c.database.validate()?;
        }
        Ok(db)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Material classes for the optimizer. Stripes get a free orientation of
    /// period `pi`; spots are treated as isotropic.
    pub fn material_classes(&self) -> Result<Vec<MaterialClass>> {
        self.classes
            .iter()
            .map(|c| {
                let mat = MaterialClass::tabulated(
                    c.class.label(),
                    Arc::new(c.database.clone()),
                    self.phases.rho_a,
                    self.phases.rho_b,
                )?;
                Ok(if c.class == PatternClass::Stripes {
                    mat.with_free_orientation(PI)
                } else {
                    mat
                })
            })
            .collect()
    }
}

/// Sample points of a class: both endpoints and the midpoint of its interval.
pub fn class_samples(class: PatternClass) -> [f64; 3] {
    let (lo, hi) = class.interval();
    [lo, 0.5 * (lo + hi), hi]
}

/// Homogenizes every class at the endpoints and midpoint of its interval
/// (nine runs, samples in parallel) and assembles the quadratic interpolants.
/// Run `k` uses seed `seed + k`.
pub fn build_database(
    classes: &[PatternClass],
    settings: &HomogenizeSettings,
    props: &PhaseProperties,
    seed: u64,
) -> Result<DatabaseFile> {
    build_database_with_fields(classes, settings, props, seed).map(|r| r.0)
}

/// Like [`build_database`], also returning the equilibrium phase fields in
/// sample order.
pub fn build_database_with_fields(
    classes: &[PatternClass],
    settings: &HomogenizeSettings,
    props: &PhaseProperties,
    seed: u64,
) -> Result<(DatabaseFile, Vec<PeriodicCell>)> {
    let jobs: Vec<(PatternClass, f64, u64)> = classes
        .iter()
        .flat_map(|&c| class_samples(c).into_iter().map(move |m| (c, m)))
        .enumerate()
        .map(|(k, (c, m))| (c, m, seed + k as u64))
        .collect();
    let (samples, cells): (Vec<HomogenizedSample>, Vec<PeriodicCell>) = jobs
        .par_iter()
        .map(|&(c, m, s)| homogenize_sample(c, m, settings, props, s))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let mut out = Vec::new();
    for (ci, &class) in classes.iter().enumerate() {
        let s: Vec<HomogenizedSample> = samples[3 * ci..3 * ci + 3].to_vec();
        let interval = DatabaseInterval {
            samples: [s[0].m, s[1].m, s[2].m],
            tensors: [s[0].tensor, s[1].tensor, s[2].tensor],
        };
        out.push(DatabaseClass {
            class,
            database: HomogenizedDatabase::new(class.label(), vec![interval])?,
            samples: s,
        });
    }
    let db = DatabaseFile {
        phases: *props,
        settings: *settings,
        seed,
        classes: out,
    };
    Ok((db, cells))
}
