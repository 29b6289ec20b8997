//! Stiffness tensors, material classes and tabulated homogenized data.

mod database;
mod tensor;

use std::sync::Arc;

pub use database::{interp_database, DatabaseInterval, HomogenizedDatabase};
pub use tensor::{lame_plane_strain, rotation, Full4, Tensor4};

use crate::error::{Error, Result};

/// Closed interval of the scalar material parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub lower: f64,
    pub upper: f64,
}

impl ParamRange {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::InvalidArgument(format!(
                "parameter range [{lower}, {upper}] must satisfy lower < upper"
            )));
        }
        Ok(ParamRange { lower, upper })
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, m: f64) -> bool {
        m >= self.lower && m <= self.upper
    }
}

#[derive(Debug, Clone)]
pub enum StiffnessModel {
    Constant(Tensor4),
    Tabulated(Arc<HomogenizedDatabase>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityModel {
    Constant(f64),
    /// `rho(m) = (rho_a + rho_b)/2 + (rho_a - rho_b)/2 * m`.
    Affine { rho_a: f64, rho_b: f64 },
}

impl DensityModel {
    pub fn value(&self, m: f64) -> f64 {
        match *self {
            DensityModel::Constant(r) => r,
            DensityModel::Affine { rho_a, rho_b } => 0.5 * (rho_a + rho_b) + 0.5 * (rho_a - rho_b) * m,
        }
    }

    pub fn derivative(&self, _m: f64) -> f64 {
        match *self {
            DensityModel::Constant(_) => 0.0,
            DensityModel::Affine { rho_a, rho_b } => 0.5 * (rho_a - rho_b),
        }
    }
}

/// Affine two-phase density in the material parameter.
pub fn density_affine(m: f64, rho_a: f64, rho_b: f64) -> f64 {
    DensityModel::Affine { rho_a, rho_b }.value(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Orientation {
    /// Orientation is not a design variable.
    Fixed,
    /// Orientation is designed and the material repeats with this period.
    Free { period: f64 },
}

/// One material class `E_i(m)` with its density `rho_i(m)`.
#[derive(Debug, Clone)]
pub struct MaterialClass {
    pub label: String,
    /// `None` for classes without a material parameter.
    pub range: Option<ParamRange>,
    pub stiffness: StiffnessModel,
    pub density: DensityModel,
    pub orientation: Orientation,
}

impl MaterialClass {
    /// Fixed isotropic plane-strain material.
    pub fn isotropic(label: impl Into<String>, young: f64, poisson: f64, density: f64) -> Result<Self> {
        Ok(Self::constant(label, Tensor4::isotropic(young, poisson)?, density))
    }

    /// Fixed tensor, fixed orientation, constant density.
    pub fn constant(label: impl Into<String>, tensor: Tensor4, density: f64) -> Self {
        MaterialClass {
            label: label.into(),
            range: None,
            stiffness: StiffnessModel::Constant(tensor),
            density: DensityModel::Constant(density),
            orientation: Orientation::Fixed,
        }
    }

    /// Tabulated class parametrized over the database range, with affine density.
    pub fn tabulated(label: impl Into<String>, db: Arc<HomogenizedDatabase>, rho_a: f64, rho_b: f64) -> Result<Self> {
        let range = ParamRange::new(db.lower(), db.upper())?;
        Ok(MaterialClass {
            label: label.into(),
            range: Some(range),
            stiffness: StiffnessModel::Tabulated(db),
            density: DensityModel::Affine { rho_a, rho_b },
            orientation: Orientation::Fixed,
        })
    }

    pub fn with_free_orientation(mut self, period: f64) -> Self {
        self.orientation = Orientation::Free { period };
        self
    }

    pub fn is_parametrized(&self) -> bool {
        self.range.is_some()
    }

    pub fn period(&self) -> Option<f64> {
        match self.orientation {
            Orientation::Fixed => None,
            Orientation::Free { period } => Some(period),
        }
    }

    /// Parameter bounds; `(0, 0)` for unparametrized classes.
    pub fn m_bounds(&self) -> (f64, f64) {
        self.range.map_or((0.0, 0.0), |r| (r.lower, r.upper))
    }

    pub fn m_mid(&self) -> f64 {
        self.range.map_or(0.0, |r| r.mid())
    }

    /// Stiffness at parameter `m`. Parameters are clamped to the class range,
    /// which the optimizer maintains anyway.
    pub fn stiffness(&self, m: f64) -> Tensor4 {
        match &self.stiffness {
            StiffnessModel::Constant(t) => *t,
            StiffnessModel::Tabulated(db) => db
                .interp(self.clamp_m(m))
                .expect("clamped parameter lies inside the database range"),
        }
    }

    pub fn stiffness_derivative(&self, m: f64) -> Tensor4 {
        match &self.stiffness {
            StiffnessModel::Constant(_) => Tensor4::ZERO,
            StiffnessModel::Tabulated(db) => db
                .interp_derivative(self.clamp_m(m))
                .expect("clamped parameter lies inside the database range"),
        }
    }

    pub fn density(&self, m: f64) -> f64 {
        self.density.value(m)
    }

    pub fn density_derivative(&self, m: f64) -> f64 {
        if self.is_parametrized() {
            self.density.derivative(m)
        } else {
            0.0
        }
    }

    fn clamp_m(&self, m: f64) -> f64 {
        match self.range {
            Some(r) => m.clamp(r.lower, r.upper),
            None => m,
        }
    }

    /// Checks positive definiteness over the parameter range and a positive,
    /// non-decreasing density.
    pub fn validate(&self) -> Result<()> {
        let probes: Vec<f64> = match (&self.range, &self.stiffness) {
            (None, _) => vec![0.0],
            (Some(r), StiffnessModel::Constant(_)) => vec![r.lower, r.mid(), r.upper],
            (Some(r), StiffnessModel::Tabulated(db)) => {
                if (db.lower() - r.lower).abs() > 1e-12 || (db.upper() - r.upper).abs() > 1e-12 {
                    return Err(Error::Setup(format!(
                        "class `{}`: range [{}, {}] differs from database range [{}, {}]",
                        self.label,
                        r.lower,
                        r.upper,
                        db.lower(),
                        db.upper()
                    )));
                }
                let mut p = Vec::new();
                for iv in &db.intervals {
                    for k in 0..=8 {
                        p.push(iv.lower() + (iv.upper() - iv.lower()) * k as f64 / 8.0);
                    }
                }
                p
            }
        };
        for &m in &probes {
            let t = self.stiffness(m);
            if !t.is_positive_definite() {
                return Err(Error::Setup(format!(
                    "class `{}`: stiffness at m = {m} is not positive definite (eigenvalues {:?})",
                    self.label,
                    t.eigenvalues()
                )));
            }
            if !(self.density(m) > 0.0) {
                return Err(Error::Setup(format!(
                    "class `{}`: density at m = {m} is not positive",
                    self.label
                )));
            }
        }
        if self.is_parametrized() && self.density.derivative(0.0) < 0.0 {
            return Err(Error::Setup(format!(
                "class `{}`: density must be non-decreasing in the material parameter",
                self.label
            )));
        }
        if let Some(p) = self.period() {
            if !(p > 0.0) {
                return Err(Error::Setup(format!("class `{}`: orientation period must be positive", self.label)));
            }
        }
        Ok(())
    }
}
