use crate::error::{Error, Result};
use crate::materials::MaterialClass;
use crate::mesh::Mesh;

/// A complete compliance-minimization problem: mesh with boundary conditions,
/// the candidate material classes, the mass budget and the filter radius.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub classes: Vec<MaterialClass>,
    pub mass_limit: f64,
    pub filter_radius: f64,
}

impl Problem {
    pub fn new(mesh: Mesh, classes: Vec<MaterialClass>, mass_limit: f64, filter_radius: f64) -> Result<Self> {
        let p = Problem {
            mesh,
            classes,
            mass_limit,
            filter_radius,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Setup("at least one material class is required".into()));
        }
        for c in &self.classes {
            c.validate()?;
        }
        if self.mesh.fixed_dofs().is_empty() {
            return Err(Error::Setup("no Dirichlet boundary conditions".into()));
        }
        if self.mesh.load_vector().iter().all(|&f| f == 0.0) {
            return Err(Error::Setup("load vector is identically zero".into()));
        }
        if !(self.filter_radius >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "filter radius must be non-negative, got {}",
                self.filter_radius
            )));
        }
        if !(self.mass_limit.is_finite()) {
            return Err(Error::InvalidArgument("mass limit must be finite".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Mass of the lightest admissible design: every class at `z_min` with
    /// its smallest parameter. The budget must exceed it strictly.
    pub fn minimum_mass(&self, z_min: f64) -> f64 {
        let rho: f64 = self.classes.iter().map(|c| c.density(c.m_bounds().0)).sum();
        self.mesh.total_area() * z_min * rho
    }

    /// `Err(Infeasible)` unless `mass_limit > |Omega| z_min sum_i rho_i(m_lower_i)`
    /// and `N z_min <= 1`.
    pub fn check_feasible(&self, z_min: f64) -> Result<()> {
        let n = self.classes.len() as f64;
        if n * z_min > 1.0 {
            return Err(Error::Infeasible(format!(
                "{} classes with z_min = {z_min} cannot satisfy sum z <= 1",
                self.classes.len()
            )));
        }
        let floor = self.minimum_mass(z_min);
        if !(self.mass_limit > floor) {
            return Err(Error::Infeasible(format!(
                "mass budget {} must exceed |Omega| * z_min * sum_i rho_i(m_lower_i) = {floor}",
                self.mass_limit
            )));
        }
        Ok(())
    }
}

/// Budget as a fraction of the domain filled with the densest class at its
/// largest parameter.
pub fn mass_limit_from_fraction(mesh: &Mesh, classes: &[MaterialClass], fraction: f64) -> f64 {
    let rho_max = classes
        .iter()
        .map(|c| c.density(c.m_bounds().1))
        .fold(0.0f64, f64::max);
    fraction * mesh.total_area() * rho_max
}
