//! Case configuration: TOML parsing, presets and boundary-condition predicates.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fem::SolverKind;
use crate::homogenize::{HomogenizeSettings, PatternClass, PhaseProperties};
use crate::materials::{DensityModel, MaterialClass, Orientation, ParamRange, StiffnessModel, Tensor4};
use crate::mesh::{build_lshape_mesh_with, build_rect_mesh_with, Fix, Mesh, Triangulation};
use crate::optimizer::{OcParams, ThetaInit, UpdateRule};
use crate::problem::{mass_limit_from_fraction, Problem};

/// Homogenized tensor of a 50/50 stripe laminate of (E = 1000, nu = 0.3) and
/// (E = 100, nu = 0.3), stripes along x; the default anisotropic material.
pub fn reference_tensor() -> Tensor4 {
    Tensor4::orthotropic(665.5, 332.8, 142.6, 95.2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Mbb,
    Square,
    Lshape,
    File,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Mbb => "mbb",
            Preset::Square => "square",
            Preset::Lshape => "lshape",
            Preset::File => "file",
        }
    }

    /// Domain size (width, height).
    pub fn domain(self) -> Option<(f64, f64)> {
        match self {
            Preset::Mbb => Some((20.0, 4.0)),
            Preset::Square | Preset::Lshape => Some((8.0, 8.0)),
            Preset::File => None,
        }
    }

    pub fn filter_radius(self) -> Option<f64> {
        match self {
            Preset::Mbb | Preset::Lshape => Some(0.15),
            Preset::Square => Some(0.1),
            Preset::File => None,
        }
    }

    /// Default cell counts (nx, ny).
    pub fn resolution(self) -> (usize, usize) {
        match self {
            Preset::Mbb => (100, 20),
            Preset::Square | Preset::Lshape => (48, 48),
            Preset::File => (0, 0),
        }
    }

    pub fn supports(self) -> Vec<SupportConfig> {
        let s = |at: &str, fix: &str| SupportConfig {
            at: at.into(),
            fix: fix.into(),
        };
        match self {
            Preset::Mbb => vec![s("nearest(0, 0)", "xy"), s("nearest(20, 0)", "y")],
            Preset::Square => vec![s("nearest(0, 4)", "xy"), s("nearest(8, 4)", "xy")],
            Preset::Lshape => vec![s("y >= 8 && x <= 4", "xy")],
            Preset::File => Vec::new(),
        }
    }

    pub fn loads(self) -> Vec<LoadConfig> {
        let point = |x: f64, y: f64| LoadConfig {
            at: format!("nearest({x}, {y})"),
            force: Some([0.0, -1.0]),
            traction: None,
        };
        match self {
            Preset::Mbb => vec![point(10.0, 4.0)],
            Preset::Square => vec![point(4.0, 4.0)],
            Preset::Lshape => vec![point(8.0, 2.0)],
            Preset::File => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub preset: Preset,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub triangulation: Option<Triangulation>,
    /// Mesh text file for the `file` preset.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialsKind {
    /// Rotated copies of one anisotropic tensor.
    #[default]
    Rotated,
    /// Classes listed one by one.
    Explicit,
    /// The three copolymer classes from a homogenized database.
    Copolymer,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub label: String,
    pub tensor: Option<Tensor4>,
    pub young: Option<f64>,
    pub poisson: Option<f64>,
    #[serde(default = "one")]
    pub density: f64,
    /// Counter-clockwise rotation applied to the tensor, in degrees.
    #[serde(default)]
    pub angle_deg: f64,
    /// Makes the orientation a design variable with this period (degrees).
    pub orientation_period_deg: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    #[serde(default)]
    pub kind: MaterialsKind,
    pub angles_deg: Option<Vec<f64>>,
    pub angles: Option<Vec<f64>>,
    pub reference: Option<Tensor4>,
    pub density: Option<f64>,
    #[serde(default, rename = "class")]
    pub classes: Vec<ClassConfig>,
    /// Database file; built and written there when missing.
    pub database: Option<PathBuf>,
    /// Stiffness ratio E_A / E_B of the copolymer phases.
    pub ratio: Option<f64>,
    pub homogenize: Option<HomogenizeSettings>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub volume_fraction: Option<f64>,
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportConfig {
    pub at: String,
    pub fix: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub at: String,
    pub force: Option<[f64; 2]>,
    pub traction: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: Option<usize>,
    pub change_tol: Option<f64>,
    pub z_min: Option<f64>,
    pub delta: Option<f64>,
    pub move_limit: Option<f64>,
    pub eta: Option<f64>,
    pub bisection_tol: Option<f64>,
    pub p_start: Option<f64>,
    pub p_end: Option<f64>,
    pub p_hold: Option<usize>,
    pub p_ramp: Option<usize>,
    pub update_rule: Option<String>,
    pub theta_init: Option<String>,
    pub theta_max_step: Option<f64>,
    pub eps_scale: Option<f64>,
    pub solver: Option<String>,
    pub cg_tol: Option<f64>,
    pub cg_max_iter: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: bool,
    pub vtk: bool,
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            csv: true,
            vtk: true,
            svg: true,
        }
    }
}

/// A complete optimization case.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mesh: MeshConfig,
    #[serde(default)]
    pub materials: MaterialsConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    pub filter_radius: Option<f64>,
    #[serde(default)]
    pub supports: Vec<SupportConfig>,
    #[serde(default)]
    pub loads: Vec<LoadConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Parses and validates a TOML case description.
pub fn parse_config(text: &str) -> Result<ProblemConfig> {
    let cfg: ProblemConfig = toml::from_str(text).map_err(|e| Error::parse("config", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Minimal configuration for a preset with all defaults.
pub fn preset_config(preset: Preset) -> ProblemConfig {
    ProblemConfig {
        mesh: MeshConfig {
            preset,
            nx: None,
            ny: None,
            triangulation: None,
            file: None,
        },
        materials: MaterialsConfig::default(),
        budget: BudgetConfig::default(),
        filter_radius: None,
        supports: Vec::new(),
        loads: Vec::new(),
        optimizer: OptimizerConfig::default(),
        output: OutputConfig::default(),
        seed: 0,
    }
}

/// Default volume fraction when the budget section is empty.
pub const DEFAULT_VOLUME_FRACTION: f64 = 0.4;

fn positive(key: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::config(key, format!("must be positive, got {x}"))),
        _ => Ok(()),
    }
}

impl ProblemConfig {
    pub fn filter_radius(&self) -> Result<f64> {
        self.filter_radius
            .or_else(|| self.mesh.preset.filter_radius())
            .ok_or_else(|| Error::config("filter_radius", "required for meshes read from file"))
    }

    pub fn triangulation(&self) -> Triangulation {
        self.mesh.triangulation.unwrap_or(Triangulation::Crossed)
    }

    /// Supports in effect: the configured ones, or the preset defaults.
    pub fn effective_supports(&self) -> Vec<SupportConfig> {
        if self.supports.is_empty() {
            self.mesh.preset.supports()
        } else {
            self.supports.clone()
        }
    }

    pub fn effective_loads(&self) -> Vec<LoadConfig> {
        if self.loads.is_empty() {
            self.mesh.preset.loads()
        } else {
            self.loads.clone()
        }
    }

    pub fn phase_properties(&self) -> PhaseProperties {
        PhaseProperties::with_ratio(self.materials.ratio.unwrap_or(10.0))
    }

    pub fn homogenize_settings(&self) -> HomogenizeSettings {
        self.materials.homogenize.unwrap_or_default()
    }

    /// Structural checks, mesh and boundary conditions, and budget
    /// feasibility. Does not build a copolymer database.
    pub fn validate(&self) -> Result<()> {
        let (nx, ny) = self.resolution();
        if self.mesh.preset != Preset::File && (nx == 0 || ny == 0) {
            return Err(Error::config("mesh.nx", "resolution must be positive"));
        }
        if self.mesh.preset == Preset::Lshape && (nx % 2 != 0 || self.mesh.ny.is_some_and(|n| n != nx)) {
            return Err(Error::config("mesh.nx", "L-shape needs an even nx and ny equal to nx"));
        }
        if self.mesh.preset == Preset::File && self.mesh.file.is_none() {
            return Err(Error::config("mesh.file", "required by the `file` preset"));
        }
        if self.mesh.preset != Preset::File && self.mesh.file.is_some() {
            return Err(Error::config("mesh.file", "only valid with the `file` preset"));
        }
        positive("filter_radius", self.filter_radius)?;
        self.filter_radius()?;
        self.validate_materials()?;
        self.validate_budget()?;
        self.oc_params()?;
        for (k, s) in self.effective_supports().iter().enumerate() {
            parse_region(&s.at).map_err(|m| Error::config(format!("supports[{k}].at"), m))?;
            parse_fix(&s.fix).map_err(|m| Error::config(format!("supports[{k}].fix"), m))?;
        }
        for (k, l) in self.effective_loads().iter().enumerate() {
            let region = parse_region(&l.at).map_err(|m| Error::config(format!("loads[{k}].at"), m))?;
            match (l.force, l.traction, &region) {
                (Some(_), None, Region::Nearest(_)) | (None, Some(_), Region::Where(_)) => {}
                (Some(_), None, _) => {
                    return Err(Error::config(format!("loads[{k}].force"), "a point force needs `at = \"nearest(x, y)\"`"))
                }
                (None, Some(_), _) => {
                    return Err(Error::config(format!("loads[{k}].traction"), "a traction needs a boundary region"))
                }
                _ => return Err(Error::config(format!("loads[{k}]"), "give exactly one of `force` or `traction`")),
            }
        }
        let mesh = self.build_mesh()?;
        let classes = self.density_classes()?;
        let mass_limit = self.mass_limit(&mesh, &classes)?;
        let probe = Problem {
            mesh,
            classes,
            mass_limit,
            filter_radius: self.filter_radius()?,
        };
        probe.check_feasible(self.oc_params()?.z_min)
    }

    fn resolution(&self) -> (usize, usize) {
        let (dx, dy) = self.mesh.preset.resolution();
        let nx = self.mesh.nx.unwrap_or(dx);
        let ny = self.mesh.ny.unwrap_or(match self.mesh.preset {
            Preset::Mbb => (nx / 5).max(1),
            Preset::Square | Preset::Lshape => nx,
            Preset::File => dy,
        });
        (nx, ny)
    }

    fn validate_materials(&self) -> Result<()> {
        let m = &self.materials;
        positive("materials.density", m.density)?;
        positive("materials.ratio", m.ratio)?;
        let unused = |key: &str, present: bool| {
            if present {
                Err(Error::config(format!("materials.{key}"), "not used by this material kind"))
            } else {
                Ok(())
            }
        };
        match m.kind {
            MaterialsKind::Rotated => {
                if m.angles.is_some() && m.angles_deg.is_some() {
                    return Err(Error::config("materials.angles", "give either `angles` or `angles_deg`"));
                }
                if self.angles().is_empty() {
                    return Err(Error::config("materials.angles_deg", "at least one angle is needed"));
                }
                if let Some(t) = m.reference {
                    if !t.is_positive_definite() {
                        return Err(Error::config("materials.reference", "tensor is not positive definite"));
                    }
                }
                unused("class", !m.classes.is_empty())?;
                unused("database", m.database.is_some())?;
                unused("ratio", m.ratio.is_some())?;
                unused("homogenize", m.homogenize.is_some())?;
            }
            MaterialsKind::Explicit => {
                if m.classes.is_empty() {
                    return Err(Error::config("materials.class", "at least one class is needed"));
                }
                for (k, c) in m.classes.iter().enumerate() {
                    self.explicit_class(k, c)?;
                }
                unused("angles", m.angles.is_some() || m.angles_deg.is_some())?;
                unused("reference", m.reference.is_some())?;
                unused("density", m.density.is_some())?;
                unused("database", m.database.is_some())?;
                unused("ratio", m.ratio.is_some())?;
                unused("homogenize", m.homogenize.is_some())?;
            }
            MaterialsKind::Copolymer => {
                unused("angles", m.angles.is_some() || m.angles_deg.is_some())?;
                unused("reference", m.reference.is_some())?;
                unused("density", m.density.is_some())?;
                unused("class", !m.classes.is_empty())?;
                if let Some(s) = &m.homogenize {
                    s.validate().map_err(|e| Error::config("materials.homogenize", e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    fn validate_budget(&self) -> Result<()> {
        let b = &self.budget;
        match (b.volume_fraction, b.mass) {
            (Some(_), Some(_)) => Err(Error::config("budget", "give either `volume_fraction` or `mass`")),
            (Some(f), None) if !(f > 0.0 && f <= 1.0) => Err(Error::Infeasible(format!(
                "budget.volume_fraction = {f} must lie in (0, 1]"
            ))),
            (None, Some(m)) if !(m.is_finite()) => Err(Error::config("budget.mass", "must be finite")),
            _ => Ok(()),
        }
    }

    /// Orientation angles (radians) of the rotated material set.
    pub fn angles(&self) -> Vec<f64> {
        match (&self.materials.angles, &self.materials.angles_deg) {
            (Some(a), _) => a.clone(),
            (None, Some(d)) => d.iter().map(|x| x.to_radians()).collect(),
            (None, None) => vec![0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0],
        }
    }

    fn explicit_class(&self, k: usize, c: &ClassConfig) -> Result<MaterialClass> {
        let key = |f: &str| format!("materials.class[{k}].{f}");
        let tensor = match (c.tensor, c.young, c.poisson) {
            (Some(t), None, None) => t,
            (None, Some(e), Some(nu)) => Tensor4::isotropic(e, nu).map_err(|err| Error::config(key("young"), err.to_string()))?,
            _ => return Err(Error::config(key("tensor"), "give either `tensor` or both `young` and `poisson`")),
        };
        if !tensor.is_positive_definite() {
            return Err(Error::config(key("tensor"), "tensor is not positive definite"));
        }
        if !(c.density > 0.0) {
            return Err(Error::config(key("density"), "must be positive"));
        }
        let mut class = MaterialClass::constant(c.label.clone(), tensor.rotate(c.angle_deg.to_radians()), c.density);
        if let Some(t) = c.orientation_period_deg {
            if !(t > 0.0) {
                return Err(Error::config(key("orientation_period_deg"), "must be positive"));
            }
            class = class.with_free_orientation(t.to_radians());
        }
        Ok(class)
    }

    /// Material classes that do not require the copolymer database.
    pub fn basic_classes(&self) -> Result<Option<Vec<MaterialClass>>> {
        let m = &self.materials;
        Ok(match m.kind {
            MaterialsKind::Rotated => {
                let t = m.reference.unwrap_or_else(reference_tensor);
                let rho = m.density.unwrap_or(1.0);
                Some(
                    self.angles()
                        .iter()
                        .map(|&a| MaterialClass::constant(format!("{:.4}deg", a.to_degrees()), t.rotate(a), rho))
                        .collect(),
                )
            }
            MaterialsKind::Explicit => Some(
                m.classes
                    .iter()
                    .enumerate()
                    .map(|(k, c)| self.explicit_class(k, c))
                    .collect::<Result<_>>()?,
            ),
            MaterialsKind::Copolymer => None,
        })
    }

    /// Classes with the right parameter ranges and densities, used for
    /// budget checks without building the copolymer database.
    fn density_classes(&self) -> Result<Vec<MaterialClass>> {
        if let Some(c) = self.basic_classes()? {
            return Ok(c);
        }
        let props = self.phase_properties();
        PatternClass::ALL
            .iter()
            .map(|pc| {
                let (lo, hi) = pc.interval();
                Ok(MaterialClass {
                    label: pc.label().into(),
                    range: Some(ParamRange::new(lo, hi)?),
                    stiffness: StiffnessModel::Constant(Tensor4::isotropic(props.young_a, props.poisson_a)?),
                    density: DensityModel::Affine {
                        rho_a: props.rho_a,
                        rho_b: props.rho_b,
                    },
                    orientation: Orientation::Fixed,
                })
            })
            .collect()
    }

    /// Mesh with supports and loads applied.
    pub fn build_mesh(&self) -> Result<Mesh> {
        let (nx, ny) = self.resolution();
        let tri = self.triangulation();
        let mut mesh = match self.mesh.preset {
            Preset::Mbb | Preset::Square => {
                let (w, h) = self.mesh.preset.domain().expect("preset has a domain");
                build_rect_mesh_with(w, h, nx, ny, tri)?
            }
            Preset::Lshape => build_lshape_mesh_with(8.0, nx, tri)?,
            Preset::File => {
                let path = self.mesh.file.as_ref().expect("validated");
                Mesh::read(path)?
            }
        };
        let (lo, hi) = mesh.bounding_box();
        let tol = 1e-9 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
        for (k, s) in self.effective_supports().iter().enumerate() {
            let region = parse_region(&s.at).map_err(|m| Error::config(format!("supports[{k}].at"), m))?;
            let fix = parse_fix(&s.fix).map_err(|m| Error::config(format!("supports[{k}].fix"), m))?;
            let hits = match region {
                Region::Nearest(p) => {
                    mesh.fix_nearest(p, fix);
                    1
                }
                Region::Where(conds) => mesh.fix_where(|p| matches(&conds, p, tol), fix),
            };
            if hits == 0 {
                return Err(Error::config(format!("supports[{k}].at"), format!("`{}` selects no node", s.at)));
            }
        }
        for (k, l) in self.effective_loads().iter().enumerate() {
            let region = parse_region(&l.at).map_err(|m| Error::config(format!("loads[{k}].at"), m))?;
            match (region, l.force, l.traction) {
                (Region::Nearest(p), Some(f), None) => {
                    mesh.add_point_load(p, f);
                }
                (Region::Where(conds), None, Some(t)) => {
                    let len = mesh.add_edge_traction(|p| matches(&conds, p, tol), t);
                    if len == 0.0 {
                        return Err(Error::config(format!("loads[{k}].at"), format!("`{}` selects no boundary edge", l.at)));
                    }
                }
                _ => return Err(Error::config(format!("loads[{k}]"), "give a point force at nearest(x, y) or a traction on a region")),
            }
        }
        if mesh.supports().next().is_none() {
            return Err(Error::config("supports", "no supports"));
        }
        if mesh.load_vector().iter().all(|&f| f == 0.0) {
            return Err(Error::config("loads", "the load vector is zero"));
        }
        Ok(mesh)
    }

    /// Mass budget for the given classes.
    pub fn mass_limit(&self, mesh: &Mesh, classes: &[MaterialClass]) -> Result<f64> {
        Ok(match (self.budget.volume_fraction, self.budget.mass) {
            (_, Some(m)) => m,
            (f, None) => mass_limit_from_fraction(mesh, classes, f.unwrap_or(DEFAULT_VOLUME_FRACTION)),
        })
    }

    pub fn oc_params(&self) -> Result<OcParams> {
        let o = &self.optimizer;
        let mut p = OcParams::default();
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = o.$field {
                    p.$field = v;
                }
            };
        }
        set!(max_iters);
        set!(change_tol);
        set!(z_min);
        set!(delta);
        set!(move_limit);
        set!(eta);
        set!(bisection_tol);
        set!(eps_scale);
        if let Some(v) = o.p_start {
            p.continuation.p_start = v;
        }
        if let Some(v) = o.p_end {
            p.continuation.p_end = v;
        }
        if let Some(v) = o.p_hold {
            p.continuation.hold = v;
        }
        if let Some(v) = o.p_ramp {
            p.continuation.ramp = v;
        }
        if let Some(v) = o.theta_max_step {
            p.theta_search.max_step = v;
        }
        if let Some(r) = &o.update_rule {
            p.update_rule = match r.as_str() {
                "enhanced" => UpdateRule::Enhanced,
                "plain" => UpdateRule::Plain,
                _ => return Err(Error::config("optimizer.update_rule", format!("unknown rule `{r}` (enhanced | plain)"))),
            };
        }
        if let Some(t) = &o.theta_init {
            p.theta_init = match t.as_str() {
                "zero" => ThetaInit::Zero,
                "random" => ThetaInit::Random { seed: self.seed },
                _ => return Err(Error::config("optimizer.theta_init", format!("unknown mode `{t}` (zero | random)"))),
            };
        }
        match o.solver.as_deref() {
            None | Some("cholesky") => {
                if o.cg_tol.is_some() || o.cg_max_iter.is_some() {
                    return Err(Error::config("optimizer.cg_tol", "only used with solver = \"cg\""));
                }
            }
            Some("cg") => {
                p.solver = SolverKind::ConjugateGradient {
                    rel_tol: o.cg_tol.unwrap_or(1e-10),
                    max_iter: o.cg_max_iter.unwrap_or(20_000),
                }
            }
            Some(s) => return Err(Error::config("optimizer.solver", format!("unknown solver `{s}` (cholesky | cg)"))),
        }
        p.validate().map_err(|e| Error::config("optimizer", e.to_string()))?;
        Ok(p)
    }
}

/// Node selector of a support or load.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// The single node closest to a point.
    Nearest([f64; 2]),
    /// All nodes satisfying every condition.
    Where(Vec<Condition>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

/// `coordinate op value` with `axis` 0 for x and 1 for y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub axis: usize,
    pub op: CompareOp,
    pub value: f64,
}

impl Condition {
    /// Evaluates with an absolute tolerance on equalities.
    pub fn holds(&self, p: [f64; 2], tol: f64) -> bool {
        let x = p[self.axis];
        match self.op {
            CompareOp::Lt => x < self.value - tol,
            CompareOp::Le => x <= self.value + tol,
            CompareOp::Eq => (x - self.value).abs() <= tol,
            CompareOp::Ge => x >= self.value - tol,
            CompareOp::Gt => x > self.value + tol,
        }
    }
}

fn matches(conds: &[Condition], p: [f64; 2], tol: f64) -> bool {
    conds.iter().all(|c| c.holds(p, tol))
}

/// Parses `nearest(x, y)` or conditions such as `x <= 0 && y > 2` joined by `&&`.
pub fn parse_region(s: &str) -> std::result::Result<Region, String> {
    let t = s.trim();
    if let Some(rest) = t.strip_prefix("nearest") {
        let inner = rest
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("expected `nearest(x, y)`, got `{t}`"))?;
        let v: Vec<f64> = inner
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("bad coordinate in `{t}`: {e}"))?;
        if v.len() != 2 {
            return Err(format!("`nearest` takes two coordinates, got `{t}`"));
        }
        return Ok(Region::Nearest([v[0], v[1]]));
    }
    let mut conds = Vec::new();
    for part in t.split("&&") {
        let part = part.trim();
        let (axis, rest) = if let Some(r) = part.strip_prefix('x') {
            (0, r)
        } else if let Some(r) = part.strip_prefix('y') {
            (1, r)
        } else {
            return Err(format!("condition `{part}` must start with x or y"));
        };
        let rest = rest.trim_start();
        let (op, num) = [
            ("<=", CompareOp::Le),
            (">=", CompareOp::Ge),
            ("==", CompareOp::Eq),
            ("<", CompareOp::Lt),
            (">", CompareOp::Gt),
        ]
        .iter()
        .find_map(|(tok, op)| rest.strip_prefix(tok).map(|n| (*op, n)))
        .ok_or_else(|| format!("condition `{part}` needs one of <, <=, ==, >=, >"))?;
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|e| format!("bad number in `{part}`: {e}"))?;
        conds.push(Condition { axis, op, value });
    }
    Ok(Region::Where(conds))
}

pub fn parse_fix(s: &str) -> std::result::Result<Fix, String> {
    match s.trim() {
        "xy" | "yx" => Ok(Fix::XY),
        "x" => Ok(Fix::X),
        "y" => Ok(Fix::Y),
        other => Err(format!("unknown component set `{other}` (xy | x | y)")),
    }
}

/// Stand-alone database build.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogenizeConfig {
    /// Stiffness ratio E_A / E_B; ignored when `phases` is given.
    #[serde(default = "ten")]
    pub ratio: f64,
    pub phases: Option<PhaseProperties>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_db_path")]
    pub output: PathBuf,
    /// Class labels to build (`A-spots`, `stripes`, `B-spots`); all by default.
    pub classes: Option<Vec<String>>,
    /// Directory for the raw equilibrium phase fields.
    pub dump_fields: Option<PathBuf>,
    #[serde(default)]
    pub settings: HomogenizeSettings,
}

fn ten() -> f64 {
    10.0
}

fn default_db_path() -> PathBuf {
    PathBuf::from("copolymer_db.json")
}

impl Default for HomogenizeConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl HomogenizeConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: HomogenizeConfig = toml::from_str(text).map_err(|e| Error::parse("homogenize config", e.to_string()))?;
        cfg.pattern_classes()?;
        cfg.phase_properties().validate()?;
        cfg.settings.validate()?;
        Ok(cfg)
    }

    pub fn phase_properties(&self) -> PhaseProperties {
        self.phases.unwrap_or_else(|| PhaseProperties::with_ratio(self.ratio))
    }

    pub fn pattern_classes(&self) -> Result<Vec<PatternClass>> {
        match &self.classes {
            None => Ok(PatternClass::ALL.to_vec()),
            Some(v) if v.is_empty() => Err(Error::config("classes", "at least one class is needed")),
            Some(v) => v
                .iter()
                .map(|s| {
                    PatternClass::from_label(s)
                        .ok_or_else(|| Error::config("classes", format!("unknown class `{s}` (A-spots | stripes | B-spots)")))
                })
                .collect(),
        }
    }
}
