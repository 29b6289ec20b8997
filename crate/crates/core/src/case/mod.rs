//! Configuration-driven optimization cases: presets, copolymer database
//! management, running and result export.

mod config;
mod export;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{
    parse_config, parse_fix, parse_region, preset_config, reference_tensor, BudgetConfig, ClassConfig, CompareOp,
    Condition, LoadConfig, MaterialsConfig, MaterialsKind, MeshConfig, OptimizerConfig, OutputConfig, Preset,
    ProblemConfig, Region, SupportConfig, HomogenizeConfig, DEFAULT_VOLUME_FRACTION,
};
pub use export::{svg_string, vtk_string, write_text, ClassInfo, DesignTable, VOID_LABEL};

use crate::error::{Error, Result};
use crate::fem::FemModel;
use crate::homogenize::{build_database, build_database_with_fields, DatabaseFile, HomogenizeSettings, PatternClass, PhaseProperties};
use crate::materials::MaterialClass;
use crate::mesh::Mesh;
use crate::optimizer::{filter_fields, history_csv, OcParams, OptimizationResult, Optimizer, Termination};
use crate::filter::build_filter;
use crate::problem::Problem;

/// Environment variable naming a directory where built copolymer databases
/// are cached.
pub const DB_CACHE_ENV: &str = "MULTITOP_DB_CACHE";

/// Everything needed to run a case.
#[derive(Debug, Clone)]
pub struct CaseSetup {
    pub config: ProblemConfig,
    pub problem: Problem,
    pub params: OcParams,
    pub database: Option<DatabaseFile>,
}

/// Builds the problem for a validated configuration, loading or building the
/// copolymer database when needed.
pub fn setup_case(config: &ProblemConfig) -> Result<CaseSetup> {
    config.validate()?;
    let params = config.oc_params()?;
    let mesh = config.build_mesh()?;
    let (classes, database) = match config.basic_classes()? {
        Some(c) => (c, None),
        None => {
            let db = copolymer_database(config)?;
            (db.material_classes()?, Some(db))
        }
    };
    let mass_limit = config.mass_limit(&mesh, &classes)?;
    let problem = Problem::new(mesh, classes, mass_limit, config.filter_radius()?)?;
    problem.check_feasible(params.z_min)?;
    Ok(CaseSetup {
        config: config.clone(),
        problem,
        params,
        database,
    })
}

/// Small deterministic hash for cache file names.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Cache file name for a database built with these inputs.
pub fn database_cache_name(props: &PhaseProperties, settings: &HomogenizeSettings, seed: u64) -> String {
    let key = serde_json::to_string(&(props, settings, seed)).expect("plain data serializes");
    format!("copolymer-{:016x}.json", fnv1a(key.as_bytes()))
}

/// Reads the configured database file, or the cached one, or builds it
/// (writing it to the configured path or the cache directory).
pub fn copolymer_database(config: &ProblemConfig) -> Result<DatabaseFile> {
    let props = config.phase_properties();
    let settings = config.homogenize_settings();
    let seed = config.seed;
    let target: Option<PathBuf> = match &config.materials.database {
        Some(p) => Some(p.clone()),
        None => std::env::var_os(DB_CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(|dir| PathBuf::from(dir).join(database_cache_name(&props, &settings, seed))),
    };
    if let Some(path) = &target {
        if path.exists() {
            let db = DatabaseFile::read(path)?;
            if config.materials.ratio.is_some() && db.phases != props {
                return Err(Error::config(
                    "materials.ratio",
                    format!("database {} was built for different phase properties", path.display()),
                ));
            }
            log::info!("using copolymer database {}", path.display());
            return Ok(db);
        }
    }
    log::info!("building copolymer database (9 phase-field runs)");
    let db = build_database(&PatternClass::ALL, &settings, &props, seed)?;
    if let Some(path) = &target {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        db.write(path)?;
        log::info!("wrote copolymer database {}", path.display());
    }
    Ok(db)
}

/// Scalar results of a run, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub preset: String,
    pub converged: bool,
    pub iterations: usize,
    pub num_elements: usize,
    pub initial_compliance: f64,
    pub compliance: f64,
    pub rounded_compliance: f64,
    pub mass: f64,
    pub rounded_mass: f64,
    pub mass_limit: f64,
    pub lambda: f64,
    pub final_kkt_residual: f64,
    pub classes: Vec<ClassInfo>,
}

impl CaseSummary {
    pub fn new(setup: &CaseSetup, result: &OptimizationResult) -> Self {
        let pb = &setup.problem;
        CaseSummary {
            preset: setup.config.mesh.preset.name().into(),
            converged: result.termination == Termination::Converged,
            iterations: result.history.len(),
            num_elements: pb.mesh.num_elements(),
            initial_compliance: result.history.first().map_or(f64::NAN, |r| r.compliance),
            compliance: result.compliance,
            rounded_compliance: result.rounded.compliance,
            mass: result.mass,
            rounded_mass: result.rounded.mass,
            mass_limit: pb.mass_limit,
            lambda: result.lambda,
            final_kkt_residual: result.history.last().map_or(f64::NAN, |r| r.kkt_residual),
            classes: pb.classes.iter().map(ClassInfo::from_class).collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub result: OptimizationResult,
    pub summary: CaseSummary,
    pub files: Vec<PathBuf>,
}

/// Optimizes a configured case and writes its outputs to `output.dir`.
pub fn run_case(config: &ProblemConfig) -> Result<CaseOutcome> {
    let setup = setup_case(config)?;
    run_setup(&setup, Some(&config.output.dir))
}

/// Runs a prepared case; outputs are written when `out_dir` is given.
pub fn run_setup(setup: &CaseSetup, out_dir: Option<&Path>) -> Result<CaseOutcome> {
    let result = Optimizer::new(&setup.problem, setup.params.clone())?.run()?;
    let summary = CaseSummary::new(setup, &result);
    let files = match out_dir {
        Some(dir) => write_outputs(dir, setup, &result, &summary)?,
        None => Vec::new(),
    };
    Ok(CaseOutcome { result, summary, files })
}

/// Writes `mesh.txt`, `history.csv`, `summary.json` and the enabled design
/// files into `dir`.
pub fn write_outputs(dir: &Path, setup: &CaseSetup, result: &OptimizationResult, summary: &CaseSummary) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = &setup.config.output;
    let pb = &setup.problem;
    let table = DesignTable::from_result(&pb.mesh, &pb.classes, result);
    let labels: Vec<String> = pb.classes.iter().map(|c| c.label.clone()).collect();
    let mut files = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        write_text(&p, text)?;
        files.push(p);
        Ok(())
    };
    put("mesh.txt", &pb.mesh.to_text())?;
    put("history.csv", &history_csv(&result.history))?;
    put(
        "summary.json",
        &serde_json::to_string_pretty(summary).map_err(|e| Error::parse("summary", e.to_string()))?,
    )?;
    if out.csv {
        put("design.csv", &table.to_csv()?)?;
    }
    if out.vtk {
        put("design.vtk", &vtk_string(&pb.mesh, &table, &labels)?)?;
    }
    if out.svg {
        put("design.svg", &svg_string(&pb.mesh, &table, &summary.classes)?)?;
    }
    Ok(files)
}

/// Compliance at the final exponent of a design reloaded from CSV: the
/// control variables are filtered again and the state is solved.
pub fn recompute_compliance(problem: &Problem, params: &OcParams, table: &DesignTable) -> Result<f64> {
    if table.num_classes != problem.classes.len() || table.num_elements() != problem.mesh.num_elements() {
        return Err(Error::InvalidArgument("design table does not match the problem".into()));
    }
    let filter = build_filter(problem.mesh.centroids(), problem.mesh.areas(), problem.filter_radius);
    let phys = filter_fields(&filter, &problem.classes, &table.control);
    let fem = FemModel::new(&problem.mesh, params.solver)?;
    Ok(fem.solve(&problem.classes, &phys, params.continuation.p_end)?.compliance)
}

/// Renders a design CSV to SVG. The mesh and class information are read
/// from `mesh.txt` and `summary.json` next to the CSV unless given.
pub fn render_csv(csv: &Path, svg: &Path, mesh_path: Option<&Path>) -> Result<()> {
    let dir = csv.parent().unwrap_or_else(|| Path::new("."));
    let mesh = Mesh::read(&mesh_path.map_or_else(|| dir.join("mesh.txt"), Path::to_path_buf))?;
    let table = DesignTable::read_csv(csv)?;
    let summary_path = dir.join("summary.json");
    let classes = if summary_path.exists() {
        CaseSummary::read(&summary_path)?.classes
    } else {
        fallback_classes(&table)
    };
    write_text(svg, &svg_string(&mesh, &table, &classes)?)
}

/// Class info guessed from the table alone: labels in order of appearance,
/// copolymer spot classes isotropic, everything else hatched along x.
fn fallback_classes(table: &DesignTable) -> Vec<ClassInfo> {
    let mut labels: Vec<String> = Vec::new();
    for l in &table.class_label {
        if l != VOID_LABEL && !labels.contains(l) {
            labels.push(l.clone());
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let pc = PatternClass::from_label(&label);
            ClassInfo {
                isotropic: pc.is_some_and(PatternClass::is_spots),
                axis_angle: 0.0,
                orientation_period: (pc == Some(PatternClass::Stripes)).then_some(std::f64::consts::PI),
                label,
            }
        })
        .collect()
}

/// Material classes of a configuration (builds the database if needed).
pub fn material_classes(config: &ProblemConfig) -> Result<Vec<MaterialClass>> {
    match config.basic_classes()? {
        Some(c) => Ok(c),
        None => copolymer_database(config)?.material_classes(),
    }
}

/// Builds a database as configured, writes it, and optionally dumps the
/// equilibrium phase fields as `phi_<class>_<m>.bin`.
pub fn run_homogenize(cfg: &HomogenizeConfig) -> Result<DatabaseFile> {
    let classes = cfg.pattern_classes()?;
    let props = cfg.phase_properties();
    let (db, cells) = build_database_with_fields(&classes, &cfg.settings, &props, cfg.seed)?;
    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    db.write(&cfg.output)?;
    if let Some(dir) = &cfg.dump_fields {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let samples = db.classes.iter().flat_map(|c| c.samples.iter());
        for (s, cell) in samples.zip(&cells) {
            let path = dir.join(format!("phi_{}_{:+.3}.bin", s.class.label(), s.m));
            std::fs::write(&path, cell.to_binary()).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(db)
}
