use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multitop::case::{
    parse_config, render_csv, run_homogenize, run_setup, setup_case, HomogenizeConfig, ProblemConfig, DB_CACHE_ENV,
};
use multitop::optimizer::Termination;
use multitop::Error;

/// Multimaterial anisotropic topology optimization.
#[derive(Debug, Parser)]
#[command(name = "multitop", version, about)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an optimization case.
    Optimize {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Validate and build the problem without solving.
        #[arg(long)]
        dry_run: bool,
    },
    /// Build a copolymer material database.
    #[command(after_help = format!("Set {DB_CACHE_ENV} to cache databases built by `optimize`."))]
    Homogenize {
        /// Optional TOML file; flags override its values.
        config: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
        /// Stiffness ratio E_A / E_B.
        #[arg(long)]
        ratio: Option<f64>,
        /// Comma-separated class labels (A-spots, stripes, B-spots).
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Database output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for raw phase-field dumps.
        #[arg(long)]
        dump_fields: Option<PathBuf>,
    },
    /// Validate a case configuration.
    Check { config: PathBuf },
    /// Render a design CSV as SVG.
    Render {
        csv: PathBuf,
        svg: PathBuf,
        /// Mesh file (default: mesh.txt next to the CSV).
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_MAX_ITERS: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(match e {
                Error::Solver(_) => EXIT_SOLVER,
                _ => EXIT_ERROR,
            })
        }
    }
}

fn read_config(path: &Path) -> multitop::Result<ProblemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config(&text)
}

fn run(command: Command) -> multitop::Result<u8> {
    match command {
        Command::Optimize {
            config,
            overrides,
            dry_run,
        } => {
            let mut cfg = read_config(&config)?;
            if let Some(s) = overrides.seed {
                cfg.seed = s;
            }
            if let Some(n) = overrides.max_iters {
                cfg.optimizer.max_iters = Some(n);
            }
            if let Some(dir) = overrides.out {
                cfg.output.dir = dir;
            }
            let setup = setup_case(&cfg)?;
            let pb = &setup.problem;
            log::info!(
                "{} elements, {} classes, mass budget {}, filter radius {}",
                pb.mesh.num_elements(),
                pb.classes.len(),
                pb.mass_limit,
                pb.filter_radius
            );
            if dry_run {
                println!("configuration is valid");
                return Ok(EXIT_OK);
            }
            let outcome = run_setup(&setup, Some(&cfg.output.dir))?;
            let s = &outcome.summary;
            println!(
                "{} after {} iterations: compliance {:.6e}, rounded {:.6e}, mass {:.6e} / {:.6e}",
                if s.converged { "converged" } else { "stopped at the iteration limit" },
                s.iterations,
                s.compliance,
                s.rounded_compliance,
                s.mass,
                s.mass_limit
            );
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            Ok(match outcome.result.termination {
                Termination::Converged => EXIT_OK,
                Termination::MaxIterations => EXIT_MAX_ITERS,
            })
        }
        Command::Homogenize {
            config,
            gamma,
            grid,
            ratio,
            classes,
            seed,
            out,
            dump_fields,
        } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    HomogenizeConfig::parse(&text)?
                }
                None => HomogenizeConfig::default(),
            };
            if let Some(g) = gamma {
                cfg.settings.gamma = g;
            }
            if let Some(n) = grid {
                cfg.settings.grid = n;
            }
            if let Some(r) = ratio {
                cfg.ratio = r;
                cfg.phases = None;
            }
            if classes.is_some() {
                cfg.classes = classes;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            if dump_fields.is_some() {
                cfg.dump_fields = dump_fields;
            }
            cfg.settings.validate()?;
            let db = run_homogenize(&cfg)?;
            for c in &db.classes {
                for s in &c.samples {
                    println!(
                        "{:>8} m = {:+.3}: xxxx {:.2} yyyy {:.2} xxyy {:.2} xyxy {:.2} density {:.3}",
                        s.class.label(),
                        s.m,
                        s.tensor.xxxx(),
                        s.tensor.yyyy(),
                        s.tensor.xxyy(),
                        s.tensor.xyxy(),
                        s.density
                    );
                }
            }
            println!("wrote {}", cfg.output.display());
            Ok(EXIT_OK)
        }
        Command::Check { config } => {
            read_config(&config)?;
            println!("configuration is valid");
            Ok(EXIT_OK)
        }
        Command::Render { csv, svg, mesh } => {
            render_csv(&csv, &svg, mesh.as_deref())?;
            println!("wrote {}", svg.display());
            Ok(EXIT_OK)
        }
    }
}
