//! Generalized optimality-criteria optimizer with nested multiplier
//! bisection, SIMP continuation and a line-searched orientation update.

mod update;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use update::{kkt_residual, solve_lambda, solve_mu, MassEvaluator, MultiplierSolution, MuSolution, UpdateData};

use crate::error::{Error, Result};
use crate::fem::{total_mass, DesignField, Equilibrium, FemModel, Fields, Sensitivities, SolverKind};
use crate::filter::{build_filter, FilterOperator};
use crate::materials::MaterialClass;
use crate::problem::Problem;

/// Which fixed-point map updates `z` and `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// Damped (`B^eta`) update with move limits.
    #[default]
    Enhanced,
    /// Undamped update clamped only to the variable bounds.
    Plain,
}

/// Piecewise-linear SIMP exponent schedule: `p_start` for the first `hold`
/// iterations, then a linear ramp over `ramp` iterations, then `p_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Continuation {
    pub p_start: f64,
    pub p_end: f64,
    pub hold: usize,
    pub ramp: usize,
}

impl Default for Continuation {
    fn default() -> Self {
        Continuation {
            p_start: 1.0,
            p_end: 3.0,
            hold: 30,
            ramp: 30,
        }
    }
}

impl Continuation {
    pub fn p(&self, iter: usize) -> f64 {
        if iter < self.hold {
            self.p_start
        } else if iter < self.hold + self.ramp {
            self.p_start + (self.p_end - self.p_start) * (iter - self.hold) as f64 / self.ramp as f64
        } else {
            self.p_end
        }
    }

    /// First iteration at which the final exponent is in effect.
    pub fn settled_at(&self) -> usize {
        self.hold + self.ramp
    }
}

/// SIMP exponent for iteration `iter` under the default schedule.
pub fn continuation_p(iter: usize) -> f64 {
    Continuation::default().p(iter)
}

/// Backtracking line search for the orientation variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSearch {
    /// Largest change of any single angle per iteration (radians).
    pub max_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for ThetaSearch {
    fn default() -> Self {
        ThetaSearch {
            max_step: PI / 8.0,
            shrink: 0.5,
            armijo: 1e-4,
            max_backtracks: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ThetaInit {
    #[default]
    Zero,
    /// Uniformly random in `[0, T)`, seeded.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcParams {
    pub z_min: f64,
    pub delta: f64,
    pub move_limit: f64,
    pub eta: f64,
    /// Relative tolerance of the multiplier bisections.
    pub bisection_tol: f64,
    pub max_iters: usize,
    /// Stop once the largest control change falls below this (after the
    /// continuation has finished).
    pub change_tol: f64,
    pub continuation: Continuation,
    pub update_rule: UpdateRule,
    pub theta_search: ThetaSearch,
    pub theta_init: ThetaInit,
    /// `eps` in the update is this times the mean element strain energy.
    pub eps_scale: f64,
    pub solver: SolverKind,
}

impl Default for OcParams {
    fn default() -> Self {
        OcParams {
            z_min: 1e-3,
            delta: 1e-3,
            move_limit: 0.05,
            eta: 0.5,
            bisection_tol: 1e-4,
            max_iters: 300,
            change_tol: 1e-2,
            continuation: Continuation::default(),
            update_rule: UpdateRule::Enhanced,
            theta_search: ThetaSearch::default(),
            theta_init: ThetaInit::Zero,
            eps_scale: 1e-9,
            solver: SolverKind::Cholesky,
        }
    }
}

impl OcParams {
    /// Tolerance of the per-element loop, tighter than the outer one so that
    /// the partition-of-unity bound holds with margin.
    pub fn inner_tol(&self) -> f64 {
        0.1 * self.bisection_tol
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("optimizer parameter {what}")))
            }
        };
        check(self.z_min > 0.0 && self.z_min < 1.0, "z_min must lie in (0, 1)")?;
        check(self.delta > 0.0, "delta must be positive")?;
        check(self.move_limit > 0.0, "move limit must be positive")?;
        check(self.eta > 0.0 && self.eta <= 1.0, "eta must lie in (0, 1]")?;
        check(self.bisection_tol > 0.0, "bisection tolerance must be positive")?;
        check(self.change_tol > 0.0, "change tolerance must be positive")?;
        check(self.eps_scale > 0.0, "eps scale must be positive")?;
        check(self.continuation.p_start >= 1.0 && self.continuation.p_end >= 1.0, "penalization must be >= 1")?;
        check(
            self.theta_search.max_step > 0.0 && self.theta_search.shrink > 0.0 && self.theta_search.shrink < 1.0,
            "theta line search settings are invalid",
        )
    }
}

/// One row of the optimization history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub p: f64,
    /// Compliance of the design entering the iteration.
    pub compliance: f64,
    /// Mass of the filtered design leaving the iteration.
    pub mass: f64,
    pub lambda: f64,
    pub max_dz: f64,
    pub max_dm: f64,
    pub max_dtheta: f64,
    pub kkt_residual: f64,
    /// Largest `sum_i z_il` of the updated control variables.
    pub max_zsum: f64,
    /// Smallest updated `z`.
    pub min_z: f64,
    /// Accepted orientation step length factor, `None` if no orientation update.
    pub theta_step: Option<f64>,
}

impl IterationRecord {
    pub fn max_change(&self) -> f64 {
        self.max_dz.max(self.max_dm).max(self.max_dtheta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

/// Binary design obtained by rounding the physical volume fractions.
#[derive(Debug, Clone)]
pub struct RoundedDesign {
    /// 0/1 per class and element.
    pub z: Vec<Vec<f64>>,
    /// Class index per element, `None` for void.
    pub label: Vec<Option<usize>>,
    /// Compliance at the final exponent with void modeled by `z_min`.
    pub compliance: f64,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub design: DesignField,
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    /// Compliance of the final (unrounded) physical design at the final exponent.
    pub compliance: f64,
    pub mass: f64,
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub rounded: RoundedDesign,
}

/// Rounds physical volume fractions: per element the class with the largest
/// `z` wins if it exceeds 1/2 (ties to the lower index), otherwise the
/// element is void.
pub fn postprocess_round(z: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Option<usize>>) {
    let n = z.len();
    let ne = z.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; ne]; n];
    let mut label = vec![None; ne];
    for l in 0..ne {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if z[i][l] > 0.5 && best.map_or(true, |b| z[i][l] > z[b][l]) {
                best = Some(i);
            }
        }
        if let Some(b) = best {
            out[b][l] = 1.0;
        }
        label[l] = best;
    }
    (out, label)
}

/// Stateful driver of the optimization loop.
pub struct Optimizer<'a> {
    problem: &'a Problem,
    params: OcParams,
    fem: FemModel,
    filter: FilterOperator,
    design: DesignField,
    iter: usize,
    lambda: f64,
    mu: Vec<f64>,
    cached: Option<(f64, Equilibrium)>,
    history: Vec<IterationRecord>,
}

impl<'a> Optimizer<'a> {
    pub fn new(problem: &'a Problem, params: OcParams) -> Result<Self> {
        params.validate()?;
        problem.validate()?;
        problem.check_feasible(params.z_min)?;
        let fem = FemModel::new(&problem.mesh, params.solver)?;
        let filter = build_filter(problem.mesh.centroids(), problem.mesh.areas(), problem.filter_radius);
        let control = initial_design(problem, &params);
        let design = DesignField {
            physical: filter_fields(&filter, &problem.classes, &control),
            control,
        };
        let ne = problem.mesh.num_elements();
        Ok(Optimizer {
            problem,
            params,
            fem,
            filter,
            design,
            iter: 0,
            lambda: 0.0,
            mu: vec![0.0; ne],
            cached: None,
            history: Vec::new(),
        })
    }

    pub fn design(&self) -> &DesignField {
        &self.design
    }

    pub fn params(&self) -> &OcParams {
        &self.params
    }

    pub fn filter(&self) -> &FilterOperator {
        &self.filter
    }

    pub fn fem(&self) -> &FemModel {
        &self.fem
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Replaces the control design (and refilters it). Clears cached solves.
    pub fn set_control(&mut self, control: Fields) {
        self.design.physical = filter_fields(&self.filter, &self.problem.classes, &control);
        self.design.control = control;
        self.cached = None;
    }

    /// Equilibrium of the current physical design at exponent `p`.
    pub fn solve(&self, p: f64) -> Result<Equilibrium> {
        self.fem.solve(&self.problem.classes, &self.design.physical, p)
    }

    /// Assembles the update data (filtered sensitivities and mass derivatives)
    /// for the current design and solution.
    pub fn update_data(&self, p: f64, state: &Equilibrium) -> (UpdateData, Sensitivities) {
        let classes = &self.problem.classes;
        let phys = &self.design.physical;
        let sens = self.fem.sensitivities(classes, phys, p, &state.u);
        let data = build_update_data(&self.filter, classes, &self.design, &sens, self.params.eps_scale);
        (data, sens)
    }

    /// Performs one iteration and returns its record.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let p = self.params.continuation.p(self.iter);
        let state = match self.cached.take() {
            Some((cp, s)) if cp == p => s,
            _ => self.solve(p)?,
        };
        let (data, _) = self.update_data(p, &state);
        let ev = MassEvaluator {
            data: &data,
            params: &self.params,
            filter: &self.filter,
            classes: &self.problem.classes,
            areas: self.problem.mesh.areas(),
            mu_guess: &self.mu,
        };
        let sol = solve_lambda(&ev, self.problem.mass_limit, self.lambda)?;
        let mut kkt = kkt_residual(&data, &self.params, sol.lambda, &sol.mu);

        let old = self.design.control.clone();
        let max_dz = max_abs_diff(&old.z, &sol.z);
        let max_dm = max_abs_diff(&old.m, &sol.m);
        let max_zsum = (0..data.num_elements())
            .map(|l| sol.z.iter().map(|zi| zi[l]).sum::<f64>())
            .fold(0.0f64, f64::max);
        let min_z = sol.z.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
        self.lambda = sol.lambda;
        self.mu = sol.mu;
        let mut control = old.clone();
        control.z = sol.z;
        control.m = sol.m;
        self.set_control(control);

        let mut max_dtheta = 0.0;
        let mut theta_step = None;
        if self.problem.classes.iter().any(|c| c.period().is_some()) {
            let (step, dtheta, theta_kkt) = self.update_theta(p)?;
            theta_step = Some(step);
            max_dtheta = dtheta;
            kkt = kkt.max(theta_kkt);
        }

        let record = IterationRecord {
            iter: self.iter,
            p,
            compliance: state.compliance,
            mass: sol.mass,
            lambda: self.lambda,
            max_dz,
            max_dm,
            max_dtheta,
            kkt_residual: kkt,
            max_zsum,
            min_z,
            theta_step,
        };
        log::info!(
            "iter {:4}  p {:.3}  c {:.6e}  M {:.6e}  Lambda {:.4e}  dz {:.2e}  dm {:.2e}  dth {:.2e}  kkt {:.2e}",
            record.iter,
            record.p,
            record.compliance,
            record.mass,
            record.lambda,
            record.max_dz,
            record.max_dm,
            record.max_dtheta,
            record.kkt_residual
        );
        self.iter += 1;
        self.history.push(record.clone());
        Ok(record)
    }

    /// Steepest descent on the orientations of free classes with a backtracking
    /// Armijo line search. Returns the accepted step factor (0 if rejected), the
    /// largest angle change and the orientation stationarity measure.
    fn update_theta(&mut self, p: f64) -> Result<(f64, f64, f64)> {
        let classes = &self.problem.classes;
        let state = self.solve(p)?;
        let sens = self
            .fem
            .sensitivities(classes, &self.design.physical, p, &state.u);
        let ctrl = &self.design.control;
        let mut grad: Vec<Vec<f64>> = vec![Vec::new(); classes.len()];
        let mut gmax = 0.0f64;
        let mut stationarity = 0.0f64;
        for (i, c) in classes.iter().enumerate() {
            if let Some(t) = c.period() {
                let g = self.filter.chain_rule_theta(&ctrl.theta[i], t, &sens.s_theta[i]);
                let num_z = self.filter.apply_transpose(&sens.s_z[i]);
                let eps = self.params.eps_scale * mean(&sens.element_energy);
                for l in 0..g.len() {
                    gmax = gmax.max(g[l].abs());
                    let scale = ctrl.z[i][l] * num_z[l] / p + eps;
                    stationarity = stationarity.max(g[l].abs() / scale);
                }
                grad[i] = g;
            }
        }
        if gmax == 0.0 {
            self.cached = Some((p, state));
            return Ok((0.0, 0.0, stationarity));
        }
        let search = self.params.theta_search;
        let c0 = state.compliance;
        let mut alpha = search.max_step / gmax;
        let base = self.design.control.clone();
        for _ in 0..=search.max_backtracks {
            let mut trial = base.clone();
            let mut slope = 0.0;
            let mut dmax = 0.0f64;
            for (i, c) in classes.iter().enumerate() {
                if let Some(t) = c.period() {
                    for l in 0..grad[i].len() {
                        let d = (-alpha * grad[i][l]).clamp(-search.max_step, search.max_step);
                        slope += grad[i][l] * d;
                        dmax = dmax.max(d.abs());
                        trial.theta[i][l] = (base.theta[i][l] + d).rem_euclid(t);
                    }
                }
            }
            let phys = filter_fields(&self.filter, classes, &trial);
            let st = self.fem.solve(classes, &phys, p)?;
            if st.compliance <= c0 + search.armijo * slope {
                self.design = DesignField {
                    control: trial,
                    physical: phys,
                };
                self.cached = Some((p, st));
                return Ok((alpha * gmax / search.max_step, dmax, stationarity));
            }
            alpha *= search.shrink;
        }
        self.cached = Some((p, state));
        Ok((0.0, 0.0, stationarity))
    }

    /// Iterates until convergence (after the continuation has settled) or
    /// the iteration limit.
    pub fn run(mut self) -> Result<OptimizationResult> {
        let mut termination = Termination::MaxIterations;
        while self.iter < self.params.max_iters {
            let rec = self.step()?;
            if rec.iter + 1 >= self.params.continuation.settled_at() && rec.max_change() < self.params.change_tol {
                termination = Termination::Converged;
                break;
            }
        }
        self.finish(termination)
    }

    pub fn finish(self, termination: Termination) -> Result<OptimizationResult> {
        let p = self.params.continuation.p_end;
        let classes = &self.problem.classes;
        let state = self.solve(p)?;
        let mass = total_mass(&self.problem.mesh, classes, &self.design.physical);
        let rounded = round_and_evaluate(&self.fem, &self.problem.mesh, classes, &self.design.physical, p, self.params.z_min)?;
        Ok(OptimizationResult {
            design: self.design,
            history: self.history,
            termination,
            compliance: state.compliance,
            mass,
            lambda: self.lambda,
            mu: self.mu,
            rounded,
        })
    }
}

/// Runs the optimizer to completion.
pub fn run(problem: &Problem, params: OcParams) -> Result<OptimizationResult> {
    Optimizer::new(problem, params)?.run()
}

/// Uniform starting design: equal volume fractions at the largest value
/// (capped at `1/N`) within the mass budget, mid-range parameters and
/// zero or seeded random orientations.
pub fn initial_design(problem: &Problem, params: &OcParams) -> Fields {
    let classes = &problem.classes;
    let n = classes.len();
    let ne = problem.mesh.num_elements();
    let rho: f64 = classes.iter().map(|c| c.density(c.m_mid())).sum();
    let z0 = (problem.mass_limit / (problem.mesh.total_area() * rho))
        .min(1.0 / n as f64)
        .max(params.z_min);
    let m: Vec<f64> = classes.iter().map(MaterialClass::m_mid).collect();
    let mut fields = Fields::uniform(n, ne, &vec![z0; n], &m, &vec![0.0; n]);
    if let ThetaInit::Random { seed } = params.theta_init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, c) in classes.iter().enumerate() {
            if let Some(t) = c.period() {
                for v in fields.theta[i].iter_mut() {
                    *v = rng.random_range(0.0..t);
                }
            }
        }
    }
    fields
}

/// Filters every class: plain filter for `z` and `m`, circular filter for
/// free orientations. Fixed data are passed through unchanged.
pub fn filter_fields(filter: &FilterOperator, classes: &[MaterialClass], control: &Fields) -> Fields {
    let n = classes.len();
    let mut out = Fields {
        z: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
    };
    for (i, c) in classes.iter().enumerate() {
        out.z.push(filter.apply(&control.z[i]));
        out.m.push(if c.is_parametrized() {
            filter.apply(&control.m[i])
        } else {
            control.m[i].clone()
        });
        out.theta.push(match c.period() {
            Some(t) => filter.apply_circular(&control.theta[i], t),
            None => control.theta[i].clone(),
        });
    }
    out
}

pub fn build_update_data(
    filter: &FilterOperator,
    classes: &[MaterialClass],
    design: &DesignField,
    sens: &Sensitivities,
    eps_scale: f64,
) -> UpdateData {
    let phys = &design.physical;
    let n = classes.len();
    let mut data = UpdateData {
        z: design.control.z.clone(),
        m: design.control.m.clone(),
        num_z: Vec::with_capacity(n),
        dmass_z: Vec::with_capacity(n),
        num_m: Vec::with_capacity(n),
        dmass_m: Vec::with_capacity(n),
        m_bounds: classes.iter().map(|c| c.range.map(|r| (r.lower, r.upper))).collect(),
        eps: eps_scale * mean(&sens.element_energy),
    };
    for (i, c) in classes.iter().enumerate() {
        let rho: Vec<f64> = phys.m[i].iter().map(|&m| c.density(m)).collect();
        let (nz, dz) = filter.chain_rule_z(&sens.s_z[i], &rho);
        data.num_z.push(nz);
        data.dmass_z.push(dz);
        if c.is_parametrized() {
            let drho: Vec<f64> = phys.m[i].iter().map(|&m| c.density_derivative(m)).collect();
            let (nm, dm) = filter.chain_rule_m(&sens.s_m[i], &phys.z[i], &drho);
            data.num_m.push(nm);
            data.dmass_m.push(dm);
        } else {
            data.num_m.push(vec![0.0; phys.z[i].len()]);
            data.dmass_m.push(vec![0.0; phys.z[i].len()]);
        }
    }
    data
}

/// Rounds the physical design and evaluates its compliance with void
/// entries at `z_min`.
pub fn round_and_evaluate(
    fem: &FemModel,
    mesh: &crate::mesh::Mesh,
    classes: &[MaterialClass],
    phys: &Fields,
    p: f64,
    z_min: f64,
) -> Result<RoundedDesign> {
    let (z, label) = postprocess_round(&phys.z);
    let mut eval = phys.clone();
    eval.z = z.iter().map(|zi| zi.iter().map(|&v| v.max(z_min)).collect()).collect();
    let state = fem.solve(classes, &eval, p)?;
    let mass = total_mass(mesh, classes, &Fields { z: z.clone(), ..phys.clone() });
    Ok(RoundedDesign {
        z,
        label,
        compliance: state.compliance,
        mass,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// History as CSV with header `iter,p,compliance,mass,Lambda,max_dz,kkt_residual`.
pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut s = String::from("iter,p,compliance,mass,Lambda,max_dz,kkt_residual\n");
    for r in history {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iter, r.p, r.compliance, r.mass, r.lambda, r.max_dz, r.kkt_residual
        ));
    }
    s
}
