//! Ground states by minimizing `Ψ(u) = I(s(u) ⋆ u)` over the mass sphere.
//!
//! Iterates stay on a fixed base grid. Each step moves along a preconditioned
//! descent direction in the tangent space, retracts to mass `m` by scaling,
//! and is accepted by Armijo backtracking on `Ψ`. At convergence the minimizer
//! `u` is mapped onto the Pohožaev set exactly: `û = s(u) ⋆ u` sampled on the
//! base grid scaled by `e^{−s(u)}`, whose samples are `e^{Ns/2}u`.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{self, Fiber, Projection, Reduced};
use crate::functionals::{self, EnergyBreakdown};
use crate::grid::{Field, GridSpec, RadialGrid};
use crate::nonlinearity::{self, Nonlinearity, NonlinearitySpec, Sampling, Verdict, SOLVER_HYPOTHESES};
use crate::riesz::{build_kernel, RieszKernel};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative size below which changes in `Ψ` are indistinguishable from rounding.
pub const ROUNDOFF: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 60;
const MULTI_START_FACTORS: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub mass: f64,
    pub dimension: u32,
    pub alpha: f64,
    pub nonlinearity: NonlinearitySpec,
    pub radius: f64,
    pub nodes: usize,
    /// Tangent-gradient norm relative to `‖e^{2s}(−Δ_h u)‖`.
    pub tol_grad: f64,
    pub max_iters: usize,
    pub init_width: f64,
    pub init_sign: Sign,
    pub initial_step: f64,
    pub armijo_factor: f64,
    pub sufficient_decrease: f64,
    pub projection_tol: f64,
    pub s_max: f64,
    pub strategy: String,
    pub memory: usize,
    pub multi_start: bool,
    /// Solve even if the nonlinearity fails a hypothesis.
    pub force: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            dimension: 3,
            alpha: 2.0,
            nonlinearity: NonlinearitySpec::power(3.0),
            radius: 20.0,
            nodes: 512,
            tol_grad: 1e-8,
            max_iters: 5000,
            init_width: 1.0,
            init_sign: Sign::Positive,
            initial_step: 1.0,
            armijo_factor: 0.5,
            sufficient_decrease: 1e-4,
            projection_tol: fiber::DEFAULT_PROJECTION_TOL,
            s_max: fiber::DEFAULT_S_MAX,
            strategy: "lbfgs".into(),
            memory: 8,
            multi_start: false,
            force: false,
        }
    }
}

impl SolveConfig {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.dimension, self.radius, self.nodes)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_spec().validate()?;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("mass", self.mass)?;
        positive("tol_grad", self.tol_grad)?;
        positive("init_width", self.init_width)?;
        positive("initial_step", self.initial_step)?;
        positive("projection_tol", self.projection_tol)?;
        positive("s_max", self.s_max)?;
        positive("sufficient_decrease", self.sufficient_decrease)?;
        let n = self.dimension as f64;
        if !(self.alpha > 0.0 && self.alpha < n) {
            return Err(Error::Config(format!("alpha must lie in (0, {n}), got {}", self.alpha)));
        }
        if !(self.armijo_factor > 0.0 && self.armijo_factor < 1.0) {
            return Err(Error::Config(format!("armijo_factor must lie in (0, 1), got {}", self.armijo_factor)));
        }
        if self.sufficient_decrease >= 0.5 {
            return Err(Error::Config(format!("sufficient_decrease must be below 1/2, got {}", self.sufficient_decrease)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.memory == 0 {
            return Err(Error::Config("memory must be at least 1".into()));
        }
        Ok(())
    }

    fn projection(&self, hint: f64, width: f64) -> Projection {
        Projection { tol: self.projection_tol, s_max: self.s_max, hint, width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub psi: f64,
    pub gradient: f64,
    pub s: f64,
    pub step: f64,
}

/// Checks recomputed on a materialized state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub energy: f64,
    pub kinetic: f64,
    pub nonlocal: f64,
    pub mass: f64,
    pub pohozaev: f64,
    /// `|P(û)| / ∫|∇û|²`
    pub pohozaev_relative: f64,
    pub mu_el: f64,
    pub mu_poho: f64,
    /// `|μ_el − μ_poho| / |μ_el|`
    pub mu_gap: f64,
    pub el_residual: f64,
    /// EL residual over `‖∇û‖₂`
    pub el_residual_relative: f64,
    pub min_value: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStart {
    pub widths: Vec<f64>,
    /// `None` where that start failed.
    pub energies: Vec<Option<f64>>,
    /// Relative spread of the converged energies.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub dimension: u32,
    /// Truncation radius of the grid carrying `û`.
    pub radius: f64,
    pub nodes: usize,
    /// Radius of the grid the iteration ran on.
    pub base_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub schema: u32,
    pub config: SolveConfig,
    pub energy: f64,
    pub mu_el: f64,
    pub mu_poho: f64,
    pub iterations: usize,
    /// `s(u)` of the final iterate.
    pub s_final: f64,
    pub relative_gradient: f64,
    pub grid: GridInfo,
    pub diagnostics: Diagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_start: Option<MultiStart>,
    pub history: Vec<IterationRecord>,
    pub u_hat: Profile,
}

impl SolveResult {
    /// `û` on its grid, given a kernel on the base grid.
    pub fn field(&self, base: &RieszKernel) -> Result<(Field, RieszKernel)> {
        let kernel = base.rescaled(self.grid.radius / self.grid.base_radius)?;
        let u = Field::new(Arc::clone(kernel.grid()), self.u_hat.u.clone())?;
        Ok((u, kernel))
    }

    /// The iterate on the base grid, undoing the final dilation.
    pub fn representation(&self, base: &Arc<RadialGrid>) -> Result<Field> {
        let amp = (-0.5 * self.grid.dimension as f64 * self.s_final).exp();
        Field::new(Arc::clone(base), self.u_hat.u.iter().map(|v| v * amp).collect())
    }
}

/// Kernel and nonlinearity shared by every solve on one base grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kernel: Arc<RieszKernel>,
    pub nl: Arc<dyn Nonlinearity>,
}

impl Problem {
    /// Builds the kernel and nonlinearity; refuses nonlinearities failing a
    /// solver hypothesis unless `cfg.force` is set.
    pub fn new(cfg: &SolveConfig) -> Result<Self> {
        Self::prepare(cfg, None)
    }

    /// As [`Problem::new`], reusing `kernel` when given.
    pub fn prepare(cfg: &SolveConfig, kernel: Option<Arc<RieszKernel>>) -> Result<Self> {
        let nl = admissible_nonlinearity(cfg)?;
        let kernel = match kernel {
            Some(k) => k,
            None => {
                let grid = crate::grid::make_grid(cfg.grid_spec())?;
                Arc::new(build_kernel(&grid, cfg.alpha)?)
            }
        };
        let problem = Self { kernel, nl };
        problem.check(cfg)?;
        Ok(problem)
    }

    pub fn with_parts(kernel: Arc<RieszKernel>, nl: Arc<dyn Nonlinearity>) -> Self {
        Self { kernel, nl }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.kernel.grid()
    }

    fn check(&self, cfg: &SolveConfig) -> Result<()> {
        let spec = self.grid().spec();
        if *spec != cfg.grid_spec() || self.kernel.alpha() != cfg.alpha {
            return Err(Error::Config(format!(
                "configuration grid {:?} / alpha {} does not match the prepared kernel {:?} / alpha {}",
                cfg.grid_spec(),
                cfg.alpha,
                spec,
                self.kernel.alpha()
            )));
        }
        Ok(())
    }
}

/// Builds the configured nonlinearity, refusing one that fails a solver
/// hypothesis unless `cfg.force` is set.
pub fn admissible_nonlinearity(cfg: &SolveConfig) -> Result<Arc<dyn Nonlinearity>> {
    cfg.validate()?;
    let nl = nonlinearity::build(&cfg.nonlinearity, cfg.dimension, cfg.alpha)?;
    if !cfg.force {
        let report = nonlinearity::audit(&*nl, cfg.dimension, cfg.alpha, &Sampling::default())?;
        let failed: Vec<&str> = SOLVER_HYPOTHESES
            .iter()
            .copied()
            .filter(|id| report.verdict(id) == Some(Verdict::Fail))
            .collect();
        if !failed.is_empty() {
            return Err(Error::Hypothesis(format!(
                "{} fails {}; set force to solve anyway",
                nl.name(),
                failed.join(", ")
            )));
        }
    }
    Ok(nl)
}

/// Current iterate as seen by a descent strategy.
pub struct StepContext<'a> {
    pub grid: &'a RadialGrid,
    pub u: &'a [f64],
    pub gradient: &'a [f64],
    pub precondition: &'a dyn Fn(&[f64]) -> Vec<f64>,
}

/// Produces search directions `d`; the iteration moves to `retract(u − τd)`.
pub trait DescentStrategy: Send {
    fn name(&self) -> &'static str;
    fn direction(&mut self, ctx: &StepContext) -> Vec<f64>;
    /// `step = u_new − u` and `change = g_new − g`, both in the new tangent space.
    fn update(&mut self, grid: &RadialGrid, step: Vec<f64>, change: Vec<f64>);
    fn reset(&mut self);
}

/// Preconditioned steepest descent.
#[derive(Debug, Default)]
pub struct Steepest;

impl DescentStrategy for Steepest {
    fn name(&self) -> &'static str {
        "steepest"
    }
    fn direction(&mut self, ctx: &StepContext) -> Vec<f64> {
        (ctx.precondition)(ctx.gradient)
    }
    fn update(&mut self, _: &RadialGrid, _: Vec<f64>, _: Vec<f64>) {}
    fn reset(&mut self) {}
}

/// Limited-memory BFGS with the preconditioner as initial inverse Hessian.
#[derive(Debug)]
pub struct Lbfgs {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        Self { memory, pairs: VecDeque::new() }
    }
}

impl DescentStrategy for Lbfgs {
    fn name(&self) -> &'static str {
        "lbfgs"
    }

    fn direction(&mut self, ctx: &StepContext) -> Vec<f64> {
        let grid = ctx.grid;
        let mut q = ctx.gradient.to_vec();
        let mut coeffs = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * grid.inner(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            coeffs.push(a);
        }
        let mut r = (ctx.precondition)(&q);
        if let Some((s, y, _)) = self.pairs.back() {
            let py = (ctx.precondition)(y);
            let gamma = grid.inner(s, y) / grid.inner(y, &py);
            if gamma.is_finite() && gamma > 0.0 {
                r.iter_mut().for_each(|v| *v *= gamma);
            }
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(coeffs.into_iter().rev()) {
            let b = rho * grid.inner(y, &r);
            r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (a - b) * si);
        }
        r
    }

    fn update(&mut self, grid: &RadialGrid, step: Vec<f64>, change: Vec<f64>) {
        let sy = grid.inner(&step, &change);
        if !(sy > 1e-10 * grid.norm(&step) * grid.norm(&change)) {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((step, change, 1.0 / sy));
    }

    fn reset(&mut self) {
        self.pairs.clear();
    }
}

type StrategyFactory = fn(&SolveConfig) -> Box<dyn DescentStrategy>;

/// Descent strategies addressable by name.
pub struct StrategyRegistry {
    factories: BTreeMap<&'static str, StrategyFactory>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut reg = Self { factories: BTreeMap::new() };
        reg.register("lbfgs", |cfg| Box::new(Lbfgs::new(cfg.memory)));
        reg.register("steepest", |_| Box::new(Steepest));
        reg
    }
}

impl StrategyRegistry {
    pub fn register(&mut self, name: &'static str, factory: StrategyFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, cfg: &SolveConfig) -> Result<Box<dyn DescentStrategy>> {
        self.factories
            .get(cfg.strategy.as_str())
            .map(|f| f(cfg))
            .ok_or_else(|| Error::UnknownName { family: "descent strategy", name: cfg.strategy.clone() })
    }
}

fn project_tangent(grid: &RadialGrid, v: &mut [f64], u: &[f64], mass: f64) {
    let c = grid.inner(v, u) / mass;
    v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= c * ui);
}

fn retract(grid: &Arc<RadialGrid>, values: Vec<f64>, mass: f64) -> Result<Field> {
    let f = Field::new(Arc::clone(grid), values)?;
    f.with_mass(mass)
}

fn evaluate(problem: &Problem, cfg: &SolveConfig, u: &Field, hint: Option<f64>) -> Result<Reduced> {
    let fiber = Fiber::new(u, &*problem.nl, &problem.kernel)?;
    let opts = match hint {
        Some(h) => cfg.projection(h, 0.05),
        None => cfg.projection(0.0, 1.0),
    };
    fiber.reduced(&opts)
}

/// Gaussian `±e^{−r²/σ²}` normalized to mass `m`.
pub fn initial_guess(grid: &Arc<RadialGrid>, cfg: &SolveConfig, width: f64) -> Result<Field> {
    let sign = match cfg.init_sign {
        Sign::Positive => 1.0,
        Sign::Negative => -1.0,
    };
    Field::from_fn(Arc::clone(grid), |r| sign * (-(r / width).powi(2)).exp())?.with_mass(cfg.mass)
}

/// Builds the problem and solves it, with three starts if `cfg.multi_start`.
pub fn solve_ground_state(cfg: &SolveConfig) -> Result<SolveResult> {
    let problem = Problem::new(cfg)?;
    if cfg.multi_start {
        solve_multi_start(&problem, cfg)
    } else {
        solve_with(&problem, cfg, None)
    }
}

/// Runs starts of width `σ·{½, 1, 2}` concurrently and keeps the lowest energy,
/// preferring positive states.
pub fn solve_multi_start(problem: &Problem, cfg: &SolveConfig) -> Result<SolveResult> {
    let widths: Vec<f64> = MULTI_START_FACTORS.iter().map(|f| f * cfg.init_width).collect();
    let runs: Vec<Result<SolveResult>> = widths
        .par_iter()
        .map(|&w| {
            let init = initial_guess(problem.grid(), cfg, w)?;
            solve_with(problem, cfg, Some(init))
        })
        .collect();
    let energies: Vec<Option<f64>> = runs.iter().map(|r| r.as_ref().ok().map(|s| s.energy)).collect();
    let converged: Vec<f64> = energies.iter().flatten().copied().collect();
    let mut best: Option<SolveResult> = None;
    let mut first_error = None;
    for run in runs {
        match run {
            Ok(r) => {
                // under-resolved grids can admit sign-changing states of lower energy
                let better = |b: &SolveResult| match (r.diagnostics.positive, b.diagnostics.positive) {
                    (true, false) => true,
                    (false, true) => false,
                    _ => r.energy < b.energy,
                };
                if best.as_ref().is_none_or(better) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let Some(mut best) = best else {
        return Err(first_error.expect("at least one start ran"));
    };
    let lo = converged.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = converged.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best.multi_start = Some(MultiStart { widths, energies, spread: (hi - lo) / lo.abs() });
    Ok(best)
}

/// Minimizes `Ψ` from `init` (a Gaussian of width `cfg.init_width` if absent).
pub fn solve_with(problem: &Problem, cfg: &SolveConfig, init: Option<Field>) -> Result<SolveResult> {
    cfg.validate()?;
    problem.check(cfg)?;
    let grid = Arc::clone(problem.grid());
    let mut strategy = StrategyRegistry::default().build(cfg)?;
    let mass = cfg.mass;
    let mut u = match init {
        Some(f) => {
            f.same_grid(&grid)?;
            f.with_mass(mass)?
        }
        None => initial_guess(&grid, cfg, cfg.init_width)?,
    };
    let mut state = evaluate(problem, cfg, &u, None)?;
    let mut history = vec![IterationRecord {
        iteration: 0,
        psi: state.psi,
        gradient: state.relative_gradient(&grid),
        s: state.s,
        step: 0.0,
    }];
    for iteration in 1..=cfg.max_iters {
        let rel = state.relative_gradient(&grid);
        if rel <= cfg.tol_grad {
            return finish(problem, cfg, &u, &state, iteration - 1, history);
        }
        // (e^{2s}(−Δ) + μ̂)⁻¹ in the coordinates of u
        let up = (2.0 * state.s).exp();
        let floor = 0.1 * up * u.kinetic() / mass;
        let shift = state.multiplier.max(floor) / up;
        let u_vals = u.values().to_vec();
        let precondition = |v: &[f64]| {
            let mut d = grid.solve_shifted_laplacian(v, shift);
            d.iter_mut().for_each(|x| *x /= up);
            project_tangent(&grid, &mut d, &u_vals, mass);
            d
        };

        let mut accepted = None;
        for attempt in 0..2 {
            let mut d = strategy.direction(&StepContext {
                grid: &grid,
                u: &u_vals,
                gradient: &state.tangent,
                precondition: &precondition,
            });
            project_tangent(&grid, &mut d, &u_vals, mass);
            let slope0 = grid.inner(&state.tangent, &d);
            if !(slope0 > 0.0) {
                strategy.reset();
                if attempt == 0 {
                    continue;
                }
                break;
            }
            if let Some(found) = line_search(problem, cfg, &grid, &u, &state, &d, slope0)? {
                accepted = Some(found);
                break;
            }
            // a failed search from curvature pairs gets one retry from the preconditioner alone
            strategy.reset();
        }
        let Some((next, next_state, tau)) = accepted else {
            return Err(Error::NonConvergence { iterations: iteration - 1, last_gradient: rel, history });
        };

        let mut step: Vec<f64> = next.values().iter().zip(u.values()).map(|(a, b)| a - b).collect();
        project_tangent(&grid, &mut step, next.values(), mass);
        let mut old_grad = state.tangent.clone();
        project_tangent(&grid, &mut old_grad, next.values(), mass);
        let change: Vec<f64> = next_state.tangent.iter().zip(&old_grad).map(|(a, b)| a - b).collect();
        strategy.update(&grid, step, change);

        u = next;
        state = next_state;
        history.push(IterationRecord {
            iteration,
            psi: state.psi,
            gradient: state.relative_gradient(&grid),
            s: state.s,
            step: tau,
        });
        if !(state.s.abs() < cfg.s_max) {
            return Err(Error::Range(format!("s(u) = {} left the admissible range", state.s)));
        }
    }
    let rel = state.relative_gradient(&grid);
    if rel <= cfg.tol_grad {
        return finish(problem, cfg, &u, &state, cfg.max_iters, history);
    }
    Err(Error::NonConvergence { iterations: cfg.max_iters, last_gradient: rel, history })
}

/// Armijo backtracking on `Ψ`, falling back to a derivative test once the
/// predicted decrease drops below rounding.
fn line_search(
    problem: &Problem,
    cfg: &SolveConfig,
    grid: &Arc<RadialGrid>,
    u: &Field,
    state: &Reduced,
    d: &[f64],
    slope0: f64,
) -> Result<Option<(Field, Reduced, f64)>> {
    let mass = cfg.mass;
    let c1 = cfg.sufficient_decrease;
    let noise = ROUNDOFF * state.psi.abs();
    let mut tau = cfg.initial_step;
    for _ in 0..MAX_BACKTRACKS {
        let trial: Vec<f64> = u.values().iter().zip(d).map(|(x, di)| x - tau * di).collect();
        let candidate = retract(grid, trial, mass).and_then(|f| {
            let r = evaluate(problem, cfg, &f, Some(state.s))?;
            Ok((f, r))
        });
        match candidate {
            Ok((f, r)) => {
                let predicted = c1 * tau * slope0;
                if r.psi <= state.psi - predicted {
                    return Ok(Some((f, r, tau)));
                }
                if predicted < noise && r.psi <= state.psi + noise {
                    let slope_t = -grid.inner(&r.tangent, d);
                    if slope_t <= (1.0 - 2.0 * c1) * slope0 {
                        return Ok(Some((f, r, tau)));
                    }
                }
            }
            Err(Error::ProjectionFailure(_) | Error::Range(_) | Error::Domain(_)) => {}
            Err(e) => return Err(e),
        }
        tau *= cfg.armijo_factor;
    }
    Ok(None)
}

fn finish(
    problem: &Problem,
    cfg: &SolveConfig,
    u: &Field,
    state: &Reduced,
    iterations: usize,
    history: Vec<IterationRecord>,
) -> Result<SolveResult> {
    let grid = problem.grid();
    let base_radius = grid.radius();
    let radius = base_radius * (-state.s).exp();
    let amp = (0.5 * grid.dimension() as f64 * state.s).exp();
    let kernel = problem.kernel.rescaled(radius / base_radius)?;
    let values: Vec<f64> = u.values().iter().map(|v| v * amp).collect();
    let u_hat = Field::new(Arc::clone(kernel.grid()), values)?;
    let diagnostics = diagnose(&u_hat, &*problem.nl, &kernel)?;
    Ok(SolveResult {
        schema: SCHEMA_VERSION,
        config: cfg.clone(),
        energy: diagnostics.energy,
        mu_el: diagnostics.mu_el,
        mu_poho: diagnostics.mu_poho,
        iterations,
        s_final: state.s,
        relative_gradient: state.relative_gradient(grid),
        grid: GridInfo { dimension: grid.dimension(), radius, nodes: grid.len(), base_radius },
        diagnostics,
        multi_start: None,
        history,
        u_hat: Profile { r: kernel.grid().nodes().to_vec(), u: u_hat.into_values() },
    })
}

/// Energy, Pohožaev, Euler–Lagrange and positivity diagnostics of a state.
pub fn diagnose(u: &Field, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<Diagnostics> {
    let EnergyBreakdown { kinetic, nonlocal, energy, pohozaev, mass } = functionals::energy(u, nl, kernel)?;
    let mu_el = functionals::multiplier_el(u, nl, kernel)?;
    let mu_poho = functionals::multiplier_pohozaev(u, nl, kernel)?;
    let el_residual = functionals::el_residual(u, mu_el, nl, kernel)?;
    let min_value = u.values().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Diagnostics {
        energy,
        kinetic,
        nonlocal,
        mass,
        pohozaev,
        pohozaev_relative: pohozaev.abs() / kinetic,
        mu_el,
        mu_poho,
        mu_gap: (mu_el - mu_poho).abs() / mu_el.abs(),
        el_residual,
        el_residual_relative: el_residual / kinetic.sqrt(),
        min_value,
        positive: min_value > 0.0,
    })
}

/// Tolerances applied by [`verify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyTolerances {
    pub mass: f64,
    pub pohozaev: f64,
    pub el_residual: f64,
    pub mu_gap: f64,
    /// Slack allowed when comparing fiber energies with `I(û)`.
    pub maximality: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self { mass: 1e-8, pohozaev: 1e-6, el_residual: 1e-3, mu_gap: 1e-3, maximality: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub checks: Vec<Check>,
    pub diagnostics: Diagnostics,
    /// Stored scalars reproduced bit for bit.
    pub reproduced: bool,
    pub pass: bool,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Recomputes every diagnostic of `result` from its stored profile.
pub fn verify(result: &SolveResult, base: &RieszKernel, nl: &dyn Nonlinearity, tol: &VerifyTolerances) -> Result<VerificationReport> {
    if result.schema != SCHEMA_VERSION {
        return Err(Error::Format(format!("unsupported result schema {}", result.schema)));
    }
    let (u, kernel) = result.field(base)?;
    let d = diagnose(&u, nl, &kernel)?;
    let m = result.config.mass;
    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, threshold: f64, pass: bool| {
        checks.push(Check { name: name.into(), value, threshold, pass });
    };
    let mass_err = (d.mass - m).abs() / m;
    push("mass", mass_err, tol.mass, mass_err < tol.mass);
    push("pohozaev", d.pohozaev_relative, tol.pohozaev, d.pohozaev_relative < tol.pohozaev);
    push("el_residual", d.el_residual_relative, tol.el_residual, d.el_residual_relative < tol.el_residual);
    push("mu_positive", d.mu_el, 0.0, d.mu_el > 0.0);
    push("mu_agreement", d.mu_gap, tol.mu_gap, d.mu_gap < tol.mu_gap);
    push("energy_positive", d.energy, 0.0, d.energy > 0.0);
    push("positivity", d.min_value, 0.0, d.positive);

    // û should sit at the top of its own fiber
    let peak = match fiber::scan(&u, nl, &kernel, -2.0, 2.0, 41) {
        Ok(points) => points
            .iter()
            .filter(|p| p.s != 0.0)
            .map(|p| p.energy)
            .fold(f64::NEG_INFINITY, f64::max),
        Err(_) => f64::INFINITY,
    };
    let excess = (peak - d.energy) / d.energy.abs();
    push("fiber_maximality", excess, tol.maximality, excess <= tol.maximality);

    let reproduced = [
        (d.energy, result.energy),
        (d.mu_el, result.mu_el),
        (d.mu_poho, result.mu_poho),
        (d.pohozaev, result.diagnostics.pohozaev),
        (d.el_residual, result.diagnostics.el_residual),
        (d.kinetic, result.diagnostics.kinetic),
        (d.nonlocal, result.diagnostics.nonlocal),
        (d.mass, result.diagnostics.mass),
    ]
    .iter()
    .all(|(a, b)| a.to_bits() == b.to_bits());
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport { schema: SCHEMA_VERSION, checks, diagnostics: d, reproduced, pass })
}
