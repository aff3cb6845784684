//! One function per subcommand.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use choquard_core::fiber::{Fiber, Projection};
use choquard_core::interp::Pchip;
use choquard_core::nonlinearity::{self, Nonlinearity, Sampling, Verdict};
use choquard_core::riesz::cartesian_crosscheck;
use choquard_core::solver::{self, Problem, Sign, SolveConfig, SolveResult};
use choquard_core::sweep::{self, format_float, AsymptoticOptions, SweepOptions};
use choquard_core::{build_kernel, make_grid, Error, Field, Result, RieszKernel};
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::output::OutputDir;
use crate::Command;

pub const RESULT_FILE: &str = "result.json";
pub const PROFILE_FILE: &str = "profile.csv";
pub const KERNEL_FILE: &str = "kernel.bin";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const ASYMPTOTIC_FILE: &str = "asymptotic.json";
pub const FIBER_FILE: &str = "fiber_scan.csv";
pub const AUDIT_FILE: &str = "audit.json";
pub const VERIFY_FILE: &str = "verification.json";
pub const CROSSCHECK_CSV: &str = "crosscheck.csv";
pub const CROSSCHECK_JSON: &str = "crosscheck.json";

/// Largest relative gap accepted between the radial and Cartesian potentials.
pub const CROSSCHECK_TOL: f64 = 2e-2;

pub fn dispatch(command: &Command, cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    match command {
        Command::Solve(_) => solve(cfg, out),
        Command::Sweep(_) => run_sweep(cfg, out),
        Command::FiberScan(_) => fiber_scan(cfg, out),
        Command::Audit(_) => audit(cfg, out),
        Command::Verify(_) => verify(cfg, out),
        Command::Crosscheck(_) => crosscheck(cfg, out),
    }
}

fn read_kernel(path: &Path) -> Result<RieszKernel> {
    RieszKernel::read_from(BufReader::new(File::open(path)?))
}

/// The base kernel for `scfg`: loaded from `numerics.kernel_file` when it
/// exists, built otherwise (and saved there, and as `kernel.bin` if asked).
fn base_kernel(cfg: &RunConfig, scfg: &SolveConfig, out: &OutputDir) -> Result<Arc<RieszKernel>> {
    if let Some(path) = cfg.numerics.kernel_file.as_deref().filter(|p| p.exists()) {
        let k = read_kernel(path)?;
        if *k.grid().spec() != scfg.grid_spec() || k.alpha() != scfg.alpha {
            return Err(Error::Config(format!(
                "kernel file {} holds {:?} with alpha {}, the configuration asks for {:?} with alpha {}",
                path.display(),
                k.grid().spec(),
                k.alpha(),
                scfg.grid_spec(),
                scfg.alpha
            )));
        }
        return Ok(Arc::new(k));
    }
    scfg.grid_spec().validate()?;
    let kernel = Arc::new(build_kernel(&make_grid(scfg.grid_spec())?, scfg.alpha)?);
    let save = |dir: &OutputDir, name: &str| dir.write_with(name, |w| kernel.write_to(w));
    if let Some(path) = cfg.numerics.kernel_file.as_deref() {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Config(format!("kernel_file {} has no file name", path.display())))?;
        save(&OutputDir::new(dir.to_path_buf()), name)?;
    }
    if cfg.output.kernel_dump {
        save(out, KERNEL_FILE)?;
    }
    Ok(kernel)
}

fn problem(cfg: &RunConfig, scfg: &SolveConfig, out: &OutputDir) -> Result<Problem> {
    // refuse before spending time on the kernel
    solver::admissible_nonlinearity(scfg)?;
    let kernel = base_kernel(cfg, scfg, out)?;
    Problem::prepare(scfg, Some(kernel))
}

fn write_profile(result: &SolveResult, w: &mut dyn Write) -> Result<()> {
    writeln!(w, "r,u")?;
    for (r, u) in result.u_hat.r.iter().zip(&result.u_hat.u) {
        writeln!(w, "{},{}", format_float(*r), format_float(*u))?;
    }
    Ok(())
}

fn solve(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let scfg = cfg.solve_config(cfg.mass()?);
    let problem = problem(cfg, &scfg, out)?;
    let result = if scfg.multi_start {
        solver::solve_multi_start(&problem, &scfg)?
    } else {
        solver::solve_with(&problem, &scfg, None)?
    };
    if cfg.output_enabled(Format::Json) {
        out.write_json(RESULT_FILE, &result)?;
    }
    if cfg.output_enabled(Format::Csv) {
        out.write_with(PROFILE_FILE, |w| write_profile(&result, w))?;
    }
    let d = &result.diagnostics;
    println!(
        "E = {:.12e}  mu = {:.12e}  iterations = {}  P/kinetic = {:.2e}  EL/|grad u| = {:.2e}",
        result.energy, result.mu_el, result.iterations, d.pohozaev_relative, d.el_residual_relative
    );
    if let Some(ms) = &result.multi_start {
        println!("multi-start widths {:?}: relative energy spread {:.2e}", ms.widths, ms.spread);
    }
    if !d.positive {
        eprintln!("warning: the computed state is not positive (min value {:.3e})", d.min_value);
    }
    Ok(())
}

fn run_sweep(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let masses = cfg.masses()?;
    let first = *masses.first().ok_or_else(|| Error::Config("problem.masses is empty".into()))?;
    let scfg = cfg.solve_config(first);
    let problem = problem(cfg, &scfg, out)?;
    let result = sweep::sweep(&problem, &scfg, &masses, SweepOptions { warm_start: cfg.numerics.warm_start })?;
    let report = nonlinearity::audit(&*problem.nl, scfg.dimension, scfg.alpha, &Sampling::default())?;
    let a = &cfg.numerics.asymptotics;
    let opts = AsymptoticOptions {
        decay_fraction: a.decay_fraction,
        require_decay: report.verdict("H4") == Some(Verdict::Pass),
        jump_factor: a.jump_factor,
        min_span: a.min_span,
    };
    let asym = sweep::asymptotic_check(&result.rows, &opts);
    if cfg.output_enabled(Format::Csv) {
        out.write_with(SWEEP_CSV, |w| Ok(sweep::write_csv(&result.rows, w)?))?;
    }
    if cfg.output_enabled(Format::Json) {
        out.write_json(SWEEP_JSON, &SweepDocument { schema: solver::SCHEMA_VERSION, rows: &result.rows })?;
        out.write_json(ASYMPTOTIC_FILE, &asym)?;
    }
    for r in &result.rows {
        println!("m = {:<10} E = {:<22.15e} mu = {:<22.15e} iterations = {:<5} {}", r.m, r.energy, r.mu, r.iterations, r.status.as_str());
    }
    let failed = result.rows.iter().filter(|r| !r.is_converged()).count();
    println!("{} of {} rows converged; asymptotic check: {:?}", result.rows.len() - failed, result.rows.len(), asym.verdict);
    Ok(())
}

#[derive(Serialize)]
struct SweepDocument<'a> {
    schema: u32,
    rows: &'a [sweep::SweepRow],
}

fn load_result(cfg: &RunConfig) -> Result<SolveResult> {
    let path = cfg.input.result.as_deref().ok_or_else(|| Error::MissingField("input.result".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read result {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Kernel on the result's base grid and its nonlinearity; no audit gate.
fn result_context(cfg: &RunConfig, result: &SolveResult, out: &OutputDir) -> Result<(Arc<RieszKernel>, Arc<dyn Nonlinearity>)> {
    let rc = &result.config;
    let nl = nonlinearity::build(&rc.nonlinearity, rc.dimension, rc.alpha)?;
    let base = base_kernel(cfg, rc, out)?;
    Ok((base, nl))
}

fn fiber_scan(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let scan = &cfg.numerics.scan;
    let (u, kernel, nl) = if cfg.input.result.is_some() {
        let result = load_result(cfg)?;
        let (base, nl) = result_context(cfg, &result, out)?;
        let (u, kernel) = result.field(&base)?;
        (u, Arc::new(kernel), nl)
    } else {
        let f = &cfg.problem.field;
        let mass = match f.mass {
            Some(m) => m,
            None => cfg.mass()?,
        };
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Config(format!("the scanned field must be nonzero, got mass {mass}")));
        }
        if !(f.width.is_finite() && f.width > 0.0) {
            return Err(Error::Config(format!("problem.field.width must be positive, got {}", f.width)));
        }
        let scfg = cfg.solve_config(mass);
        let nl = nonlinearity::build(&scfg.nonlinearity, scfg.dimension, scfg.alpha)?;
        let kernel = base_kernel(cfg, &scfg, out)?;
        let sign = if f.sign == Sign::Negative { -1.0 } else { 1.0 };
        let u = Field::from_fn(Arc::clone(kernel.grid()), |r| sign * (-(r / f.width).powi(2)).exp())?.with_mass(mass)?;
        (u, kernel, nl)
    };
    if scan.points < 2 || !(scan.to > scan.from) {
        return Err(Error::Config(format!(
            "numerics.scan needs from < to and at least 2 points, got [{}, {}] x {}",
            scan.from, scan.to, scan.points
        )));
    }
    let fiber = Fiber::new(&u, &*nl, &kernel)?;
    let points: Vec<_> = (0..scan.points)
        .map(|k| scan.from + (scan.to - scan.from) * k as f64 / (scan.points - 1) as f64)
        .map(|s| (s, fiber.point(s)))
        .collect();
    let opts = Projection { tol: cfg.numerics.projection_tol, s_max: cfg.numerics.s_max, ..Projection::default() };
    let located = fiber.project(&opts);
    out.write_with(FIBER_FILE, |w| {
        writeln!(w, "s,I,P")?;
        for (s, p) in &points {
            match p {
                Ok(p) => writeln!(w, "{},{},{}", format_float(*s), format_float(p.energy), format_float(p.slope))?,
                Err(e) => writeln!(w, "# s = {} not evaluated: {}: {e}", format_float(*s), e.kind())?,
            }
        }
        match &located {
            Ok(s) => writeln!(w, "# s(u) = {}", format_float(*s))?,
            Err(e) => writeln!(w, "# s(u) not found: {}: {e}", e.kind())?,
        }
        Ok(())
    })?;
    match &located {
        Ok(s) => println!("s(u) = {s:.12e}; {} points written", points.len()),
        Err(e) => println!("s(u) not found ({}); {} points written", e.kind(), points.len()),
    }
    Ok(())
}

fn audit(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let p = &cfg.problem;
    let nl = nonlinearity::build(&p.nonlinearity, p.dimension, p.alpha)?;
    let report = nonlinearity::audit(&*nl, p.dimension, p.alpha, &Sampling::default())?;
    out.write_json(AUDIT_FILE, &AuditDocument { schema: solver::SCHEMA_VERSION, report: &report })?;
    for c in &report.conditions {
        let witness = c
            .witness
            .as_ref()
            .map(|w| format!("  witness t = {:.6e}: {:.6e} {} {:.6e}", w.t, w.lhs, w.relation, w.rhs))
            .unwrap_or_default();
        println!("{:<15} {:<13} {:<9}{}", c.id, format!("{:?}", c.verdict).to_lowercase(), format!("{:?}", c.method).to_lowercase(), witness);
    }
    Ok(())
}

#[derive(Serialize)]
struct AuditDocument<'a> {
    schema: u32,
    #[serde(flatten)]
    report: &'a nonlinearity::HypothesisReport,
}

fn verify(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let result = load_result(cfg)?;
    let (base, nl) = result_context(cfg, &result, out)?;
    let report = solver::verify(&result, &base, &*nl, &cfg.numerics.verify)?;
    out.write_json(VERIFY_FILE, &report)?;
    for c in &report.checks {
        println!("{:<18} {:<5} value {:.6e}  threshold {:.1e}", c.name, if c.pass { "pass" } else { "FAIL" }, c.value, c.threshold);
    }
    println!("reproduced bit for bit: {}", report.reproduced);
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(Error::Verification(format!("failed checks: {}", failed.join(", "))));
    }
    if !report.reproduced {
        return Err(Error::Verification("stored scalars were not reproduced bit for bit".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct CrosscheckDocument {
    schema: u32,
    alpha: f64,
    extent: f64,
    side: usize,
    width: f64,
    samples: usize,
    max_relative_error: f64,
    tolerance: f64,
    pass: bool,
}

fn crosscheck(cfg: &RunConfig, out: &OutputDir) -> Result<()> {
    let p = &cfg.problem;
    if p.dimension != 3 {
        return Err(Error::Config(format!("crosscheck runs in dimension 3, got {}", p.dimension)));
    }
    let c = &cfg.numerics.crosscheck;
    if !(c.width.is_finite() && c.width > 0.0) {
        return Err(Error::Config(format!("numerics.crosscheck.width must be positive, got {}", c.width)));
    }
    let g = |r: f64| (-(r / c.width).powi(2)).exp();
    let cart = cartesian_crosscheck(g, p.alpha, c.extent, c.side)?;
    let scfg = cfg.solve_config(1.0);
    let kernel = base_kernel(cfg, &scfg, out)?;
    let field = Field::from_fn(Arc::clone(kernel.grid()), g)?;
    let potential = kernel.potential(field.values());
    let radial = Pchip::new(kernel.grid().nodes().to_vec(), potential)?;
    // the periodic image of the box pollutes the outer half
    let rows: Vec<(f64, f64, f64)> = cart
        .iter()
        .filter(|s| s.r <= c.extent / 4.0)
        .filter_map(|s| radial.eval(s.r).map(|v| (s.r, s.value, v)))
        .collect();
    if rows.is_empty() {
        return Err(Error::Config("no crosscheck sample falls inside the radial grid".into()));
    }
    let max_err = rows.iter().map(|(_, a, b)| (a - b).abs() / b.abs()).fold(0.0, f64::max);
    out.write_with(CROSSCHECK_CSV, |w| {
        writeln!(w, "r,cartesian,radial,relative_error")?;
        for (r, a, b) in &rows {
            writeln!(w, "{},{},{},{}", format_float(*r), format_float(*a), format_float(*b), format_float((a - b).abs() / b.abs()))?;
        }
        Ok(())
    })?;
    let pass = max_err < CROSSCHECK_TOL;
    out.write_json(
        CROSSCHECK_JSON,
        &CrosscheckDocument {
            schema: solver::SCHEMA_VERSION,
            alpha: p.alpha,
            extent: c.extent,
            side: c.side,
            width: c.width,
            samples: rows.len(),
            max_relative_error: max_err,
            tolerance: CROSSCHECK_TOL,
            pass,
        },
    )?;
    println!("{} samples, max relative gap {max_err:.3e} (tolerance {CROSSCHECK_TOL:.0e})", rows.len());
    if !pass {
        return Err(Error::Verification(format!("radial and Cartesian potentials differ by {max_err:.3e}")));
    }
    Ok(())
}
