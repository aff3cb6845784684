//! The energy curve `m ↦ E_m` over a mass grid, and checks of its shape.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::nonlinearity::Verdict;
use crate::solver::{self, Problem, SolveConfig, SolveResult};

pub const CSV_HEADER: &str = "m,E,mu,iterations,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Converged,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: f64,
    pub energy: f64,
    pub mu: f64,
    pub iterations: usize,
    pub status: Status,
    /// Error kind of a failed row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRow {
    pub fn converged(m: f64, energy: f64, mu: f64, iterations: usize) -> Self {
        Self { m, energy, mu, iterations, status: Status::Converged, error: None }
    }

    fn from_outcome(m: f64, outcome: &Result<SolveResult>) -> Self {
        match outcome {
            Ok(r) => Self::converged(m, r.energy, r.mu_el, r.iterations),
            Err(e) => Self {
                m,
                energy: f64::NAN,
                mu: f64::NAN,
                iterations: match e {
                    Error::NonConvergence { iterations, .. } => *iterations,
                    _ => 0,
                },
                status: Status::Failed,
                error: Some(e.kind().to_string()),
            },
        }
    }

    pub fn is_converged(&self) -> bool {
        self.status == Status::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Start each solve from the previous solution rescaled to the new mass.
    pub warm_start: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { warm_start: true }
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Full results of converged rows, aligned with `rows`.
    pub results: Vec<Option<SolveResult>>,
}

fn check_masses(masses: &[f64]) -> Result<()> {
    if masses.len() < 3 {
        return Err(Error::Config(format!("a sweep needs at least 3 masses, got {}", masses.len())));
    }
    if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(Error::Config(format!("masses must be positive, got {m}")));
    }
    if masses.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("masses must be strictly ascending".into()));
    }
    Ok(())
}

/// One solve per mass. Failures are recorded per row and the sweep continues.
pub fn sweep(problem: &Problem, base: &SolveConfig, masses: &[f64], opts: SweepOptions) -> Result<Sweep> {
    check_masses(masses)?;
    let configs: Vec<SolveConfig> = masses.iter().map(|&m| SolveConfig { mass: m, ..base.clone() }).collect();
    let solve = |cfg: &SolveConfig, init: Option<Field>| {
        if cfg.multi_start && init.is_none() {
            solver::solve_multi_start(problem, cfg)
        } else {
            solver::solve_with(problem, cfg, init)
        }
    };
    let outcomes: Vec<Result<SolveResult>> = if opts.warm_start {
        let mut out = Vec::with_capacity(configs.len());
        let mut previous: Option<(f64, Field)> = None;
        for cfg in &configs {
            let init = previous
                .as_ref()
                .map(|(m, u)| u.scaled((cfg.mass / m).sqrt()));
            let outcome = solve(cfg, init);
            if let Ok(r) = &outcome {
                previous = Some((cfg.mass, r.representation(problem.grid())?));
            }
            out.push(outcome);
        }
        out
    } else {
        configs.par_iter().map(|cfg| solve(cfg, None)).collect()
    };
    let rows = masses.iter().zip(&outcomes).map(|(&m, o)| SweepRow::from_outcome(m, o)).collect();
    let results = outcomes.into_iter().map(|o| o.ok()).collect();
    Ok(Sweep { rows, results })
}

/// Float in 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            format_float(r.m),
            format_float(r.energy),
            format_float(r.mu),
            r.iterations,
            r.status.as_str()
        )?;
    }
    Ok(())
}

/// Parses CSV written by [`write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Format(format!("expected header {CSV_HEADER:?}, found {other:?}"))),
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let bad = || Error::Format(format!("malformed sweep row {}: {line:?}", k + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let status = match cols[4] {
                "converged" => Status::Converged,
                "failed" => Status::Failed,
                _ => return Err(bad()),
            };
            Ok(SweepRow {
                m: num(cols[0])?,
                energy: num(cols[1])?,
                mu: num(cols[2])?,
                iterations: cols[3].parse().map_err(|_| bad())?,
                status,
                error: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticOptions {
    /// Largest allowed ratio of large-mass to small-mass energies.
    pub decay_fraction: f64,
    /// Whether the large-mass decay is asserted or only reported.
    pub require_decay: bool,
    /// Allowed ratio of a secant slope to its neighbours.
    pub jump_factor: f64,
    /// Smallest ratio of largest to smallest converged mass.
    pub min_span: f64,
}

impl Default for AsymptoticOptions {
    fn default() -> Self {
        Self { decay_fraction: 0.2, require_decay: true, jump_factor: 3.0, min_span: 64.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub schema: u32,
    pub verdict: Verdict,
    pub converged_rows: usize,
    /// Slope of `log E` against `log m` on the smallest masses.
    pub small_mass_slope: Option<f64>,
    pub large_mass_slope: Option<f64>,
    /// Mean energy of the 3 largest masses over that of the 3 smallest.
    pub decay_ratio: Option<f64>,
    pub checks: Vec<SweepCheck>,
}

impl AsymptoticReport {
    pub fn check(&self, name: &str) -> Option<&SweepCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn log_log_slope(rows: &[&SweepRow]) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| r.m.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.energy.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Checks positivity, strict decrease, continuity and the trends at both ends.
pub fn asymptotic_check(rows: &[SweepRow], opts: &AsymptoticOptions) -> AsymptoticReport {
    let conv: Vec<&SweepRow> = rows.iter().filter(|r| r.is_converged()).collect();
    let mut report = AsymptoticReport {
        schema: solver::SCHEMA_VERSION,
        verdict: Verdict::Inconclusive,
        converged_rows: conv.len(),
        small_mass_slope: None,
        large_mass_slope: None,
        decay_ratio: None,
        checks: Vec::new(),
    };
    let span = match (conv.first(), conv.last()) {
        (Some(a), Some(b)) => b.m / a.m,
        _ => 1.0,
    };
    let ordered = conv.windows(2).all(|w| w[1].m > w[0].m);
    if conv.len() < 5 || span < opts.min_span || !ordered {
        report.checks.push(SweepCheck {
            name: "coverage".into(),
            pass: false,
            detail: format!(
                "{} converged rows spanning a mass ratio of {span}; need 5 ascending rows over a ratio of {}",
                conv.len(),
                opts.min_span
            ),
        });
        return report;
    }
    let mut push = |name: &str, pass: bool, detail: String| {
        report.checks.push(SweepCheck { name: name.into(), pass, detail });
    };

    let positive = conv.iter().all(|r| r.energy > 0.0);
    push("energy_positive", positive, "E > 0 on every converged row".into());
    let mu_positive = conv.iter().all(|r| r.mu > 0.0);
    push("mu_positive", mu_positive, "mu > 0 on every converged row".into());
    let rising = conv.windows(2).find(|w| !(w[1].energy < w[0].energy));
    push(
        "strictly_decreasing",
        rising.is_none(),
        match rising {
            Some(w) => format!("E({}) = {} does not drop below E({}) = {}", w[1].m, w[1].energy, w[0].m, w[0].energy),
            None => "E strictly decreases between consecutive rows".into(),
        },
    );

    let secants: Vec<f64> = conv.windows(2).map(|w| (w[1].energy - w[0].energy) / (w[1].m - w[0].m)).collect();
    // each step, measured in log-log, against the steps beside it
    let log_secants: Vec<f64> = conv
        .windows(2)
        .map(|w| (w[1].energy.abs().ln() - w[0].energy.abs().ln()) / (w[1].m.ln() - w[0].m.ln()))
        .collect();
    let jump = (0..log_secants.len()).find(|&k| {
        let neighbours = [k.checked_sub(1), Some(k + 1)]
            .into_iter()
            .flatten()
            .filter_map(|j| log_secants.get(j))
            .map(|s| s.abs())
            .fold(0.0, f64::max);
        neighbours > 0.0 && log_secants[k].abs() > opts.jump_factor * neighbours
    });
    push(
        "continuity",
        jump.is_none() && secants.iter().all(|s| s.is_finite()),
        match jump {
            Some(k) => format!("jump between m = {} and m = {}", conv[k].m, conv[k + 1].m),
            None => format!("no secant exceeds {} times its neighbours", opts.jump_factor),
        },
    );

    let small = log_log_slope(&conv[..3]);
    let large = log_log_slope(&conv[conv.len() - 3..]);
    report.small_mass_slope = Some(small);
    report.large_mass_slope = Some(large);
    let mut push = |name: &str, pass: bool, detail: String| {
        report.checks.push(SweepCheck { name: name.into(), pass, detail });
    };
    push("small_mass_slope", small < 0.0, format!("slope of log E on the 3 smallest masses is {small:.6}"));
    push("large_mass_slope", large < 0.0, format!("slope of log E on the 3 largest masses is {large:.6}"));

    let mean = |rows: &[&SweepRow]| rows.iter().map(|r| r.energy).sum::<f64>() / rows.len() as f64;
    let ratio = mean(&conv[conv.len() - 3..]) / mean(&conv[..3]);
    report.decay_ratio = Some(ratio);
    let decays = ratio < opts.decay_fraction;
    if opts.require_decay {
        report.checks.push(SweepCheck {
            name: "large_mass_decay".into(),
            pass: decays,
            detail: format!("mean large-end over mean small-end energy {ratio:.6} against {}", opts.decay_fraction),
        });
    }
    report.verdict = if report.checks.iter().all(|c| c.pass) { Verdict::Pass } else { Verdict::Fail };
    report
}
