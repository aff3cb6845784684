//! Nonlinearities `(f, F)` with `F(t) = ∫₀ᵗ f`, a name-keyed registry of
//! families, and a numerical auditor for the structural hypotheses
//! (H0)–(H4) the existence theory assumes.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `c·|t|^power·|ln|t||^log_power` with `c > 0`: the leading behaviour of a
/// positive quantity at `0` or `∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Growth {
    pub power: f64,
    pub log_power: i32,
}

impl Growth {
    pub const fn pure(power: f64) -> Self {
        Self { power, log_power: 0 }
    }
}

/// Exact leading-order growth of a built-in family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthProfile {
    pub derivative_at_zero: Growth,
    pub primitive_at_zero: Growth,
    pub primitive_at_infinity: Growth,
}

pub trait Nonlinearity: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn params(&self) -> BTreeMap<String, f64>;
    /// The density `f`.
    fn f(&self, t: f64) -> f64;
    /// The primitive `F`, `F(0) = 0`.
    fn primitive(&self, t: f64) -> f64;
    fn is_odd(&self) -> bool {
        true
    }
    /// Symbolic growth rates, if known, for the limit hypotheses.
    fn growth(&self) -> Option<GrowthProfile> {
        None
    }
}

/// `F̃(t) = f(t)t − ((N+α)/N)F(t)`.
pub fn tilde_f(nl: &dyn Nonlinearity, dimension: u32, alpha: f64, t: f64) -> f64 {
    let n = dimension as f64;
    nl.f(t) * t - (n + alpha) / n * nl.primitive(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Power {
    p: f64,
}

impl Power {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::Config(format!("power exponent must exceed 1, got {p}")));
        }
        Ok(Self { p })
    }
}

impl Nonlinearity for Power {
    fn name(&self) -> &str {
        "power"
    }
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("p".to_string(), self.p)])
    }
    fn f(&self, t: f64) -> f64 {
        t.abs().powf(self.p - 2.0) * t
    }
    fn primitive(&self, t: f64) -> f64 {
        t.abs().powf(self.p) / self.p
    }
    fn growth(&self) -> Option<GrowthProfile> {
        Some(GrowthProfile {
            derivative_at_zero: Growth::pure(self.p - 1.0),
            primitive_at_zero: Growth::pure(self.p),
            primitive_at_infinity: Growth::pure(self.p),
        })
    }
}

pub fn power_nl(p: f64) -> Result<Power> {
    Power::new(p)
}

/// `F(t) = |t|^{1+q} ln(1+|t|^a)` with `q = (α+2)/N`, `a = (4+α)/(N(N−2))`:
/// mass-supercritical at infinity only by a logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct LogExample {
    dimension: u32,
    alpha: f64,
    q: f64,
    a: f64,
}

impl LogExample {
    pub fn new(dimension: u32, alpha: f64) -> Result<Self> {
        let n = dimension as f64;
        if dimension < 3 {
            return Err(Error::Config(format!("dimension must be at least 3, got {dimension}")));
        }
        if !(alpha > 0.0 && alpha < n) {
            return Err(Error::Config(format!("alpha must lie in (0, {n}), got {alpha}")));
        }
        Ok(Self { dimension, alpha, q: (alpha + 2.0) / n, a: (4.0 + alpha) / (n * (n - 2.0)) })
    }

    pub fn log_exponent(&self) -> f64 {
        self.a
    }
}

impl Nonlinearity for LogExample {
    fn name(&self) -> &str {
        "log_example"
    }
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("N".to_string(), self.dimension as f64), ("alpha".to_string(), self.alpha)])
    }
    fn f(&self, t: f64) -> f64 {
        let x = t.abs();
        if x == 0.0 {
            return 0.0;
        }
        let xa = x.powf(self.a);
        let bracket = (1.0 + self.q) * xa.ln_1p() + self.a * xa / (1.0 + xa);
        bracket * x.powf(self.q - 1.0) * t
    }
    fn primitive(&self, t: f64) -> f64 {
        let x = t.abs();
        x.powf(1.0 + self.q) * x.powf(self.a).ln_1p()
    }
    fn growth(&self) -> Option<GrowthProfile> {
        Some(GrowthProfile {
            derivative_at_zero: Growth::pure(self.q + self.a),
            primitive_at_zero: Growth::pure(1.0 + self.q + self.a),
            primitive_at_infinity: Growth { power: 1.0 + self.q, log_power: 1 },
        })
    }
}

pub fn log_example_nl(dimension: u32, alpha: f64) -> Result<LogExample> {
    LogExample::new(dimension, alpha)
}

/// Name and parameters of a registered family, as read from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl NonlinearitySpec {
    pub fn power(p: f64) -> Self {
        Self { name: "power".into(), params: BTreeMap::from([("p".into(), p)]) }
    }
    pub fn log_example() -> Self {
        Self { name: "log_example".into(), params: BTreeMap::new() }
    }
}

type Constructor = fn(&BTreeMap<String, f64>, u32, f64) -> Result<Arc<dyn Nonlinearity>>;

/// Families of nonlinearities addressable by name.
pub struct Registry {
    families: BTreeMap<&'static str, Constructor>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut reg = Self { families: BTreeMap::new() };
        reg.register("power", |params, _, _| {
            reject_unknown(params, &["p"])?;
            let p = *params.get("p").ok_or_else(|| Error::MissingField("problem.nonlinearity.params.p".into()))?;
            Ok(Arc::new(Power::new(p)?))
        });
        reg.register("log_example", |params, dim, alpha| {
            reject_unknown(params, &[])?;
            Ok(Arc::new(LogExample::new(dim, alpha)?))
        });
        reg
    }
}

fn reject_unknown(params: &BTreeMap<String, f64>, known: &[&str]) -> Result<()> {
    match params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(Error::Config(format!("unknown nonlinearity parameter '{k}'"))),
        None => Ok(()),
    }
}

impl Registry {
    pub fn register(&mut self, name: &'static str, constructor: Constructor) {
        self.families.insert(name, constructor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.families.keys().copied()
    }

    pub fn build(&self, spec: &NonlinearitySpec, dimension: u32, alpha: f64) -> Result<Arc<dyn Nonlinearity>> {
        let ctor = self
            .families
            .get(spec.name.as_str())
            .ok_or_else(|| Error::UnknownName { family: "nonlinearity", name: spec.name.clone() })?;
        ctor(&spec.params, dimension, alpha)
    }
}

pub fn build(spec: &NonlinearitySpec, dimension: u32, alpha: f64) -> Result<Arc<dyn Nonlinearity>> {
    Registry::default().build(spec, dimension, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Symbolic,
    Sampled,
}

/// A point where a condition visibly fails, with both sides of the
/// violated relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub id: String,
    pub statement: String,
    pub verdict: Verdict,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub nonlinearity: String,
    pub params: BTreeMap<String, f64>,
    pub dimension: u32,
    pub alpha: f64,
    pub samples: usize,
    pub conditions: Vec<ConditionResult>,
}

impl HypothesisReport {
    pub fn get(&self, id: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.id == id)
    }

    pub fn verdict(&self, id: &str) -> Option<Verdict> {
        self.get(id).map(|c| c.verdict)
    }

    /// True when every listed condition passed.
    pub fn passes(&self, ids: &[&str]) -> bool {
        ids.iter().all(|id| self.verdict(id) == Some(Verdict::Pass))
    }
}

/// Hypotheses the solver relies on.
pub const SOLVER_HYPOTHESES: [&str; 4] = ["H0", "H1", "H2", "H3"];

/// Log-spaced `|t|` samples, taken with both signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub t_min: f64,
    pub t_max: f64,
    pub points_per_sign: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { t_min: 1e-6, t_max: 1e6, points_per_sign: 241 }
    }
}

impl Sampling {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_min <= 1e-6 && self.t_max >= 1e6 && self.t_max.is_finite()) {
            return Err(Error::Config(format!(
                "sampling must cover at least [1e-6, 1e6] in |t|, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if 2 * self.points_per_sign < 200 {
            return Err(Error::Config(format!(
                "sampling needs at least 200 points in total, got {}",
                2 * self.points_per_sign
            )));
        }
        Ok(())
    }

    /// Increasing positive magnitudes.
    pub fn magnitudes(&self) -> Vec<f64> {
        let (lo, hi) = (self.t_min.log10(), self.t_max.log10());
        let n = self.points_per_sign;
        (0..n).map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (n - 1) as f64)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Zero,
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Point {
    Origin,
    Infinity,
}

const TREND_DECADES: f64 = 3.0;
const TREND_FACTOR: f64 = 10.0;

/// Audits `nl` against (H0)–(H4) and the two derived growth inequalities.
pub fn audit(nl: &dyn Nonlinearity, dimension: u32, alpha: f64, sampling: &Sampling) -> Result<HypothesisReport> {
    sampling.validate()?;
    let n = dimension as f64;
    if dimension < 3 {
        return Err(Error::Config(format!("dimension must be at least 3, got {dimension}")));
    }
    if !(alpha > 0.0 && alpha < n) {
        return Err(Error::Config(format!("alpha must lie in (0, {n}), got {alpha}")));
    }
    let q = (alpha + 2.0) / n;
    let hls = (n + alpha) / (n - 2.0);
    let mags = sampling.magnitudes();
    let growth = nl.growth();

    let mut conditions = vec![check_continuity(nl, &mags)];

    let h1_zero = limit_condition(
        &mags,
        growth.map(|g| g.derivative_at_zero),
        |t| nl.f(t).abs(),
        q,
        Point::Origin,
        Target::Zero,
    );
    let h1_inf = limit_condition(
        &mags,
        growth.map(|g| g.primitive_at_infinity),
        |t| nl.primitive(t),
        1.0 + q,
        Point::Infinity,
        Target::Infinity,
    );
    conditions.push(combine(
        "H1",
        format!("f(t)/|t|^{q:.6} -> 0 as t -> 0 and F(t)/|t|^{:.6} -> +inf as |t| -> inf", 1.0 + q),
        &[h1_zero, h1_inf],
    ));
    let h2 = limit_condition(
        &mags,
        growth.map(|g| g.primitive_at_infinity),
        |t| nl.primitive(t),
        hls,
        Point::Infinity,
        Target::Zero,
    );
    conditions.push(combine("H2", format!("F(t)/|t|^{hls:.6} -> 0 as |t| -> inf"), &[h2]));

    let bound = pointwise(
        &mags,
        |t| nl.f(t) * t,
        |t| hls * nl.primitive(t),
        Ordering::Below,
        format!("f(t)t < {hls:.6} F(t)"),
    );
    let monotone = tilde_monotonicity(nl, dimension, alpha, &mags, q);
    conditions.push(combine(
        "H3",
        format!("f(t)t < {hls:.6} F(t) for t != 0, and F~(t)/|t|^{:.6} strictly decreasing on t<0, increasing on t>0", 1.0 + q),
        &[bound, monotone],
    ));

    let h4 = limit_condition(
        &mags,
        growth.map(|g| g.primitive_at_zero),
        |t| nl.primitive(t),
        hls,
        Point::Origin,
        Target::Infinity,
    );
    conditions.push(combine("H4", format!("F(t)/|t|^{hls:.6} -> +inf as t -> 0"), &[h4]));

    let lower = (n + alpha) / n;
    let tilde_positive = pointwise(
        &mags,
        |t| nl.f(t) * t,
        |t| lower * nl.primitive(t),
        Ordering::Above,
        format!("f(t)t > {lower:.6} F(t)"),
    );
    conditions.push(combine("tilde_positive", format!("f(t)t > {lower:.6} F(t) for t != 0"), &[tilde_positive]));

    let strong = (n + alpha + 2.0) / n;
    let strong_bound = pointwise(
        &mags,
        |t| nl.f(t) * t,
        |t| strong * nl.primitive(t),
        Ordering::Above,
        format!("f(t)t > {strong:.6} F(t)"),
    );
    let positive = pointwise(&mags, |t| nl.primitive(t), |_| 0.0, Ordering::Above, "F(t) > 0".into());
    conditions.push(combine(
        "growth_bound",
        format!("f(t)t > {strong:.6} F(t) > 0 for t != 0"),
        &[strong_bound, positive],
    ));

    Ok(HypothesisReport {
        nonlinearity: nl.name().to_string(),
        params: nl.params(),
        dimension,
        alpha,
        samples: 2 * mags.len(),
        conditions,
    })
}

struct Partial {
    verdict: Verdict,
    method: Method,
    witness: Option<Witness>,
    detail: String,
}

fn combine(id: &str, statement: String, parts: &[Partial]) -> ConditionResult {
    let verdict = if parts.iter().any(|p| p.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if parts.iter().all(|p| p.verdict == Verdict::Pass) {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    let method = if parts.iter().all(|p| p.method == Method::Symbolic) { Method::Symbolic } else { Method::Sampled };
    let witness = parts.iter().find(|p| p.verdict == Verdict::Fail).and_then(|p| p.witness.clone());
    let detail = parts.iter().map(|p| p.detail.as_str()).collect::<Vec<_>>().join("; ");
    ConditionResult { id: id.to_string(), statement, verdict, method, witness, detail }
}

fn signed(mags: &[f64]) -> impl Iterator<Item = f64> + '_ {
    mags.iter().flat_map(|&m| [m, -m])
}

fn check_continuity(nl: &dyn Nonlinearity, mags: &[f64]) -> ConditionResult {
    let statement = "f continuous with F' = f".to_string();
    let fail = |witness: Witness, detail: String| ConditionResult {
        id: "H0".into(),
        statement: statement.clone(),
        verdict: Verdict::Fail,
        method: Method::Sampled,
        witness: Some(witness),
        detail,
    };
    let f0 = nl.primitive(0.0);
    if f0 != 0.0 {
        return fail(
            Witness { t: 0.0, lhs: f0, rhs: 0.0, relation: "F(0) = 0".into() },
            "primitive does not vanish at 0".into(),
        );
    }
    for t in signed(mags) {
        let (f, big_f) = (nl.f(t), nl.primitive(t));
        if !f.is_finite() || !big_f.is_finite() {
            return fail(
                Witness { t, lhs: f, rhs: big_f, relation: "f(t), F(t) finite".into() },
                "non-finite value".into(),
            );
        }
        if !(1e-3..=1e3).contains(&t.abs()) {
            continue;
        }
        let h = 1e-4 * t.abs();
        let fd = (nl.primitive(t + h) - nl.primitive(t - h)) / (2.0 * h);
        if (fd - f).abs() > 1e-5 * f.abs().max(1e-300) {
            return fail(
                Witness { t, lhs: fd, rhs: f, relation: "F'(t) = f(t)".into() },
                "central difference of F disagrees with f".into(),
            );
        }
    }
    ConditionResult {
        id: "H0".into(),
        statement,
        verdict: Verdict::Pass,
        method: Method::Sampled,
        witness: None,
        detail: "finite at all samples; F' matches f by central differences on 1e-3 <= |t| <= 1e3".into(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Ordering {
    Below,
    Above,
}

fn pointwise(
    mags: &[f64],
    lhs: impl Fn(f64) -> f64,
    rhs: impl Fn(f64) -> f64,
    order: Ordering,
    relation: String,
) -> Partial {
    for t in signed(mags) {
        let (a, b) = (lhs(t), rhs(t));
        let holds = match order {
            Ordering::Below => a < b,
            Ordering::Above => a > b,
        };
        if !holds {
            return Partial {
                verdict: Verdict::Fail,
                method: Method::Sampled,
                witness: Some(Witness { t, lhs: a, rhs: b, relation: relation.clone() }),
                detail: format!("{relation} violated at t = {t:e}"),
            };
        }
    }
    Partial {
        verdict: Verdict::Pass,
        method: Method::Sampled,
        witness: None,
        detail: format!("{relation} at all {} samples", 2 * mags.len()),
    }
}

fn tilde_monotonicity(nl: &dyn Nonlinearity, dimension: u32, alpha: f64, mags: &[f64], q: f64) -> Partial {
    let ratio = |t: f64| tilde_f(nl, dimension, alpha, t) / t.abs().powf(1.0 + q);
    let relation = format!("F~(t)/|t|^{:.6} strictly monotone", 1.0 + q);
    for w in mags.windows(2) {
        // increasing on (0, ∞); on (−∞, 0) decreasing in t means increasing in |t|
        for sign in [1.0, -1.0] {
            let (inner, outer) = (ratio(sign * w[0]), ratio(sign * w[1]));
            if !(outer > inner) {
                return Partial {
                    verdict: Verdict::Fail,
                    method: Method::Sampled,
                    witness: Some(Witness { t: sign * w[1], lhs: outer, rhs: inner, relation: relation.clone() }),
                    detail: format!(
                        "ratio at t = {:e} is {outer:e}, not beyond its value {inner:e} at t = {:e}",
                        sign * w[1],
                        sign * w[0]
                    ),
                };
            }
        }
    }
    Partial { verdict: Verdict::Pass, method: Method::Sampled, witness: None, detail: format!("{relation} on both half-lines") }
}

fn limit_condition(
    mags: &[f64],
    growth: Option<Growth>,
    numerator: impl Fn(f64) -> f64,
    exponent: f64,
    point: Point,
    target: Target,
) -> Partial {
    let ratio = |t: f64| numerator(t) / t.abs().powf(exponent);
    let place = match point {
        Point::Origin => "t -> 0",
        Point::Infinity => "|t| -> inf",
    };
    let goal = match target {
        Target::Zero => "0",
        Target::Infinity => "+inf",
    };
    let relation = format!("ratio / |t|^{exponent:.6} -> {goal} as {place}");
    // window of the last decades toward the limit point, ordered toward it
    let window: Vec<f64> = match point {
        Point::Origin => {
            let edge = mags[0] * 10f64.powf(TREND_DECADES);
            mags.iter().rev().copied().filter(|&m| m <= edge).collect()
        }
        Point::Infinity => {
            let edge = mags[mags.len() - 1] / 10f64.powf(TREND_DECADES);
            mags.iter().copied().filter(|&m| m >= edge).collect()
        }
    };
    let (first, last) = (window[0], window[window.len() - 1]);
    let failing_witness = |t: f64| Witness { t, lhs: ratio(t), rhs: ratio(first), relation: relation.clone() };

    if let Some(g) = growth {
        let power = g.power - exponent;
        let log_power = g.log_power;
        // sign of the exponent of |t| seen from the limit point
        let toward = match point {
            Point::Origin => -power,
            Point::Infinity => power,
        };
        let limit = if toward > 0.0 || (toward == 0.0 && log_power > 0) {
            Some(Target::Infinity)
        } else if toward < 0.0 || (toward == 0.0 && log_power < 0) {
            Some(Target::Zero)
        } else {
            None
        };
        let described = format!("leading term |t|^{power:.6} (log power {log_power}) as {place}");
        return if limit == Some(target) {
            Partial { verdict: Verdict::Pass, method: Method::Symbolic, witness: None, detail: described }
        } else {
            Partial {
                verdict: Verdict::Fail,
                method: Method::Symbolic,
                witness: Some(failing_witness(last)),
                detail: format!("{described}; limit is not {goal}"),
            }
        };
    }

    let mut verdicts = Vec::new();
    for sign in [1.0, -1.0] {
        let values: Vec<f64> = window.iter().map(|&m| ratio(sign * m)).collect();
        let increasing = values.windows(2).all(|w| w[1] > w[0]);
        let decreasing = values.windows(2).all(|w| w[1] < w[0]);
        let (v0, v1) = (values[0], values[values.len() - 1]);
        let grows = v0 > 0.0 && v1 / v0 >= TREND_FACTOR;
        let shrinks = v0.abs() > 0.0 && v1.abs() * TREND_FACTOR <= v0.abs();
        let abs_decreasing = values.windows(2).all(|w| w[1].abs() < w[0].abs());
        let abs_increasing = values.windows(2).all(|w| w[1].abs() > w[0].abs());
        let verdict = match target {
            Target::Zero if abs_decreasing && shrinks => Verdict::Pass,
            Target::Zero if abs_increasing && v1.abs() >= TREND_FACTOR * v0.abs() => Verdict::Fail,
            Target::Infinity if increasing && grows => Verdict::Pass,
            Target::Infinity if decreasing && shrinks => Verdict::Fail,
            _ => Verdict::Inconclusive,
        };
        verdicts.push((verdict, sign));
    }
    if let Some(&(_, sign)) = verdicts.iter().find(|(v, _)| *v == Verdict::Fail) {
        return Partial {
            verdict: Verdict::Fail,
            method: Method::Sampled,
            witness: Some(Witness { t: sign * last, lhs: ratio(sign * last), rhs: ratio(sign * first), relation }),
            detail: format!("ratio moves away from {goal} by at least {TREND_FACTOR}x over the last {TREND_DECADES} decades"),
        };
    }
    if verdicts.iter().all(|(v, _)| *v == Verdict::Pass) {
        Partial {
            verdict: Verdict::Pass,
            method: Method::Sampled,
            witness: None,
            detail: format!("monotone trend toward {goal} by at least {TREND_FACTOR}x over the last {TREND_DECADES} decades"),
        }
    } else {
        Partial {
            verdict: Verdict::Inconclusive,
            method: Method::Sampled,
            witness: None,
            detail: format!("no monotone {TREND_FACTOR}x trend toward or away from {goal} as {place}"),
        }
    }
}
