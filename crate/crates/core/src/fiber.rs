//! The mass-preserving dilation `(s ⋆ u)(x) = e^{Ns/2} u(e^s x)` and the
//! energy along its orbit.
//!
//! Fiber quantities are evaluated on the grid of `u` through the change of
//! variables: `I(s ⋆ u) = e^{2s}k/2 − e^{−(N+α)s} D(e^{Ns/2}u)/2` with
//! `k = ∫|∇u|²`. Only [`dilate`] interpolates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{nonlocal_terms, Nonlocal};
use crate::grid::Field;
use crate::interp::Pchip;
use crate::nonlinearity::Nonlinearity;
use crate::riesz::RieszKernel;

pub const DEFAULT_S_MAX: f64 = 30.0;
pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberPoint {
    pub s: f64,
    pub energy: f64,
    pub slope: f64,
}

/// Options for locating `s(u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub tol: f64,
    pub s_max: f64,
    /// Centre of the initial bracket.
    pub hint: f64,
    /// Half-width of the initial bracket.
    pub width: f64,
}

impl Default for Projection {
    fn default() -> Self {
        Self { tol: DEFAULT_PROJECTION_TOL, s_max: DEFAULT_S_MAX, hint: 0.0, width: 1.0 }
    }
}

fn check_range(s: f64, s_max: f64) -> Result<()> {
    if !(s.abs() <= s_max) {
        return Err(Error::Range(format!("dilation parameter {s} outside [-{s_max}, {s_max}]")));
    }
    Ok(())
}

/// Samples of `s ⋆ u` on the grid of `u`, by monotone cubic interpolation
/// of `u` (extended evenly through the origin and by zero beyond `R`).
pub fn dilate(u: &Field, s: f64, s_max: f64) -> Result<Field> {
    check_range(s, s_max)?;
    if s == 0.0 {
        return Ok(u.clone());
    }
    let grid = u.grid();
    let nodes = grid.nodes();
    let mut xs = Vec::with_capacity(nodes.len() + 2);
    let mut ys = Vec::with_capacity(nodes.len() + 2);
    xs.push(-nodes[0]);
    ys.push(u.values()[0]);
    xs.extend_from_slice(nodes);
    ys.extend_from_slice(u.values());
    xs.push(grid.radius());
    ys.push(0.0);
    let interp = Pchip::new(xs, ys)?;
    let amp = (0.5 * grid.dimension() as f64 * s).exp();
    let stretch = s.exp();
    let values = nodes.iter().map(|&r| amp * interp.eval(r * stretch).unwrap_or(0.0)).collect();
    Field::new(Arc::clone(grid), values).map_err(|_| Error::Range(format!("dilation by {s} overflowed")))
}

/// Evaluates the fiber of one field repeatedly with its kinetic norm cached.
pub struct Fiber<'a> {
    u: &'a Field,
    nl: &'a dyn Nonlinearity,
    kernel: &'a RieszKernel,
    kinetic: f64,
    peak: f64,
    n: f64,
    alpha: f64,
}

impl<'a> Fiber<'a> {
    pub fn new(u: &'a Field, nl: &'a dyn Nonlinearity, kernel: &'a RieszKernel) -> Result<Self> {
        u.same_grid(kernel.grid())?;
        let peak = u.max_abs();
        if peak == 0.0 {
            return Err(Error::Domain("the fiber of the zero field is degenerate".into()));
        }
        Ok(Self {
            u,
            nl,
            kernel,
            kinetic: u.kinetic(),
            peak,
            n: kernel.dimension() as f64,
            alpha: kernel.alpha(),
        })
    }

    pub fn kinetic(&self) -> f64 {
        self.kinetic
    }

    fn amplitude(&self, s: f64) -> Result<f64> {
        let amp = (0.5 * self.n * s).exp();
        if !(amp * self.peak).is_finite() || amp == 0.0 {
            return Err(Error::Range(format!("amplitude e^(Ns/2) max|u| out of range at s = {s}")));
        }
        Ok(amp)
    }

    fn terms(&self, s: f64) -> Result<(f64, Nonlocal)> {
        let amp = self.amplitude(s)?;
        let v: Vec<f64> = self.u.values().iter().map(|x| amp * x).collect();
        Ok((amp, nonlocal_terms(&v, self.nl, self.kernel)?))
    }

    fn finite(&self, s: f64, x: f64) -> Result<f64> {
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::Range(format!("fiber value overflowed at s = {s}")))
        }
    }

    pub fn point(&self, s: f64) -> Result<FiberPoint> {
        let (_, t) = self.terms(s)?;
        let up = (2.0 * s).exp();
        let down = (-(self.n + self.alpha) * s).exp();
        let energy = self.finite(s, 0.5 * up * self.kinetic - 0.5 * down * t.pair)?;
        let slope = self.finite(s, up * self.kinetic - 0.5 * self.n * down * t.tilde)?;
        Ok(FiberPoint { s, energy, slope })
    }

    pub fn energy(&self, s: f64) -> Result<f64> {
        Ok(self.point(s)?.energy)
    }

    pub fn slope(&self, s: f64) -> Result<f64> {
        Ok(self.point(s)?.slope)
    }

    /// Bracket-and-bisect for the sign change `+ → −` of the slope.
    pub fn project(&self, opts: &Projection) -> Result<f64> {
        let s_max = opts.s_max;
        let hint = opts.hint.clamp(-s_max, s_max);
        let positive = |s: f64| -> Result<bool> { Ok(self.slope(s)? > 0.0) };
        let failure = |side: &str| {
            Error::ProjectionFailure(format!(
                "fiber slope keeps its sign on the {side} up to |s| = {s_max}; no fiber maximum found"
            ))
        };

        let mut width = opts.width;
        let mut lo = (hint - width).max(-s_max);
        while !positive(lo)? {
            if lo <= -s_max {
                return Err(failure("left"));
            }
            width *= 2.0;
            lo = (hint - width).max(-s_max);
        }
        let mut width = opts.width;
        let mut hi = (hint + width).min(s_max);
        while positive(hi)? {
            if hi >= s_max {
                return Err(failure("right"));
            }
            width *= 2.0;
            hi = (hint + width).min(s_max);
        }
        while hi - lo > opts.tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if positive(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `Ψ(u)`, `s(u)` and the sphere-tangent gradient of `Ψ` at `u`.
    pub fn reduced(&self, opts: &Projection) -> Result<Reduced> {
        let s = self.project(opts)?;
        let (amp, t) = self.terms(s)?;
        let up = (2.0 * s).exp();
        let down = (-(self.n + self.alpha) * s).exp();
        let psi = self.finite(s, 0.5 * up * self.kinetic - 0.5 * down * t.pair)?;
        let slope = up * self.kinetic - 0.5 * self.n * down * t.tilde;
        let grid = self.u.grid();
        let lap = grid.neg_laplacian_of(self.u.values());
        let coupling = down * amp;
        let kinetic_part: Vec<f64> = lap.iter().map(|x| up * x).collect();
        let full: Vec<f64> = (0..lap.len())
            .map(|j| kinetic_part[j] - coupling * t.potential[j] * t.density[j])
            .collect();
        let u = self.u.values();
        let mass = self.u.mass();
        let radial = grid.inner(&full, u) / mass;
        let tangent: Vec<f64> = full.iter().zip(u).map(|(g, x)| g - radial * x).collect();
        if tangent.iter().any(|g| !g.is_finite()) {
            return Err(Error::Range(format!("reduced gradient overflowed at s = {s}")));
        }
        let scale = grid.norm(&kinetic_part);
        Ok(Reduced { s, psi, slope, tangent, multiplier: -radial, kinetic_scale: scale })
    }
}

/// Result of one reduced-functional evaluation.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub s: f64,
    pub psi: f64,
    /// Fiber slope at the located `s`, zero up to the bisection tolerance.
    pub slope: f64,
    /// Tangent part of the gradient, in the weighted inner product.
    pub tangent: Vec<f64>,
    /// `−⟨g, u⟩/m`, the Euler–Lagrange multiplier of `s(u) ⋆ u`.
    pub multiplier: f64,
    /// `‖e^{2s}(−Δ_h u)‖`, the scale the gradient norm is measured against.
    pub kinetic_scale: f64,
}

impl Reduced {
    pub fn relative_gradient(&self, grid: &crate::grid::RadialGrid) -> f64 {
        grid.norm(&self.tangent) / self.kinetic_scale
    }
}

pub fn fiber_energy(u: &Field, s: f64, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<f64> {
    Fiber::new(u, nl, kernel)?.energy(s)
}

pub fn fiber_slope(u: &Field, s: f64, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<f64> {
    Fiber::new(u, nl, kernel)?.slope(s)
}

pub fn project(u: &Field, nl: &dyn Nonlinearity, kernel: &RieszKernel, tol: f64) -> Result<f64> {
    Fiber::new(u, nl, kernel)?.project(&Projection { tol, ..Projection::default() })
}

/// `Ψ(u) = I(s(u) ⋆ u)`.
pub fn reduced_energy(u: &Field, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<f64> {
    let fiber = Fiber::new(u, nl, kernel)?;
    let s = fiber.project(&Projection::default())?;
    fiber.energy(s)
}

pub fn reduced_gradient(u: &Field, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<Field> {
    let r = Fiber::new(u, nl, kernel)?.reduced(&Projection::default())?;
    Field::new(Arc::clone(u.grid()), r.tangent)
}

/// `(s, I(s⋆u), P(s⋆u))` at evenly spaced `s`.
pub fn scan(u: &Field, nl: &dyn Nonlinearity, kernel: &RieszKernel, from: f64, to: f64, points: usize) -> Result<Vec<FiberPoint>> {
    if points < 2 || !(to > from) {
        return Err(Error::Config(format!("scan needs from < to and at least 2 points, got [{from}, {to}] x {points}")));
    }
    let fiber = Fiber::new(u, nl, kernel)?;
    (0..points)
        .map(|k| fiber.point(from + (to - from) * k as f64 / (points - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::energy;
    use crate::grid::{make_grid, GridSpec};
    use crate::nonlinearity::{log_example_nl, power_nl};
    use crate::riesz::build_kernel;
    use approx::assert_relative_eq;

    fn kernel(n: usize, radius: f64) -> RieszKernel {
        build_kernel(&make_grid(GridSpec::new(3, radius, n)).unwrap(), 2.0).unwrap()
    }

    fn gaussian(k: &RieszKernel, amp: f64, width: f64) -> Field {
        Field::from_fn(Arc::clone(k.grid()), |r| amp * (-r * r / (width * width)).exp()).unwrap()
    }

    #[test]
    fn dilation_basics() {
        let k = kernel(512, 12.0);
        let u = gaussian(&k, 1.0, 1.0);
        let same = dilate(&u, 0.0, DEFAULT_S_MAX).unwrap();
        assert_eq!(same.values(), u.values());
        let d = dilate(&u, 0.5, DEFAULT_S_MAX).unwrap();
        assert_relative_eq!(d.mass(), u.mass(), max_relative = 1e-4);
        for s in [-1.0, -0.5, 0.5, 1.0] {
            let d = dilate(&u, s, DEFAULT_S_MAX).unwrap();
            let ratio = (d.kinetic() / u.kinetic()).sqrt();
            assert_relative_eq!(ratio, f64::exp(s), max_relative = 1e-2);
        }
        assert!(matches!(dilate(&u, 31.0, DEFAULT_S_MAX), Err(Error::Range(_))));
    }

    #[test]
    fn fiber_at_origin_matches_functionals() {
        let k = kernel(256, 10.0);
        let u = gaussian(&k, 1.3, 1.1);
        let nl = power_nl(3.0).unwrap();
        let e = energy(&u, &nl, &k).unwrap();
        assert_eq!(fiber_energy(&u, 0.0, &nl, &k).unwrap(), e.energy);
        assert_relative_eq!(fiber_slope(&u, 0.0, &nl, &k).unwrap(), e.pohozaev, max_relative = 1e-13);
    }

    #[test]
    fn fiber_energy_matches_materialized_dilation() {
        // on a grid rescaled by e^{-s} the dilated samples are exact
        let k = kernel(256, 10.0);
        let u = gaussian(&k, 1.0, 1.0);
        let nl = power_nl(3.0).unwrap();
        let s: f64 = 0.4;
        let scaled = k.rescaled((-s).exp()).unwrap();
        let amp = (1.5 * s).exp();
        let v = Field::new(Arc::clone(scaled.grid()), u.values().iter().map(|x| amp * x).collect()).unwrap();
        let direct = energy(&v, &nl, &scaled).unwrap();
        let fiber = Fiber::new(&u, &nl, &k).unwrap().point(s).unwrap();
        assert_relative_eq!(direct.energy, fiber.energy, max_relative = 1e-12);
        assert_relative_eq!(direct.pohozaev, fiber.slope, max_relative = 1e-12);
    }

    #[test]
    fn slope_is_derivative_of_energy() {
        let k = kernel(256, 10.0);
        let u = gaussian(&k, 2.0, 1.5);
        let nl = log_example_nl(3, 2.0).unwrap();
        let f = Fiber::new(&u, &nl, &k).unwrap();
        let h = 1e-4;
        for s in [-1.0, 0.0, 1.0] {
            let fd = (f.energy(s + h).unwrap() - f.energy(s - h).unwrap()) / (2.0 * h);
            let slope = f.slope(s).unwrap();
            let scale = slope.abs().max((2.0 * s).exp() * f.kinetic());
            assert!((fd - slope).abs() / scale < 1e-4, "s = {s}: {fd} vs {slope}");
        }
    }

    #[test]
    fn mountain_pass_geometry() {
        let k = kernel(256, 10.0);
        let u = gaussian(&k, 1.0, 1.0);
        let nl = power_nl(3.0).unwrap();
        let f = Fiber::new(&u, &nl, &k).unwrap();
        let left: Vec<f64> = [-4.0, -5.0, -6.0].iter().map(|&s| f.energy(s).unwrap()).collect();
        assert!(left.iter().all(|&e| e > 0.0));
        assert!(left[0] > left[1] && left[1] > left[2]);
        let pts = scan(&u, &nl, &k, -10.0, 10.0, 401).unwrap();
        let changes = pts.windows(2).filter(|w| (w[0].slope > 0.0) != (w[1].slope > 0.0)).count();
        assert_eq!(changes, 1);
        assert!(pts.iter().any(|p| p.energy < 0.0));
    }

    #[test]
    fn projection_properties() {
        let k = kernel(256, 10.0);
        let u = gaussian(&k, 1.0, 1.0);
        let nl = power_nl(3.0).unwrap();
        let f = Fiber::new(&u, &nl, &k).unwrap();
        let s = f.project(&Projection::default()).unwrap();
        assert!(f.slope(s).unwrap().abs() / ((2.0 * s).exp() * f.kinetic()) < 1e-8);
        // a field already on the Pohozaev set projects to 0
        let onto = Field::new(Arc::clone(k.grid()), u.values().iter().map(|x| x * (1.5 * s).exp()).collect()).unwrap();
        let scaled = k.rescaled((-s).exp()).unwrap();
        let onto = Field::new(Arc::clone(scaled.grid()), onto.into_values()).unwrap();
        assert!(project(&onto, &nl, &scaled, 1e-10).unwrap().abs() < 1e-9);
        // sign symmetry is exact
        assert_eq!(project(&u.scaled(-1.0), &nl, &k, 1e-10).unwrap(), s);
        // the maximum of the fiber
        let psi = reduced_energy(&u, &nl, &k).unwrap();
        for p in scan(&u, &nl, &k, s - 4.0, s + 4.0, 41).unwrap() {
            assert!(p.energy <= psi * (1.0 + 1e-12));
        }
        assert_eq!(reduced_energy(&u.scaled(-1.0), &nl, &k).unwrap(), psi);
    }

    #[test]
    fn subcritical_projection_fails() {
        let k = kernel(256, 10.0);
        let u = gaussian(&k, 1.0, 1.0);
        let nl = power_nl(2.0).unwrap();
        let err = project(&u, &nl, &k, 1e-10).unwrap_err();
        assert_eq!(err.kind(), "numeric.projection_failure");
    }

    #[test]
    fn zero_field_has_no_fiber() {
        let k = kernel(64, 10.0);
        let z = Field::zeros(Arc::clone(k.grid()));
        assert!(matches!(project(&z, &power_nl(3.0).unwrap(), &k, 1e-10), Err(Error::Domain(_))));
    }

    #[test]
    fn gradient_is_tangent() {
        let k = kernel(128, 10.0);
        let u = gaussian(&k, 1.0, 1.0);
        let g = reduced_gradient(&u, &power_nl(3.0).unwrap(), &k).unwrap();
        let grid = k.grid();
        assert!(grid.inner(g.values(), u.values()).abs() < 1e-12 * grid.norm(g.values()) * grid.norm(u.values()));
    }
}
