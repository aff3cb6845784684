//! Energy, Pohožaev functional, Euler–Lagrange residual and the two
//! Lagrange-multiplier estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::nonlinearity::Nonlinearity;
use crate::riesz::RieszKernel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `∫|∇u|²`
    pub kinetic: f64,
    /// `D(u) = ∫(I_α ∗ F(u))F(u)`
    pub nonlocal: f64,
    pub energy: f64,
    pub pohozaev: f64,
    pub mass: f64,
}

/// Quantities built from `I_α ∗ F(v)` for samples `v` on the kernel's grid.
#[derive(Debug, Clone)]
pub(crate) struct Nonlocal {
    pub potential: Vec<f64>,
    /// `∫(I_α ∗ F(v))F(v)`
    pub pair: f64,
    /// `∫(I_α ∗ F(v))F̃(v)`
    pub tilde: f64,
    /// `∫(I_α ∗ F(v))f(v)v`
    pub work: f64,
    /// `f(v)` at the nodes
    pub density: Vec<f64>,
}

pub(crate) fn nonlocal_terms(values: &[f64], nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<Nonlocal> {
    let grid = kernel.grid();
    let n = grid.dimension() as f64;
    let ratio = (n + kernel.alpha()) / n;
    let prim: Vec<f64> = values.iter().map(|&v| nl.primitive(v)).collect();
    let density: Vec<f64> = values.iter().map(|&v| nl.f(v)).collect();
    if prim.iter().chain(&density).any(|x| !x.is_finite()) {
        return Err(Error::Range("nonlinearity overflowed at the sampled amplitudes".into()));
    }
    let potential = kernel.potential(&prim);
    let w = grid.weights();
    let (mut pair, mut tilde, mut work) = (0.0, 0.0, 0.0);
    for j in 0..values.len() {
        let wp = w[j] * potential[j];
        let fv = density[j] * values[j];
        pair += wp * prim[j];
        work += wp * fv;
        tilde += wp * (fv - ratio * prim[j]);
    }
    if !(pair.is_finite() && tilde.is_finite() && work.is_finite()) {
        return Err(Error::Range("nonlocal energy overflowed".into()));
    }
    Ok(Nonlocal { potential, pair, tilde, work, density })
}

fn check_grid(u: &Field, kernel: &RieszKernel) -> Result<()> {
    u.same_grid(kernel.grid())
}

pub fn energy(u: &Field, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<EnergyBreakdown> {
    check_grid(u, kernel)?;
    let terms = nonlocal_terms(u.values(), nl, kernel)?;
    let kinetic = u.kinetic();
    let n = kernel.dimension() as f64;
    Ok(EnergyBreakdown {
        kinetic,
        nonlocal: terms.pair,
        energy: 0.5 * kinetic - 0.5 * terms.pair,
        pohozaev: kinetic - 0.5 * n * terms.tilde,
        mass: u.mass(),
    })
}

/// `P(u) = ∫|∇u|² − (N/2)∫(I_α ∗ F(u))F̃(u)`.
pub fn pohozaev(u: &Field, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<f64> {
    Ok(energy(u, nl, kernel)?.pohozaev)
}

/// Weighted `L²` norm of `−Δ_h u + μu − (I_α ∗ F(u))f(u)`.
pub fn el_residual(u: &Field, mu: f64, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<f64> {
    check_grid(u, kernel)?;
    let terms = nonlocal_terms(u.values(), nl, kernel)?;
    let lap = u.grid().neg_laplacian_of(u.values());
    let residual: Vec<f64> = (0..u.values().len())
        .map(|j| lap[j] + mu * u.values()[j] - terms.potential[j] * terms.density[j])
        .collect();
    Ok(u.grid().norm(&residual))
}

fn positive_mass(u: &Field) -> Result<f64> {
    let m = u.mass();
    if m > 0.0 {
        Ok(m)
    } else {
        Err(Error::Domain("multiplier undefined for a field of zero mass".into()))
    }
}

/// `μ = (∫(I_α ∗ F(u))f(u)u − ∫|∇u|²)/m`, the least-squares multiplier.
pub fn multiplier_el(u: &Field, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<f64> {
    check_grid(u, kernel)?;
    let m = positive_mass(u)?;
    let terms = nonlocal_terms(u.values(), nl, kernel)?;
    Ok((terms.work - u.kinetic()) / m)
}

/// `μ = (1/2m)∫(I_α ∗ F(u))[(N+α)F(u) − (N−2)f(u)u]`, exact on the Pohožaev set.
pub fn multiplier_pohozaev(u: &Field, nl: &dyn Nonlinearity, kernel: &RieszKernel) -> Result<f64> {
    check_grid(u, kernel)?;
    let m = positive_mass(u)?;
    let terms = nonlocal_terms(u.values(), nl, kernel)?;
    let n = kernel.dimension() as f64;
    Ok(((n + kernel.alpha()) * terms.pair - (n - 2.0) * terms.work) / (2.0 * m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridSpec};
    use crate::nonlinearity::{log_example_nl, power_nl};
    use crate::riesz::build_kernel;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn kernel(n: usize, radius: f64) -> RieszKernel {
        build_kernel(&make_grid(GridSpec::new(3, radius, n)).unwrap(), 2.0).unwrap()
    }

    fn gaussian(k: &RieszKernel, amp: f64) -> Field {
        Field::from_fn(Arc::clone(k.grid()), |r| amp * (-r * r).exp()).unwrap()
    }

    #[test]
    fn zero_field() {
        let k = kernel(64, 8.0);
        let z = Field::zeros(Arc::clone(k.grid()));
        let nl = power_nl(3.0).unwrap();
        let e = energy(&z, &nl, &k).unwrap();
        assert_eq!((e.energy, e.pohozaev, e.kinetic, e.nonlocal), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(el_residual(&z, 1.3, &nl, &k).unwrap(), 0.0);
        assert!(matches!(multiplier_el(&z, &nl, &k), Err(Error::Domain(_))));
        assert!(matches!(multiplier_pohozaev(&z, &nl, &k), Err(Error::Domain(_))));
    }

    #[test]
    fn quadratic_coulomb_energy_of_gaussian() {
        // ∬e^{−a|x|²}e^{−a|y|²}/|x−y| = 2π²√(π/2)a^{−5/2} at a = 2, times A/4 from F = t²/2
        let k = kernel(512, 10.0);
        let u = gaussian(&k, 1.0);
        let e = energy(&u, &power_nl(2.0).unwrap(), &k).unwrap();
        let coulomb = 2.0 * PI * PI * (PI / 2.0).sqrt() * 2f64.powf(-2.5);
        let oracle = coulomb / (4.0 * PI) / 4.0;
        assert_relative_eq!(e.nonlocal, oracle, max_relative = 1e-3);
        assert_relative_eq!(e.energy, 0.5 * e.kinetic - 0.5 * e.nonlocal, max_relative = 1e-15);
    }

    #[test]
    fn coulomb_oracle_by_nested_quadrature() {
        // the same constant from the shell formula, integrated in one dimension
        let potential = |r: f64| {
            let inner = crate::quad::integrate(|s: f64| s * s * (-2.0 * s * s).exp(), 0.0, r, 1e-13, 0.0).unwrap();
            let outer = 0.25 * (-2.0 * r * r).exp();
            inner / r + outer
        };
        let d = crate::quad::integrate(|r: f64| 4.0 * PI * r * r * (-2.0 * r * r).exp() * potential(r), 1e-12, 12.0, 1e-12, 0.0)
            .unwrap()
            / 4.0;
        let closed = 2.0 * PI * PI * (PI / 2.0).sqrt() * 2f64.powf(-2.5) / (4.0 * PI) / 4.0;
        assert_relative_eq!(d, closed, max_relative = 1e-9);
    }

    #[test]
    fn power_pohozaev_identity() {
        let k = kernel(256, 10.0);
        let u = Field::from_fn(Arc::clone(k.grid()), |r| (1.0 + r) * (-r * r / 3.0).exp()).unwrap();
        for p in [2.5, 3.0, 4.0] {
            let nl = power_nl(p).unwrap();
            let e = energy(&u, &nl, &k).unwrap();
            // f(u)u = pF(u): F̃ = (1 − (N+α)/(Np))·p·F
            let expected = e.kinetic - 1.5 * (1.0 - 5.0 / (3.0 * p)) * p * e.nonlocal;
            assert_relative_eq!(e.pohozaev, expected, max_relative = 1e-12);
            assert_relative_eq!(pohozaev(&u, &nl, &k).unwrap(), e.pohozaev);
        }
    }

    #[test]
    fn residual_is_affine_in_mu() {
        let k = kernel(128, 8.0);
        let u = gaussian(&k, 0.7);
        let nl = power_nl(3.0).unwrap();
        let grid = u.grid();
        let terms = nonlocal_terms(u.values(), &nl, &k).unwrap();
        let base: Vec<f64> = {
            let lap = grid.neg_laplacian_of(u.values());
            (0..lap.len()).map(|j| lap[j] - terms.potential[j] * terms.density[j]).collect()
        };
        // ‖b + μu‖² = ‖b‖² + 2μ⟨b,u⟩ + μ²m
        for mu in [0.0, 1.0, 2.5] {
            let r = el_residual(&u, mu, &nl, &k).unwrap();
            let expected = grid.inner(&base, &base) + 2.0 * mu * grid.inner(&base, u.values()) + mu * mu * u.mass();
            assert_relative_eq!(r * r, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn small_amplitude_multiplier_is_negative() {
        let k = kernel(128, 8.0);
        let nl = power_nl(3.0).unwrap();
        assert!(multiplier_el(&gaussian(&k, 1e-3), &nl, &k).unwrap() < 0.0);
    }

    #[test]
    fn pohozaev_multiplier_positive_below_hls_exponent() {
        let k = kernel(128, 8.0);
        let u = Field::from_fn(Arc::clone(k.grid()), |r| (0.3 - r).cos() * (-r).exp()).unwrap();
        for p in [2.0, 3.0, 4.9] {
            assert!(multiplier_pohozaev(&u, &power_nl(p).unwrap(), &k).unwrap() > 0.0);
        }
    }

    #[test]
    fn sign_flip_invariance() {
        let k = kernel(128, 8.0);
        let u = Field::from_fn(Arc::clone(k.grid()), |r| (1.0 - r) * (-r * r).exp()).unwrap();
        let v = u.scaled(-1.0);
        let nl = log_example_nl(3, 2.0).unwrap();
        assert_eq!(energy(&u, &nl, &k).unwrap(), energy(&v, &nl, &k).unwrap());
        assert_eq!(multiplier_el(&u, &nl, &k).unwrap(), multiplier_el(&v, &nl, &k).unwrap());
        assert_eq!(multiplier_pohozaev(&u, &nl, &k).unwrap(), multiplier_pohozaev(&v, &nl, &k).unwrap());
    }

    #[test]
    fn overflow_is_a_range_error() {
        let k = kernel(64, 8.0);
        let u = gaussian(&k, 1e200);
        assert!(matches!(energy(&u, &power_nl(3.0).unwrap(), &k), Err(Error::Range(_))));
    }

    #[test]
    fn grid_mismatch() {
        let k = kernel(64, 8.0);
        let other = make_grid(GridSpec::new(3, 9.0, 64)).unwrap();
        let u = Field::from_fn(other, |r| (-r * r).exp()).unwrap();
        assert!(matches!(energy(&u, &power_nl(3.0).unwrap(), &k), Err(Error::Shape(_))));
    }
}
