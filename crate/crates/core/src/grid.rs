//! Radial discretization of ℝᴺ.
//!
//! Functions are sampled at cell midpoints `r_j = (j + ½)h` on `[0, R]` and
//! integrated with the weights `w_j = ω_N r_j^{N-1} h`. The kinetic energy is
//! a pentadiagonal quadratic form `uᵀAu` built as the Richardson combination
//! `(4A_h − A_2h)/3` of two face-difference forms (spacings `h` and `2h`),
//! which is fourth-order accurate in the bulk. Face weights are chosen so both
//! forms are exact on `r²` at every node, which encodes the regularity
//! condition `u'(0) = 0` without a ghost node. A Dirichlet condition closes
//! the domain at `r = R`.
//!
//! The discrete Laplacian is `−Δ_h = W⁻¹A`, so `⟨−Δ_h u, u⟩_w` equals
//! `kinetic(u)` identically and gradients of the kinetic energy are exact.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dimension: u32,
    pub radius: f64,
    pub nodes: usize,
}

impl GridSpec {
    pub fn new(dimension: u32, radius: f64, nodes: usize) -> Self {
        Self { dimension, radius, nodes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 3 {
            return Err(Error::Config(format!("dimension must be >= 3, got {}", self.dimension)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if self.nodes < MIN_NODES {
            return Err(Error::Config(format!(
                "node count must be >= {MIN_NODES}, got {}",
                self.nodes
            )));
        }
        Ok(())
    }
}

/// Surface measure of the unit sphere S^{N-1} ⊂ ℝᴺ.
pub fn unit_sphere_area(dimension: u32) -> f64 {
    let half = dimension as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma(half)
}

/// Symmetric pentadiagonal matrix stored by bands.
#[derive(Debug, Clone)]
pub(crate) struct Bands {
    pub diag: Vec<f64>,
    pub off1: Vec<f64>,
    pub off2: Vec<f64>,
}

impl Bands {
    fn zeros(n: usize) -> Self {
        Self { diag: vec![0.0; n], off1: vec![0.0; n - 1], off2: vec![0.0; n - 2] }
    }

    /// Adds `c (u_i − u_j)²` (or `c (u_i + u_j)²` when `plus`) to the form.
    fn add_pair(&mut self, i: usize, j: usize, c: f64, plus: bool) {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        self.diag[lo] += c;
        self.diag[hi] += c;
        let off = if plus { c } else { -c };
        match hi - lo {
            1 => self.off1[lo] += off,
            2 => self.off2[lo] += off,
            _ => unreachable!("pentadiagonal forms couple at most two nodes apart"),
        }
    }

    fn combine(a: &Bands, wa: f64, b: &Bands, wb: f64) -> Bands {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| wa * p + wb * q).collect();
        Bands { diag: mix(&a.diag, &b.diag), off1: mix(&a.off1, &b.off1), off2: mix(&a.off2, &b.off2) }
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for j in 0..n {
            let mut acc = self.diag[j] * u[j];
            if j >= 1 {
                acc += self.off1[j - 1] * u[j - 1];
            }
            if j + 1 < n {
                acc += self.off1[j] * u[j + 1];
            }
            if j >= 2 {
                acc += self.off2[j - 2] * u[j - 2];
            }
            if j + 2 < n {
                acc += self.off2[j] * u[j + 2];
            }
            out[j] = acc;
        }
    }
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    spec: GridSpec,
    step: f64,
    omega: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kinetic_form: Bands,
    // second-order form, tridiagonal; only used to precondition
    coarse_form: Bands,
}

impl RadialGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.nodes;
        let dim = spec.dimension as i32;
        let h = spec.radius / n as f64;
        let omega = unit_sphere_area(spec.dimension);
        let nodes: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * h).collect();
        let weights: Vec<f64> = nodes.iter().map(|r| omega * r.powi(dim - 1) * h).collect();

        let nf = spec.dimension as f64;
        let mut fine = Bands::zeros(n);
        let mut enclosed = 0.0;
        for (j, r) in nodes.iter().enumerate() {
            enclosed += r.powi(dim - 1) * h;
            let face = (j + 1) as f64 * h;
            let a = nf * enclosed / face;
            if j + 1 < n {
                fine.add_pair(j, j + 1, omega * a / h, false);
            } else {
                // half cell to the Dirichlet wall
                fine.diag[j] += omega * 2.0 * a / h;
            }
        }

        let mut wide = Bands::zeros(n);
        let mut parity = vec![0.0; n];
        for k in 0..n {
            parity[k] = nodes[k].powi(dim - 1) * 2.0 * h + if k >= 2 { parity[k - 2] } else { 0.0 };
        }
        for j in 0..n - 2 {
            let b = nf * parity[j] / nodes[j + 1];
            wide.add_pair(j, j + 2, omega * b / (4.0 * h), false);
        }
        // pair (n-2, ghost) with the odd reflection u_n = -u_{n-1}
        let b = nf * parity[n - 2] / nodes[n - 1];
        wide.add_pair(n - 2, n - 1, omega * b / (4.0 * h), true);

        let kinetic_form = Bands::combine(&fine, 4.0 / 3.0, &wide, -1.0 / 3.0);
        Ok(Self { spec, step: h, omega, nodes, weights, kinetic_form, coarse_form: fine })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn dimension(&self) -> u32 {
        self.spec.dimension
    }
    pub fn radius(&self) -> f64 {
        self.spec.radius
    }
    pub fn len(&self) -> usize {
        self.spec.nodes
    }
    pub fn is_empty(&self) -> bool {
        self.spec.nodes == 0
    }
    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same node count on `[0, factor·R]`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::new(GridSpec { radius: self.spec.radius * factor, ..self.spec })
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    pub(crate) fn apply_kinetic_form(&self, u: &[f64], out: &mut [f64]) {
        self.kinetic_form.apply(u, out);
    }

    pub fn kinetic_of(&self, u: &[f64]) -> f64 {
        let mut au = vec![0.0; u.len()];
        self.apply_kinetic_form(u, &mut au);
        au.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    }

    /// `−Δ_h u = W⁻¹ A u`.
    pub fn neg_laplacian_of(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.apply_kinetic_form(u, &mut out);
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o /= w;
        }
        out
    }

    /// Solves `(−Δ_h⁽²⁾ + shift) x = rhs` with the second-order tridiagonal form.
    pub fn solve_shifted_laplacian(&self, rhs: &[f64], shift: f64) -> Vec<f64> {
        let n = rhs.len();
        let f = &self.coarse_form;
        let mut diag: Vec<f64> = (0..n).map(|j| f.diag[j] + shift * self.weights[j]).collect();
        let mut b: Vec<f64> = rhs.iter().zip(&self.weights).map(|(r, w)| r * w).collect();
        for j in 1..n {
            let m = f.off1[j - 1] / diag[j - 1];
            diag[j] -= m * f.off1[j - 1];
            b[j] -= m * b[j - 1];
        }
        let mut x = vec![0.0; n];
        x[n - 1] = b[n - 1] / diag[n - 1];
        for j in (0..n - 1).rev() {
            x[j] = (b[j] - f.off1[j] * x[j + 1]) / diag[j];
        }
        x
    }
}

/// Samples of a radial function on a grid, with lazily cached norms.
#[derive(Debug)]
pub struct Field {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    mass: OnceLock<f64>,
    kinetic: OnceLock<f64>,
}

impl Clone for Field {
    fn clone(&self) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.clone(),
            mass: self.mass.clone(),
            kinetic: self.kinetic.clone(),
        }
    }
}

impl Field {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "field has {} samples, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite field value at node {j}")));
        }
        Ok(Self { grid, values, mass: OnceLock::new(), kinetic: OnceLock::new() })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n], mass: OnceLock::new(), kinetic: OnceLock::new() }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        *self.mass.get_or_init(|| self.grid.inner(&self.values, &self.values))
    }

    pub fn kinetic(&self) -> f64 {
        *self.kinetic.get_or_init(|| self.grid.kinetic_of(&self.values))
    }

    pub fn laplacian_apply(&self) -> Field {
        let values = self.grid.neg_laplacian_of(&self.values).into_iter().map(|v| -v).collect();
        Field::new(Arc::clone(&self.grid), values).expect("laplacian of a finite field is finite")
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| v * factor).collect(),
            mass: OnceLock::new(),
            kinetic: OnceLock::new(),
        }
    }

    /// Rescaled to the prescribed mass.
    pub fn with_mass(&self, mass: f64) -> Result<Field> {
        let current = self.mass();
        if current <= 0.0 {
            return Err(Error::Domain("cannot rescale a zero-mass field".into()));
        }
        Ok(self.scaled((mass / current).sqrt()))
    }

    pub fn same_grid(&self, other: &RadialGrid) -> Result<()> {
        if self.grid.spec() != other.spec() {
            return Err(Error::Shape(format!(
                "field grid {:?} differs from {:?}",
                self.grid.spec(),
                other.spec()
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn make_grid(spec: GridSpec) -> Result<Arc<RadialGrid>> {
    RadialGrid::new(spec).map(Arc::new)
}

pub fn mass(u: &Field) -> f64 {
    u.mass()
}

pub fn kinetic(u: &Field) -> f64 {
    u.kinetic()
}

pub fn laplacian_apply(u: &Field) -> Field {
    u.laplacian_apply()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid(dim: u32, radius: f64, nodes: usize) -> Arc<RadialGrid> {
        make_grid(GridSpec::new(dim, radius, nodes)).unwrap()
    }

    fn gaussian(g: &Arc<RadialGrid>) -> Field {
        Field::from_fn(Arc::clone(g), |r| (-r * r).exp()).unwrap()
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(4), 2.0 * PI * PI, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(make_grid(GridSpec::new(2, 1.0, 64)).is_err());
        assert!(make_grid(GridSpec::new(3, 0.0, 64)).is_err());
        assert!(make_grid(GridSpec::new(3, 1.0, 8)).is_err());
    }

    #[test]
    fn nodes_and_weights() {
        let g = grid(3, 1.0, 1000);
        assert!(g.nodes().windows(2).all(|p| p[0] < p[1]));
        assert!(g.nodes()[0] > 0.0 && *g.nodes().last().unwrap() < 1.0);
        assert!(g.weights().iter().all(|&w| w > 0.0));
        let total: f64 = g.weights().iter().sum();
        assert_relative_eq!(total, 4.0 * PI / 3.0, max_relative = 1e-5);
    }

    #[test]
    fn mass_examples() {
        let g = grid(3, 10.0, 512);
        assert_eq!(Field::zeros(Arc::clone(&g)).mass(), 0.0);
        assert_relative_eq!(gaussian(&g).mass(), (PI / 2.0).powf(1.5), max_relative = 1e-6);
        let ball = grid(3, 1.0, 512);
        let one = Field::from_fn(Arc::clone(&ball), |_| 1.0).unwrap();
        assert_relative_eq!(one.mass(), 4.0 * PI / 3.0, max_relative = 1e-5);
    }

    #[test]
    fn kinetic_of_gaussian() {
        let g = grid(3, 10.0, 512);
        assert_eq!(Field::zeros(Arc::clone(&g)).kinetic(), 0.0);
        let exact = 3.0 * (PI / 2.0).powf(1.5);
        assert_relative_eq!(gaussian(&g).kinetic(), exact, max_relative = 1e-3);
    }

    #[test]
    fn kinetic_self_convergence() {
        let reference = gaussian(&grid(3, 10.0, 4096)).kinetic();
        let err = |n| (gaussian(&grid(3, 10.0, n)).kinetic() - reference).abs();
        for n in [64, 128, 256] {
            let ratio = err(2 * n) / err(n);
            assert!(ratio <= 0.35, "n={n}: ratio {ratio}");
        }
    }

    #[test]
    fn laplacian_of_gaussian() {
        let g = grid(3, 10.0, 512);
        let lap = gaussian(&g).laplacian_apply();
        let exact: Vec<f64> = g.nodes().iter().map(|r| -(6.0 - 4.0 * r * r) * (-r * r).exp()).collect();
        let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let n = g.len();
        let worst = (0..n - 4)
            .map(|j| (lap.values()[j] - exact[j]).abs() / scale)
            .fold(0.0, f64::max);
        assert!(worst < 1e-2, "worst {worst}");
    }

    #[test]
    fn laplacian_annihilates_constants_in_interior() {
        let g = grid(3, 10.0, 256);
        let c = Field::from_fn(Arc::clone(&g), |_| 2.5).unwrap();
        let lap = c.laplacian_apply();
        for j in 0..g.len() - 3 {
            assert!(lap.values()[j].abs() < 1e-9, "node {j}: {}", lap.values()[j]);
        }
    }

    #[test]
    fn laplacian_is_adjoint_to_kinetic() {
        let g = grid(3, 10.0, 512);
        let u = gaussian(&g);
        let lap = u.laplacian_apply();
        let pairing = -g.inner(lap.values(), u.values());
        assert_relative_eq!(pairing, u.kinetic(), max_relative = 1e-12);
    }

    #[test]
    fn kinetic_form_is_positive_definite_on_random_fields() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for dim in [3, 4, 5] {
            let g = grid(dim, 5.0, 48);
            for _ in 0..50 {
                let v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                assert!(g.kinetic_of(&v) > 0.0);
            }
        }
    }

    #[test]
    fn shifted_solve_inverts_coarse_operator() {
        let g = grid(3, 10.0, 128);
        let rhs: Vec<f64> = g.nodes().iter().map(|r| (-r).exp()).collect();
        let x = g.solve_shifted_laplacian(&rhs, 0.7);
        let mut ax = vec![0.0; x.len()];
        g.coarse_form.apply(&x, &mut ax);
        for j in 0..x.len() {
            let lhs = ax[j] / g.weights()[j] + 0.7 * x[j];
            assert_relative_eq!(lhs, rhs[j], max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let a = gaussian(&grid(3, 10.0, 300));
        let b = gaussian(&grid(3, 10.0, 300));
        assert_eq!(a.kinetic().to_bits(), b.kinetic().to_bits());
        assert_eq!(a.mass().to_bits(), b.mass().to_bits());
    }

    proptest::proptest! {
        #[test]
        fn norms_ignore_sign(amp in 0.1f64..5.0, width in 0.3f64..3.0) {
            let g = grid(3, 12.0, 64);
            let u = Field::from_fn(Arc::clone(&g), |r| amp * (-(r / width).powi(2)).exp()).unwrap();
            let v = u.scaled(-1.0);
            proptest::prop_assert_eq!(u.mass().to_bits(), v.mass().to_bits());
            proptest::prop_assert_eq!(u.kinetic().to_bits(), v.kinetic().to_bits());
        }
    }
}
