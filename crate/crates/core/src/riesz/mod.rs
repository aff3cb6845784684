//! The Riesz potential `I_α ∗ g` for radial `g` as a dense operator.
//!
//! After integrating out the angles, `(I_α ∗ g)(r) = ∫₀^∞ κ(r, s) g(s) s^{N-1} ds`
//! with `κ(r, s) = A_{N,α} ∫_{S^{N-1}} |r e₁ − s θ|^{α−N} dσ(θ)`. The matrix is
//! `K_ij = c_ij r_j^{N-1} h` where `c` is symmetric: point values of `κ` far
//! from the diagonal, and within a band of the diagonal (where `κ` is
//! singular for `α ≤ 1`, kinked otherwise) the average of `κ(r_min, ·)` over
//! the outer of the two cells. Symmetric `c` makes the weighted bilinear form
//! `⟨K g, f⟩_w` exactly symmetric, which the variational gradients rely on.

mod cartesian;

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{unit_sphere_area, Field, GridSpec, RadialGrid};
use crate::quad;

pub use cartesian::{cartesian_crosscheck, CrosscheckSample, MAX_CROSSCHECK_SIDE};

/// Cells within this many indices of the diagonal are cell-averaged.
pub const NEAR_BAND: usize = 2;
/// Largest grid a kernel dump may describe.
pub const MAX_DUMP_NODES: usize = 1 << 14;
const CELL_TOL: f64 = 1e-10;
const ANGLE_TOL: f64 = 1e-11;
const DUMP_MAGIC: &[u8; 4] = b"RSZK";
const DUMP_VERSION: u32 = 1;

/// `A_{N,α} = Γ((N−α)/2) / (Γ(α/2) π^{N/2} 2^α)`.
pub fn riesz_constant(dimension: u32, alpha: f64) -> Result<f64> {
    let n = dimension as f64;
    if !(alpha > 0.0 && alpha < n) {
        return Err(Error::Domain(format!("alpha must lie in (0, {n}), got {alpha}")));
    }
    Ok(gamma((n - alpha) / 2.0)
        / (gamma(alpha / 2.0) * std::f64::consts::PI.powf(n / 2.0) * 2f64.powf(alpha)))
}

/// The angular-integrated kernel `κ(r, s)`.
#[derive(Debug, Clone, Copy)]
pub struct RadialKernel {
    dimension: u32,
    alpha: f64,
    constant: f64,
    // |S^{N-2}|, the measure of the polar-angle slices
    slice_area: f64,
}

impl RadialKernel {
    pub fn new(dimension: u32, alpha: f64) -> Result<Self> {
        let constant = riesz_constant(dimension, alpha)?;
        let slice_area = if dimension == 3 { 2.0 * std::f64::consts::PI } else { unit_sphere_area(dimension - 1) };
        Ok(Self { dimension, alpha, constant, slice_area })
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn eval(&self, r: f64, s: f64) -> std::result::Result<f64, quad::QuadFailure> {
        self.eval_with_gap(r, s, (r - s).abs())
    }

    // `gap = |r − s|` is passed separately so callers near the diagonal keep it exact
    fn eval_with_gap(&self, r: f64, s: f64, gap: f64) -> std::result::Result<f64, quad::QuadFailure> {
        if self.dimension == 3 {
            return Ok(self.eval_three_dim(r, s, gap));
        }
        let expo = (self.alpha - self.dimension as f64) / 2.0;
        let sin_power = self.dimension as i32 - 2;
        let diff2 = gap * gap;
        let rs4 = 4.0 * r * s;
        let integrand = |theta: f64| {
            let half = (0.5 * theta).sin();
            (diff2 + rs4 * half * half).powf(expo) * theta.sin().powi(sin_power)
        };
        let angular = quad::integrate(integrand, 0.0, std::f64::consts::PI, ANGLE_TOL, 0.0)?;
        Ok(self.constant * self.slice_area * angular)
    }

    // κ(r,s) = A 2π [(r+s)^{α−1} − |r−s|^{α−1}] / (r s (α−1)), continued to α = 1.
    fn eval_three_dim(&self, r: f64, s: f64, near: f64) -> f64 {
        let eps = self.alpha - 1.0;
        let far = r + s;
        let log_ratio = (far / near).ln();
        let bracket = if eps == 0.0 {
            log_ratio
        } else {
            near.powf(eps) * (eps * log_ratio).exp_m1() / eps
        };
        self.constant * 2.0 * std::f64::consts::PI * bracket / (r * s)
    }
}

#[derive(Debug, Clone)]
pub struct RieszKernel {
    grid: Arc<RadialGrid>,
    alpha: f64,
    constant: f64,
    matrix: Vec<f64>,
}

impl RieszKernel {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn dimension(&self) -> u32 {
        self.grid.dimension()
    }
    pub fn constant(&self) -> f64 {
        self.constant
    }
    pub fn len(&self) -> usize {
        self.grid.len()
    }
    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.matrix[i * n..(i + 1) * n]
    }

    /// Matrix–vector product on raw samples.
    pub fn potential(&self, g: &[f64]) -> Vec<f64> {
        let n = self.len();
        debug_assert_eq!(g.len(), n);
        let dot = |row: &[f64]| row.iter().zip(g).map(|(k, v)| k * v).sum::<f64>();
        if n >= 256 {
            self.matrix.par_chunks(n).map(dot).collect()
        } else {
            self.matrix.chunks(n).map(dot).collect()
        }
    }

    pub fn apply(&self, g: &Field) -> Result<Field> {
        g.same_grid(&self.grid)?;
        Field::new(Arc::clone(&self.grid), self.potential(g.values()))
    }

    /// The same operator on the grid `[0, factor·R]`: entries scale as `factor^α`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Domain(format!("rescale factor must be positive, got {factor}")));
        }
        let grid = Arc::new(self.grid.rescaled(factor)?);
        let scale = factor.powf(self.alpha);
        Ok(Self {
            grid,
            alpha: self.alpha,
            constant: self.constant,
            matrix: self.matrix.iter().map(|k| k * scale).collect(),
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let spec = self.grid.spec();
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        out.write_all(&spec.dimension.to_le_bytes())?;
        out.write_all(&self.alpha.to_le_bytes())?;
        out.write_all(&(spec.nodes as u64).to_le_bytes())?;
        out.write_all(&spec.radius.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.matrix.len() * 8);
        for v in &self.matrix {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Format("not a kernel dump (bad magic)".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != DUMP_VERSION {
            return Err(Error::Format(format!("unsupported kernel dump version {version}")));
        }
        input.read_exact(&mut b4)?;
        let dimension = u32::from_le_bytes(b4);
        input.read_exact(&mut b8)?;
        let alpha = f64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let nodes = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8)?;
        let radius = f64::from_le_bytes(b8);
        if nodes > MAX_DUMP_NODES {
            return Err(Error::Format(format!("kernel dump claims {nodes} nodes, more than {MAX_DUMP_NODES}")));
        }
        let grid = Arc::new(RadialGrid::new(GridSpec { dimension, radius, nodes })?);
        let constant = riesz_constant(dimension, alpha)?;
        let mut raw = vec![0u8; nodes * nodes * 8];
        input.read_exact(&mut raw)?;
        let matrix = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { grid, alpha, constant, matrix })
    }
}

/// Builds the dense operator on `grid`.
pub fn build_kernel(grid: &Arc<RadialGrid>, alpha: f64) -> Result<RieszKernel> {
    let dim = grid.dimension();
    let kappa = RadialKernel::new(dim, alpha)?;
    let n = grid.len();
    let h = grid.step();
    let r = grid.nodes();
    let power = dim as i32 - 1;
    let q = if alpha < 2.0 { 2.0 / alpha } else { 1.0 };

    let fail = |i: usize, j: usize, f: quad::QuadFailure| Error::KernelBuild {
        row: i,
        col: j,
        reason: format!("quadrature did not converge (estimate {:.6e}, error {:.3e})", f.estimate, f.error),
    };

    // ∫_{cell j} κ(r_i, s) s^{N-1} ds / (r_j^{N-1} h)
    let cell_average = |i: usize, j: usize| -> Result<f64> {
        let norm = r[j].powi(power) * h;
        let lo = r[j] - 0.5 * h;
        let hi = r[j] + 0.5 * h;
        let err = std::cell::Cell::new(None);
        let eval = |s: f64| match kappa.eval(r[i], s) {
            Ok(v) => v * s.powi(power),
            Err(e) => {
                err.set(Some(e));
                f64::NAN
            }
        };
        let total = if i == j {
            // s = r_i ± (h/2) t^q removes the |r − s|^{α−1} singularity
            let half = 0.5 * h;
            let side = |sign: f64| {
                quad::integrate(
                    |t: f64| {
                        let gap = half * t.powf(q);
                        if gap == 0.0 {
                            return 0.0;
                        }
                        let s = r[i] + sign * gap;
                        let v = match kappa.eval_with_gap(r[i], s, gap) {
                            Ok(v) => v,
                            Err(e) => {
                                err.set(Some(e));
                                f64::NAN
                            }
                        };
                        v * s.powi(power) * half * q * t.powf(q - 1.0)
                    },
                    0.0,
                    1.0,
                    CELL_TOL,
                    0.0,
                )
            };
            let left = side(-1.0);
            let right = side(1.0);
            match (left, right) {
                (Ok(a), Ok(b)) => a + b,
                (Err(e), _) | (_, Err(e)) => return Err(fail(i, j, e)),
            }
        } else {
            quad::integrate(eval, lo, hi, CELL_TOL, 0.0).map_err(|e| fail(i, j, e))?
        };
        if let Some(e) = err.get() {
            return Err(fail(i, j, e));
        }
        if !total.is_finite() {
            return Err(Error::KernelBuild { row: i, col: j, reason: "non-finite cell integral".into() });
        }
        Ok(total / norm)
    };

    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| {
                    if j - i <= NEAR_BAND {
                        cell_average(i, j)
                    } else {
                        kappa.eval(r[i], r[j]).map_err(|e| fail(i, j, e))
                    }
                })
                .collect()
        })
        .collect();

    let mut symmetric = vec![0.0; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, c) in row?.into_iter().enumerate() {
            let j = i + offset;
            symmetric[i * n + j] = c;
            symmetric[j * n + i] = c;
        }
    }
    let column_scale: Vec<f64> = r.iter().map(|rj| rj.powi(power) * h).collect();
    let matrix = symmetric
        .chunks(n)
        .flat_map(|row| row.iter().zip(&column_scale).map(|(c, s)| c * s).collect::<Vec<_>>())
        .collect();
    Ok(RieszKernel { grid: Arc::clone(grid), alpha, constant: kappa.constant(), matrix })
}

pub fn apply(kernel: &RieszKernel, g: &Field) -> Result<Field> {
    kernel.apply(g)
}
