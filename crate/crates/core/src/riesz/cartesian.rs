//! Independent 3-D check of the radial operator: a direct zero-padded
//! Cartesian convolution with `A/|x|^{3−α}` evaluated by FFT.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use super::riesz_constant;
use crate::error::{Error, Result};
use crate::quad;

/// Largest cube side accepted; the padded work arrays hold `(2m)³` complex values.
pub const MAX_CROSSCHECK_SIDE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrosscheckSample {
    pub r: f64,
    pub value: f64,
}

/// Convolves the radial profile `g` on the cube `[−L/2, L/2]³` with `side³`
/// cells and returns the potential at the cell centres `(x_i, d/2, d/2)`,
/// `x_i > 0`, tagged with their distance to the origin.
pub fn cartesian_crosscheck<G>(g: G, alpha: f64, extent: f64, side: usize) -> Result<Vec<CrosscheckSample>>
where
    G: Fn(f64) -> f64 + Sync,
{
    if side > MAX_CROSSCHECK_SIDE {
        return Err(Error::Resource(format!("cube side {side} exceeds the limit {MAX_CROSSCHECK_SIDE}")));
    }
    if side < 4 || !side.is_multiple_of(2) {
        return Err(Error::Config(format!("cube side must be even and at least 4, got {side}")));
    }
    if !(extent.is_finite() && extent > 0.0) {
        return Err(Error::Config(format!("box extent must be positive, got {extent}")));
    }
    let constant = riesz_constant(3, alpha)?;
    let d = extent / side as f64;
    let beta = alpha - 3.0;
    let p = 2 * side;
    let center = |i: usize| -0.5 * extent + (i as f64 + 0.5) * d;

    let mut source = vec![Complex::new(0.0, 0.0); p * p * p];
    source.par_chunks_mut(p * p).enumerate().take(side).for_each(|(i, plane)| {
        let x = center(i);
        for j in 0..side {
            let y = center(j);
            for k in 0..side {
                let z = center(k);
                plane[j * p + k] = Complex::new(g((x * x + y * y + z * z).sqrt()), 0.0);
            }
        }
    });

    let origin = origin_cell_average(beta, d)?;
    let offset = |k: usize| if k < side { k as f64 } else { k as f64 - p as f64 };
    let mut kernel = vec![Complex::new(0.0, 0.0); p * p * p];
    kernel.par_chunks_mut(p * p).enumerate().for_each(|(i, plane)| {
        if i == side {
            return;
        }
        let x = offset(i) * d;
        for j in (0..p).filter(|&j| j != side) {
            let y = offset(j) * d;
            for k in (0..p).filter(|&k| k != side) {
                let z = offset(k) * d;
                let r2 = x * x + y * y + z * z;
                plane[j * p + k] = Complex::new(if r2 == 0.0 { origin } else { r2.powf(0.5 * beta) }, 0.0);
            }
        }
    });

    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(p);
    let inverse = planner.plan_fft_inverse(p);
    fft3(&mut source, p, &*forward);
    fft3(&mut kernel, p, &*forward);
    source.par_iter_mut().zip(kernel.par_iter()).for_each(|(a, b)| *a *= b);
    fft3(&mut source, p, &*inverse);

    let scale = constant * d * d * d / (p * p * p) as f64;
    let j = side / 2;
    Ok((side / 2..side)
        .map(|i| {
            let x = center(i);
            let y = center(j);
            CrosscheckSample { r: (x * x + 2.0 * y * y).sqrt(), value: source[(i * p + j) * p + j].re * scale }
        })
        .collect())
}

/// In-place 3-D transform: a 1-D pass along the contiguous axis, then a
/// cyclic axis rotation, three times over.
fn fft3(data: &mut Vec<Complex<f64>>, p: usize, fft: &dyn rustfft::Fft<f64>) {
    let mut rotated = vec![Complex::new(0.0, 0.0); data.len()];
    for _ in 0..3 {
        data.par_chunks_mut(p).for_each_init(
            || vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, line| fft.process_with_scratch(line, scratch),
        );
        // (i, j, k) -> (k, i, j)
        rotated.par_chunks_mut(p * p).enumerate().for_each(|(k, plane)| {
            for i in 0..p {
                for j in 0..p {
                    plane[i * p + j] = data[(i * p + j) * p + k];
                }
            }
        });
        std::mem::swap(data, &mut rotated);
    }
}

/// Mean of `|x|^β` over the cube `[−a, a]³`, `a = d/2`, via the divergence
/// theorem applied to `x|x|^β`.
fn origin_cell_average(beta: f64, d: f64) -> Result<f64> {
    let a = 0.5 * d;
    let face_quarter = quad::integrate(
        |y: f64| {
            quad::integrate(|z: f64| (a * a + y * y + z * z).powf(0.5 * beta), 0.0, a, 1e-12, 0.0)
                .unwrap_or(f64::NAN)
        },
        0.0,
        a,
        1e-11,
        0.0,
    )
    .map_err(|e| Error::Domain(format!("origin cell average failed to converge (estimate {})", e.estimate)))?;
    Ok(6.0 * a * 4.0 * face_quarter / ((beta + 3.0) * d * d * d))
}
