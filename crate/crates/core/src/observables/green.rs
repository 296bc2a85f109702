use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Result};

/// Gauss–Legendre points per axis used when no resolution is given.
pub const DEFAULT_GREEN_RESOLUTION: usize = 12;

/// Dyadic shells integrated numerically before the small-momentum tail is
/// replaced by its asymptotic form.
const SHELLS: usize = 40;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenIntegral {
    pub dim: usize,
    pub resolution: usize,
    pub value: f64,
    /// `|W(resolution) - W(2 resolution)|`.
    pub refinement_delta: f64,
}

/// Nodes and weights of `n`-point Gauss–Legendre quadrature on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integral of `g` over the shell `[0, h]^d \ [0, h/2]^d` as a union of
/// `2^d - 1` subcubes, each with a tensor Gauss rule.
fn shell_integral(dim: usize, h: f64, nodes: &[f64], weights: &[f64], g: &dyn Fn(&[f64]) -> f64) -> f64 {
    let n = nodes.len();
    let half = 0.5 * h;
    let jac = (0.25 * h).powi(dim as i32);
    let mut point = vec![0.0; dim];
    let mut total = 0.0;
    for corner in 1..(1usize << dim) {
        let mut idx = vec![0usize; dim];
        let mut sub = 0.0;
        loop {
            let mut w = 1.0;
            for j in 0..dim {
                let lo = if corner >> j & 1 == 1 { half } else { 0.0 };
                point[j] = lo + 0.5 * half * (nodes[idx[j]] + 1.0);
                w *= weights[idx[j]];
            }
            sub += w * g(&point);
            let mut j = 0;
            while j < dim {
                idx[j] += 1;
                if idx[j] < n {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == dim {
                break;
            }
        }
        total += jac * sub;
    }
    total
}

fn watson(dim: usize, resolution: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(resolution);
    let energy = |p: &[f64]| -> f64 {
        // 1 - cos x = 2 sin^2(x/2), accurate near the origin.
        1.0 / p.iter().map(|x| 2.0 * (0.5 * x).sin().powi(2)).sum::<f64>()
    };
    let mut integral = 0.0;
    let mut h = PI;
    for _ in 0..SHELLS {
        integral += shell_integral(dim, h, &nodes, &weights, &energy);
        h *= 0.5;
    }
    // Inside [0, h]^d the integrand is 2 / |p|^2 up to relative O(h^2); the
    // unit-cube integral of 1/|x|^2 follows from the self-similar shells.
    let inverse_square = |x: &[f64]| 1.0 / x.iter().map(|v| v * v).sum::<f64>();
    let unit_shell = shell_integral(dim, 1.0, &nodes, &weights, &inverse_square);
    let unit_cube = unit_shell / (1.0 - 0.5f64.powi(dim as i32 - 2));
    integral += 2.0 * h.powi(dim as i32 - 2) * unit_cube;
    integral / PI.powi(dim as i32)
}

/// `W_d = (2π)^{-d} ∫_{[-π, π]^d} dp / E(p)` by dyadic refinement toward the
/// integrable singularity at `p = 0`. Finite only for `d >= 3`.
pub fn lattice_green_integral(dim: usize, resolution: usize) -> Result<GreenIntegral> {
    if dim < 3 {
        return Err(invalid("d", "lattice Green integral diverges for d < 3"));
    }
    if dim > 8 {
        return Err(invalid("d", "dimensions above 8 are not supported"));
    }
    if resolution < 2 {
        return Err(invalid("resolution", "need at least 2 points per axis"));
    }
    let value = watson(dim, resolution);
    let finer = watson(dim, 2 * resolution);
    Ok(GreenIntegral {
        dim,
        resolution,
        value,
        refinement_delta: (value - finer).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        for k in 0..12 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!((q - exact).abs() < 1e-13, "k={k}");
        }
        let (x, _) = gauss_legendre(5);
        assert!(x[2].abs() < 1e-15);
    }

    #[test]
    fn low_dimension_is_rejected() {
        assert!(lattice_green_integral(2, 8).is_err());
        assert!(lattice_green_integral(1, 8).is_err());
    }

    #[test]
    fn three_dimensional_value() {
        let w = lattice_green_integral(3, DEFAULT_GREEN_RESOLUTION).unwrap();
        assert!((w.value - 0.505462).abs() < 1e-4, "{w:?}");
        assert!(w.refinement_delta < 1e-4);
    }
}
