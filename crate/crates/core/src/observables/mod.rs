//! Estimators and certificates built on the sampled path measure: polarization,
//! Duhamel function and its Fourier transform, the infrared and Bruch–Falk
//! inequalities, the pressure derivative, the condensate proxy and the
//! lattice Green integral entering the long-range-order lower bound.

mod accumulator;
mod green;
mod zone;

pub use accumulator::{Measurer, ObservableAccumulator, Sample};
pub use green::{lattice_green_integral, GreenIntegral, DEFAULT_GREEN_RESOLUTION};
pub use zone::BrillouinZone;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::LatticeBox;
use crate::stats::Estimate;
use accumulator::{SCALAR_M, SCALAR_NN, SCALAR_Q2};

/// Verdicts are attached to margins measured in units of the error bar.
pub const SIGMA_TOLERANCE: f64 = 3.0;

fn require_samples(acc: &ObservableAccumulator) -> Result<()> {
    if acc.n_samples() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            have: acc.n_samples(),
        });
    }
    Ok(())
}

/// Polarization `M` with blocking error.
pub fn polarization(acc: &ObservableAccumulator) -> Result<Estimate> {
    require_samples(acc)?;
    Ok(acc.scalar(SCALAR_M))
}

/// Equal-time `<q^2>`.
pub fn second_moment(acc: &ObservableAccumulator) -> Result<Estimate> {
    require_samples(acc)?;
    Ok(acc.scalar(SCALAR_Q2))
}

/// Duhamel function per offset class (offset classes are site indices of
/// [`LatticeBox`]; class 0 is the on-site value `D_ll`).
pub fn duhamel_matrix(acc: &ObservableAccumulator) -> Result<Vec<Estimate>> {
    require_samples(acc)?;
    Ok(acc.duhamel.estimates())
}

/// Directly measured `D̂_p` in zone order.
pub fn duhamel_hat(acc: &ObservableAccumulator) -> Result<Vec<Estimate>> {
    require_samples(acc)?;
    Ok(acc.duhamel_hat.estimates())
}

/// `D̂_p = sum_o D_o exp(i p·o)`. The imaginary part must vanish.
pub fn fourier_duhamel(
    duhamel: &[f64],
    lattice: &LatticeBox,
    zone: &BrillouinZone,
) -> Result<Vec<f64>> {
    if duhamel.len() != lattice.n_sites() {
        return Err(invalid("D", "one entry per offset class required"));
    }
    let offsets: Vec<Vec<f64>> = (0..lattice.n_sites())
        .map(|o| lattice.offset_vector(o).into_iter().map(|x| x as f64).collect())
        .collect();
    let scale = 1.0 + duhamel.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let mut out = Vec::with_capacity(zone.len());
    for p in zone.momenta() {
        let (mut re, mut im) = (0.0, 0.0);
        for (d, o) in duhamel.iter().zip(&offsets) {
            let phase: f64 = p.iter().zip(o).map(|(a, b)| a * b).sum();
            re += d * phase.cos();
            im += d * phase.sin();
        }
        if im.abs() > 1e-10 * scale * lattice.n_sites() as f64 {
            return Err(Error::Precondition(format!(
                "Fourier transform has imaginary part {im:.3e}; D is not symmetric"
            )));
        }
        out.push(re);
    }
    Ok(out)
}

/// Inverse of [`fourier_duhamel`]: `D_o = |Λ|^{-1} sum_p D̂_p exp(-i p·o)`.
pub fn inverse_fourier_duhamel(
    duhamel_hat: &[f64],
    lattice: &LatticeBox,
    zone: &BrillouinZone,
) -> Vec<f64> {
    let n = lattice.n_sites() as f64;
    (0..lattice.n_sites())
        .map(|o| {
            let ov = lattice.offset_vector(o);
            zone.momenta()
                .iter()
                .zip(duhamel_hat)
                .map(|(p, dh)| {
                    let phase: f64 = p.iter().zip(&ov).map(|(a, &b)| a * b as f64).sum();
                    dh * phase.cos()
                })
                .sum::<f64>()
                / n
        })
        .collect()
}

/// Lattice Laplacian symbol `E(p) = sum_j (1 - cos p_j)`.
pub fn dispersion(p: &[f64]) -> f64 {
    p.iter().map(|x| 1.0 - x.cos()).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct InfraredPoint {
    pub index: usize,
    pub momentum: Vec<f64>,
    pub energy: f64,
    pub duhamel_hat: Estimate,
    pub bound: f64,
    /// `1 / (J E(p)) - D̂_p`.
    pub margin: f64,
    pub sigma: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InfraredReport {
    pub coupling: f64,
    pub points: Vec<InfraredPoint>,
    pub positivity_pass: bool,
    /// Smallest `margin / sigma` over `p != 0`.
    pub min_margin_sigmas: f64,
    pub min_margin: f64,
    pub pass: bool,
}

/// Checks `0 < D̂_p <= 1 / (J E(p))` at every `p != 0` within
/// [`SIGMA_TOLERANCE`] error bars.
pub fn infrared_check(
    duhamel_hat: &[Estimate],
    zone: &BrillouinZone,
    coupling: f64,
) -> Result<InfraredReport> {
    if !(coupling > 0.0) {
        return Err(Error::Precondition(
            "infrared bound requires J > 0".into(),
        ));
    }
    if duhamel_hat.len() != zone.len() {
        return Err(invalid("D̂", "one entry per momentum required"));
    }
    let zero = zone.zero_index();
    let mut points = Vec::new();
    let mut positivity_pass = true;
    for (k, est) in duhamel_hat.iter().enumerate() {
        if k == zero {
            continue;
        }
        let p = zone.momentum(k);
        let energy = dispersion(p);
        let bound = 1.0 / (coupling * energy);
        let margin = bound - est.value;
        let sigma = est.sigma;
        let pass = margin >= -SIGMA_TOLERANCE * sigma;
        positivity_pass &= est.value > -SIGMA_TOLERANCE * sigma;
        points.push(InfraredPoint {
            index: k,
            momentum: p.to_vec(),
            energy,
            duhamel_hat: *est,
            bound,
            margin,
            sigma,
            pass,
        });
    }
    let min_margin_sigmas = points
        .iter()
        .map(|pt| pt.margin / pt.sigma)
        .fold(f64::INFINITY, f64::min);
    let min_margin = points.iter().map(|pt| pt.margin).fold(f64::INFINITY, f64::min);
    let pass = positivity_pass && points.iter().all(|pt| pt.pass);
    Ok(InfraredReport {
        coupling,
        points,
        positivity_pass,
        min_margin_sigmas,
        min_margin,
        pass,
    })
}

fn xi_tanh(xi: f64) -> f64 {
    xi * xi.tanh()
}

/// Solves `ξ tanh ξ = u` for `ξ >= 0`.
fn solve_xi(u: f64) -> f64 {
    let tol = 1e-13 * u.max(1.0);
    let (mut lo, mut hi) = (0.0, u.sqrt().max(u) + 1.0);
    let initial = if u < 1.0 { u.sqrt() } else { u };
    let mut xi = initial.clamp(lo, hi);
    for _ in 0..200 {
        let r = xi_tanh(xi) - u;
        if r.abs() <= tol {
            return xi;
        }
        if r > 0.0 {
            hi = xi;
        } else {
            lo = xi;
        }
        // Newton step, falling back to bisection when it leaves the bracket.
        let slope = xi.tanh() + xi / xi.cosh().powi(2);
        let newton = xi - r / slope;
        xi = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    xi
}

/// `f` defined by `f(ξ tanh ξ) = tanh(ξ) / ξ`, `f(0) = 1`.
pub fn bruch_falk_f(u: f64) -> Result<f64> {
    if !(u >= 0.0) || !u.is_finite() {
        return Err(invalid("u", "argument of f must be finite and nonnegative"));
    }
    if u == 0.0 {
        return Ok(1.0);
    }
    let xi = solve_xi(u);
    if xi < 1e-6 {
        // tanh ξ / ξ = 1 - ξ²/3 + 2ξ⁴/15 + O(ξ⁶)
        let x2 = xi * xi;
        return Ok(1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0);
    }
    Ok(xi.tanh() / xi)
}

/// `df/du`.
pub fn bruch_falk_f_derivative(u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(invalid("u", "argument of f must be nonnegative"));
    }
    if u < 1e-10 {
        return Ok(-1.0 / 3.0);
    }
    let xi = solve_xi(u);
    let t = xi.tanh();
    let sech2 = 1.0 - t * t;
    let df_dxi = (xi * sech2 - t) / (xi * xi);
    let du_dxi = t + xi * sech2;
    Ok(df_dxi / du_dxi)
}

#[derive(Clone, Debug, Serialize)]
pub struct BruchFalkReport {
    pub duhamel: Estimate,
    pub second_moment: Estimate,
    pub mass: f64,
    /// `<q^2> f(1 / (4 m <q^2>))`.
    pub bound: f64,
    pub margin: f64,
    pub sigma: f64,
    pub pass: bool,
}

/// Checks `D_ll >= <q^2> f(1 / (4 m <q^2>))`.
///
/// The two inputs come from the same samples, so their errors are combined
/// linearly (worst-case correlation).
pub fn bruch_falk_check(
    duhamel: Estimate,
    second_moment: Estimate,
    mass: f64,
) -> Result<BruchFalkReport> {
    if !(second_moment.value > 0.0) {
        return Err(invalid("q2", "second moment must be positive"));
    }
    if !(mass > 0.0) {
        return Err(invalid("m", "mass must be positive"));
    }
    let q2 = second_moment.value;
    let u = 1.0 / (4.0 * mass * q2);
    let f = bruch_falk_f(u)?;
    let bound = q2 * f;
    let slope = f - u * bruch_falk_f_derivative(u)?;
    let margin = duhamel.value - bound;
    let sigma = duhamel.sigma + slope.abs() * second_moment.sigma;
    Ok(BruchFalkReport {
        duhamel,
        second_moment,
        mass,
        bound,
        margin,
        sigma,
        pass: margin >= -SIGMA_TOLERANCE * sigma,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureDerivative {
    /// `∂p/∂J = (1 / 2|Λ|) sum_{ordered nn pairs} <ω_l ω_l'>`.
    pub value: Estimate,
    /// `d <q^2>`.
    pub bound: Estimate,
    pub pass: bool,
}

pub fn pressure_derivative(acc: &ObservableAccumulator, dim: usize) -> Result<PressureDerivative> {
    require_samples(acc)?;
    let value = acc.scalar(SCALAR_NN);
    let bound = acc.scalar(SCALAR_Q2).scale(dim as f64);
    // Per configuration the pair sum never exceeds d q2, so the errors are
    // added linearly.
    let sigma = value.sigma + bound.sigma;
    Ok(PressureDerivative {
        value,
        bound,
        pass: value.value <= bound.value + SIGMA_TOLERANCE * sigma,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ThermoIntegral {
    /// Trapezoid estimate of `p(J_max, h) - p(0, h)`.
    pub value: f64,
    /// Statistical error from independent per-point errors.
    pub sigma: f64,
    /// Richardson estimate of the trapezoid error (zero when the grid cannot
    /// be halved).
    pub quadrature_error: f64,
    /// Integrand nondecreasing in `J` within error bars.
    pub monotone: bool,
    /// `value <= J_max ∂p/∂J(J_max)` within errors.
    pub convexity_bound: bool,
}

/// Integrates `∂p/∂J` over an ascending grid starting at zero.
pub fn thermo_integrate(grid: &[f64], derivatives: &[Estimate]) -> Result<ThermoIntegral> {
    if grid.len() < 3 {
        return Err(invalid("J_grid", "need at least 3 points"));
    }
    if grid.len() != derivatives.len() {
        return Err(invalid("J_grid", "one derivative per grid point required"));
    }
    if grid[0] != 0.0 {
        return Err(invalid("J_grid", "grid must start at J = 0"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("J_grid", "grid must be strictly ascending"));
    }
    let trapezoid = |idx: &[usize]| -> (f64, Vec<f64>) {
        let mut weights = vec![0.0; grid.len()];
        for w in idx.windows(2) {
            let dx = grid[w[1]] - grid[w[0]];
            weights[w[0]] += 0.5 * dx;
            weights[w[1]] += 0.5 * dx;
        }
        let v = weights
            .iter()
            .zip(derivatives)
            .map(|(w, d)| w * d.value)
            .sum();
        (v, weights)
    };
    let all: Vec<usize> = (0..grid.len()).collect();
    let (value, weights) = trapezoid(&all);
    let sigma = weights
        .iter()
        .zip(derivatives)
        .map(|(w, d)| (w * d.sigma).powi(2))
        .sum::<f64>()
        .sqrt();
    let quadrature_error = if grid.len() % 2 == 1 {
        let coarse: Vec<usize> = (0..grid.len()).step_by(2).collect();
        (value - trapezoid(&coarse).0).abs() / 3.0
    } else {
        0.0
    };
    let monotone = derivatives.windows(2).all(|w| {
        w[1].value >= w[0].value - SIGMA_TOLERANCE * w[0].sigma.hypot(w[1].sigma)
    });
    let last = derivatives[derivatives.len() - 1];
    let j_max = grid[grid.len() - 1];
    let convexity_bound =
        value <= j_max * last.value + SIGMA_TOLERANCE * (sigma + j_max * last.sigma);
    Ok(ThermoIntegral {
        value,
        sigma,
        quadrature_error,
        monotone,
        convexity_bound,
    })
}

/// Finite-volume condensate proxy `κ_Λ = D̂_0 / |Λ|`.
pub fn kappa_estimate(duhamel_hat: &[Estimate], zone: &BrillouinZone) -> Estimate {
    duhamel_hat[zone.zero_index()].scale(1.0 / zone.len() as f64)
}

/// Lower bound `(ε - δ/J) θ(J) - W_d / J` on the condensate weight, with
/// `θ(J) = f(J / (4 m_* (ε J - δ)))`.
pub fn kappa_lower_bound(
    coupling: f64,
    m_star: f64,
    epsilon: f64,
    delta: f64,
    dim: usize,
) -> Result<f64> {
    let w = lattice_green_integral(dim, DEFAULT_GREEN_RESOLUTION)?.value;
    kappa_lower_bound_with(coupling, m_star, epsilon, delta, w)
}

/// [`kappa_lower_bound`] with a precomputed Green integral `w_d`.
pub fn kappa_lower_bound_with(
    coupling: f64,
    m_star: f64,
    epsilon: f64,
    delta: f64,
    w_d: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && delta >= 0.0 && m_star > 0.0) {
        return Err(invalid("epsilon", "need ε > 0, δ >= 0, m_* > 0"));
    }
    if !(coupling > delta / epsilon) {
        return Err(Error::Precondition(format!(
            "θ(J) undefined for J <= δ/ε = {}",
            delta / epsilon
        )));
    }
    let theta = bruch_falk_f(coupling / (4.0 * m_star * (epsilon * coupling - delta)))?;
    Ok((epsilon - delta / coupling) * theta - w_d / coupling)
}

/// Smallest grid coupling at which [`kappa_lower_bound`] is positive.
pub fn coupling_threshold(
    grid: &[f64],
    m_star: f64,
    epsilon: f64,
    delta: f64,
    dim: usize,
) -> Result<Option<f64>> {
    let w = lattice_green_integral(dim, DEFAULT_GREEN_RESOLUTION)?.value;
    for &j in grid {
        if j <= delta / epsilon {
            continue;
        }
        if kappa_lower_bound_with(j, m_star, epsilon, delta, w)? > 0.0 {
            return Ok(Some(j));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion(&[0.0, 0.0, 0.0]), 0.0);
        assert!((dispersion(&[PI, PI, PI]) - 6.0).abs() < 1e-15);
        assert!((dispersion(&[PI / 2.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn f_examples() {
        assert_eq!(bruch_falk_f(0.0).unwrap(), 1.0);
        let t1 = 1f64.tanh();
        assert!((bruch_falk_f(t1).unwrap() - t1).abs() < 1e-12);
        let u = 10.0 * 10f64.tanh();
        assert!((bruch_falk_f(u).unwrap() - 10f64.tanh() / 10.0).abs() < 1e-12);
        assert!(bruch_falk_f(-1e-3).is_err());
        assert!(bruch_falk_f(1e-30).unwrap() <= 1.0);
    }

    #[test]
    fn f_derivative_matches_finite_difference() {
        for u in [0.01f64, 0.3, 1.0, 4.0, 30.0] {
            let h = 1e-6 * u.max(1e-3);
            let fd = (bruch_falk_f(u + h).unwrap() - bruch_falk_f(u - h).unwrap()) / (2.0 * h);
            let an = bruch_falk_f_derivative(u).unwrap();
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "u={u}: {fd} vs {an}");
        }
    }

    #[test]
    fn harmonic_bruch_falk_is_tight() {
        // For the oscillator D = 1/a and <q^2> = coth(ω/2) / (2 m ω): equality.
        for (m, a) in [(1.0, 1.0), (5.0, 1.0), (25.0, 2.0)] {
            let w: f64 = (a / m as f64).sqrt();
            let q2 = 0.5 / (m * w * (0.5 * w).tanh());
            let r = bruch_falk_check(Estimate::exact(1.0 / a), Estimate::exact(q2), m).unwrap();
            assert!(r.margin.abs() < 1e-12, "margin {}", r.margin);
            assert!(r.pass);
        }
    }

    #[test]
    fn classical_limit_of_bruch_falk() {
        let r = bruch_falk_check(Estimate::exact(1.0), Estimate::exact(1.0), 1e12).unwrap();
        assert!((r.bound - 1.0).abs() < 1e-9);
        assert!(bruch_falk_check(Estimate::exact(1.0), Estimate::exact(0.0), 1.0).is_err());
    }

    #[test]
    fn infrared_rejects_zero_coupling() {
        let lat = LatticeBox::new(1, 2).unwrap();
        let zone = BrillouinZone::new(&lat);
        let dh = vec![Estimate::exact(1.0); zone.len()];
        assert!(infrared_check(&dh, &zone, 0.0).is_err());
        let r = infrared_check(&dh, &zone, 0.1).unwrap();
        assert_eq!(r.points.len(), zone.len() - 1);
        assert!(r.points.iter().all(|p| p.index != zone.zero_index()));
    }

    #[test]
    fn delta_transform_and_round_trip() {
        let lat = LatticeBox::new(2, 2).unwrap();
        let zone = BrillouinZone::new(&lat);
        let mut d = vec![0.0; lat.n_sites()];
        d[0] = 1.0;
        let dh = fourier_duhamel(&d, &lat, &zone).unwrap();
        assert!(dh.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let d: Vec<f64> = (0..lat.n_sites())
            .map(|o| {
                let v = lat.offset_vector(o);
                (-(v.iter().map(|x| x.abs()).sum::<i64>() as f64)).exp()
            })
            .collect();
        let dh = fourier_duhamel(&d, &lat, &zone).unwrap();
        let back = inverse_fourier_duhamel(&dh, &lat, &zone);
        for (a, b) in d.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        let mean: f64 = dh.iter().sum::<f64>() / lat.n_sites() as f64;
        assert!((mean - d[0]).abs() < 1e-10);
    }

    #[test]
    fn asymmetric_duhamel_is_rejected() {
        let lat = LatticeBox::new(1, 2).unwrap();
        let zone = BrillouinZone::new(&lat);
        let d = vec![1.0, 0.5, 0.0, 0.0];
        assert!(fourier_duhamel(&d, &lat, &zone).is_err());
    }

    #[test]
    fn thermo_integration_basics() {
        let grid = [0.0, 0.05, 0.1];
        let zero = vec![Estimate::new(0.0, 0.01); 3];
        let r = thermo_integrate(&grid, &zero).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.monotone && r.convexity_bound);

        // Linear integrand: trapezoid is exact and the Richardson error vanishes.
        let lin: Vec<Estimate> = grid.iter().map(|&j| Estimate::new(1.0 + 2.0 * j, 0.0)).collect();
        let r = thermo_integrate(&grid, &lin).unwrap();
        assert!((r.value - (0.1 + 0.01)).abs() < 1e-15);
        assert!(r.quadrature_error < 1e-15);

        assert!(thermo_integrate(&[0.0, 0.1, 0.05], &zero).is_err());
        assert!(thermo_integrate(&[0.1, 0.2, 0.3], &zero).is_err());
        assert!(thermo_integrate(&[0.0, 0.1], &zero[..2]).is_err());

        let decreasing: Vec<Estimate> =
            [1.0, 0.5, 0.0].iter().map(|&v| Estimate::new(v, 0.01)).collect();
        assert!(!thermo_integrate(&grid, &decreasing).unwrap().monotone);
    }

    #[test]
    fn kappa_bound_limits() {
        let w = lattice_green_integral(3, DEFAULT_GREEN_RESOLUTION).unwrap().value;
        let (eps, delta, m) = (1.0, 0.1, 1.0);
        let limit = eps * bruch_falk_f(1.0 / (4.0 * m * eps)).unwrap();
        let far = kappa_lower_bound_with(1e9, m, eps, delta, w).unwrap();
        assert!((far - limit).abs() < 1e-6);
        assert!(limit > 0.0);
        let near = kappa_lower_bound_with(0.1 + 1e-6, m, eps, delta, w).unwrap();
        assert!(near < 0.0);
        assert!(kappa_lower_bound_with(0.1, m, eps, delta, w).is_err());
    }

    #[test]
    fn coupling_threshold_brackets_the_root() {
        let (eps, delta, m) = (1.0, 0.1, 1.0);
        let grid: Vec<f64> = (1..=400).map(|i| 0.01 * i as f64).collect();
        let j_star = coupling_threshold(&grid, m, eps, delta, 3).unwrap().unwrap();
        let w = lattice_green_integral(3, DEFAULT_GREEN_RESOLUTION).unwrap().value;
        let g = |j: f64| kappa_lower_bound_with(j, m, eps, delta, w).unwrap();
        assert!(g(j_star) > 0.0);
        assert!(g(j_star - 0.01) <= 0.0);
        // Independent bisection on the same expression.
        let (mut lo, mut hi) = (0.1 + 1e-9, 4.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!(j_star >= hi && j_star - hi <= 0.01 + 1e-12);
    }
}
