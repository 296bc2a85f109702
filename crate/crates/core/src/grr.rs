//! Free Gaussian path measure, the single-site path measure `ν_h`, and path
//! regularity diagnostics: Hölder modulus, increment moment bounds, the
//! Garsia–Rodemich–Rumsey expectation bound, well events and the mass
//! threshold that keeps paths inside one well.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{LatticeBox, ModelParams, PotentialSpec};
use crate::sampler::{self, PathConfig, SweepStats, Widths};
use crate::stats::{Blocking, Estimate};

/// Effective sample sizes below this trigger a warning.
pub const MIN_ESS: f64 = 10.0;

/// Gaussian measure on periodic paths with covariance `(-m d²/dτ² + a)^{-1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FreeMeasureSampler {
    pub mass: f64,
    pub rigidity: f64,
    /// Modes `|k| <= modes` are sampled individually; the rest enter through
    /// their closed-form grid-aliased variance.
    pub modes: usize,
}

impl FreeMeasureSampler {
    pub fn new(mass: f64, rigidity: f64, modes: usize) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid("m", "mass must be positive and finite"));
        }
        if !(rigidity > 0.0 && rigidity.is_finite()) {
            return Err(invalid("a", "rigidity must be positive and finite"));
        }
        Ok(Self {
            mass,
            rigidity,
            modes,
        })
    }

    /// Default cutoff `4P`.
    pub fn for_slices(mass: f64, rigidity: f64, slices: usize) -> Result<Self> {
        Self::new(mass, rigidity, 4 * slices)
    }

    /// `λ_k = m (2πk)² + a`.
    pub fn eigenvalue(&self, k: i64) -> f64 {
        let w = 2.0 * PI * k as f64;
        self.mass * w * w + self.rigidity
    }

    fn omega0(&self) -> f64 {
        (self.rigidity / self.mass).sqrt()
    }

    /// `E[ω(τ) ω(τ + Δ)] = cosh(ω0 (1/2 - |Δ|)) / (2 m ω0 sinh(ω0 / 2))`.
    pub fn covariance(&self, delta: f64) -> f64 {
        let d = delta.rem_euclid(1.0);
        let w = self.omega0();
        (w * (0.5 - d)).cosh() / (2.0 * self.mass * w * (0.5 * w).sinh())
    }

    /// `E[(ω(τ) - ω(τ'))²]` at separation `delta`.
    pub fn increment_variance(&self, delta: f64) -> f64 {
        let w = self.omega0();
        let d = delta.rem_euclid(1.0);
        // 2 (C(0) - C(d)) written without cancellation.
        let num = 2.0 * (0.5 * w * d).sinh() * (0.5 * w * (1.0 - d)).sinh();
        num / (self.mass * w * (0.5 * w).sinh())
    }

    /// Spectral density of the restriction to a `P`-point grid:
    /// `S_r = sum_n 1 / λ_{r + nP}`.
    fn aliased_spectrum(&self, slices: usize, r: usize) -> f64 {
        let p = slices as f64;
        let x = self.omega0() / p;
        x.sinh() / (2.0 * self.mass * p * self.omega0() * (x.cosh() - (2.0 * PI * r as f64 / p).cos()))
    }

    /// Precomputes the tables for sampling on a `P`-point grid.
    pub fn grid(&self, slices: usize) -> Result<FreeGrid> {
        if slices < 2 {
            return Err(invalid("P", "need at least 2 slices"));
        }
        if 2 * self.modes < slices {
            return Err(invalid("modes", "mode cutoff must be at least P/2"));
        }
        let k = self.modes;
        let scales: Vec<f64> = (0..=k).map(|j| 1.0 / self.eigenvalue(j as i64).sqrt()).collect();
        let mut cos_table = vec![0.0; slices * k];
        let mut sin_table = vec![0.0; slices * k];
        for j in 0..slices {
            for m in 1..=k {
                let phase = 2.0 * PI * ((m * j) % slices) as f64 / slices as f64;
                cos_table[j * k + m - 1] = phase.cos();
                sin_table[j * k + m - 1] = phase.sin();
            }
        }
        // Per residue class, the variance the explicit modes leave out.
        let mut explicit = vec![0.0; slices];
        explicit[0] += 1.0 / self.eigenvalue(0);
        for m in 1..=k {
            let inv = 1.0 / self.eigenvalue(m as i64);
            explicit[m % slices] += inv;
            explicit[(slices - m % slices) % slices] += inv;
        }
        let tail: Vec<f64> = (0..slices)
            .map(|r| (self.aliased_spectrum(slices, r) - explicit[r]).max(0.0))
            .collect();
        Ok(FreeGrid {
            slices,
            modes: k,
            scales,
            cos_table,
            sin_table,
            tail,
        })
    }
}

/// Sampling tables for a fixed grid; see [`FreeMeasureSampler::grid`].
#[derive(Clone, Debug)]
pub struct FreeGrid {
    slices: usize,
    modes: usize,
    scales: Vec<f64>,
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
    tail: Vec<f64>,
}

impl FreeGrid {
    pub fn slices(&self) -> usize {
        self.slices
    }

    /// One path `ω(j/P)`, `j = 0..P`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let (p, k) = (self.slices, self.modes);
        let zero: f64 = rng.sample::<f64, _>(StandardNormal) * self.scales[0];
        let xi: Vec<f64> = (1..=k)
            .map(|m| std::f64::consts::SQRT_2 * self.scales[m] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let eta: Vec<f64> = (1..=k)
            .map(|m| std::f64::consts::SQRT_2 * self.scales[m] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut path: Vec<f64> = (0..p)
            .map(|j| {
                let c = &self.cos_table[j * k..(j + 1) * k];
                let s = &self.sin_table[j * k..(j + 1) * k];
                zero + xi.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
                    + eta.iter().zip(s).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        // Grid-aliased tail as a real stationary field with spectrum `tail`.
        let z0: f64 = rng.sample(StandardNormal);
        let nyquist = if p % 2 == 0 {
            Some(rng.sample::<f64, _>(StandardNormal))
        } else {
            None
        };
        let pairs: Vec<(f64, f64)> = (1..p.div_ceil(2))
            .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for (j, v) in path.iter_mut().enumerate() {
            let mut t = z0 * self.tail[0].sqrt();
            for (r, (a, b)) in pairs.iter().enumerate() {
                let r = r + 1;
                let phase = 2.0 * PI * ((r * j) % p) as f64 / p as f64;
                t += (2.0 * self.tail[r]).sqrt() * (a * phase.cos() + b * phase.sin());
            }
            if let Some(z) = nyquist {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                t += sign * z * self.tail[p / 2].sqrt();
            }
            *v += t;
        }
        path
    }

    pub fn ensemble<R: Rng>(&self, samples: usize, rng: &mut R) -> PathEnsemble {
        let paths = (0..samples).map(|_| self.sample(rng)).collect();
        PathEnsemble::uniform(paths)
    }
}

/// Draws one free path on a `P`-point grid.
pub fn sample_free_path<R: Rng>(s: &FreeMeasureSampler, slices: usize, rng: &mut R) -> Result<Vec<f64>> {
    Ok(s.grid(slices)?.sample(rng))
}

/// Weighted collection of grid paths.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub paths: Vec<Vec<f64>>,
    /// Normalized to sum to one.
    pub weights: Vec<f64>,
    /// Variance inflation for correlated samples (`2 τ_int`).
    pub inflation: f64,
}

impl PathEnsemble {
    pub fn uniform(paths: Vec<Vec<f64>>) -> Self {
        let n = paths.len();
        Self {
            paths,
            weights: vec![1.0 / n as f64; n],
            inflation: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Kish effective sample size, corrected for autocorrelation.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>() / self.inflation
    }

    /// Weighted mean of `f` with its error bar.
    pub fn mean(&self, f: impl Fn(&[f64]) -> f64) -> Estimate {
        let values: Vec<f64> = self.paths.iter().map(|p| f(p)).collect();
        self.mean_of(&values)
    }

    fn mean_of(&self, values: &[f64]) -> Estimate {
        let mean: f64 = values.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        let var: f64 = values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| (w * (v - mean)).powi(2))
            .sum();
        let n = values.len() as f64;
        // Bessel-type correction for the uniform case.
        let var = if n > 1.0 { var * n / (n - 1.0) } else { f64::NAN };
        Estimate::new(mean, (var * self.inflation).sqrt())
    }
}

/// How to sample the single-site measure `ν_h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NuMethod {
    /// Free paths reweighted by `exp(∫ (h ω - V0(ω)) dτ)`.
    Importance,
    /// Single-site Metropolis with the lattice sampler's moves.
    Metropolis,
}

#[derive(Clone, Debug)]
pub struct NuSamples {
    pub ensemble: PathEnsemble,
    pub method: NuMethod,
    pub ess: f64,
    pub warning: Option<String>,
}

/// Samples `ν_h` on a `P`-point grid.
pub fn sample_nu_h<R: Rng>(
    s: &FreeMeasureSampler,
    potential: &PotentialSpec,
    h: f64,
    slices: usize,
    samples: usize,
    method: NuMethod,
    rng: &mut R,
) -> Result<NuSamples> {
    if samples < 2 {
        return Err(invalid("samples", "need at least 2 samples"));
    }
    let potential = potential.with_field(h);
    let ensemble = match method {
        NuMethod::Importance => {
            let grid = s.grid(slices)?;
            let mut paths = Vec::with_capacity(samples);
            let mut log_w = Vec::with_capacity(samples);
            for _ in 0..samples {
                let path = grid.sample(rng);
                let lw = -path.iter().map(|&x| potential.eval_v(x)).sum::<f64>() / slices as f64;
                paths.push(path);
                log_w.push(lw);
            }
            let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !top.is_finite() {
                return Err(Error::NonFinite("importance weights"));
            }
            let raw: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = raw.iter().sum();
            PathEnsemble {
                paths,
                weights: raw.iter().map(|w| w / total).collect(),
                inflation: 1.0,
            }
        }
        NuMethod::Metropolis => metropolis_ensemble(s, &potential, slices, samples, rng)?,
    };
    let ess = ensemble.ess();
    let warning = (ess < MIN_ESS).then(|| {
        let other = match method {
            NuMethod::Importance => "metropolis",
            NuMethod::Metropolis => "importance",
        };
        format!("effective sample size {ess:.1} is below {MIN_ESS}; consider the {other} method")
    });
    Ok(NuSamples {
        ensemble,
        method,
        ess,
        warning,
    })
}

const NU_THERMALIZATION: u64 = 1000;
const NU_THIN: u64 = 5;

fn metropolis_ensemble<R: Rng>(
    s: &FreeMeasureSampler,
    potential: &PotentialSpec,
    slices: usize,
    samples: usize,
    rng: &mut R,
) -> Result<PathEnsemble> {
    // Two uncoupled sites on the smallest torus.
    let params = ModelParams::new(
        s.mass,
        s.rigidity,
        0.0,
        potential.clone(),
        LatticeBox::new(1, 1)?,
        slices,
    )?;
    let mut cfg = PathConfig::zeros(2, slices);
    let mut widths = Widths {
        local: 1.0 / (s.mass * slices as f64).sqrt(),
        shift: 0.5,
    };
    let mut window = SweepStats::default();
    for sweep in 1..=NU_THERMALIZATION {
        let st = sampler::metropolis_sweep(&params, &mut cfg, widths, rng);
        window.local_accepted += st.local_accepted;
        window.local_proposed += st.local_proposed;
        window.shift_accepted += st.shift_accepted;
        window.shift_proposed += st.shift_proposed;
        if sweep % sampler::TUNE_INTERVAL == 0 {
            widths.local = sampler::tune(widths.local, window.local_accepted, window.local_proposed);
            widths.shift = sampler::tune(widths.shift, window.shift_accepted, window.shift_proposed);
            window = SweepStats::default();
        }
    }
    let mut paths = Vec::with_capacity(samples);
    let mut means = Blocking::new(1);
    while paths.len() < samples {
        for _ in 0..NU_THIN {
            sampler::metropolis_sweep(&params, &mut cfg, widths, rng);
        }
        for site in 0..2 {
            if paths.len() < samples {
                let path = cfg.path(site).to_vec();
                means.push(&[path.iter().sum::<f64>() / slices as f64]);
                paths.push(path);
            }
        }
    }
    let tau = means.error(0).tau_int();
    let mut ensemble = PathEnsemble::uniform(paths);
    ensemble.inflation = (2.0 * tau).max(1.0);
    Ok(ensemble)
}

/// Parameters of the regularity argument.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrrParams {
    pub p: u32,
    pub alpha: f64,
    pub theta: f64,
    pub n: usize,
    pub c: f64,
    pub epsilon: f64,
    /// The unspecified absolute constant in the exponent of the bound.
    pub varsigma: f64,
}

impl Default for GrrParams {
    fn default() -> Self {
        Self {
            p: 2,
            alpha: 0.5,
            theta: 0.25,
            n: 4,
            c: 1.0,
            epsilon: 0.25,
            varsigma: 0.0,
        }
    }
}

impl GrrParams {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(invalid("p", "must be at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < self.p as f64 - 1.0) {
            return Err(invalid("alpha", "must lie in (0, p - 1)"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid("theta", "must lie in (0, 1)"));
        }
        if self.n < 2 {
            return Err(invalid("n", "must be at least 2"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if !(self.c > self.epsilon.sqrt()) {
            return Err(invalid("c", "must exceed sqrt(epsilon)"));
        }
        if !(self.varsigma >= 0.0) {
            return Err(invalid("varsigma", "must be nonnegative"));
        }
        Ok(())
    }

    /// `Q_p = 2^p Γ(p + 1/2) / Γ(1/2) = (2p - 1)!!`.
    pub fn q_p(&self) -> f64 {
        double_factorial_odd(self.p)
    }

    /// `Q_{p,α} = 2^{α + 6p + ς} / (p - α - 1) · (1 + 2/α) · Q_p`.
    pub fn q_p_alpha(&self) -> f64 {
        let p = self.p as f64;
        2f64.powf(self.alpha + 6.0 * p + self.varsigma) / (p - self.alpha - 1.0)
            * (1.0 + 2.0 / self.alpha)
            * self.q_p()
    }
}

/// `(2k - 1)!!`, the `2k`-th moment of a standard normal.
pub fn double_factorial_odd(k: u32) -> f64 {
    (1..=k).map(|j| (2 * j - 1) as f64).product()
}

fn periodic_gap(i: usize, j: usize, slices: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(slices - d)
}

/// `λ_ϑ(ω)`: the largest `(ω(τ) - ω(τ'))^{2p} / |τ - τ'|^α` over grid pairs
/// with periodic separation in `(0, ϑ]`.
pub fn holder_modulus(path: &[f64], alpha: f64, p: u32, theta: f64) -> Result<f64> {
    let n = path.len();
    if n < 2 {
        return Err(invalid("P", "path needs at least 2 points"));
    }
    let max_gap = (theta * n as f64 + 1e-9).floor() as usize;
    if max_gap < 1 {
        return Err(invalid("theta", "must be at least 1/P"));
    }
    let max_gap = max_gap.min(n / 2);
    let mut best: f64 = 0.0;
    for g in 1..=max_gap {
        let denom = (g as f64 / n as f64).powf(alpha);
        for i in 0..n {
            let diff = path[(i + g) % n] - path[i];
            best = best.max(diff.powi(2 * p as i32) / denom);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentCheck {
    pub k: u32,
    pub gap: f64,
    pub estimate: Estimate,
    /// Exact Gaussian moment of the free measure.
    pub exact: f64,
    /// `(2k - 1)!! (|τ - τ'| / m)^k`.
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Compares the `2k`-th increment moment between grid slices `i` and `j`
/// against the Kolmogorov-type bound.
pub fn kolmogorov_moment_check(
    free: &FreeMeasureSampler,
    ensemble: &PathEnsemble,
    k: u32,
    i: usize,
    j: usize,
) -> Result<MomentCheck> {
    if k < 1 {
        return Err(invalid("k", "moment order must be at least 1"));
    }
    let slices = ensemble.paths.first().map_or(0, |p| p.len());
    if slices == 0 || i >= slices || j >= slices {
        return Err(invalid("tau", "slice index outside the grid"));
    }
    let gap = periodic_gap(i, j, slices) as f64 / slices as f64;
    let estimate = ensemble.mean(|w| (w[i] - w[j]).powi(2 * k as i32));
    let dk = double_factorial_odd(k);
    let exact = dk * free.increment_variance(gap).powi(k as i32);
    let bound = dk * (gap / free.mass).powi(k as i32);
    let margin = bound - estimate.value;
    let pass = margin >= -3.0 * estimate.sigma || (gap == 0.0 && estimate.value == 0.0);
    Ok(MomentCheck {
        k,
        gap,
        estimate,
        exact,
        bound,
        margin,
        pass,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GrrCheck {
    pub theta: f64,
    pub estimate: Estimate,
    /// `m^{-p} Q_{p,α} ϑ^{p-α}`.
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
    /// Smallest integer `ς` for which the check passes, when it fails.
    pub minimal_varsigma: Option<u32>,
}

pub fn grr_expectation_check(
    ensemble: &PathEnsemble,
    mass: f64,
    params: &GrrParams,
) -> Result<GrrCheck> {
    params.validate()?;
    let mut values = Vec::with_capacity(ensemble.len());
    for path in &ensemble.paths {
        values.push(holder_modulus(path, params.alpha, params.p, params.theta)?);
    }
    let estimate = ensemble.mean_of(&values);
    let p = params.p as f64;
    let bound = mass.powf(-p) * params.q_p_alpha() * params.theta.powf(p - params.alpha);
    let margin = bound - estimate.value;
    let pass = margin >= -3.0 * estimate.sigma;
    let minimal_varsigma = (!pass).then(|| {
        let needed = (estimate.value - 3.0 * estimate.sigma) / bound;
        (params.varsigma + needed.log2()).ceil().max(0.0) as u32
    });
    Ok(GrrCheck {
        theta: params.theta,
        estimate,
        bound,
        margin,
        pass,
        minimal_varsigma,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingFit {
    pub theta_coarse: f64,
    pub theta_fine: f64,
    pub coarse: Estimate,
    pub fine: Estimate,
    /// `log(E λ_coarse / E λ_fine) / log(coarse / fine)`.
    pub exponent: Estimate,
    pub expected: f64,
    pub consistent: bool,
}

/// Two-point power-law fit of the mean Hölder modulus. The ensembles should
/// be independent so their errors combine in quadrature.
pub fn holder_scaling(
    coarse_paths: &PathEnsemble,
    fine_paths: &PathEnsemble,
    alpha: f64,
    p: u32,
    theta_coarse: f64,
    theta_fine: f64,
) -> Result<ScalingFit> {
    if !(theta_coarse > theta_fine && theta_fine > 0.0) {
        return Err(invalid("theta", "need theta_coarse > theta_fine > 0"));
    }
    let modulus = |ens: &PathEnsemble, theta: f64| -> Result<Estimate> {
        let values = ens
            .paths
            .iter()
            .map(|w| holder_modulus(w, alpha, p, theta))
            .collect::<Result<Vec<_>>>()?;
        Ok(ens.mean_of(&values))
    };
    let coarse = modulus(coarse_paths, theta_coarse)?;
    let fine = modulus(fine_paths, theta_fine)?;
    let log_ratio = (theta_coarse / theta_fine).ln();
    let value = (coarse.value / fine.value).ln() / log_ratio;
    let sigma = (coarse.sigma / coarse.value).hypot(fine.sigma / fine.value) / log_ratio;
    let exponent = Estimate::new(value, sigma);
    let expected = p as f64 - alpha;
    Ok(ScalingFit {
        theta_coarse,
        theta_fine,
        coarse,
        fine,
        exponent,
        expected,
        consistent: exponent.agrees_with(expected, 2.0),
    })
}

/// Grid slice of `τ = j/n`.
fn event_slices(slices: usize, n: usize) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(invalid("n", "must be at least 2"));
    }
    if slices % n != 0 {
        return Err(invalid("n", "P must be a multiple of n"));
    }
    Ok((1..=n).map(|j| (j * slices / n) % slices).collect())
}

fn in_well_event(path: &[f64], points: &[usize], c: f64, sign: f64) -> bool {
    points.iter().all(|&k| sign * path[k] >= c)
}

/// Probability that `±ω(j/n) >= c` for `j = 1..n`.
pub fn well_event_probability(ensemble: &PathEnsemble, n: usize, c: f64, sign: f64) -> Result<Estimate> {
    let slices = ensemble.paths.first().map_or(0, |p| p.len());
    let points = event_slices(slices, n)?;
    let sign = sign.signum();
    Ok(ensemble.mean(|w| if in_well_event(w, &points, c, sign) { 1.0 } else { 0.0 }))
}

/// `max{m0, [n (c - √ε)²]^{-1} (Q_{p,α} / σ)^{1/p}}`.
pub fn mass_threshold(params: &GrrParams, sigma_nc: f64, m0: f64) -> Result<f64> {
    params.validate()?;
    if !(sigma_nc > 0.0) {
        return Err(invalid("sigma_nc", "well-event probability must be positive"));
    }
    let gap = params.c - params.epsilon.sqrt();
    let second = (params.q_p_alpha() / sigma_nc).powf(1.0 / params.p as f64)
        / (params.n as f64 * gap * gap);
    Ok(m0.max(second))
}

#[derive(Clone, Debug, Serialize)]
pub struct KeyEventReport {
    pub sign: f64,
    /// Probability of `A(c; ε) ∩ C^±(n; c)`.
    pub probability: Estimate,
    /// Paths in the event.
    pub members: usize,
    /// Members with `±ω(τ) < √ε` at some grid point.
    pub violations: usize,
    pub pass: bool,
}

/// Checks that paths with a small Hölder modulus that sit in a well at the
/// points `j/n` stay at least `√ε` inside it everywhere on the grid.
pub fn key_event_check(ensemble: &PathEnsemble, params: &GrrParams, sign: f64) -> Result<KeyEventReport> {
    params.validate()?;
    let slices = ensemble.paths.first().map_or(0, |p| p.len());
    let points = event_slices(slices, params.n)?;
    let sign = sign.signum();
    let gap = params.c - params.epsilon.sqrt();
    let threshold = gap.powi(2 * params.p as i32) * (params.n as f64).powf(params.alpha);
    let root = params.epsilon.sqrt();
    let mut members = 0;
    let mut violations = 0;
    let mut indicator = Vec::with_capacity(ensemble.len());
    for path in &ensemble.paths {
        let inside = in_well_event(path, &points, params.c, sign)
            && holder_modulus(path, params.alpha, params.p, 1.0 / params.n as f64)? <= threshold;
        if inside {
            members += 1;
            if path.iter().any(|&x| sign * x < root) {
                violations += 1;
            }
        }
        indicator.push(if inside { 1.0 } else { 0.0 });
    }
    let probability = ensemble.mean_of(&indicator);
    Ok(KeyEventReport {
        sign,
        probability,
        members,
        violations,
        pass: members > 0 && violations == 0,
    })
}
