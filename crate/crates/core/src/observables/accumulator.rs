use rustfft::num_complex::Complex64;

use crate::fft::NdFft;
use crate::model::LatticeBox;
use crate::sampler::PathConfig;
use crate::stats::{Blocking, Estimate};

use super::zone::BrillouinZone;

/// Index of each scalar series in [`ObservableAccumulator::scalars`].
pub(crate) const SCALAR_M: usize = 0;
pub(crate) const SCALAR_Q2: usize = 1;
pub(crate) const SCALAR_NN: usize = 2;
pub(crate) const SCALAR_ACTION: usize = 3;
pub(crate) const N_SCALARS: usize = 4;

/// Everything extracted from one configuration.
#[derive(Clone, Debug)]
pub struct Sample {
    /// Space-time average of the path values.
    pub polarization: f64,
    /// Space-time average of the squared path values.
    pub second_moment: f64,
    /// `(1 / 2|Λ|) sum_{ordered nn pairs} int_0^1 ω_l ω_l' dτ`.
    pub nn_correlation: f64,
    pub action_per_site: f64,
    /// Per-site time averages.
    pub site_means: Vec<f64>,
    /// Duhamel function per offset class.
    pub duhamel: Vec<f64>,
    /// Fourier-transformed Duhamel function, indexed in zone order.
    pub duhamel_hat: Vec<f64>,
    /// `Gamma(o, t)` with `o` the offset class and `t` the slice lag,
    /// stored at `o * P + t`.
    pub gamma: Vec<f64>,
}

/// Computes [`Sample`]s from configurations, reusing FFT plans.
pub struct Measurer {
    lattice: LatticeBox,
    slices: usize,
    fft: NdFft,
    zone_to_fft: Vec<usize>,
    buffer: Vec<Complex64>,
}

impl Measurer {
    pub fn new(lattice: &LatticeBox, slices: usize) -> Self {
        let mut dims = vec![lattice.side(); lattice.dim()];
        dims.push(slices);
        let zone = BrillouinZone::new(lattice);
        Self {
            lattice: lattice.clone(),
            slices,
            fft: NdFft::new(&dims),
            zone_to_fft: (0..zone.len()).map(|k| zone.fft_index(k)).collect(),
            buffer: Vec::new(),
        }
    }

    pub fn measure(&mut self, cfg: &PathConfig, action: f64) -> Sample {
        let n_sites = self.lattice.n_sites();
        let p = self.slices;
        let values = cfg.values();
        let total = (n_sites * p) as f64;

        self.buffer.clear();
        self.buffer
            .extend(values.iter().map(|&v| Complex64::new(v, 0.0)));
        self.fft.forward(&mut self.buffer);

        let duhamel_hat: Vec<f64> = self
            .zone_to_fft
            .iter()
            .map(|&s| self.buffer[s * p].norm_sqr() / (n_sites as f64 * (p * p) as f64))
            .collect();

        for v in self.buffer.iter_mut() {
            *v = Complex64::new(v.norm_sqr(), 0.0);
        }
        self.fft.inverse(&mut self.buffer);
        let norm = total * total;
        let gamma: Vec<f64> = self.buffer.iter().map(|v| v.re / norm).collect();
        let duhamel: Vec<f64> = gamma
            .chunks(p)
            .map(|row| row.iter().sum::<f64>() / p as f64)
            .collect();

        let site_means: Vec<f64> = values
            .chunks(p)
            .map(|path| path.iter().sum::<f64>() / p as f64)
            .collect();
        let polarization = site_means.iter().sum::<f64>() / n_sites as f64;
        let second_moment = values.iter().map(|v| v * v).sum::<f64>() / total;

        let table = self.lattice.neighbor_table();
        let k = 2 * self.lattice.dim();
        let mut nn = 0.0;
        for site in 0..n_sites {
            let path = cfg.path(site);
            for &other in &table[site * k..(site + 1) * k] {
                let q = cfg.path(other);
                nn += path.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let nn_correlation = nn / (2.0 * total);

        Sample {
            polarization,
            second_moment,
            nn_correlation,
            action_per_site: action / n_sites as f64,
            site_means,
            duhamel,
            duhamel_hat,
            gamma,
        }
    }
}

/// Mergeable running sums for every measured observable.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableAccumulator {
    pub(crate) n_sites: usize,
    pub(crate) slices: usize,
    pub(crate) scalars: Blocking,
    pub(crate) site_means: Blocking,
    pub(crate) duhamel: Blocking,
    pub(crate) duhamel_hat: Blocking,
    pub(crate) gamma_local: Blocking,
    pub(crate) gamma_sum: Vec<f64>,
}

impl ObservableAccumulator {
    pub fn new(n_sites: usize, slices: usize) -> Self {
        Self {
            n_sites,
            slices,
            scalars: Blocking::new(N_SCALARS),
            site_means: Blocking::new(n_sites),
            duhamel: Blocking::new(n_sites),
            duhamel_hat: Blocking::new(n_sites),
            gamma_local: Blocking::new(slices),
            gamma_sum: vec![0.0; n_sites * slices],
        }
    }

    pub fn n_samples(&self) -> u64 {
        self.scalars.count()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn record(&mut self, s: &Sample) {
        self.scalars.push(&[
            s.polarization,
            s.second_moment,
            s.nn_correlation,
            s.action_per_site,
        ]);
        self.site_means.push(&s.site_means);
        self.duhamel.push(&s.duhamel);
        self.duhamel_hat.push(&s.duhamel_hat);
        self.gamma_local.push(&s.gamma[..self.slices]);
        for (acc, g) in self.gamma_sum.iter_mut().zip(&s.gamma) {
            *acc += g;
        }
    }

    /// Adds another accumulator's sums. Both must describe the same box and
    /// slice count.
    pub fn merge(&mut self, other: &ObservableAccumulator) {
        assert_eq!(
            (self.n_sites, self.slices),
            (other.n_sites, other.slices),
            "accumulator shape mismatch"
        );
        self.scalars.merge(&other.scalars);
        self.site_means.merge(&other.site_means);
        self.duhamel.merge(&other.duhamel);
        self.duhamel_hat.merge(&other.duhamel_hat);
        self.gamma_local.merge(&other.gamma_local);
        for (a, b) in self.gamma_sum.iter_mut().zip(&other.gamma_sum) {
            *a += b;
        }
    }

    pub(crate) fn scalar(&self, index: usize) -> Estimate {
        self.scalars.estimate(index)
    }

    /// Integrated autocorrelation time of the polarization, in measurements.
    pub fn tau_int_polarization(&self) -> f64 {
        self.scalars.error(SCALAR_M).tau_int()
    }

    pub fn site_means(&self) -> Vec<Estimate> {
        self.site_means.estimates()
    }

    /// On-site `Gamma(0, t)` for `t = 0..P`, with blocking errors.
    pub fn gamma_local(&self) -> Vec<Estimate> {
        self.gamma_local.estimates()
    }

    /// Mean `Gamma(o, t)` at `o * P + t`.
    pub fn gamma_table(&self) -> Vec<f64> {
        let n = self.n_samples() as f64;
        self.gamma_sum.iter().map(|g| g / n).collect()
    }

    pub fn mean_action_per_site(&self) -> Estimate {
        self.scalar(SCALAR_ACTION)
    }
}
