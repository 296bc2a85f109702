//! Binning (blocking) analysis for correlated Monte Carlo time series.
//!
//! A [`Blocking`] consumes vector-valued samples and keeps, at every level
//! `l`, the running sum and sum of squares of block means over blocks of
//! `2^l` consecutive samples. The error bar is read off at the level where
//! the block-mean variance stops growing.

use serde::Serialize;

/// Fewest blocks a level must hold to take part in the plateau search.
pub const MIN_BLOCKS: u64 = 32;

/// A mean with its one-standard-deviation error bar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    /// Signed distance to `target` in units of the error bar.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.sigma
    }

    /// True when `|value - target| <= k * sigma`.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.sigma
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::new(self.value * factor, self.sigma * factor.abs())
    }

    /// Difference of two independent estimates.
    pub fn minus(&self, other: &Estimate) -> Self {
        Self::new(self.value - other.value, self.sigma.hypot(other.sigma))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Level {
    pub count: u64,
    pub sum: Vec<f64>,
    pub sumsq: Vec<f64>,
    pub pending: Option<Vec<f64>>,
}

impl Level {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; dim],
            sumsq: vec![0.0; dim],
            pending: None,
        }
    }
}

/// Result of the blocking analysis for one component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockedError {
    pub sigma: f64,
    /// Naive (uncorrelated) error at level zero.
    pub naive_sigma: f64,
    /// Level whose estimate was chosen.
    pub level: usize,
    pub plateau: bool,
}

impl BlockedError {
    /// Integrated autocorrelation time in units of the measurement spacing.
    pub fn tau_int(&self) -> f64 {
        if self.naive_sigma > 0.0 {
            0.5 * (self.sigma / self.naive_sigma).powi(2)
        } else {
            0.5
        }
    }
}

/// Mergeable blocking accumulator for `dim`-component samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Blocking {
    dim: usize,
    levels: Vec<Level>,
}

impl Blocking {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            levels: vec![Level::new(dim)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.levels[0].count
    }

    pub fn push(&mut self, sample: &[f64]) {
        assert_eq!(sample.len(), self.dim, "sample dimension mismatch");
        let mut carry = sample.to_vec();
        let mut level = 0;
        loop {
            if level == self.levels.len() {
                self.levels.push(Level::new(self.dim));
            }
            let lv = &mut self.levels[level];
            lv.count += 1;
            for ((s, q), x) in lv.sum.iter_mut().zip(lv.sumsq.iter_mut()).zip(&carry) {
                *s += x;
                *q += x * x;
            }
            match lv.pending.take() {
                None => {
                    lv.pending = Some(carry);
                    return;
                }
                Some(prev) => {
                    for (c, p) in carry.iter_mut().zip(prev) {
                        *c = 0.5 * (*c + p);
                    }
                    level += 1;
                }
            }
        }
    }

    /// Combines the statistics of two independent streams. Partial blocks do
    /// not span streams, so pending block halves are discarded.
    pub fn merge(&mut self, other: &Blocking) {
        assert_eq!(self.dim, other.dim, "blocking dimension mismatch");
        while self.levels.len() < other.levels.len() {
            self.levels.push(Level::new(self.dim));
        }
        for (mine, theirs) in self.levels.iter_mut().zip(&other.levels) {
            mine.count += theirs.count;
            for (a, b) in mine.sum.iter_mut().zip(&theirs.sum) {
                *a += b;
            }
            for (a, b) in mine.sumsq.iter_mut().zip(&theirs.sumsq) {
                *a += b;
            }
        }
        for lv in &mut self.levels {
            lv.pending = None;
        }
    }

    pub fn mean(&self, component: usize) -> f64 {
        let lv = &self.levels[0];
        lv.sum[component] / lv.count as f64
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.dim).map(|c| self.mean(c)).collect()
    }

    fn level_error(&self, level: usize, component: usize) -> Option<(f64, u64)> {
        let lv = self.levels.get(level)?;
        let n = lv.count;
        if n < 2 {
            return None;
        }
        let nf = n as f64;
        let mean = lv.sum[component] / nf;
        let var = ((lv.sumsq[component] / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        Some(((var / nf).sqrt(), n))
    }

    /// Error bar of component `component`.
    pub fn error(&self, component: usize) -> BlockedError {
        let naive = self.level_error(0, component).map_or(f64::NAN, |e| e.0);
        let usable: Vec<(f64, u64)> = (0..self.levels.len())
            .map_while(|l| {
                self.level_error(l, component)
                    .filter(|&(_, n)| l == 0 || n >= MIN_BLOCKS)
            })
            .collect();
        if usable.is_empty() {
            return BlockedError {
                sigma: f64::NAN,
                naive_sigma: naive,
                level: 0,
                plateau: false,
            };
        }
        let rel = |n: u64| 1.0 / (2.0 * (n.max(2) - 1) as f64).sqrt();
        for l in 0..usable.len() {
            let (e, _) = usable[l];
            let next: Vec<&(f64, u64)> = usable[l + 1..].iter().take(2).collect();
            if next.len() < 2 {
                break;
            }
            if next.iter().all(|&&(en, nn)| en <= e * (1.0 + 2.0 * rel(nn))) {
                return BlockedError {
                    sigma: e,
                    naive_sigma: naive,
                    level: l,
                    plateau: true,
                };
            }
        }
        let (level, &(sigma, _)) = usable
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .unwrap();
        BlockedError {
            sigma,
            naive_sigma: naive,
            level,
            plateau: false,
        }
    }

    pub fn estimate(&self, component: usize) -> Estimate {
        Estimate::new(self.mean(component), self.error(component).sigma)
    }

    pub fn estimates(&self) -> Vec<Estimate> {
        (0..self.dim).map(|c| self.estimate(c)).collect()
    }

    pub(crate) fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub(crate) fn from_levels(dim: usize, levels: Vec<Level>) -> Self {
        let levels = if levels.is_empty() {
            vec![Level::new(dim)]
        } else {
            levels
        };
        Self { dim, levels }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_error_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = Blocking::new(1);
        for _ in 0..1 << 15 {
            let x: f64 = rng.sample(StandardNormal);
            b.push(&[x]);
        }
        let e = b.error(0);
        let expected = (1.0 / (1u64 << 15) as f64).sqrt();
        assert!((e.sigma / expected - 1.0).abs() < 0.2, "{e:?}");
        assert!(b.mean(0).abs() < 4.0 * expected);
    }

    #[test]
    fn ar1_error_grows_with_correlation() {
        // AR(1) with rho = 0.9 has tau_int = (1 + rho) / (2 (1 - rho)) = 9.5.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho: f64 = 0.9;
        let mut b = Blocking::new(1);
        let mut x = 0.0;
        for _ in 0..1 << 17 {
            let z: f64 = rng.sample(StandardNormal);
            x = rho * x + (1.0 - rho * rho).sqrt() * z;
            b.push(&[x]);
        }
        let e = b.error(0);
        assert!(e.plateau);
        assert!((e.tau_int() / 9.5 - 1.0).abs() < 0.35, "tau = {}", e.tau_int());
    }

    #[test]
    fn merge_combines_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = Blocking::new(2);
        let mut b = Blocking::new(2);
        for i in 0..1000 {
            let x: f64 = rng.random();
            if i % 3 == 0 {
                a.push(&[x, 2.0 * x]);
            } else {
                b.push(&[x, 2.0 * x]);
            }
        }
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab.count(), 1000);
        assert_eq!(ab.levels[0].sum, ba.levels[0].sum);
        assert!((ab.mean(1) - 2.0 * ab.mean(0)).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples_give_nan() {
        let mut b = Blocking::new(1);
        b.push(&[1.0]);
        assert!(b.error(0).sigma.is_nan());
    }
}
