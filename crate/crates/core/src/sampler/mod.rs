//! Metropolis sampling of the discretized periodic Euclidean Gibbs measure.
//!
//! Paths live on `P` imaginary-time slices per site. Each sweep proposes a
//! uniform displacement at every `(site, slice)` in a fixed order and then one
//! rigid shift of every site's whole path. Proposal widths are tuned during
//! thermalization and frozen afterwards.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::ModelParams;
use crate::observables::{Measurer, ObservableAccumulator};

pub use checkpoint::CHECKPOINT_VERSION;

/// Sweeps between width adjustments during thermalization.
pub const TUNE_INTERVAL: u64 = 10;
/// Target acceptance window for the tuned proposals.
pub const TARGET_ACCEPTANCE: (f64, f64) = (0.3, 0.6);

const MIN_WIDTH: f64 = 1e-6;
const MAX_WIDTH: f64 = 1e3;

/// Discretized periodic paths, site-major: slice `k` of site `l` is at
/// `l * P + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathConfig {
    n_sites: usize,
    slices: usize,
    values: Vec<f64>,
}

impl PathConfig {
    pub fn zeros(n_sites: usize, slices: usize) -> Self {
        Self::constant(n_sites, slices, 0.0)
    }

    pub fn constant(n_sites: usize, slices: usize, value: f64) -> Self {
        Self {
            n_sites,
            slices,
            values: vec![value; n_sites * slices],
        }
    }

    pub fn from_values(n_sites: usize, slices: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_sites * slices {
            return Err(invalid("values", "length must be sites × slices"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path configuration"));
        }
        Ok(Self {
            n_sites,
            slices,
            values,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn path(&self, site: usize) -> &[f64] {
        &self.values[site * self.slices..(site + 1) * self.slices]
    }

    /// Slice index wraps modulo `P`.
    #[inline]
    pub fn get(&self, site: usize, slice: usize) -> f64 {
        self.values[site * self.slices + slice % self.slices]
    }

    #[inline]
    pub fn set(&mut self, site: usize, slice: usize, value: f64) {
        self.values[site * self.slices + slice % self.slices] = value;
    }

    fn fits(&self, params: &ModelParams) -> bool {
        self.n_sites == params.lattice.n_sites() && self.slices == params.slices
    }
}

/// Monte Carlo run controls. `sweeps` counts thermalization sweeps too.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McParams {
    pub sweeps: u64,
    pub thermalization: u64,
    pub measure_every: u64,
    pub proposal_width: f64,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            sweeps: 20_000,
            thermalization: 2_000,
            measure_every: 1,
            proposal_width: 0.5,
            chains: 4,
            seed: 1,
        }
    }
}

impl McParams {
    pub fn validate(&self) -> Result<()> {
        if self.thermalization >= self.sweeps {
            return Err(invalid("thermalization", "must be smaller than sweeps"));
        }
        if self.measure_every < 1 {
            return Err(invalid("measure_every", "must be at least 1"));
        }
        if !(self.proposal_width > 0.0 && self.proposal_width.is_finite()) {
            return Err(invalid("proposal_width", "must be positive and finite"));
        }
        if self.chains < 1 {
            return Err(invalid("chains", "need at least one chain"));
        }
        Ok(())
    }

    /// Measurements each chain records.
    pub fn measurements_per_chain(&self) -> u64 {
        (self.sweeps - self.thermalization) / self.measure_every
    }
}

/// Discretized action `S` with Boltzmann weight `exp(-S)`.
pub fn action(params: &ModelParams, cfg: &PathConfig) -> f64 {
    let p = params.slices;
    let kinetic_scale = 0.5 * params.mass * p as f64;
    let inv_p = 1.0 / p as f64;
    let mut kinetic = 0.0;
    let mut local = 0.0;
    for site in 0..cfg.n_sites {
        let path = cfg.path(site);
        for k in 0..p {
            let x = path[k];
            let d = path[(k + 1) % p] - x;
            kinetic += d * d;
            local += params.on_site(x);
        }
    }
    let mut bonds = 0.0;
    if params.coupling != 0.0 {
        let table = params.lattice.neighbor_table();
        let z = 2 * params.lattice.dim();
        for site in 0..cfg.n_sites {
            let path = cfg.path(site);
            for &other in &table[site * z..(site + 1) * z] {
                let q = cfg.path(other);
                bonds += path.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        // Every bond was visited from both ends.
        bonds *= 0.5;
    }
    kinetic_scale * kinetic + inv_p * local - params.coupling * inv_p * bonds
}

fn neighbor_sum(params: &ModelParams, cfg: &PathConfig, site: usize, slice: usize) -> f64 {
    params
        .lattice
        .neighbors(site)
        .iter()
        .map(|&n| cfg.values[n * cfg.slices + slice])
        .sum()
}

/// Change of [`action`] when `ω_site[slice]` is replaced by `x_new`.
pub fn local_action_delta(
    params: &ModelParams,
    cfg: &PathConfig,
    site: usize,
    slice: usize,
    x_new: f64,
) -> f64 {
    let p = params.slices;
    let base = site * p;
    let x_old = cfg.values[base + slice];
    let prev = cfg.values[base + (slice + p - 1) % p];
    let next = cfg.values[base + (slice + 1) % p];
    let kinetic = params.mass * p as f64 * (x_new - x_old) * (x_new + x_old - prev - next);
    let local = (params.on_site(x_new) - params.on_site(x_old)) / p as f64;
    let coupling = if params.coupling != 0.0 {
        -params.coupling / p as f64 * (x_new - x_old) * neighbor_sum(params, cfg, site, slice)
    } else {
        0.0
    };
    kinetic + local + coupling
}

/// Change of [`action`] when the whole path of `site` moves by `shift`.
pub fn shift_action_delta(params: &ModelParams, cfg: &PathConfig, site: usize, shift: f64) -> f64 {
    let p = params.slices;
    let path = cfg.path(site);
    let local: f64 = path
        .iter()
        .map(|&x| params.on_site(x + shift) - params.on_site(x))
        .sum::<f64>()
        / p as f64;
    let coupling = if params.coupling != 0.0 {
        let total: f64 = (0..p).map(|k| neighbor_sum(params, cfg, site, k)).sum();
        -params.coupling / p as f64 * shift * total
    } else {
        0.0
    };
    local + coupling
}

/// Proposal half-widths for the two move types.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Widths {
    pub local: f64,
    pub shift: f64,
}

/// Accept/propose counts of one or more sweeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SweepStats {
    pub local_accepted: u64,
    pub local_proposed: u64,
    pub shift_accepted: u64,
    pub shift_proposed: u64,
}

impl SweepStats {
    /// Fraction of all proposals accepted.
    pub fn acceptance(&self) -> f64 {
        let proposed = self.local_proposed + self.shift_proposed;
        if proposed == 0 {
            return 0.0;
        }
        (self.local_accepted + self.shift_accepted) as f64 / proposed as f64
    }

    pub fn local_acceptance(&self) -> f64 {
        ratio(self.local_accepted, self.local_proposed)
    }

    pub fn shift_acceptance(&self) -> f64 {
        ratio(self.shift_accepted, self.shift_proposed)
    }

    fn add(&mut self, other: &SweepStats) {
        self.local_accepted += other.local_accepted;
        self.local_proposed += other.local_proposed;
        self.shift_accepted += other.shift_accepted;
        self.shift_proposed += other.shift_proposed;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[inline]
fn accept<R: Rng>(delta: f64, rng: &mut R) -> bool {
    // NaN deltas fail both comparisons and are rejected.
    delta <= 0.0 || rng.random::<f64>() < (-delta).exp()
}

/// One Metropolis sweep over every `(site, slice)` followed by one rigid
/// shift proposal per site.
pub fn metropolis_sweep<R: Rng>(
    params: &ModelParams,
    cfg: &mut PathConfig,
    widths: Widths,
    rng: &mut R,
) -> SweepStats {
    let p = params.slices;
    let mut stats = SweepStats::default();
    for site in 0..cfg.n_sites {
        for k in 0..p {
            let x_new = cfg.values[site * p + k] + widths.local * (2.0 * rng.random::<f64>() - 1.0);
            let delta = local_action_delta(params, cfg, site, k, x_new);
            stats.local_proposed += 1;
            if accept(delta, rng) {
                cfg.values[site * p + k] = x_new;
                stats.local_accepted += 1;
            }
        }
    }
    for site in 0..cfg.n_sites {
        let shift = widths.shift * (2.0 * rng.random::<f64>() - 1.0);
        let delta = shift_action_delta(params, cfg, site, shift);
        stats.shift_proposed += 1;
        if accept(delta, rng) {
            for v in &mut cfg.values[site * p..(site + 1) * p] {
                *v += shift;
            }
            stats.shift_accepted += 1;
        }
    }
    stats
}

/// One row of the measurement log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub chain: usize,
    pub sweep: u64,
    pub polarization: f64,
    pub action: f64,
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

pub(crate) fn tune(width: f64, accepted: u64, proposed: u64) -> f64 {
    if proposed == 0 {
        return width;
    }
    let rate = accepted as f64 / proposed as f64;
    let w = if rate > TARGET_ACCEPTANCE.1 {
        width * 1.25
    } else if rate < TARGET_ACCEPTANCE.0 {
        width * 0.8
    } else {
        width
    };
    w.clamp(MIN_WIDTH, MAX_WIDTH)
}

/// One independent Markov chain with its own stream and accumulator.
#[derive(Clone, Debug)]
pub struct Chain {
    pub(crate) index: usize,
    pub(crate) sweeps_done: u64,
    pub(crate) widths: Widths,
    /// Counts since the last width adjustment.
    pub(crate) window: SweepStats,
    /// Counts over the measurement phase.
    pub(crate) totals: SweepStats,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) cfg: PathConfig,
    pub(crate) acc: ObservableAccumulator,
    pub(crate) log: Vec<LogRow>,
}

impl Chain {
    fn new(params: &ModelParams, mc: &McParams, index: usize, cfg: PathConfig) -> Self {
        Self {
            index,
            sweeps_done: 0,
            widths: Widths {
                local: mc.proposal_width,
                shift: mc.proposal_width,
            },
            window: SweepStats::default(),
            totals: SweepStats::default(),
            rng: chain_rng(mc.seed, index),
            cfg,
            acc: ObservableAccumulator::new(params.lattice.n_sites(), params.slices),
            log: Vec::new(),
        }
    }

    fn advance(
        &mut self,
        params: &ModelParams,
        mc: &McParams,
        target: u64,
        record_log: bool,
    ) -> Result<()> {
        let mut measurer = Measurer::new(&params.lattice, params.slices);
        while self.sweeps_done < target {
            let stats = metropolis_sweep(params, &mut self.cfg, self.widths, &mut self.rng);
            self.sweeps_done += 1;
            if self.sweeps_done <= mc.thermalization {
                self.window.add(&stats);
                if self.sweeps_done % TUNE_INTERVAL == 0 {
                    self.widths.local = tune(
                        self.widths.local,
                        self.window.local_accepted,
                        self.window.local_proposed,
                    );
                    self.widths.shift = tune(
                        self.widths.shift,
                        self.window.shift_accepted,
                        self.window.shift_proposed,
                    );
                    self.window = SweepStats::default();
                    self.check_action(params)?;
                }
                continue;
            }
            self.totals.add(&stats);
            if (self.sweeps_done - mc.thermalization) % mc.measure_every == 0 {
                let s = self.check_action(params)?;
                let sample = measurer.measure(&self.cfg, s);
                if record_log {
                    self.log.push(LogRow {
                        chain: self.index,
                        sweep: self.sweeps_done,
                        polarization: sample.polarization,
                        action: s,
                    });
                }
                self.acc.record(&sample);
            }
        }
        Ok(())
    }

    fn check_action(&self, params: &ModelParams) -> Result<f64> {
        let s = action(params, &self.cfg);
        if !s.is_finite() {
            return Err(Error::NonFiniteAction {
                chain: self.index,
                sweep: self.sweeps_done,
            });
        }
        Ok(s)
    }

    fn summary(&self) -> ChainSummary {
        ChainSummary {
            index: self.index,
            samples: self.acc.n_samples(),
            acceptance: self.totals.acceptance(),
            local_acceptance: self.totals.local_acceptance(),
            shift_acceptance: self.totals.shift_acceptance(),
            widths: self.widths,
            tau_int_polarization: self.acc.tau_int_polarization(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainSummary {
    pub index: usize,
    pub samples: u64,
    /// Measurement-phase acceptance over both move types.
    pub acceptance: f64,
    pub local_acceptance: f64,
    pub shift_acceptance: f64,
    pub widths: Widths,
    /// In units of measurements.
    pub tau_int_polarization: f64,
}

/// Merged result of all chains.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub accumulator: ObservableAccumulator,
    pub chains: Vec<ChainSummary>,
    pub final_configs: Vec<PathConfig>,
    pub log: Vec<LogRow>,
}

impl RunOutput {
    pub fn acceptance(&self) -> f64 {
        self.chains.iter().map(|c| c.acceptance).sum::<f64>() / self.chains.len() as f64
    }

    /// Largest per-chain autocorrelation time of `M`, in sweeps.
    pub fn max_tau_int_sweeps(&self, mc: &McParams) -> f64 {
        self.chains
            .iter()
            .map(|c| c.tau_int_polarization * mc.measure_every as f64)
            .fold(0.0, f64::max)
    }
}

/// A resumable multi-chain run.
#[derive(Clone, Debug)]
pub struct Simulation {
    params: ModelParams,
    mc: McParams,
    chains: Vec<Chain>,
    record_log: bool,
}

impl Simulation {
    /// Chains start from the all-zero configuration.
    pub fn new(params: &ModelParams, mc: &McParams) -> Result<Self> {
        let cfg = PathConfig::zeros(params.lattice.n_sites(), params.slices);
        Self::with_initial(params, mc, &[cfg])
    }

    /// Chain `c` starts from `initial[c % initial.len()]`.
    pub fn with_initial(params: &ModelParams, mc: &McParams, initial: &[PathConfig]) -> Result<Self> {
        params.validate()?;
        mc.validate()?;
        if initial.is_empty() {
            return Err(invalid("initial", "need at least one starting configuration"));
        }
        if let Some(bad) = initial.iter().find(|c| !c.fits(params)) {
            return Err(invalid(
                "initial",
                format!(
                    "configuration has {}×{} entries, model needs {}×{}",
                    bad.n_sites,
                    bad.slices,
                    params.lattice.n_sites(),
                    params.slices
                ),
            ));
        }
        let chains = (0..mc.chains)
            .map(|c| Chain::new(params, mc, c, initial[c % initial.len()].clone()))
            .collect();
        Ok(Self {
            params: params.clone(),
            mc: mc.clone(),
            chains,
            record_log: false,
        })
    }

    /// Keep one [`LogRow`] per measurement.
    pub fn record_log(mut self, on: bool) -> Self {
        self.record_log = on;
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn mc(&self) -> &McParams {
        &self.mc
    }

    /// Sweeps completed by every chain.
    pub fn sweeps_done(&self) -> u64 {
        self.chains.iter().map(|c| c.sweeps_done).min().unwrap_or(0)
    }

    pub fn is_finished(&self) -> bool {
        self.sweeps_done() >= self.mc.sweeps
    }

    /// Runs every chain up to `sweeps` total sweeps (capped at the budget).
    pub fn advance_to(&mut self, sweeps: u64) -> Result<()> {
        let target = sweeps.min(self.mc.sweeps);
        let (params, mc, record) = (&self.params, &self.mc, self.record_log);
        self.chains
            .par_iter_mut()
            .map(|chain| chain.advance(params, mc, target, record))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        self.advance_to(self.mc.sweeps)
    }

    /// Merges the chains in index order.
    pub fn output(&self) -> RunOutput {
        let mut accumulator =
            ObservableAccumulator::new(self.params.lattice.n_sites(), self.params.slices);
        for chain in &self.chains {
            accumulator.merge(&chain.acc);
        }
        RunOutput {
            accumulator,
            chains: self.chains.iter().map(Chain::summary).collect(),
            final_configs: self.chains.iter().map(|c| c.cfg.clone()).collect(),
            log: self.chains.iter().flat_map(|c| c.log.iter().copied()).collect(),
        }
    }

    /// Per-chain accumulators, for order-independence checks.
    pub fn chain_accumulators(&self) -> Vec<&ObservableAccumulator> {
        self.chains.iter().map(|c| &c.acc).collect()
    }
}

/// Runs all chains to completion from zero initial paths.
pub fn run(params: &ModelParams, mc: &McParams) -> Result<RunOutput> {
    let mut sim = Simulation::new(params, mc)?;
    sim.run_to_end()?;
    Ok(sim.output())
}

/// [`run`] from given initial configurations.
pub fn run_from(params: &ModelParams, mc: &McParams, initial: &[PathConfig]) -> Result<RunOutput> {
    let mut sim = Simulation::with_initial(params, mc, initial)?;
    sim.run_to_end()?;
    Ok(sim.output())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LatticeBox, PotentialSpec};
    use crate::observables;
    use proptest::prelude::{any, prop_assert, proptest};

    fn params(dim: usize, l: usize, j: f64, coeffs: Vec<f64>, h: f64, p: usize) -> ModelParams {
        ModelParams::new(
            1.0,
            1.0,
            j,
            PotentialSpec::new(coeffs, h).unwrap(),
            LatticeBox::new(dim, l).unwrap(),
            p,
        )
        .unwrap()
    }

    fn random_config(params: &ModelParams, rng: &mut ChaCha8Rng) -> PathConfig {
        let n = params.lattice.n_sites() * params.slices;
        let values = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        PathConfig::from_values(params.lattice.n_sites(), params.slices, values).unwrap()
    }

    #[test]
    fn action_examples() {
        let single = params(1, 1, 0.0, vec![], 0.0, 2);
        assert_eq!(action(&single, &PathConfig::zeros(2, 2)), 0.0);
        // One site carrying [1, -1], the other at rest.
        let cfg = PathConfig::from_values(2, 2, vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        assert!((action(&single, &cfg) - 8.5).abs() < 1e-12);

        let quartic = params(2, 2, 0.0, vec![0.0, 0.0, 1.0], 0.0, 8);
        let c = 0.7f64;
        let cfg = PathConfig::constant(16, 8, c);
        let expected = 16.0 * (0.5 * c * c + c.powi(4));
        assert!((action(&quartic, &cfg) - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_move_has_zero_delta() {
        let pr = params(2, 2, 0.2, vec![-1.0, 0.3, 1.0], 0.4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = random_config(&pr, &mut rng);
        for site in 0..pr.lattice.n_sites() {
            for k in 0..8 {
                assert_eq!(local_action_delta(&pr, &cfg, site, k, cfg.get(site, k)), 0.0);
            }
        }
    }

    #[test]
    fn decoupled_delta_ignores_other_sites() {
        let pr = params(1, 2, 0.0, vec![0.0, 0.0, 1.0], 0.0, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_config(&pr, &mut rng);
        let mut b = random_config(&pr, &mut rng);
        for k in 0..6 {
            b.set(1, k, a.get(1, k));
        }
        assert_eq!(
            local_action_delta(&pr, &a, 1, 3, 0.25),
            local_action_delta(&pr, &b, 1, 3, 0.25)
        );
    }

    proptest! {
        #[test]
        fn local_delta_matches_recompute(
            seed in any::<u64>(),
            j in 0.0f64..0.4,
            l in 1usize..3,
            site in 0usize..8,
            k in 0usize..6,
            x in -2.0f64..2.0,
        ) {
            let pr = params(3, l, j, vec![-1.0, 0.3, 1.0], 0.2, 6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = random_config(&pr, &mut rng);
            let site = site % pr.lattice.n_sites();
            let before = action(&pr, &cfg);
            let delta = local_action_delta(&pr, &cfg, site, k, x);
            let mut moved = cfg.clone();
            moved.set(site, k, x);
            let after = action(&pr, &moved);
            prop_assert!((after - before - delta).abs() < 1e-9 * (1.0 + before.abs()));
        }

        #[test]
        fn shift_delta_matches_recompute(seed in any::<u64>(), j in 0.0f64..0.4, s in -1.5f64..1.5) {
            let pr = params(2, 2, j, vec![-4.0, 0.5, 1.0], -0.3, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = random_config(&pr, &mut rng);
            let site = (seed % 16) as usize;
            let before = action(&pr, &cfg);
            let delta = shift_action_delta(&pr, &cfg, site, s);
            let mut moved = cfg.clone();
            for k in 0..5 {
                moved.set(site, k, cfg.get(site, k) + s);
            }
            let after = action(&pr, &moved);
            prop_assert!((after - before - delta).abs() < 1e-9 * (1.0 + before.abs()));
        }
    }

    #[test]
    fn ten_thousand_random_moves_stay_consistent() {
        let pr = params(3, 2, 0.3, vec![-4.0, 0.5, 1.0], 0.1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cfg = random_config(&pr, &mut rng);
        let mut s = action(&pr, &cfg);
        for _ in 0..10_000 {
            let site = rng.random_range(0..pr.lattice.n_sites());
            let k = rng.random_range(0..4);
            let x = cfg.get(site, k) + rng.random::<f64>() - 0.5;
            let delta = local_action_delta(&pr, &cfg, site, k, x);
            cfg.set(site, k, x);
            let fresh = action(&pr, &cfg);
            assert!((fresh - s - delta).abs() < 1e-9 * (1.0 + s.abs()));
            s = fresh;
        }
    }

    #[test]
    fn tiny_width_accepts_everything() {
        let pr = params(1, 2, 0.1, vec![-1.0, 0.3, 1.0], 0.0, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = random_config(&pr, &mut rng);
        let widths = Widths {
            local: 1e-9,
            shift: 1e-9,
        };
        let rate = metropolis_sweep(&pr, &mut cfg, widths, &mut rng).acceptance();
        assert!(rate > 0.999, "{rate}");
    }

    #[test]
    fn sweeps_are_deterministic() {
        let pr = params(2, 1, 0.1, vec![-1.0, 0.3, 1.0], 0.0, 8);
        let mc = McParams {
            sweeps: 300,
            thermalization: 100,
            measure_every: 2,
            proposal_width: 0.5,
            chains: 3,
            seed: 42,
        };
        let a = run(&pr, &mc).unwrap();
        let b = run(&pr, &mc).unwrap();
        assert_eq!(a.accumulator, b.accumulator);
        assert_eq!(a.final_configs, b.final_configs);
        let c = run(&pr, &McParams { seed: 43, ..mc }).unwrap();
        assert_ne!(a.final_configs, c.final_configs);
    }

    #[test]
    fn chain_merge_is_order_independent() {
        let pr = params(1, 2, 0.0, vec![0.0, 0.0, 1.0], 0.0, 8);
        let mc = McParams {
            sweeps: 400,
            thermalization: 100,
            measure_every: 1,
            proposal_width: 0.5,
            chains: 2,
            seed: 7,
        };
        let mut sim = Simulation::new(&pr, &mc).unwrap();
        sim.run_to_end().unwrap();
        let accs = sim.chain_accumulators();
        let mut ab = accs[0].clone();
        ab.merge(accs[1]);
        let mut ba = accs[1].clone();
        ba.merge(accs[0]);
        assert_eq!(ab.n_samples(), 600);
        let m_ab = observables::polarization(&ab).unwrap();
        let m_ba = observables::polarization(&ba).unwrap();
        assert!((m_ab.value - m_ba.value).abs() < 1e-14);
        assert!((m_ab.sigma - m_ba.sigma).abs() < 1e-14);
        let merged = sim.output().accumulator;
        assert_eq!(merged.n_samples(), 600);
    }

    #[test]
    fn widths_are_tuned_into_window() {
        let pr = params(1, 1, 0.0, vec![], 0.0, 32);
        let mc = McParams {
            sweeps: 1500,
            thermalization: 1000,
            measure_every: 1,
            proposal_width: 20.0,
            chains: 1,
            seed: 1,
        };
        let out = run(&pr, &mc).unwrap();
        let c = &out.chains[0];
        assert!(c.local_acceptance > 0.25 && c.local_acceptance < 0.65, "{c:?}");
        assert!(c.shift_acceptance > 0.2 && c.shift_acceptance < 0.7, "{c:?}");
    }

    #[test]
    fn mismatched_initial_config_is_rejected() {
        let pr = params(1, 2, 0.0, vec![], 0.0, 8);
        let bad = PathConfig::zeros(3, 8);
        assert!(Simulation::with_initial(&pr, &McParams::default(), &[bad]).is_err());
        let mc = McParams {
            thermalization: 10,
            sweeps: 10,
            ..McParams::default()
        };
        assert!(run(&pr, &mc).is_err());
        assert!(PathConfig::from_values(1, 2, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn slice_index_wraps() {
        let mut cfg = PathConfig::zeros(2, 4);
        cfg.set(1, 5, 3.0);
        assert_eq!(cfg.get(1, 1), 3.0);
        assert_eq!(cfg.path(1), &[0.0, 3.0, 0.0, 0.0]);
    }
}
