//! Field sweeps at fixed coupling and mass: polarization curves, jump
//! detection, hysteresis between sweep directions and finite-size series.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::{LatticeBox, ModelParams};
use crate::observables::{self, BrillouinZone};
use crate::sampler::{self, McParams, PathConfig};
use crate::stats::Estimate;

/// Jump and hysteresis significance threshold, in error bars.
pub const JUMP_SIGMAS: f64 = 5.0;
/// A point is flagged when `τ_int(M) > sweeps / THERMALIZATION_RATIO`.
pub const THERMALIZATION_RATIO: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Both,
}

impl Direction {
    fn expand(self) -> Vec<Direction> {
        match self {
            Direction::Both => vec![Direction::Up, Direction::Down],
            d => vec![d],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Both => "both",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "SKIPPED",
        }
    }
}

/// A set of field sweeps. The lattice size of `model` is replaced by each
/// entry of `sizes`; its field is replaced by each grid value.
#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub model: ModelParams,
    pub h_grid: Vec<f64>,
    pub direction: Direction,
    pub sizes: Vec<usize>,
    pub mc: McParams,
    pub warm_start: bool,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        self.mc.validate()?;
        if self.h_grid.len() < 2 {
            return Err(invalid("h_grid", "need at least 2 field values"));
        }
        if self.h_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("h_grid", "must be strictly ascending"));
        }
        if self.sizes.is_empty() {
            return Err(invalid("L_list", "need at least one box size"));
        }
        for &l in &self.sizes {
            self.model_at(l, self.h_grid[0])?;
        }
        Ok(())
    }

    fn model_at(&self, size: usize, h: f64) -> Result<ModelParams> {
        let lattice = LatticeBox::new(self.model.lattice.dim(), size)?;
        let params = ModelParams {
            lattice,
            ..self.model.with_field(h)
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanPoint {
    pub size: usize,
    pub n_sites: usize,
    pub direction: Direction,
    pub h: f64,
    pub polarization: Estimate,
    pub second_moment: Estimate,
    pub duhamel_local: Estimate,
    pub kappa: Estimate,
    /// `None` at zero coupling, where the bound is not defined.
    pub infrared: Option<bool>,
    pub bruch_falk: bool,
    pub pressure_bound: bool,
    pub tau_int_sweeps: f64,
    pub unthermalized: bool,
}

/// One sweep direction at one box size, in sweep order.
#[derive(Clone, Debug, Serialize)]
pub struct Curve {
    pub size: usize,
    pub direction: Direction,
    pub points: Vec<ScanPoint>,
}

impl Curve {
    /// Points sorted by ascending field.
    pub fn ascending(&self) -> Vec<&ScanPoint> {
        let mut pts: Vec<&ScanPoint> = self.points.iter().collect();
        pts.sort_by(|a, b| a.h.total_cmp(&b.h));
        pts
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JumpCandidate {
    pub size: usize,
    pub direction: Direction,
    pub h_low: f64,
    pub h_high: f64,
    /// Midpoint of the interval that contains the jump.
    pub location: f64,
    pub delta_m: f64,
    pub significance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Hysteresis {
    pub size: usize,
    /// Fields where the up and down curves differ by more than
    /// [`JUMP_SIGMAS`] error bars.
    pub window: Option<(f64, f64)>,
    pub points_disagreeing: usize,
    /// Trapezoid integral of `|M_up - M_down|` over the grid.
    pub area: f64,
    pub max_significance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransitionReport {
    pub coupling: f64,
    pub mass: f64,
    pub curves: Vec<Curve>,
    pub jumps: Vec<JumpCandidate>,
    pub hysteresis: Vec<Hysteresis>,
    /// Estimated transition field per box size.
    pub h_star: Vec<(usize, f64)>,
    pub unthermalized_points: usize,
}

impl TransitionReport {
    pub fn curve(&self, size: usize, direction: Direction) -> Option<&Curve> {
        self.curves
            .iter()
            .find(|c| c.size == size && c.direction == direction)
    }

    pub fn h_star_for(&self, size: usize) -> Option<f64> {
        self.h_star.iter().find(|(l, _)| *l == size).map(|&(_, h)| h)
    }
}

fn point_seed(base: u64, job: u64) -> u64 {
    base ^ job.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn measure_point(
    params: &ModelParams,
    mc: &McParams,
    direction: Direction,
    initial: Option<&[PathConfig]>,
) -> Result<(ScanPoint, Vec<PathConfig>)> {
    let out = match initial {
        Some(cfgs) => sampler::run_from(params, mc, cfgs)?,
        None => sampler::run(params, mc)?,
    };
    let acc = &out.accumulator;
    let zone = BrillouinZone::new(&params.lattice);
    let dhat = observables::duhamel_hat(acc)?;
    let duhamel = observables::duhamel_matrix(acc)?;
    let m = observables::polarization(acc)?;
    let q2 = observables::second_moment(acc)?;
    let kappa = observables::kappa_estimate(&dhat, &zone);
    let infrared = if params.coupling > 0.0 {
        Some(observables::infrared_check(&dhat, &zone, params.coupling)?.pass)
    } else {
        None
    };
    let bruch_falk = observables::bruch_falk_check(duhamel[0], q2, params.mass)?.pass;
    let pressure_bound = observables::pressure_derivative(acc, params.lattice.dim())?.pass;
    let tau = out.max_tau_int_sweeps(mc);
    let point = ScanPoint {
        size: params.lattice.half_side(),
        n_sites: params.lattice.n_sites(),
        direction,
        h: params.potential.h(),
        polarization: m,
        second_moment: q2,
        duhamel_local: duhamel[0],
        kappa,
        infrared,
        bruch_falk,
        pressure_bound,
        tau_int_sweeps: tau,
        unthermalized: tau > mc.sweeps as f64 / THERMALIZATION_RATIO,
    };
    Ok((point, out.final_configs))
}

/// Runs every `(size, direction)` curve of the plan.
pub fn sweep(plan: &SweepPlan) -> Result<TransitionReport> {
    plan.validate()?;
    let mut curves = Vec::new();
    let mut job = 0u64;
    for &size in &plan.sizes {
        for direction in plan.direction.expand() {
            let mut fields = plan.h_grid.clone();
            if direction == Direction::Down {
                fields.reverse();
            }
            let mut points = Vec::with_capacity(fields.len());
            let mut carry: Option<Vec<PathConfig>> = None;
            for &h in &fields {
                let params = plan.model_at(size, h)?;
                let mc = McParams {
                    seed: point_seed(plan.mc.seed, job),
                    ..plan.mc.clone()
                };
                job += 1;
                let initial = if plan.warm_start { carry.as_deref() } else { None };
                let (point, finals) = measure_point(&params, &mc, direction, initial)?;
                points.push(point);
                carry = Some(finals);
            }
            curves.push(Curve {
                size,
                direction,
                points,
            });
        }
    }
    Ok(analyze(plan.model.coupling, plan.model.mass, curves))
}

/// Builds jump, hysteresis and transition-field summaries from curves.
pub fn analyze(coupling: f64, mass: f64, curves: Vec<Curve>) -> TransitionReport {
    let jumps: Vec<JumpCandidate> = curves.iter().filter_map(jump_candidate).collect();
    let mut sizes: Vec<usize> = curves.iter().map(|c| c.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut hysteresis = Vec::new();
    let mut h_star = Vec::new();
    for &size in &sizes {
        let up = curves
            .iter()
            .find(|c| c.size == size && c.direction == Direction::Up);
        let down = curves
            .iter()
            .find(|c| c.size == size && c.direction == Direction::Down);
        if let (Some(up), Some(down)) = (up, down) {
            hysteresis.push(hysteresis_between(size, up, down));
        }
        let locations: Vec<f64> = jumps
            .iter()
            .filter(|j| j.size == size)
            .map(|j| j.location)
            .collect();
        if !locations.is_empty() {
            h_star.push((size, locations.iter().sum::<f64>() / locations.len() as f64));
        }
    }
    let unthermalized_points = curves
        .iter()
        .flat_map(|c| &c.points)
        .filter(|p| p.unthermalized)
        .count();
    TransitionReport {
        coupling,
        mass,
        curves,
        jumps,
        hysteresis,
        h_star,
        unthermalized_points,
    }
}

/// Widest span, in grid intervals, that a single jump candidate may cover.
const MAX_JUMP_SPAN: usize = 2;

/// Significance of the change from point `lo` to `hi` over the trend
/// extrapolated from the neighboring interval `[nb, nb + 1]`.
fn excess_over_neighbor(pts: &[&ScanPoint], lo: usize, hi: usize, nb: usize) -> f64 {
    let m = |k: usize| pts[k].polarization.value;
    let s = |k: usize| pts[k].polarization.sigma;
    let step = m(hi) - m(lo);
    let c = (pts[hi].h - pts[lo].h) / (pts[nb + 1].h - pts[nb].h);
    let (excess, var) = if nb < lo {
        (
            step - c * (m(lo) - m(nb)),
            s(hi).powi(2) + ((1.0 + c) * s(lo)).powi(2) + (c * s(nb)).powi(2),
        )
    } else {
        (
            step - c * (m(nb + 1) - m(nb)),
            ((1.0 + c) * s(hi)).powi(2) + s(lo).powi(2) + (c * s(nb + 1)).powi(2),
        )
    };
    step.signum() * excess / var.sqrt()
}

/// The largest change that stands out from both neighboring intervals by
/// more than [`JUMP_SIGMAS`], over the narrowest span (at most
/// [`MAX_JUMP_SPAN`] grid intervals) where one exists.
fn jump_candidate(curve: &Curve) -> Option<JumpCandidate> {
    let pts = curve.ascending();
    (1..=MAX_JUMP_SPAN)
        .find_map(|span| largest_step(&pts, span))
        .map(|(lo, hi, d, significance)| JumpCandidate {
            size: curve.size,
            direction: curve.direction,
            h_low: lo,
            h_high: hi,
            location: 0.5 * (lo + hi),
            delta_m: d,
            significance,
        })
}

fn largest_step(pts: &[&ScanPoint], span: usize) -> Option<(f64, f64, f64, f64)> {
    let n = pts.len();
    (0..n.saturating_sub(span))
        .filter_map(|lo| {
            let hi = lo + span;
            let step = pts[hi].polarization.value - pts[lo].polarization.value;
            let mut neighbors = Vec::new();
            if lo > 0 {
                neighbors.push(lo - 1);
            }
            if hi + 1 < n {
                neighbors.push(hi);
            }
            let significance = if neighbors.is_empty() {
                step.abs() / pts[lo].polarization.sigma.hypot(pts[hi].polarization.sigma)
            } else {
                neighbors
                    .iter()
                    .map(|&nb| excess_over_neighbor(pts, lo, hi, nb))
                    .fold(f64::INFINITY, f64::min)
            };
            (significance > JUMP_SIGMAS).then_some((pts[lo].h, pts[hi].h, step, significance))
        })
        .max_by(|a, b| a.2.abs().total_cmp(&b.2.abs()))
}

fn hysteresis_between(size: usize, up: &Curve, down: &Curve) -> Hysteresis {
    let a = up.ascending();
    let b = down.ascending();
    let mut rows = Vec::new();
    for p in &a {
        if let Some(q) = b.iter().find(|q| q.h == p.h) {
            let diff = p.polarization.minus(&q.polarization);
            rows.push((p.h, diff.value.abs(), diff.value.abs() / diff.sigma));
        }
    }
    let disagreeing: Vec<f64> = rows
        .iter()
        .filter(|r| r.2 > JUMP_SIGMAS)
        .map(|r| r.0)
        .collect();
    let window = match (disagreeing.first(), disagreeing.last()) {
        (Some(&lo), Some(&hi)) => Some((lo, hi)),
        _ => None,
    };
    let area = rows
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Hysteresis {
        size,
        window,
        points_disagreeing: disagreeing.len(),
        area,
        max_significance: rows.iter().map(|r| r.2).fold(0.0, f64::max),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub verdict: Verdict,
    /// Largest drop `M(h_i) - M(h_{i+1})` in units of the combined error.
    pub worst_drop_sigmas: f64,
}

/// `M(h_{i+1}) >= M(h_i) - 3σ` along one curve.
pub fn monotonicity_check(curve: &Curve) -> MonotonicityReport {
    let pts = curve.ascending();
    let mut worst = f64::NEG_INFINITY;
    for w in pts.windows(2) {
        let drop = w[0].polarization.value - w[1].polarization.value;
        let sigma = w[0].polarization.sigma.hypot(w[1].polarization.sigma);
        worst = worst.max(drop / sigma);
    }
    MonotonicityReport {
        verdict: if worst <= 3.0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        worst_drop_sigmas: worst,
    }
}

/// `M > 0` beyond `h_plus` and `M < 0` below `h_minus`, each by 3σ.
pub fn sign_check_large_field(curve: &Curve, h_plus: f64, h_minus: f64) -> Verdict {
    let above: Vec<&ScanPoint> = curve.points.iter().filter(|p| p.h > h_plus).collect();
    let below: Vec<&ScanPoint> = curve.points.iter().filter(|p| p.h < h_minus).collect();
    if above.is_empty() || below.is_empty() {
        return Verdict::Skipped;
    }
    let ok = above
        .iter()
        .all(|p| p.polarization.value > 3.0 * p.polarization.sigma)
        && below
            .iter()
            .all(|p| p.polarization.value < -3.0 * p.polarization.sigma);
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FiniteSizeRow {
    pub size: usize,
    pub n_sites: usize,
    pub h: f64,
    pub kappa: Estimate,
    /// Largest jump of this size's curves, if any was significant.
    pub delta_m: Option<f64>,
}

/// `κ_Λ` at the grid field closest to `h_star`, per box size, taken from the
/// up-sweep when present.
pub fn finite_size_series(report: &TransitionReport, h_star: f64) -> Result<Vec<FiniteSizeRow>> {
    let mut sizes: Vec<usize> = report.curves.iter().map(|c| c.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(invalid("L_list", "finite-size series needs at least 2 box sizes"));
    }
    let mut rows = Vec::new();
    for size in sizes {
        let curve = report
            .curve(size, Direction::Up)
            .or_else(|| report.curves.iter().find(|c| c.size == size))
            .expect("size taken from curves");
        let point = curve
            .points
            .iter()
            .min_by(|a, b| (a.h - h_star).abs().total_cmp(&(b.h - h_star).abs()))
            .expect("curves are nonempty");
        let delta_m = report
            .jumps
            .iter()
            .filter(|j| j.size == size)
            .map(|j| j.delta_m)
            .max_by(|a, b| a.abs().total_cmp(&b.abs()));
        rows.push(FiniteSizeRow {
            size,
            n_sites: point.n_sites,
            h: point.h,
            kappa: point.kappa,
            delta_m,
        });
    }
    Ok(rows)
}
