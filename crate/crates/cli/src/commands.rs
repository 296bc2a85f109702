use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use qcrystal::grr::{
    grr_expectation_check, holder_scaling, key_event_check, kolmogorov_moment_check,
    mass_threshold, sample_nu_h, well_event_probability, FreeMeasureSampler,
};
use qcrystal::model::{LatticeBox, ModelParams, PotentialSpec};
use qcrystal::observables::{
    self, bruch_falk_check, bruch_falk_f, infrared_check, kappa_estimate, kappa_lower_bound,
    lattice_green_integral, pressure_derivative, BrillouinZone, InfraredReport,
};
use qcrystal::oracle::SpectralOracle;
use qcrystal::sampler::{self, McParams, PathConfig, RunOutput, Simulation};
use qcrystal::scan::{
    finite_size_series, monotonicity_check, sign_check_large_field, sweep, Verdict,
};
use qcrystal::Estimate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{num, Outputs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<qcrystal::Error> for CliError {
    fn from(e: qcrystal::Error) -> Self {
        match e {
            qcrystal::Error::InvalidParameter { .. }
            | qcrystal::Error::InvalidPotential(_)
            | qcrystal::Error::Precondition(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Whether every certificate a command evaluated passed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

pub type CommandResult = Result<Outcome, CliError>;

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn est(e: &Estimate) -> String {
    format!("{:.6} ± {:.6}", e.value, e.sigma)
}

pub fn oracle(cfg: &RunConfig, out: &Outputs) -> CommandResult {
    let potential = cfg.potential()?;
    let oracle = SpectralOracle::build_converged(
        cfg.model.m,
        cfg.model.a,
        &potential,
        cfg.oracle.basis,
        cfg.oracle.tolerance,
    )?;
    let s = oracle.summary();
    let rows = vec![
        vec!["basis".to_string(), s.basis.to_string()],
        vec!["Z".into(), num(s.z)],
        vec!["log_Z".into(), num(s.log_z)],
        vec!["mean_q".into(), num(s.mean_q)],
        vec!["mean_q2".into(), num(s.mean_q2)],
        vec!["D".into(), num(s.duhamel)],
    ];
    out.csv("oracle.csv", &["quantity", "value"], &rows)?;
    let n = cfg.oracle.tau_points;
    let gamma: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let tau = i as f64 / (n - 1) as f64;
            vec![num(tau), num(oracle.gamma(tau))]
        })
        .collect();
    out.csv("gamma.csv", &["tau", "gamma"], &gamma)?;
    println!("quantity,value");
    for r in &rows {
        println!("{},{}", r[0], r[1]);
    }
    println!();
    println!("tau,gamma");
    for r in &gamma {
        println!("{},{}", r[0], r[1]);
    }
    Ok(Outcome::Pass)
}

/// Runs (or resumes) the configured simulation, saving the checkpoint and
/// measurement log when enabled.
fn simulate(cfg: &RunConfig, out: &Outputs, resume: bool, until: Option<u64>) -> Result<(ModelParams, McParams, Simulation), CliError> {
    let params = cfg.model_params()?;
    let mc = cfg.mc_params();
    let checkpoint = out.path("checkpoint.bin");
    let mut sim = if resume && checkpoint.exists() {
        let sim = Simulation::load(&checkpoint, &params, &mc)?;
        eprintln!("resuming from {} at sweep {}", checkpoint.display(), sim.sweeps_done());
        sim
    } else {
        Simulation::new(&params, &mc)?.record_log(cfg.output.measurements)
    };
    let start = Instant::now();
    sim.advance_to(until.unwrap_or(mc.sweeps))?;
    eprintln!(
        "{} chains at sweep {}/{} ({:.1}s)",
        mc.chains,
        sim.sweeps_done(),
        mc.sweeps,
        start.elapsed().as_secs_f64()
    );
    if cfg.output.checkpoint {
        sim.save(&checkpoint)?;
    }
    Ok((params, mc, sim))
}

fn write_measurements(out: &Outputs, run: &RunOutput) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = run
        .log
        .iter()
        .map(|r| vec![r.chain.to_string(), r.sweep.to_string(), num(r.polarization), num(r.action)])
        .collect();
    out.csv("measurements.csv", &["chain", "sweep", "M_instant", "action"], &rows)?;
    Ok(())
}

/// Local minima of `(a/2) x^2 + V0(x)` at zero field, ascending.
fn well_minima(params: &ModelParams) -> Vec<f64> {
    let potential = params.potential.with_field(0.0);
    let f = |x: f64| 0.5 * params.rigidity * x * x + potential.eval_v0(x);
    // Cauchy bound on the critical points.
    let coeffs = potential.coeffs();
    let lead = coeffs.last().map_or(params.rigidity, |c| (coeffs.len() + 1) as f64 * c);
    let largest = coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| ((i + 2) as f64 * c).abs())
        .chain([params.rigidity])
        .fold(0.0, f64::max);
    let radius = 1.0 + largest / lead.abs();
    const POINTS: usize = 20_001;
    let dx = 2.0 * radius / (POINTS - 1) as f64;
    let values: Vec<f64> = (0..POINTS).map(|i| f(-radius + i as f64 * dx)).collect();
    (1..POINTS - 1)
        .filter(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1])
        .map(|i| -radius + i as f64 * dx)
        .collect()
}

fn default_epsilon(cfg: &RunConfig, params: &ModelParams) -> Option<f64> {
    cfg.observables.epsilon.or_else(|| {
        let wells = well_minima(params);
        match (wells.first(), wells.last()) {
            (Some(lo), Some(hi)) if wells.len() >= 2 => Some(0.25 * (hi - lo).powi(2)),
            _ => None,
        }
    })
}

fn dhat_rows(zone: &BrillouinZone, dhat: &[Estimate], ir: Option<&InfraredReport>) -> Vec<Vec<String>> {
    (0..zone.len())
        .map(|k| {
            let p = zone.momentum(k);
            let mut row: Vec<String> = p.iter().map(|x| num(*x)).collect();
            row.push(num(observables::dispersion(p)));
            row.push(num(dhat[k].value));
            row.push(num(dhat[k].sigma));
            match ir.and_then(|r| r.points.iter().find(|pt| pt.index == k)) {
                Some(pt) => {
                    row.push(num(pt.bound));
                    row.push(num(pt.margin));
                    row.push(verdict(pt.pass).into());
                }
                None => row.extend(["".to_string(), "".to_string(), "SKIPPED".to_string()]),
            }
            row
        })
        .collect()
}

fn write_dhat(out: &Outputs, params: &ModelParams, dhat: &[Estimate], ir: Option<&InfraredReport>) -> Result<(), CliError> {
    let zone = BrillouinZone::new(&params.lattice);
    let mut columns: Vec<String> = (1..=params.lattice.dim()).map(|j| format!("p{j}")).collect();
    columns.extend(["E", "dhat", "sigma", "bound", "margin", "verdict"].map(String::from));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    out.csv("dhat.csv", &columns, &dhat_rows(&zone, dhat, ir))?;
    Ok(())
}

pub fn sample(cfg: &RunConfig, out: &Outputs, resume: bool, until: Option<u64>) -> CommandResult {
    let (params, mc, sim) = simulate(cfg, out, resume, until)?;
    let run = sim.output();
    if cfg.output.measurements {
        write_measurements(out, &run)?;
    }
    if run.accumulator.n_samples() > 0 {
        let m = observables::polarization(&run.accumulator)?;
        let q2 = observables::second_moment(&run.accumulator)?;
        println!("M     = {}", est(&m));
        println!("<q^2> = {}", est(&q2));
    }
    println!("acceptance = {:.3}", run.acceptance());
    println!("tau_int(M) = {:.2} sweeps", run.max_tau_int_sweeps(&mc));
    println!("sweeps     = {}/{} on {} sites x {} slices", sim.sweeps_done(), mc.sweeps, params.lattice.n_sites(), params.slices);
    println!("outputs in {}", out.dir().display());
    Ok(Outcome::Pass)
}

pub fn report(cfg: &RunConfig, out: &Outputs) -> CommandResult {
    let (params, mc, sim) = simulate(cfg, out, true, None)?;
    let run = sim.output();
    if cfg.output.measurements {
        write_measurements(out, &run)?;
    }
    let acc = &run.accumulator;
    let zone = BrillouinZone::new(&params.lattice);
    let dhat = observables::duhamel_hat(acc)?;
    let d_local = observables::duhamel_matrix(acc)?[0];
    let m = observables::polarization(acc)?;
    let q2 = observables::second_moment(acc)?;
    let kappa = kappa_estimate(&dhat, &zone);
    let ir = if params.coupling > 0.0 {
        Some(infrared_check(&dhat, &zone, params.coupling)?)
    } else {
        None
    };
    let bf = bruch_falk_check(d_local, q2, params.mass)?;
    let pd = pressure_derivative(acc, params.lattice.dim())?;
    let epsilon = default_epsilon(cfg, &params);
    let m_star = cfg.observables.m_star.unwrap_or(params.mass);
    let kappa_bound = match epsilon {
        Some(eps) if params.lattice.dim() >= 3 && params.coupling > cfg.observables.delta / eps => Some(
            kappa_lower_bound(params.coupling, m_star, eps, cfg.observables.delta, params.lattice.dim())?,
        ),
        _ => None,
    };
    let tau = run.max_tau_int_sweeps(&mc);

    let mut rows = vec![
        vec!["M".to_string(), num(m.value), num(m.sigma)],
        vec!["q2".into(), num(q2.value), num(q2.sigma)],
        vec!["D_ll".into(), num(d_local.value), num(d_local.sigma)],
        vec!["kappa".into(), num(kappa.value), num(kappa.sigma)],
        vec!["dp_dJ".into(), num(pd.value.value), num(pd.value.sigma)],
        vec!["tau_int_sweeps".into(), num(tau), String::new()],
        vec!["acceptance".into(), num(run.acceptance()), String::new()],
    ];
    if let Some(b) = kappa_bound {
        rows.push(vec!["kappa_lower_bound".into(), num(b), String::new()]);
    }
    out.csv("observables.csv", &["quantity", "value", "sigma"], &rows)?;
    write_dhat(out, &params, &dhat, ir.as_ref())?;

    let ir_pass = ir.as_ref().is_none_or(|r| r.pass);
    let pass = ir_pass && bf.pass && pd.pass;
    let certificates = json!({
        "infrared": match &ir {
            Some(r) => json!({
                "verdict": verdict(r.pass),
                "positivity": r.positivity_pass,
                "min_margin": r.min_margin,
                "min_margin_sigmas": r.min_margin_sigmas,
            }),
            None => json!({ "verdict": "SKIPPED", "reason": "J = 0" }),
        },
        "bruch_falk": {
            "verdict": verdict(bf.pass),
            "bound": bf.bound,
            "margin": bf.margin,
            "sigma": bf.sigma,
        },
        "pressure_bound": {
            "verdict": verdict(pd.pass),
            "dp_dJ": pd.value,
            "d_q2": pd.bound,
        },
        "kappa": { "estimate": kappa, "lower_bound": kappa_bound, "epsilon": epsilon, "delta": cfg.observables.delta, "m_star": m_star },
        "verdict": verdict(pass),
    });
    out.json("certificates.json", &certificates)?;

    println!("M         = {}", est(&m));
    println!("<q^2>     = {}", est(&q2));
    println!("D_ll      = {}", est(&d_local));
    println!("kappa     = {}", est(&kappa));
    if let Some(b) = kappa_bound {
        println!("kappa_lb  = {b:.6}");
    }
    match &ir {
        Some(r) => println!("infrared     {} (min margin {:.2} sigma)", verdict(r.pass), r.min_margin_sigmas),
        None => println!("infrared     SKIPPED (J = 0)"),
    }
    println!("Bruch-Falk   {} (margin {:.3e} ± {:.1e})", verdict(bf.pass), bf.margin, bf.sigma);
    println!("dp/dJ bound  {} ({} <= {})", verdict(pd.pass), est(&pd.value), est(&pd.bound));
    println!("tau_int(M) = {tau:.2} sweeps, acceptance {:.3}", run.acceptance());
    Ok(Outcome::from_pass(pass))
}

pub fn check_infrared(cfg: &RunConfig, out: &Outputs) -> CommandResult {
    if !(cfg.model.coupling > 0.0) {
        return Err(CliError::Usage(
            "check-infrared needs J > 0; the bound 1/(J E(p)) is undefined at J = 0".into(),
        ));
    }
    let (params, _, sim) = simulate(cfg, out, true, None)?;
    let run = sim.output();
    let zone = BrillouinZone::new(&params.lattice);
    let dhat = observables::duhamel_hat(&run.accumulator)?;
    let ir = infrared_check(&dhat, &zone, params.coupling)?;
    write_dhat(out, &params, &dhat, Some(&ir))?;
    let failing = ir.points.iter().filter(|p| !p.pass).count();
    println!(
        "infrared {}: {} momenta, {failing} failing, min margin {:.4} ({:.2} sigma)",
        verdict(ir.pass),
        ir.points.len(),
        ir.min_margin,
        ir.min_margin_sigmas
    );
    Ok(Outcome::from_pass(ir.pass))
}

pub fn green_integral(cfg: &RunConfig) -> CommandResult {
    let w = lattice_green_integral(cfg.model.d, cfg.observables.green_resolution)?;
    println!(
        "W_{} = {:.6} (resolution {}, change on doubling {:.1e})",
        w.dim, w.value, w.resolution, w.refinement_delta
    );
    Ok(Outcome::Pass)
}

pub fn scan(cfg: &RunConfig, out: &Outputs) -> CommandResult {
    let plan = cfg.sweep_plan()?;
    let start = Instant::now();
    let report = sweep(&plan)?;
    eprintln!("{} curves in {:.1}s", report.curves.len(), start.elapsed().as_secs_f64());

    let rows: Vec<Vec<String>> = report
        .curves
        .iter()
        .flat_map(|c| &c.points)
        .map(|p| {
            vec![
                p.size.to_string(),
                p.direction.as_str().to_string(),
                num(p.h),
                num(p.polarization.value),
                num(p.polarization.sigma),
                num(p.second_moment.value),
                num(p.duhamel_local.value),
                num(p.kappa.value),
                match p.infrared {
                    Some(pass) => verdict(pass).to_string(),
                    None => "SKIPPED".to_string(),
                },
                verdict(p.bruch_falk).to_string(),
                num(p.tau_int_sweeps),
            ]
        })
        .collect();
    out.csv(
        "scan.csv",
        &["L", "direction", "h", "M", "sigma_M", "q2", "D_ll", "kappa", "ir_verdict", "bf_verdict", "tau_int_sweeps"],
        &rows,
    )?;

    let largest_well = well_minima(&plan.model)
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    let h_plus = cfg.scan.h_plus.unwrap_or(10.0 * largest_well);
    let h_minus = cfg.scan.h_minus.unwrap_or(-10.0 * largest_well);
    let mut curve_checks = Vec::new();
    let mut pass = true;
    for c in &report.curves {
        let mono = monotonicity_check(c);
        let sign = sign_check_large_field(c, h_plus, h_minus);
        pass &= mono.verdict == Verdict::Pass && sign != Verdict::Fail;
        curve_checks.push(json!({
            "L": c.size,
            "direction": c.direction,
            "monotonicity": mono,
            "sign_check": sign,
        }));
    }
    let certificates_ok = report
        .curves
        .iter()
        .flat_map(|c| &c.points)
        .all(|p| p.infrared != Some(false) && p.bruch_falk && p.pressure_bound);
    pass &= certificates_ok;
    let finite_size: Vec<_> = report
        .h_star
        .iter()
        .filter_map(|&(_, h)| finite_size_series(&report, h).ok())
        .collect();
    let transition = json!({
        "coupling": report.coupling,
        "mass": report.mass,
        "jumps": report.jumps,
        "hysteresis": report.hysteresis,
        "h_star": report.h_star,
        "unthermalized_points": report.unthermalized_points,
        "sign_check_fields": { "h_plus": h_plus, "h_minus": h_minus },
        "curves": curve_checks,
        "point_certificates": verdict(certificates_ok),
        "finite_size": finite_size,
        "verdict": verdict(pass),
    });
    out.json("transition.json", &transition)?;

    for j in &report.jumps {
        println!(
            "jump L={} {}: h in [{}, {}], dM = {:.4} ({:.1} sigma)",
            j.size,
            j.direction.as_str(),
            j.h_low,
            j.h_high,
            j.delta_m,
            j.significance
        );
    }
    for h in &report.hysteresis {
        println!(
            "hysteresis L={}: window {:?}, {} points disagree, max {:.1} sigma",
            h.size, h.window, h.points_disagreeing, h.max_significance
        );
    }
    if report.h_star.is_empty() {
        println!("no jump candidate");
    }
    for (size, h) in &report.h_star {
        println!("h_* (L={size}) = {h:.4}");
    }
    if report.unthermalized_points > 0 {
        println!("warning: {} points flagged unthermalized", report.unthermalized_points);
    }
    println!("certificates {}", verdict(pass));
    Ok(Outcome::from_pass(pass))
}

/// Empty when the column does not apply to a row.
fn cell(x: f64) -> String {
    if x.is_finite() {
        num(x)
    } else {
        String::new()
    }
}

pub fn grr(cfg: &RunConfig, out: &Outputs) -> CommandResult {
    let params = cfg.grr_params();
    let slices = cfg.grr.slices;
    let samples = cfg.grr.samples;
    let mass = cfg.model.m;
    let free = FreeMeasureSampler::for_slices(mass, cfg.model.a, slices)?;
    let grid = free.grid(slices)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.mc.seed);
    let chi = grid.ensemble(samples, &mut rng);

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut pass = true;
    let mut push = |check: &str, parameters: String, estimate: &Estimate, bound: f64, margin: f64, verdict: &str| {
        rows.push(vec![
            check.to_string(),
            parameters,
            num(estimate.value),
            cell(bound),
            cell(margin),
            num(estimate.sigma),
            verdict.to_string(),
        ]);
    };

    let mut gaps: Vec<usize> = [1, slices / 8, slices / 4, slices / 2].into_iter().filter(|&g| g >= 1).collect();
    gaps.dedup();
    for k in 1..=4 {
        for &j in &gaps {
            let c = kolmogorov_moment_check(&free, &chi, k, 0, j)?;
            pass &= c.pass;
            push("kolmogorov", format!("k={k} gap={}", c.gap), &c.estimate, c.bound, c.margin, verdict(c.pass));
        }
    }

    let g = grr_expectation_check(&chi, mass, &params)?;
    pass &= g.pass;
    let note = g.minimal_varsigma.map(|v| format!(" minimal_varsigma={v}")).unwrap_or_default();
    push(
        "grr_expectation",
        format!("p={} alpha={} theta={} varsigma={}{note}", params.p, params.alpha, params.theta, params.varsigma),
        &g.estimate,
        g.bound,
        g.margin,
        verdict(g.pass),
    );

    let coarse = grid.ensemble(samples, &mut rng);
    let fine = grid.ensemble(samples, &mut rng);
    let fit = holder_scaling(&coarse, &fine, params.alpha, params.p, params.theta, 0.5 * params.theta)?;
    push(
        "holder_scaling",
        format!("theta={}/{} expected_exponent={}", fit.theta_coarse, fit.theta_fine, fit.expected),
        &fit.exponent,
        fit.expected,
        fit.exponent.value - fit.expected,
        verdict(fit.consistent),
    );

    let method = cfg.nu_method().expect("validated");
    let potential = cfg.potential()?;
    let nu = sample_nu_h(&free, &potential, cfg.model.h, slices, samples, method, &mut rng)?;
    if let Some(w) = &nu.warning {
        eprintln!("warning: {w}");
    }
    let mut sigma_nc: f64 = 0.0;
    for sign in [1.0, -1.0] {
        let label = if sign > 0.0 { "+" } else { "-" };
        let prob = well_event_probability(&nu.ensemble, params.n, params.c, sign)?;
        sigma_nc = sigma_nc.max(prob.value);
        push("well_event", format!("sign={label} n={} c={} ess={:.0}", params.n, params.c, nu.ess), &prob, f64::NAN, f64::NAN, "SKIPPED");
        let key = key_event_check(&nu.ensemble, &params, sign)?;
        let v = if key.members == 0 {
            "SKIPPED"
        } else {
            pass &= key.pass;
            verdict(key.pass)
        };
        push(
            "key_event",
            format!("sign={label} members={} violations={}", key.members, key.violations),
            &key.probability,
            f64::NAN,
            -(key.violations as f64),
            v,
        );
    }
    if sigma_nc > 0.0 {
        let threshold = mass_threshold(&params, sigma_nc, cfg.grr.m0)?;
        push(
            "mass_threshold",
            format!("sigma_nc={sigma_nc} m0={}", cfg.grr.m0),
            &Estimate::exact(threshold),
            f64::NAN,
            f64::NAN,
            "SKIPPED",
        );
    }
    drop(push);
    out.csv("grr.csv", &["check", "parameters", "estimate", "bound", "margin", "sigma", "verdict"], &rows)?;
    for r in &rows {
        println!("{:<16} {:<6} {}  estimate {} bound {}", r[0], r[6], r[1], r[2], r[3]);
    }
    Ok(Outcome::from_pass(pass))
}

struct SelfCheck {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn closed_form_checks() -> Result<Vec<SelfCheck>, CliError> {
    let mut checks = Vec::new();

    let single = ModelParams::new(1.0, 1.0, 0.0, PotentialSpec::harmonic(0.0), LatticeBox::new(1, 1)?, 2)?;
    let cfg = PathConfig::from_values(2, 2, vec![1.0, -1.0, 0.0, 0.0])?;
    let s = sampler::action(&single, &cfg);
    checks.push(SelfCheck {
        name: "action hand example",
        pass: (s - 8.5).abs() < 1e-12,
        detail: format!("S = {s}"),
    });

    let (m, a) = (1.0, 2.0);
    let oracle = SpectralOracle::build_converged(m, a, &PotentialSpec::harmonic(0.0), 64, 1e-10)?;
    let w = (a / m).sqrt();
    let q2_exact = 1.0 / (2.0 * m * w * (0.5 * w).tanh());
    let (_, q2) = oracle.moments();
    checks.push(SelfCheck {
        name: "oracle harmonic moments",
        pass: (q2 - q2_exact).abs() < 1e-8 && (oracle.duhamel() - 1.0 / a).abs() < 1e-8,
        detail: format!("<q^2> = {q2:.10}, D = {:.10}", oracle.duhamel()),
    });

    let well = PotentialSpec::new(vec![-1.0, 0.3, 1.0], 0.0)?;
    let small = SpectralOracle::build(1.0, 1.0, &well, 64)?.summary();
    let large = SpectralOracle::build(1.0, 1.0, &well, 128)?.summary();
    let change = small.max_change(&large);
    checks.push(SelfCheck {
        name: "oracle basis convergence",
        pass: change < 1e-8,
        detail: format!("max change {change:.1e}"),
    });

    let f0 = bruch_falk_f(0.0)?;
    let xi: f64 = 1.3;
    let residual = (bruch_falk_f(xi * xi.tanh())? - xi.tanh() / xi).abs();
    checks.push(SelfCheck {
        name: "Bruch-Falk function",
        pass: f0 == 1.0 && residual < 1e-12,
        detail: format!("f(0) = {f0}, residual {residual:.1e}"),
    });

    let w3 = lattice_green_integral(3, observables::DEFAULT_GREEN_RESOLUTION)?;
    let rejected = lattice_green_integral(2, 8).is_err();
    checks.push(SelfCheck {
        name: "lattice Green integral",
        pass: (w3.value - 0.505462).abs() < 1e-3 && rejected,
        detail: format!("W_3 = {:.6}, d = 2 rejected: {rejected}", w3.value),
    });

    let free = FreeMeasureSampler::for_slices(1.0, 1.0, 64)?;
    let var = free.increment_variance(0.5);
    checks.push(SelfCheck {
        name: "free increment bound",
        pass: var <= 0.5 && (var - (0.25f64).tanh()).abs() < 1e-9,
        detail: format!("Var(w(1/2) - w(0)) = {var:.6} <= 1/2"),
    });

    let lattice = LatticeBox::new(1, 2)?;
    let zone = BrillouinZone::new(&lattice);
    let ir_rejects = infrared_check(&vec![Estimate::exact(1.0); zone.len()], &zone, 0.0).is_err();
    checks.push(SelfCheck {
        name: "infrared requires J > 0",
        pass: ir_rejects,
        detail: String::new(),
    });

    let harmonic = ModelParams::new(1.0, 2.0, 0.0, PotentialSpec::harmonic(0.0), lattice, 16)?;
    let mc = McParams {
        sweeps: 6_000,
        thermalization: 1_000,
        measure_every: 1,
        proposal_width: 0.5,
        chains: 2,
        seed: 3,
    };
    let run = sampler::run(&harmonic, &mc)?;
    let d = observables::duhamel_matrix(&run.accumulator)?[0];
    checks.push(SelfCheck {
        name: "sampled harmonic Duhamel",
        pass: d.agrees_with(0.5, 3.0),
        detail: format!("D = {} vs 0.5", est(&d)),
    });

    let mut a_run = Simulation::new(&harmonic, &mc)?;
    a_run.advance_to(500)?;
    let mut resumed = Simulation::from_bytes(&a_run.to_bytes(), &harmonic, &mc)?;
    a_run.run_to_end()?;
    resumed.run_to_end()?;
    let identical = a_run.to_bytes() == resumed.to_bytes();
    checks.push(SelfCheck {
        name: "checkpoint resume",
        pass: identical,
        detail: String::new(),
    });

    let p = 16.0f64;
    let discrete: f64 = (0..16)
        .map(|n| 1.0 / (p * p * 4.0 * (PI * n as f64 / p).sin().powi(2) + 2.0))
        .sum();
    let q2_mc = observables::second_moment(&run.accumulator)?;
    checks.push(SelfCheck {
        name: "sampled harmonic variance",
        pass: q2_mc.agrees_with(discrete, 3.0),
        detail: format!("<q^2> = {} vs {discrete:.6}", est(&q2_mc)),
    });

    Ok(checks)
}

pub fn selftest() -> CommandResult {
    let checks = closed_form_checks()?;
    let mut pass = true;
    for c in &checks {
        pass &= c.pass;
        println!("{} {:<28} {}", verdict(c.pass), c.name, c.detail);
    }
    Ok(Outcome::from_pass(pass))
}
