use proptest::prelude::*;
use qcrystal::model::{LatticeBox, ModelParams, PotentialSpec};
use qcrystal::observables::{bruch_falk_check, duhamel_matrix, polarization, second_moment};
use qcrystal::oracle::SpectralOracle;
use qcrystal::sampler::{self, McParams, Simulation};
use qcrystal::Estimate;

fn double_well(h: f64) -> PotentialSpec {
    PotentialSpec::new(vec![-1.0, 0.3, 1.0], h).unwrap()
}

fn mc(sweeps: u64, seed: u64) -> McParams {
    McParams {
        sweeps,
        thermalization: sweeps / 10,
        measure_every: 1,
        proposal_width: 0.5,
        chains: 2,
        seed,
    }
}

#[test]
fn decoupled_sites_reproduce_the_single_site_oracle() {
    let potential = double_well(0.2);
    let lattice = LatticeBox::new(1, 2).unwrap();
    let params = ModelParams::new(1.0, 1.0, 0.0, potential.clone(), lattice, 32).unwrap();
    let run = sampler::run(&params, &mc(6000, 11)).unwrap();
    let oracle = SpectralOracle::build(1.0, 1.0, &potential, 64).unwrap();
    let (q, q2) = oracle.moments();
    let mean = polarization(&run.accumulator).unwrap();
    let moment = second_moment(&run.accumulator).unwrap();
    // Trotter bias at P = 32 stays well under one percent.
    assert!((mean.value - q).abs() < 4.0 * mean.sigma + 0.01 * q2, "{mean:?} vs {q}");
    assert!((moment.value - q2).abs() < 4.0 * moment.sigma + 0.01 * q2, "{moment:?} vs {q2}");
}

#[test]
fn checkpointed_run_matches_an_uninterrupted_one() {
    let lattice = LatticeBox::new(2, 1).unwrap();
    let params = ModelParams::new(1.0, 1.0, 0.1, double_well(0.0), lattice, 8).unwrap();
    let plan = mc(400, 3);
    let straight = sampler::run(&params, &plan).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.bin");
    let mut first = Simulation::new(&params, &plan).unwrap();
    first.advance_to(150).unwrap();
    first.save(&path).unwrap();
    let mut resumed = Simulation::load(&path, &params, &plan).unwrap();
    resumed.run_to_end().unwrap();
    let resumed = resumed.output();

    assert_eq!(straight.final_configs, resumed.final_configs);
    let a = duhamel_matrix(&straight.accumulator).unwrap();
    let b = duhamel_matrix(&resumed.accumulator).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loading_under_other_parameters_fails() {
    let lattice = LatticeBox::new(1, 2).unwrap();
    let params = ModelParams::new(1.0, 1.0, 0.1, double_well(0.0), lattice, 8).unwrap();
    let plan = mc(100, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.bin");
    let mut sim = Simulation::new(&params, &plan).unwrap();
    sim.advance_to(20).unwrap();
    sim.save(&path).unwrap();
    assert!(Simulation::load(&path, &params.with_field(0.5), &plan).is_err());
    assert!(Simulation::load(&path, &params, &McParams { seed: 4, ..plan }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn even_potentials_give_odd_polarization(
        c2 in -2.0..1.0f64,
        c4 in 0.2..2.0f64,
        h in -1.0..1.0f64,
        mass in 0.5..5.0f64,
    ) {
        let up = PotentialSpec::new(vec![c2, 0.0, c4], h).unwrap();
        let down = up.with_field(-h);
        let (q_up, q2_up) = SpectralOracle::build(mass, 1.0, &up, 48).unwrap().moments();
        let (q_down, q2_down) = SpectralOracle::build(mass, 1.0, &down, 48).unwrap().moments();
        prop_assert!((q_up + q_down).abs() < 1e-8);
        prop_assert!((q2_up - q2_down).abs() < 1e-8);
    }

    #[test]
    fn exact_duhamel_satisfies_the_bruch_falk_bound(
        c2 in -2.0..1.0f64,
        c3 in -0.5..0.5f64,
        c4 in 0.2..2.0f64,
        h in -0.5..0.5f64,
        mass in 0.5..10.0f64,
    ) {
        let potential = PotentialSpec::new(vec![c2, c3, c4], h).unwrap();
        let oracle = SpectralOracle::build(mass, 1.0, &potential, 64).unwrap();
        let (_, q2) = oracle.moments();
        let report =
            bruch_falk_check(Estimate::exact(oracle.duhamel()), Estimate::exact(q2), mass).unwrap();
        prop_assert!(report.margin >= -1e-8, "margin {}", report.margin);
    }
}
