use nanogrid_core::domain::{HvacMode, SlotState};
use nanogrid_core::scenario_io::{generate_synthetic, SyntheticSpec};
use nanogrid_core::simulator::{run, Controls, RunOptions, RunReport, Setup};
use nanogrid_core::stackelberg::{solve_slot, GameConfig};
use nanogrid_core::Scalar;

fn setup<S: Scalar>() -> (Setup<S>, Controls<S>) {
    let syn = generate_synthetic::<S>(&SyntheticSpec::default()).unwrap();
    let setup = Setup::new(syn.scenario, syn.nanogrids, syn.pme, HvacMode::Heating).unwrap();
    let controls = Controls::defaults(&setup).unwrap();
    (setup, controls)
}

fn simulate<S: Scalar>() -> RunReport<S> {
    let (setup, controls) = setup::<S>();
    run(&setup, &controls, &GameConfig::default(), &setup.midpoint_start(), RunOptions::default()).unwrap()
}

#[test]
fn default_scenario_runs_in_single_precision() {
    let report = simulate::<f32>();
    assert_eq!(report.violations.comfort + report.violations.battery + report.violations.queue_identity, 0);
    assert_eq!(report.non_converged_slots, 0);
    let double = simulate::<f64>();
    let (a, b) = (report.totals.aggregate_cost as f64, double.totals.aggregate_cost);
    assert!((a - b).abs() < 0.05 * b.abs(), "f32 aggregate {a} far from f64 {b}");
}

#[test]
fn first_slot_agrees_across_precisions() {
    fn first<S: Scalar>() -> (f64, f64, Vec<f64>) {
        let (setup, controls) = setup::<S>();
        let init = setup.midpoint_start();
        let state = SlotState::new(init.t0, init.e0, &controls.shifts(), controls.pme.theta).unwrap();
        let sc = setup.scenario();
        let sol = solve_slot(
            &state,
            &sc.nanogrid_slots(0),
            &sc.market(0),
            setup.nanogrids(),
            &controls.nanogrids,
            setup.pme(),
            &controls.pme,
            setup.mode(),
            &GameConfig::default(),
        )
        .unwrap();
        let f = |x: S| x.to_f64().unwrap();
        (f(sol.leader.p_s), f(sol.leader.p_b), sol.followers.iter().map(|r| f(r.e)).collect())
    }
    let (s32, b32, e32) = first::<f32>();
    let (s64, b64, e64) = first::<f64>();
    assert!((s32 - s64).abs() < 1e-2 && (b32 - b64).abs() < 1e-2, "prices ({s32}, {b32}) vs ({s64}, {b64})");
    for (x, y) in e32.iter().zip(&e64) {
        assert!((x - y).abs() < 1e-2, "consumption {x} vs {y}");
    }
}
