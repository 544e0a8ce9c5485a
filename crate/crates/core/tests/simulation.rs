use proptest::prelude::*;

use nanogrid_core::baselines::{run_case, CaseId, WelfareProblem};
use nanogrid_core::domain::{FollowerAction, HvacMode, SlotState};
use nanogrid_core::scenario_io::{generate_synthetic, SyntheticSpec};
use nanogrid_core::simulator::{run, simulate, Controls, RunOptions, RunReport, Setup, SlotDecision};
use nanogrid_core::stackelberg::{GameConfig, InitPolicy, StepRule};
use nanogrid_core::Error;

fn setup(spec: &SyntheticSpec) -> (Setup<f64>, Controls<f64>) {
    let syn = generate_synthetic::<f64>(spec).unwrap();
    let setup = Setup::new(syn.scenario, syn.nanogrids, syn.pme, HvacMode::Heating).unwrap();
    let controls = Controls::defaults(&setup).unwrap();
    (setup, controls)
}

fn lenient() -> RunOptions {
    RunOptions { strict: false, keep_traces: false }
}

fn assert_clean(report: &RunReport<f64>) {
    let v = report.violations;
    assert_eq!((v.comfort, v.battery, v.queue_identity), (0, 0, 0), "{v:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn default_controls_keep_every_bound(seed in 0u64..10_000, n in 1usize..7, slots in 6usize..49) {
        let (setup, controls) = setup(&SyntheticSpec { seed, n, slots, ..SyntheticSpec::default() });
        let report = run(&setup, &controls, &GameConfig::default(), &setup.midpoint_start(), lenient()).unwrap();
        assert_clean(&report);
        prop_assert_eq!(report.non_converged_slots, 0);
        prop_assert_eq!(report.reaccumulate(setup.scenario()), report.totals);
        for (temps, params) in report.temperatures().iter().flat_map(|row| row.iter().zip(setup.nanogrids())) {
            prop_assert!(*temps >= params.t_min - 1e-9 && *temps <= params.t_max + 1e-9);
        }
    }
}

#[test]
fn runs_are_repeatable() {
    let (setup, controls) = setup(&SyntheticSpec::default());
    let once = run(&setup, &controls, &GameConfig::default(), &setup.midpoint_start(), RunOptions::default()).unwrap();
    let twice = run(&setup, &controls, &GameConfig::default(), &setup.midpoint_start(), RunOptions::default()).unwrap();
    assert_eq!(once, twice);
}

#[test]
fn alternative_solver_settings_stay_in_bounds() {
    let (setup, controls) = setup(&SyntheticSpec::default());
    for config in [
        GameConfig { rule: StepRule::Harmonic, ..GameConfig::default() },
        GameConfig { init: InitPolicy::Grid(3), ..GameConfig::default() },
    ] {
        let report = run(&setup, &controls, &config, &setup.midpoint_start(), lenient()).unwrap();
        assert_clean(&report);
    }
}

#[test]
fn every_case_keeps_the_bounds() {
    let (setup, controls) = setup(&SyntheticSpec::default());
    for case in CaseId::ALL {
        let report =
            run_case(case, &setup, &controls, &GameConfig::default(), &setup.midpoint_start(), lenient()).unwrap();
        assert_clean(&report);
        assert_eq!(report.outcomes.len(), setup.scenario().slots());
    }
}

#[test]
fn welfare_optimum_beats_the_equilibrium_slot_by_slot() {
    let (setup, controls) = setup(&SyntheticSpec { slots: 48, ..SyntheticSpec::default() });
    let report = run(&setup, &controls, &GameConfig::default(), &setup.midpoint_start(), lenient()).unwrap();
    let init = setup.midpoint_start();
    let mut state = SlotState::new(init.t0, init.e0, &controls.shifts(), controls.pme.theta).unwrap();
    let sc = setup.scenario();
    for o in &report.outcomes {
        let k = o.slot;
        let problem = WelfareProblem::new(
            &state,
            &sc.nanogrid_slots(k),
            &sc.market(k),
            setup.nanogrids(),
            &controls,
            setup.pme(),
            setup.mode(),
        )
        .unwrap();
        let best = problem.solve();
        let es: Vec<f64> = o.followers.iter().map(|f| f.e).collect();
        let equilibrium = problem.objective(&es, o.leader.y);
        assert!(
            best.objective <= equilibrium + 1e-9 * (1.0 + equilibrium.abs()),
            "slot {k}: welfare {} above equilibrium {equilibrium}",
            best.objective
        );
        state = o.next.clone();
    }
}

#[test]
fn strict_mode_stops_at_the_first_violation() {
    let (setup, controls) = setup(&SyntheticSpec::default());
    let idle = |_k: usize, state: &SlotState<f64>| {
        Ok(SlotDecision {
            leader: nanogrid_core::domain::LeaderAction { p_s: 9.0, p_b: 4.0, y: 0.0 },
            followers: state.t.iter().map(|_| FollowerAction { e: 0.0, tp: 0.0 }).collect(),
            converged: true,
            iterations: 1,
            trace: Vec::new(),
        })
    };
    let lenient_report = simulate(&setup, &controls, &setup.midpoint_start(), lenient(), idle).unwrap();
    assert!(lenient_report.violations.comfort > 0);
    let err = simulate(&setup, &controls, &setup.midpoint_start(), RunOptions::default(), idle).unwrap_err();
    assert!(matches!(err, Error::Invariant { .. }), "{err}");
}

#[test]
fn controls_above_their_bounds_are_rejected() {
    let (setup, mut controls) = setup(&SyntheticSpec::default());
    controls.nanogrids[0].v *= 1.5;
    let msg = controls.validate(&setup).unwrap_err().to_string();
    assert!(msg.contains("v_max"), "{msg}");
}
