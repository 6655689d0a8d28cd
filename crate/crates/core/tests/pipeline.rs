mod common;

use hytrain::program::{build, write_sparse_text, Family};
use hytrain::solver::{extract, solve_instance, RefineSettings, SolutionTrajectory, SolveStatus, SolverSettings};
use hytrain::validate::{audit_tightness, forward_simulate, AuditTolerances, DivergenceThresholds, SimulationOptions};
use hytrain::Error;

#[test]
fn toy_route_end_to_end() {
    let (inst, maps) = common::toy(240.0);
    assert_eq!(inst.grid.len(), 12);
    let solved = solve_instance(&inst, &SolverSettings::default(), &RefineSettings::default()).unwrap();
    assert_eq!(solved.report.status, SolveStatus::Optimal);
    let sol = extract(&inst, &solved.program, &solved.x).unwrap();

    assert!((sol.journey_time() - 240.0).abs() <= 1e-6 * 240.0);
    assert!((sol.terminal().zeta - 0.6).abs() <= 1e-8);

    let tight = audit_tightness(&sol, &inst, &AuditTolerances::default());
    assert!(tight.unconditional_pass(), "{}", tight.render());
    assert!(tight.family(Family::Relaxed1).is_some());

    let back = SolutionTrajectory::read_csv(sol.to_csv_string().as_bytes(), "mem").unwrap();
    assert_eq!(back.to_csv_string(), sol.to_csv_string());

    let r = forward_simulate(&back, &inst, &maps, &SimulationOptions::default()).unwrap();
    let breaches = DivergenceThresholds::default().check(&r, 25.0);
    assert!(breaches.is_empty(), "{breaches:?}");
}

#[test]
fn sparse_export_lists_every_block() {
    let (inst, _) = common::toy(240.0);
    let prog = build(&inst).unwrap();
    let mut buf = Vec::new();
    write_sparse_text(&prog, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(!text.is_empty());
    let census = prog.census();
    for fam in [Family::Relaxed1, Family::Relaxed2, Family::Relaxed3, Family::Relaxed4] {
        assert!(census.blocks.get(&fam).copied().unwrap_or(0) > 0, "{fam:?} missing: {census:?}");
    }
}

#[test]
fn tight_schedule_is_screened() {
    let (inst, _) = common::toy(50.0);
    match solve_instance(&inst, &SolverSettings::default(), &RefineSettings::default()) {
        Err(Error::Infeasible(msg)) => assert!(msg.contains("target time"), "{msg}"),
        other => panic!("expected screen failure, got {other:?}"),
    }
}

#[test]
fn hot_route_activates_temperature_families() {
    let (inst, _) = common::hot(600.0);
    let solved = solve_instance(&inst, &SolverSettings::default(), &RefineSettings::default()).unwrap();
    assert_eq!(solved.report.status, SolveStatus::Optimal);
    let sol = extract(&inst, &solved.program, &solved.x).unwrap();
    let tight = audit_tightness(&sol, &inst, &AuditTolerances::default());
    let f5 = tight.family(Family::Relaxed5).unwrap();
    assert!(f5.applicable > 0, "{}", tight.render());
    assert!(sol.rows.iter().all(|r| r.t_batt <= inst.battery.max_temperature + 1e-6));
}
