//! The grid oracle's optimal path, replayed through the exact models.
//!
//! Speed and temperature are recomputed from the controls every step, so
//! they stay within a cell. SOC and time are snapped to the grid once per
//! stage; their error can build up by half a cell per interval.

mod common;

use hytrain::dp::{dp_solve, DpConfig};
use hytrain::validate::{forward_simulate, SimulationOptions};

#[test]
fn grid_path_replays_on_exact_models() {
    let (inst, maps) = common::toy(240.0);
    let dp = dp_solve(&inst, &maps, &DpConfig::default()).unwrap();
    let sol = dp.to_trajectory(&inst);
    let r = forward_simulate(&sol, &inst, &maps, &SimulationOptions::default()).unwrap();
    let g = &dp.grid;
    let drift_cells = inst.grid.len() as f64 / 2.0 + 1.0;

    assert!(r.max_speed_divergence <= g.v_step, "{}", r.max_speed_divergence);
    assert!(r.max_temperature_divergence <= g.temp_step, "{}", r.max_temperature_divergence);
    assert!(r.max_soc_divergence <= drift_cells * g.zeta_step, "{}", r.max_soc_divergence);
    assert!((r.journey_time - dp.terminal[3]).abs() <= drift_cells * g.t_step, "{} vs {}", r.journey_time, dp.terminal[3]);
    assert!((r.fuel + r.cooling - dp.cost).abs() <= 0.01 * dp.cost, "{} vs {}", r.fuel + r.cooling, dp.cost);
    assert!(r.violations.iter().all(|v| !v.contains("battery")), "{:?}", r.violations);
}

#[test]
fn csv_export_reads_back() {
    let (inst, maps) = common::toy(240.0);
    let cfg = DpConfig { n_v: 21, n_zeta: 21, n_temp: 11, n_t: 101, n_share: 6, ..DpConfig::default() };
    let dp = dp_solve(&inst, &maps, &cfg).unwrap();
    let text = dp.to_trajectory(&inst).to_csv_string();
    let back = hytrain::solver::SolutionTrajectory::read_csv(text.as_bytes(), "dp").unwrap();
    assert_eq!(back.rows.len(), inst.grid.len() + 1);
    assert!(back.rows.iter().all(|r| r.lambda_zeta.is_none()));
}
