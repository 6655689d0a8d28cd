//! Interior-point solve of a [`ConeProgram`] and trajectory reconstruction.

use std::io::{Read, Write};
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::program::{build, ConeKind, ConeProgram, CoolingBox, CutChoice, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Fuel plus weighted cooling energy (J).
    pub objective: f64,
    pub duality_gap: f64,
    pub iterations: u32,
    /// Seconds. Excluded from deterministic artifacts.
    #[serde(skip)]
    pub wall_time: f64,
    /// Backend status text.
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Relative duality gap and feasibility tolerance.
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-8, max_iter: 200 }
    }
}

/// Minimal contract for an SOCP backend: load canonical data, solve, return
/// the primal point in physical units.
pub trait ConicSolver {
    fn solve(&self, prog: &ConeProgram, settings: &SolverSettings) -> Result<(SolveReport, Vec<f64>)>;
}

/// `min q'x  s.t.  b - A x in K`, with `x` the scaled variables.
#[derive(Debug, Clone)]
pub struct CanonicalForm {
    pub a: CscMatrix<f64>,
    pub b: Vec<f64>,
    pub q: Vec<f64>,
    pub cones: Vec<SupportedConeT<f64>>,
    pub objective_scale: f64,
}

impl CanonicalForm {
    /// Equalities first, then inequalities, then one entry per cone block.
    /// Each linear row, and each cone block as a whole, is scaled to unit
    /// largest coefficient.
    pub fn from_program(prog: &ConeProgram) -> Self {
        let (mut ii, mut jj, mut vv, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut cones = Vec::new();
        let mut push_rows = |rows: &[&crate::program::AffineRow], per_row: bool| {
            let block_norm = rows
                .iter()
                .flat_map(|r| r.terms.iter().map(|&(j, c)| (c * prog.var_scale[j]).abs()))
                .fold(0.0, f64::max);
            for r in rows {
                let norm = if per_row {
                    r.terms.iter().map(|&(j, c)| (c * prog.var_scale[j]).abs()).fold(0.0, f64::max)
                } else {
                    block_norm
                };
                let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
                let row = b.len();
                for &(j, c) in &r.terms {
                    ii.push(row);
                    jj.push(j);
                    vv.push(-c * prog.var_scale[j] * s);
                }
                b.push(r.constant * s);
            }
        };
        for kind in [ConeKind::Zero, ConeKind::NonNeg] {
            let rows: Vec<_> = prog.blocks.iter().filter(|bl| bl.kind == kind).flat_map(|bl| bl.rows.iter()).collect();
            if !rows.is_empty() {
                push_rows(&rows, true);
                cones.push(match kind {
                    ConeKind::Zero => ZeroConeT(rows.len()),
                    _ => NonnegativeConeT(rows.len()),
                });
            }
        }
        for bl in prog.blocks.iter().filter(|bl| bl.kind == ConeKind::SecondOrder) {
            let rows: Vec<_> = bl.rows.iter().collect();
            push_rows(&rows, false);
            cones.push(SecondOrderConeT(rows.len()));
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, prog.n_vars, ii, jj, vv);

        let mut q: Vec<f64> = prog.cost.iter().zip(&prog.var_scale).map(|(c, s)| c * s).collect();
        for &(j, c) in &prog.tie_break {
            q[j] += c * prog.var_scale[j];
        }
        let objective_scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for v in &mut q {
            *v /= objective_scale;
        }
        CanonicalForm { a, b, q, cones, objective_scale }
    }
}

pub struct ClarabelBackend;

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    }
}

impl ConicSolver for ClarabelBackend {
    fn solve(&self, prog: &ConeProgram, settings: &SolverSettings) -> Result<(SolveReport, Vec<f64>)> {
        let start = Instant::now();
        let canon = CanonicalForm::from_program(prog);
        let n = prog.n_vars;
        let p = CscMatrix::<f64>::zeros((n, n));
        let cfg = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(settings.max_iter)
            .tol_gap_abs(settings.tol)
            .tol_gap_rel(settings.tol)
            .tol_feas(settings.tol)
            .max_threads(1)
            .build()
            .map_err(|e| Error::invalid("solver settings", e.to_string()))?;
        let mut solver = DefaultSolver::new(&p, &canon.q, &canon.a, &canon.b, &canon.cones, cfg)
            .map_err(|e| Error::invalid("solver setup", e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;
        let x: Vec<f64> = sol.x.iter().zip(&prog.var_scale).map(|(v, s)| v * s).collect();
        let status = map_status(sol.status);
        let report = SolveReport {
            status,
            objective: if status == SolveStatus::Optimal { prog.objective_at(&x) } else { f64::NAN },
            duality_gap: solver.info.gap_rel,
            iterations: sol.iterations,
            wall_time: start.elapsed().as_secs_f64(),
            detail: format!("{:?}", sol.status),
        };
        Ok((report, x))
    }
}

/// Solves with the default backend.
pub fn solve(prog: &ConeProgram, settings: &SolverSettings) -> Result<(SolveReport, Vec<f64>)> {
    ClarabelBackend.solve(prog, settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSettings {
    /// Extra solves with cooling cuts rebuilt around the previous solution.
    pub rounds: usize,
    /// Relative half-width of the `lambda_v` box around the previous value.
    pub lambda_halfwidth: f64,
}

impl Default for RefineSettings {
    fn default() -> Self {
        RefineSettings { rounds: 2, lambda_halfwidth: 0.25 }
    }
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub program: ConeProgram,
    pub report: SolveReport,
    pub x: Vec<f64>,
    /// Number of refinement solves that reached optimality.
    pub refinements: usize,
}

/// Build and solve, then optionally refine the cooling cuts. A refinement
/// round that fails to reach optimality is discarded and noted in `detail`.
pub fn solve_instance(inst: &ProblemInstance, settings: &SolverSettings, refine: &RefineSettings) -> Result<Solved> {
    let program = build(inst)?;
    let (report, x) = solve(&program, settings)?;
    let mut best = Solved { program, report, x, refinements: 0 };
    if best.report.status != SolveStatus::Optimal {
        return Ok(best);
    }
    let mut inst = inst.clone();
    for _ in 0..refine.rounds {
        inst.options.cooling_boxes = Some(cooling_boxes(&inst, &best, refine.lambda_halfwidth));
        let program = build(&inst)?;
        let (mut report, x) = solve(&program, settings)?;
        if report.status != SolveStatus::Optimal {
            best.report.detail = format!("{}; refinement stopped: {}", best.report.detail, report.detail);
            break;
        }
        report.wall_time += best.report.wall_time;
        best = Solved { program, report, x, refinements: best.refinements + 1 };
    }
    Ok(best)
}

/// Shrinks the `lambda_v` box around the previous solution and keeps the
/// single cut whose corner is nearer to it.
fn cooling_boxes(inst: &ProblemInstance, prev: &Solved, half: f64) -> Vec<CoolingBox> {
    let l = prev.program.layout;
    let t_lo = inst.temperature_floor();
    let t_hi = inst.battery.max_temperature;
    (0..inst.grid.len())
        .map(|i| {
            let (v_lo, v_hi) = inst.speed_bounds(i);
            let (lam_lo, lam_hi) = (1.0 / v_hi, 1.0 / v_lo);
            let lam = prev.x[l.lam_v(i)].clamp(lam_lo, lam_hi);
            let t = prev.x[l.temp(i)].clamp(t_lo, t_hi);
            let lambda_lo = (lam / (1.0 + half)).max(lam_lo);
            let lambda_hi = (lam * (1.0 + half)).min(lam_hi);
            let gap_lower = (t - t_lo) * (lam - lambda_lo);
            let gap_upper = (t_hi - t) * (lambda_hi - lam);
            let cut = if gap_upper < gap_lower { CutChoice::Upper } else { CutChoice::Lower };
            CoolingBox { t_lo, t_hi, lambda_lo, lambda_hi, cut }
        })
        .collect()
}

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

/// One CSV row. The final row is the terminal state and leaves every
/// per-interval column empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub interval: usize,
    /// Track position at the start of the interval (m).
    pub s: f64,
    pub width: Option<f64>,
    pub is_stop: Option<bool>,
    /// Speed below 1 m/s on a stop interval.
    pub stationary: Option<bool>,
    pub v: Option<f64>,
    pub z: f64,
    pub zeta: f64,
    pub t_batt: f64,
    /// Elapsed time at the start of the interval (s).
    pub t: f64,
    pub f_m: Option<f64>,
    pub f_brk: Option<f64>,
    pub f_fc: Option<f64>,
    pub f_batt: Option<f64>,
    pub f_act: Option<f64>,
    pub f_dis: Option<f64>,
    pub f_chr: Option<f64>,
    pub p_m: Option<f64>,
    pub p_fc: Option<f64>,
    pub p_batt: Option<f64>,
    pub p_act: Option<f64>,
    pub lambda_v: Option<f64>,
    pub lambda_zeta: Option<f64>,
    pub lambda_t: Option<f64>,
    pub delta_zeta: Option<f64>,
}

const CSV_COLUMNS: [&str; 25] = [
    "interval", "s", "width", "is_stop", "stationary", "v", "z", "zeta", "t_batt", "t", "f_m", "f_brk", "f_fc",
    "f_batt", "f_act", "f_dis", "f_chr", "p_m", "p_fc", "p_batt", "p_act", "lambda_v", "lambda_zeta", "lambda_t",
    "delta_zeta",
];

/// Per-interval states, controls and reconstructed powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionTrajectory {
    /// `N` interval rows followed by the terminal row.
    pub rows: Vec<TrajectoryRow>,
}

/// Speeds under this on a stop interval are flagged stationary.
const STATIONARY_SPEED: f64 = 1.0;

impl SolutionTrajectory {
    pub fn intervals(&self) -> &[TrajectoryRow] {
        &self.rows[..self.rows.len() - 1]
    }

    pub fn terminal(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectory has a terminal row")
    }

    pub fn journey_time(&self) -> f64 {
        self.terminal().t
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut out = out;
        let ctx = |e: std::io::Error| Error::io("<csv>", e);
        writeln!(out, "# schema_version={TRAJECTORY_SCHEMA_VERSION}").map_err(ctx)?;
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Schema { context: "csv".into(), msg: e.to_string() })?;
        }
        w.flush().map_err(ctx)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv(input: impl Read, context: &str) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text).map_err(|e| Error::io(context, e))?;
        let schema_err = |msg: String| Error::Schema { context: context.to_string(), msg };
        let mut lines = text.splitn(2, '\n');
        let first = lines.next().unwrap_or("").trim();
        let version = first
            .strip_prefix("# schema_version=")
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| schema_err("missing '# schema_version=' line".into()))?;
        if version != TRAJECTORY_SCHEMA_VERSION {
            return Err(schema_err(format!("unsupported schema_version {version}")));
        }
        let body = lines.next().unwrap_or("");
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let headers = rdr.headers().map_err(|e| schema_err(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != CSV_COLUMNS {
            return Err(schema_err(format!("unexpected columns: {}", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for (k, rec) in rdr.deserialize::<TrajectoryRow>().enumerate() {
            rows.push(rec.map_err(|e| schema_err(format!("row {}: {e}", k + 1)))?);
        }
        if rows.len() < 2 {
            return Err(schema_err("need at least one interval and the terminal row".into()));
        }
        let n = rows.len() - 1;
        for (k, r) in rows.iter().enumerate() {
            let complete = r.v.is_some()
                && r.width.is_some()
                && r.f_m.is_some()
                && r.f_brk.is_some()
                && r.f_fc.is_some()
                && r.f_batt.is_some()
                && r.f_act.is_some()
                && r.lambda_v.is_some();
            if r.interval != k || (k < n && !complete) {
                return Err(schema_err(format!("row {} is incomplete or out of order", k + 1)));
            }
        }
        Ok(SolutionTrajectory { rows })
    }
}

/// Reconstructs the physical trajectory from a solution vector.
pub fn extract(inst: &ProblemInstance, prog: &ConeProgram, x: &[f64]) -> Result<SolutionTrajectory> {
    let l = prog.layout;
    if x.len() != prog.n_vars || l.intervals != inst.grid.len() {
        return Err(Error::LayoutMismatch(format!(
            "vector of {} entries for a program of {} variables over {} intervals",
            x.len(),
            prog.n_vars,
            inst.grid.len()
        )));
    }
    let mut rows = Vec::with_capacity(l.intervals + 1);
    let mut t = 0.0;
    for (i, iv) in inst.grid.intervals.iter().enumerate() {
        let v = x[l.v(i)];
        let f = |j: usize| x[j];
        rows.push(TrajectoryRow {
            interval: i,
            s: iv.start,
            width: Some(iv.width),
            is_stop: Some(iv.is_stop),
            stationary: Some(iv.is_stop && v < STATIONARY_SPEED),
            v: Some(v),
            z: f(l.z(i)),
            zeta: f(l.zeta(i)),
            t_batt: f(l.temp(i)),
            t,
            f_m: Some(f(l.f_m(i))),
            f_brk: Some(f(l.f_brk(i))),
            f_fc: Some(f(l.f_fc(i))),
            f_batt: Some(f(l.f_batt(i))),
            f_act: Some(f(l.f_act(i))),
            f_dis: Some(f(l.f_dis(i))),
            f_chr: Some(f(l.f_chr(i))),
            p_m: Some(f(l.f_m(i)) * v),
            p_fc: Some(f(l.f_fc(i)) * v),
            p_batt: Some(f(l.f_batt(i)) * v),
            p_act: Some(f(l.f_act(i)) * v),
            lambda_v: Some(f(l.lam_v(i))),
            lambda_zeta: Some(f(l.lam_zeta(i))),
            lambda_t: Some(f(l.lam_t(i))),
            delta_zeta: Some(f(l.d_zeta(i))),
        });
        t += iv.width * x[l.lam_v(i)];
    }
    let n = l.intervals;
    let end = inst.grid.intervals.last().map_or(0.0, |iv| if iv.is_stop { iv.start } else { iv.start + iv.width });
    rows.push(TrajectoryRow {
        interval: n,
        s: end,
        width: None,
        is_stop: None,
        stationary: None,
        v: None,
        z: x[l.z(n)],
        zeta: x[l.zeta(n)],
        t_batt: x[l.temp(n)],
        t,
        f_m: None,
        f_brk: None,
        f_fc: None,
        f_batt: None,
        f_act: None,
        f_dis: None,
        f_chr: None,
        p_m: None,
        p_fc: None,
        p_batt: None,
        p_act: None,
        lambda_v: None,
        lambda_zeta: None,
        lambda_t: None,
        delta_zeta: None,
    });
    Ok(SolutionTrajectory { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::fixtures::station_to_station;
    use crate::program::{AffineRow, ConeBlock, Family, VariableLayout};

    fn tiny_program(lo: f64, hi: f64) -> ConeProgram {
        let mut p = build(&station_to_station(300.0, 100.0, 60.0)).unwrap();
        // replace everything with a one-variable box problem
        p.layout = VariableLayout::new(0);
        p.n_vars = 1;
        p.var_scale = vec![1.0];
        p.cost = vec![0.0];
        p.cost_constant = 0.0;
        p.tie_break.clear();
        p.objective_terms.clear();
        p.blocks = vec![ConeBlock {
            family: Family::Bounds,
            interval: None,
            kind: ConeKind::NonNeg,
            rows: vec![AffineRow::new(vec![(0, 1.0)], -lo), AffineRow::new(vec![(0, -1.0)], hi)],
        }];
        p
    }

    #[test]
    fn vacuous_program_is_optimal_with_zero_objective() {
        let (r, x) = solve(&tiny_program(-1.0, 2.0), &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective, 0.0);
        assert!((-1.0..=2.0).contains(&x[0]));
    }

    #[test]
    fn crossing_box_is_infeasible() {
        let (r, _) = solve(&tiny_program(3.0, 2.0), &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn target_time_below_screen_is_infeasible() {
        let mut inst = station_to_station(1000.0, 100.0, 50.0);
        inst.options.min_time_screen = false;
        let p = build(&inst).unwrap();
        let (r, _) = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible, "{}", r.detail);
    }

    #[test]
    fn extract_reconstructs_powers_and_time() {
        let inst = station_to_station(1000.0, 100.0, 150.0);
        let p = build(&inst).unwrap();
        let l = p.layout;
        let mut x = vec![0.0; p.n_vars];
        for i in 0..l.intervals {
            x[l.v(i)] = 10.0;
            x[l.lam_v(i)] = 0.1;
            x[l.f_fc(i)] = 5000.0;
        }
        x[l.v(0)] = 0.1;
        let traj = extract(&inst, &p, &x).unwrap();
        let r = &traj.rows[1];
        assert_eq!(r.p_fc, Some(50_000.0));
        assert_eq!(traj.rows[0].stationary, Some(true));
        let expect: f64 = inst.grid.intervals.iter().map(|iv| iv.width * 0.1).sum();
        assert!((traj.journey_time() - expect).abs() < 1e-9);
        assert!(extract(&inst, &p, &x[1..]).is_err());
    }

    #[test]
    fn csv_round_trip_and_schema_guard() {
        let inst = station_to_station(500.0, 100.0, 80.0);
        let p = build(&inst).unwrap();
        let x: Vec<f64> = (0..p.n_vars).map(|k| 1.0 + k as f64 * 0.5).collect();
        let traj = extract(&inst, &p, &x).unwrap();
        let text = traj.to_csv_string();
        assert!(text.starts_with("# schema_version=1\n"));
        let back = SolutionTrajectory::read_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(back, traj);
        let broken = text.replacen(",f_fc,", ",f_fx,", 1);
        assert!(matches!(SolutionTrajectory::read_csv(broken.as_bytes(), "mem"), Err(Error::Schema { .. })));
        let unversioned = text.replacen("# schema_version=1\n", "", 1);
        assert!(SolutionTrajectory::read_csv(unversioned.as_bytes(), "mem").is_err());
    }
}
