use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hytrain::components::{ComponentFile, Components};
use hytrain::dp::{dp_solve, gap_report, DpConfig, GridMeta};
use hytrain::program::ProblemInstance;
use hytrain::solver::{extract, solve_instance, SolutionTrajectory, SolveReport, SolveStatus};
use hytrain::surrogate::{fit_all, hessian_psd_check, FitConfig, QuadraticSurrogate, Surrogates};
use hytrain::track::{build_grid, load_track};
use hytrain::validate::{audit_tightness, forward_simulate, DivergenceThresholds, SimulationReport, TightnessReport};

use crate::config::RunConfig;
use crate::{Failure, InputError};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

pub const SURROGATE_FILE: &str = "surrogates.json";
pub const SOLUTION_FILE: &str = "solution.csv";
pub const RUN_FILE: &str = "run.json";
pub const TIGHTNESS_FILE: &str = "tightness.json";
pub const SIMULATION_FILE: &str = "simulation.json";
pub const GAP_FILE: &str = "gap.json";
pub const SIDE_BY_SIDE_FILE: &str = "compare.csv";
pub const DP_SOLUTION_FILE: &str = "dp_solution.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateArtifact {
    pub schema_version: u32,
    pub seed: u64,
    pub fit: FitConfig,
    pub surrogates: Surrogates,
    pub report: FitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub motor: FitLine,
    pub fuel_cell: FitLine,
    pub battery: FitLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitLine {
    pub rms_rel_error: f64,
    /// Smallest Hessian eigenvalue; for the battery polynomial, `2 alpha`.
    pub psd_margin: f64,
}

impl FitReport {
    pub fn of(s: &Surrogates) -> Self {
        let quad = |q: QuadraticSurrogate| FitLine { rms_rel_error: q.rms_rel_error, psd_margin: hessian_psd_check(&q).margin };
        FitReport {
            motor: quad(s.motor),
            fuel_cell: quad(s.fuel_cell),
            battery: FitLine { rms_rel_error: s.battery.rms_rel_error, psd_margin: 2.0 * s.battery.alpha },
        }
    }

    fn render(&self) -> String {
        let mut out = format!("{:<10} {:>12} {:>12}\n", "surrogate", "rms_rel", "psd_margin");
        for (name, l) in [("motor", self.motor), ("fuel_cell", self.fuel_cell), ("battery", self.battery)] {
            out.push_str(&format!("{name:<10} {:>12.4e} {:>12.4e}\n", l.rms_rel_error, l.psd_margin));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub intervals: usize,
    pub report: SolveReport,
    pub refinements: usize,
    pub journey_time: f64,
    pub initial_soc: f64,
    pub terminal_soc: f64,
    pub tightness_pass: bool,
    pub surrogates: Surrogates,
    pub solution: SolutionTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationArtifact {
    pub schema_version: u32,
    pub solution: String,
    pub thresholds: DivergenceThresholds,
    pub breaches: Vec<String>,
    pub report: SimulationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapArtifact {
    pub schema_version: u32,
    pub intervals: usize,
    pub j_convex: f64,
    pub j_dp: f64,
    /// `(J_convex - J_dp) / J_dp`.
    pub gap: f64,
    pub convex_report: SolveReport,
    pub dp: DpConfig,
    pub dp_grid: GridMeta,
    /// `(v, zeta, T, t)` after the last interval of the grid path.
    pub dp_terminal: [f64; 4],
}

#[derive(Debug, Serialize)]
struct SideBySide {
    interval: usize,
    s: f64,
    v_convex: Option<f64>,
    v_dp: Option<f64>,
    zeta_convex: f64,
    zeta_dp: f64,
    t_batt_convex: f64,
    t_batt_dp: f64,
    t_convex: f64,
    t_dp: f64,
    f_m_convex: Option<f64>,
    f_m_dp: Option<f64>,
    f_fc_convex: Option<f64>,
    f_fc_dp: Option<f64>,
    f_batt_convex: Option<f64>,
    f_batt_dp: Option<f64>,
    f_act_convex: Option<f64>,
    f_act_dp: Option<f64>,
}

/// Files a command wrote, for the summary line and the sidecar.
pub type Written = Vec<PathBuf>;

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).map_err(|e| InputError(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn components(cfg: &RunConfig) -> anyhow::Result<Components> {
    Ok(ComponentFile::load(&cfg.components)?.realise(cfg.seed)?)
}

fn fit(cfg: &RunConfig, c: &Components) -> anyhow::Result<Surrogates> {
    Ok(fit_all(&c.motor_map, &c.fuel_cell_map, &c.vehicle, &c.battery, &cfg.fit)?)
}

/// Surrogates from the configured artifact, else fitted now.
fn surrogates(cfg: &RunConfig, c: &Components) -> anyhow::Result<Surrogates> {
    match &cfg.surrogates {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| InputError(format!("cannot read {}: {e}", path.display())))?;
            let art: SurrogateArtifact = serde_json::from_str(&text)
                .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
            if art.schema_version != ARTIFACT_SCHEMA_VERSION {
                return Err(InputError(format!(
                    "{}: unsupported schema_version {}",
                    path.display(),
                    art.schema_version
                ))
                .into());
            }
            Ok(art.surrogates)
        }
        None => fit(cfg, c),
    }
}

fn instance(cfg: &RunConfig, c: &Components, s: Surrogates) -> anyhow::Result<ProblemInstance> {
    let track = load_track(&cfg.track)?;
    let spec = cfg.journey_spec();
    let grid = build_grid(&track, cfg.base_step, &spec)?;
    let mut inst = ProblemInstance::new(grid, spec, track.davis, c, s, cfg.weights);
    inst.options = cfg.build.clone();
    Ok(inst)
}

fn status_failure(report: &SolveReport) -> Failure {
    let code = match report.status {
        SolveStatus::Infeasible => 4,
        _ => 5,
    };
    Failure { code, msg: format!("solver status {:?}: {}", report.status, report.detail) }
}

pub fn fit_cmd(cfg: &RunConfig) -> anyhow::Result<Written> {
    let c = components(cfg)?;
    let s = fit(cfg, &c)?;
    let report = FitReport::of(&s);
    print!("{}", report.render());
    let out = cfg.out_dir()?;
    let path = out.join(SURROGATE_FILE);
    write_json(
        &path,
        &SurrogateArtifact { schema_version: ARTIFACT_SCHEMA_VERSION, seed: cfg.seed, fit: cfg.fit, surrogates: s, report },
    )?;
    Ok(vec![path])
}

struct Optimised {
    inst: ProblemInstance,
    report: SolveReport,
    refinements: usize,
    sol: SolutionTrajectory,
}

fn optimise(cfg: &RunConfig, c: &Components) -> anyhow::Result<Optimised> {
    let s = surrogates(cfg, c)?;
    let inst = instance(cfg, c, s)?;
    let solved = solve_instance(&inst, &cfg.solver, &cfg.refine)?;
    if solved.report.status != SolveStatus::Optimal {
        return Err(status_failure(&solved.report).into());
    }
    let sol = extract(&inst, &solved.program, &solved.x)?;
    Ok(Optimised { inst, report: solved.report, refinements: solved.refinements, sol })
}

pub fn optimize_cmd(cfg: &RunConfig) -> anyhow::Result<Written> {
    let c = components(cfg)?;
    let out = cfg.out_dir()?;
    let o = optimise(cfg, &c)?;
    let tight: TightnessReport = audit_tightness(&o.sol, &o.inst, &cfg.audit);
    print!("{}", tight.render());
    let pass = tight.unconditional_pass();

    let paths = [out.join(SOLUTION_FILE), out.join(RUN_FILE), out.join(TIGHTNESS_FILE)];
    write_file(&paths[0], o.sol.to_csv_string().as_bytes())?;
    write_json(
        &paths[1],
        &RunArtifact {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            intervals: o.inst.grid.len(),
            report: o.report.clone(),
            refinements: o.refinements,
            journey_time: o.sol.journey_time(),
            initial_soc: o.inst.spec.initial_soc,
            terminal_soc: o.sol.terminal().zeta,
            tightness_pass: pass,
            surrogates: o.inst.surrogates,
            solution: o.sol.clone(),
        },
    )?;
    write_json(&paths[2], &tight)?;
    println!("objective {:.9e} J, journey time {:.6} s", o.report.objective, o.sol.journey_time());
    if !pass {
        return Err(Failure { code: 6, msg: "relaxation not tight on an unconditional family".into() }.into());
    }
    Ok(paths.to_vec())
}

pub fn validate_cmd(cfg: &RunConfig, solution: &Path) -> anyhow::Result<Written> {
    let file = File::open(solution).map_err(|e| InputError(format!("cannot read {}: {e}", solution.display())))?;
    let sol = SolutionTrajectory::read_csv(file, &solution.display().to_string())?;
    let c = components(cfg)?;
    let s = surrogates(cfg, &c)?;
    let inst = instance(cfg, &c, s)?;
    let report = forward_simulate(&sol, &inst, &c, &cfg.simulation)?;
    let v_top = inst.grid.intervals.iter().map(|iv| iv.speed_limit).fold(0.0, f64::max);
    let breaches = cfg.thresholds.check(&report, v_top);

    let out = cfg.out_dir()?;
    let path = out.join(SIMULATION_FILE);
    println!(
        "speed {:.4e} m/s, SOC drift {:.4e}, temperature {:.4e} K, overshoot {:.4e} K",
        report.max_speed_divergence,
        report.soc_endpoint_drift,
        report.max_temperature_divergence,
        report.temperature_overshoot
    );
    for v in report.violations.iter().take(3) {
        println!("note: {v}");
    }
    if report.violations.len() > 3 {
        println!("note: {} more exact-model notes in {SIMULATION_FILE}", report.violations.len() - 3);
    }
    write_json(
        &path,
        &SimulationArtifact {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            solution: solution.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            thresholds: cfg.thresholds,
            breaches: breaches.clone(),
            report,
        },
    )?;
    if !breaches.is_empty() {
        return Err(Failure { code: 6, msg: format!("divergence above threshold: {}", breaches.join("; ")) }.into());
    }
    Ok(vec![path])
}

pub fn compare_cmd(cfg: &RunConfig) -> anyhow::Result<Written> {
    let dp_cfg = cfg.dp_config();
    let c = components(cfg)?;
    let s = surrogates(cfg, &c)?;
    let probe = instance(cfg, &c, s)?;
    if probe.grid.len() > dp_cfg.interval_cap {
        return Err(InputError(format!(
            "{} intervals exceed the DP interval cap of {}",
            probe.grid.len(),
            dp_cfg.interval_cap
        ))
        .into());
    }
    let out = cfg.out_dir()?;
    let o = optimise(cfg, &c)?;
    let dp = dp_solve(&o.inst, &c, &dp_cfg).map_err(|e| match e {
        hytrain::Error::Infeasible(msg) => Failure { code: 4, msg: format!("DP infeasible: {msg}") }.into(),
        other => anyhow::Error::from(other),
    })?;
    let j_convex = o.report.objective;
    let gap = gap_report(j_convex, dp.cost);
    println!("J_convex {j_convex:.6e} J, J_dp {:.6e} J, gap {:+.4}%", dp.cost, 100.0 * gap);

    let dp_sol = dp.to_trajectory(&o.inst);
    let paths = [out.join(GAP_FILE), out.join(SIDE_BY_SIDE_FILE), out.join(DP_SOLUTION_FILE)];
    write_json(
        &paths[0],
        &GapArtifact {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            intervals: o.inst.grid.len(),
            j_convex,
            j_dp: dp.cost,
            gap,
            convex_report: o.report.clone(),
            dp: dp_cfg,
            dp_grid: dp.grid.clone(),
            dp_terminal: dp.terminal,
        },
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for (a, b) in o.sol.rows.iter().zip(&dp_sol.rows) {
        w.serialize(SideBySide {
            interval: a.interval,
            s: a.s,
            v_convex: a.v,
            v_dp: b.v,
            zeta_convex: a.zeta,
            zeta_dp: b.zeta,
            t_batt_convex: a.t_batt,
            t_batt_dp: b.t_batt,
            t_convex: a.t,
            t_dp: b.t,
            f_m_convex: a.f_m,
            f_m_dp: b.f_m,
            f_fc_convex: a.f_fc,
            f_fc_dp: b.f_fc,
            f_batt_convex: a.f_batt,
            f_batt_dp: b.f_batt,
            f_act_convex: a.f_act,
            f_act_dp: b.f_act,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
    write_file(&paths[1], &bytes)?;
    write_file(&paths[2], dp_sol.to_csv_string().as_bytes())?;
    Ok(paths.to_vec())
}
