//! Relaxation audit and exact forward simulation of a solved trajectory.

use serde::{Deserialize, Serialize};

use crate::components::{exact_battery_efficiency, exact_delta_zeta, Components};
use crate::error::{Error, Result};
use crate::program::{Family, ProblemInstance};
use crate::solver::SolutionTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Tight,
    Slack,
    /// The family's applicability condition does not hold here.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub interval: usize,
    pub family: Family,
    /// `RHS - LHS` in the family's own units.
    pub residual: f64,
    pub relative: f64,
    pub class: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: Family,
    pub tolerance: f64,
    /// Families 5 to 7 only apply where the temperature bound is active.
    pub conditional: bool,
    pub applicable: usize,
    pub max_relative: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub residuals: Vec<Residual>,
    pub summary: Vec<FamilySummary>,
}

impl TightnessReport {
    /// True when the unconditional families 1 to 4 have no failures.
    pub fn unconditional_pass(&self) -> bool {
        self.summary.iter().filter(|s| !s.conditional).all(|s| s.failures == 0)
    }

    pub fn family(&self, f: Family) -> Option<&FamilySummary> {
        self.summary.iter().find(|s| s.family == f)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<10} {:>10} {:>6} {:>12} {:>8}\n",
            "family", "tolerance", "n", "max_rel", "fail"
        );
        for s in &self.summary {
            out.push_str(&format!(
                "{:<10} {:>10.1e} {:>6} {:>12.3e} {:>8}\n",
                s.family.label(),
                s.tolerance,
                s.applicable,
                s.max_relative,
                s.failures
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditTolerances {
    pub relaxed_1: f64,
    pub relaxed_2: f64,
    pub relaxed_3: f64,
    pub relaxed_4: f64,
    pub thermal: f64,
    /// `|F_batt|` must exceed this fraction of its power bound for the
    /// battery cone to be checked.
    pub battery_activity: f64,
    /// Relative distance from a power bound counted as "at the bound".
    pub bound_margin: f64,
    /// Kelvin below `T_max` counted as an active temperature bound.
    pub temperature_active: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        AuditTolerances {
            relaxed_1: 1e-5,
            relaxed_2: 1e-5,
            relaxed_3: 1e-5,
            relaxed_4: 1e-3,
            thermal: 1e-5,
            battery_activity: 0.01,
            bound_margin: 1e-6,
            temperature_active: 1e-3,
        }
    }
}

fn rel(residual: f64, scale: f64) -> f64 {
    residual.abs() / scale.max(f64::MIN_POSITIVE)
}

/// Residual of every relaxed family on every interval, measured on the
/// physical trajectory with the original (unrelaxed) right-hand sides.
pub fn audit_tightness(sol: &SolutionTrajectory, inst: &ProblemInstance, tol: &AuditTolerances) -> TightnessReport {
    let motor = inst.surrogates.motor.without_cross_term();
    let alpha = inst.surrogates.battery.alpha;
    let batt = &inst.battery;
    let h = batt.heat_transfer;
    let t_max = batt.max_temperature;
    let mut residuals = Vec::new();
    for r in sol.intervals() {
        let i = r.interval;
        let g = |o: Option<f64>| o.unwrap_or(0.0);
        let (v, lam, z) = (g(r.v), g(r.lambda_v), r.z);
        let (f_m, f_fc, f_batt) = (g(r.f_m), g(r.f_fc), g(r.f_batt));
        let (f_dis, f_chr) = (g(r.f_dis), g(r.f_chr));
        let ds = g(r.width);
        let mut push = |family, residual: f64, relative: f64, applicable: bool, tol: f64| {
            let class = if !applicable {
                Classification::NotApplicable
            } else if relative <= tol {
                Classification::Tight
            } else {
                Classification::Slack
            };
            residuals.push(Residual { interval: i, family, residual, relative, class });
        };

        let r1 = v * lam - 1.0;
        push(Family::Relaxed1, r1, r1.abs(), true, tol.relaxed_1);
        let r2 = z - v * v;
        push(Family::Relaxed2, r2, rel(r2, z), true, tol.relaxed_2);

        let (p_lo, p_hi) = (batt.power_min * lam, batt.power_max * lam);
        let margin = tol.bound_margin * p_hi.max(-p_lo);
        let interior = f_batt > p_lo + margin && f_batt < p_hi - margin;
        let demand = motor.eval(f_m, z) + inst.vehicle.aux_power * lam;
        let supply = f_fc + f_batt;
        let r3 = supply - demand;
        let terms = f_fc.abs() + f_batt.abs() + motor.eval(f_m, z).abs() + inst.vehicle.aux_power * lam;
        push(Family::Relaxed3, r3, rel(r3, terms), interior, tol.relaxed_3);

        let bound = if f_batt >= 0.0 { p_hi } else { -p_lo };
        let active = f_batt.abs() > tol.battery_activity * bound;
        let (lhs, rhs) = (alpha * f_batt * f_batt * ds, g(r.lambda_zeta) * lam);
        push(Family::Relaxed4, rhs - lhs, rel(rhs - lhs, rhs.abs().max(lhs)), active, tol.relaxed_4);

        let hot = r.t_batt >= t_max - tol.temperature_active
            || sol.rows[i + 1].t_batt >= t_max - tol.temperature_active;
        let product = h * r.t_batt * lam;
        let r5 = product - g(r.lambda_t);
        push(Family::Relaxed5, r5, rel(r5, product.abs()), hot, tol.thermal);
        let force_scale = f_batt.abs().max(f_dis.abs()).max(f_chr.abs()).max(tol.battery_activity * p_hi.max(-p_lo));
        let r6 = f_batt.min(0.0) - f_chr;
        push(Family::Relaxed6, r6, rel(r6, force_scale), hot, tol.thermal);
        let r7 = f_dis - f_batt.max(0.0);
        push(Family::Relaxed7, r7, rel(r7, force_scale), hot, tol.thermal);
    }

    let families = [
        (Family::Relaxed1, tol.relaxed_1, false),
        (Family::Relaxed2, tol.relaxed_2, false),
        (Family::Relaxed3, tol.relaxed_3, false),
        (Family::Relaxed4, tol.relaxed_4, false),
        (Family::Relaxed5, tol.thermal, true),
        (Family::Relaxed6, tol.thermal, true),
        (Family::Relaxed7, tol.thermal, true),
    ];
    let summary = families
        .iter()
        .map(|&(family, tolerance, conditional)| {
            let checked: Vec<_> = residuals
                .iter()
                .filter(|r| r.family == family && r.class != Classification::NotApplicable)
                .collect();
            FamilySummary {
                family,
                tolerance,
                conditional,
                applicable: checked.len(),
                max_relative: checked.iter().map(|r| r.relative).fold(0.0, f64::max),
                failures: checked.iter().filter(|r| r.class == Classification::Slack).count(),
            }
        })
        .collect();
    TightnessReport { residuals, summary }
}

/// Interval controls held constant over the interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub f_m: f64,
    pub f_brk: f64,
    /// Ignored under [`BusMode::FuelCellShare`].
    pub f_fc: f64,
    /// Only used under [`BusMode::Held`].
    pub f_batt: f64,
    pub f_act: f64,
}

/// How the battery force is set inside an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusMode {
    /// Use the commanded battery force.
    Held,
    /// The battery covers the exact motor and auxiliary demand left after
    /// the fuel cell; regeneration beyond the charge limit is dumped.
    BatteryBalances,
    /// The battery carries `1 - x` of the exact demand at every sub-step.
    /// The remaining `x` comes from the fuel cell when the demand is
    /// positive and is dumped when it is negative.
    FuelCellShare(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactState {
    pub z: f64,
    pub zeta: f64,
    pub temp: f64,
    /// Elapsed time (s).
    pub time: f64,
    /// Hydrogen energy consumed so far (J).
    pub fuel: f64,
    /// Active cooling energy so far (J).
    pub cooling: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Distance-averaged battery force over the interval (J/m).
    pub f_batt: f64,
    /// Distance-averaged fuel-cell force (J/m).
    pub f_fc: f64,
    /// Supply minus exact electric demand, integrated (J).
    pub imbalance: f64,
    /// Regenerated energy the battery could not absorb (J).
    pub dumped: f64,
    /// Largest battery power outside `[P_min, P_max]` (W), zero if none.
    pub overdraw: f64,
    /// Largest fuel-cell power above `P_fc_max` (W), zero if none.
    pub fc_overdraw: f64,
    pub max_speed: f64,
}

/// Exact nonlinear physics over one interval.
pub struct ExactModel<'a> {
    pub inst: &'a ProblemInstance,
    pub maps: &'a Components,
    pub substeps: usize,
    /// Stops entered at rest instead of at `sqrt(z_stop)`.
    pub zero_stop_speed: bool,
    pub bus: BusMode,
}

impl ExactModel<'_> {
    /// Exact electric demand of motor and auxiliaries per metre at speed `v`.
    pub fn electric_demand(&self, f_m: f64, v: f64) -> f64 {
        self.maps.motor_map.electric_per_metre(f_m, v) + self.inst.vehicle.aux_power / v
    }

    fn energy_substep(&self, c: &Controls, v: f64, sub: f64, dt: f64, s: &mut ExactState, info: &mut StepInfo) -> Result<()> {
        let batt = &self.inst.battery;
        let demand = self.electric_demand(c.f_m, v);
        let (f_fc, mut f_batt) = match self.bus {
            BusMode::Held => (c.f_fc, c.f_batt),
            BusMode::BatteryBalances => (c.f_fc, demand - c.f_fc),
            BusMode::FuelCellShare(x) => {
                if demand < 0.0 {
                    info.dumped -= x * demand * sub;
                }
                (x * demand.max(0.0), (1.0 - x) * demand)
            }
        };
        let p_min = batt.power_min / v;
        if self.bus != BusMode::Held && f_batt < p_min {
            info.dumped += (p_min - f_batt) * sub;
            f_batt = p_min;
        }
        info.imbalance += (f_fc + f_batt - demand) * sub;
        let p = f_batt * v;
        let outside = (p - batt.power_max).max(batt.power_min - p);
        if outside > 1e-6 * batt.power_max.max(1.0) {
            info.overdraw = info.overdraw.max(outside);
        }
        let fc_max = self.inst.vehicle.fuel_cell_power_max;
        if f_fc * v > fc_max * (1.0 + 1e-9) {
            info.fc_overdraw = info.fc_overdraw.max(f_fc * v - fc_max);
        }
        s.zeta -= exact_delta_zeta(batt, p, dt)?;
        let loss = f_batt.abs() * (1.0 - exact_battery_efficiency(batt, p)?);
        let heat = sub * (loss - c.f_act) - batt.heat_transfer * (s.temp - batt.ambient_temperature) * dt;
        s.temp += heat / batt.thermal_capacity();
        s.fuel += self.maps.fuel_cell_map.input_per_metre(f_fc, v) * sub;
        s.cooling += c.f_act * sub;
        info.f_batt += f_batt * sub;
        info.f_fc += f_fc * sub;
        Ok(())
    }

    /// End speed of one kinetic sub-step on running interval `i` under
    /// traction `f` (motor plus brake), or `None` if the train stops.
    pub fn kinetic_substep(&self, i: usize, v0: f64, f: f64) -> Option<f64> {
        let iv = &self.inst.grid.intervals[i];
        let veh = &self.inst.vehicle;
        let d = &self.inst.davis;
        let sub = iv.width / self.substeps.max(1) as f64;
        let k = 2.0 * sub / veh.equivalent_mass;
        let push = f - d.a - veh.mass * veh.gravity * iv.gradient.sin();
        // (1 + k c) v^2 + k b v - (v0^2 + k F) = 0
        let qa = 1.0 + k * d.c;
        let qb = k * d.b;
        let qc = -(v0 * v0 + k * push);
        if qc >= 0.0 {
            return None;
        }
        let v1 = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        (v1 > 0.0).then_some(v1)
    }

    /// Speed at the end of running interval `i` entered at `v0`.
    pub fn end_speed(&self, i: usize, v0: f64, f: f64) -> Option<f64> {
        let mut v = v0;
        for _ in 0..self.substeps.max(1) {
            v = self.kinetic_substep(i, v, f)?;
        }
        Some(v)
    }

    /// Advances `state` across interval `i`.
    pub fn advance(&self, i: usize, state: &ExactState, c: &Controls) -> Result<(ExactState, StepInfo)> {
        let iv = &self.inst.grid.intervals[i];
        let veh = &self.inst.vehicle;
        let n = self.substeps.max(1);
        let sub = iv.width / n as f64;
        let mut s = *state;
        let mut info = StepInfo::default();
        if iv.is_stop {
            // Stationary dwell emulated at sqrt(z_stop); the motor impulse
            // over the virtual width is kept so departures match.
            let vs = self.inst.spec.stop_speed();
            let entry = if self.zero_stop_speed { 0.0 } else { self.inst.spec.z_stop };
            let dt = sub / vs;
            for _ in 0..n {
                self.energy_substep(c, vs, sub, dt, &mut s, &mut info)?;
                s.time += dt;
            }
            s.z = entry + 2.0 * iv.width / veh.equivalent_mass * (c.f_m + c.f_brk);
            if s.z <= 0.0 {
                return Err(Error::SpeedCollapse { interval: i });
            }
            info.max_speed = s.z.sqrt().max(vs);
        } else {
            let mut v0 = s.z.max(0.0).sqrt();
            info.max_speed = v0;
            for _ in 0..n {
                let v1 = self.kinetic_substep(i, v0, c.f_m + c.f_brk).ok_or(Error::SpeedCollapse { interval: i })?;
                let dt = 2.0 * sub / (v0 + v1);
                self.energy_substep(c, sub / dt, sub, dt, &mut s, &mut info)?;
                s.time += dt;
                v0 = v1;
                info.max_speed = info.max_speed.max(v1);
            }
            s.z = v0 * v0;
        }
        info.f_batt /= iv.width;
        info.f_fc /= iv.width;
        Ok((s, info))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationOptions {
    pub substeps: usize,
    pub zero_stop_speed: bool,
    pub bus: BusMode,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions { substeps: 10, zero_stop_speed: false, bus: BusMode::Held }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPoint {
    pub interval: usize,
    pub v_sim: f64,
    pub zeta_sim: f64,
    pub t_batt_sim: f64,
    pub time_sim: f64,
    pub v_opt: f64,
    pub zeta_opt: f64,
    pub t_batt_opt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    /// States at every interval boundary, `N + 1` entries.
    pub points: Vec<SimulatedPoint>,
    /// Excludes station arrivals, where the speed is pinned.
    pub max_speed_divergence: f64,
    /// Largest `|v_sim - sqrt(z_stop)|` on reaching a station, before pinning.
    pub arrival_speed_error: f64,
    pub max_soc_divergence: f64,
    pub soc_endpoint_drift: f64,
    pub max_temperature_divergence: f64,
    pub max_temperature: f64,
    /// `max(T_sim) - T_max`, zero when never exceeded.
    pub temperature_overshoot: f64,
    pub journey_time: f64,
    pub fuel: f64,
    pub cooling: f64,
    /// Regenerated energy beyond the charge limit (J).
    pub dumped_energy: f64,
    /// Commanded supply minus exact electric demand over the journey (J);
    /// the motor surrogate error seen by the bus.
    pub bus_imbalance: f64,
    /// Exact-model bound violations, one line each.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DivergenceThresholds {
    /// Fraction of the top speed limit.
    pub speed_fraction: f64,
    /// Absolute SOC fraction at the journey end.
    pub soc_drift: f64,
    pub temperature: f64,
    pub temperature_overshoot: f64,
}

impl Default for DivergenceThresholds {
    fn default() -> Self {
        DivergenceThresholds { speed_fraction: 0.01, soc_drift: 0.005, temperature: 1.0, temperature_overshoot: 1.0 }
    }
}

impl DivergenceThresholds {
    /// Breached thresholds, empty on success.
    pub fn check(&self, r: &SimulationReport, v_top: f64) -> Vec<String> {
        let mut out = Vec::new();
        let mut test = |name: &str, value: f64, limit: f64| {
            if !(value <= limit) {
                out.push(format!("{name} {value:.6e} above threshold {limit:.6e}"));
            }
        };
        test("speed divergence (m/s)", r.max_speed_divergence, self.speed_fraction * v_top);
        test("SOC endpoint drift", r.soc_endpoint_drift, self.soc_drift);
        test("temperature divergence (K)", r.max_temperature_divergence, self.temperature);
        test("temperature overshoot (K)", r.temperature_overshoot, self.temperature_overshoot);
        out
    }
}

/// Replays the solution's motor, brake, fuel-cell and cooling forces through
/// the exact models. The optimizer's states are used only for comparison.
pub fn forward_simulate(
    sol: &SolutionTrajectory,
    inst: &ProblemInstance,
    maps: &Components,
    opts: &SimulationOptions,
) -> Result<SimulationReport> {
    if sol.rows.len() != inst.grid.len() + 1 {
        return Err(Error::LayoutMismatch(format!(
            "trajectory has {} rows for {} intervals",
            sol.rows.len(),
            inst.grid.len()
        )));
    }
    let model = ExactModel { inst, maps, substeps: opts.substeps, zero_stop_speed: opts.zero_stop_speed, bus: opts.bus };
    let batt = &inst.battery;
    let first = &sol.rows[0];
    let mut s = ExactState {
        z: first.z,
        zeta: inst.spec.initial_soc,
        temp: inst.spec.initial_temperature,
        time: 0.0,
        fuel: 0.0,
        cooling: 0.0,
    };
    let mut points = Vec::with_capacity(sol.rows.len());
    let mut violations = Vec::new();
    let mut dumped = 0.0;
    let mut imbalance = 0.0;
    let mut arrival: f64 = 0.0;
    let point = |i: usize, s: &ExactState, pinned: Option<f64>| {
        let r = &sol.rows[i];
        SimulatedPoint {
            interval: i,
            v_sim: pinned.unwrap_or(s.z.max(0.0).sqrt()),
            zeta_sim: s.zeta,
            t_batt_sim: s.temp,
            time_sim: s.time,
            v_opt: r.v.unwrap_or(r.z.max(0.0).sqrt()),
            zeta_opt: r.zeta,
            t_batt_opt: r.t_batt,
        }
    };
    for (i, iv) in inst.grid.intervals.iter().enumerate() {
        let r = &sol.rows[i];
        let g = |o: Option<f64>| o.unwrap_or(0.0);
        let c = Controls { f_m: g(r.f_m), f_brk: g(r.f_brk), f_fc: g(r.f_fc), f_batt: g(r.f_batt), f_act: g(r.f_act) };
        // the platform pins the speed; the residual arrival speed is kept apart
        if iv.is_stop && i > 0 {
            arrival = arrival.max((s.z.max(0.0).sqrt() - inst.spec.stop_speed()).abs());
            points.push(point(i, &s, Some(inst.spec.stop_speed())));
        } else {
            points.push(point(i, &s, None));
        }
        let (next, info) = model.advance(i, &s, &c)?;
        dumped += info.dumped;
        imbalance += info.imbalance;
        if info.overdraw > 0.0 {
            violations.push(format!("interval {i}: battery power {:.0} W outside its bounds", info.overdraw));
        }
        if info.fc_overdraw > 0.0 {
            violations.push(format!("interval {i}: fuel-cell power {:.0} W above its bound", info.fc_overdraw));
        }
        if !iv.is_stop && info.max_speed > iv.speed_limit * (1.0 + 1e-3) {
            violations.push(format!("interval {i}: speed {:.3} m/s above limit {}", info.max_speed, iv.speed_limit));
        }
        s = next;
        if !(batt.soc_min - 1e-9..=batt.soc_max + 1e-9).contains(&s.zeta) {
            violations.push(format!("boundary {}: SOC {:.6} outside bounds", i + 1, s.zeta));
        }
        if s.temp > batt.max_temperature {
            violations.push(format!("boundary {}: temperature {:.3} K above T_max", i + 1, s.temp));
        }
    }
    points.push(point(inst.grid.len(), &s, None));
    let n = points.len() - 1;
    let max = |f: &dyn Fn(&SimulatedPoint) -> f64| points.iter().map(f).fold(0.0, f64::max);
    let max_temperature = points.iter().map(|p| p.t_batt_sim).fold(f64::NEG_INFINITY, f64::max);
    Ok(SimulationReport {
        max_speed_divergence: max(&|p| (p.v_sim - p.v_opt).abs()),
        arrival_speed_error: arrival,
        max_soc_divergence: max(&|p| (p.zeta_sim - p.zeta_opt).abs()),
        soc_endpoint_drift: (points[n].zeta_sim - inst.spec.initial_soc).abs(),
        max_temperature_divergence: max(&|p| (p.t_batt_sim - p.t_batt_opt).abs()),
        max_temperature,
        temperature_overshoot: (max_temperature - batt.max_temperature).max(0.0),
        journey_time: s.time,
        fuel: s.fuel,
        cooling: s.cooling,
        dumped_energy: dumped,
        bus_imbalance: imbalance,
        violations,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::fixtures::{components, station_to_station};
    use crate::solver::TrajectoryRow;

    fn model_inst() -> (ProblemInstance, Components) {
        (station_to_station(2000.0, 100.0, 300.0), components())
    }

    fn state(z: f64) -> ExactState {
        ExactState { z, zeta: 0.6, temp: 293.0, time: 0.0, fuel: 0.0, cooling: 0.0 }
    }

    #[test]
    fn coasting_decays_under_drag() {
        let (inst, maps) = model_inst();
        let m = ExactModel { inst: &inst, maps: &maps, substeps: 10, zero_stop_speed: false, bus: BusMode::Held };
        let mut s = state(400.0);
        let c = Controls { f_m: 0.0, f_brk: 0.0, f_fc: 0.0, f_batt: 0.0, f_act: 0.0 };
        let mut prev = s.z;
        for i in 1..8 {
            s = m.advance(i, &s, &c).unwrap().0;
            assert!(s.z < prev);
            prev = s.z;
        }
    }

    #[test]
    fn zero_battery_power_keeps_soc() {
        let (inst, maps) = model_inst();
        let m = ExactModel { inst: &inst, maps: &maps, substeps: 10, zero_stop_speed: false, bus: BusMode::Held };
        let c = Controls { f_m: 10e3, f_brk: 0.0, f_fc: 20e3, f_batt: 0.0, f_act: 0.0 };
        let (next, info) = m.advance(1, &state(400.0), &c).unwrap();
        assert_eq!(next.zeta, 0.6);
        assert!(next.fuel > 0.0);
        assert!(info.imbalance > 0.0);
    }

    #[test]
    fn balancing_battery_closes_the_bus() {
        let (inst, maps) = model_inst();
        let m = ExactModel { inst: &inst, maps: &maps, substeps: 10, zero_stop_speed: false, bus: BusMode::BatteryBalances };
        let c = Controls { f_m: 10e3, f_brk: 0.0, f_fc: 5e3, f_batt: f64::NAN, f_act: 0.0 };
        let (next, info) = m.advance(1, &state(400.0), &c).unwrap();
        assert!(info.imbalance.abs() < 1e-6);
        assert!(next.zeta < 0.6);
        // heavy regeneration with the fuel cell idle saturates the charge limit
        let c = Controls { f_m: -100e3, f_fc: 0.0, ..c };
        let (_, info) = m.advance(1, &state(400.0), &c).unwrap();
        assert!(info.dumped > 0.0);
    }

    #[test]
    fn collapse_is_reported() {
        let (inst, maps) = model_inst();
        let m = ExactModel { inst: &inst, maps: &maps, substeps: 10, zero_stop_speed: false, bus: BusMode::Held };
        let c = Controls { f_m: 0.0, f_brk: -150e3, f_fc: 0.0, f_batt: 0.0, f_act: 0.0 };
        assert!(matches!(m.advance(1, &state(4.0), &c), Err(Error::SpeedCollapse { interval: 1 })));
    }

    fn row(i: usize, v: f64, lam: f64, z: f64, f_batt: f64) -> TrajectoryRow {
        TrajectoryRow {
            interval: i,
            s: 0.0,
            width: Some(100.0),
            is_stop: Some(false),
            stationary: Some(false),
            v: Some(v),
            z,
            zeta: 0.6,
            t_batt: 293.0,
            t: 0.0,
            f_m: Some(0.0),
            f_brk: Some(0.0),
            f_fc: Some(0.0),
            f_batt: Some(f_batt),
            f_act: Some(0.0),
            f_dis: Some(f_batt.max(0.0) + 50.0),
            f_chr: Some(f_batt.min(0.0)),
            p_m: Some(0.0),
            p_fc: Some(0.0),
            p_batt: Some(0.0),
            p_act: Some(0.0),
            lambda_v: Some(lam),
            lambda_zeta: Some(0.0),
            lambda_t: Some(0.0),
            delta_zeta: Some(0.0),
        }
    }

    #[test]
    fn zero_battery_force_exempts_battery_cone_and_cool_thermal_rows() {
        let inst = station_to_station(2000.0, 100.0, 300.0);
        let mut rows = vec![row(0, 10.0, 0.1, 100.0, 0.0)];
        let mut term = row(1, 0.0, 0.0, 100.0, 0.0);
        term.v = None;
        rows.push(term);
        let sol = SolutionTrajectory { rows };
        let rep = audit_tightness(&sol, &inst, &AuditTolerances::default());
        let cls = |f| rep.residuals.iter().find(|r| r.family == f).unwrap().class;
        assert_eq!(cls(Family::Relaxed1), Classification::Tight);
        assert_eq!(cls(Family::Relaxed2), Classification::Tight);
        assert_eq!(cls(Family::Relaxed4), Classification::NotApplicable);
        // F_dis is 50 above F_batt but the pack is far below T_max
        assert_eq!(cls(Family::Relaxed7), Classification::NotApplicable);
        assert!(rep.family(Family::Relaxed4).unwrap().failures == 0);
    }

    #[test]
    fn loose_speed_cone_fails() {
        let inst = station_to_station(2000.0, 100.0, 300.0);
        let mut rows = vec![row(0, 10.0, 0.11, 100.0, 0.0)];
        rows.push(SolutionTrajectory { rows: vec![row(1, 0.0, 0.0, 100.0, 0.0)] }.rows[0].clone());
        let rep = audit_tightness(&SolutionTrajectory { rows }, &inst, &AuditTolerances::default());
        assert_eq!(rep.family(Family::Relaxed1).unwrap().failures, 1);
        assert!(!rep.unconditional_pass());
        assert!(rep.render().contains("relaxed_1"));
    }
}
