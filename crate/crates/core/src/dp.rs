//! Brute-force dynamic programming over the exact models on small instances.
//!
//! The state is `(v, zeta, T, t)` at each interval boundary, snapped to the
//! nearest grid cell. Backward induction runs only over cells reachable from
//! the initial state.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::components::Components;
use crate::error::{Error, Result};
use crate::program::ProblemInstance;
use crate::solver::{SolutionTrajectory, TrajectoryRow};
use crate::validate::{BusMode, Controls, ExactModel, ExactState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpConfig {
    pub n_v: usize,
    pub n_zeta: usize,
    pub n_temp: usize,
    pub n_t: usize,
    /// Levels on [0, 1] of the share of the electric demand not carried by
    /// the battery.
    pub n_share: usize,
    /// Active cooling levels on [0, cooling_max].
    pub n_act: usize,
    /// Levels of the motor's share of negative traction; the brake takes
    /// the rest.
    pub n_regen: usize,
    pub interval_cap: usize,
    pub substeps: usize,
    /// With the battery off the fuel cell carries the whole demand.
    pub battery_enabled: bool,
    /// Running-speed grid range; defaults to `[v_min, highest limit]`.
    pub v_range: Option<[f64; 2]>,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            n_v: 41,
            n_zeta: 41,
            n_temp: 21,
            n_t: 201,
            n_share: 11,
            n_act: 2,
            n_regen: 5,
            interval_cap: 20,
            substeps: 10,
            battery_enabled: true,
            v_range: None,
        }
    }
}

/// Largest interval cap accepted.
pub const MAX_INTERVAL_CAP: usize = 20;

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_v", self.n_v),
            ("n_zeta", self.n_zeta),
            ("n_temp", self.n_temp),
            ("n_t", self.n_t),
            ("n_share", self.n_share),
            ("n_act", self.n_act),
            ("n_regen", self.n_regen),
        ] {
            if n < 2 {
                return Err(Error::invalid(format!("dp.{name}"), "grid sizes must be at least 2"));
            }
        }
        if self.n_temp > u8::MAX as usize || self.n_t > u16::MAX as usize {
            return Err(Error::invalid("dp", "temperature or time grid too large"));
        }
        if self.interval_cap == 0 || self.interval_cap > MAX_INTERVAL_CAP {
            return Err(Error::invalid("dp.interval_cap", format!("must be in 1..={MAX_INTERVAL_CAP}")));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("dp.substeps", "must be positive"));
        }
        if let Some([lo, hi]) = self.v_range {
            if !(lo > 0.0 && hi >= lo) {
                return Err(Error::invalid("dp.v_range", "need 0 < lo <= hi"));
            }
        }
        Ok(())
    }
}

/// Grid spacing and extent actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub v: [f64; 2],
    pub zeta: [f64; 2],
    pub temp: [f64; 2],
    pub t: [f64; 2],
    pub v_step: f64,
    pub zeta_step: f64,
    pub temp_step: f64,
    pub t_step: f64,
    pub counts: [usize; 4],
    /// Transitions evaluated on the exact models, summed over stages.
    pub transitions: usize,
}

/// One interval of the optimal grid path. States are grid values at the
/// start of the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpStep {
    pub interval: usize,
    pub v: f64,
    pub zeta: f64,
    pub temp: f64,
    pub t: f64,
    pub f_m: f64,
    pub f_brk: f64,
    pub f_fc: f64,
    /// Distance-averaged battery force.
    pub f_batt: f64,
    pub f_act: f64,
    /// Exact interval time (s).
    pub dt: f64,
    /// Fuel plus weighted cooling energy (J).
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpResult {
    pub cost: f64,
    pub steps: Vec<DpStep>,
    /// Grid state after the last interval: `(v, zeta, T, t)`.
    pub terminal: [f64; 4],
    pub grid: GridMeta,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// `(J_convex - J_dp) / J_dp`, sign kept.
pub fn gap_report(j_convex: f64, j_dp: f64) -> f64 {
    (j_convex - j_dp) / j_dp
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn step_of(g: &[f64]) -> f64 {
    (g[g.len() - 1] - g[0]) / (g.len() - 1) as f64
}

fn nearest(g: &[f64], x: f64) -> isize {
    let h = step_of(g);
    if h == 0.0 {
        return 0;
    }
    ((x - g[0]) / h).round() as isize
}

const UNSET: u32 = u32::MAX;
const NO_TEMP: u8 = u8::MAX;

struct Transition {
    from: usize,
    to: usize,
    /// Cells of SOC lost.
    dz: isize,
    dt_cells: usize,
    /// Next temperature cell per current cell.
    temp_next: Vec<u8>,
    cost: f64,
    controls: Controls,
    dt: f64,
}

struct Grids {
    v: Vec<f64>,
    zeta: Vec<f64>,
    temp: Vec<f64>,
    t: Vec<f64>,
}

impl Grids {
    /// Running speeds first, then the platform state.
    fn n_speed(&self) -> usize {
        self.v.len() + 1
    }

    fn platform(&self) -> usize {
        self.v.len()
    }

    fn rows(&self) -> usize {
        self.n_speed() * self.zeta.len() * self.temp.len()
    }

    fn row(&self, a: usize, j: usize, k: usize) -> usize {
        (a * self.zeta.len() + j) * self.temp.len() + k
    }
}

struct Stage<'a> {
    inst: &'a ProblemInstance,
    model: ExactModel<'a>,
    cfg: &'a DpConfig,
    g: &'a Grids,
}

impl Stage<'_> {
    fn speed(&self, a: usize) -> f64 {
        if a == self.g.platform() {
            self.inst.spec.stop_speed()
        } else {
            self.g.v[a]
        }
    }

    fn speeds_within(&self, limit: f64) -> Vec<usize> {
        (0..self.g.v.len()).filter(|&a| self.g.v[a] <= limit * (1.0 + 1e-12)).collect()
    }

    /// Total traction force carrying `v0` to `v1` across interval `i`.
    fn traction_for(&self, i: usize, v0: f64, v1: f64, lo: f64, hi: f64) -> Option<f64> {
        let iv = &self.inst.grid.intervals[i];
        if iv.is_stop {
            let f = self.inst.vehicle.equivalent_mass * (v1 * v1 - self.inst.spec.z_stop) / (2.0 * iv.width);
            return (f >= lo - 1e-9 && f <= hi + 1e-9).then_some(f);
        }
        let end = |f: f64| self.model.end_speed(i, v0, f).unwrap_or(0.0);
        let tol = 1e-9 * v1.max(1.0);
        if end(hi) < v1 - tol || end(lo) > v1 + tol {
            return None;
        }
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            if end(m) < v1 {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }

    fn transitions(&self, i: usize) -> Vec<Transition> {
        let inst = self.inst;
        let g = self.g;
        let iv = &inst.grid.intervals[i];
        let veh = &inst.vehicle;
        let batt = &inst.battery;
        let n_int = inst.grid.len();
        let platform = g.platform();

        let from: Vec<usize> = if iv.is_stop { vec![platform] } else { self.speeds_within(iv.speed_limit) };
        let to: Vec<usize> = if i + 1 < n_int {
            let next = &inst.grid.intervals[i + 1];
            if next.is_stop {
                vec![platform]
            } else {
                self.speeds_within(next.speed_limit)
            }
        } else if iv.is_stop {
            vec![platform]
        } else {
            self.speeds_within(iv.speed_limit)
        };

        let shares: Vec<f64> = if self.cfg.battery_enabled { linspace(0.0, 1.0, self.cfg.n_share) } else { vec![1.0] };
        let acts = linspace(0.0, batt.cooling_max, self.cfg.n_act);
        let (t_lo, t_hi) = (g.temp[0], g.temp[g.temp.len() - 1]);
        let t_ref = [t_lo, if t_hi > t_lo { t_hi } else { t_lo + 1.0 }];
        let t_step = step_of(&g.t);
        let mut out = Vec::new();

        for &a in &from {
            let v0 = self.speed(a);
            let fm_lo = veh.motor_force_min.max(veh.motor_power_min / v0);
            let fm_hi = veh.motor_force_max.min(veh.motor_power_max / v0);
            for &b in &to {
                let stay_stopped = iv.is_stop && b == platform;
                let f = if stay_stopped {
                    0.0
                } else {
                    match self.traction_for(i, v0, self.speed(b), fm_lo + veh.brake_force_min, fm_hi) {
                        Some(f) => f,
                        None => continue,
                    }
                };
                let splits: Vec<(f64, f64)> = if f >= 0.0 {
                    vec![(f.min(fm_hi), 0.0)]
                } else {
                    linspace(0.0, 1.0, self.cfg.n_regen)
                        .into_iter()
                        .map(|r| {
                            let f_m = (r * f).max(fm_lo);
                            (f_m, f - f_m)
                        })
                        .filter(|&(_, f_brk)| f_brk >= veh.brake_force_min * (1.0 + 1e-12))
                        .collect()
                };
                for (f_m, f_brk) in splits {
                    for &share in &shares {
                        for &f_act in &acts {
                            let c = Controls { f_m, f_brk, f_fc: 0.0, f_batt: 0.0, f_act };
                            if let Some(tr) = self.evaluate(i, a, b, share, &c, t_ref, t_step) {
                                out.push(tr);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn evaluate(&self, i: usize, a: usize, b: usize, share: f64, c: &Controls, t_ref: [f64; 2], t_step: f64) -> Option<Transition> {
        let g = self.g;
        let model = ExactModel { bus: BusMode::FuelCellShare(share), ..self.model };
        let start = |temp| ExactState {
            z: self.speed(a).powi(2),
            zeta: self.inst.spec.initial_soc,
            temp,
            time: 0.0,
            fuel: 0.0,
            cooling: 0.0,
        };
        let (s0, info) = model.advance(i, &start(t_ref[0]), c).ok()?;
        if info.overdraw > 0.0 || info.fc_overdraw > 0.0 {
            return None;
        }
        if info.f_fc * self.speed(a) < self.inst.vehicle.fuel_cell_power_min * (1.0 - 1e-9) {
            return None;
        }
        let (s1, _) = model.advance(i, &start(t_ref[1]), c).ok()?;
        let slope = (s1.temp - s0.temp) / (t_ref[1] - t_ref[0]);
        let temp_next = g
            .temp
            .iter()
            .map(|&t| {
                let k = nearest(&g.temp, s0.temp + slope * (t - t_ref[0])).max(0);
                if k < g.temp.len() as isize {
                    k as u8
                } else {
                    NO_TEMP
                }
            })
            .collect();
        let delta_zeta = self.inst.spec.initial_soc - s0.zeta;
        let zeta_step = step_of(&g.zeta);
        let dz = if zeta_step > 0.0 { (delta_zeta / zeta_step).round() as isize } else { 0 };
        let dt_cells = if t_step > 0.0 { (s0.time / t_step).round() as usize } else { 0 };
        let mut controls = *c;
        controls.f_batt = info.f_batt;
        controls.f_fc = info.f_fc;
        Some(Transition {
            from: a,
            to: b,
            dz,
            dt_cells,
            temp_next,
            cost: s0.fuel + self.inst.weights.cooling_weight * s0.cooling,
            controls,
            dt: s0.time,
        })
    }
}

/// Time-cell range `[lo, hi]` per row, empty when `lo > hi`.
type Reach = Vec<(u16, u16)>;

fn empty_reach(rows: usize) -> Reach {
    vec![(u16::MAX, 0); rows]
}

fn step_reach(g: &Grids, trs: &[Transition], cur: &Reach, next: &mut Reach) {
    let (nz, nk, nt) = (g.zeta.len(), g.temp.len(), g.t.len());
    for tr in trs {
        for j in 0..nz {
            let j2 = j as isize - tr.dz;
            if j2 < 0 || j2 >= nz as isize {
                continue;
            }
            for k in 0..nk {
                let (lo, hi) = cur[g.row(tr.from, j, k)];
                if lo > hi || lo as usize + tr.dt_cells >= nt {
                    continue;
                }
                let k2 = tr.temp_next[k];
                if k2 == NO_TEMP {
                    continue;
                }
                let r = g.row(tr.to, j2 as usize, k2 as usize);
                let lo2 = (lo as usize + tr.dt_cells) as u16;
                let hi2 = (hi as usize + tr.dt_cells).min(nt - 1) as u16;
                let e = &mut next[r];
                e.0 = e.0.min(lo2);
                e.1 = e.1.max(hi2);
            }
        }
    }
}

/// Solves the grid problem by backward induction over reachable cells.
pub fn dp_solve(inst: &ProblemInstance, maps: &Components, cfg: &DpConfig) -> Result<DpResult> {
    let started = Instant::now();
    cfg.validate()?;
    let n = inst.grid.len();
    if n == 0 {
        return Err(Error::invalid("grid", "no intervals"));
    }
    if n > cfg.interval_cap {
        return Err(Error::invalid("grid", format!("{n} intervals exceed the DP cap of {}", cfg.interval_cap)));
    }
    let spec = &inst.spec;
    let batt = &inst.battery;
    let tau = spec.target_time;
    if !(tau > 0.0) {
        return Err(Error::invalid("target_time", "must be positive"));
    }
    let v_top = inst.grid.intervals.iter().filter(|iv| !iv.is_stop).map(|iv| iv.speed_limit).fold(spec.v_min, f64::max);
    let [v_lo, v_hi] = cfg.v_range.unwrap_or([spec.v_min, v_top]);
    let g = Grids {
        v: linspace(v_lo, v_hi, cfg.n_v),
        zeta: linspace(batt.soc_min, batt.soc_max, cfg.n_zeta),
        temp: linspace(inst.temperature_floor(), batt.max_temperature, cfg.n_temp),
        t: linspace(0.0, tau, cfg.n_t),
    };
    let (nz, nk, nt) = (g.zeta.len(), g.temp.len(), g.t.len());
    let rows = g.rows();

    // A disabled battery dumps all regeneration and supplies nothing.
    let mut off = inst.clone();
    if !cfg.battery_enabled {
        off.battery.power_min = 0.0;
        off.battery.power_max = 0.0;
    }
    let model = ExactModel {
        inst: if cfg.battery_enabled { inst } else { &off },
        maps,
        substeps: cfg.substeps,
        zero_stop_speed: false,
        bus: BusMode::FuelCellShare(1.0),
    };
    let stage = Stage { inst, model, cfg, g: &g };
    let transitions: Vec<Vec<Transition>> = (0..n).map(|i| stage.transitions(i)).collect();
    for (i, trs) in transitions.iter().enumerate() {
        if trs.len() >= UNSET as usize {
            return Err(Error::invalid("dp", format!("interval {i} has {} transitions, too many to index", trs.len())));
        }
    }

    let first = &inst.grid.intervals[0];
    let a0 = if first.is_stop {
        g.platform()
    } else {
        let a = nearest(&g.v, spec.initial_z.sqrt());
        if a < 0 || a >= g.v.len() as isize {
            return Err(Error::Infeasible("initial speed outside the DP speed grid".into()));
        }
        a as usize
    };
    let cell = |grid: &[f64], x: f64, what: &str| -> Result<usize> {
        let j = nearest(grid, x);
        if j < 0 || j >= grid.len() as isize {
            return Err(Error::Infeasible(format!("initial {what} outside the DP grid")));
        }
        Ok(j as usize)
    };
    let j0 = cell(&g.zeta, spec.initial_soc, "SOC")?;
    let k0 = cell(&g.temp, spec.initial_temperature, "temperature")?;

    let mut reach = vec![empty_reach(rows)];
    reach[0][g.row(a0, j0, k0)] = (0, 0);
    for (i, trs) in transitions.iter().enumerate() {
        let mut next = empty_reach(rows);
        step_reach(&g, trs, &reach[i], &mut next);
        reach.push(next);
    }

    let mut later = vec![f64::INFINITY; rows * nt];
    for a in 0..g.n_speed() {
        for j in j0.saturating_sub(1)..=(j0 + 1).min(nz - 1) {
            for k in 0..nk {
                let base = g.row(a, j, k) * nt;
                for l in nt.saturating_sub(2)..nt {
                    later[base + l] = 0.0;
                }
            }
        }
    }
    let mut value = vec![f64::INFINITY; rows * nt];
    let mut policy: Vec<Vec<u32>> = Vec::with_capacity(n);
    for i in (0..n).rev() {
        value.fill(f64::INFINITY);
        let mut pol = vec![UNSET; rows * nt];
        let here = &reach[i];
        for (ti, tr) in transitions[i].iter().enumerate() {
            for j in 0..nz {
                let j2 = j as isize - tr.dz;
                if j2 < 0 || j2 >= nz as isize {
                    continue;
                }
                for k in 0..nk {
                    let row = g.row(tr.from, j, k);
                    let (lo, hi) = here[row];
                    if lo > hi || lo as usize + tr.dt_cells >= nt {
                        continue;
                    }
                    let k2 = tr.temp_next[k];
                    if k2 == NO_TEMP {
                        continue;
                    }
                    let src = g.row(tr.to, j2 as usize, k2 as usize) * nt + tr.dt_cells;
                    let dst = row * nt;
                    let hi = (hi as usize).min(nt - 1 - tr.dt_cells);
                    for l in lo as usize..=hi {
                        let c = tr.cost + later[src + l];
                        if c < value[dst + l] {
                            value[dst + l] = c;
                            pol[dst + l] = ti as u32;
                        }
                    }
                }
            }
        }
        policy.push(pol);
        std::mem::swap(&mut value, &mut later);
    }
    policy.reverse();

    let cost = later[g.row(a0, j0, k0) * nt];
    if !cost.is_finite() {
        return Err(Error::Infeasible(
            "no feasible grid path meets the SOC and journey-time terminal conditions".into(),
        ));
    }

    let (mut a, mut j, mut k, mut l) = (a0, j0, k0, 0usize);
    let mut steps = Vec::with_capacity(n);
    for (i, pol) in policy.iter().enumerate() {
        let ti = pol[g.row(a, j, k) * nt + l];
        let tr = &transitions[i][ti as usize];
        steps.push(DpStep {
            interval: i,
            v: stage.speed(a),
            zeta: g.zeta[j],
            temp: g.temp[k],
            t: g.t[l],
            f_m: tr.controls.f_m,
            f_brk: tr.controls.f_brk,
            f_fc: tr.controls.f_fc,
            f_batt: tr.controls.f_batt,
            f_act: tr.controls.f_act,
            dt: tr.dt,
            cost: tr.cost,
        });
        a = tr.to;
        j = (j as isize - tr.dz) as usize;
        k = tr.temp_next[k] as usize;
        l += tr.dt_cells;
    }

    Ok(DpResult {
        cost,
        steps,
        terminal: [stage.speed(a), g.zeta[j], g.temp[k], g.t[l]],
        grid: GridMeta {
            v: [v_lo, v_hi],
            zeta: [g.zeta[0], g.zeta[nz - 1]],
            temp: [g.temp[0], g.temp[nk - 1]],
            t: [0.0, tau],
            v_step: step_of(&g.v),
            zeta_step: step_of(&g.zeta),
            temp_step: step_of(&g.temp),
            t_step: step_of(&g.t),
            counts: [cfg.n_v, nz, nk, nt],
            transitions: transitions.iter().map(Vec::len).sum(),
        },
        wall_time: started.elapsed(),
    })
}

impl DpResult {
    /// Grid path in the trajectory schema. Relaxation-only columns are empty.
    pub fn to_trajectory(&self, inst: &ProblemInstance) -> SolutionTrajectory {
        let mut rows: Vec<TrajectoryRow> = self
            .steps
            .iter()
            .map(|st| {
                let iv = &inst.grid.intervals[st.interval];
                TrajectoryRow {
                    interval: st.interval,
                    s: iv.start,
                    width: Some(iv.width),
                    is_stop: Some(iv.is_stop),
                    stationary: Some(iv.is_stop && st.v < 1.0),
                    v: Some(st.v),
                    z: st.v * st.v,
                    zeta: st.zeta,
                    t_batt: st.temp,
                    t: st.t,
                    f_m: Some(st.f_m),
                    f_brk: Some(st.f_brk),
                    f_fc: Some(st.f_fc),
                    f_batt: Some(st.f_batt),
                    f_act: Some(st.f_act),
                    f_dis: Some(st.f_batt.max(0.0)),
                    f_chr: Some(st.f_batt.min(0.0)),
                    p_m: Some(st.f_m * st.v),
                    p_fc: Some(st.f_fc * st.v),
                    p_batt: Some(st.f_batt * st.v),
                    p_act: Some(st.f_act * st.v),
                    lambda_v: Some(st.dt / iv.width),
                    lambda_zeta: None,
                    lambda_t: None,
                    delta_zeta: None,
                }
            })
            .collect();
        let [v, zeta, temp, t] = self.terminal;
        let end = inst.grid.intervals.last().map(|iv| iv.start + iv.width).unwrap_or(0.0);
        rows.push(TrajectoryRow {
            interval: self.steps.len(),
            s: end,
            width: None,
            is_stop: None,
            stationary: None,
            v: Some(v),
            z: v * v,
            zeta,
            t_batt: temp,
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
        SolutionTrajectory { rows }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::fixtures::*;
    use crate::program::Weights;
    use crate::track::{build_grid, GradientSample, JourneySpec};

    fn running_instance(length: f64, step: f64, gradients: Vec<GradientSample>, v0: f64, tau: f64) -> ProblemInstance {
        let mut t = track(length, 25.0, vec![]);
        t.gradients = gradients;
        let s = JourneySpec { initial_z: v0 * v0, ..spec(tau) };
        let grid = build_grid(&t, step, &s).unwrap();
        let c = components();
        let sur = surrogates(&c);
        let mut inst = ProblemInstance::new(grid, s, t.davis, &c, sur, Weights::default());
        inst.battery.soc_min = 0.59;
        inst.battery.soc_max = 0.61;
        inst
    }

    /// Two 1 km intervals, up then down. 13 m/s is a node of every speed
    /// grid used below.
    fn hill(tau: f64) -> ProblemInstance {
        let g = vec![GradientSample { position: 0.0, theta: 0.01 }, GradientSample { position: 1000.0, theta: -0.01 }];
        running_instance(2000.0, 1000.0, g, 13.0, tau)
    }

    fn small() -> DpConfig {
        DpConfig { n_v: 11, n_zeta: 11, n_temp: 6, n_t: 51, n_share: 6, ..DpConfig::default() }
    }

    #[test]
    fn gap_keeps_sign() {
        assert_eq!(gap_report(10.0, 10.0), 0.0);
        assert!((gap_report(10.5, 10.0) - 0.05).abs() < 1e-12);
        assert!(gap_report(9.0, 10.0) < 0.0);
    }

    #[test]
    fn forced_cruise_matches_hand_value() {
        let inst = running_instance(200.0, 200.0, vec![], 20.0, 10.0);
        let maps = components();
        let cfg = DpConfig { v_range: Some([20.0, 20.0]), battery_enabled: false, ..DpConfig::default() };
        let dp = dp_solve(&inst, &maps, &cfg).unwrap();

        let f = 1500.0 + 30.0 * 20.0 + 6.0 * 400.0;
        let f_fc = maps.motor_map.electric_per_metre(f, 20.0) + inst.vehicle.aux_power / 20.0;
        let fuel = maps.fuel_cell_map.input_per_metre(f_fc, 20.0) * 200.0;
        assert!((dp.cost - fuel).abs() < 1e-6 * fuel, "{} vs {fuel}", dp.cost);
        let st = &dp.steps[0];
        assert!((st.f_m - f).abs() < 1e-6 * f);
        assert_eq!(st.f_brk, 0.0);
        assert!((st.dt - 10.0).abs() < 1e-9);
        assert_eq!(dp.terminal[3], 10.0);
    }

    #[test]
    fn battery_never_hurts() {
        let inst = hill(160.0);
        let maps = components();
        let on = dp_solve(&inst, &maps, &small()).unwrap();
        let off = dp_solve(&inst, &maps, &DpConfig { battery_enabled: false, ..small() }).unwrap();
        assert!(on.cost <= off.cost, "{} > {}", on.cost, off.cost);
    }

    #[test]
    fn refined_grid_within_one_coarse_cell() {
        let maps = components();
        let coarse_cfg = DpConfig { n_v: 21, n_zeta: 21, n_temp: 11, n_t: 101, n_share: 6, ..DpConfig::default() };
        let fine_cfg = DpConfig { n_v: 41, n_zeta: 41, n_temp: 21, n_t: 201, ..coarse_cfg.clone() };
        let cost = |tau: f64, cfg: &DpConfig| dp_solve(&hill(tau), &maps, cfg).unwrap();
        let coarse = cost(160.0, &coarse_cfg);
        let fine = cost(160.0, &fine_cfg);
        // One coarse cell priced in fuel: a SOC cell of battery energy at the
        // worst fuel-cell efficiency, plus a time cell at the local slope.
        let b = &inst_battery();
        let soc_cell = coarse.grid.zeta_step * b.capacity_ah * 3600.0 * b.open_circuit_voltage / 0.5;
        let slope = (cost(150.0, &coarse_cfg).cost - cost(170.0, &coarse_cfg).cost).abs() / 20.0;
        let tol = soc_cell + slope * coarse.grid.t_step;
        assert!(fine.cost <= coarse.cost + tol, "{} vs {} (+{tol})", fine.cost, coarse.cost);
    }

    fn inst_battery() -> crate::components::BatteryParams {
        hill(160.0).battery
    }

    #[test]
    fn deterministic_and_exports_schema() {
        let inst = hill(160.0);
        let maps = components();
        let a = dp_solve(&inst, &maps, &small()).unwrap();
        let b = dp_solve(&inst, &maps, &small()).unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        let (ca, cb) = (a.to_trajectory(&inst).to_csv_string(), b.to_trajectory(&inst).to_csv_string());
        assert_eq!(ca, cb);
        let back = SolutionTrajectory::read_csv(ca.as_bytes(), "dp").unwrap();
        assert_eq!(back.rows.len(), inst.grid.len() + 1);
    }

    #[test]
    fn terminal_conditions_within_a_cell() {
        let inst = hill(160.0);
        let dp = dp_solve(&inst, &components(), &small()).unwrap();
        assert!((dp.terminal[1] - inst.spec.initial_soc).abs() <= dp.grid.zeta_step * (1.0 + 1e-9));
        assert!((dp.terminal[3] - 160.0).abs() <= dp.grid.t_step * (1.0 + 1e-9));
        let sum: f64 = dp.steps.iter().map(|s| s.cost).sum();
        assert!((sum - dp.cost).abs() <= 1e-9 * dp.cost);
    }

    #[test]
    fn guards() {
        let maps = components();
        let inst = station_to_station(3000.0, 100.0, 400.0);
        assert!(matches!(dp_solve(&inst, &maps, &DpConfig::default()), Err(Error::Invalid { .. })));
        assert!(DpConfig { interval_cap: 21, ..DpConfig::default() }.validate().is_err());
        assert!(DpConfig { n_t: 1, ..DpConfig::default() }.validate().is_err());
        // 2 km in 60 s needs 33 m/s against a 25 m/s limit.
        let err = dp_solve(&hill(60.0), &maps, &small()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
    }
}
