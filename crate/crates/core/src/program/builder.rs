use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::layout::VariableLayout;
use super::mccormick::mccormick_cooling_rows;
use super::{CoolingBox, CutChoice, ProblemInstance};
use crate::error::Result;
use crate::surrogate::QuadraticSurrogate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Dynamics,
    SocUpdate,
    LambdaZeta,
    TemperatureUpdate,
    ThermalBalance,
    ChargeSustaining,
    JourneyTime,
    StationStop,
    InitialState,
    TerminalStop,
    Bounds,
    MotorPower,
    BatteryPower,
    FuelCellPower,
    /// `1 <= v lambda_v`
    Relaxed1,
    /// `v^2 <= z`
    Relaxed2,
    /// motor force balance
    Relaxed3,
    /// battery hyperbolic constraint
    Relaxed4,
    /// cooling cuts on `lambda_T`
    Relaxed5,
    /// `F_chr <= F_batt`
    Relaxed6,
    /// `F_batt <= F_dis`
    Relaxed7,
    ObjectiveEpigraph,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Dynamics => "dynamics",
            Family::SocUpdate => "soc_update",
            Family::LambdaZeta => "lambda_zeta",
            Family::TemperatureUpdate => "temperature_update",
            Family::ThermalBalance => "thermal_balance",
            Family::ChargeSustaining => "charge_sustaining",
            Family::JourneyTime => "journey_time",
            Family::StationStop => "station_stop",
            Family::InitialState => "initial_state",
            Family::TerminalStop => "terminal_stop",
            Family::Bounds => "bounds",
            Family::MotorPower => "motor_power",
            Family::BatteryPower => "battery_power",
            Family::FuelCellPower => "fuel_cell_power",
            Family::Relaxed1 => "relaxed_1",
            Family::Relaxed2 => "relaxed_2",
            Family::Relaxed3 => "relaxed_3",
            Family::Relaxed4 => "relaxed_4",
            Family::Relaxed5 => "relaxed_5",
            Family::Relaxed6 => "relaxed_6",
            Family::Relaxed7 => "relaxed_7",
            Family::ObjectiveEpigraph => "objective_epigraph",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    /// Every row equals zero.
    Zero,
    /// Every row is non-negative.
    NonNeg,
    /// `rows[0] >= ||rows[1..]||`.
    SecondOrder,
}

/// `sum coef * x[idx] + constant`, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRow {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineRow {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        AffineRow { terms: terms.into_iter().filter(|t| t.1 != 0.0).collect(), constant }
    }

    pub fn constant(c: f64) -> Self {
        AffineRow { terms: vec![], constant: c }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>() + self.constant
    }

    fn scaled(&self, s: f64) -> Self {
        AffineRow { terms: self.terms.iter().map(|&(j, c)| (j, c * s)).collect(), constant: self.constant * s }
    }

    fn plus(&self, other: &AffineRow, sign: f64) -> Self {
        let mut terms = self.terms.clone();
        for &(j, c) in &other.terms {
            match terms.iter_mut().find(|t| t.0 == j) {
                Some(t) => t.1 += sign * c,
                None => terms.push((j, sign * c)),
            }
        }
        AffineRow::new(terms, self.constant + sign * other.constant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeBlock {
    pub family: Family,
    pub interval: Option<usize>,
    pub kind: ConeKind,
    pub rows: Vec<AffineRow>,
}

impl ConeBlock {
    /// Distance outside the cone, zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let vals: Vec<f64> = self.rows.iter().map(|r| r.eval(x)).collect();
        match self.kind {
            ConeKind::Zero => vals.iter().fold(0.0, |m, v| m.max(v.abs())),
            ConeKind::NonNeg => vals.iter().fold(0.0, |m, &v| m.max(-v)),
            ConeKind::SecondOrder => {
                let tail = vals[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (tail - vals[0]).max(0.0)
            }
        }
    }
}

/// Per-interval pieces of the physical cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerm {
    pub width: f64,
    pub z: usize,
    pub f_fc: usize,
    pub f_act: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Census {
    pub blocks: BTreeMap<Family, usize>,
    pub rows: BTreeMap<Family, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeProgram {
    pub layout: VariableLayout,
    /// Layout variables followed by one objective epigraph per interval.
    pub n_vars: usize,
    /// Nominal magnitude of each variable; the solver works in `x / scale`.
    pub var_scale: Vec<f64>,
    /// Linear cost in physical units (joules) over all variables.
    pub cost: Vec<f64>,
    pub cost_constant: f64,
    /// Small extra cost selecting the least-heat point on flat thermal faces.
    /// Not part of the reported objective.
    pub tie_break: Vec<(usize, f64)>,
    pub blocks: Vec<ConeBlock>,
    pub objective_terms: Vec<ObjectiveTerm>,
    pub fuel: QuadraticSurrogate,
    pub cooling_weight: f64,
}

impl ConeProgram {
    pub fn epigraph(&self, i: usize) -> usize {
        self.layout.total() + i
    }

    pub fn var_name(&self, idx: usize) -> String {
        if idx < self.layout.total() {
            self.layout.name(idx)
        } else {
            format!("epi[{}]", idx - self.layout.total())
        }
    }

    /// `sum (q_fc(F_fc, z) + w F_act) ds` from the layout part of `x`.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective_terms
            .iter()
            .map(|t| (self.fuel.eval(x[t.f_fc], x[t.z]) + self.cooling_weight * x[t.f_act]) * t.width)
            .sum()
    }

    /// Extends a layout assignment with tight epigraph values.
    pub fn complete(&self, layout_x: &[f64]) -> Vec<f64> {
        let mut x = layout_x[..self.layout.total()].to_vec();
        for t in &self.objective_terms {
            let (z, f) = (layout_x[t.z], layout_x[t.f_fc]);
            x.push(self.fuel.p20 * z * z + self.fuel.p02 * f * f);
        }
        x
    }

    pub fn census(&self) -> Census {
        let mut c = Census::default();
        for b in &self.blocks {
            *c.blocks.entry(b.family).or_default() += 1;
            *c.rows.entry(b.family).or_default() += b.rows.len();
        }
        c
    }

    /// Largest cone violation and the block it occurs in.
    pub fn max_violation(&self, x: &[f64]) -> (f64, Option<&ConeBlock>) {
        let mut worst = (0.0, None);
        for b in &self.blocks {
            let v = b.violation(x);
            if v > worst.0 {
                worst = (v, Some(b));
            }
        }
        worst
    }
}

struct Emitter {
    blocks: Vec<ConeBlock>,
}

impl Emitter {
    fn push(&mut self, family: Family, interval: Option<usize>, kind: ConeKind, rows: Vec<AffineRow>) {
        if !rows.is_empty() {
            self.blocks.push(ConeBlock { family, interval, kind, rows });
        }
    }

    fn eq(&mut self, family: Family, i: Option<usize>, row: AffineRow) {
        self.push(family, i, ConeKind::Zero, vec![row]);
    }

    /// `w.w <= x y` as `(x + y, 2 w, x - y)` in the second-order cone.
    fn rotated(&mut self, family: Family, i: usize, w: Vec<AffineRow>, x: AffineRow, y: AffineRow) {
        let mut rows = vec![x.plus(&y, 1.0)];
        rows.extend(w.iter().map(|r| r.scaled(2.0)));
        rows.push(x.plus(&y, -1.0));
        self.push(family, Some(i), ConeKind::SecondOrder, rows);
    }
}

fn var(j: usize) -> AffineRow {
    AffineRow::new(vec![(j, 1.0)], 0.0)
}

/// Rows `x - lo >= 0` and `hi - x >= 0`, skipping infinite sides.
fn box_rows(rows: &mut Vec<AffineRow>, j: usize, lo: f64, hi: f64) {
    if lo.is_finite() {
        rows.push(AffineRow::new(vec![(j, 1.0)], -lo));
    }
    if hi.is_finite() {
        rows.push(AffineRow::new(vec![(j, -1.0)], hi));
    }
}

/// `lo * lambda <= F <= hi * lambda`.
fn power_rows(f: usize, lam: usize, lo: f64, hi: f64) -> Vec<AffineRow> {
    vec![AffineRow::new(vec![(f, 1.0), (lam, -lo)], 0.0), AffineRow::new(vec![(lam, hi), (f, -1.0)], 0.0)]
}

pub fn build(inst: &ProblemInstance) -> Result<ConeProgram> {
    inst.validate()?;
    inst.screen()?;
    let grid = &inst.grid;
    let spec = &inst.spec;
    let veh = &inst.vehicle;
    let batt = &inst.battery;
    let n = grid.len();
    let l = VariableLayout::new(n);
    let n_vars = l.total() + n;
    let epi = |i: usize| l.total() + i;

    let motor = inst.surrogates.motor.without_cross_term();
    let fuel = inst.surrogates.fuel_cell.without_cross_term();
    let alpha = inst.surrogates.battery.alpha;
    let beta = inst.surrogates.battery.beta;
    let (eta_dis, eta_chr) = inst.eta_dis_chr();
    let t_floor = inst.temperature_floor();
    let t_max = batt.max_temperature;
    let h = batt.heat_transfer;
    let zs = spec.z_stop;
    let vs = spec.stop_speed();
    let davis = inst.davis;

    let v_top = grid.intervals.iter().map(|iv| iv.speed_limit).fold(spec.v_min, f64::max);
    let f_nom = veh.motor_force_max.max(-veh.motor_force_min).max(-veh.brake_force_min);
    let p_ref = veh.motor_power_max.max(veh.fuel_cell_power_max).max(batt.power_max);

    let mut em = Emitter { blocks: Vec::new() };
    let mut scale = vec![1.0; n_vars];
    let mut cost = vec![0.0; n_vars];
    let mut cost_constant = 0.0;
    let mut tie_break = Vec::new();
    let mut objective_terms = Vec::with_capacity(n);

    for i in 0..=n {
        scale[l.z(i)] = v_top * v_top;
        scale[l.zeta(i)] = 1.0;
        scale[l.temp(i)] = t_max.max(1.0);
    }

    let mut init = vec![
        AffineRow::new(vec![(l.zeta(0), 1.0)], -spec.initial_soc),
        AffineRow::new(vec![(l.temp(0), 1.0)], -spec.initial_temperature),
    ];
    if !grid.intervals[0].is_stop {
        init.insert(0, AffineRow::new(vec![(l.z(0), 1.0)], -spec.initial_z));
    }
    em.push(Family::InitialState, None, ConeKind::Zero, init);

    for (i, iv) in grid.intervals.iter().enumerate() {
        let ds = iv.width;
        let running = !iv.is_stop;
        let (v_lo, v_hi) = inst.speed_bounds(i);
        let (lam_lo, lam_hi) = (1.0 / v_hi, 1.0 / v_lo);
        let v_ref = (v_lo * v_hi).sqrt();
        let lam_ref = 1.0 / v_ref;
        let force_ref = f_nom.max(p_ref * lam_ref);
        let dzeta_ref = (beta * p_ref * lam_ref * ds).max(1e-9);

        let (cz, cv, cf_m, cf_brk, cf_fc, cf_batt, cf_act) =
            (l.z(i), l.v(i), l.f_m(i), l.f_brk(i), l.f_fc(i), l.f_batt(i), l.f_act(i));
        let (clam, clz, clt, cdz, cdt, cdis, cchr) =
            (l.lam_v(i), l.lam_zeta(i), l.lam_t(i), l.d_zeta(i), l.d_temp(i), l.f_dis(i), l.f_chr(i));

        scale[cf_m] = f_nom;
        scale[cf_brk] = f_nom;
        for j in [cf_fc, cf_batt, cdis, cchr] {
            scale[j] = force_ref;
        }
        scale[cf_act] = if batt.cooling_max > 0.0 { batt.cooling_max } else { 1.0 };
        scale[cv] = v_ref;
        scale[clam] = lam_ref;
        scale[clz] = dzeta_ref;
        scale[cdz] = dzeta_ref;
        scale[clt] = h * t_max * lam_ref;
        scale[cdt] = 1.0;

        // speed dynamics, F_ext dropped on stops
        let k = 2.0 * ds / veh.equivalent_mass;
        let mut terms = vec![(l.z(i + 1), 1.0), (cz, -1.0), (cf_m, -k), (cf_brk, -k)];
        let mut constant = 0.0;
        if running {
            terms[1].1 += k * davis.c;
            terms.push((cv, k * davis.b));
            constant = k * (davis.a + veh.mass * veh.gravity * iv.gradient.sin());
        }
        em.eq(Family::Dynamics, Some(i), AffineRow::new(terms, constant));

        em.eq(
            Family::SocUpdate,
            Some(i),
            AffineRow::new(vec![(l.zeta(i + 1), 1.0), (l.zeta(i), -1.0), (cdz, 1.0)], 0.0),
        );
        em.eq(
            Family::LambdaZeta,
            Some(i),
            AffineRow::new(vec![(clz, 1.0), (cdz, -1.0), (cf_batt, beta * ds)], 0.0),
        );
        em.eq(
            Family::TemperatureUpdate,
            Some(i),
            AffineRow::new(vec![(l.temp(i + 1), 1.0), (l.temp(i), -1.0), (cdt, -1.0)], 0.0),
        );
        em.eq(
            Family::ThermalBalance,
            Some(i),
            AffineRow::new(
                vec![
                    (cdt, batt.thermal_capacity()),
                    (cdis, -ds * (1.0 - eta_dis)),
                    (cchr, ds * (1.0 - eta_chr)),
                    (clt, ds),
                    (clam, -ds * h * batt.ambient_temperature),
                    (cf_act, ds),
                ],
                0.0,
            ),
        );
        if iv.is_stop {
            em.eq(Family::StationStop, Some(i), AffineRow::new(vec![(cz, 1.0)], -zs));
        }

        let cbox = match &inst.options.cooling_boxes {
            Some(b) => b[i],
            None => CoolingBox { t_lo: t_floor, t_hi: t_max, lambda_lo: lam_lo, lambda_hi: lam_hi, cut: CutChoice::Both },
        };
        let (t_lo, t_hi) = (cbox.t_lo.max(t_floor), cbox.t_hi.min(t_max));
        let (box_lam_lo, box_lam_hi) = (cbox.lambda_lo.max(lam_lo), cbox.lambda_hi.min(lam_hi));

        let mut bounds = Vec::new();
        if running {
            box_rows(&mut bounds, cz, spec.v_min * spec.v_min, v_hi * v_hi);
            box_rows(&mut bounds, cv, v_lo, v_hi);
            box_rows(&mut bounds, clam, box_lam_lo, box_lam_hi);
        }
        box_rows(&mut bounds, l.zeta(i), batt.soc_min, batt.soc_max);
        box_rows(&mut bounds, l.temp(i), t_lo, t_hi);
        box_rows(&mut bounds, cf_m, veh.motor_force_min, veh.motor_force_max);
        box_rows(&mut bounds, cf_brk, veh.brake_force_min, 0.0);
        box_rows(&mut bounds, cf_act, 0.0, batt.cooling_max);
        box_rows(&mut bounds, cdis, 0.0, f64::INFINITY);
        box_rows(&mut bounds, cchr, f64::NEG_INFINITY, 0.0);
        box_rows(&mut bounds, clz, 0.0, f64::INFINITY);
        box_rows(&mut bounds, clt, -h * t_max * lam_hi, f64::INFINITY);
        em.push(Family::Bounds, Some(i), ConeKind::NonNeg, bounds);

        em.push(
            Family::MotorPower,
            Some(i),
            ConeKind::NonNeg,
            power_rows(cf_m, clam, veh.motor_power_min, veh.motor_power_max),
        );
        em.push(
            Family::BatteryPower,
            Some(i),
            ConeKind::NonNeg,
            power_rows(cf_batt, clam, batt.power_min, batt.power_max),
        );
        em.push(
            Family::FuelCellPower,
            Some(i),
            ConeKind::NonNeg,
            power_rows(cf_fc, clam, veh.fuel_cell_power_min, veh.fuel_cell_power_max),
        );

        // With v, lambda_v and z all fixed on a stop the two hyperbolic
        // constraints reduce to equalities.
        if running {
            let k1 = v_ref;
            em.rotated(
                Family::Relaxed1,
                i,
                vec![AffineRow::constant(1.0)],
                var(cv).scaled(1.0 / k1),
                var(clam).scaled(k1),
            );
            em.rotated(
                Family::Relaxed2,
                i,
                vec![var(cv)],
                var(cz).scaled(1.0 / v_ref),
                AffineRow::constant(v_ref),
            );
        } else {
            em.eq(Family::Relaxed1, Some(i), AffineRow::new(vec![(clam, vs)], -1.0));
            em.eq(Family::Relaxed2, Some(i), AffineRow::new(vec![(cv, 1.0)], -vs));
        }

        // q_m(F_m, z) + P_aux lambda_v <= F_fc + F_batt
        let slack = AffineRow::new(
            vec![
                (cf_fc, 1.0),
                (cf_batt, 1.0),
                (cz, -motor.p10),
                (cf_m, -motor.p01),
                (clam, -veh.aux_power),
            ],
            -motor.p00,
        );
        let mut w = Vec::new();
        if motor.p20 > 0.0 {
            w.push(AffineRow::new(vec![(cz, motor.p20.sqrt())], 0.0));
        }
        if motor.p02 > 0.0 {
            w.push(AffineRow::new(vec![(cf_m, motor.p02.sqrt())], 0.0));
        }
        let kappa = force_ref.sqrt();
        em.rotated(Family::Relaxed3, i, w, slack.scaled(1.0 / kappa), AffineRow::constant(kappa));

        // alpha F_batt^2 ds <= lambda_zeta lambda_v
        let k4 = (lam_ref / dzeta_ref).sqrt();
        let w = if alpha > 0.0 { vec![AffineRow::new(vec![(cf_batt, (alpha * ds).sqrt())], 0.0)] } else { vec![] };
        em.rotated(Family::Relaxed4, i, w, var(clz).scaled(k4), var(clam).scaled(1.0 / k4));

        let mut cuts = mccormick_cooling_rows((t_lo, t_hi), (box_lam_lo, box_lam_hi), h);
        if cuts.len() == 2 {
            match cbox.cut {
                CutChoice::Both => {}
                CutChoice::Lower => drop(cuts.pop()),
                CutChoice::Upper => drop(cuts.remove(0)),
            }
        }
        let cuts = cuts
            .into_iter()
            .map(|r| AffineRow::new(vec![(clam, r.coef_lambda), (l.temp(i), r.coef_t), (clt, -1.0)], r.constant))
            .collect();
        em.push(Family::Relaxed5, Some(i), ConeKind::NonNeg, cuts);
        em.push(
            Family::Relaxed6,
            Some(i),
            ConeKind::NonNeg,
            vec![AffineRow::new(vec![(cf_batt, 1.0), (cchr, -1.0)], 0.0)],
        );
        em.push(
            Family::Relaxed7,
            Some(i),
            ConeKind::NonNeg,
            vec![AffineRow::new(vec![(cdis, 1.0), (cf_batt, -1.0)], 0.0)],
        );

        // fuel and cooling cost with the quadratic part in an epigraph
        cost[cz] += ds * fuel.p10;
        cost[cf_fc] += ds * fuel.p01;
        cost[cf_act] += ds * inst.weights.cooling_weight;
        cost[epi(i)] += ds;
        cost_constant += ds * fuel.p00;
        let e_ref = (fuel.p20 * (v_hi * v_hi).powi(2) + fuel.p02 * force_ref * force_ref).max(1.0);
        scale[epi(i)] = e_ref;
        let mut w = Vec::new();
        if fuel.p20 > 0.0 {
            w.push(AffineRow::new(vec![(cz, fuel.p20.sqrt())], 0.0));
        }
        if fuel.p02 > 0.0 {
            w.push(AffineRow::new(vec![(cf_fc, fuel.p02.sqrt())], 0.0));
        }
        let ke = e_ref.sqrt();
        em.rotated(Family::ObjectiveEpigraph, i, w, var(epi(i)).scaled(1.0 / ke), AffineRow::constant(ke));

        let eps = inst.options.tie_break * ds;
        if eps > 0.0 {
            tie_break.extend([(cdis, eps), (cchr, -eps), (clt, -eps)]);
        }
        objective_terms.push(ObjectiveTerm { width: ds, z: cz, f_fc: cf_fc, f_act: cf_act });
    }

    let mut last = Vec::new();
    box_rows(&mut last, l.zeta(n), batt.soc_min, batt.soc_max);
    box_rows(&mut last, l.temp(n), t_floor, t_max);
    em.push(Family::Bounds, Some(n), ConeKind::NonNeg, last);
    em.eq(Family::TerminalStop, None, AffineRow::new(vec![(l.z(n), 1.0)], -zs));
    em.eq(
        Family::ChargeSustaining,
        None,
        AffineRow::new(vec![(l.zeta(n), 1.0), (l.zeta(0), -1.0)], 0.0),
    );
    em.eq(
        Family::JourneyTime,
        None,
        AffineRow::new(
            grid.intervals.iter().enumerate().map(|(i, iv)| (l.lam_v(i), iv.width)).collect(),
            -spec.target_time,
        ),
    );

    Ok(ConeProgram {
        layout: l,
        n_vars,
        var_scale: scale,
        cost,
        cost_constant,
        tie_break,
        blocks: em.blocks,
        objective_terms,
        fuel,
        cooling_weight: inst.weights.cooling_weight,
    })
}
