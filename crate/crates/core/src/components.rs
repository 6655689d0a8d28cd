//! Physical powertrain parameters and the exact component models.
//!
//! These are the non-surrogate models: the square-root state-of-charge law of
//! a fixed-voltage, fixed-resistance battery, its terminal voltage and
//! efficiency, and tabulated motor and fuel-cell efficiency maps. They feed the
//! surrogate fits, the forward simulator and the dynamic-programming oracle.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack accepted on the `P <= U_oc^2/(4R)` validity edge.
const EDGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryParams {
    /// Open-circuit voltage (V).
    pub open_circuit_voltage: f64,
    /// Internal resistance (ohm).
    pub internal_resistance: f64,
    /// Charge capacity (Ah).
    pub capacity_ah: f64,
    /// Lumped thermal mass (kg).
    pub mass: f64,
    /// Specific heat capacity (J/(kg K)).
    pub specific_heat: f64,
    /// Heat transfer rate to ambient (W/K).
    pub heat_transfer: f64,
    /// Average discharging efficiency; derived from the exact model if absent.
    #[serde(default)]
    pub eta_dis: Option<f64>,
    /// Average charging efficiency; derived from the exact model if absent.
    #[serde(default)]
    pub eta_chr: Option<f64>,
    pub ambient_temperature: f64,
    pub max_temperature: f64,
    /// Electric power bounds (W); negative is charging.
    pub power_min: f64,
    pub power_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Active-cooling capacity in heat per metre travelled (J/m).
    pub cooling_max: f64,
}

impl BatteryParams {
    /// Desk-scale placeholder pack. Not measured data.
    pub fn desk_scale() -> Self {
        BatteryParams {
            open_circuit_voltage: 600.0,
            internal_resistance: 0.1,
            capacity_ah: 40.0,
            mass: 800.0,
            specific_heat: 1000.0,
            heat_transfer: 15.0,
            eta_dis: None,
            eta_chr: None,
            ambient_temperature: 293.0,
            max_temperature: 313.0,
            power_min: -300e3,
            power_max: 300e3,
            soc_min: 0.3,
            soc_max: 0.9,
            cooling_max: 2000.0,
        }
    }

    pub fn validity_bound(&self) -> f64 {
        let u = self.open_circuit_voltage;
        u * u / (4.0 * self.internal_resistance)
    }

    pub fn thermal_capacity(&self) -> f64 {
        self.mass * self.specific_heat
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("open_circuit_voltage", self.open_circuit_voltage),
            ("internal_resistance", self.internal_resistance),
            ("capacity_ah", self.capacity_ah),
            ("mass", self.mass),
            ("specific_heat", self.specific_heat),
            ("heat_transfer", self.heat_transfer),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("battery.{name}"), "must be positive"));
            }
        }
        for (name, eta) in [("eta_dis", self.eta_dis), ("eta_chr", self.eta_chr)] {
            if let Some(e) = eta {
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::invalid(format!("battery.{name}"), "must lie in (0, 1)"));
                }
            }
        }
        if !(self.ambient_temperature >= 0.0 && self.ambient_temperature <= self.max_temperature) {
            return Err(Error::invalid("battery.ambient_temperature", "need 0 <= T_amb <= T_max"));
        }
        if !(self.power_min < 0.0 && self.power_max > 0.0) {
            return Err(Error::invalid("battery.power_min/power_max", "need P_min < 0 < P_max"));
        }
        if self.power_max > self.validity_bound() {
            return Err(Error::invalid(
                "battery.power_max",
                format!("exceeds U_oc^2/(4R) = {} W", self.validity_bound()),
            ));
        }
        if !(self.soc_min >= 0.0 && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::invalid("battery.soc_min/soc_max", "need 0 <= soc_min < soc_max <= 1"));
        }
        if !(self.cooling_max.is_finite() && self.cooling_max >= 0.0) {
            return Err(Error::invalid("battery.cooling_max", "must be non-negative"));
        }
        Ok(())
    }

    fn check_power(&self, p: f64) -> Result<f64> {
        let bound = self.validity_bound();
        if !p.is_finite() || p > bound * (1.0 + EDGE_TOL) {
            return Err(Error::PowerBound { power: p, bound });
        }
        let u = self.open_circuit_voltage;
        Ok((u * u - 4.0 * p * self.internal_resistance).max(0.0).sqrt())
    }

    /// Battery current (A) drawn for electric output `p` (W).
    pub fn current(&self, p: f64) -> Result<f64> {
        let root = self.check_power(p)?;
        Ok((self.open_circuit_voltage - root) / (2.0 * self.internal_resistance))
    }

    /// Inverse of [`Self::current`]: terminal power for a given current.
    pub fn power_for_current(&self, current: f64) -> f64 {
        current * (self.open_circuit_voltage - current * self.internal_resistance)
    }

    /// Current that moves the state of charge by `delta_soc` over `dt` seconds.
    pub fn current_for_delta_soc(&self, delta_soc: f64, dt: f64) -> f64 {
        delta_soc * 3600.0 * self.capacity_ah / dt
    }

    /// Effective average efficiencies, falling back to the energy-weighted
    /// averages of the exact model.
    pub fn average_efficiencies(&self) -> (f64, f64) {
        let (dis, chr) = energy_weighted_efficiencies(self);
        (self.eta_dis.unwrap_or(dis), self.eta_chr.unwrap_or(chr))
    }
}

/// State-of-charge drop over `dt` seconds at constant electric output `p`.
pub fn exact_delta_zeta(batt: &BatteryParams, p: f64, dt: f64) -> Result<f64> {
    Ok(batt.current(p)? / (3600.0 * batt.capacity_ah) * dt)
}

pub fn terminal_voltage(batt: &BatteryParams, p: f64) -> Result<f64> {
    let root = batt.check_power(p)?;
    Ok(0.5 * (batt.open_circuit_voltage + root))
}

/// `U_batt/U_oc` when discharging, `U_oc/U_batt` when charging.
pub fn exact_battery_efficiency(batt: &BatteryParams, p: f64) -> Result<f64> {
    let u = terminal_voltage(batt, p)?;
    Ok(if p >= 0.0 {
        u / batt.open_circuit_voltage
    } else {
        batt.open_circuit_voltage / u
    })
}

/// Energy-weighted mean efficiency over `[0, P_max]` and `[P_min, 0]`, each
/// sample weighted by `|P|`.
pub fn energy_weighted_efficiencies(batt: &BatteryParams) -> (f64, f64) {
    let avg = |lo: f64, hi: f64| {
        let n = 2000;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..=n {
            let p = lo + (hi - lo) * k as f64 / n as f64;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 } * p.abs();
            let eta = exact_battery_efficiency(batt, p).unwrap_or(1.0);
            num += w * eta;
            den += w;
        }
        num / den
    };
    (avg(0.0, batt.power_max), avg(batt.power_min, 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    /// Mass including rotating inertia.
    pub equivalent_mass: f64,
    #[serde(default = "VehicleParams::default_gravity")]
    pub gravity: f64,
    pub aux_power: f64,
    pub motor_force_min: f64,
    pub motor_force_max: f64,
    pub motor_power_min: f64,
    pub motor_power_max: f64,
    pub brake_force_min: f64,
    pub fuel_cell_power_min: f64,
    pub fuel_cell_power_max: f64,
}

impl VehicleParams {
    fn default_gravity() -> f64 {
        9.81
    }

    /// Desk-scale placeholder vehicle. Not measured data.
    pub fn desk_scale() -> Self {
        VehicleParams {
            mass: 100e3,
            equivalent_mass: 105e3,
            gravity: 9.81,
            aux_power: 40e3,
            motor_force_min: -100e3,
            motor_force_max: 100e3,
            motor_power_min: -800e3,
            motor_power_max: 800e3,
            brake_force_min: -150e3,
            fuel_cell_power_min: 0.0,
            fuel_cell_power_max: 400e3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.equivalent_mass >= self.mass) {
            return Err(Error::invalid("vehicle.mass", "need m_eq >= m > 0"));
        }
        if !(self.gravity > 0.0) {
            return Err(Error::invalid("vehicle.gravity", "must be positive"));
        }
        if !(self.aux_power >= 0.0) {
            return Err(Error::invalid("vehicle.aux_power", "must be non-negative"));
        }
        if !(self.motor_force_min < 0.0 && 0.0 < self.motor_force_max) {
            return Err(Error::invalid("vehicle.motor_force", "need F_m_min < 0 < F_m_max"));
        }
        if !(self.motor_power_min < 0.0 && 0.0 < self.motor_power_max) {
            return Err(Error::invalid("vehicle.motor_power", "need P_m_min < 0 < P_m_max"));
        }
        if !(self.brake_force_min < 0.0) {
            return Err(Error::invalid("vehicle.brake_force_min", "must be negative"));
        }
        if !(0.0 <= self.fuel_cell_power_min && self.fuel_cell_power_min < self.fuel_cell_power_max) {
            return Err(Error::invalid("vehicle.fuel_cell_power", "need 0 <= P_fc_min < P_fc_max"));
        }
        Ok(())
    }
}

/// Tabulated efficiency over (force, speed), bilinearly interpolated and
/// clamped at the table edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyMap {
    pub axis_force: Vec<f64>,
    pub axis_speed: Vec<f64>,
    /// Row-major: `efficiency[i][j]` at `axis_force[i]`, `axis_speed[j]`.
    pub efficiency: Vec<Vec<f64>>,
    #[serde(default)]
    pub regen: RegenConvention,
}

/// Electric energy of a negative (regenerating) force.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegenConvention {
    /// `F/eta` on both branches: one smooth surface through zero.
    #[default]
    Reciprocal,
    /// `F*eta` when regenerating: losses on both branches, with a kink at
    /// zero force.
    Product,
}

impl EfficiencyMap {
    pub fn constant(eta: f64, axis_force: Vec<f64>, axis_speed: Vec<f64>) -> Self {
        let efficiency = vec![vec![eta; axis_speed.len()]; axis_force.len()];
        EfficiencyMap { axis_force, axis_speed, efficiency, regen: RegenConvention::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("axis_force", &self.axis_force), ("axis_speed", &self.axis_speed)] {
            if axis.is_empty() {
                return Err(Error::invalid(name, "must not be empty"));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(name, "must be strictly increasing"));
            }
        }
        if self.efficiency.len() != self.axis_force.len()
            || self.efficiency.iter().any(|r| r.len() != self.axis_speed.len())
        {
            return Err(Error::invalid("efficiency", "table dimensions do not match axes"));
        }
        if self.efficiency.iter().flatten().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::invalid("efficiency", "entries must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn max_efficiency(&self) -> f64 {
        self.efficiency.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn efficiency_at(&self, force: f64, speed: f64) -> f64 {
        let (i0, i1, wf) = bracket(&self.axis_force, force);
        let (j0, j1, wv) = bracket(&self.axis_speed, speed);
        let e = &self.efficiency;
        let lo = e[i0][j0] * (1.0 - wv) + e[i0][j1] * wv;
        let hi = e[i1][j0] * (1.0 - wv) + e[i1][j1] * wv;
        lo * (1.0 - wf) + hi * wf
    }

    /// Electric energy per metre for a mechanical force; see
    /// [`RegenConvention`] for negative forces.
    pub fn electric_per_metre(&self, force: f64, speed: f64) -> f64 {
        let eta = self.efficiency_at(force, speed);
        if force < 0.0 && self.regen == RegenConvention::Product {
            force * eta
        } else {
            force / eta
        }
    }

    /// Fuel energy per metre for an electric output force (`F/eta`).
    pub fn input_per_metre(&self, force: f64, speed: f64) -> f64 {
        force / self.efficiency_at(force, speed)
    }

    /// Discrete concavity of every efficiency-vs-power slice (one per speed
    /// column and sign of force) restricted to `|F v| <= power_limit`.
    pub fn slices_concave(&self, power_limit: f64, tol: f64) -> bool {
        for (j, &v) in self.axis_speed.iter().enumerate() {
            for positive in [true, false] {
                let pts: Vec<(f64, f64)> = self
                    .axis_force
                    .iter()
                    .enumerate()
                    .filter(|(_, &f)| if positive { f >= 0.0 } else { f <= 0.0 })
                    .filter(|(_, &f)| (f * v).abs() <= power_limit)
                    .map(|(i, &f)| ((f * v).abs(), self.efficiency[i][j]))
                    .collect();
                let mut pts = pts;
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                for w in pts.windows(3) {
                    let (x0, y0) = w[0];
                    let (x1, y1) = w[1];
                    let (x2, y2) = w[2];
                    if x2 - x0 <= 0.0 || x1 - x0 <= 0.0 || x2 - x1 <= 0.0 {
                        continue;
                    }
                    let s1 = (y1 - y0) / (x1 - x0);
                    let s2 = (y2 - y1) / (x2 - x1);
                    if s2 > s1 + tol {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn bracket(axis: &[f64], x: f64) -> (usize, usize, f64) {
    let n = axis.len();
    if n == 1 || x <= axis[0] {
        return (0, 0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let hi = axis.partition_point(|&a| a <= x).min(n - 1);
    let lo = hi - 1;
    (lo, hi, (x - axis[lo]) / (axis[hi] - axis[lo]))
}

/// Generator for a concave efficiency-vs-power curve sampled on a
/// (force, speed) table. Efficiency rises from `zero_power_efficiency` at
/// standstill power to `peak_efficiency` at `knee_power` with zero slope,
/// then falls linearly to `full_power_efficiency` at `max_power` and is held
/// beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticMapSpec {
    pub peak_efficiency: f64,
    pub knee_power: f64,
    pub zero_power_efficiency: f64,
    pub full_power_efficiency: f64,
    pub max_power: f64,
    pub force_min: f64,
    pub force_max: f64,
    pub force_points: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    pub speed_points: usize,
    /// Multiplicative jitter amplitude drawn from the run seed; 0 disables it.
    #[serde(default)]
    pub noise: f64,
}

impl SyntheticMapSpec {
    pub fn desk_motor() -> Self {
        SyntheticMapSpec {
            peak_efficiency: 0.92,
            knee_power: 150e3,
            zero_power_efficiency: 0.86,
            full_power_efficiency: 0.92,
            max_power: 800e3,
            force_min: -100e3,
            force_max: 100e3,
            force_points: 41,
            speed_min: 1.0,
            speed_max: 35.0,
            speed_points: 35,
            noise: 0.0,
        }
    }

    pub fn desk_fuel_cell() -> Self {
        SyntheticMapSpec {
            peak_efficiency: 0.55,
            knee_power: 120e3,
            zero_power_efficiency: 0.52,
            full_power_efficiency: 0.53,
            max_power: 400e3,
            force_min: 0.0,
            force_max: 60e3,
            force_points: 31,
            speed_min: 2.0,
            speed_max: 35.0,
            speed_points: 34,
            noise: 0.0,
        }
    }

    pub fn efficiency_at_power(&self, power: f64) -> f64 {
        let p = power.abs().min(self.max_power);
        if p <= self.knee_power {
            let x = p / self.knee_power;
            self.zero_power_efficiency + (self.peak_efficiency - self.zero_power_efficiency) * (2.0 * x - x * x)
        } else if self.max_power > self.knee_power {
            let x = (p - self.knee_power) / (self.max_power - self.knee_power);
            self.peak_efficiency - (self.peak_efficiency - self.full_power_efficiency) * x
        } else {
            self.peak_efficiency
        }
    }

    fn validate(&self) -> Result<()> {
        let e = [self.peak_efficiency, self.zero_power_efficiency, self.full_power_efficiency];
        if !(self.peak_efficiency > 0.0 && self.peak_efficiency < 1.0) {
            return Err(Error::invalid("synthetic.peak_efficiency", "must lie in (0, 1)"));
        }
        if e.iter().any(|&x| !(x > 0.0 && x <= self.peak_efficiency)) {
            return Err(Error::invalid("synthetic", "efficiencies must lie in (0, peak]"));
        }
        if !(self.knee_power > 0.0 && self.max_power >= self.knee_power) {
            return Err(Error::invalid("synthetic.knee_power", "need 0 < knee_power <= max_power"));
        }
        if !(self.force_max > self.force_min && self.speed_max > self.speed_min && self.speed_min >= 0.0) {
            return Err(Error::invalid("synthetic", "axis ranges must be increasing"));
        }
        if self.force_points < 2 || self.speed_points < 2 {
            return Err(Error::invalid("synthetic", "need at least two points per axis"));
        }
        if !(self.noise >= 0.0 && self.noise < 0.5) {
            return Err(Error::invalid("synthetic.noise", "must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Builds a synthetic efficiency table.
pub fn synth_map(spec: &SyntheticMapSpec, seed: u64) -> Result<EfficiencyMap> {
    spec.validate()?;
    let axis_force = linspace(spec.force_min, spec.force_max, spec.force_points);
    let axis_speed = linspace(spec.speed_min, spec.speed_max, spec.speed_points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let efficiency = axis_force
        .iter()
        .map(|&f| {
            axis_speed
                .iter()
                .map(|&v| {
                    let eta = spec.efficiency_at_power(f * v);
                    if spec.noise > 0.0 {
                        let jitter: f64 = rng.gen_range(-spec.noise..=spec.noise);
                        (eta * (1.0 + jitter)).min(1.0)
                    } else {
                        eta
                    }
                })
                .collect()
        })
        .collect();
    let map = EfficiencyMap { axis_force, axis_speed, efficiency, regen: RegenConvention::default() };
    map.validate()?;
    Ok(map)
}

/// Motor map; shape parameters come from `spec`.
pub fn synth_motor_map(spec: &SyntheticMapSpec, seed: u64) -> Result<EfficiencyMap> {
    synth_map(spec, seed)
}

pub fn synth_fuel_cell_map(spec: &SyntheticMapSpec, seed: u64) -> Result<EfficiencyMap> {
    synth_map(spec, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    Table {
        axis_force: Vec<f64>,
        axis_speed: Vec<f64>,
        efficiency: Vec<Vec<f64>>,
    },
    Synthetic(SyntheticMapSpec),
}

impl MapSource {
    pub fn realise(&self, seed: u64) -> Result<EfficiencyMap> {
        match self {
            MapSource::Table { axis_force, axis_speed, efficiency } => {
                let map = EfficiencyMap {
                    axis_force: axis_force.clone(),
                    axis_speed: axis_speed.clone(),
                    efficiency: efficiency.clone(),
                    regen: RegenConvention::default(),
                };
                map.validate()?;
                Ok(map)
            }
            MapSource::Synthetic(spec) => synth_map(spec, seed),
        }
    }
}

pub const COMPONENT_SCHEMA_VERSION: u32 = 1;

/// The component file: battery, vehicle and both efficiency maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentFile {
    pub schema_version: u32,
    /// Free-form provenance note, e.g. "engineering placeholders".
    #[serde(default)]
    pub note: Option<String>,
    pub battery: BatteryParams,
    pub vehicle: VehicleParams,
    pub motor_map: MapSource,
    pub fuelcell_map: MapSource,
    #[serde(default)]
    pub motor_regen: RegenConvention,
}

/// Parameters with both maps realised.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub battery: BatteryParams,
    pub vehicle: VehicleParams,
    pub motor_map: EfficiencyMap,
    pub fuel_cell_map: EfficiencyMap,
}

impl ComponentFile {
    pub fn desk_scale() -> Self {
        ComponentFile {
            schema_version: COMPONENT_SCHEMA_VERSION,
            note: Some("engineering placeholders, not measured data".into()),
            battery: BatteryParams::desk_scale(),
            vehicle: VehicleParams::desk_scale(),
            motor_map: MapSource::Synthetic(SyntheticMapSpec::desk_motor()),
            fuelcell_map: MapSource::Synthetic(SyntheticMapSpec::desk_fuel_cell()),
            motor_regen: RegenConvention::Reciprocal,
        }
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let file: ComponentFile = serde_json::from_str(text).map_err(|source| Error::Json {
            context: context.to_string(),
            source,
        })?;
        if file.schema_version != COMPONENT_SCHEMA_VERSION {
            return Err(Error::Schema {
                context: context.to_string(),
                msg: format!("unsupported schema_version {}", file.schema_version),
            });
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn realise(&self, seed: u64) -> Result<Components> {
        self.battery.validate()?;
        self.vehicle.validate()?;
        Ok(Components {
            battery: self.battery.clone(),
            vehicle: self.vehicle.clone(),
            motor_map: EfficiencyMap { regen: self.motor_regen, ..self.motor_map.realise(seed)? },
            fuel_cell_map: self.fuelcell_map.realise(seed)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn batt() -> BatteryParams {
        BatteryParams::desk_scale()
    }

    #[test]
    fn delta_zeta_examples() {
        let b = batt();
        assert_eq!(exact_delta_zeta(&b, 0.0, 1.0).unwrap(), 0.0);
        // discriminant zero: I = U/(2R) = 3000 A over 144000 C
        let edge = exact_delta_zeta(&b, 900e3, 1.0).unwrap();
        assert_relative_eq!(edge, 3000.0 / 144000.0, max_relative = 1e-12);
        let chg = exact_delta_zeta(&b, -100e3, 1.0).unwrap();
        let expected = (600.0 - 400000f64.sqrt()) / (0.2 * 144000.0);
        assert_relative_eq!(chg, expected, max_relative = 1e-12);
        assert_relative_eq!(chg, -1.1269e-3, max_relative = 1e-4);
        assert!(matches!(exact_delta_zeta(&b, 901e3, 1.0), Err(Error::PowerBound { .. })));
    }

    #[test]
    fn terminal_voltage_and_efficiency_examples() {
        let b = batt();
        assert_eq!(terminal_voltage(&b, 0.0).unwrap(), 600.0);
        assert_relative_eq!(terminal_voltage(&b, 900e3).unwrap(), 300.0, max_relative = 1e-12);
        assert_relative_eq!(terminal_voltage(&b, -100e3).unwrap(), 616.2278, max_relative = 1e-6);
        assert_eq!(exact_battery_efficiency(&b, 0.0).unwrap(), 1.0);
        assert_relative_eq!(exact_battery_efficiency(&b, 900e3).unwrap(), 0.5, max_relative = 1e-12);
        assert_relative_eq!(exact_battery_efficiency(&b, -100e3).unwrap(), 0.97367, max_relative = 1e-5);
        assert!(terminal_voltage(&b, 1e6).is_err());
        assert!(exact_battery_efficiency(&b, 1e6).is_err());
    }

    #[test]
    fn current_round_trip() {
        let b = batt();
        for p in [-300e3, -1e3, 0.0, 5e3, 250e3] {
            let i = b.current(p).unwrap();
            assert_relative_eq!(b.power_for_current(i), p, epsilon = 1e-6);
        }
    }

    #[test]
    fn average_efficiencies_are_between_edge_and_one() {
        let b = batt();
        let (dis, chr) = b.average_efficiencies();
        let at_max = exact_battery_efficiency(&b, b.power_max).unwrap();
        let at_min = exact_battery_efficiency(&b, b.power_min).unwrap();
        assert!(dis < 1.0 && dis > at_max, "{dis}");
        assert!(chr < 1.0 && chr > at_min, "{chr}");
        let mut fixed = b.clone();
        fixed.eta_dis = Some(0.9);
        assert_eq!(fixed.average_efficiencies().0, 0.9);
    }

    #[test]
    fn validation_catches_bad_params() {
        let mut b = batt();
        b.power_max = 1e6;
        assert!(b.validate().is_err());
        let mut b = batt();
        b.ambient_temperature = 400.0;
        assert!(b.validate().is_err());
        let mut v = VehicleParams::desk_scale();
        v.equivalent_mass = 1.0;
        assert!(v.validate().is_err());
        assert!(batt().validate().is_ok());
        assert!(VehicleParams::desk_scale().validate().is_ok());
    }

    #[test]
    fn synthetic_motor_map_properties() {
        let spec = SyntheticMapSpec { peak_efficiency: 0.9, full_power_efficiency: 0.9, ..SyntheticMapSpec::desk_motor() };
        let map = synth_motor_map(&spec, 0).unwrap();
        assert!((map.max_efficiency() - 0.9).abs() < 1e-12);
        assert!(map.slices_concave(spec.max_power, 1e-12));
        let zero_row = map.axis_force.iter().position(|&f| f == 0.0).unwrap();
        assert!(map.efficiency[zero_row].iter().all(|&e| e.is_finite() && e > 0.0));
        assert!(SyntheticMapSpec { peak_efficiency: 1.2, ..spec }.validate().is_err());
    }

    #[test]
    fn fuel_cell_map_concave_and_seed_noise_is_deterministic() {
        let spec = SyntheticMapSpec::desk_fuel_cell();
        let map = synth_fuel_cell_map(&spec, 1).unwrap();
        assert!(map.slices_concave(spec.max_power, 1e-12));
        let noisy = SyntheticMapSpec { noise: 0.01, ..spec };
        assert_eq!(synth_map(&noisy, 7).unwrap(), synth_map(&noisy, 7).unwrap());
        assert_ne!(synth_map(&noisy, 7).unwrap(), synth_map(&noisy, 8).unwrap());
    }

    #[test]
    fn bilinear_interpolation() {
        let map = EfficiencyMap {
            axis_force: vec![0.0, 10.0],
            axis_speed: vec![0.0, 1.0],
            efficiency: vec![vec![0.5, 0.7], vec![0.9, 0.9]],
            regen: RegenConvention::Product,
        };
        assert_relative_eq!(map.efficiency_at(5.0, 0.5), 0.75, epsilon = 1e-12);
        assert_relative_eq!(map.efficiency_at(-5.0, 2.0), 0.7, epsilon = 1e-12);
        assert_relative_eq!(map.electric_per_metre(-10.0, 0.0), -5.0, epsilon = 1e-12);
        let map = EfficiencyMap { regen: RegenConvention::Reciprocal, ..map };
        assert_relative_eq!(map.electric_per_metre(-10.0, 0.0), -20.0, epsilon = 1e-12);
    }

    #[test]
    fn component_file_json_round_trip_and_strictness() {
        let file = ComponentFile::desk_scale();
        let text = serde_json::to_string_pretty(&file).unwrap();
        assert_eq!(ComponentFile::from_json(&text, "x").unwrap(), file);
        let bad = text.replacen("\"battery\"", "\"battery_typo\"", 1);
        assert!(ComponentFile::from_json(&bad, "x").is_err());
        let comps = file.realise(0).unwrap();
        assert!(comps.motor_map.validate().is_ok());
    }
}
