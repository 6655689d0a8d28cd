//! Assembly of the relaxed program into solver-agnostic conic form.

mod builder;
mod export;
mod layout;
mod mccormick;

pub use builder::{build, AffineRow, Census, ConeBlock, ConeKind, ConeProgram, Family, ObjectiveTerm};
pub use export::write_sparse_text;
pub use layout::{VarKind, VariableLayout};
pub use mccormick::{mccormick_cooling_rows, McCormickRow};

use serde::{Deserialize, Serialize};

use crate::components::{BatteryParams, Components, VehicleParams};
use crate::error::{Error, Result};
use crate::surrogate::Surrogates;
use crate::track::{Davis, JourneySpec, SpatialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    /// Cost of one joule of active cooling relative to one joule of fuel.
    pub cooling_weight: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { cooling_weight: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureFloor {
    /// `T >= 0`.
    Zero,
    /// `T >= min(T_amb, T_0)`; tightens the cooling cuts.
    Passive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildOptions {
    pub temperature_floor: TemperatureFloor,
    /// Weight, relative to one joule, on `F_dis - F_chr - lambda_T`.
    /// Selects the least-heat point where the thermal rows leave slack.
    pub tie_break: f64,
    /// Reject `tau` below the speed-limit bound before solving.
    pub min_time_screen: bool,
    /// Per-interval boxes for refined cooling cuts. The boxes also become
    /// variable bounds.
    pub cooling_boxes: Option<Vec<CoolingBox>>,
}

/// Which McCormick cut to emit for an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutChoice {
    Both,
    /// Cut through the `(T_lo, lambda_lo)` corner only.
    Lower,
    /// Cut through the `(T_hi, lambda_hi)` corner only.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingBox {
    pub t_lo: f64,
    pub t_hi: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub cut: CutChoice,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            temperature_floor: TemperatureFloor::Passive,
            tie_break: 1e-4,
            min_time_screen: true,
            cooling_boxes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub grid: SpatialGrid,
    pub spec: JourneySpec,
    pub davis: Davis,
    pub vehicle: VehicleParams,
    pub battery: BatteryParams,
    pub surrogates: Surrogates,
    pub weights: Weights,
    pub options: BuildOptions,
}

impl ProblemInstance {
    pub fn new(
        grid: SpatialGrid,
        spec: JourneySpec,
        davis: Davis,
        components: &Components,
        surrogates: Surrogates,
        weights: Weights,
    ) -> Self {
        ProblemInstance {
            grid,
            spec,
            davis,
            vehicle: components.vehicle.clone(),
            battery: components.battery.clone(),
            surrogates,
            weights,
            options: BuildOptions::default(),
        }
    }

    pub fn eta_dis_chr(&self) -> (f64, f64) {
        self.battery.average_efficiencies()
    }

    pub fn temperature_floor(&self) -> f64 {
        match self.options.temperature_floor {
            TemperatureFloor::Zero => 0.0,
            TemperatureFloor::Passive => self.battery.ambient_temperature.min(self.spec.initial_temperature),
        }
    }

    /// `(v_lo, v_hi)` for interval `i`; stops pin the speed at `sqrt(z_stop)`.
    pub fn speed_bounds(&self, i: usize) -> (f64, f64) {
        let iv = &self.grid.intervals[i];
        if iv.is_stop {
            let s = self.spec.stop_speed();
            (s, s)
        } else {
            (self.spec.v_min, iv.speed_limit)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.vehicle.validate()?;
        self.battery.validate()?;
        if self.grid.is_empty() {
            return Err(Error::invalid("grid", "no intervals"));
        }
        self.grid.require_terminal_stop()?;
        if !(self.weights.cooling_weight >= 0.0) {
            return Err(Error::invalid("weights.cooling_weight", "must be non-negative"));
        }
        if !(self.options.tie_break >= 0.0) {
            return Err(Error::invalid("options.tie_break", "must be non-negative"));
        }
        let b = &self.surrogates.battery;
        if b.power_min > self.battery.power_min || b.power_max < self.battery.power_max {
            return Err(Error::invalid("surrogates.battery", "fit domain does not cover the battery power bounds"));
        }
        if let Some(boxes) = &self.options.cooling_boxes {
            if boxes.len() != self.grid.len() {
                return Err(Error::invalid("options.cooling_boxes", "need one box per interval"));
            }
        }
        Ok(())
    }

    /// Screens for bounds that cross before any rows are built.
    pub fn screen(&self) -> Result<()> {
        let spec = &self.spec;
        let batt = &self.battery;
        for (i, iv) in self.grid.intervals.iter().enumerate() {
            if !iv.is_stop && iv.speed_limit < spec.v_min {
                return Err(Error::Infeasible(format!(
                    "interval {i}: speed limit {} m/s below v_min {} m/s",
                    iv.speed_limit, spec.v_min
                )));
            }
        }
        let first = &self.grid.intervals[0];
        if first.is_stop {
            if (spec.initial_z - spec.z_stop).abs() > 1e-12 * spec.z_stop.max(1.0) {
                return Err(Error::Infeasible(format!(
                    "route starts at a station but initial z {} differs from z_stop {}",
                    spec.initial_z, spec.z_stop
                )));
            }
        } else if spec.initial_z < spec.v_min * spec.v_min || spec.initial_z > first.speed_limit * first.speed_limit {
            return Err(Error::Infeasible(format!(
                "initial z {} outside [v_min^2, limit^2] of the first interval",
                spec.initial_z
            )));
        }
        if spec.initial_soc < batt.soc_min || spec.initial_soc > batt.soc_max {
            return Err(Error::Infeasible(format!("initial SOC {} outside [{}, {}]", spec.initial_soc, batt.soc_min, batt.soc_max)));
        }
        if spec.initial_temperature > batt.max_temperature {
            return Err(Error::Infeasible(format!(
                "initial temperature {} K above the {} K bound",
                spec.initial_temperature, batt.max_temperature
            )));
        }
        if self.options.min_time_screen {
            let t_min = min_time_estimate(self);
            if spec.target_time < t_min {
                return Err(Error::Infeasible(format!(
                    "target time {} s below the minimum feasible estimate {t_min} s",
                    spec.target_time
                )));
            }
        }
        Ok(())
    }
}

/// Lower bound on journey time: every running interval at its limit plus the
/// dwell of every stop.
pub fn min_time_estimate(inst: &ProblemInstance) -> f64 {
    inst.grid
        .intervals
        .iter()
        .map(|iv| if iv.is_stop { iv.dwell } else { iv.width / iv.speed_limit })
        .sum()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::components::ComponentFile;
    use crate::surrogate::{fit_all, FitConfig};
    use crate::track::{build_grid, SpeedLimitSample, Station, TrackProfile};

    pub fn components() -> Components {
        ComponentFile::desk_scale().realise(0).unwrap()
    }

    pub fn surrogates(c: &Components) -> Surrogates {
        fit_all(&c.motor_map, &c.fuel_cell_map, &c.vehicle, &c.battery, &FitConfig::default()).unwrap()
    }

    pub fn track(length: f64, limit: f64, stations: Vec<Station>) -> TrackProfile {
        TrackProfile {
            length,
            gradients: vec![],
            speed_limits: vec![SpeedLimitSample { position: 0.0, limit }],
            davis: Davis { a: 1500.0, b: 30.0, c: 6.0 },
            stations,
        }
    }

    pub fn spec(tau: f64) -> JourneySpec {
        JourneySpec {
            target_time: tau,
            initial_z: 0.01,
            initial_soc: 0.6,
            initial_temperature: 293.0,
            z_stop: 0.01,
            v_min: 1.0,
        }
    }

    /// Flat route with stations at both ends.
    pub fn station_to_station(length: f64, step: f64, tau: f64) -> ProblemInstance {
        let stations = vec![Station { position: 0.0, dwell: 20.0 }, Station { position: length, dwell: 20.0 }];
        let t = track(length, 25.0, stations);
        let s = spec(tau);
        let grid = build_grid(&t, step, &s).unwrap();
        let c = components();
        let sur = surrogates(&c);
        ProblemInstance::new(grid, s, t.davis, &c, sur, Weights::default())
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::track::{build_grid, Station};

    #[test]
    fn min_time_from_limits_and_dwell() {
        let c = components();
        let sur = surrogates(&c);
        let s = spec(100.0);
        let t = track(1000.0, 25.0, vec![]);
        let grid = build_grid(&t, 100.0, &s).unwrap();
        let inst = ProblemInstance::new(grid, s.clone(), t.davis, &c, sur, Weights::default());
        assert!((min_time_estimate(&inst) - 40.0).abs() < 1e-12);

        let t = track(1000.0, 25.0, vec![Station { position: 1000.0, dwell: 60.0 }]);
        let grid = build_grid(&t, 100.0, &s).unwrap();
        let inst = ProblemInstance::new(grid, s, t.davis, &c, sur, Weights::default());
        assert!((min_time_estimate(&inst) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn tau_below_estimate_is_infeasible() {
        let mut inst = station_to_station(1000.0, 100.0, 30.0);
        let err = build(&inst).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
        inst.options.min_time_screen = false;
        assert!(build(&inst).is_ok());
    }

    #[test]
    fn route_without_terminal_station_is_rejected() {
        let c = components();
        let s = JourneySpec { initial_z: 100.0, ..spec(100.0) };
        let t = track(1000.0, 25.0, vec![]);
        let grid = build_grid(&t, 100.0, &s).unwrap();
        let inst = ProblemInstance::new(grid, s, t.davis, &c, surrogates(&c), Weights::default());
        let err = build(&inst).unwrap_err();
        assert!(err.to_string().contains("terminal station"), "{err}");
    }
}
