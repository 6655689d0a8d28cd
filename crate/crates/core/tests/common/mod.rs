#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hytrain::components::{ComponentFile, Components};
use hytrain::program::{ProblemInstance, Weights};
use hytrain::surrogate::{fit_all, FitConfig, Surrogates};
use hytrain::track::{build_grid, load_track, JourneySpec};

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn spec(tau: f64, t0: f64) -> JourneySpec {
    JourneySpec {
        target_time: tau,
        initial_z: 0.01,
        initial_soc: 0.6,
        initial_temperature: t0,
        z_stop: 0.01,
        v_min: 1.0,
    }
}

pub fn components(file: &str) -> Components {
    ComponentFile::load(configs().join(file)).unwrap().realise(0).unwrap()
}

pub fn surrogates(c: &Components) -> Surrogates {
    fit_all(&c.motor_map, &c.fuel_cell_map, &c.vehicle, &c.battery, &FitConfig::default()).unwrap()
}

pub fn instance(track: &str, comps: &str, step: f64, spec: JourneySpec) -> (ProblemInstance, Components) {
    let t = load_track(configs().join(track)).unwrap();
    let c = components(comps);
    let grid = build_grid(&t, step, &spec).unwrap();
    let s = surrogates(&c);
    (ProblemInstance::new(grid, spec, t.davis, &c, s, Weights::default()), c)
}

/// 1 km, two stations, 100 m intervals.
pub fn toy(tau: f64) -> (ProblemInstance, Components) {
    instance("toy_1km.track", "toy_components.json", 100.0, spec(tau, 293.0))
}

pub fn flat(tau: f64) -> (ProblemInstance, Components) {
    instance("flat_10km.track", "desk_components.json", 50.0, spec(tau, 293.0))
}

pub fn hilly(tau: f64) -> (ProblemInstance, Components) {
    instance("hilly_10km.track", "desk_components.json", 50.0, spec(tau, 293.0))
}

/// Ambient and initial temperature 305 K against a 305.5 K bound.
pub fn hot(tau: f64) -> (ProblemInstance, Components) {
    instance("flat_10km.track", "hot_components.json", 50.0, spec(tau, 305.0))
}
