//! Run configuration, read from one TOML file.
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hytrain::dp::DpConfig;
use hytrain::program::{BuildOptions, Weights};
use hytrain::solver::{RefineSettings, SolverSettings};
use hytrain::surrogate::FitConfig;
use hytrain::track::JourneySpec;
use hytrain::validate::{AuditTolerances, DivergenceThresholds, SimulationOptions};

use crate::InputError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub track: PathBuf,
    pub components: PathBuf,
    /// Surrogate artifact from an earlier `fit`; fitted inline when absent.
    #[serde(default)]
    pub surrogates: Option<PathBuf>,
    /// Target interval width (m).
    pub base_step: f64,
    /// Only affects synthetic efficiency maps.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub journey: Journey,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub build: BuildOptions,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub refine: RefineSettings,
    #[serde(default)]
    pub audit: AuditTolerances,
    #[serde(default)]
    pub simulation: SimulationOptions,
    #[serde(default)]
    pub thresholds: DivergenceThresholds,
    #[serde(default)]
    pub dp: Option<DpConfig>,
}

/// Journey targets. Same fields as [`JourneySpec`], parsed strictly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Journey {
    pub target_time: f64,
    pub initial_z: f64,
    pub initial_soc: f64,
    pub initial_temperature: f64,
    #[serde(default = "default_z_stop")]
    pub z_stop: f64,
    pub v_min: f64,
}

fn default_z_stop() -> f64 {
    JourneySpec::DEFAULT_Z_STOP
}

impl From<&Journey> for JourneySpec {
    fn from(j: &Journey) -> Self {
        JourneySpec {
            target_time: j.target_time,
            initial_z: j.initial_z,
            initial_soc: j.initial_soc,
            initial_temperature: j.initial_temperature,
            z_stop: j.z_stop,
            v_min: j.v_min,
        }
    }
}

/// Scalars given on the command line take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| InputError(format!("{origin}: {e}")))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(InputError(format!("{origin}: unsupported schema_version {}", cfg.schema_version)).into());
        }
        Ok(cfg)
    }

    /// Reads the file, applies overrides and makes every path absolute.
    pub fn load(path: &Path, ov: &Overrides) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.track = base.join(&cfg.track);
        cfg.components = base.join(&cfg.components);
        cfg.surrogates = cfg.surrogates.map(|p| base.join(p));
        cfg.out = cfg.out.map(|p| base.join(p));
        if let Some(out) = &ov.out {
            cfg.out = Some(out.clone());
        }
        if let Some(tol) = ov.tol {
            cfg.solver.tol = tol;
        }
        if let Some(seed) = ov.seed {
            cfg.seed = seed;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> anyhow::Result<()> {
        for (what, p) in [("track", &self.track), ("components", &self.components)] {
            if !p.is_file() {
                return Err(InputError(format!("{what} file {} does not exist", p.display())).into());
            }
        }
        if let Some(p) = &self.surrogates {
            if !p.is_file() {
                return Err(InputError(format!("surrogate file {} does not exist", p.display())).into());
            }
        }
        if !(self.base_step.is_finite() && self.base_step > 0.0) {
            return Err(InputError("base_step must be positive".into()).into());
        }
        if !(self.solver.tol.is_finite() && self.solver.tol > 0.0) {
            return Err(InputError("solver tolerance must be positive".into()).into());
        }
        Ok(())
    }

    /// Creates the output directory on first use.
    pub fn out_dir(&self) -> anyhow::Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .ok_or_else(|| InputError("no output directory: set `out` in the config or pass --out".into()))?;
        std::fs::create_dir_all(&dir)
            .map_err(|e| InputError(format!("output directory {} is not writable: {e}", dir.display())))?;
        Ok(dir)
    }

    pub fn journey_spec(&self) -> JourneySpec {
        JourneySpec::from(&self.journey)
    }

    pub fn dp_config(&self) -> DpConfig {
        self.dp.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
track = "t.track"
components = "c.json"
base_step = 50.0

[journey]
target_time = 600.0
initial_z = 0.01
initial_soc = 0.6
initial_temperature = 298.0
v_min = 1.0
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse(MINIMAL, "t").unwrap();
        assert_eq!(cfg.solver, SolverSettings::default());
        assert_eq!(cfg.journey.z_stop, JourneySpec::DEFAULT_Z_STOP);
        assert!(cfg.dp.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(RunConfig::parse(&text, "t").is_err());
        let text = MINIMAL.replace("v_min = 1.0", "v_min = 1.0\nvmax = 3.0");
        assert!(RunConfig::parse(&text, "t").is_err());
        let text = format!("{MINIMAL}\n[solver]\ntolerance = 1e-6\n");
        assert!(RunConfig::parse(&text, "t").is_err());
    }

    #[test]
    fn schema_version_checked() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        let err = RunConfig::parse(&text, "t").unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let text = format!("{MINIMAL}\n[dp]\nn_v = 11\n[thresholds]\ntemperature = 0.0\n");
        let cfg = RunConfig::parse(&text, "t").unwrap();
        let dp = cfg.dp_config();
        assert_eq!(dp.n_v, 11);
        assert_eq!(dp.n_t, DpConfig::default().n_t);
        assert_eq!(cfg.thresholds.temperature, 0.0);
    }
}
