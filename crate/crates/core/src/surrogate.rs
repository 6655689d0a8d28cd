//! Convex quadratic surrogates fitted to the exact component models.
//!
//! Motor and fuel cell: `q(F, z) = p00 + p10 z + p01 F + p11 F v + p20 z^2 + p02 F^2`
//! with `v = sqrt(z)`. Battery: `q(P) = alpha P^2 + beta P` per second.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::components::{exact_delta_zeta, BatteryParams, EfficiencyMap, VehicleParams};
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Largest acceptable normalised rms error.
    pub rms_ceiling: f64,
    /// Fit and report `p11`. The cone program never uses it.
    pub allow_cross_term: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { rms_ceiling: 0.05, allow_cross_term: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDomain {
    pub force_min: f64,
    pub force_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSurrogate {
    pub p00: f64,
    pub p10: f64,
    pub p01: f64,
    pub p11: f64,
    pub p20: f64,
    pub p02: f64,
    pub domain: FitDomain,
    /// `sqrt(sum (q - y)^2 / sum y^2)` over the fit samples.
    pub rms_rel_error: f64,
}

impl QuadraticSurrogate {
    pub fn eval(&self, force: f64, z: f64) -> f64 {
        self.p00
            + self.p10 * z
            + self.p01 * force
            + self.p11 * force * z.max(0.0).sqrt()
            + self.p20 * z * z
            + self.p02 * force * force
    }

    /// Copy with the cross term dropped, as used inside the cone program.
    pub fn without_cross_term(&self) -> Self {
        QuadraticSurrogate { p11: 0.0, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdCheck {
    pub psd: bool,
    /// Smallest eigenvalue of `[[2 p20, p11], [p11, 2 p02]]`.
    pub margin: f64,
}

pub fn hessian_psd_check(s: &QuadraticSurrogate) -> PsdCheck {
    let h = Matrix2::new(2.0 * s.p20, s.p11, s.p11, 2.0 * s.p02);
    let margin = h.symmetric_eigenvalues().min();
    PsdCheck { psd: margin >= 0.0 && s.p20 >= 0.0 && s.p02 >= 0.0, margin }
}

/// One fit sample: force, squared speed and target energy per metre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub force: f64,
    pub z: f64,
    pub target: f64,
}

fn row(s: &Sample, cross: bool) -> Vec<f64> {
    let mut r = vec![1.0, s.z, s.force, s.z * s.z, s.force * s.force];
    if cross {
        r.push(s.force * s.z.sqrt());
    }
    r
}

/// Least squares with unit-max column scaling; errors on rank deficiency.
fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let cols = a.ncols();
    let scale: Vec<f64> = (0..cols)
        .map(|j| a.column(j).amax())
        .map(|m| if m > 0.0 { m } else { 1.0 })
        .collect();
    let mut an = a.clone();
    for (j, s) in scale.iter().enumerate() {
        an.column_mut(j).unscale_mut(*s);
    }
    let svd = an.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count();
    if a.nrows() < cols || rank < cols {
        return Err(Error::RankDeficient { rank, columns: cols });
    }
    let x = svd
        .solve(y, RANK_TOL * smax)
        .map_err(|msg| Error::Invalid { field: "least squares".into(), msg: msg.into() })?;
    Ok(DVector::from_iterator(cols, x.iter().zip(&scale).map(|(v, s)| v / s)))
}

fn normalised_rms(samples: &[Sample], f: impl Fn(&Sample) -> f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for s in samples {
        num += (f(s) - s.target).powi(2);
        den += s.target * s.target;
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Fits the quadratic model, projects its quadratic form onto the PSD cone
/// and re-fits the linear part.
pub fn fit_quadratic(samples: &[Sample], cfg: &FitConfig) -> Result<QuadraticSurrogate> {
    let cross = cfg.allow_cross_term;
    let cols = if cross { 6 } else { 5 };
    if samples.is_empty() {
        return Err(Error::RankDeficient { rank: 0, columns: cols });
    }
    let a = DMatrix::from_fn(samples.len(), cols, |i, j| row(&samples[i], cross)[j]);
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.target));
    let c = least_squares(&a, &y)?;
    let (p20, p02, p11) = (c[3], c[4], if cross { c[5] } else { 0.0 });

    let h = Matrix2::new(2.0 * p20, p11, p11, 2.0 * p02);
    let eig = SymmetricEigen::new(h);
    let (p20, p02, p11, c) = if eig.eigenvalues.min() < 0.0 {
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let hp = eig.eigenvectors * Matrix2::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let (p20, p02, p11) = (0.5 * hp[(0, 0)], 0.5 * hp[(1, 1)], if cross { hp[(0, 1)] } else { 0.0 });
        let lin = DMatrix::from_fn(samples.len(), 3, |i, j| row(&samples[i], false)[j]);
        let resid = DVector::from_iterator(
            samples.len(),
            samples
                .iter()
                .map(|s| s.target - p20 * s.z * s.z - p02 * s.force * s.force - p11 * s.force * s.z.sqrt()),
        );
        (p20.max(0.0), p02.max(0.0), p11, least_squares(&lin, &resid)?)
    } else {
        (p20, p02, p11, c)
    };

    let fold = |f: fn(&Sample) -> f64, init: f64, op: fn(f64, f64) -> f64| samples.iter().map(f).fold(init, op);
    let mut s = QuadraticSurrogate {
        p00: c[0],
        p10: c[1],
        p01: c[2],
        p11,
        p20,
        p02,
        domain: FitDomain {
            force_min: fold(|s| s.force, f64::INFINITY, f64::min),
            force_max: fold(|s| s.force, f64::NEG_INFINITY, f64::max),
            z_min: fold(|s| s.z, f64::INFINITY, f64::min),
            z_max: fold(|s| s.z, f64::NEG_INFINITY, f64::max),
        },
        rms_rel_error: 0.0,
    };
    s.rms_rel_error = normalised_rms(samples, |x| s.eval(x.force, x.z));
    Ok(s)
}

fn check_ceiling(s: QuadraticSurrogate, cfg: &FitConfig) -> Result<QuadraticSurrogate> {
    if s.rms_rel_error > cfg.rms_ceiling {
        return Err(Error::FitQuality { rms: s.rms_rel_error, ceiling: cfg.rms_ceiling });
    }
    Ok(s)
}

/// Table points inside the motor envelope, target `F/eta` (traction) or
/// `F*eta` (regeneration).
pub fn motor_samples(map: &EfficiencyMap, vehicle: &VehicleParams) -> Vec<Sample> {
    let mut out = Vec::new();
    for &f in &map.axis_force {
        if f < vehicle.motor_force_min || f > vehicle.motor_force_max {
            continue;
        }
        for &v in &map.axis_speed {
            let p = f * v;
            if v > 0.0 && p >= vehicle.motor_power_min && p <= vehicle.motor_power_max {
                out.push(Sample { force: f, z: v * v, target: map.electric_per_metre(f, v) });
            }
        }
    }
    out
}

pub fn fuel_cell_samples(map: &EfficiencyMap, vehicle: &VehicleParams) -> Vec<Sample> {
    let mut out = Vec::new();
    for &f in &map.axis_force {
        if f < 0.0 {
            continue;
        }
        for &v in &map.axis_speed {
            let p = f * v;
            if v > 0.0 && p >= vehicle.fuel_cell_power_min && p <= vehicle.fuel_cell_power_max {
                out.push(Sample { force: f, z: v * v, target: map.input_per_metre(f, v) });
            }
        }
    }
    out
}

pub fn fit_motor(map: &EfficiencyMap, vehicle: &VehicleParams, cfg: &FitConfig) -> Result<QuadraticSurrogate> {
    map.validate()?;
    check_ceiling(fit_quadratic(&motor_samples(map, vehicle), cfg)?, cfg)
}

pub fn fit_fuelcell(map: &EfficiencyMap, vehicle: &VehicleParams, cfg: &FitConfig) -> Result<QuadraticSurrogate> {
    map.validate()?;
    check_ceiling(fit_quadratic(&fuel_cell_samples(map, vehicle), cfg)?, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySurrogate {
    /// Per second, in SOC fraction per W^2.
    pub alpha: f64,
    /// Per second, in SOC fraction per W.
    pub beta: f64,
    pub power_min: f64,
    pub power_max: f64,
    pub rms_rel_error: f64,
    /// Largest `|q - exact| / |exact|` over the non-zero grid points.
    pub max_rel_error: f64,
}

impl BatterySurrogate {
    pub fn eval(&self, p: f64) -> f64 {
        self.alpha * p * p + self.beta * p
    }
}

pub const BATTERY_FIT_POINTS: usize = 1001;

pub fn fit_battery(batt: &BatteryParams) -> Result<BatterySurrogate> {
    let bound = batt.validity_bound();
    for p in [batt.power_min, batt.power_max] {
        if p > bound {
            return Err(Error::PowerBound { power: p, bound });
        }
    }
    let n = BATTERY_FIT_POINTS;
    let mut pts = Vec::with_capacity(n);
    for k in 0..n {
        let p = batt.power_min + (batt.power_max - batt.power_min) * k as f64 / (n - 1) as f64;
        pts.push((p, exact_delta_zeta(batt, p, 1.0)?));
    }
    // Scale power to O(1) so both columns are comparable.
    let ps = batt.power_max.abs().max(batt.power_min.abs());
    let a = DMatrix::from_fn(n, 2, |i, j| if j == 0 { (pts[i].0 / ps).powi(2) } else { pts[i].0 / ps });
    let y = DVector::from_iterator(n, pts.iter().map(|p| p.1));
    let c = least_squares(&a, &y)?;
    let (alpha, beta) = if c[0] >= 0.0 {
        (c[0] / (ps * ps), c[1] / ps)
    } else {
        let num: f64 = pts.iter().map(|(p, d)| p * d).sum();
        let den: f64 = pts.iter().map(|(p, _)| p * p).sum();
        (0.0, num / den)
    };
    let mut s = BatterySurrogate {
        alpha,
        beta,
        power_min: batt.power_min,
        power_max: batt.power_max,
        rms_rel_error: 0.0,
        max_rel_error: 0.0,
    };
    let (mut num, mut den, mut worst) = (0.0f64, 0.0f64, 0.0f64);
    for &(p, d) in &pts {
        let q = s.eval(p);
        num += (q - d).powi(2);
        den += d * d;
        if d != 0.0 {
            worst = worst.max(((q - d) / d).abs());
        }
    }
    s.rms_rel_error = (num / den).sqrt();
    s.max_rel_error = worst;
    Ok(s)
}

/// The three fitted surrogates of one powertrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surrogates {
    pub motor: QuadraticSurrogate,
    pub fuel_cell: QuadraticSurrogate,
    pub battery: BatterySurrogate,
}

pub fn fit_all(
    motor_map: &EfficiencyMap,
    fuel_cell_map: &EfficiencyMap,
    vehicle: &VehicleParams,
    batt: &BatteryParams,
    cfg: &FitConfig,
) -> Result<Surrogates> {
    let battery = fit_battery(batt)?;
    if battery.rms_rel_error > cfg.rms_ceiling {
        return Err(Error::FitQuality { rms: battery.rms_rel_error, ceiling: cfg.rms_ceiling });
    }
    Ok(Surrogates {
        motor: fit_motor(motor_map, vehicle, cfg)?,
        fuel_cell: fit_fuelcell(fuel_cell_map, vehicle, cfg)?,
        battery,
    })
}
