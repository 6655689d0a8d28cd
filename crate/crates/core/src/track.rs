//! Route description and the spatial grid the whole formulation runs on.
//!
//! A [`TrackProfile`] holds sampled gradients, speed limits, Davis resistance
//! coefficients and station stops. [`build_grid`] cuts the route into running
//! intervals of a fixed base step and inserts one virtual stop interval per
//! station whose width is `dwell * sqrt(z_stop)`, so that covering it at the
//! emulated stop speed `sqrt(z_stop)` takes exactly the dwell time.
//!
//! # Track file grammar
//!
//! UTF-8, line oriented. Blank lines and lines starting with `//` are ignored.
//! A line starting with `#` opens a section and must be one of
//!
//! ```text
//! #params key,value
//! #gradients pos_m,theta_rad
//! #limits pos_m,vmax_mps
//! #stations pos_m,dwell_s
//! ```
//!
//! The `params` section accepts exactly the keys `length_m`, `davis_a`,
//! `davis_b` and `davis_c` (N, N s/m, N s^2/m^2); unknown keys are rejected.
//! The other sections hold comma separated numeric rows with strictly
//! increasing positions inside `[0, length_m]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this width a trailing running interval is treated as floating-point
/// residue and merged into its neighbour.
const SLIVER: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub position: f64,
    /// Track angle in radians, positive uphill.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedLimitSample {
    pub position: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub position: f64,
    pub dwell: f64,
}

/// Davis resistance `a + b v + c v^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Davis {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Davis {
    pub fn resistance(&self, v: f64) -> f64 {
        self.a + self.b * v + self.c * v * v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackProfile {
    pub length: f64,
    pub gradients: Vec<GradientSample>,
    pub speed_limits: Vec<SpeedLimitSample>,
    pub davis: Davis,
    pub stations: Vec<Station>,
}

impl TrackProfile {
    /// Checks every invariant; used by the parser and by programmatic callers.
    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::invalid("length", "must be finite and positive"));
        }
        let d = &self.davis;
        if !(d.a.is_finite() && d.b.is_finite() && d.c.is_finite()) {
            return Err(Error::invalid("davis", "coefficients must be finite"));
        }
        if d.a < 0.0 || d.c < 0.0 {
            return Err(Error::invalid("davis", "davis_a and davis_c must be non-negative"));
        }
        check_positions("gradients", self.gradients.iter().map(|g| g.position), self.length)?;
        check_positions("limits", self.speed_limits.iter().map(|g| g.position), self.length)?;
        check_positions("stations", self.stations.iter().map(|g| g.position), self.length)?;
        if self.speed_limits.is_empty() {
            return Err(Error::invalid("limits", "at least one speed limit sample is required"));
        }
        for s in &self.speed_limits {
            if !(s.limit.is_finite() && s.limit > 0.0) {
                return Err(Error::invalid("limits", format!("limit {} must be positive", s.limit)));
            }
        }
        for g in &self.gradients {
            if !g.theta.is_finite() || g.theta.abs() >= std::f64::consts::FRAC_PI_2 {
                return Err(Error::invalid("gradients", format!("angle {} out of range", g.theta)));
            }
        }
        for s in &self.stations {
            if !(s.dwell.is_finite() && s.dwell >= 0.0) {
                return Err(Error::invalid("stations", format!("dwell {} must be non-negative", s.dwell)));
            }
        }
        Ok(())
    }

    /// Zero-order hold lookup: the last sample at or before `pos`, or the
    /// first sample when `pos` precedes all of them. Flat when empty.
    pub fn gradient_at_position(&self, pos: f64) -> f64 {
        hold(&self.gradients, pos, |g| g.position).map_or(0.0, |g| g.theta)
    }

    pub fn speed_limit_at_position(&self, pos: f64) -> f64 {
        hold(&self.speed_limits, pos, |s| s.position).map_or(f64::INFINITY, |s| s.limit)
    }

    pub fn max_speed_limit(&self) -> f64 {
        self.speed_limits.iter().map(|s| s.limit).fold(0.0, f64::max)
    }
}

fn hold<T>(samples: &[T], pos: f64, key: impl Fn(&T) -> f64) -> Option<&T> {
    let idx = samples.partition_point(|s| key(s) <= pos);
    if idx == 0 {
        samples.first()
    } else {
        samples.get(idx - 1)
    }
}

fn check_positions(section: &str, positions: impl Iterator<Item = f64>, length: f64) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for p in positions {
        if !p.is_finite() || p < 0.0 || p > length {
            return Err(Error::invalid(section, format!("position {p} outside [0, {length}]")));
        }
        if p <= prev {
            return Err(Error::invalid(section, format!("non-monotone position {p} after {prev}")));
        }
        prev = p;
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Params,
    Gradients,
    Limits,
    Stations,
}

/// Reads and validates a track file.
pub fn load_track(path: impl AsRef<Path>) -> Result<TrackProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_track(&text, &path.display().to_string())
}

/// Parses track text; `origin` labels error messages.
pub fn parse_track(text: &str, origin: &str) -> Result<TrackProfile> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };

    let mut section = None;
    let mut length = None;
    let (mut a, mut b, mut c) = (None, None, None);
    let mut gradients = Vec::new();
    let mut limits = Vec::new();
    let mut stations: Vec<Station> = Vec::new();
    let mut last_pos = [f64::NEG_INFINITY; 3];

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            let header: String = header.split_whitespace().collect::<Vec<_>>().join(" ");
            section = Some(match header.as_str() {
                "params key,value" => Section::Params,
                "gradients pos_m,theta_rad" => Section::Gradients,
                "limits pos_m,vmax_mps" => Section::Limits,
                "stations pos_m,dwell_s" => Section::Stations,
                other => return Err(err(line_no, format!("unknown section header '#{other}'"))),
            });
            continue;
        }
        let Some(sec) = section else {
            return Err(err(line_no, "data row before any section header".into()));
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(err(line_no, format!("expected 2 fields, found {}", fields.len())));
        }
        if sec == Section::Params {
            let value: f64 = fields[1]
                .parse()
                .map_err(|_| err(line_no, format!("field '{}': not a number: '{}'", fields[0], fields[1])))?;
            let slot = match fields[0] {
                "length_m" => &mut length,
                "davis_a" => &mut a,
                "davis_b" => &mut b,
                "davis_c" => &mut c,
                key => return Err(err(line_no, format!("unknown key '{key}'"))),
            };
            if slot.replace(value).is_some() {
                return Err(err(line_no, format!("duplicate key '{}'", fields[0])));
            }
            continue;
        }
        let mut nums = [0.0; 2];
        for (k, f) in fields.iter().enumerate() {
            nums[k] = f
                .parse()
                .map_err(|_| err(line_no, format!("column {}: not a number: '{f}'", k + 1)))?;
        }
        let slot = match sec {
            Section::Gradients => 0,
            Section::Limits => 1,
            Section::Stations => 2,
            Section::Params => unreachable!(),
        };
        if nums[0] <= last_pos[slot] {
            return Err(err(line_no, format!("non-monotone position {} after {}", nums[0], last_pos[slot])));
        }
        last_pos[slot] = nums[0];
        match sec {
            Section::Gradients => gradients.push(GradientSample { position: nums[0], theta: nums[1] }),
            Section::Limits => limits.push(SpeedLimitSample { position: nums[0], limit: nums[1] }),
            Section::Stations => stations.push(Station { position: nums[0], dwell: nums[1] }),
            Section::Params => unreachable!(),
        }
    }

    let missing = |k: &str| err(0, format!("missing key '{k}' in #params"));
    let track = TrackProfile {
        length: length.ok_or_else(|| missing("length_m"))?,
        gradients,
        speed_limits: limits,
        davis: Davis {
            a: a.ok_or_else(|| missing("davis_a"))?,
            b: b.ok_or_else(|| missing("davis_b"))?,
            c: c.ok_or_else(|| missing("davis_c"))?,
        },
        stations,
    };
    track.validate().map_err(|e| match e {
        Error::Invalid { field, msg } => err(0, format!("{field}: {msg}")),
        other => other,
    })?;
    Ok(track)
}

/// Renders a track in the file grammar accepted by [`parse_track`].
pub fn format_track(track: &TrackProfile) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "#params key,value");
    let _ = writeln!(s, "length_m,{}", track.length);
    let _ = writeln!(s, "davis_a,{}", track.davis.a);
    let _ = writeln!(s, "davis_b,{}", track.davis.b);
    let _ = writeln!(s, "davis_c,{}", track.davis.c);
    let _ = writeln!(s, "#gradients pos_m,theta_rad");
    for g in &track.gradients {
        let _ = writeln!(s, "{},{}", g.position, g.theta);
    }
    let _ = writeln!(s, "#limits pos_m,vmax_mps");
    for l in &track.speed_limits {
        let _ = writeln!(s, "{},{}", l.position, l.limit);
    }
    let _ = writeln!(s, "#stations pos_m,dwell_s");
    for st in &track.stations {
        let _ = writeln!(s, "{},{}", st.position, st.dwell);
    }
    s
}

/// Journey-level targets and initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JourneySpec {
    /// Target journey time in seconds.
    pub target_time: f64,
    /// Initial squared speed (m^2/s^2).
    pub initial_z: f64,
    pub initial_soc: f64,
    /// Initial battery temperature (K).
    pub initial_temperature: f64,
    /// Squared speed emulating standstill at a station (m^2/s^2).
    #[serde(default = "JourneySpec::default_z_stop")]
    pub z_stop: f64,
    /// Lower speed bound on running intervals (m/s).
    pub v_min: f64,
}

impl JourneySpec {
    pub const DEFAULT_Z_STOP: f64 = 0.01;

    fn default_z_stop() -> f64 {
        Self::DEFAULT_Z_STOP
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_time.is_finite() && self.target_time > 0.0) {
            return Err(Error::invalid("target_time", "must be positive"));
        }
        if !(self.initial_soc > 0.0 && self.initial_soc < 1.0) {
            return Err(Error::invalid("initial_soc", "must lie strictly between 0 and 1"));
        }
        if !(self.initial_temperature.is_finite() && self.initial_temperature >= 0.0) {
            return Err(Error::invalid("initial_temperature", "must be non-negative"));
        }
        if !(self.v_min.is_finite() && self.v_min > 0.0) {
            return Err(Error::invalid("v_min", "must be positive"));
        }
        if !(self.z_stop > 0.0 && self.z_stop <= self.v_min * self.v_min) {
            return Err(Error::invalid("z_stop", "must satisfy 0 < z_stop <= v_min^2"));
        }
        if !(self.initial_z.is_finite() && self.initial_z > 0.0) {
            return Err(Error::invalid("initial_z", "must be positive"));
        }
        Ok(())
    }

    pub fn stop_speed(&self) -> f64 {
        self.z_stop.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    /// Track position where the interval begins (m). Stop intervals carry the
    /// station position.
    pub start: f64,
    /// Width Δs (m). For stops this is the virtual width `dwell * sqrt(z_stop)`.
    pub width: f64,
    pub gradient: f64,
    pub speed_limit: f64,
    pub is_stop: bool,
    pub dwell: f64,
}

/// Non-uniform spatial discretisation. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub intervals: Vec<Interval>,
    pub z_stop: f64,
}

impl SpatialGrid {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Per-interval track angle.
    pub fn gradient_at(&self, i: usize) -> Result<f64> {
        self.intervals
            .get(i)
            .map(|iv| iv.gradient)
            .ok_or(Error::IndexOutOfRange { index: i, len: self.len() })
    }

    pub fn running_length(&self) -> f64 {
        self.intervals.iter().filter(|iv| !iv.is_stop).map(|iv| iv.width).sum()
    }

    pub fn stop_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.intervals.iter().enumerate().filter(|(_, iv)| iv.is_stop).map(|(i, _)| i)
    }

    pub fn ends_with_stop(&self) -> bool {
        self.intervals.last().is_some_and(|iv| iv.is_stop)
    }

    /// Journeys end at a platform: the final interval must be a stop.
    pub fn require_terminal_stop(&self) -> Result<()> {
        if self.ends_with_stop() {
            Ok(())
        } else {
            Err(Error::invalid(
                "stations",
                "journey has no terminal station; add a station at the end of the track",
            ))
        }
    }

    pub fn total_dwell(&self) -> f64 {
        self.intervals.iter().filter(|iv| iv.is_stop).map(|iv| iv.dwell).sum()
    }
}

/// Discretises `track` into running intervals of `base_step` metres plus one
/// stop interval per station.
pub fn build_grid(track: &TrackProfile, base_step: f64, spec: &JourneySpec) -> Result<SpatialGrid> {
    track.validate()?;
    spec.validate()?;
    if !(base_step.is_finite() && base_step > 0.0) {
        return Err(Error::invalid("base_step", "must be positive"));
    }
    if base_step > track.length {
        return Err(Error::invalid(
            "base_step",
            format!("{base_step} m is larger than the track length {} m", track.length),
        ));
    }
    for st in &track.stations {
        if st.position > track.length {
            return Err(Error::invalid("stations", format!("station at {} beyond track end", st.position)));
        }
        if st.dwell <= 0.0 {
            return Err(Error::invalid(
                "stations",
                format!("station at {} has zero dwell; a stop needs a positive dwell", st.position),
            ));
        }
    }

    let stop_speed = spec.stop_speed();
    let mut intervals = Vec::new();
    let push_stop = |intervals: &mut Vec<Interval>, st: &Station| {
        intervals.push(Interval {
            start: st.position,
            width: st.dwell * stop_speed,
            gradient: track.gradient_at_position(st.position),
            speed_limit: track.speed_limit_at_position(st.position),
            is_stop: true,
            dwell: st.dwell,
        });
    };

    // Segment boundaries: track ends plus every station position.
    let mut stations = track.stations.iter().peekable();
    let mut seg_start = 0.0;
    loop {
        while let Some(st) = stations.peek() {
            if st.position <= seg_start {
                push_stop(&mut intervals, st);
                stations.next();
            } else {
                break;
            }
        }
        let seg_end = stations.peek().map_or(track.length, |st| st.position);
        if seg_end <= seg_start {
            break;
        }
        let mut pos = seg_start;
        while seg_end - pos > SLIVER * track.length.max(1.0) {
            let mut width = base_step.min(seg_end - pos);
            if seg_end - (pos + width) <= SLIVER * track.length.max(1.0) {
                width = seg_end - pos;
            }
            let mid = pos + 0.5 * width;
            intervals.push(Interval {
                start: pos,
                width,
                gradient: track.gradient_at_position(mid),
                speed_limit: track.speed_limit_at_position(mid),
                is_stop: false,
                dwell: 0.0,
            });
            pos += width;
        }
        seg_start = seg_end;
        if stations.peek().is_none() && seg_start >= track.length {
            break;
        }
    }
    for st in stations {
        push_stop(&mut intervals, st);
    }

    Ok(SpatialGrid {
        intervals,
        z_stop: spec.z_stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(length: f64, stations: Vec<Station>) -> TrackProfile {
        TrackProfile {
            length,
            gradients: vec![GradientSample { position: 0.0, theta: 0.0 }],
            speed_limits: vec![SpeedLimitSample { position: 0.0, limit: 25.0 }],
            davis: Davis { a: 1000.0, b: 20.0, c: 5.0 },
            stations,
        }
    }

    fn spec() -> JourneySpec {
        JourneySpec {
            target_time: 100.0,
            initial_z: 100.0,
            initial_soc: 0.6,
            initial_temperature: 293.0,
            z_stop: 0.01,
            v_min: 1.0,
        }
    }

    #[test]
    fn parses_three_gradient_rows() {
        let text = "#params key,value\nlength_m,1000\ndavis_a,1\ndavis_b,2\ndavis_c,3\n\
                    #gradients pos_m,theta_rad\n0,0\n500,0.01\n1000,0\n\
                    #limits pos_m,vmax_mps\n0,25\n#stations pos_m,dwell_s\n";
        let t = parse_track(text, "mem").unwrap();
        assert_eq!(t.gradients.len(), 3);
        assert!(t.stations.is_empty());
        assert_eq!(t.davis, Davis { a: 1.0, b: 2.0, c: 3.0 });
    }

    #[test]
    fn rejects_decreasing_positions_with_line() {
        let text = "#params key,value\nlength_m,1000\ndavis_a,1\ndavis_b,2\ndavis_c,3\n\
                    #gradients pos_m,theta_rad\n0,0\n500,0.01\n400,0\n#limits pos_m,vmax_mps\n0,25\n";
        let e = parse_track(text, "mem").unwrap_err().to_string();
        assert!(e.contains("non-monotone position"), "{e}");
        assert!(e.contains("mem:9"), "{e}");
    }

    #[test]
    fn rejects_unknown_key_and_bad_number() {
        let base = "#params key,value\nlength_m,1000\ndavis_a,1\ndavis_b,2\ndavis_c,3\n";
        let e = parse_track(&format!("{base}colour,3\n"), "x").unwrap_err().to_string();
        assert!(e.contains("unknown key 'colour'"), "{e}");
        let e = parse_track(&format!("{base}#limits pos_m,vmax_mps\n0,fast\n"), "x")
            .unwrap_err()
            .to_string();
        assert!(e.contains("not a number"), "{e}");
        let e = parse_track(&format!("{base}#limits pos_m,vmax_mps\n0,-1\n"), "x")
            .unwrap_err()
            .to_string();
        assert!(e.contains("limit"), "{e}");
    }

    #[test]
    fn format_round_trips() {
        let t = flat(1234.5, vec![Station { position: 1234.5, dwell: 30.0 }]);
        assert_eq!(parse_track(&format_track(&t), "x").unwrap(), t);
    }

    #[test]
    fn exact_division() {
        let g = build_grid(&flat(1000.0, vec![]), 100.0, &spec()).unwrap();
        assert_eq!(g.len(), 10);
        assert!(g.intervals.iter().all(|iv| iv.width == 100.0 && !iv.is_stop));
    }

    #[test]
    fn truncates_last_interval() {
        let g = build_grid(&flat(250.0, vec![]), 100.0, &spec()).unwrap();
        let w: Vec<f64> = g.intervals.iter().map(|iv| iv.width).collect();
        assert_eq!(w, vec![100.0, 100.0, 50.0]);
    }

    #[test]
    fn stop_interval_width_is_dwell_times_stop_speed() {
        let g = build_grid(&flat(1000.0, vec![Station { position: 1000.0, dwell: 60.0 }]), 100.0, &spec())
            .unwrap();
        assert_eq!(g.len(), 11);
        let last = g.intervals.last().unwrap();
        assert!(last.is_stop);
        assert!((last.width - 6.0).abs() < 1e-12);
        assert!(g.ends_with_stop());
    }

    #[test]
    fn intermediate_station_splits_segments() {
        let track = flat(
            1000.0,
            vec![Station { position: 450.0, dwell: 30.0 }, Station { position: 1000.0, dwell: 30.0 }],
        );
        let g = build_grid(&track, 100.0, &spec()).unwrap();
        let kinds: Vec<(f64, bool)> = g.intervals.iter().map(|iv| (iv.width, iv.is_stop)).collect();
        assert_eq!(kinds[4], (50.0, false));
        assert!(kinds[5].1);
        assert!((g.running_length() - 1000.0).abs() < 1e-9);
        assert_eq!(g.stop_indices().collect::<Vec<_>>(), vec![5, 12]);
    }

    #[test]
    fn origin_station_comes_first() {
        let track = flat(
            300.0,
            vec![Station { position: 0.0, dwell: 20.0 }, Station { position: 300.0, dwell: 20.0 }],
        );
        let g = build_grid(&track, 100.0, &spec()).unwrap();
        assert!(g.intervals[0].is_stop);
        assert_eq!(g.len(), 5);
    }

    #[test]
    fn grid_errors() {
        assert!(build_grid(&flat(100.0, vec![]), 200.0, &spec()).is_err());
        let mut t = flat(100.0, vec![]);
        t.stations.push(Station { position: 150.0, dwell: 5.0 });
        assert!(build_grid(&t, 50.0, &spec()).is_err());
        let g = build_grid(&flat(100.0, vec![]), 50.0, &spec()).unwrap();
        assert!(g.require_terminal_stop().is_err());
    }

    #[test]
    fn gradient_lookup() {
        let g = build_grid(&flat(1000.0, vec![]), 100.0, &spec()).unwrap();
        assert!((0..g.len()).all(|i| g.gradient_at(i).unwrap() == 0.0));
        assert!(g.gradient_at(10).is_err());

        let mut t = flat(1000.0, vec![]);
        t.gradients = vec![GradientSample { position: 0.0, theta: 0.01 }];
        let g = build_grid(&t, 100.0, &spec()).unwrap();
        assert!((0..g.len()).all(|i| g.gradient_at(i).unwrap() == 0.01));

        t.gradients = vec![
            GradientSample { position: 0.0, theta: 0.0 },
            GradientSample { position: 500.0, theta: 0.02 },
        ];
        let g = build_grid(&t, 200.0, &spec()).unwrap();
        // third interval spans [400, 600], midpoint 500; fourth [600, 800]
        assert_eq!(g.intervals[3].start, 600.0);
        assert_eq!(g.gradient_at(3).unwrap(), 0.02);
        assert_eq!(t.gradient_at_position(600.0), 0.02);
        assert_eq!(t.gradient_at_position(499.0), 0.0);
    }
}
