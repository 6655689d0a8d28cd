mod common;

use proptest::prelude::*;

use hytrain::components::{synth_motor_map, BatteryParams, SyntheticMapSpec, VehicleParams};
use hytrain::surrogate::{fit_battery, fit_motor, hessian_psd_check, FitConfig};
use hytrain::track::{build_grid, format_track, parse_track, Davis, GradientSample, SpeedLimitSample, Station, TrackProfile};

fn track_strategy() -> impl Strategy<Value = TrackProfile> {
    (500.0..20_000.0f64, prop::collection::vec((0.0..1.0f64, -0.03..0.03f64), 0..6), 5.0..40.0f64, 1.0..60.0f64)
        .prop_map(|(length, grads, limit, dwell)| {
            let mut pos: Vec<f64> = grads.iter().map(|g| (g.0 * length).round()).collect();
            pos.sort_by(f64::total_cmp);
            pos.dedup();
            let gradients = pos
                .iter()
                .zip(&grads)
                .map(|(&p, g)| GradientSample { position: p, theta: g.1 })
                .collect();
            TrackProfile {
                length,
                gradients,
                speed_limits: vec![SpeedLimitSample { position: 0.0, limit }],
                davis: Davis { a: 1500.0, b: 30.0, c: 6.0 },
                stations: vec![Station { position: 0.0, dwell }, Station { position: length, dwell }],
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn track_text_round_trips(t in track_strategy()) {
        let back = parse_track(&format_track(&t), "mem").unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn grid_covers_track(t in track_strategy(), step in 10.0..400.0f64) {
        prop_assume!(step <= t.length);
        let spec = common::spec(1e4, 293.0);
        let g = build_grid(&t, step, &spec).unwrap();
        let running: f64 = g.intervals.iter().filter(|iv| !iv.is_stop).map(|iv| iv.width).sum();
        prop_assert!((running - t.length).abs() <= 1e-9 * t.length);
        prop_assert!(g.intervals.iter().filter(|iv| !iv.is_stop).all(|iv| iv.width <= step * (1.0 + 1e-9)));
        prop_assert_eq!(g.stop_indices().count(), t.stations.len());
        prop_assert!(g.intervals.windows(2).all(|w| w[0].start <= w[1].start));
    }

    #[test]
    fn battery_loss_polynomial_is_convex(r in 0.02..0.3f64, u in 400.0..900.0f64, frac in 0.1..0.8f64) {
        let mut b = BatteryParams::desk_scale();
        b.internal_resistance = r;
        b.open_circuit_voltage = u;
        let bound = u * u / (4.0 * r);
        b.power_max = frac * bound;
        b.power_min = -frac * bound;
        let s = fit_battery(&b).unwrap();
        prop_assert!(s.alpha >= 0.0);
        prop_assert!(s.beta > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn noisy_motor_fit_stays_psd(seed in 0u64..1000, noise in 0.0..0.02f64) {
        let spec = SyntheticMapSpec { noise, ..SyntheticMapSpec::desk_motor() };
        let map = synth_motor_map(&spec, seed).unwrap();
        let cfg = FitConfig { rms_ceiling: 1.0, ..FitConfig::default() };
        let s = fit_motor(&map, &VehicleParams::desk_scale(), &cfg).unwrap();
        prop_assert!(hessian_psd_check(&s).margin >= 0.0);
        prop_assert_eq!(s.p11, 0.0);
    }
}
