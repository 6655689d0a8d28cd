//! Linear under-estimators of the cooling product `h T lambda_v`.

use serde::{Deserialize, Serialize};

/// `lambda_T <= coef_lambda * lambda_v + coef_t * T + constant`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCormickRow {
    pub coef_lambda: f64,
    pub coef_t: f64,
    pub constant: f64,
}

impl McCormickRow {
    pub fn rhs(&self, lambda_v: f64, t: f64) -> f64 {
        self.coef_lambda * lambda_v + self.coef_t * t + self.constant
    }
}

/// Lower-corner and upper-corner McCormick cuts over
/// `T in [t_lo, t_hi]`, `lambda_v in [lam_lo, lam_hi]`. A box that is
/// degenerate in either coordinate yields one exact row.
pub fn mccormick_cooling_rows(t_bounds: (f64, f64), lambda_bounds: (f64, f64), h: f64) -> Vec<McCormickRow> {
    let (t_lo, t_hi) = t_bounds;
    let (l_lo, l_hi) = lambda_bounds;
    let lower = McCormickRow { coef_lambda: h * t_lo, coef_t: h * l_lo, constant: -h * t_lo * l_lo };
    if t_hi <= t_lo || l_hi <= l_lo {
        return vec![lower];
    }
    let upper = McCormickRow { coef_lambda: h * t_hi, coef_t: h * l_hi, constant: -h * t_hi * l_hi };
    vec![lower, upper]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_lower_corner() {
        let rows = mccormick_cooling_rows((0.0, 318.0), (0.2, 1.0), 2.0);
        assert_eq!(rows[0], McCormickRow { coef_lambda: 0.0, coef_t: 0.4, constant: -0.0 });
    }

    #[test]
    fn upper_corner_row() {
        let rows = mccormick_cooling_rows((0.0, 318.0), (0.0, 1.0), 1.0);
        assert_eq!(rows[1], McCormickRow { coef_lambda: 318.0, coef_t: 1.0, constant: -318.0 });
        assert_eq!(rows[1].rhs(1.0, 318.0), 318.0);
        // the envelope is exact at both corners
        let env = |l: f64, t: f64| rows.iter().map(|r| r.rhs(l, t)).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(env(1.0, 318.0), 318.0);
        assert_eq!(env(0.0, 0.0), 0.0);
    }

    #[test]
    fn degenerate_box_single_row() {
        let rows = mccormick_cooling_rows((290.0, 310.0), (0.5, 0.5), 15.0);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].rhs(0.5, 300.0) - 15.0 * 300.0 * 0.5).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn rows_under_estimate_on_box(
            t_lo in 0.0f64..300.0, dt in 0.1f64..50.0,
            l_lo in 0.01f64..1.0, dl in 0.01f64..5.0,
            a in 0.0f64..=1.0, b in 0.0f64..=1.0, h in 0.1f64..100.0,
        ) {
            let (t_hi, l_hi) = (t_lo + dt, l_lo + dl);
            let t = t_lo + a * dt;
            let l = l_lo + b * dl;
            for r in mccormick_cooling_rows((t_lo, t_hi), (l_lo, l_hi), h) {
                prop_assert!(r.rhs(l, t) <= h * t * l * (1.0 + 1e-12) + 1e-9);
            }
        }
    }
}
