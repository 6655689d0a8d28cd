use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Z,
    Zeta,
    Temperature,
    MotorForce,
    BrakeForce,
    FuelCellForce,
    BatteryForce,
    CoolingForce,
    Speed,
    LambdaV,
    LambdaZeta,
    LambdaT,
    DeltaZeta,
    DeltaT,
    DischargeForce,
    ChargeForce,
}

impl VarKind {
    pub const ALL: [VarKind; 16] = [
        VarKind::Z,
        VarKind::Zeta,
        VarKind::Temperature,
        VarKind::MotorForce,
        VarKind::BrakeForce,
        VarKind::FuelCellForce,
        VarKind::BatteryForce,
        VarKind::CoolingForce,
        VarKind::Speed,
        VarKind::LambdaV,
        VarKind::LambdaZeta,
        VarKind::LambdaT,
        VarKind::DeltaZeta,
        VarKind::DeltaT,
        VarKind::DischargeForce,
        VarKind::ChargeForce,
    ];

    pub fn is_state(self) -> bool {
        matches!(self, VarKind::Z | VarKind::Zeta | VarKind::Temperature)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            VarKind::Z => "z",
            VarKind::Zeta => "zeta",
            VarKind::Temperature => "T_batt",
            VarKind::MotorForce => "F_m",
            VarKind::BrakeForce => "F_brk",
            VarKind::FuelCellForce => "F_fc",
            VarKind::BatteryForce => "F_batt",
            VarKind::CoolingForce => "F_act",
            VarKind::Speed => "v",
            VarKind::LambdaV => "lambda_v",
            VarKind::LambdaZeta => "lambda_zeta",
            VarKind::LambdaT => "lambda_T",
            VarKind::DeltaZeta => "delta_zeta",
            VarKind::DeltaT => "delta_T",
            VarKind::DischargeForce => "F_dis",
            VarKind::ChargeForce => "F_chr",
        }
    }
}

/// Dense variable indexing: each kind occupies one contiguous block, states
/// with `N + 1` entries and everything else with `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub intervals: usize,
}

impl VariableLayout {
    pub fn new(intervals: usize) -> Self {
        VariableLayout { intervals }
    }

    pub fn count(&self, kind: VarKind) -> usize {
        if kind.is_state() {
            self.intervals + 1
        } else {
            self.intervals
        }
    }

    fn base(&self, kind: VarKind) -> usize {
        VarKind::ALL.iter().take_while(|&&k| k != kind).map(|&k| self.count(k)).sum()
    }

    pub fn total(&self) -> usize {
        VarKind::ALL.iter().map(|&k| self.count(k)).sum()
    }

    /// Panics on an out-of-range `i`; use [`Self::try_index`] for checked access.
    pub fn index(&self, kind: VarKind, i: usize) -> usize {
        assert!(i < self.count(kind), "{}[{i}] out of range", kind.symbol());
        self.base(kind) + i
    }

    pub fn try_index(&self, kind: VarKind, i: usize) -> Result<usize> {
        if i < self.count(kind) {
            Ok(self.base(kind) + i)
        } else {
            Err(Error::IndexOutOfRange { index: i, len: self.count(kind) })
        }
    }

    pub fn decode(&self, idx: usize) -> Option<(VarKind, usize)> {
        let mut base = 0;
        for k in VarKind::ALL {
            let n = self.count(k);
            if idx < base + n {
                return Some((k, idx - base));
            }
            base += n;
        }
        None
    }

    pub fn name(&self, idx: usize) -> String {
        match self.decode(idx) {
            Some((k, i)) => format!("{}[{i}]", k.symbol()),
            None => format!("aux[{}]", idx - self.total()),
        }
    }

    pub fn z(&self, i: usize) -> usize {
        self.index(VarKind::Z, i)
    }
    pub fn zeta(&self, i: usize) -> usize {
        self.index(VarKind::Zeta, i)
    }
    pub fn temp(&self, i: usize) -> usize {
        self.index(VarKind::Temperature, i)
    }
    pub fn f_m(&self, i: usize) -> usize {
        self.index(VarKind::MotorForce, i)
    }
    pub fn f_brk(&self, i: usize) -> usize {
        self.index(VarKind::BrakeForce, i)
    }
    pub fn f_fc(&self, i: usize) -> usize {
        self.index(VarKind::FuelCellForce, i)
    }
    pub fn f_batt(&self, i: usize) -> usize {
        self.index(VarKind::BatteryForce, i)
    }
    pub fn f_act(&self, i: usize) -> usize {
        self.index(VarKind::CoolingForce, i)
    }
    pub fn v(&self, i: usize) -> usize {
        self.index(VarKind::Speed, i)
    }
    pub fn lam_v(&self, i: usize) -> usize {
        self.index(VarKind::LambdaV, i)
    }
    pub fn lam_zeta(&self, i: usize) -> usize {
        self.index(VarKind::LambdaZeta, i)
    }
    pub fn lam_t(&self, i: usize) -> usize {
        self.index(VarKind::LambdaT, i)
    }
    pub fn d_zeta(&self, i: usize) -> usize {
        self.index(VarKind::DeltaZeta, i)
    }
    pub fn d_temp(&self, i: usize) -> usize {
        self.index(VarKind::DeltaT, i)
    }
    pub fn f_dis(&self, i: usize) -> usize {
        self.index(VarKind::DischargeForce, i)
    }
    pub fn f_chr(&self, i: usize) -> usize {
        self.index(VarKind::ChargeForce, i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_interval_has_nineteen_variables() {
        assert_eq!(VariableLayout::new(1).total(), 19);
    }

    #[test]
    fn names_and_ranges() {
        let l = VariableLayout::new(3);
        assert_eq!(l.name(l.temp(3)), "T_batt[3]");
        assert_eq!(l.name(l.f_chr(2)), "F_chr[2]");
        assert!(l.try_index(VarKind::Speed, 3).is_err());
        assert!(l.try_index(VarKind::Z, 3).is_ok());
    }

    proptest! {
        #[test]
        fn indices_are_dense_and_decodable(n in 1usize..60) {
            let l = VariableLayout::new(n);
            prop_assert_eq!(l.total(), 3 * (n + 1) + 13 * n);
            let mut seen = vec![false; l.total()];
            for k in VarKind::ALL {
                for i in 0..l.count(k) {
                    let idx = l.index(k, i);
                    prop_assert!(!seen[idx]);
                    seen[idx] = true;
                    prop_assert_eq!(l.decode(idx), Some((k, i)));
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            prop_assert_eq!(l.decode(l.total()), None);
        }
    }
}
