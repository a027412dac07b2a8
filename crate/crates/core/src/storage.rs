//! Supercapacitor state and charge integration (`Q = C·V`).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::power_stage::{charging_current, ChargingModel, PowerStageParams};

pub const DEFAULT_CAPACITANCE_F: f64 = 1.2;
pub const DEFAULT_RATING_V: f64 = 2.7;
/// Voltage at which the measured charge curves flatten.
pub const DEFAULT_FULL_VOLTAGE: f64 = 1.9;

/// Step used when a charge time has no closed form, s.
const QUERY_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupercapState {
    /// F
    pub capacitance: f64,
    /// V
    pub v_rating: f64,
    /// V
    pub v_now: f64,
    /// Constant self-discharge, A.
    pub leakage_current: f64,
    /// Series resistance, ohm. Carried but not used by the charge law.
    pub esr: f64,
}

impl SupercapState {
    /// Empty capacitor with no leakage.
    pub fn new(capacitance: f64, v_rating: f64) -> Result<Self> {
        let s = SupercapState {
            capacitance,
            v_rating,
            v_now: 0.0,
            leakage_current: 0.0,
            esr: 0.0,
        };
        let v = s.violations();
        if v.is_empty() {
            Ok(s)
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.capacitance.is_finite() && self.capacitance > 0.0) {
            v.push(format!(
                "supercap.capacitance must be positive (got {})",
                self.capacitance
            ));
        }
        if !(self.v_rating.is_finite() && self.v_rating > 0.0) {
            v.push(format!("supercap.v_rating must be positive (got {})", self.v_rating));
        }
        if !(self.v_now >= 0.0 && self.v_now <= self.v_rating) {
            v.push(format!(
                "supercap.v_now ({}) must lie in [0, v_rating = {}]",
                self.v_now, self.v_rating
            ));
        }
        if !(self.leakage_current.is_finite() && self.leakage_current >= 0.0) {
            v.push(format!(
                "supercap.leakage_current must be >= 0 (got {})",
                self.leakage_current
            ));
        }
        if !(self.esr.is_finite() && self.esr >= 0.0) {
            v.push(format!("supercap.esr must be >= 0 (got {})", self.esr));
        }
        v
    }

    /// Stored charge, C.
    pub fn charge(&self) -> f64 {
        self.capacitance * self.v_now
    }

    /// Advances by `dt` with `i_in` flowing in, leakage flowing out.
    pub fn step_charge(&self, i_in: f64, dt: f64) -> SupercapState {
        self.step_net(i_in, 0.0, dt)
    }

    /// As [`Self::step_charge`] with an extra load current `i_draw` drawn.
    pub fn step_net(&self, i_in: f64, i_draw: f64, dt: f64) -> SupercapState {
        let dv = (i_in - self.leakage_current - i_draw) * dt / self.capacitance;
        SupercapState {
            v_now: (self.v_now + dv).clamp(0.0, self.v_rating),
            ..*self
        }
    }
}

/// Time for a constant net current to move `capacitance` through `dv`.
pub fn constant_current_time(capacitance: f64, dv: f64, net_current: f64) -> f64 {
    if dv <= 0.0 {
        0.0
    } else if net_current <= 0.0 {
        f64::INFINITY
    } else {
        capacitance * dv / net_current
    }
}

/// Seconds until the capacitor reaches `v_target` under the stage's charging
/// law. `f64::INFINITY` when the net current stalls before the target.
pub fn time_to_voltage(s: &SupercapState, stage: &PowerStageParams, v_target: f64) -> Result<f64> {
    if !v_target.is_finite() || v_target < s.v_now {
        return Err(Error::domain(format!(
            "target {v_target} V is below the present {} V",
            s.v_now
        )));
    }
    let ceiling = s.v_rating.min(stage.cutoff());
    if v_target > ceiling {
        return Err(Error::domain(format!(
            "target {v_target} V is above the reachable {ceiling} V (rating {} V, cutoff {} V)",
            s.v_rating,
            stage.cutoff()
        )));
    }
    if v_target == s.v_now {
        return Ok(0.0);
    }

    if let ChargingModel::ConstantCurrent { i_cc } = stage.charging {
        return Ok(constant_current_time(
            s.capacitance,
            v_target - s.v_now,
            i_cc - s.leakage_current,
        ));
    }

    // The law's current falls with voltage, so a stall anywhere below the
    // target shows at the target itself.
    let probe = if v_target < stage.cutoff() {
        v_target
    } else {
        stage.cutoff() * (1.0 - 1e-12)
    };
    if charging_current(probe, stage) <= s.leakage_current {
        return Ok(f64::INFINITY);
    }

    let mut state = *s;
    let mut t = 0.0;
    loop {
        let i = charging_current(state.v_now, stage);
        if i <= state.leakage_current {
            return Ok(f64::INFINITY);
        }
        let next = state.step_charge(i, QUERY_STEP);
        if next.v_now >= v_target {
            let frac = (v_target - state.v_now) / (next.v_now - state.v_now);
            return Ok(t + frac * QUERY_STEP);
        }
        state = next;
        t += QUERY_STEP;
    }
}

/// Time to store half the charge held at `v_full`, starting empty.
pub fn half_capacity_time(s: &SupercapState, stage: &PowerStageParams, v_full: f64) -> Result<f64> {
    if s.v_now != 0.0 {
        return Err(Error::domain(format!(
            "half-capacity time starts from an empty capacitor (v_now = {} V)",
            s.v_now
        )));
    }
    if !(v_full > 0.0 && v_full <= s.v_rating) {
        return Err(Error::domain(format!(
            "full voltage {v_full} V must lie in (0, {}] V",
            s.v_rating
        )));
    }
    time_to_voltage(s, stage, 0.5 * v_full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cap() -> SupercapState {
        SupercapState::new(1.2, 2.7).unwrap()
    }

    fn cc(i: f64) -> PowerStageParams {
        PowerStageParams::with_charging(ChargingModel::ConstantCurrent { i_cc: i })
    }

    /// Constant-current source with no regulation cutoff below the rating.
    fn uncut(i: f64) -> PowerStageParams {
        PowerStageParams {
            v_out_band: (1.71, 2.7),
            ..cc(i)
        }
    }

    #[test]
    fn step_examples() {
        let s = cap();
        assert_eq!(s.step_charge(0.0, 10.0).v_now, 0.0);
        assert_relative_eq!(s.step_charge(211.8e-6, 1.0).v_now * 1e6, 176.5, max_relative = 1e-9);
        let full = SupercapState { v_now: 2.7, ..s };
        assert_eq!(full.step_charge(1e-3, 10.0).v_now, 2.7);
    }

    #[test]
    fn leakage_discharges_to_zero() {
        let s = SupercapState {
            v_now: 1e-6,
            leakage_current: 1e-3,
            ..cap()
        };
        assert_eq!(s.step_charge(0.0, 100.0).v_now, 0.0);
    }

    #[test]
    fn full_charge_times() {
        let t_b = time_to_voltage(&cap(), &uncut(211.8e-6), 1.9).unwrap();
        assert_relative_eq!(t_b, 10764.87, max_relative = 1e-5);
        let t_a = time_to_voltage(&cap(), &uncut(168.2e-6), 1.9).unwrap();
        assert_relative_eq!(t_a, 13555.29, max_relative = 1e-5);
        assert_eq!(time_to_voltage(&cap(), &cc(1e-4), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn target_above_cutoff_is_unreachable() {
        assert!(matches!(
            time_to_voltage(&cap(), &cc(211.8e-6), 1.9),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            time_to_voltage(&cap(), &uncut(211.8e-6), 2.8),
            Err(Error::Domain(_))
        ));
        let charged = SupercapState { v_now: 1.0, ..cap() };
        assert!(time_to_voltage(&charged, &cc(1e-4), 0.5).is_err());
    }

    #[test]
    fn leakage_stall_is_infinite() {
        let s = SupercapState {
            leakage_current: 300e-6,
            ..cap()
        };
        assert_eq!(time_to_voltage(&s, &cc(211.8e-6), 1.0).unwrap(), f64::INFINITY);
        let cp = PowerStageParams::with_charging(ChargingModel::ConstantPower {
            p_in: 0.2e-3,
            efficiency: 1.0,
            v_floor: 0.3,
        });
        // η·P / v falls to the 300 µA leakage at 0.667 V.
        assert_eq!(time_to_voltage(&s, &cp, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn half_capacity_examples() {
        let t = half_capacity_time(&cap(), &cc(211.8e-6), DEFAULT_FULL_VOLTAGE).unwrap();
        assert_relative_eq!(t, 5382.4, max_relative = 1e-4);
        let t = half_capacity_time(&cap(), &cc(168.2e-6), DEFAULT_FULL_VOLTAGE).unwrap();
        assert_relative_eq!(t, 6777.6, max_relative = 1e-4);
        let t = half_capacity_time(&cap(), &cc(1e6), DEFAULT_FULL_VOLTAGE).unwrap();
        assert!(t < 1e-5);
        let charged = SupercapState { v_now: 0.1, ..cap() };
        assert!(half_capacity_time(&charged, &cc(1e-4), 1.9).is_err());
    }

    #[test]
    fn constant_power_matches_piecewise_closed_form() {
        let cp = PowerStageParams::with_charging(ChargingModel::ConstantPower {
            p_in: 0.381e-3,
            efficiency: 1.0,
            v_floor: 0.3,
        });
        // Below the floor the current is constant; above it C·v·dv = P·dt.
        let c = 1.2;
        let p = 0.381e-3;
        let expected = c * 0.3 * 0.3 / p + c * (0.95f64.powi(2) - 0.09) / (2.0 * p);
        let t = half_capacity_time(&cap(), &cp, 1.9).unwrap();
        assert_relative_eq!(t, expected, max_relative = 1e-3);
    }

    proptest! {
        #[test]
        fn integration_agrees_with_closed_form(i in 50e-6f64..500e-6, target in 0.1f64..1.85) {
            let stage = cc(i);
            let closed = time_to_voltage(&cap(), &stage, target).unwrap();
            let mut s = cap();
            let mut t = 0.0;
            while s.v_now < target {
                let next = s.step_charge(charging_current(s.v_now, &stage), 1.0);
                if next.v_now >= target {
                    t += (target - s.v_now) / (next.v_now - s.v_now);
                    break;
                }
                s = next;
                t += 1.0;
            }
            prop_assert!((t / closed - 1.0).abs() < 1e-3);
        }

        #[test]
        fn conserves_charge(currents in proptest::collection::vec(0.0f64..1e-3, 1..200), dt in 0.1f64..1.0) {
            let mut s = cap();
            let mut q = 0.0;
            for i in &currents {
                s = s.step_charge(*i, dt);
                q += i * dt;
            }
            prop_assume!(s.v_now < s.v_rating);
            prop_assert!((s.charge() - q).abs() <= 1e-3 * q.max(1e-12));
        }

        #[test]
        fn monotone_and_bounded(v0 in 0.0f64..2.7, i in 0.0f64..10.0, leak in 0.0f64..1e-3, dt in 0.01f64..100.0) {
            let s = SupercapState { v_now: v0, leakage_current: leak, ..cap() };
            let n = s.step_charge(i, dt);
            prop_assert!(n.v_now <= 2.7);
            if i >= leak {
                prop_assert!(n.v_now >= v0);
            }
        }
    }
}
