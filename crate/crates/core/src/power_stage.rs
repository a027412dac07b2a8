//! Behavioural model of the rectifier/regulator board.
//!
//! The piezo output goes through a diode bridge protected by an input shunt,
//! then a buck regulator with a fixed output setpoint. Only the regulated
//! output matters for charging, so the regulator is reduced to a
//! charging-current law plus a ceiling set by the power the piezo can push
//! through the bridge.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harvester::Waveform;
use crate::storage::SupercapState;

pub const DEFAULT_SHUNT_CLAMP_V: f64 = 20.0;
pub const DEFAULT_SETPOINT_V: f64 = 1.8;
/// Output tolerance band of the 1.8 V mode.
pub const DEFAULT_BAND_V: (f64, f64) = (1.71, 1.89);
pub const DEFAULT_DIODE_DROP_V: f64 = 0.3;
pub const DEFAULT_HARVEST_EFFICIENCY: f64 = 0.8;
pub const DEFAULT_V_FLOOR_V: f64 = 0.3;

/// How the regulator output current depends on the storage voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum ChargingModel {
    /// Fixed current, A.
    ConstantCurrent { i_cc: f64 },
    /// Fixed input power `p_in` (W) converted with `efficiency`, delivered
    /// as `η·p_in / max(v, v_floor)`.
    ConstantPower { p_in: f64, efficiency: f64, v_floor: f64 },
}

impl ChargingModel {
    pub fn name(&self) -> &'static str {
        match self {
            ChargingModel::ConstantCurrent { .. } => "constant_current",
            ChargingModel::ConstantPower { .. } => "constant_power",
        }
    }

    /// Current below the cutoff, before any harvest ceiling.
    fn uncut_current(&self, v_cap: f64) -> f64 {
        match *self {
            ChargingModel::ConstantCurrent { i_cc } => i_cc,
            ChargingModel::ConstantPower {
                p_in,
                efficiency,
                v_floor,
            } => efficiency * p_in / v_cap.max(v_floor),
        }
    }

    /// Power delivered at `v_out`.
    pub fn power_at(&self, v_out: f64) -> f64 {
        self.uncut_current(v_out) * v_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerStageParams {
    /// Input protection threshold, V.
    pub v_shunt_clamp: f64,
    pub v_out_setpoint: f64,
    /// Output tolerance band `(low, high)`, V. Charging stops at `high`.
    pub v_out_band: (f64, f64),
    /// Forward drop per bridge leg, V.
    pub diode_drop: f64,
    /// Fraction of the bridge output power that reaches the regulated output.
    pub harvest_efficiency: f64,
    pub charging: ChargingModel,
}

impl PowerStageParams {
    /// Board defaults with the given charging law.
    pub fn with_charging(charging: ChargingModel) -> Self {
        PowerStageParams {
            v_shunt_clamp: DEFAULT_SHUNT_CLAMP_V,
            v_out_setpoint: DEFAULT_SETPOINT_V,
            v_out_band: DEFAULT_BAND_V,
            diode_drop: DEFAULT_DIODE_DROP_V,
            harvest_efficiency: DEFAULT_HARVEST_EFFICIENCY,
            charging,
        }
    }

    /// Voltage at which charging stops.
    pub fn cutoff(&self) -> f64 {
        self.v_out_band.1
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let (lo, hi) = self.v_out_band;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= self.v_out_setpoint && self.v_out_setpoint <= hi) {
            v.push(format!(
                "power_stage: need 0 < band low ({lo}) <= setpoint ({}) <= band high ({hi})",
                self.v_out_setpoint
            ));
        }
        if !(self.v_shunt_clamp > self.v_out_setpoint) {
            v.push(format!(
                "power_stage.v_shunt_clamp ({}) must exceed the setpoint ({})",
                self.v_shunt_clamp, self.v_out_setpoint
            ));
        }
        if !(self.diode_drop.is_finite() && self.diode_drop >= 0.0) {
            v.push(format!("power_stage.diode_drop must be >= 0 (got {})", self.diode_drop));
        }
        if !(self.harvest_efficiency > 0.0 && self.harvest_efficiency <= 1.0) {
            v.push(format!(
                "power_stage.harvest_efficiency must lie in (0, 1] (got {})",
                self.harvest_efficiency
            ));
        }
        match self.charging {
            ChargingModel::ConstantCurrent { i_cc } => {
                if !(i_cc.is_finite() && i_cc > 0.0) {
                    v.push(format!("power_stage.charging.i_cc must be positive (got {i_cc})"));
                }
            }
            ChargingModel::ConstantPower {
                p_in,
                efficiency,
                v_floor,
            } => {
                if !(p_in.is_finite() && p_in > 0.0) {
                    v.push(format!("power_stage.charging.p_in must be positive (got {p_in})"));
                }
                if !(efficiency > 0.0 && efficiency <= 1.0) {
                    v.push(format!(
                        "power_stage.charging.efficiency must lie in (0, 1] (got {efficiency})"
                    ));
                }
                if !(v_floor.is_finite() && v_floor > 0.0) {
                    v.push(format!("power_stage.charging.v_floor must be positive (got {v_floor})"));
                }
            }
        }
        v
    }
}

/// What the regulator output feeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LoadSpec {
    Resistor {
        ohms: f64,
    },
    Supercapacitor(SupercapState),
    /// Supercapacitor that also powers a device switching between an active
    /// and an idle current draw.
    DutyCycled {
        supercap: SupercapState,
        active_current: f64,
        idle_current: f64,
        period: f64,
        duty: f64,
    },
}

impl LoadSpec {
    pub fn supercap(&self) -> Option<&SupercapState> {
        match self {
            LoadSpec::Resistor { .. } => None,
            LoadSpec::Supercapacitor(s) | LoadSpec::DutyCycled { supercap: s, .. } => Some(s),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match *self {
            LoadSpec::Resistor { ohms } => {
                if !(ohms.is_finite() && ohms > 0.0) {
                    v.push(format!("load.ohms must be positive (got {ohms})"));
                }
            }
            LoadSpec::Supercapacitor(s) => v.extend(s.violations()),
            LoadSpec::DutyCycled {
                supercap,
                active_current,
                idle_current,
                period,
                duty,
            } => {
                v.extend(supercap.violations());
                if !(active_current.is_finite() && active_current >= 0.0) {
                    v.push(format!("load.active_current must be >= 0 (got {active_current})"));
                }
                if !(idle_current.is_finite() && idle_current >= 0.0) {
                    v.push(format!("load.idle_current must be >= 0 (got {idle_current})"));
                }
                if !(period.is_finite() && period > 0.0) {
                    v.push(format!("load.period must be positive (got {period})"));
                }
                if !(0.0..=1.0).contains(&duty) {
                    v.push(format!("load.duty must lie in [0, 1] (got {duty})"));
                }
            }
        }
        v
    }

    /// Current drawn from the storage at time `t` (duty-cycled loads only).
    pub fn draw_at(&self, t: f64) -> f64 {
        match *self {
            LoadSpec::DutyCycled {
                active_current,
                idle_current,
                period,
                duty,
                ..
            } => {
                if (t / period).fract() < duty {
                    active_current
                } else {
                    idle_current
                }
            }
            _ => 0.0,
        }
    }
}

/// Full-bridge rectification followed by the input shunt clamp.
pub fn rectify(w: &Waveform, diode_drop: f64, v_shunt_clamp: f64) -> Waveform {
    let samples = w
        .samples
        .iter()
        .map(|v| (v.abs() - 2.0 * diode_drop).max(0.0).min(v_shunt_clamp))
        .collect();
    Waveform { dt: w.dt, samples }
}

fn check_load(r_load: f64) -> Result<()> {
    if r_load.is_finite() && r_load > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "load resistance must be positive (got {r_load} ohm)"
        )))
    }
}

/// Ohm's law at the regulated output.
pub fn stable_output_current(v_out: f64, r_load: f64) -> Result<f64> {
    check_load(r_load)?;
    Ok(v_out / r_load)
}

pub fn output_power(v_out: f64, r_load: f64) -> Result<f64> {
    check_load(r_load)?;
    Ok(v_out * v_out / r_load)
}

/// Regulator output current into storage at `v_cap`; zero at and above the
/// band's upper edge.
pub fn charging_current(v_cap: f64, params: &PowerStageParams) -> f64 {
    if v_cap >= params.cutoff() {
        0.0
    } else {
        params.charging.uncut_current(v_cap).max(0.0)
    }
}

/// Average power a capacitive piezo source of open-circuit amplitude
/// `v_open` can push through a full bridge into a DC rail.
///
/// Each half cycle moves `2·C·v_open` of charge; `2·C·v_rail` of it is spent
/// flipping the electrode voltage, so `P = 4·f·C·v_rail·(v_open − v_rail)`.
/// The rail sits at the power-optimal `v_open/2` unless the shunt holds it
/// lower. Bridge drops are subtracted from `v_open` first.
pub fn harvestable_power(v_open_amp: f64, frequency: f64, c_piezo: f64, diode_drop: f64, v_shunt_clamp: f64) -> f64 {
    let v_open = (v_open_amp - 2.0 * diode_drop).max(0.0);
    let v_rail = (0.5 * v_open).min(v_shunt_clamp);
    4.0 * frequency * c_piezo * v_rail * (v_open - v_rail)
}

/// Upper bound on the regulated output current given the harvested power.
/// Zero when the bridge cannot lift the rail above the setpoint.
pub fn harvest_limited_current(params: &PowerStageParams, v_open_amp: f64, frequency: f64, c_piezo: f64) -> f64 {
    let v_open = v_open_amp - 2.0 * params.diode_drop;
    if v_open <= params.v_out_setpoint {
        return 0.0;
    }
    let p = harvestable_power(v_open_amp, frequency, c_piezo, params.diode_drop, params.v_shunt_clamp);
    params.harvest_efficiency * p / params.v_out_setpoint
}
