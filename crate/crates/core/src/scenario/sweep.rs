use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::{run, CurveSummary, Scenario};
use crate::error::{Error, Result};
use crate::kinematics::{Acceleration, BaseMotion, Convention, Displacement, Frequency};
use crate::power_stage::{ChargingModel, LoadSpec};

/// A numeric scenario field addressable by the same `section.key` name the
/// scenario file uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamPath {
    FrequencyHz,
    BaseDisplacementPpMm,
    BaseAccelerationPpG,
    Zeta,
    MTipG,
    MEffG,
    FUnloadedHz,
    GainVPerM,
    VSatV,
    CPiezoNf,
    ShuntClampV,
    SetpointV,
    DiodeDropV,
    HarvestEfficiency,
    ICcUa,
    PInMw,
    ChargingEfficiency,
    VFloorV,
    CapacitanceF,
    LeakageUa,
    VInitialV,
    LoadKohm,
    DtS,
    DurationS,
    VFullV,
}

const PATHS: &[(&str, ParamPath)] = &[
    ("profile.frequency_hz", ParamPath::FrequencyHz),
    ("profile.base_displacement_pp_mm", ParamPath::BaseDisplacementPpMm),
    ("profile.base_acceleration_pp_g", ParamPath::BaseAccelerationPpG),
    ("harvester.zeta", ParamPath::Zeta),
    ("harvester.m_tip_g", ParamPath::MTipG),
    ("harvester.m_eff_g", ParamPath::MEffG),
    ("harvester.f_unloaded_hz", ParamPath::FUnloadedHz),
    ("harvester.gain_v_per_m", ParamPath::GainVPerM),
    ("harvester.v_sat_v", ParamPath::VSatV),
    ("harvester.c_piezo_nf", ParamPath::CPiezoNf),
    ("power_stage.v_shunt_clamp_v", ParamPath::ShuntClampV),
    ("power_stage.v_out_setpoint_v", ParamPath::SetpointV),
    ("power_stage.diode_drop_v", ParamPath::DiodeDropV),
    ("power_stage.harvest_efficiency", ParamPath::HarvestEfficiency),
    ("power_stage.charging.i_cc_ua", ParamPath::ICcUa),
    ("power_stage.charging.p_in_mw", ParamPath::PInMw),
    ("power_stage.charging.efficiency", ParamPath::ChargingEfficiency),
    ("power_stage.charging.v_floor_v", ParamPath::VFloorV),
    ("load.capacitance_f", ParamPath::CapacitanceF),
    ("load.leakage_ua", ParamPath::LeakageUa),
    ("load.v_initial_v", ParamPath::VInitialV),
    ("load.kohm", ParamPath::LoadKohm),
    ("sim.dt_s", ParamPath::DtS),
    ("sim.duration_s", ParamPath::DurationS),
    ("sim.v_full_v", ParamPath::VFullV),
];

impl ParamPath {
    pub fn all() -> impl Iterator<Item = &'static str> {
        PATHS.iter().map(|(name, _)| *name)
    }

    pub fn name(self) -> &'static str {
        PATHS
            .iter()
            .find(|(_, p)| *p == self)
            .map(|(n, _)| *n)
            .expect("every path is listed")
    }

    /// Writes `value` into the field this path names.
    pub fn apply(self, s: &mut Scenario, value: f64) -> Result<()> {
        let mismatch = |what: &str| Error::config(format!("{} does not apply: {what}", self.name()));
        match self {
            ParamPath::FrequencyHz => s.profile.frequency = Frequency::new(value)?,
            ParamPath::BaseDisplacementPpMm => {
                s.profile.motion = BaseMotion::Displacement(Displacement::from_mm(value, Convention::PeakToPeak)?)
            }
            ParamPath::BaseAccelerationPpG => {
                s.profile.motion = BaseMotion::Acceleration(Acceleration::from_g(value, Convention::PeakToPeak)?)
            }
            ParamPath::Zeta => s.harvester.zeta = value,
            ParamPath::MTipG => s.harvester.m_tip = value * 1e-3,
            ParamPath::MEffG => s.harvester.m_eff = value * 1e-3,
            ParamPath::FUnloadedHz => s.harvester.f_unloaded = value,
            ParamPath::GainVPerM => s.harvester.gain_v = value,
            ParamPath::VSatV => s.harvester.v_sat = value,
            ParamPath::CPiezoNf => s.harvester.c_piezo = value * 1e-9,
            ParamPath::ShuntClampV => s.power_stage.v_shunt_clamp = value,
            ParamPath::SetpointV => s.power_stage.v_out_setpoint = value,
            ParamPath::DiodeDropV => s.power_stage.diode_drop = value,
            ParamPath::HarvestEfficiency => s.power_stage.harvest_efficiency = value,
            ParamPath::ICcUa => match &mut s.power_stage.charging {
                ChargingModel::ConstantCurrent { i_cc } => *i_cc = value * 1e-6,
                _ => return Err(mismatch("charging model is not constant_current")),
            },
            ParamPath::PInMw | ParamPath::ChargingEfficiency | ParamPath::VFloorV => {
                match &mut s.power_stage.charging {
                    ChargingModel::ConstantPower {
                        p_in,
                        efficiency,
                        v_floor,
                    } => match self {
                        ParamPath::PInMw => *p_in = value * 1e-3,
                        ParamPath::ChargingEfficiency => *efficiency = value,
                        _ => *v_floor = value,
                    },
                    _ => return Err(mismatch("charging model is not constant_power")),
                }
            }
            ParamPath::CapacitanceF | ParamPath::LeakageUa | ParamPath::VInitialV => {
                let cap = match &mut s.load {
                    LoadSpec::Supercapacitor(c) | LoadSpec::DutyCycled { supercap: c, .. } => c,
                    LoadSpec::Resistor { .. } => return Err(mismatch("load has no supercapacitor")),
                };
                match self {
                    ParamPath::CapacitanceF => cap.capacitance = value,
                    ParamPath::LeakageUa => cap.leakage_current = value * 1e-6,
                    _ => cap.v_now = value,
                }
            }
            ParamPath::LoadKohm => match &mut s.load {
                LoadSpec::Resistor { ohms } => *ohms = value * 1e3,
                _ => return Err(mismatch("load is not a resistor")),
            },
            ParamPath::DtS => s.sim.dt = value,
            ParamPath::DurationS => s.sim.duration = value,
            ParamPath::VFullV => s.sim.v_full = value,
        }
        Ok(())
    }
}

impl FromStr for ParamPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PATHS
            .iter()
            .find(|(name, _)| *name == s)
            .map(|(_, p)| *p)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown parameter path `{s}`; known paths: {}",
                    ParamPath::all().collect::<Vec<_>>().join(", ")
                ))
            })
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: CurveSummary,
}

/// One independent run per value, executed in parallel, rows in input order.
pub fn sweep(base: &Scenario, axis: ParamPath, values: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::config(format!("sweep value {bad} is not finite")));
    }
    values
        .par_iter()
        .map(|&value| {
            let mut s = base.clone();
            axis.apply(&mut s, value)?;
            let curve = run(&s)?;
            Ok(SweepRow {
                value,
                summary: curve.summary,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harvester::loaded_resonance;
    use crate::scenario::{builtin_scenario, BuiltinId};
    use crate::storage::constant_current_time;
    use approx::assert_relative_eq;

    #[test]
    fn unknown_path() {
        assert!(matches!("harvester.colour".parse::<ParamPath>(), Err(Error::Config(_))));
        for name in ParamPath::all() {
            assert_eq!(name.parse::<ParamPath>().unwrap().name(), name);
        }
    }

    #[test]
    fn mismatched_path_is_config_error() {
        let s = builtin_scenario(BuiltinId::A);
        assert!(matches!(sweep(&s, ParamPath::PInMw, &[0.3]), Err(Error::Config(_))));
        assert!(matches!(sweep(&s, ParamPath::LoadKohm, &[10.0]), Err(Error::Config(_))));
    }

    #[test]
    fn empty_sweep() {
        assert!(sweep(&builtin_scenario(BuiltinId::A), ParamPath::ICcUa, &[])
            .unwrap()
            .is_empty());
    }

    #[test]
    fn current_sweep_reproduces_full_times() {
        let base = builtin_scenario(BuiltinId::A);
        let rows = sweep(&base, ParamPath::ICcUa, &[168.2, 211.8]).unwrap();
        assert_eq!(rows[0].value, 168.2);
        for row in &rows {
            let expected = constant_current_time(1.2, 1.89, row.value * 1e-6);
            assert_relative_eq!(row.summary.t_full.unwrap(), expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn frequency_sweep_is_fastest_at_resonance() {
        let base = builtin_scenario(BuiltinId::B);
        let fl = loaded_resonance(&base.harvester).unwrap().hertz();
        let mut values: Vec<f64> = (8..=66).map(|i| i as f64 * 0.5).collect();
        values.push(fl);
        let rows = sweep(&base, ParamPath::FrequencyHz, &values).unwrap();
        let t = |r: &SweepRow| r.summary.t_half_capacity.unwrap_or(f64::INFINITY);
        let at_resonance = t(rows.last().unwrap());
        assert!(rows.iter().all(|r| t(r) >= at_resonance));
        assert!(t(&rows[0]) > at_resonance);
        assert!(rows
            .iter()
            .filter(|r| (r.value - fl).abs() > 5.0)
            .all(|r| t(r) > at_resonance));
    }
}
