//! Scenario, parameter and observation files (TOML) and charge-curve CSV.
//!
//! Files use SI keys plus a few explicitly suffixed convenience units
//! (`_mm`, `_g`, `_ua`, `_ma`, `_mw`, `_nf`, `kohm`). Each quantity may be
//! given under exactly one of its keys. Unknown keys are rejected. Omitted
//! sections and fields fall back to the board and harvester defaults, except
//! that the profile frequency, one base-motion magnitude, the charging model
//! and the load kind are required.
//!
//! ```toml
//! name = "B"
//!
//! [profile]
//! frequency_hz = 23.5
//! base_displacement_pp_mm = 0.405
//!
//! [power_stage.charging]
//! model = "constant_current"
//! i_cc_ua = 211.8
//!
//! [load]
//! kind = "supercapacitor"
//! capacitance_f = 1.2
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ChargeCurve, CurveRow, CurveSummary, Scenario, SimConfig};
use crate::error::{Error, Result};
use crate::harvester::{HarvesterParams, Observation};
use crate::kinematics::{Acceleration, BaseMotion, Convention, Displacement, Frequency, VibrationProfile};
use crate::power_stage::{ChargingModel, LoadSpec, PowerStageParams, DEFAULT_V_FLOOR_V};
use crate::storage::SupercapState;

pub const CSV_HEADER: &str = "t_s,v_cap_V,i_out_A,p_out_W";

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    profile: Option<RawProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    harvester: Option<RawHarvester>,
    power_stage: Option<RawPowerStage>,
    load: Option<RawLoad>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<RawSim>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    frequency_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_displacement_pp_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_displacement_pp_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_acceleration_pp_ms2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_acceleration_pp_g: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawHarvester {
    #[serde(skip_serializing_if = "Option::is_none")]
    f_unloaded_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m_eff_kg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m_eff_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m_tip_kg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m_tip_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gain_v_per_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_sat_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_piezo_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_piezo_nf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_rating_v: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawPowerStage {
    #[serde(skip_serializing_if = "Option::is_none")]
    v_shunt_clamp_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_out_setpoint_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_out_band_v: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diode_drop_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    harvest_efficiency: Option<f64>,
    charging: Option<RawCharging>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawCharging {
    model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    i_cc_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    i_cc_ua: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_in_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_in_mw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    efficiency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_floor_v: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ohms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kohm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacitance_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_rating_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_initial_v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leakage_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leakage_ua: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    esr_ohm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_ma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_ua: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    idle_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    idle_ua: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    period_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    duty: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    #[serde(skip_serializing_if = "Option::is_none")]
    duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    record_interval_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v_full_v: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParamsFile {
    harvester: RawHarvester,
}

#[derive(Debug, Serialize)]
struct RawParamsOut {
    harvester: RawHarvester,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservationFile {
    #[serde(default)]
    observation: Vec<RawObservation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservation {
    frequency_hz: Option<f64>,
    base_displacement_pp_m: Option<f64>,
    base_displacement_pp_mm: Option<f64>,
    base_acceleration_pp_ms2: Option<f64>,
    base_acceleration_pp_g: Option<f64>,
    measured_vpp: Option<f64>,
}

/// Collects violations while converting raw sections.
struct Checker {
    errors: Vec<String>,
}

impl Checker {
    /// At most one of the alternative keys, scaled to SI.
    fn one_of(&mut self, section: &str, options: &[(&str, Option<f64>, f64)]) -> Option<f64> {
        let given: Vec<_> = options.iter().filter(|(_, v, _)| v.is_some()).collect();
        if given.len() > 1 {
            let keys: Vec<_> = given.iter().map(|(k, _, _)| format!("{section}.{k}")).collect();
            self.errors.push(format!("give only one of {}", keys.join(", ")));
            return None;
        }
        given.first().map(|(_, v, scale)| v.unwrap() * scale)
    }

    fn require<T>(&mut self, what: &str, v: Option<T>) -> Option<T> {
        if v.is_none() {
            self.errors.push(format!("missing {what}"));
        }
        v
    }

    fn push(&mut self, msg: String) {
        self.errors.push(msg);
    }
}

fn profile_from_parts(
    c: &mut Checker,
    section: &str,
    frequency_hz: Option<f64>,
    d_m: Option<f64>,
    d_mm: Option<f64>,
    a_ms2: Option<f64>,
    a_g: Option<f64>,
) -> Option<VibrationProfile> {
    let freq = c.require(&format!("{section}.frequency_hz"), frequency_hz);
    let freq = freq.and_then(|f| match Frequency::new(f) {
        Ok(f) => Some(f),
        Err(e) => {
            c.push(format!("{section}.frequency_hz: {e}"));
            None
        }
    });
    let disp = c.one_of(
        section,
        &[
            ("base_displacement_pp_m", d_m, 1.0),
            ("base_displacement_pp_mm", d_mm, 1e-3),
        ],
    );
    let acc = c.one_of(
        section,
        &[
            ("base_acceleration_pp_ms2", a_ms2, 1.0),
            ("base_acceleration_pp_g", a_g, crate::kinematics::STANDARD_GRAVITY),
        ],
    );
    let motion = match (disp, acc) {
        (Some(_), Some(_)) => {
            c.push(format!(
                "{section}: give either a base displacement or a base acceleration, not both"
            ));
            None
        }
        (None, None) => {
            c.push(format!("{section}: missing base displacement or base acceleration"));
            None
        }
        (Some(d), None) => match Displacement::peak_to_peak(d) {
            Ok(d) => Some(BaseMotion::Displacement(d)),
            Err(e) => {
                c.push(format!("{section}: {e}"));
                None
            }
        },
        (None, Some(a)) => match Acceleration::peak_to_peak(a) {
            Ok(a) => Some(BaseMotion::Acceleration(a)),
            Err(e) => {
                c.push(format!("{section}: {e}"));
                None
            }
        },
    };
    Some(VibrationProfile {
        frequency: freq?,
        motion: motion?,
    })
}

fn harvester_from_raw(c: &mut Checker, raw: &RawHarvester) -> HarvesterParams {
    let d = HarvesterParams::ppa2011_tuned();
    HarvesterParams {
        f_unloaded: raw.f_unloaded_hz.unwrap_or(d.f_unloaded),
        m_eff: c
            .one_of(
                "harvester",
                &[("m_eff_kg", raw.m_eff_kg, 1.0), ("m_eff_g", raw.m_eff_g, 1e-3)],
            )
            .unwrap_or(d.m_eff),
        m_tip: c
            .one_of(
                "harvester",
                &[("m_tip_kg", raw.m_tip_kg, 1.0), ("m_tip_g", raw.m_tip_g, 1e-3)],
            )
            .unwrap_or(d.m_tip),
        zeta: raw.zeta.unwrap_or(d.zeta),
        gain_v: raw.gain_v_per_m.unwrap_or(d.gain_v),
        v_sat: raw.v_sat_v.unwrap_or(d.v_sat),
        c_piezo: c
            .one_of(
                "harvester",
                &[("c_piezo_f", raw.c_piezo_f, 1.0), ("c_piezo_nf", raw.c_piezo_nf, 1e-9)],
            )
            .unwrap_or(d.c_piezo),
        v_rating: raw.v_rating_v.unwrap_or(d.v_rating),
    }
}

fn harvester_to_raw(p: &HarvesterParams) -> RawHarvester {
    RawHarvester {
        f_unloaded_hz: Some(p.f_unloaded),
        m_eff_g: Some(p.m_eff * 1e3),
        m_tip_g: Some(p.m_tip * 1e3),
        zeta: Some(p.zeta),
        gain_v_per_m: Some(p.gain_v),
        v_sat_v: Some(p.v_sat),
        c_piezo_nf: Some(p.c_piezo * 1e9),
        v_rating_v: Some(p.v_rating),
        ..Default::default()
    }
}

fn charging_from_raw(c: &mut Checker, raw: Option<&RawCharging>) -> Option<ChargingModel> {
    let raw = c.require("section [power_stage.charging]", raw)?;
    let model = c.require("power_stage.charging.model", raw.model.as_deref())?;
    let i_cc = c.one_of(
        "power_stage.charging",
        &[("i_cc_a", raw.i_cc_a, 1.0), ("i_cc_ua", raw.i_cc_ua, 1e-6)],
    );
    let p_in = c.one_of(
        "power_stage.charging",
        &[("p_in_w", raw.p_in_w, 1.0), ("p_in_mw", raw.p_in_mw, 1e-3)],
    );
    match model {
        "constant_current" => {
            for (key, given) in [
                ("p_in", p_in.is_some()),
                ("efficiency", raw.efficiency.is_some()),
                ("v_floor_v", raw.v_floor_v.is_some()),
            ] {
                if given {
                    c.push(format!("power_stage.charging.{key} does not apply to constant_current"));
                }
            }
            let i_cc = c.require("power_stage.charging.i_cc_a or i_cc_ua", i_cc)?;
            Some(ChargingModel::ConstantCurrent { i_cc })
        }
        "constant_power" => {
            if i_cc.is_some() {
                c.push("power_stage.charging.i_cc does not apply to constant_power".into());
            }
            let p_in = c.require("power_stage.charging.p_in_w or p_in_mw", p_in)?;
            Some(ChargingModel::ConstantPower {
                p_in,
                efficiency: raw.efficiency.unwrap_or(1.0),
                v_floor: raw.v_floor_v.unwrap_or(DEFAULT_V_FLOOR_V),
            })
        }
        other => {
            c.push(format!(
                "power_stage.charging.model `{other}` is not one of constant_current, constant_power"
            ));
            None
        }
    }
}

fn load_from_raw(c: &mut Checker, raw: Option<&RawLoad>) -> Option<LoadSpec> {
    let raw = c.require("section [load]", raw)?;
    let kind = c.require("load.kind", raw.kind.as_deref())?;
    let ohms = c.one_of("load", &[("ohms", raw.ohms, 1.0), ("kohm", raw.kohm, 1e3)]);
    let leakage = c.one_of(
        "load",
        &[("leakage_a", raw.leakage_a, 1.0), ("leakage_ua", raw.leakage_ua, 1e-6)],
    );
    let active = c.one_of(
        "load",
        &[
            ("active_a", raw.active_a, 1.0),
            ("active_ma", raw.active_ma, 1e-3),
            ("active_ua", raw.active_ua, 1e-6),
        ],
    );
    let idle = c.one_of("load", &[("idle_a", raw.idle_a, 1.0), ("idle_ua", raw.idle_ua, 1e-6)]);

    let cap_keys_given = raw.capacitance_f.is_some()
        || raw.v_rating_v.is_some()
        || raw.v_initial_v.is_some()
        || leakage.is_some()
        || raw.esr_ohm.is_some();
    let duty_keys_given = active.is_some() || idle.is_some() || raw.period_s.is_some() || raw.duty.is_some();
    let supercap = || SupercapState {
        capacitance: raw.capacitance_f.unwrap_or(crate::storage::DEFAULT_CAPACITANCE_F),
        v_rating: raw.v_rating_v.unwrap_or(crate::storage::DEFAULT_RATING_V),
        v_now: raw.v_initial_v.unwrap_or(0.0),
        leakage_current: leakage.unwrap_or(0.0),
        esr: raw.esr_ohm.unwrap_or(0.0),
    };

    match kind {
        "resistor" => {
            if cap_keys_given || duty_keys_given {
                c.push("load: capacitor and duty-cycle keys do not apply to kind = \"resistor\"".into());
            }
            let ohms = c.require("load.ohms or load.kohm", ohms)?;
            Some(LoadSpec::Resistor { ohms })
        }
        "supercapacitor" => {
            if ohms.is_some() || duty_keys_given {
                c.push("load: resistor and duty-cycle keys do not apply to kind = \"supercapacitor\"".into());
            }
            Some(LoadSpec::Supercapacitor(supercap()))
        }
        "duty_cycled" => {
            if ohms.is_some() {
                c.push("load: resistor keys do not apply to kind = \"duty_cycled\"".into());
            }
            let active_current = c.require("load.active_a, active_ma or active_ua", active);
            let period = c.require("load.period_s", raw.period_s);
            let duty = c.require("load.duty", raw.duty);
            Some(LoadSpec::DutyCycled {
                supercap: supercap(),
                active_current: active_current?,
                idle_current: idle.unwrap_or(0.0),
                period: period?,
                duty: duty?,
            })
        }
        other => {
            c.push(format!(
                "load.kind `{other}` is not one of resistor, supercapacitor, duty_cycled"
            ));
            None
        }
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))
}

/// Parses and validates a scenario document; every violation is reported.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = parse_toml(text)?;
    let mut c = Checker { errors: Vec::new() };

    let profile = match c.require("section [profile]", raw.profile.as_ref()) {
        Some(p) => profile_from_parts(
            &mut c,
            "profile",
            p.frequency_hz,
            p.base_displacement_pp_m,
            p.base_displacement_pp_mm,
            p.base_acceleration_pp_ms2,
            p.base_acceleration_pp_g,
        ),
        None => None,
    };
    let harvester = harvester_from_raw(&mut c, raw.harvester.as_ref().unwrap_or(&RawHarvester::default()));

    let power_stage = raw.power_stage.as_ref().and_then(|ps| {
        let charging = charging_from_raw(&mut c, ps.charging.as_ref())?;
        let mut p = PowerStageParams::with_charging(charging);
        if let Some(v) = ps.v_shunt_clamp_v {
            p.v_shunt_clamp = v;
        }
        if let Some(v) = ps.v_out_setpoint_v {
            p.v_out_setpoint = v;
        }
        if let Some([lo, hi]) = ps.v_out_band_v {
            p.v_out_band = (lo, hi);
        }
        if let Some(v) = ps.diode_drop_v {
            p.diode_drop = v;
        }
        if let Some(v) = ps.harvest_efficiency {
            p.harvest_efficiency = v;
        }
        Some(p)
    });
    if raw.power_stage.is_none() {
        c.push("missing section [power_stage]".into());
    }
    let load = load_from_raw(&mut c, raw.load.as_ref());

    let d = SimConfig::default();
    let sim = raw.sim.as_ref().map_or(d, |s| SimConfig {
        duration: s.duration_s.unwrap_or(d.duration),
        dt: s.dt_s.unwrap_or(d.dt),
        record_interval: s.record_interval_s.unwrap_or(d.record_interval),
        v_full: s.v_full_v.unwrap_or(d.v_full),
    });

    let mut errors = c.errors;
    match (profile, power_stage, load) {
        (Some(profile), Some(power_stage), Some(load)) if errors.is_empty() => {
            let s = Scenario {
                name: raw.name.unwrap_or_else(|| "custom".into()),
                profile,
                harvester,
                power_stage,
                load,
                sim,
            };
            s.validate()?;
            Ok(s)
        }
        (profile, power_stage, load) => {
            // Still check the parts that did parse.
            errors.extend(harvester.violations());
            if let Some(p) = power_stage {
                errors.extend(p.violations());
            }
            if let Some(l) = load {
                errors.extend(l.violations());
            }
            let _ = profile;
            Err(Error::Validation(errors))
        }
    }
}

pub fn read_scenario(path: &std::path::Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// Renders a scenario as a document [`parse_scenario`] accepts.
pub fn scenario_to_toml(s: &Scenario) -> String {
    let (d_mm, a_g) = match s.profile.motion {
        BaseMotion::Displacement(d) => (Some(d.value_in(Convention::PeakToPeak) * 1e3), None),
        BaseMotion::Acceleration(a) => (None, Some(a.to_convention(Convention::PeakToPeak).in_g())),
    };
    let ps = &s.power_stage;
    let charging = match ps.charging {
        ChargingModel::ConstantCurrent { i_cc } => RawCharging {
            model: Some("constant_current".into()),
            i_cc_ua: Some(i_cc * 1e6),
            ..Default::default()
        },
        ChargingModel::ConstantPower {
            p_in,
            efficiency,
            v_floor,
        } => RawCharging {
            model: Some("constant_power".into()),
            p_in_mw: Some(p_in * 1e3),
            efficiency: Some(efficiency),
            v_floor_v: Some(v_floor),
            ..Default::default()
        },
    };
    let cap_fields = |c: &SupercapState| RawLoad {
        capacitance_f: Some(c.capacitance),
        v_rating_v: Some(c.v_rating),
        v_initial_v: Some(c.v_now),
        leakage_ua: Some(c.leakage_current * 1e6),
        esr_ohm: Some(c.esr),
        ..Default::default()
    };
    let load = match s.load {
        LoadSpec::Resistor { ohms } => RawLoad {
            kind: Some("resistor".into()),
            ohms: Some(ohms),
            ..Default::default()
        },
        LoadSpec::Supercapacitor(c) => RawLoad {
            kind: Some("supercapacitor".into()),
            ..cap_fields(&c)
        },
        LoadSpec::DutyCycled {
            supercap,
            active_current,
            idle_current,
            period,
            duty,
        } => RawLoad {
            kind: Some("duty_cycled".into()),
            active_ua: Some(active_current * 1e6),
            idle_ua: Some(idle_current * 1e6),
            period_s: Some(period),
            duty: Some(duty),
            ..cap_fields(&supercap)
        },
    };
    let raw = RawScenario {
        name: Some(s.name.clone()),
        profile: Some(RawProfile {
            frequency_hz: Some(s.profile.frequency.hertz()),
            base_displacement_pp_mm: d_mm,
            base_acceleration_pp_g: a_g,
            ..Default::default()
        }),
        harvester: Some(harvester_to_raw(&s.harvester)),
        power_stage: Some(RawPowerStage {
            v_shunt_clamp_v: Some(ps.v_shunt_clamp),
            v_out_setpoint_v: Some(ps.v_out_setpoint),
            v_out_band_v: Some([ps.v_out_band.0, ps.v_out_band.1]),
            diode_drop_v: Some(ps.diode_drop),
            harvest_efficiency: Some(ps.harvest_efficiency),
            charging: Some(charging),
        }),
        load: Some(load),
        sim: Some(RawSim {
            duration_s: Some(s.sim.duration),
            dt_s: Some(s.sim.dt),
            record_interval_s: Some(s.sim.record_interval),
            v_full_v: Some(s.sim.v_full),
        }),
    };
    toml::to_string(&raw).expect("scenario serialises")
}

/// Parses a document holding a `[harvester]` table.
pub fn parse_harvester_params(text: &str) -> Result<HarvesterParams> {
    let raw: RawParamsFile = parse_toml(text)?;
    let mut c = Checker { errors: Vec::new() };
    let p = harvester_from_raw(&mut c, &raw.harvester);
    c.errors.extend(p.violations());
    if c.errors.is_empty() {
        Ok(p)
    } else {
        Err(Error::Validation(c.errors))
    }
}

pub fn harvester_params_to_toml(p: &HarvesterParams) -> String {
    toml::to_string(&RawParamsOut {
        harvester: harvester_to_raw(p),
    })
    .expect("params serialise")
}

/// Parses `[[observation]]` tables: frequency, one base magnitude and
/// `measured_vpp` each.
pub fn parse_observations(text: &str) -> Result<Vec<Observation>> {
    let raw: RawObservationFile = parse_toml(text)?;
    let mut c = Checker { errors: Vec::new() };
    let mut out = Vec::new();
    for (i, o) in raw.observation.iter().enumerate() {
        let section = format!("observation[{i}]");
        let profile = profile_from_parts(
            &mut c,
            &section,
            o.frequency_hz,
            o.base_displacement_pp_m,
            o.base_displacement_pp_mm,
            o.base_acceleration_pp_ms2,
            o.base_acceleration_pp_g,
        );
        let vpp = c.require(&format!("{section}.measured_vpp"), o.measured_vpp);
        if let Some(v) = vpp {
            if !(v.is_finite() && v > 0.0) {
                c.push(format!("{section}.measured_vpp must be positive (got {v})"));
            }
        }
        if let (Some(profile), Some(measured_vpp)) = (profile, vpp) {
            out.push(Observation { profile, measured_vpp });
        }
    }
    if c.errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(c.errors))
    }
}

/// Writes the curve rows as CSV with full round-trip precision.
pub fn write_curve_csv<W: Write>(curve: &ChargeCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in &curve.rows {
        // Display keeps plain decimal notation with round-trip precision.
        w.write_record([r.t, r.v_cap, r.i_out, r.p_out].map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads CSV rows written by [`write_curve_csv`]. The summary is rebuilt
/// from the rows with the given half and full levels.
pub fn read_curve_csv<R: Read>(input: R, half_level: f64, full_level: f64) -> Result<ChargeCurve> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse(format!(
            "expected CSV header `{CSV_HEADER}`, got `{}`",
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (n, record) in reader.deserialize::<(f64, f64, f64, f64)>().enumerate() {
        let (t, v_cap, i_out, p_out) = record?;
        if rows.last().is_some_and(|r: &CurveRow| r.t >= t) {
            return Err(Error::Parse(format!("CSV line {}: time is not increasing", n + 2)));
        }
        rows.push(CurveRow { t, v_cap, i_out, p_out });
    }
    let (final_v, span) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (b.v_cap, b.t - a.t),
        _ => (f64::NAN, 0.0),
    };
    let charge: f64 = rows
        .windows(2)
        .map(|w| 0.5 * (w[0].i_out + w[1].i_out) * (w[1].t - w[0].t))
        .sum();
    let summary = CurveSummary {
        half_level,
        full_level,
        t_half_capacity: super::crossing_time(&rows, half_level),
        t_full: super::crossing_time(&rows, full_level),
        final_v,
        avg_current: if span > 0.0 { charge / span } else { f64::NAN },
        output_power: f64::NAN,
        piezo_vpp: f64::NAN,
        piezo_clipped: false,
    };
    Ok(ChargeCurve { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{builtin_scenario, run, BuiltinId};
    use approx::assert_relative_eq;

    const B: &str = r#"
name = "B"

[profile]
frequency_hz = 23.5
base_displacement_pp_mm = 0.405

[power_stage.charging]
model = "constant_current"
i_cc_ua = 211.8

[load]
kind = "supercapacitor"
capacitance_f = 1.2
"#;

    #[test]
    fn minimal_document() {
        let s = parse_scenario(B).unwrap();
        assert_eq!(s.name, "B");
        assert_relative_eq!(s.profile.displacement().mm(), 0.405, max_relative = 1e-12);
        assert_eq!(
            s.power_stage.charging,
            ChargingModel::ConstantCurrent { i_cc: 211.8e-6 }
        );
        assert_eq!(s.harvester, HarvesterParams::ppa2011_tuned());
        assert_eq!(s.sim, SimConfig::default());
    }

    #[test]
    fn builtin_round_trips_through_toml() {
        for id in BuiltinId::ALL {
            let s = builtin_scenario(id);
            let text = scenario_to_toml(&s);
            let back = parse_scenario(&text).unwrap();
            assert_eq!(back.name, s.name);
            let (a, b) = (run(&s).unwrap(), run(&back).unwrap());
            assert_relative_eq!(
                a.summary.t_half_capacity.unwrap(),
                b.summary.t_half_capacity.unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = B.replace("capacitance_f = 1.2", "capacitance_f = 1.2\ncolour = 3");
        assert!(matches!(parse_scenario(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn every_violation_is_listed() {
        let text = r#"
[profile]
frequency_hz = -1
base_displacement_pp_mm = 0.4
base_acceleration_pp_g = 0.9

[power_stage.charging]
model = "constant_current"
i_cc_ua = 1
i_cc_a = 1e-6

[load]
kind = "resistor"
"#;
        match parse_scenario(text) {
            Err(Error::Validation(v)) => {
                assert!(v.len() >= 4, "{v:#?}");
                assert!(v.iter().any(|m| m.contains("frequency")));
                assert!(v.iter().any(|m| m.contains("not both")));
                assert!(v.iter().any(|m| m.contains("i_cc")));
                assert!(v.iter().any(|m| m.contains("load.ohms")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn acceleration_profile_and_infinite_saturation() {
        let text = r#"
[profile]
frequency_hz = 23.5
base_acceleration_pp_g = 0.52

[harvester]
v_sat_v = inf
c_piezo_nf = 190

[power_stage.charging]
model = "constant_power"
p_in_mw = 0.381

[load]
kind = "duty_cycled"
active_ma = 2
period_s = 30
duty = 0.1
"#;
        let s = parse_scenario(text).unwrap();
        assert!(s.harvester.v_sat.is_infinite());
        assert_relative_eq!(s.profile.displacement().mm(), 0.2339, max_relative = 1e-3);
        assert!(matches!(s.load, LoadSpec::DutyCycled { active_current, .. } if active_current == 2e-3));
        let again = parse_scenario(&scenario_to_toml(&s)).unwrap();
        assert!(again.harvester.v_sat.is_infinite());
    }

    #[test]
    fn observations() {
        let text = r#"
[[observation]]
frequency_hz = 23.5
base_displacement_pp_mm = 0.210
measured_vpp = 22.66

[[observation]]
frequency_hz = 23.5
base_displacement_pp_mm = 0.405
measured_vpp = 26.56
"#;
        let o = parse_observations(text).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o[1].measured_vpp, 26.56);
        assert!(parse_observations("").unwrap().is_empty());
        assert!(parse_observations("[[observation]]\nfrequency_hz = 23.5\n").is_err());
    }

    #[test]
    fn params_round_trip() {
        let p = HarvesterParams::ppa2011_tuned();
        let back = parse_harvester_params(&harvester_params_to_toml(&p)).unwrap();
        assert_relative_eq!(back.m_eff, p.m_eff, max_relative = 1e-12);
        assert_eq!(back.gain_v, p.gain_v);
        assert_eq!(back.v_sat, p.v_sat);
    }

    #[test]
    fn csv_round_trip() {
        let curve = run(&builtin_scenario(BuiltinId::B)).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&curve, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,v_cap_V,i_out_A,p_out_W\n0,0,"));
        assert!(!text.contains('e'), "no exponent notation");
        let back = read_curve_csv(text.as_bytes(), 0.95, 1.89).unwrap();
        assert_eq!(back.rows, curve.rows);
        assert!(read_curve_csv("a,b\n".as_bytes(), 0.95, 1.89).is_err());
    }
}
