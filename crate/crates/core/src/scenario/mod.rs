//! End-to-end pipeline: base excitation → harvester → power stage → storage.
//!
//! Capacitor charging spans hours while the mechanical transient dies out in
//! milliseconds, so a run drives the charging law from the harvester's
//! closed-form steady-state output rather than from a time-domain waveform.

mod compare;
pub mod file;
mod sweep;

pub use compare::{compare, ComparisonMetrics};
pub use sweep::{sweep, ParamPath, SweepRow};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harvester::{open_circuit_vpp, HarvesterParams};
use crate::kinematics::{Convention, Displacement, Frequency, VibrationProfile};
use crate::power_stage::{
    charging_current, harvest_limited_current, stable_output_current, ChargingModel, LoadSpec, PowerStageParams,
    DEFAULT_V_FLOOR_V,
};
use crate::storage::{SupercapState, DEFAULT_CAPACITANCE_F, DEFAULT_FULL_VOLTAGE, DEFAULT_RATING_V};

pub const DEFAULT_DT_S: f64 = 1.0;
pub const DEFAULT_RECORD_INTERVAL_S: f64 = 10.0;
pub const DEFAULT_DURATION_S: f64 = 5.0 * 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub duration: f64,
    pub dt: f64,
    pub record_interval: f64,
    /// Voltage the capacitor is considered full at; half capacity is half of it.
    pub v_full: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: DEFAULT_DURATION_S,
            dt: DEFAULT_DT_S,
            record_interval: DEFAULT_RECORD_INTERVAL_S,
            v_full: DEFAULT_FULL_VOLTAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub profile: VibrationProfile,
    pub harvester: HarvesterParams,
    pub power_stage: PowerStageParams,
    pub load: LoadSpec,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.harvester.violations();
        v.extend(self.power_stage.violations());
        v.extend(self.load.violations());
        let sim = &self.sim;
        if !(sim.duration.is_finite() && sim.duration > 0.0) {
            v.push(format!("sim.duration must be positive (got {})", sim.duration));
        }
        if !(sim.dt.is_finite() && sim.dt > 0.0) {
            v.push(format!("sim.dt must be positive (got {})", sim.dt));
        }
        if !(sim.record_interval >= sim.dt) {
            v.push(format!(
                "sim.record_interval ({}) must be >= sim.dt ({})",
                sim.record_interval, sim.dt
            ));
        }
        if let Some(cap) = self.load.supercap() {
            if !(sim.v_full > 0.0 && sim.v_full <= cap.v_rating) {
                v.push(format!(
                    "sim.v_full ({}) must lie in (0, supercap rating {}]",
                    sim.v_full, cap.v_rating
                ));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Same scenario under a constant-power law that delivers the current
    /// law's power at the setpoint.
    pub fn with_constant_power(mut self) -> Self {
        if let ChargingModel::ConstantCurrent { i_cc } = self.power_stage.charging {
            self.power_stage.charging = ChargingModel::ConstantPower {
                p_in: i_cc * self.power_stage.v_out_setpoint,
                efficiency: 1.0,
                v_floor: DEFAULT_V_FLOOR_V,
            };
        }
        self
    }

    /// Same scenario under a constant-current law carrying the power law's
    /// current at the setpoint.
    pub fn with_constant_current(mut self) -> Self {
        if let ChargingModel::ConstantPower { .. } = self.power_stage.charging {
            let i_cc =
                self.power_stage.charging.power_at(self.power_stage.v_out_setpoint) / self.power_stage.v_out_setpoint;
            self.power_stage.charging = ChargingModel::ConstantCurrent { i_cc };
        }
        self
    }
}

/// The two measured bench scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BuiltinId {
    A,
    B,
}

impl BuiltinId {
    pub const ALL: [BuiltinId; 2] = [BuiltinId::A, BuiltinId::B];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "A" | "a" => Some(BuiltinId::A),
            "B" | "b" => Some(BuiltinId::B),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BuiltinId::A => "A",
            BuiltinId::B => "B",
        }
    }

    /// Bench measurements for this scenario.
    pub fn reference(self) -> MeasuredReference {
        match self {
            BuiltinId::A => MeasuredReference {
                frequency_hz: 23.5,
                generator_drive_vpp: 10.0,
                accel_pp_g: 0.52,
                displacement_pp_mm: 0.210,
                generator_output_vpp: 1.367,
                piezo_vpp: 22.66,
                stable_load_ohms: 10.7e3,
                stable_current_band: (165e-6, 169e-6),
                full_charge_min: 210.0,
                half_charge_min: 100.0,
            },
            BuiltinId::B => MeasuredReference {
                frequency_hz: 23.5,
                generator_drive_vpp: 16.0,
                accel_pp_g: 0.98,
                displacement_pp_mm: 0.405,
                generator_output_vpp: 1.797,
                piezo_vpp: 26.56,
                stable_load_ohms: 8.5e3,
                stable_current_band: (209e-6, 213e-6),
                full_charge_min: 160.0,
                half_charge_min: 72.0,
            },
        }
    }
}

/// Values measured on the bench for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredReference {
    pub frequency_hz: f64,
    /// Signal generator setting, Vpp.
    pub generator_drive_vpp: f64,
    /// IMU acceleration, g peak-to-peak.
    pub accel_pp_g: f64,
    /// Displacement, mm peak-to-peak.
    pub displacement_pp_mm: f64,
    /// Voltage across the shaker coil, Vpp.
    pub generator_output_vpp: f64,
    /// Open-circuit piezo voltage, Vpp.
    pub piezo_vpp: f64,
    /// Potentiometer setting at which the output current was stable, ohm.
    pub stable_load_ohms: f64,
    /// Range of the stable output current, A.
    pub stable_current_band: (f64, f64),
    /// Observed time to the flat part of the charge curve (a lower bound), min.
    pub full_charge_min: f64,
    /// Observed approximate time to half charge, min.
    pub half_charge_min: f64,
}

/// Builds one of the measured scenarios with the constant-current law.
pub fn builtin_scenario(id: BuiltinId) -> Scenario {
    let r = id.reference();
    let profile = VibrationProfile::from_displacement(
        Frequency::new(r.frequency_hz).expect("positive"),
        Displacement::from_mm(r.displacement_pp_mm, Convention::PeakToPeak).expect("non-negative"),
    );
    let mut power_stage = PowerStageParams::with_charging(ChargingModel::ConstantCurrent { i_cc: 0.0 });
    let i_cc = stable_output_current(power_stage.v_out_setpoint, r.stable_load_ohms).expect("positive load");
    power_stage.charging = ChargingModel::ConstantCurrent { i_cc };
    Scenario {
        name: id.name().to_string(),
        profile,
        harvester: HarvesterParams::ppa2011_tuned(),
        power_stage,
        load: LoadSpec::Supercapacitor(
            SupercapState::new(DEFAULT_CAPACITANCE_F, DEFAULT_RATING_V).expect("valid capacitor"),
        ),
        sim: SimConfig::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub t: f64,
    pub v_cap: f64,
    pub i_out: f64,
    pub p_out: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveSummary {
    /// Voltage that marks half capacity.
    pub half_level: f64,
    /// Voltage that marks a full charge: the configured full voltage, capped
    /// at the charging cutoff.
    pub full_level: f64,
    /// `None` when the level was not reached within the run.
    pub t_half_capacity: Option<f64>,
    pub t_full: Option<f64>,
    pub final_v: f64,
    /// Charge delivered by the regulator divided by the time it was
    /// delivering, A.
    pub avg_current: f64,
    /// Regulated output power at the setpoint, W.
    pub output_power: f64,
    pub piezo_vpp: f64,
    /// The piezo output hit its voltage rating.
    pub piezo_clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargeCurve {
    pub rows: Vec<CurveRow>,
    pub summary: CurveSummary,
}

impl ChargeCurve {
    /// First time the recorded voltage reaches `level`, interpolated
    /// linearly between rows.
    pub fn crossing_time(&self, level: f64) -> Option<f64> {
        crossing_time(&self.rows, level)
    }
}

pub(crate) fn crossing_time(rows: &[CurveRow], level: f64) -> Option<f64> {
    let first = rows.first()?;
    if first.v_cap >= level {
        return Some(first.t);
    }
    rows.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (a.v_cap < level && b.v_cap >= level).then(|| a.t + (b.t - a.t) * (level - a.v_cap) / (b.v_cap - a.v_cap))
    })
}

/// Runs a scenario. Deterministic: equal inputs give bit-identical curves.
pub fn run(s: &Scenario) -> Result<ChargeCurve> {
    s.validate()?;
    let stage = &s.power_stage;
    let piezo = open_circuit_vpp(&s.harvester, &s.profile)?;
    let ceiling = harvest_limited_current(
        stage,
        piezo.amplitude(),
        s.profile.frequency.hertz(),
        s.harvester.c_piezo,
    );
    let setpoint_current = charging_current(stage.v_out_setpoint.min(stage.cutoff() * (1.0 - 1e-12)), stage);
    let output_power = stage.v_out_setpoint * setpoint_current.min(ceiling);

    let steps = (s.sim.duration / s.sim.dt).round() as usize;
    let record_every = ((s.sim.record_interval / s.sim.dt).round() as usize).max(1);

    match s.load {
        LoadSpec::Resistor { ohms } => {
            // The regulator holds the setpoint unless the harvest cannot
            // supply the load, in which case the output sags to the power
            // the harvest can deliver.
            let available = ceiling * stage.v_out_setpoint;
            let demand = stage.v_out_setpoint * stage.v_out_setpoint / ohms;
            let v_out = if available >= demand {
                stage.v_out_setpoint
            } else {
                (available * ohms).sqrt()
            };
            let i_out = stable_output_current(v_out, ohms)?;
            let rows = (0..=steps)
                .step_by(record_every)
                .map(|k| CurveRow {
                    t: k as f64 * s.sim.dt,
                    v_cap: v_out,
                    i_out,
                    p_out: v_out * i_out,
                })
                .collect();
            Ok(ChargeCurve {
                rows,
                summary: CurveSummary {
                    half_level: f64::NAN,
                    full_level: f64::NAN,
                    t_half_capacity: None,
                    t_full: None,
                    final_v: v_out,
                    avg_current: i_out,
                    output_power: v_out * i_out,
                    piezo_vpp: piezo.vpp,
                    piezo_clipped: piezo.clipped,
                },
            })
        }
        LoadSpec::Supercapacitor(cap) | LoadSpec::DutyCycled { supercap: cap, .. } => {
            let cutoff = stage.cutoff().min(cap.v_rating);
            let half_level = 0.5 * s.sim.v_full;
            let full_level = s.sim.v_full.min(cutoff);
            let current_at = |v: f64| charging_current(v, stage).min(ceiling);

            let mut state = cap;
            let mut rows = Vec::with_capacity(steps / record_every + 1);
            let record = |t: f64, v: f64, rows: &mut Vec<CurveRow>| {
                let i = current_at(v);
                rows.push(CurveRow {
                    t,
                    v_cap: v,
                    i_out: i,
                    p_out: i * v,
                });
            };
            record(0.0, state.v_now, &mut rows);

            let mut t_half = (state.v_now >= half_level).then_some(0.0);
            let mut t_full = (state.v_now >= full_level).then_some(0.0);
            let mut delivered = 0.0;
            let mut delivering = 0.0;
            for k in 0..steps {
                let t = k as f64 * s.sim.dt;
                let i = current_at(state.v_now);
                let mut next = state.step_net(i, s.load.draw_at(t), s.sim.dt);
                delivered += i * s.sim.dt;
                if i > 0.0 {
                    delivering += s.sim.dt;
                }
                for (slot, level) in [(&mut t_half, half_level), (&mut t_full, full_level)] {
                    if slot.is_none() && state.v_now < level && next.v_now >= level {
                        *slot = Some(t + s.sim.dt * (level - state.v_now) / (next.v_now - state.v_now));
                    }
                }
                if state.v_now < cutoff && next.v_now > cutoff {
                    // The regulator stops at its band edge.
                    next.v_now = cutoff;
                }
                state = next;
                if (k + 1) % record_every == 0 {
                    record((k + 1) as f64 * s.sim.dt, state.v_now, &mut rows);
                }
            }

            Ok(ChargeCurve {
                rows,
                summary: CurveSummary {
                    half_level,
                    full_level,
                    t_half_capacity: t_half,
                    t_full,
                    final_v: state.v_now,
                    avg_current: if delivering > 0.0 { delivered / delivering } else { 0.0 },
                    output_power,
                    piezo_vpp: piezo.vpp,
                    piezo_clipped: piezo.clipped,
                },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::mil_std_check;
    use approx::assert_relative_eq;

    #[test]
    fn builtin_values() {
        let a = builtin_scenario(BuiltinId::A);
        assert_eq!(a.profile.frequency.hertz(), 23.5);
        let b = builtin_scenario(BuiltinId::B);
        assert_relative_eq!(b.profile.displacement().mm(), 0.405, max_relative = 1e-12);
        assert_eq!(b.profile.displacement().convention(), Convention::PeakToPeak);
        match b.power_stage.charging {
            ChargingModel::ConstantCurrent { i_cc } => assert_relative_eq!(i_cc * 1e6, 211.76, max_relative = 1e-4),
            _ => panic!("constant current expected"),
        }
        for id in BuiltinId::ALL {
            let s = builtin_scenario(id);
            assert!(s.validate().is_ok());
            assert!(mil_std_check(s.profile.frequency, s.profile.displacement()).compliant);
            assert_eq!(s.power_stage.v_out_band, (1.71, 1.89));
            assert_eq!(s.power_stage.v_shunt_clamp, 20.0);
            let cap = s.load.supercap().unwrap();
            assert_eq!((cap.capacitance, cap.v_rating), (1.2, 2.7));
        }
    }

    #[test]
    fn scenario_b_half_capacity() {
        let curve = run(&builtin_scenario(BuiltinId::B)).unwrap();
        let t = curve.summary.t_half_capacity.unwrap();
        assert_relative_eq!(t, 5382.0, max_relative = 1e-3);
    }

    #[test]
    fn charging_stops_at_band_edge() {
        let curve = run(&builtin_scenario(BuiltinId::A)).unwrap();
        assert_eq!(curve.summary.final_v, 1.89);
        assert!(curve.rows.iter().all(|r| r.v_cap <= 1.89));
        assert!(curve.summary.t_full.is_some());
        assert_eq!(curve.rows.last().unwrap().i_out, 0.0);
    }

    #[test]
    fn zero_excitation_is_flat() {
        let mut s = builtin_scenario(BuiltinId::B);
        s.profile = VibrationProfile::still(s.profile.frequency);
        let curve = run(&s).unwrap();
        assert!(curve.rows.iter().all(|r| r.v_cap == 0.0 && r.i_out == 0.0));
        assert_eq!(curve.summary.t_half_capacity, None);
    }

    #[test]
    fn rows_are_on_record_grid() {
        let curve = run(&builtin_scenario(BuiltinId::A)).unwrap();
        assert_eq!(curve.rows.len(), 1801);
        assert!(curve
            .rows
            .windows(2)
            .all(|w| w[1].t > w[0].t && w[1].v_cap >= w[0].v_cap));
        assert_eq!(curve.rows[1].t, 10.0);
    }

    #[test]
    fn resistor_load_follows_ohms_law() {
        let mut s = builtin_scenario(BuiltinId::B);
        s.load = LoadSpec::Resistor { ohms: 8.5e3 };
        let curve = run(&s).unwrap();
        for r in &curve.rows {
            assert_eq!(r.i_out, stable_output_current(r.v_cap, 8.5e3).unwrap());
        }
        assert_eq!(curve.summary.final_v, 1.8);

        // A load heavier than the harvest can carry sags the output.
        s.load = LoadSpec::Resistor { ohms: 100.0 };
        let curve = run(&s).unwrap();
        assert!(curve.summary.final_v < 1.8);
    }

    #[test]
    fn duty_cycled_load_slows_charging() {
        let base = builtin_scenario(BuiltinId::B);
        let mut s = base.clone();
        s.load = LoadSpec::DutyCycled {
            supercap: *base.load.supercap().unwrap(),
            active_current: 1e-3,
            idle_current: 1e-6,
            period: 60.0,
            duty: 0.05,
        };
        let loaded = run(&s).unwrap().summary.t_half_capacity.unwrap();
        let free = run(&base).unwrap().summary.t_half_capacity.unwrap();
        assert!(loaded > free);
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut s = builtin_scenario(BuiltinId::A);
        s.harvester.zeta = 2.0;
        s.sim.dt = 20.0;
        s.load = LoadSpec::Resistor { ohms: -1.0 };
        match run(&s) {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn model_switch_round_trips() {
        let s = builtin_scenario(BuiltinId::B);
        let back = s.clone().with_constant_power().with_constant_current();
        match (s.power_stage.charging, back.power_stage.charging) {
            (ChargingModel::ConstantCurrent { i_cc: a }, ChargingModel::ConstantCurrent { i_cc: b }) => {
                assert_relative_eq!(a, b, max_relative = 1e-12)
            }
            _ => panic!(),
        }
    }
}
