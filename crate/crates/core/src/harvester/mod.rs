//! Lumped model of a base-excited piezoelectric cantilever.
//!
//! The beam is a single-degree-of-freedom oscillator driven through its
//! clamp. The relative tip motion `z` obeys
//!
//! ```text
//! z'' + 2ζωₙ z' + ωₙ² z = -y''(t)
//! ```
//!
//! where `y` is the base displacement and `ωₙ` the resonance with the tip
//! mass attached. Open-circuit voltage is proportional to `z` and then
//! compressed by a soft `tanh` saturation, which reproduces the strongly
//! sub-linear growth of the measured voltage with drive amplitude.

mod calibration;

pub use calibration::{calibrate, CalibrationReport, FitMode, Observation};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinematics::{Convention, Displacement, Frequency, VibrationProfile};
use crate::ode;

/// Datasheet resonance of the bare PPA-2011 beam, Hz.
pub const PPA2011_RESONANCE_HZ: f64 = 178.0;
/// Electrode capacitance of the PPA-2011, F.
pub const PPA2011_CAPACITANCE_F: f64 = 190e-9;
/// Absolute voltage rating of the PPA-2011, V.
pub const PPA2011_VOLTAGE_RATING_V: f64 = 120.0;
/// Tip mass assembly: magnet, connection plate, three nuts and three screws.
pub const TIP_MASS_KG: f64 = (5.7 + 8.0 + 3.0 * 0.4 + 3.0 * 0.7) * 1e-3;
/// Resonance the tip mass was tuned to, Hz.
pub const TUNED_RESONANCE_HZ: f64 = 23.5;
pub const DEFAULT_DAMPING_RATIO: f64 = 0.05;

/// Open-circuit gain fitted to the two measured scenario voltages, V/m.
pub const CALIBRATED_GAIN_V_PER_M: f64 = 15623.296619654926;
/// Saturation amplitude fitted together with [`CALIBRATED_GAIN_V_PER_M`], V.
pub const CALIBRATED_V_SAT: f64 = 13.52957816078483;

/// Electromechanical parameters of the harvester.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarvesterParams {
    /// Resonance without tip mass, Hz.
    pub f_unloaded: f64,
    /// Effective modal mass of the bare beam, kg.
    pub m_eff: f64,
    /// Added tip mass, kg.
    pub m_tip: f64,
    pub zeta: f64,
    /// Open-circuit voltage per metre of relative tip displacement.
    pub gain_v: f64,
    /// Soft-saturation amplitude, V. `f64::INFINITY` disables saturation.
    pub v_sat: f64,
    /// Electrode capacitance, F.
    pub c_piezo: f64,
    /// Absolute voltage rating, V.
    pub v_rating: f64,
}

impl Default for HarvesterParams {
    fn default() -> Self {
        Self::ppa2011_tuned()
    }
}

impl HarvesterParams {
    /// PPA-2011 with the 17 g tip mass tuned to 23.5 Hz and the voltage
    /// mapping fitted to the scenario A/B measurements.
    pub fn ppa2011_tuned() -> Self {
        HarvesterParams {
            f_unloaded: PPA2011_RESONANCE_HZ,
            m_eff: tuned_effective_mass(PPA2011_RESONANCE_HZ, TIP_MASS_KG, TUNED_RESONANCE_HZ)
                .expect("tuned resonance lies below the datasheet resonance"),
            m_tip: TIP_MASS_KG,
            zeta: DEFAULT_DAMPING_RATIO,
            gain_v: CALIBRATED_GAIN_V_PER_M,
            v_sat: CALIBRATED_V_SAT,
            c_piezo: PPA2011_CAPACITANCE_F,
            v_rating: PPA2011_VOLTAGE_RATING_V,
        }
    }

    /// Lists every violated parameter invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut positive = |name: &str, x: f64| {
            if !(x.is_finite() && x > 0.0) {
                v.push(format!("harvester.{name} must be positive and finite (got {x})"));
            }
        };
        positive("f_unloaded", self.f_unloaded);
        positive("m_eff", self.m_eff);
        positive("gain_v", self.gain_v);
        positive("c_piezo", self.c_piezo);
        positive("v_rating", self.v_rating);
        if !(self.m_tip.is_finite() && self.m_tip >= 0.0) {
            v.push(format!("harvester.m_tip must be >= 0 (got {})", self.m_tip));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            v.push(format!("harvester.zeta must lie in (0, 1) (got {})", self.zeta));
        }
        if self.v_sat.is_nan() || self.v_sat <= 0.0 {
            v.push(format!(
                "harvester.v_sat must be positive or infinite (got {})",
                self.v_sat
            ));
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

    /// Maps a signed relative tip displacement to open-circuit voltage,
    /// before the rating clip.
    pub fn voltage_for_tip(&self, z: f64) -> f64 {
        let linear = self.gain_v * z;
        if self.v_sat.is_infinite() {
            linear
        } else {
            self.v_sat * (linear / self.v_sat).tanh()
        }
    }
}

/// Resonance with the tip mass attached, `f₀·√(m_eff / (m_eff + m_tip))`.
pub fn loaded_resonance(p: &HarvesterParams) -> Result<Frequency> {
    if !(p.m_eff > 0.0) || !(p.m_tip >= 0.0) {
        return Err(Error::domain(format!(
            "effective mass must be positive and tip mass non-negative (m_eff = {}, m_tip = {})",
            p.m_eff, p.m_tip
        )));
    }
    Frequency::new(p.f_unloaded * (p.m_eff / (p.m_eff + p.m_tip)).sqrt())
}

/// Effective beam mass that puts the loaded resonance at `f_target`.
pub fn tuned_effective_mass(f_unloaded: f64, m_tip: f64, f_target: f64) -> Result<f64> {
    if !(f_target > 0.0 && f_target < f_unloaded) || !(m_tip > 0.0) {
        return Err(Error::domain(format!(
            "cannot tune {f_unloaded} Hz down to {f_target} Hz with tip mass {m_tip} kg"
        )));
    }
    let ratio = (f_target / f_unloaded).powi(2);
    Ok(m_tip * ratio / (1.0 - ratio))
}

/// Amplitude of the steady-state relative tip motion under sinusoidal base
/// excitation: `r²Y / √((1 − r²)² + (2ζr)²)` with `r = f / f_loaded`.
pub fn steady_state_tip_displacement(p: &HarvesterParams, base: &VibrationProfile) -> Result<Displacement> {
    let fn_ = loaded_resonance(p)?;
    let y = base.displacement().value_in(Convention::Amplitude);
    let r = base.frequency.hertz() / fn_.hertz();
    Displacement::amplitude(transmissibility(r, p.zeta) * y)
}

/// Relative-motion transmissibility `|Z / Y|`.
fn transmissibility(r: f64, zeta: f64) -> f64 {
    let r2 = r * r;
    r2 / ((1.0 - r2).powi(2) + (2.0 * zeta * r).powi(2)).sqrt()
}

/// Open-circuit piezo voltage, peak-to-peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiezoOutput {
    pub vpp: f64,
    /// The unclipped output would have exceeded the voltage rating.
    pub clipped: bool,
}

impl PiezoOutput {
    pub fn amplitude(&self) -> f64 {
        self.vpp / 2.0
    }
}

pub fn open_circuit_vpp(p: &HarvesterParams, base: &VibrationProfile) -> Result<PiezoOutput> {
    let z = steady_state_tip_displacement(p, base)?.value();
    let v_amp = p.voltage_for_tip(z);
    let clipped = v_amp > p.v_rating;
    Ok(PiezoOutput {
        vpp: 2.0 * v_amp.min(p.v_rating),
        clipped,
    })
}

/// Uniformly sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub dt: f64,
    pub samples: Vec<f64>,
}

/// Open-circuit voltage trace of the harvester, V.
pub type PiezoWaveform = Waveform;

impl Waveform {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    /// Samples taken at or after `t_start`.
    pub fn tail(&self, t_start: f64) -> &[f64] {
        let first = ((t_start / self.dt).ceil().max(0.0) as usize).min(self.samples.len());
        &self.samples[first..]
    }

    /// Peak-to-peak swing of the samples at or after `t_start`.
    pub fn peak_to_peak_after(&self, t_start: f64) -> f64 {
        let tail = self.tail(t_start);
        if tail.is_empty() {
            return 0.0;
        }
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        hi - lo
    }
}

/// Default integration step: 200 samples per drive period.
pub fn default_step(f: Frequency) -> f64 {
    1.0 / (200.0 * f.hertz())
}

/// Time after which the free transient has decayed by `e^-20`.
pub fn settling_time(p: &HarvesterParams) -> Result<f64> {
    Ok(20.0 / (p.zeta * loaded_resonance(p)?.omega()))
}

/// Integrates the relative tip motion from rest, returning one sample per
/// step including `t = 0`.
pub fn simulate_tip_displacement(
    p: &HarvesterParams,
    base: &VibrationProfile,
    duration: f64,
    dt: f64,
) -> Result<Waveform> {
    p.validate()?;
    let f = base.frequency;
    let max_dt = 1.0 / (50.0 * f.hertz());
    if !(dt > 0.0 && dt <= max_dt) {
        return Err(Error::config(format!(
            "step {dt} s is outside (0, {max_dt}] s for a {f} drive"
        )));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::config(format!("duration must be positive (got {duration} s)")));
    }

    let wn = loaded_resonance(p)?.omega();
    let w = f.omega();
    let y = base.displacement().value_in(Convention::Amplitude);
    let damping = 2.0 * p.zeta * wn;
    let stiffness = wn * wn;
    // Base y = Y sin ωt, so -y'' = Yω² sin ωt.
    let forcing = y * w * w;
    let rhs = move |t: f64, s: &[f64; 2]| [s[1], forcing * (w * t).sin() - damping * s[1] - stiffness * s[0]];

    let steps = (duration / dt).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    ode::integrate(rhs, 0.0, [0.0, 0.0], dt, steps, |_, s| samples.push(s[0]));
    Ok(Waveform { dt, samples })
}

/// Time-domain open-circuit voltage under the given base motion.
pub fn simulate_waveform(
    p: &HarvesterParams,
    base: &VibrationProfile,
    duration: f64,
    dt: f64,
) -> Result<PiezoWaveform> {
    let tip = simulate_tip_displacement(p, base, duration, dt)?;
    let samples = tip
        .samples
        .iter()
        .map(|&z| p.voltage_for_tip(z).clamp(-p.v_rating, p.v_rating))
        .collect();
    Ok(Waveform { dt, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hz(v: f64) -> Frequency {
        Frequency::new(v).unwrap()
    }

    fn profile_amp(f: f64, y: f64) -> VibrationProfile {
        VibrationProfile::from_displacement(hz(f), Displacement::amplitude(y).unwrap())
    }

    fn linear(zeta: f64) -> HarvesterParams {
        HarvesterParams {
            zeta,
            gain_v: 1.0e4,
            v_sat: f64::INFINITY,
            ..HarvesterParams::ppa2011_tuned()
        }
    }

    #[test]
    fn tip_mass_sums_to_17_grams() {
        assert_relative_eq!(TIP_MASS_KG, 17e-3, max_relative = 1e-12);
    }

    #[test]
    fn resonance_without_tip_mass_is_datasheet_value() {
        let p = HarvesterParams {
            m_tip: 0.0,
            ..HarvesterParams::default()
        };
        assert_eq!(loaded_resonance(&p).unwrap().hertz(), 178.0);
    }

    #[test]
    fn equal_masses_divide_by_root_two() {
        let p = HarvesterParams {
            m_eff: 5e-3,
            m_tip: 5e-3,
            ..HarvesterParams::default()
        };
        assert_relative_eq!(
            loaded_resonance(&p).unwrap().hertz(),
            178.0 / 2f64.sqrt(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn tuned_effective_mass_matches_bisection() {
        // Bisection on f(m) = 178·√(m/(m+17 g)) − 23.5, independent of the closed form.
        let g = |m: f64| 178.0 * (m / (m + 17e-3)).sqrt() - 23.5;
        let (mut lo, mut hi) = (1e-9, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        let m = tuned_effective_mass(178.0, 17e-3, 23.5).unwrap();
        assert_relative_eq!(m, 0.5 * (lo + hi), max_relative = 1e-10);
        assert_relative_eq!(m * 1e3, 0.301565, max_relative = 1e-5);
        let p = HarvesterParams::ppa2011_tuned();
        assert_relative_eq!(loaded_resonance(&p).unwrap().hertz(), 23.5, max_relative = 1e-14);
    }

    #[test]
    fn bad_masses_are_domain_errors() {
        let p = HarvesterParams {
            m_eff: 0.0,
            ..HarvesterParams::default()
        };
        assert!(matches!(loaded_resonance(&p), Err(Error::Domain(_))));
        let p = HarvesterParams {
            m_tip: -1e-3,
            ..HarvesterParams::default()
        };
        assert!(matches!(loaded_resonance(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn tip_response_at_resonance() {
        let p = linear(0.05);
        let z = steady_state_tip_displacement(&p, &profile_amp(23.5, 0.105e-3)).unwrap();
        assert_relative_eq!(z.mm(), 1.05, max_relative = 1e-9);
        assert_eq!(z.convention(), Convention::Amplitude);
    }

    #[test]
    fn tip_response_limits() {
        let p = linear(1e-9);
        let z = steady_state_tip_displacement(&p, &profile_amp(23.5 * 2f64.sqrt(), 1e-4)).unwrap();
        assert_relative_eq!(z.value(), 2e-4, max_relative = 1e-9);
        let z = steady_state_tip_displacement(&linear(0.05), &profile_amp(1e-3, 1e-4)).unwrap();
        assert!(z.value() < 1e-12);
    }

    #[test]
    fn zero_excitation_gives_zero_volts() {
        let out = open_circuit_vpp(&HarvesterParams::default(), &VibrationProfile::still(hz(23.5))).unwrap();
        assert_eq!(out.vpp, 0.0);
        assert!(!out.clipped);
    }

    #[test]
    fn calibrated_params_reproduce_measured_voltages() {
        let p = HarvesterParams::ppa2011_tuned();
        for (mm, vpp) in [(0.210, 22.66), (0.405, 26.56)] {
            let base = VibrationProfile::from_displacement(
                hz(23.5),
                Displacement::from_mm(mm, Convention::PeakToPeak).unwrap(),
            );
            let out = open_circuit_vpp(&p, &base).unwrap();
            assert_relative_eq!(out.vpp, vpp, max_relative = 1e-9);
        }
    }

    #[test]
    fn rating_clip_is_flagged() {
        let p = HarvesterParams {
            v_sat: f64::INFINITY,
            ..HarvesterParams::default()
        };
        let out = open_circuit_vpp(&p, &profile_amp(23.5, 1e-3)).unwrap();
        assert!(out.clipped);
        assert_eq!(out.vpp, 240.0);
    }

    #[test]
    fn resonance_peak_from_grid_search() {
        for zeta in [0.01, 0.05, 0.1] {
            let p = HarvesterParams {
                zeta,
                ..HarvesterParams::default()
            };
            let fl = loaded_resonance(&p).unwrap().hertz();
            let (best_f, _) = (1..=4000)
                .map(|i| 0.5 * fl + i as f64 * fl / 4000.0)
                .map(|f| (f, open_circuit_vpp(&p, &profile_amp(f, 0.05e-3)).unwrap().vpp))
                .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            // Relative motion under displacement drive peaks slightly above ωn.
            let expected = fl / (1.0 - 2.0 * zeta * zeta).sqrt();
            assert!((best_f / expected - 1.0).abs() < 1e-3, "zeta {zeta}: peak at {best_f}");
        }
    }

    #[test]
    fn coarse_step_is_rejected() {
        let p = HarvesterParams::default();
        let base = profile_amp(23.5, 1e-4);
        let err = simulate_waveform(&p, &base, 1.0, 1.0 / (49.0 * 23.5)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn still_base_gives_flat_waveform() {
        let p = HarvesterParams::default();
        let w = simulate_waveform(&p, &VibrationProfile::still(hz(23.5)), 0.5, default_step(hz(23.5))).unwrap();
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn waveform_matches_closed_form_after_settling() {
        let p = HarvesterParams::ppa2011_tuned();
        let base = VibrationProfile::from_displacement(
            hz(23.5),
            Displacement::from_mm(0.210, Convention::PeakToPeak).unwrap(),
        );
        let settle = settling_time(&p).unwrap();
        let dt = default_step(base.frequency);
        let w = simulate_waveform(&p, &base, settle + 0.5, dt).unwrap();
        let closed = open_circuit_vpp(&p, &base).unwrap().vpp;
        let sim = w.peak_to_peak_after(settle);
        assert_relative_eq!(sim, closed, max_relative = 0.01);

        let w2 = simulate_waveform(&p, &base, settle + 0.5, dt / 2.0).unwrap();
        let sim2 = w2.peak_to_peak_after(settle);
        assert!((sim2 / sim - 1.0).abs() < 1e-3);
    }

    #[test]
    fn waveform_respects_rating() {
        let p = HarvesterParams {
            v_sat: f64::INFINITY,
            gain_v: 1e6,
            ..HarvesterParams::default()
        };
        let w = simulate_waveform(&p, &profile_amp(23.5, 1e-4), 0.5, default_step(hz(23.5))).unwrap();
        assert!(w.samples.iter().all(|v| v.abs() <= p.v_rating));
    }

    proptest! {
        #[test]
        fn resonance_decreases_with_tip_mass(m1 in 0.0f64..0.1, dm in 1e-6f64..0.1) {
            let a = HarvesterParams { m_tip: m1, ..HarvesterParams::default() };
            let b = HarvesterParams { m_tip: m1 + dm, ..HarvesterParams::default() };
            prop_assert!(loaded_resonance(&b).unwrap().hertz() < loaded_resonance(&a).unwrap().hertz());
        }

        #[test]
        fn output_is_monotone_and_bounded(f in 4.0f64..40.0, y1 in 0.0f64..2e-3, dy in 0.0f64..2e-3) {
            let p = HarvesterParams::default();
            let a = open_circuit_vpp(&p, &profile_amp(f, y1)).unwrap().vpp;
            let b = open_circuit_vpp(&p, &profile_amp(f, y1 + dy)).unwrap().vpp;
            prop_assert!(b >= a);
            prop_assert!(b <= 2.0 * p.v_sat && b <= 2.0 * p.v_rating);
        }

        #[test]
        fn unsaturated_output_is_homogeneous(f in 4.0f64..40.0, y in 1e-7f64..1e-5, k in 0.1f64..10.0) {
            let p = linear(0.05);
            let a = open_circuit_vpp(&p, &profile_amp(f, y)).unwrap().vpp;
            let b = open_circuit_vpp(&p, &profile_amp(f, k * y)).unwrap().vpp;
            prop_assert!((b - k * a).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }
}
