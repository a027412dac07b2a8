//! Harmonic-motion arithmetic for sinusoidal base excitation.
//!
//! For a sinusoid of frequency `f` the displacement, velocity and
//! acceleration magnitudes are related by powers of the angular frequency
//! `ω = 2πf`:
//!
//! ```text
//! D = A / ω²        V = A / ω
//! ```
//!
//! Every magnitude carries its [`Convention`] explicitly. Zero-to-peak
//! (amplitude) and peak-to-peak values differ by exactly a factor of two and
//! mixing them up is the most common error when reading accelerometer traces,
//! so the conversions here never change the convention implicitly.
//!
//! [`mil_std_check`] evaluates a displacement against the MIL-STD-167-1A
//! environmental vibration table.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// Relative slack applied when comparing a displacement against a band
/// limit, so values entered in mm at exactly the limit survive unit scaling.
const LIMIT_SLACK: f64 = 1e-12;

/// Positive, finite frequency in hertz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Frequency(f64);

impl Frequency {
    pub fn new(hertz: f64) -> Result<Self> {
        if hertz.is_finite() && hertz > 0.0 {
            Ok(Frequency(hertz))
        } else {
            Err(Error::domain(format!(
                "frequency must be positive and finite, got {hertz} Hz"
            )))
        }
    }

    pub fn hertz(self) -> f64 {
        self.0
    }

    /// Angular frequency, rad/s.
    pub fn omega(self) -> f64 {
        2.0 * PI * self.0
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Hz", self.0)
    }
}

/// How a sinusoid magnitude is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Zero-to-peak, also called single amplitude.
    Amplitude,
    PeakToPeak,
}

impl Convention {
    /// Multiplier that takes a value in `self` to `target`.
    fn factor_to(self, target: Convention) -> f64 {
        match (self, target) {
            (Convention::Amplitude, Convention::PeakToPeak) => 2.0,
            (Convention::PeakToPeak, Convention::Amplitude) => 0.5,
            _ => 1.0,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Convention::Amplitude => "amp",
            Convention::PeakToPeak => "pp",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.suffix())
    }
}

macro_rules! harmonic_quantity {
    ($(#[$meta:meta])* $name:ident, $unit:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Serialize)]
        pub struct $name {
            value: f64,
            convention: Convention,
        }

        impl $name {
            #[doc = concat!("Builds a magnitude in ", $unit, "; rejects negative or non-finite values.")]
            pub fn new(value: f64, convention: Convention) -> Result<Self> {
                if value.is_finite() && value >= 0.0 {
                    Ok($name { value, convention })
                } else {
                    Err(Error::domain(format!(
                        concat!(stringify!($name), " must be finite and >= 0, got {} ", $unit),
                        value
                    )))
                }
            }

            pub fn amplitude(value: f64) -> Result<Self> {
                Self::new(value, Convention::Amplitude)
            }

            pub fn peak_to_peak(value: f64) -> Result<Self> {
                Self::new(value, Convention::PeakToPeak)
            }

            #[doc = concat!("Magnitude in ", $unit, ", in [`Self::convention`].")]
            pub fn value(&self) -> f64 {
                self.value
            }

            pub fn convention(&self) -> Convention {
                self.convention
            }

            /// Re-expresses the same motion in `target`.
            pub fn to_convention(self, target: Convention) -> Self {
                $name {
                    value: self.value * self.convention.factor_to(target),
                    convention: target,
                }
            }

            /// Value in the requested convention.
            pub fn value_in(&self, convention: Convention) -> f64 {
                self.to_convention(convention).value
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!("{} ", $unit, " {}"), self.value, self.convention)
            }
        }
    };
}

harmonic_quantity!(
    /// Acceleration magnitude of a sinusoidal motion, m/s².
    Acceleration,
    "m/s²"
);
harmonic_quantity!(
    /// Displacement magnitude of a sinusoidal motion, m.
    Displacement,
    "m"
);
harmonic_quantity!(
    /// Velocity magnitude of a sinusoidal motion, m/s.
    Velocity,
    "m/s"
);

impl Acceleration {
    /// Acceleration given in multiples of standard gravity.
    pub fn from_g(g_value: f64, convention: Convention) -> Result<Self> {
        Self::new(g_to_ms2(g_value), convention)
    }

    pub fn in_g(&self) -> f64 {
        self.value / STANDARD_GRAVITY
    }
}

impl Displacement {
    pub fn from_mm(mm: f64, convention: Convention) -> Result<Self> {
        Self::new(mm / 1000.0, convention)
    }

    pub fn mm(&self) -> f64 {
        self.value * 1000.0
    }
}

/// Converts g-units to m/s².
pub fn g_to_ms2(g_value: f64) -> f64 {
    g_value * STANDARD_GRAVITY
}

/// `D = A / (2πF)²`, keeping the input convention.
pub fn displacement_from_acceleration(a: Acceleration, f: Frequency) -> Displacement {
    let w = f.omega();
    Displacement {
        value: a.value / (w * w),
        convention: a.convention,
    }
}

/// `A = D · (2πF)²`, keeping the input convention.
pub fn acceleration_from_displacement(d: Displacement, f: Frequency) -> Acceleration {
    let w = f.omega();
    Acceleration {
        value: d.value * (w * w),
        convention: d.convention,
    }
}

/// `V = A / (2πF)`, keeping the input convention.
pub fn velocity_from_acceleration(a: Acceleration, f: Frequency) -> Velocity {
    Velocity {
        value: a.value / f.omega(),
        convention: a.convention,
    }
}

/// Magnitude that defines a base excitation; the other one is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMotion {
    Displacement(Displacement),
    Acceleration(Acceleration),
}

/// Sinusoidal base excitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VibrationProfile {
    pub frequency: Frequency,
    pub motion: BaseMotion,
}

impl VibrationProfile {
    pub fn from_displacement(frequency: Frequency, d: Displacement) -> Self {
        VibrationProfile {
            frequency,
            motion: BaseMotion::Displacement(d),
        }
    }

    pub fn from_acceleration(frequency: Frequency, a: Acceleration) -> Self {
        VibrationProfile {
            frequency,
            motion: BaseMotion::Acceleration(a),
        }
    }

    /// Motionless base at `frequency`.
    pub fn still(frequency: Frequency) -> Self {
        Self::from_displacement(
            frequency,
            Displacement {
                value: 0.0,
                convention: Convention::Amplitude,
            },
        )
    }

    pub fn displacement(&self) -> Displacement {
        match self.motion {
            BaseMotion::Displacement(d) => d,
            BaseMotion::Acceleration(a) => displacement_from_acceleration(a, self.frequency),
        }
    }

    pub fn acceleration(&self) -> Acceleration {
        match self.motion {
            BaseMotion::Displacement(d) => acceleration_from_displacement(d, self.frequency),
            BaseMotion::Acceleration(a) => a,
        }
    }

    /// Same motion magnitude at another frequency.
    pub fn with_frequency(&self, frequency: Frequency) -> Self {
        VibrationProfile { frequency, ..*self }
    }
}

/// Frequency bands of the MIL-STD-167-1A environmental vibration table.
///
/// The published table lists integer ranges (4-15, 16-25, 26-33 Hz); they are
/// read here as the contiguous intervals `[4, 15]`, `(15, 25]`, `(25, 33]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplianceBand {
    Band4To15,
    Band16To25,
    Band26To33,
    OutOfRange,
}

impl ComplianceBand {
    pub fn for_frequency(f: Frequency) -> Self {
        let hz = f.hertz();
        if (4.0..=15.0).contains(&hz) {
            ComplianceBand::Band4To15
        } else if hz > 15.0 && hz <= 25.0 {
            ComplianceBand::Band16To25
        } else if hz > 25.0 && hz <= 33.0 {
            ComplianceBand::Band26To33
        } else {
            ComplianceBand::OutOfRange
        }
    }

    /// Allowed single amplitude in metres, `None` outside the table.
    pub fn limit_single_amplitude(self) -> Option<f64> {
        match self {
            ComplianceBand::Band4To15 => Some(0.762e-3),
            ComplianceBand::Band16To25 => Some(0.508e-3),
            ComplianceBand::Band26To33 => Some(0.254e-3),
            ComplianceBand::OutOfRange => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ComplianceBand::Band4To15 => "4-15 Hz",
            ComplianceBand::Band16To25 => "16-25 Hz",
            ComplianceBand::Band26To33 => "26-33 Hz",
            ComplianceBand::OutOfRange => "out of range",
        }
    }
}

impl fmt::Display for ComplianceBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplianceVerdict {
    pub band: ComplianceBand,
    /// Band limit, m single amplitude.
    pub limit_single_amplitude: Option<f64>,
    /// The evaluated displacement, m single amplitude.
    pub single_amplitude: f64,
    pub compliant: bool,
}

/// Checks a vibratory displacement against MIL-STD-167-1A Table I.
pub fn mil_std_check(f: Frequency, d: Displacement) -> ComplianceVerdict {
    let band = ComplianceBand::for_frequency(f);
    let single_amplitude = d.value_in(Convention::Amplitude);
    let limit = band.limit_single_amplitude();
    let compliant = limit.is_some_and(|lim| single_amplitude <= lim * (1.0 + LIMIT_SLACK));
    ComplianceVerdict {
        band,
        limit_single_amplitude: limit,
        single_amplitude,
        compliant,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hz(v: f64) -> Frequency {
        Frequency::new(v).unwrap()
    }

    #[test]
    fn g_conversion() {
        assert_eq!(g_to_ms2(1.0), 9.80665);
        assert_eq!(g_to_ms2(0.0), 0.0);
        assert_relative_eq!(g_to_ms2(0.52), 5.099458, max_relative = 1e-12);
    }

    #[test]
    fn displacement_examples() {
        let d = displacement_from_acceleration(Acceleration::peak_to_peak(9.80665).unwrap(), hz(23.5));
        assert_eq!(d.convention(), Convention::PeakToPeak);
        assert_relative_eq!(d.mm(), 0.449806, max_relative = 1e-5);

        let d = displacement_from_acceleration(Acceleration::from_g(0.52, Convention::PeakToPeak).unwrap(), hz(23.5));
        assert_relative_eq!(d.mm(), 0.233899, max_relative = 1e-5);

        let zero = displacement_from_acceleration(Acceleration::amplitude(0.0).unwrap(), hz(23.5));
        assert_eq!(zero.value(), 0.0);
        assert_eq!(zero.convention(), Convention::Amplitude);
    }

    #[test]
    fn acceleration_examples() {
        let a = acceleration_from_displacement(
            Displacement::from_mm(0.449806, Convention::PeakToPeak).unwrap(),
            hz(23.5),
        );
        assert_relative_eq!(a.value(), 9.80665, max_relative = 1e-5);
        let zero = acceleration_from_displacement(Displacement::amplitude(0.0).unwrap(), hz(5.0));
        assert_eq!(zero.value(), 0.0);
    }

    #[test]
    fn velocity_examples() {
        let v = velocity_from_acceleration(Acceleration::amplitude(2.0 * PI).unwrap(), hz(1.0));
        assert_relative_eq!(v.value(), 1.0, max_relative = 1e-15);
        let v = velocity_from_acceleration(Acceleration::peak_to_peak(5.09946).unwrap(), hz(23.5));
        assert_relative_eq!(v.value(), 0.034536, max_relative = 1e-4);
        assert_eq!(v.convention(), Convention::PeakToPeak);
        let v = velocity_from_acceleration(Acceleration::peak_to_peak(0.0).unwrap(), hz(23.5));
        assert_eq!(v.value(), 0.0);
    }

    #[test]
    fn non_positive_frequency_is_rejected() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(Frequency::new(bad), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn negative_magnitudes_are_rejected() {
        assert!(Displacement::amplitude(-1e-6).is_err());
        assert!(Acceleration::peak_to_peak(f64::NAN).is_err());
    }

    #[test]
    fn convention_conversion() {
        let d = Displacement::from_mm(0.508, Convention::Amplitude).unwrap();
        assert_relative_eq!(
            d.to_convention(Convention::PeakToPeak).mm(),
            1.016,
            max_relative = 1e-12
        );
        let d = Displacement::from_mm(0.210, Convention::PeakToPeak).unwrap();
        assert_relative_eq!(d.to_convention(Convention::Amplitude).mm(), 0.105, max_relative = 1e-12);
        let a = Acceleration::amplitude(3.0).unwrap();
        assert_eq!(a.to_convention(Convention::Amplitude), a);
    }

    #[test]
    fn builtin_scenarios_are_compliant() {
        for mm in [0.210, 0.405] {
            let v = mil_std_check(hz(23.5), Displacement::from_mm(mm, Convention::PeakToPeak).unwrap());
            assert!(v.compliant);
            assert_eq!(v.band, ComplianceBand::Band16To25);
            assert_eq!(v.limit_single_amplitude, Some(0.508e-3));
            assert_relative_eq!(v.single_amplitude, mm / 2000.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn below_table_is_out_of_range() {
        let v = mil_std_check(hz(3.0), Displacement::amplitude(0.0).unwrap());
        assert_eq!(v.band, ComplianceBand::OutOfRange);
        assert!(!v.compliant);
        assert_eq!(v.limit_single_amplitude, None);
    }

    #[test]
    fn band_boundaries() {
        let cases = [
            (4.0, Some(0.762e-3)),
            (15.0, Some(0.762e-3)),
            (15.000001, Some(0.508e-3)),
            (16.0, Some(0.508e-3)),
            (25.0, Some(0.508e-3)),
            (26.0, Some(0.254e-3)),
            (33.0, Some(0.254e-3)),
            (33.000001, None),
            (3.999999, None),
        ];
        for (f, lim) in cases {
            assert_eq!(
                ComplianceBand::for_frequency(hz(f)).limit_single_amplitude(),
                lim,
                "{f} Hz"
            );
        }
    }

    #[test]
    fn limit_is_inclusive() {
        let at = Displacement::from_mm(0.762, Convention::Amplitude).unwrap();
        assert!(mil_std_check(hz(10.0), at).compliant);
        let over = Displacement::from_mm(0.8, Convention::Amplitude).unwrap();
        assert!(!mil_std_check(hz(10.0), over).compliant);
    }

    proptest! {
        #[test]
        fn round_trip(a in 0.0f64..100.0, f in 0.1f64..1000.0) {
            let f = hz(f);
            let acc = Acceleration::amplitude(a).unwrap();
            let back = acceleration_from_displacement(displacement_from_acceleration(acc, f), f);
            prop_assert!((back.value() - a).abs() <= 1e-12 * a.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn inverse_square_scaling(a in 1e-3f64..100.0, f in 0.1f64..500.0) {
            let acc = Acceleration::peak_to_peak(a).unwrap();
            let d1 = displacement_from_acceleration(acc, hz(f)).value();
            let d2 = displacement_from_acceleration(acc, hz(2.0 * f)).value();
            prop_assert!(d2 < d1);
            prop_assert!((d1 / d2 - 4.0).abs() <= 4e-12);
        }

        #[test]
        fn convention_law(x in 0.0f64..1e3) {
            let d = Displacement::amplitude(x).unwrap();
            let back = d.to_convention(Convention::PeakToPeak).to_convention(Convention::Amplitude);
            prop_assert_eq!(back, d);
        }

        #[test]
        fn compliance_ignores_convention(f in 1.0f64..40.0, mm in 0.0f64..2.0) {
            let pp = Displacement::from_mm(mm, Convention::PeakToPeak).unwrap();
            let amp = Displacement::from_mm(mm / 2.0, Convention::Amplitude).unwrap();
            let (a, b) = (mil_std_check(hz(f), pp), mil_std_check(hz(f), amp));
            prop_assert_eq!(a.band, b.band);
            prop_assert_eq!(a.compliant, b.compliant);
        }
    }
}
