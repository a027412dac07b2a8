//! Simulation of a tuned piezoelectric cantilever harvester driven by
//! low-frequency shipboard vibration, through a rectifying power stage into
//! a supercapacitor.
//!
//! ```
//! use harvest_core::scenario::{builtin_scenario, run, BuiltinId};
//!
//! let curve = run(&builtin_scenario(BuiltinId::B)).unwrap();
//! let t_half = curve.summary.t_half_capacity.unwrap();
//! assert!((t_half / 60.0 - 89.7).abs() < 0.1);
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harvester;
pub mod kinematics;
pub mod ode;
pub mod power_stage;
pub mod scenario;
pub mod storage;

pub use error::{Error, Result};

/// Formats `x` with four significant digits, without exponent notation for
/// ordinary magnitudes.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..=8).contains(&magnitude) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - magnitude).max(0) as usize;
    let rounded = format!("{x:.decimals$}");
    // Rounding can carry into a new digit (9.9996 -> 10.000).
    let digits = rounded.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
    let significant = digits.trim_start_matches('0').len();
    if decimals > 0 && significant > 4 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        rounded
    }
}
