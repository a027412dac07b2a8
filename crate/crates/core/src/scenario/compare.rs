use serde::Serialize;

use super::{crossing_time, ChargeCurve};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonMetrics {
    /// RMS voltage difference over the overlapping time span, V.
    pub rmse_v: f64,
    /// `curve − reference` half-capacity crossing time, s.
    pub dt_half: Option<f64>,
    /// `curve − reference` full-charge crossing time, s.
    pub dt_full: Option<f64>,
    /// Rows of `curve` that fell inside the reference span.
    pub overlap_points: usize,
}

/// Compares two charge curves. The reference is resampled onto the curve's
/// timestamps by linear interpolation; crossing times of both use the
/// curve's half and full levels.
pub fn compare(curve: &ChargeCurve, reference: &ChargeCurve) -> Result<ComparisonMetrics> {
    let (Some(r0), Some(r1)) = (reference.rows.first(), reference.rows.last()) else {
        return Err(Error::Comparison("reference curve is empty".into()));
    };
    if curve.rows.is_empty() {
        return Err(Error::Comparison("curve is empty".into()));
    }

    let mut j = 0;
    let mut sum_sq = 0.0;
    let mut n = 0usize;
    for row in curve.rows.iter().filter(|r| r.t >= r0.t && r.t <= r1.t) {
        while j + 1 < reference.rows.len() && reference.rows[j + 1].t <= row.t {
            j += 1;
        }
        let a = reference.rows[j];
        let v_ref = match reference.rows.get(j + 1) {
            Some(b) if b.t > a.t && row.t > a.t => a.v_cap + (b.v_cap - a.v_cap) * (row.t - a.t) / (b.t - a.t),
            _ => a.v_cap,
        };
        sum_sq += (row.v_cap - v_ref).powi(2);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Comparison(format!(
            "time spans do not overlap (curve {}..{} s, reference {}..{} s)",
            curve.rows[0].t,
            curve.rows[curve.rows.len() - 1].t,
            r0.t,
            r1.t
        )));
    }

    let diff = |level: f64| -> Option<f64> {
        if !level.is_finite() {
            return None;
        }
        Some(crossing_time(&curve.rows, level)? - crossing_time(&reference.rows, level)?)
    };
    Ok(ComparisonMetrics {
        rmse_v: (sum_sq / n as f64).sqrt(),
        dt_half: diff(curve.summary.half_level),
        dt_full: diff(curve.summary.full_level),
        overlap_points: n,
    })
}
