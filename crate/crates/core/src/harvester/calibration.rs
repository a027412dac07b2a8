//! Fits the open-circuit voltage mapping (`gain_v`, `v_sat`) to measured
//! peak-to-peak voltages.
//!
//! The tip displacement for each observation depends only on the mechanical
//! parameters, so the fit is a small nonlinear least-squares problem in the
//! two voltage parameters. It is solved with Levenberg-Marquardt on
//! logarithmic parameters (keeps both positive) minimising relative
//! residuals (keeps observations of different size on equal footing).

use serde::Serialize;

use super::{steady_state_tip_displacement, HarvesterParams};
use crate::error::{Error, Result};
use crate::kinematics::VibrationProfile;

const MAX_ITERATIONS: usize = 500;
const COST_TOLERANCE: f64 = 1e-26;
const STEP_TOLERANCE: f64 = 1e-13;

/// One measured open-circuit voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub profile: VibrationProfile,
    pub measured_vpp: f64,
}

/// Which voltage parameters were fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// `v_sat` held at its initial value.
    GainOnly,
    GainAndSaturation,
}

impl std::fmt::Display for FitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitMode::GainOnly => "gain only",
            FitMode::GainAndSaturation => "gain and saturation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub params: HarvesterParams,
    pub mode: FitMode,
    /// Signed `(model − measured) / measured`, one per observation.
    pub residuals: Vec<f64>,
    pub max_relative_residual: f64,
    pub iterations: usize,
}

/// Fits `gain_v` (and `v_sat` when at least two observations are given)
/// so that `open_circuit_vpp` reproduces the observations.
///
/// A single observation fits `gain_v` only, holding `p0.v_sat`. All other
/// fields of `p0` are kept as given. The result is deterministic.
pub fn calibrate(p0: &HarvesterParams, observations: &[Observation]) -> Result<CalibrationReport> {
    p0.validate()?;
    if observations.is_empty() {
        return Err(Error::domain("calibration needs at least one observation"));
    }

    let mut tips = Vec::with_capacity(observations.len());
    let mut targets = Vec::with_capacity(observations.len());
    for (i, obs) in observations.iter().enumerate() {
        let z = steady_state_tip_displacement(p0, &obs.profile)?.value();
        let target = obs.measured_vpp / 2.0;
        if !(target.is_finite() && target > 0.0) || !(z > 0.0) {
            return Err(Error::domain(format!(
                "observation {i} has no usable signal (measured {} Vpp, tip {z} m)",
                obs.measured_vpp
            )));
        }
        if target >= p0.v_rating {
            return Err(Error::domain(format!(
                "observation {i} at {} Vpp reaches the {} V rating",
                obs.measured_vpp, p0.v_rating
            )));
        }
        tips.push(z);
        targets.push(target);
    }

    let mode = if observations.len() >= 2 {
        FitMode::GainAndSaturation
    } else {
        FitMode::GainOnly
    };

    let problem = Problem {
        tips: &tips,
        targets: &targets,
    };
    let (gain_v, v_sat, iterations, converged) = match mode {
        FitMode::GainOnly if p0.v_sat.is_infinite() => {
            // Linear model: relative least squares has a closed form.
            let w: Vec<f64> = tips.iter().zip(&targets).map(|(z, a)| z / a).collect();
            let gain = w.iter().sum::<f64>() / w.iter().map(|x| x * x).sum::<f64>();
            (gain, f64::INFINITY, 0, true)
        }
        FitMode::GainOnly => {
            let (theta, it, ok) =
                problem.levenberg_marquardt(&[initial_gain(&problem, p0.v_sat).ln()], |t| (t[0].exp(), p0.v_sat));
            (theta[0].exp(), p0.v_sat, it, ok)
        }
        FitMode::GainAndSaturation => {
            let v_sat0 = if p0.v_sat.is_finite() {
                p0.v_sat.max(1.05 * targets.iter().cloned().fold(0.0, f64::max))
            } else {
                1.5 * targets.iter().cloned().fold(0.0, f64::max)
            };
            let g0 = initial_gain(&problem, v_sat0);
            let (theta, it, ok) = problem.levenberg_marquardt(&[g0.ln(), v_sat0.ln()], |t| (t[0].exp(), t[1].exp()));
            (theta[0].exp(), theta[1].exp(), it, ok)
        }
    };

    let params = HarvesterParams { gain_v, v_sat, ..*p0 };
    let residuals = problem.residuals(gain_v, v_sat);
    let max_relative_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if !converged || !max_relative_residual.is_finite() {
        return Err(Error::Calibration {
            iterations,
            best_residual: max_relative_residual,
            best: Box::new(params),
        });
    }
    Ok(CalibrationReport {
        params,
        mode,
        residuals,
        max_relative_residual,
        iterations,
    })
}

/// Gain that matches the smallest observation exactly under `v_sat`.
fn initial_gain(problem: &Problem<'_>, v_sat: f64) -> f64 {
    let (z, a) = problem
        .tips
        .iter()
        .zip(problem.targets)
        .min_by(|x, y| x.0.total_cmp(y.0))
        .map(|(z, a)| (*z, *a))
        .expect("non-empty");
    if v_sat.is_infinite() {
        a / z
    } else {
        v_sat * (a / v_sat).min(0.999).atanh() / z
    }
}

struct Problem<'a> {
    tips: &'a [f64],
    /// Measured amplitudes, V.
    targets: &'a [f64],
}

fn model(gain: f64, v_sat: f64, z: f64) -> f64 {
    if v_sat.is_infinite() {
        gain * z
    } else {
        v_sat * (gain * z / v_sat).tanh()
    }
}

impl Problem<'_> {
    fn residuals(&self, gain: f64, v_sat: f64) -> Vec<f64> {
        self.tips
            .iter()
            .zip(self.targets)
            .map(|(&z, &a)| model(gain, v_sat, z) / a - 1.0)
            .collect()
    }

    fn cost(&self, gain: f64, v_sat: f64) -> f64 {
        self.residuals(gain, v_sat).iter().map(|r| r * r).sum()
    }

    /// Jacobian rows `∂rᵢ/∂(ln gain, ln v_sat)`, truncated to `k` columns.
    fn jacobian(&self, gain: f64, v_sat: f64, k: usize) -> Vec<[f64; 2]> {
        self.tips
            .iter()
            .zip(self.targets)
            .map(|(&z, &a)| {
                let u = gain * z / v_sat;
                let sech2 = 1.0 - u.tanh().powi(2);
                let d_ln_gain = gain * z * sech2 / a;
                let d_ln_sat = v_sat * (u.tanh() - u * sech2) / a;
                if k == 1 {
                    [d_ln_gain, 0.0]
                } else {
                    [d_ln_gain, d_ln_sat]
                }
            })
            .collect()
    }

    /// Minimises the cost over `theta` (1 or 2 log-parameters). Returns the
    /// best point, the iteration count and whether it converged.
    fn levenberg_marquardt<F>(&self, theta0: &[f64], unpack: F) -> (Vec<f64>, usize, bool)
    where
        F: Fn(&[f64]) -> (f64, f64),
    {
        let k = theta0.len();
        let mut theta = theta0.to_vec();
        let (g, s) = unpack(&theta);
        let mut cost = self.cost(g, s);
        let mut lambda = 1e-3;

        for it in 1..=MAX_ITERATIONS {
            if cost < COST_TOLERANCE {
                return (theta, it - 1, true);
            }
            let (g, s) = unpack(&theta);
            let r = self.residuals(g, s);
            let jac = self.jacobian(g, s, k);

            // Normal equations JᵀJ δ = −Jᵀr.
            let mut jtj = [[0.0; 2]; 2];
            let mut jtr = [0.0; 2];
            for (row, ri) in jac.iter().zip(&r) {
                for a in 0..k {
                    jtr[a] += row[a] * ri;
                    for b in 0..k {
                        jtj[a][b] += row[a] * row[b];
                    }
                }
            }
            if jtr[..k].iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-15 {
                return (theta, it, true);
            }

            loop {
                let mut m = jtj;
                for a in 0..k {
                    m[a][a] += lambda * jtj[a][a].max(1e-12);
                }
                let step = solve(&m, &jtr, k);
                let candidate: Vec<f64> = theta.iter().zip(&step).map(|(t, d)| t - d).collect();
                let (cg, cs) = unpack(&candidate);
                let c_cost = self.cost(cg, cs);
                if c_cost.is_finite() && c_cost < cost {
                    let small = step.iter().map(|d| d.abs()).fold(0.0, f64::max) < STEP_TOLERANCE;
                    theta = candidate;
                    cost = c_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    if small {
                        return (theta, it, true);
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > 1e12 {
                    // No descent direction left: a stationary point.
                    return (theta, it, true);
                }
            }
        }
        (theta, MAX_ITERATIONS, cost < COST_TOLERANCE)
    }
}

fn solve(m: &[[f64; 2]; 2], rhs: &[f64; 2], k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![rhs[0] / m[0][0]];
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    vec![
        (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ]
}
