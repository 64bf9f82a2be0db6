//! Explicit Runge–Kutta integration of `dρ/dt = f(t, ρ)` for complex
//! matrices: Dormand–Prince 5(4) with adaptive steps, or classic RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stepper {
    Adaptive { rel_tol: f64, abs_tol: f64 },
    Fixed { step: f64 },
}

impl Default for Stepper {
    fn default() -> Self {
        Stepper::Adaptive { rel_tol: 1e-8, abs_tol: 1e-10 }
    }
}

impl Stepper {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Stepper::Adaptive { rel_tol, abs_tol } => {
                if !(rel_tol > 0.0) || !(abs_tol > 0.0) {
                    return Err(Error::param("tolerance", "rel_tol and abs_tol must be positive"));
                }
            }
            Stepper::Fixed { step } => {
                if !(step > 0.0) || !step.is_finite() {
                    return Err(Error::param("step", format!("must be positive, got {step}")));
                }
            }
        }
        Ok(())
    }
}

/// Hard cap on accepted + rejected steps per run.
pub const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*, the embedded 4th-order error weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// `y + h Σ a_i k_i`.
fn combine(y: &CMatrix, h: f64, terms: &[(f64, &CMatrix)]) -> CMatrix {
    let mut out = y.clone();
    for (a, k) in terms {
        if *a != 0.0 {
            out.zip_apply(k, |o, kv| *o += kv * (h * a));
        }
    }
    out
}

/// Integrates from `times[0]` and returns the state at every entry of
/// `times`, which must be strictly increasing. `post_step` runs after each
/// accepted step (e.g. to re-symmetrize).
pub fn integrate<F, P>(
    mut f: F,
    y0: &CMatrix,
    times: &[f64],
    stepper: Stepper,
    mut post_step: P,
) -> Result<(Vec<CMatrix>, Stats)>
where
    F: FnMut(f64, &CMatrix) -> CMatrix,
    P: FnMut(&mut CMatrix),
{
    stepper.validate()?;
    check_times(times)?;
    let mut stats = Stats::default();
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.clone());
    let mut y = y0.clone();
    let mut t = times[0];

    match stepper {
        Stepper::Fixed { step } => {
            for &target in &times[1..] {
                while t < target {
                    let h = step.min(target - t);
                    y = rk4_step(&mut f, t, &y, h);
                    stats.evaluations += 4;
                    stats.accepted += 1;
                    post_step(&mut y);
                    // snap to the sample time to avoid drift
                    t = if target - (t + h) <= 1e-12 * target.abs().max(1.0) { target } else { t + h };
                }
                out.push(y.clone());
            }
        }
        Stepper::Adaptive { rel_tol, abs_tol } => {
            let span = times[times.len() - 1] - times[0];
            let mut h = (1e-3 * span).min(times[1] - times[0]);
            let mut k1 = f(t, &y);
            stats.evaluations += 1;
            for &target in &times[1..] {
                while t < target {
                    if stats.accepted + stats.rejected >= MAX_STEPS {
                        return Err(Error::TooManySteps(MAX_STEPS));
                    }
                    let remaining = target - t;
                    let last = h >= remaining;
                    let hs = if last { remaining } else { h };
                    let h_min = 1e-13 * t.abs().max(1.0);
                    if hs < h_min && !last {
                        return Err(Error::StepSizeCollapse { time: t, step: hs });
                    }
                    let k2 = f(t + C2 * hs, &combine(&y, hs, &[(A21, &k1)]));
                    let k3 = f(t + C3 * hs, &combine(&y, hs, &[(A31, &k1), (A32, &k2)]));
                    let k4 = f(t + C4 * hs, &combine(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
                    let k5 = f(t + C5 * hs, &combine(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
                    let k6 = f(t + hs, &combine(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
                    let y_new = combine(&y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
                    let k7 = f(t + hs, &y_new);
                    stats.evaluations += 6;

                    let mut sum = 0.0;
                    for i in 0..y.len() {
                        let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
                        let sc = abs_tol + rel_tol * y[i].norm().max(y_new[i].norm());
                        sum += (e.norm() / sc).powi(2);
                    }
                    let err = (sum / y.len() as f64).sqrt();
                    if !err.is_finite() {
                        return Err(Error::StepSizeCollapse { time: t, step: hs });
                    }
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    if err <= 1.0 {
                        stats.accepted += 1;
                        t = if last { target } else { t + hs };
                        y = y_new;
                        post_step(&mut y);
                        k1 = k7;
                        if !last || factor < 1.0 {
                            h = hs * factor;
                        }
                    } else {
                        stats.rejected += 1;
                        h = hs * factor.min(1.0);
                        if h < h_min {
                            return Err(Error::StepSizeCollapse { time: t, step: h });
                        }
                    }
                }
                out.push(y.clone());
            }
        }
    }
    Ok((out, stats))
}

fn rk4_step<F: FnMut(f64, &CMatrix) -> CMatrix>(f: &mut F, t: f64, y: &CMatrix, h: f64) -> CMatrix {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &combine(y, h, &[(0.5, &k1)]));
    let k3 = f(t + 0.5 * h, &combine(y, h, &[(0.5, &k2)]));
    let k4 = f(t + h, &combine(y, h, &[(1.0, &k3)]));
    combine(y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)])
}

pub fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::param("times", "need at least two sample times"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::param("times", "sample times must be finite"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("times", "sample times must be strictly increasing"));
    }
    Ok(())
}
