//! Dormand–Prince 5(4) integrator with dense output.
//!
//! The right-hand side may refuse a trial state (for instance an agent
//! leaving the region); such stages are treated as a failed step and the
//! step is retried with half the size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step before giving up, s.
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-6,
            min_step: 1e-6,
            max_step: f64::INFINITY,
        }
    }
}

/// Continuous extension over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub t1: f64,
    coeffs: [Vec<f64>; 5],
    end: Vec<f64>,
}

impl DenseSegment {
    pub fn start(&self) -> &[f64] {
        &self.coeffs[0]
    }

    /// State at `t ∈ [t0, t1]`; the end points are returned exactly.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if t == self.t0 {
            return self.coeffs[0].clone();
        }
        if t == self.t1 {
            return self.end.clone();
        }
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        (0..r1.len())
            .map(|i| r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i]))))
            .collect()
    }
}

/// What the observer wants after an accepted step.
pub enum StepControl {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Whether an RHS error means "this trial state is infeasible".
fn is_state_rejection(e: &Error) -> bool {
    matches!(
        e,
        Error::PositionOutsideRegion { .. }
            | Error::DuplicateAgents { .. }
            | Error::NonFinitePoint { .. }
    )
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], opts: &StepperOptions) -> f64 {
    let n = y0.len().max(1) as f64;
    let sum: f64 = (0..y0.len())
        .map(|i| {
            let sc = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn combine(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for &(a, k) in terms {
        let ah = a * h;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += ah * ki;
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`, calling `observer` with the
/// dense segment of every accepted step. Returns the final time, the state
/// there and counters. The final step lands exactly on `t_end`.
pub fn solve<F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &StepperOptions,
    mut observer: O,
) -> Result<(f64, Vec<f64>, SolveStats)>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    O: FnMut(&DenseSegment) -> Result<StepControl>,
{
    let mut stats = SolveStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    if !(t_end > t0) || y.is_empty() {
        return Ok((t, y, stats));
    }

    let mut k1 = f(t, &y)?;
    stats.rhs_evals += 1;
    let span = t_end - t0;
    let mut h = initial_step(&mut f, t, &y, &k1, span, opts, &mut stats)?;
    let mut last_rejected = false;

    loop {
        let remaining = t_end - t;
        let final_step = h >= remaining * (1.0 - 1e-12);
        if final_step {
            h = remaining;
        }
        if h < opts.min_step && !final_step {
            return Err(Error::StepFailure { t, h });
        }

        match try_step(&mut f, t, &y, &k1, h, &mut stats) {
            Ok(trial) => {
                let err = error_norm(&y, &trial.y1, &trial.err, opts);
                if err <= 1.0 {
                    let t1 = if final_step { t_end } else { t + h };
                    let seg = DenseSegment {
                        t0: t,
                        t1,
                        coeffs: trial.dense(&y, h),
                        end: trial.y1.clone(),
                    };
                    stats.accepted += 1;
                    t = t1;
                    y = trial.y1;
                    k1 = trial.k7;
                    let fac = if err == 0.0 {
                        5.0
                    } else {
                        0.9 * err.powf(-0.2)
                    };
                    let fac = if last_rejected {
                        fac.min(1.0)
                    } else {
                        fac.min(5.0)
                    };
                    h = (h * fac.max(0.2)).min(opts.max_step);
                    last_rejected = false;
                    let control = observer(&seg)?;
                    if matches!(control, StepControl::Stop) || t >= t_end {
                        return Ok((t, y, stats));
                    }
                } else {
                    stats.rejected += 1;
                    last_rejected = true;
                    h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                    if h < opts.min_step {
                        return Err(Error::StepFailure { t, h });
                    }
                }
            }
            Err(e) if is_state_rejection(&e) => {
                stats.rejected += 1;
                last_rejected = true;
                h *= 0.5;
                if h < opts.min_step {
                    return Err(Error::StepFailure { t, h });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

struct Trial {
    y1: Vec<f64>,
    err: Vec<f64>,
    k: [Vec<f64>; 6],
    k7: Vec<f64>,
}

impl Trial {
    fn dense(&self, y0: &[f64], h: f64) -> [Vec<f64>; 5] {
        let [k1, _k2, k3, k4, k5, k6] = &self.k;
        let k7 = &self.k7;
        let n = y0.len();
        let mut r2 = vec![0.0; n];
        let mut r3 = vec![0.0; n];
        let mut r4 = vec![0.0; n];
        let mut r5 = vec![0.0; n];
        for i in 0..n {
            let dy = self.y1[i] - y0[i];
            let bspl = h * k1[i] - dy;
            r2[i] = dy;
            r3[i] = bspl;
            r4[i] = dy - h * k7[i] - bspl;
            r5[i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        [y0.to_vec(), r2, r3, r4, r5]
    }
}

fn try_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    k1: &[f64],
    h: f64,
    stats: &mut SolveStats,
) -> Result<Trial>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let mut eval = |tt: f64, yy: &[f64]| {
        stats.rhs_evals += 1;
        f(tt, yy)
    };
    let k2 = eval(t + C2 * h, &combine(y, h, &[(A21, k1)]))?;
    let k3 = eval(t + C3 * h, &combine(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = eval(
        t + C4 * h,
        &combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]),
    )?;
    let k5 = eval(
        t + C5 * h,
        &combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = eval(
        t + h,
        &combine(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    )?;
    let y1 = combine(
        y,
        h,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = eval(t + h, &y1)?;
    let err: Vec<f64> = (0..y.len())
        .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
        .collect();
    Ok(Trial {
        y1,
        err,
        k: [k1.to_vec(), k2, k3, k4, k5, k6],
        k7,
    })
}

/// Starting step size from the usual two-derivative estimate.
fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    k1: &[f64],
    span: f64,
    opts: &StepperOptions,
    stats: &mut SolveStats,
) -> Result<f64>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = y.len() as f64;
    let scale: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter()
            .zip(&scale)
            .map(|(a, s)| (a / s).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(k1);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span).min(opts.max_step);
    let y1: Vec<f64> = y.iter().zip(k1).map(|(a, k)| a + h0 * k).collect();
    let d2 = match f(t + h0, &y1) {
        Ok(k) => {
            stats.rhs_evals += 1;
            let diff: Vec<f64> = k.iter().zip(k1).map(|(a, b)| a - b).collect();
            rms(&diff) / h0
        }
        Err(e) if is_state_rejection(&e) => return Ok(h0.max(opts.min_step)),
        Err(e) => return Err(e),
    };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0)
        .min(h1)
        .min(span)
        .min(opts.max_step)
        .max(opts.min_step))
}
