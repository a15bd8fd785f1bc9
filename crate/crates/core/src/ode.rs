//! Dormand–Prince 5(4) with step-size control, exact checkpoint landing, and a
//! caller-supplied guard on accepted states.

use serde::Serialize;

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights equal the last row of A (FSAL)
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeOptions {
    /// Absolute and relative local error tolerance.
    pub tol: f64,
    pub max_step: f64,
    /// Smallest admissible step, relative to `max(1, |t|)`.
    pub min_step: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn new(tol: f64, max_step: f64) -> Self {
        OdeOptions { tol, max_step, min_step: 1e-14, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub min_step: f64,
    pub max_step: f64,
}

impl StepStats {
    pub fn merge(&mut self, other: &StepStats) {
        if self.accepted == 0 {
            *self = other.clone();
            return;
        }
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.evaluations += other.evaluations;
        if other.accepted > 0 {
            self.min_step = self.min_step.min(other.min_step);
            self.max_step = self.max_step.max(other.max_step);
        }
    }
}

/// States at the requested checkpoints, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: f64) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let scale = tol + tol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / err.len().max(1) as f64).sqrt()
}

/// Integrates `y' = rhs(t, y)` from `(t0, y0)` towards `t1` (either direction), landing
/// exactly on each time in `checkpoints` (which must lie between `t0` and `t1`, ordered
/// in the direction of integration; `t1` is appended if missing).
///
/// `guard` sees every accepted state and may abort the integration.
pub fn integrate<R, G>(
    mut rhs: R,
    t0: f64,
    y0: &[f64],
    t1: f64,
    checkpoints: &[f64],
    opts: &OdeOptions,
    mut guard: G,
) -> Result<OdeSolution>
where
    R: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    G: FnMut(f64, &[f64]) -> Result<()>,
{
    if !(opts.tol > 0.0) || !(opts.max_step > 0.0) {
        return Err(Error::invalid("tolerance and max step must be positive"));
    }
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut targets: Vec<f64> = checkpoints.to_vec();
    if targets.last() != Some(&t1) {
        targets.push(t1);
    }
    if targets.windows(2).any(|w| dir * (w[1] - w[0]) < 0.0) || targets.iter().any(|&c| dir * (c - t0) < 0.0) {
        return Err(Error::invalid("checkpoints must be ordered along the integration direction"));
    }
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut stats = StepStats { min_step: f64::INFINITY, ..Default::default() };
    let mut times = Vec::with_capacity(targets.len());
    let mut states = Vec::with_capacity(targets.len());
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    k[0] = rhs(t, &y)?;
    stats.evaluations += 1;
    let mut h = opts.max_step.min((t1 - t0).abs().max(f64::MIN_POSITIVE));
    let mut stage = vec![0.0; n];
    for &target in &targets {
        while dir * (target - t) > 0.0 {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::Convergence(format!("step budget {} exhausted at t = {t}", opts.max_steps)));
            }
            let remaining = (target - t).abs();
            let landing = h >= remaining;
            let step = if landing { remaining } else { h };
            if step < opts.min_step * t.abs().max(1.0) && !landing {
                return Err(Error::StepUnderflow { t, step });
            }
            let hs = dir * step;
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    stage[i] = y[i] + hs * acc;
                }
                k[s] = rhs(t + C[s] * hs, &stage)?;
                stats.evaluations += 1;
            }
            // stage 6 was evaluated at the fifth-order solution
            let y_new = stage.clone();
            let err: Vec<f64> = (0..n)
                .map(|i| hs * (0..7).map(|s| (B[s] - B_LOW[s]) * k[s][i]).sum::<f64>())
                .collect();
            let e = error_norm(&err, &y, &y_new, opts.tol);
            if e <= 1.0 {
                t = if landing { target } else { t + hs };
                y = y_new;
                k[0] = k[6].clone();
                stats.accepted += 1;
                stats.min_step = stats.min_step.min(step);
                stats.max_step = stats.max_step.max(step);
                guard(t, &y)?;
            } else {
                stats.rejected += 1;
            }
            let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            let proposed = (step * factor).min(opts.max_step);
            // a shortened landing step says nothing about the natural step size
            h = if landing && e <= 1.0 { h.max(proposed).min(opts.max_step) } else { proposed };
            if h < opts.min_step * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, step: h });
            }
        }
        times.push(target);
        states.push(y.clone());
    }
    if stats.accepted == 0 {
        stats.min_step = 0.0;
    }
    Ok(OdeSolution { times, states, stats })
}
