//! Embedded Dormand-Prince 5(4) pair with PI step-size control.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the 5th and embedded 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    DomainExit,
    Equilibrium,
    Event,
}

#[derive(Debug, Clone)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    pub h_min: T,
    pub h_max: Option<T>,
    pub max_steps: usize,
}

pub struct OdeRun<T> {
    pub samples: Vec<(T, Vec<T>)>,
    pub reason: StopReason,
    pub rejected: usize,
}

/// One Dormand-Prince step: returns `(y_new, f(y_new), error estimate)`.
pub fn step<T: Scalar, F>(f: &mut F, t: T, y: &[T], k1: &[T], h: T) -> (Vec<T>, Vec<T>, Vec<T>)
where
    F: FnMut(T, &[T]) -> Vec<T>,
{
    let n = y.len();
    let mut k: Vec<Vec<T>> = Vec::with_capacity(7);
    k.push(k1.to_vec());
    for s in 1..7 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[s][j];
            if a == 0.0 {
                continue;
            }
            let a = T::lit(a) * h;
            for i in 0..n {
                ys[i] += a * kj[i];
            }
        }
        if s == 6 {
            // FSAL stage: ys is the 5th order solution
            let k7 = f(t + h, &ys);
            k.push(k7);
            let err = (0..n)
                .map(|i| {
                    h * (0..7)
                        .map(|j| T::lit(E[j]) * k[j][i])
                        .fold(T::zero(), |acc, v| acc + v)
                })
                .collect();
            let k7 = k.pop().unwrap();
            return (ys, k7, err);
        }
        k.push(f(t + T::lit(C[s]) * h, &ys));
    }
    unreachable!()
}

fn error_norm<T: Scalar>(err: &[T], y0: &[T], y1: &[T], opts: &OdeOptions<T>) -> T {
    let n = T::from_usize(err.len().max(1)).unwrap();
    let s: T = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(&e, (&a, &b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            let r = e / sc;
            r * r
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`. After every accepted step
/// `post` may modify the state (projection back onto a manifold) and `stop`
/// may end the run; `stop` sees the time, the new state and `f` there.
pub fn solve<T: Scalar, F, P, S>(
    mut f: F,
    t0: T,
    y0: &[T],
    t_end: T,
    opts: &OdeOptions<T>,
    mut post: P,
    mut stop: S,
) -> Result<OdeRun<T>>
where
    F: FnMut(T, &[T]) -> Vec<T>,
    P: FnMut(&mut Vec<T>),
    S: FnMut(T, &[T], &[T]) -> Option<StopReason>,
{
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = f(t, &y);
    let mut samples = vec![(t, y.clone())];
    if let Some(reason) = stop(t, &y, &k1) {
        return Ok(OdeRun {
            samples,
            reason,
            rejected: 0,
        });
    }
    let span = t_end - t0;
    if span <= T::zero() {
        return Ok(OdeRun {
            samples,
            reason: StopReason::Horizon,
            rejected: 0,
        });
    }

    // initial step from the scale of y and f (Hairer-Norsett-Wanner)
    let d0 = error_norm(&y, &y, &y, opts);
    let d1 = error_norm(&k1, &y, &y, opts);
    let mut h = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
        T::lit(1e-6)
    } else {
        T::lit(0.01) * d0 / d1
    };
    h = h.min(span);
    if let Some(hm) = opts.h_max {
        h = h.min(hm);
    }

    let safety = T::lit(0.9);
    let (alpha, beta) = (T::lit(0.17), T::lit(0.04));
    let mut err_prev = T::lit(1e-4);
    let mut rejected = 0usize;
    let mut accepted = 0usize;
    let mut last_rejected = false;

    loop {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::StepFailure { t: t.as_f64() });
        }
        let remaining = t_end - t;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let (y_new, k_new, err) = step(&mut f, t, &y, &k1, h);
        let en = error_norm(&err, &y, &y_new, opts);
        if en <= T::one() && y_new.iter().all(|v| v.is_finite()) {
            accepted += 1;
            t = if last { t_end } else { t + h };
            y = y_new.clone();
            post(&mut y);
            // re-evaluate after a projection, otherwise reuse the FSAL stage
            k1 = if y == y_new { k_new } else { f(t, &y) };
            samples.push((t, y.clone()));
            if let Some(reason) = stop(t, &y, &k1) {
                return Ok(OdeRun {
                    samples,
                    reason,
                    rejected,
                });
            }
            if last {
                return Ok(OdeRun {
                    samples,
                    reason: StopReason::Horizon,
                    rejected,
                });
            }
            let en = en.max(T::lit(1e-10));
            let mut fac = safety * en.powf(-alpha) * err_prev.powf(beta);
            fac = fac.max(T::lit(0.2)).min(T::lit(5.0));
            if last_rejected {
                fac = fac.min(T::one());
            }
            h = h * fac;
            if let Some(hm) = opts.h_max {
                h = h.min(hm);
            }
            err_prev = en;
            last_rejected = false;
        } else {
            rejected += 1;
            let en = if en.is_finite() { en } else { T::lit(1e10) };
            let fac = (safety * en.powf(-T::lit(0.2))).max(T::lit(0.1)).min(T::one());
            h = h * fac;
            last_rejected = true;
            if h < opts.h_min {
                return Err(Error::StepFailure { t: t.as_f64() });
            }
        }
    }
}
