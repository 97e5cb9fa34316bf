//! Explicit Runge–Kutta integrators for `ẋ = v_t(x)` on `[0, t_end]`.

use super::field::{StageTable, VelocityField};
use super::{Scheme, TransportConfig};
use crate::distributions::MixtureSpec;
use crate::{Error, Result};

/// Halvings allowed per step when a stage lands where a signed density is not positive.
pub const MAX_HALVINGS: usize = 40;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates from `x0` at `t = 0` to `t_end`, calling `observer` at the
/// start and after every accepted step.
pub(crate) fn integrate(
    spec: &MixtureSpec,
    cfg: &TransportConfig,
    x0: &[f64],
    t_end: f64,
    table: Option<&StageTable>,
    observer: &mut dyn FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    let mut field = VelocityField::with_table(spec, table);
    let signed = spec.has_negative_weights();
    let x = x0.to_vec();
    observer(0.0, &x);
    if t_end == 0.0 {
        return Ok(x);
    }
    let mut k1 = vec![0.0; x.len()];
    field.eval(0.0, &x, &mut k1)?;
    match cfg.scheme {
        Scheme::Rk4 => rk4(&mut field, cfg.steps, t_end, signed, x, k1, observer),
        Scheme::Dopri45 => dopri45(&mut field, cfg, t_end, signed, x, k1, observer),
    }
}

/// Every time at which `rk4` evaluates the field when no step is halved.
pub(crate) fn rk4_stage_times(steps: usize, t_end: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    let mut t = 0.0;
    for i in 0..steps {
        let target = if i + 1 == steps {
            t_end
        } else {
            t_end * (i + 1) as f64 / steps as f64
        };
        let mut h = target - t;
        while t < target {
            h = h.min(target - t);
            let t_next = if target - (t + h) <= 0.0 {
                target
            } else {
                t + h
            };
            times.extend([t + 0.5 * h, t + h, t_next]);
            t = t_next;
        }
    }
    times
}

/// Whether a failed stage evaluation should shrink the step instead of aborting.
fn retryable(signed: bool, e: &Error) -> bool {
    signed && matches!(e, Error::NonPositiveDensity { .. })
}

fn axpy_into(out: &mut [f64], x: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = x[i] + h * s;
    }
}

fn rk4(
    field: &mut VelocityField<'_>,
    steps: usize,
    t_end: f64,
    signed: bool,
    mut x: Vec<f64>,
    mut k1: Vec<f64>,
    observer: &mut dyn FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    let d = x.len();
    let (mut k2, mut k3, mut k4, mut k_end) =
        (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut xs, mut x_new) = (vec![0.0; d], vec![0.0; d]);
    let mut t = 0.0;
    for i in 0..steps {
        let target = if i + 1 == steps {
            t_end
        } else {
            t_end * (i + 1) as f64 / steps as f64
        };
        let mut h = target - t;
        let mut halvings = 0;
        while t < target {
            h = h.min(target - t);
            let attempt = (|| {
                axpy_into(&mut xs, &x, 0.5 * h, &[(1.0, &k1)]);
                field.eval(t + 0.5 * h, &xs, &mut k2)?;
                axpy_into(&mut xs, &x, 0.5 * h, &[(1.0, &k2)]);
                field.eval(t + 0.5 * h, &xs, &mut k3)?;
                axpy_into(&mut xs, &x, h, &[(1.0, &k3)]);
                field.eval(t + h, &xs, &mut k4)?;
                axpy_into(
                    &mut x_new,
                    &x,
                    h / 6.0,
                    &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)],
                );
                let t_next = if target - (t + h) <= 0.0 {
                    target
                } else {
                    t + h
                };
                field.eval(t_next, &x_new, &mut k_end)
            })();
            match attempt {
                Ok(_) => {
                    t = if target - (t + h) <= 0.0 {
                        target
                    } else {
                        t + h
                    };
                    std::mem::swap(&mut x, &mut x_new);
                    std::mem::swap(&mut k1, &mut k_end);
                    observer(t, &x);
                }
                Err(e) if retryable(signed, &e) && halvings < MAX_HALVINGS => {
                    halvings += 1;
                    h *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(x)
}

fn error_norm(err: &[f64], x: &[f64], x_new: &[f64], abs_tol: f64, rel_tol: f64) -> f64 {
    let s: f64 = err
        .iter()
        .zip(x.iter().zip(x_new))
        .map(|(e, (a, b))| {
            let sc = abs_tol + rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / err.len() as f64).sqrt()
}

fn initial_step(
    field: &mut VelocityField<'_>,
    cfg: &TransportConfig,
    x: &[f64],
    k1: &[f64],
    t_end: f64,
) -> f64 {
    let zero = vec![0.0; x.len()];
    let d0 = error_norm(x, &zero, &zero, cfg.abs_tol, cfg.rel_tol);
    let d1 = error_norm(k1, x, &zero, cfg.abs_tol, cfg.rel_tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(t_end);
    let x1: Vec<f64> = x.iter().zip(k1).map(|(a, k)| a + h0 * k).collect();
    let mut k2 = vec![0.0; x.len()];
    if field.eval(h0, &x1, &mut k2).is_err() {
        return h0;
    }
    let diff: Vec<f64> = k2.iter().zip(k1).map(|(a, b)| (a - b) / h0).collect();
    let d2 = error_norm(&diff, x, &zero, cfg.abs_tol, cfg.rel_tol);
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end)
}

fn dopri45(
    field: &mut VelocityField<'_>,
    cfg: &TransportConfig,
    t_end: f64,
    signed: bool,
    mut x: Vec<f64>,
    mut k1: Vec<f64>,
    observer: &mut dyn FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    let d = x.len();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; d]; 7];
    let mut xs = vec![0.0; d];
    let mut err = vec![0.0; d];
    let mut t = 0.0;
    let mut h = initial_step(field, cfg, &x, &k1, t_end);
    let mut attempts = 0;
    let mut halvings = 0;
    while t < t_end {
        if attempts >= cfg.max_steps {
            return Err(Error::Stiffness {
                max_steps: cfg.max_steps,
                t,
                x,
            });
        }
        attempts += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        k[0].copy_from_slice(&k1);
        let mut stage_error = None;
        for s in 1..7 {
            for i in 0..d {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate() {
                    acc += a * k[j][i];
                }
                xs[i] = x[i] + h * acc;
            }
            let ts = if s >= 5 && last { t_end } else { t + C[s] * h };
            if let Err(e) = field.eval(ts, &xs, &mut k[s]) {
                stage_error = Some(e);
                break;
            }
        }
        if let Some(e) = stage_error {
            if retryable(signed, &e) && halvings < MAX_HALVINGS {
                halvings += 1;
                h *= 0.5;
                continue;
            }
            return Err(e);
        }
        // after stage 7, xs holds the fifth-order solution (FSAL)
        for i in 0..d {
            let mut acc = 0.0;
            for s in 0..7 {
                acc += E[s] * k[s][i];
            }
            err[i] = h * acc;
        }
        let en = error_norm(&err, &x, &xs, cfg.abs_tol, cfg.rel_tol);
        if !en.is_finite() {
            return Err(Error::Numerical(format!(
                "integrator error estimate is {en} at t = {t}"
            )));
        }
        if en <= 1.0 {
            t = if last { t_end } else { t + h };
            x.copy_from_slice(&xs);
            k1.copy_from_slice(&k[6]);
            halvings = 0;
            observer(t, &x);
            let factor = if en == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * en.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            h *= factor;
        } else {
            h *= (SAFETY * en.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
        }
    }
    Ok(x)
}
