//! Adaptive step-doubling RK4 for small autonomous-or-not systems.

use crate::error::{Error, Result};

pub(crate) struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub record: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-13, atol: 1e-15, record: false }
    }
}

pub(crate) struct OdeOutput<const N: usize> {
    pub y: [f64; N],
    pub path: Vec<(f64, [f64; N])>,
    pub steps: usize,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] += h * k[i];
    }
    out
}

fn rk4<const N: usize, F>(f: &F, s: f64, y: &[f64; N], h: f64) -> Result<[f64; N]>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k1 = f(s, y)?;
    let k2 = f(s + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
    let k3 = f(s + 0.5 * h, &axpy(y, 0.5 * h, &k2))?;
    let k4 = f(s + h, &axpy(y, h, &k3))?;
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

/// Integrates `y' = f(s, y)` from `s0` to `s1` (either direction). Failed
/// right-hand-side evaluations shrink the step; the last such error is
/// returned if the step underflows.
pub(crate) fn integrate<const N: usize, F>(f: F, s0: f64, s1: f64, y0: [f64; N], opts: &OdeOptions) -> Result<OdeOutput<N>>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let span = s1 - s0;
    let mut out = OdeOutput { y: y0, path: Vec::new(), steps: 0 };
    if opts.record {
        out.path.push((s0, y0));
    }
    if span == 0.0 {
        return Ok(out);
    }
    let min_step = 1e-14 * span.abs().max(s0.abs().max(s1.abs()) * 1e-3);
    let mut s = s0;
    let mut y = y0;
    let mut h = span;
    let mut last_err: Option<Error> = None;
    while (s1 - s) * span.signum() > 0.0 {
        if (s + h - s1) * span.signum() > 0.0 {
            h = s1 - s;
        }
        let trial = rk4(&f, s, &y, h).and_then(|big| {
            let half = rk4(&f, s, &y, 0.5 * h)?;
            let two = rk4(&f, s + 0.5 * h, &half, 0.5 * h)?;
            Ok((big, two))
        });
        match trial {
            Ok((big, two)) => {
                let mut err: f64 = 0.0;
                for i in 0..N {
                    let sc = opts.atol + opts.rtol * two[i].abs().max(y[i].abs());
                    err = err.max((two[i] - big[i]).abs() / 15.0 / sc);
                }
                if err <= 1.0 {
                    s = if (s + h - s1) * span.signum() >= 0.0 { s1 } else { s + h };
                    for i in 0..N {
                        y[i] = two[i] + (two[i] - big[i]) / 15.0;
                    }
                    out.steps += 1;
                    if opts.record {
                        out.path.push((s, y));
                    }
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= fac;
            }
            Err(e) => {
                last_err = Some(e);
                h *= 0.25;
            }
        }
        if h.abs() < min_step {
            return Err(last_err.unwrap_or_else(|| Error::Integration(format!("step underflow at s = {s}"))));
        }
        if out.steps > 1_000_000 {
            return Err(Error::Integration("too many steps".into()));
        }
    }
    out.y = y;
    Ok(out)
}
