//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

/// Substituted integrands are evaluated no closer than this to a singular
/// endpoint; they are continuous there, so the clamp costs `O(U_FLOOR^2)`.
const U_FLOOR: f64 = 1e-7;

/// Default interval budget.
pub const MAX_INTERVALS: usize = 100_000;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`, with at most
/// `max_intervals` accepted subintervals.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_intervals: usize) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let width = hi - lo;
    let eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::QuadratureFailure { estimate: f64::NAN, error: f64::INFINITY })
        }
    };

    let fa = eval(lo)?;
    let fm = eval(0.5 * (lo + hi))?;
    let fb = eval(hi)?;
    let whole = width / 6.0 * (fa + 4.0 * fm + fb);
    let mut stack = vec![(lo, hi, fa, fm, fb, whole)];
    let mut total = 0.0;
    let mut err = 0.0;
    let mut accepted = 0usize;

    while let Some((x0, x1, f0, fmid, f1, s)) = stack.pop() {
        let m = 0.5 * (x0 + x1);
        let lm = 0.5 * (x0 + m);
        let rm = 0.5 * (m + x1);
        let flm = eval(lm)?;
        let frm = eval(rm)?;
        let h = x1 - x0;
        let left = h / 12.0 * (f0 + 4.0 * flm + fmid);
        let right = h / 12.0 * (fmid + 4.0 * frm + f1);
        let diff = left + right - s;
        let local_tol = tol * h / width;
        if diff.abs() <= 15.0 * local_tol || h <= 1e-14 * width {
            total += left + right + diff / 15.0;
            err += diff.abs() / 15.0;
            accepted += 1;
            if accepted > max_intervals {
                return Err(Error::QuadratureFailure { estimate: sign * total, error: err });
            }
        } else {
            if stack.len() + accepted > max_intervals {
                return Err(Error::QuadratureFailure { estimate: sign * total, error: err });
            }
            stack.push((m, x1, fmid, frm, f1, right));
            stack.push((x0, m, f0, flm, fmid, left));
        }
    }
    Ok(sign * total)
}

/// Like [`adaptive_simpson`] but substitutes `x = a + (b - a) u^2` near an
/// endpoint flagged as singular, which removes inverse-square-root blowups.
pub fn integrate_with_endpoints<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    singular_a: bool,
    singular_b: bool,
    tol: f64,
) -> Result<f64> {
    endpoints_dyn(&f, a, b, singular_a, singular_b, tol)
}

fn endpoints_dyn(f: &dyn Fn(f64) -> f64, a: f64, b: f64, singular_a: bool, singular_b: bool, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let d = b - a;
    match (singular_a, singular_b) {
        (false, false) => adaptive_simpson(f, a, b, tol, MAX_INTERVALS),
        (true, false) => adaptive_simpson(
            |u| {
                let u = u.max(U_FLOOR);
                2.0 * d * u * f(a + d * u * u)
            },
            0.0,
            1.0,
            tol,
            MAX_INTERVALS,
        ),
        (false, true) => adaptive_simpson(
            |u| {
                let u = u.max(U_FLOOR);
                2.0 * d * u * f(b - d * u * u)
            },
            0.0,
            1.0,
            tol,
            MAX_INTERVALS,
        ),
        (true, true) => {
            let m = 0.5 * (a + b);
            Ok(endpoints_dyn(f, a, m, true, false, 0.5 * tol)? + endpoints_dyn(f, m, b, false, true, 0.5 * tol)?)
        }
    }
}

/// Integrates with `x = a + (b - a)(3u^2 - 2u^3)`, which flattens both
/// endpoints. Suited to integrands with `1/sqrt` growth at either end.
pub fn integrate_smoothstep<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let d = b - a;
    adaptive_simpson(
        |u| {
            let u = u.clamp(U_FLOOR, 1.0 - U_FLOOR);
            let smooth = |w: f64| w * w * (3.0 - 2.0 * w);
            // Measure from the nearer endpoint so the offset stays exact.
            let x = if u <= 0.5 { a + d * smooth(u) } else { b - d * smooth(1.0 - u) };
            d * 6.0 * u * (1.0 - u) * f(x)
        },
        0.0,
        1.0,
        tol,
        MAX_INTERVALS,
    )
}
