//! Adaptive Simpson quadrature.
//!
//! Integrands in this crate are sharply peaked (kernels of width σ on an
//! interval of width |D|), so callers pass breakpoints near each peak and the
//! integrator subdivides every piece independently.

use crate::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    integrate_with_breaks(f, a, b, &[], tol)
}

/// Integrates `f` over `[a, b]`, splitting at every breakpoint strictly inside
/// the interval. The tolerance is shared between pieces in proportion to
/// their length.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!("invalid integration range [{a}, {b}]")));
    }
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();

    let width = b - a;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let piece_tol = (tol * (hi - lo) / width).max(f64::MIN_POSITIVE);
        total += simpson_piece(&f, lo, hi, piece_tol)?;
    }
    Ok(total)
}

fn simpson_piece<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    // Seed with four panels so narrow features near the midpoint are not
    // missed by a single coarse Simpson estimate.
    let q = 0.5 * (a + m);
    let r = 0.5 * (m + b);
    let fq = f(q);
    let fr = f(r);
    let left = simpson(a, m, fa, fq, fm);
    let right = simpson(m, b, fm, fr, fb);
    let l = recurse(f, a, m, fa, fq, fm, left, 0.5 * tol, 1, f64::INFINITY)?;
    let rr = recurse(f, m, b, fm, fr, fb, right, 0.5 * tol, 1, f64::INFINITY)?;
    Ok(l + rr)
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    parent_delta: f64,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::NonFinite(format!("integrand near x = {m}")));
    }
    // The last two clauses stop tolerances below round-off from forcing
    // refinement to the depth limit: either the error estimate is at the
    // rounding level of the integrand values, or halving the panel no longer
    // shrinks it (a smooth integrand gains a factor of ~32), so it is noise.
    let scale = fa.abs().max(fm.abs()).max(fb.abs()).max(flm.abs()).max(frm.abs());
    if delta.abs() <= 15.0 * tol
        || (b - a) < 1e-15 * (1.0 + a.abs())
        || delta.abs() <= 64.0 * f64::EPSILON * (b - a) * scale
        || (depth >= 12 && delta.abs() > 0.25 * parent_delta && delta.abs() <= 1e-9 * (b - a) * scale)
    {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature { lo: a, hi: b });
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, delta.abs())?;
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, delta.abs())?;
    Ok(l + r)
}
