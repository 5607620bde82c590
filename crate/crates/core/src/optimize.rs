//! One-dimensional maximisation: equispaced scan followed by golden-section
//! refinement of the best bracket.
//!
//! Likelihoods built from few samples can be multimodal; the scan picks the
//! global basin and golden-section search refines it without derivatives.

use crate::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    /// Number of equispaced grid points including both endpoints.
    pub points: usize,
    /// Bracket width at which golden-section search stops.
    pub tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { points: 512, tol: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct Maximum {
    pub argmax: f64,
    pub value: f64,
    /// The best grid point was the first or last one.
    pub at_boundary: bool,
    /// Grid values `(x, f(x))` from the coarse scan.
    pub scan: Vec<(f64, f64)>,
}

/// Maximises `f` over `[lo, hi]`.
///
/// Non-finite objective values (`-inf` included) are treated as
/// `-inf`; a scan where every value is equal fails with
/// [`Error::FlatObjective`]. Ties go to the smaller abscissa.
pub fn scan_golden_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, opts: ScanOptions) -> Result<Maximum> {
    if !(lo < hi) {
        return Err(Error::domain(format!("empty search interval [{lo}, {hi}]")));
    }
    let n = opts.points.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let scan: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = if i == n - 1 { hi } else { lo + step * i as f64 };
            (x, eval(x))
        })
        .collect();

    let mut best = 0;
    for (i, &(_, v)) in scan.iter().enumerate() {
        if v > scan[best].1 {
            best = i;
        }
    }
    let (vmin, vmax) = scan
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, v)| (a.min(v), b.max(v)));
    if vmax == f64::NEG_INFINITY {
        return Err(Error::NonFinite("objective is -inf on the whole scan".into()));
    }
    if vmax == vmin {
        return Err(Error::FlatObjective);
    }

    let a = scan[best.saturating_sub(1)].0;
    let b = scan[(best + 1).min(n - 1)].0;
    let (x_ref, v_ref) = golden_max(&eval, a, b, opts.tol);
    let (argmax, value) = if v_ref >= scan[best].1 {
        (x_ref, v_ref)
    } else {
        scan[best]
    };
    let at_boundary = best == 0 || best == n - 1;
    Ok(Maximum { argmax, value, at_boundary, scan })
}

/// Golden-section search for a maximum of `f` on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a) > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_quadratic_maximum() {
        let m = scan_golden_max(|x| -(x - 0.123_456).powi(2), -1.0, 1.0, ScanOptions::default()).unwrap();
        assert!((m.argmax - 0.123_456).abs() < 1e-7);
        assert!(!m.at_boundary);
    }

    #[test]
    fn picks_global_basin_of_bimodal_function() {
        let f = |x: f64| (-(x + 0.5).powi(2) / 0.01).exp() + 2.0 * (-(x - 0.6).powi(2) / 0.01).exp();
        let m = scan_golden_max(f, -1.0, 1.0, ScanOptions::default()).unwrap();
        assert!((m.argmax - 0.6).abs() < 1e-6);
    }

    #[test]
    fn boundary_maximum_is_flagged() {
        let m = scan_golden_max(|x| x, 0.0, 1.0, ScanOptions::default()).unwrap();
        assert!(m.at_boundary);
        assert!((m.argmax - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_objective_is_an_error() {
        assert_eq!(
            scan_golden_max(|_| 3.0, 0.0, 1.0, ScanOptions::default()).unwrap_err(),
            Error::FlatObjective
        );
    }

    #[test]
    fn constant_shift_leaves_argmax_unchanged() {
        let f = |x: f64| (3.0 * x).sin() - x * x;
        let a = scan_golden_max(f, -2.0, 2.0, ScanOptions::default()).unwrap();
        let b = scan_golden_max(|x| f(x) + 17.5, -2.0, 2.0, ScanOptions::default()).unwrap();
        assert!((a.argmax - b.argmax).abs() < 1e-9);
    }
}
