//! Fisher information, first-order bias and closed-form estimator bounds.

use std::f64::consts::TAU;

use crate::estimators::PhaseModel;
use crate::kernels::raw_gauss;
use crate::optimize::golden_max;
use crate::quadrature::integrate_with_breaks;
use crate::spectral::FilteredDensity;
use crate::{Error, Result};

/// Constants of the refined Fisher-information bound.
pub const C1: f64 = 10.1;
pub const C2: f64 = 0.7;
pub const C3: f64 = 1.2;

const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Validity {
    pub valid: bool,
    pub reason: Option<String>,
}

impl Validity {
    fn ok() -> Self {
        Validity { valid: true, reason: None }
    }

    fn fail(reason: impl Into<String>) -> Self {
        Validity { valid: false, reason: Some(reason.into()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub bias_bound: f64,
    /// Bound on `M · Var[φ̃]`.
    pub variance_bound: f64,
    pub validity: Validity,
    pub fisher_info: Option<f64>,
    /// Largest σ allowed by the refined (appendix) condition.
    pub sigma_limit: Option<f64>,
    /// Largest σ allowed by `|D| min(1/6, log^{-1/2}((1 − F)/(F a₀)))`;
    /// `None` when the logarithm is not positive.
    pub sigma_limit_main: Option<f64>,
}

fn integrate_over_d(model: &PhaseModel, phi0: f64, f: impl Fn(f64) -> f64, rel: f64) -> Result<f64> {
    let d = &model.interval;
    let breaks = model.breakpoints(phi0);
    let rough = integrate_with_breaks(&f, d.lo(), d.hi(), &breaks, 1e-6)?;
    let tol = (rel * rough.abs()).max(QUAD_TOL);
    integrate_with_breaks(&f, d.lo(), d.hi(), &breaks, tol)
}

fn check_phi(model: &PhaseModel, phi0: f64) -> Result<()> {
    model.validate()?;
    if !model.interval.contains(phi0) {
        return Err(Error::domain(format!("φ₀ = {phi0} lies outside the filtering interval")));
    }
    Ok(())
}

/// `I₀ = ∫_D Q(x|φ₀) (∂_φ log Q)² dx`.
pub fn fisher_information(model: &PhaseModel, phi0: f64) -> Result<f64> {
    check_phi(model, phi0)?;
    integrate_over_d(model, phi0, |x| model.fisher_integrand(x, phi0), 1e-10)
}

/// `−∫_D Q(x|φ₀) ∂²_φ log Q dx`, equal to [`fisher_information`] for a
/// normalized model.
pub fn fisher_information_hessian(model: &PhaseModel, phi0: f64) -> Result<f64> {
    check_phi(model, phi0)?;
    let a = model.amplitude();
    let floor = model.floor();
    let n = model.norm(phi0);
    let r1 = model.norm_d1(phi0) / n;
    let r2 = model.norm_d2(phi0) / n;
    let k = model.kernel;
    let integrand = move |x: f64| {
        let y = x - phi0;
        let f = k.pdf(y);
        let q = a * f + floor;
        let dq2_over_q = if floor == 0.0 { a * k.d1_sq_over_pdf(y) } else { a * a * f * k.d1_sq_over_pdf(y) / q };
        let ddq = a * k.d2(y);
        // Q ∂² log Q = (q'' − q'²/q)/N − Q (N''/N − (N'/N)²)
        (ddq - dq2_over_q) / n - q / n * (r2 - r1 * r1)
    };
    Ok(-integrate_over_d(model, phi0, integrand, 1e-10)?)
}

/// `∫_D Q(x|φ₀) ∂_φ log Q dx`, zero for a normalized model.
pub fn score_zero_mean_check(model: &PhaseModel, phi0: f64) -> Result<f64> {
    check_phi(model, phi0)?;
    let d = &model.interval;
    integrate_with_breaks(|x| model.density_d1(x, phi0), d.lo(), d.hi(), &model.breakpoints(phi0), 1e-13)
}

/// First-order bias `∫_D (P − Q) ∂_φ log Q dx / I₀` of the moment-projection
/// estimator when the data follow `p` on `D`.
///
/// When `p` and the model share a kernel, the part of `p` proportional to
/// `q(·|φ₀)` is removed analytically (`∫ q ∂_φ log Q = 0`), so only the
/// spurious components are integrated. This keeps the result accurate when
/// the bias is far below the scale of `P` itself.
pub fn first_order_bias(p: &FilteredDensity, model: &PhaseModel, phi0: f64) -> Result<f64> {
    check_phi(model, phi0)?;
    let i0 = fisher_information(model, phi0)?;
    let d = &model.interval;
    let mut breaks = model.breakpoints(phi0);
    breaks.extend(p.breakpoints());
    if p.spec.kernel != model.kernel {
        let num = integrate_with_breaks(
            |x| p.pdf(x) * model.score(x, phi0) - model.density_d1(x, phi0),
            d.lo(),
            d.hi(),
            &breaks,
            1e-13,
        )?;
        return Ok(num / i0);
    }
    // p·mass = λ q(·|φ₀) + r with r free of the φ₀ component.
    let f_p = p.spec.fidelity;
    let w0: f64 = p.spec.spectral.entries().iter().filter(|e| (e.0 - phi0).abs() <= 1e-12).map(|e| e.1).sum();
    let lambda = f_p * w0 / model.amplitude();
    let floor = (1.0 - f_p) / TAU - lambda * model.floor();
    let others: Vec<(f64, f64)> = p
        .spec
        .spectral
        .entries()
        .iter()
        .filter(|e| (e.0 - phi0).abs() > 1e-12)
        .map(|&(ph, w)| (ph, f_p * w))
        .collect();
    let kernel = model.kernel;
    let r = |x: f64| others.iter().map(|&(ph, c)| c * kernel.pdf(x - ph)).sum::<f64>() + floor;
    let g = |x: f64| r(x) * model.score(x, phi0);
    // Rescale so the absolute quadrature tolerance acts as a relative one.
    let n = 1024;
    let scale = (0..=n)
        .map(|i| d.lo() + d.width * i as f64 / n as f64)
        .chain(breaks.iter().copied().filter(|b| d.contains(*b)))
        .map(|x| g(x).abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let num = scale * integrate_with_breaks(|x| g(x) / scale, d.lo(), d.hi(), &breaks, 1e-12)?;
    Ok(num / p.mass() / i0)
}

/// Signed offset `∫_D P(x) x dx − φ₀` of the sample mean.
pub fn mean_estimator_offset(p: &FilteredDensity, phi0: f64) -> Result<f64> {
    Ok(p.mean()? - phi0)
}

/// `|∫_D P(x) x dx − φ₀|`.
pub fn mean_estimator_bias(p: &FilteredDensity, phi0: f64) -> Result<f64> {
    Ok(mean_estimator_offset(p, phi0)?.abs())
}

fn check_gaussian_args(sigma: f64, d: f64, a0: f64, width: f64) -> Result<()> {
    if !(sigma > 0.0) || !(d > 0.0) || !(width > 0.0) || !(a0 > 0.0 && a0 <= 1.0) {
        return Err(Error::domain(format!(
            "need σ > 0, d > 0, |D| > 0 and a₀ ∈ (0, 1]; got σ={sigma}, d={d}, a₀={a0}, |D|={width}"
        )));
    }
    Ok(())
}

/// `4σ² g_σ(d) (1 − a₀)/a₀ · |D|/d`, valid for `σ ≤ |D|/6`.
pub fn gaussian_bias_bound_noiseless(sigma: f64, d: f64, a0: f64, width: f64) -> Result<BoundReport> {
    check_gaussian_args(sigma, d, a0, width)?;
    let bias = 4.0 * sigma * sigma * raw_gauss(d, sigma) * (1.0 - a0) / a0 * width / d;
    let limit = width / 6.0;
    let validity = if sigma <= limit {
        Validity::ok()
    } else {
        Validity::fail(format!("σ = {sigma} exceeds |D|/6 = {limit}"))
    };
    Ok(BoundReport {
        bias_bound: bias,
        variance_bound: gaussian_var_bound_noiseless(sigma),
        validity,
        fisher_info: None,
        sigma_limit: Some(limit),
        sigma_limit_main: Some(limit),
    })
}

/// `2σ²`.
pub fn gaussian_var_bound_noiseless(sigma: f64) -> f64 {
    2.0 * sigma * sigma
}

/// `(1 − F)/(F a₀)`.
pub fn noise_ratio(fidelity: f64, a0: f64) -> f64 {
    (1.0 - fidelity) / (fidelity * a0)
}

/// `(|D|/6) / √(C₃ + ln(1 + C₂ (|D|/2π) r))`.
pub fn gdn_sigma_limit(width: f64, fidelity: f64, a0: f64) -> f64 {
    let r = noise_ratio(fidelity, a0);
    width / 6.0 / (C3 + (1.0 + C2 * width / TAU * r).ln()).sqrt()
}

/// `|D| min(1/6, ln^{-1/2}((1 − F)/(F a₀)))`, or `None` if the logarithm is
/// not positive.
pub fn gdn_sigma_limit_main(width: f64, fidelity: f64, a0: f64) -> Option<f64> {
    let l = noise_ratio(fidelity, a0).ln();
    (l > 0.0).then(|| width * (1.0 / 6.0f64).min(1.0 / l.sqrt()))
}

/// Bias and variance bounds for the Gaussian fMPE under global depolarizing
/// noise.
pub fn gaussian_bounds_gdn(sigma: f64, d: f64, a0: f64, fidelity: f64, width: f64) -> Result<BoundReport> {
    check_gaussian_args(sigma, d, a0, width)?;
    if !(fidelity > 0.0 && fidelity <= 1.0) {
        return Err(Error::domain(format!("fidelity must lie in (0, 1], got {fidelity}")));
    }
    let r = noise_ratio(fidelity, a0);
    let bias = 20.0 * sigma * sigma * raw_gauss(d, sigma) * (1.0 - a0) / a0 * (1.0 + r) * width / d;
    let var = 10.0 * sigma * sigma * (1.0 + r) * (1.0 + r / TAU);
    let limit = gdn_sigma_limit(width, fidelity, a0).min(width / 6.0);
    let validity = if sigma <= limit {
        Validity::ok()
    } else {
        Validity::fail(format!("σ = {sigma} exceeds the noise-adjusted limit {limit:.6}"))
    };
    Ok(BoundReport {
        bias_bound: bias,
        variance_bound: var,
        validity,
        fisher_info: None,
        sigma_limit: Some(limit),
        sigma_limit_main: gdn_sigma_limit_main(width, fidelity, a0),
    })
}

/// `C₁ σ² (1 + C₂ (|D|/2π) r) / (F a₀)`, bounding `1/(P_A I₀)`.
pub fn shots_fisher_bound(sigma: f64, width: f64, fidelity: f64, a0: f64) -> f64 {
    let r = noise_ratio(fidelity, a0);
    C1 * sigma * sigma * (1.0 + C2 * width / TAU * r) / (fidelity * a0)
}

/// `S_c = max_{x∈D} |∂_φ log Q_c(x|φ)|` at `φ₀` (4096-point grid plus
/// golden-section refinement of the best cell).
pub fn max_abs_score(model: &PhaseModel, phi0: f64) -> Result<f64> {
    check_phi(model, phi0)?;
    let d = &model.interval;
    let n = 4096;
    let h = d.width / (n - 1) as f64;
    let s = |x: f64| {
        let v = model.score_reg(x, phi0).abs();
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = (d.lo(), s(d.lo()));
    for i in 1..n {
        let x = if i == n - 1 { d.hi() } else { d.lo() + h * i as f64 };
        let v = s(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    if !best.1.is_finite() {
        return Ok(f64::INFINITY);
    }
    let a = (best.0 - h).max(d.lo());
    let b = (best.0 + h).min(d.hi());
    let (_, v) = golden_max(&s, a, b, 1e-10);
    Ok(v.max(best.1))
}

/// `I_c = ∫_D (∂_φ Q)² / (Q + c) dx` at `φ₀`.
pub fn fisher_information_reg(model: &PhaseModel, phi0: f64) -> Result<f64> {
    if model.reg_const == 0.0 {
        return fisher_information(model, phi0);
    }
    check_phi(model, phi0)?;
    let c = model.reg_const;
    integrate_over_d(
        model,
        phi0,
        |x| {
            let dq = model.density_d1(x, phi0);
            dq * dq / (model.density(x, phi0) + c)
        },
        1e-10,
    )
}

/// Bias bound `‖h‖₁ S_c / I_c` and variance bound `‖α‖₁² S_c² / I_c²` of the
/// noise-unbiased estimator.
pub fn nme_bounds(model: &PhaseModel, phi0: f64, alpha_norm: f64, h_norm: f64) -> Result<BoundReport> {
    if !(alpha_norm > 0.0) || !(h_norm >= 0.0) {
        return Err(Error::domain("need ‖α‖₁ > 0 and ‖h‖₁ ≥ 0"));
    }
    let s = max_abs_score(model, phi0)?;
    let i = fisher_information_reg(model, phi0)?;
    let bias = if h_norm == 0.0 { 0.0 } else { h_norm * s / i };
    Ok(BoundReport {
        bias_bound: bias,
        variance_bound: alpha_norm * alpha_norm * s * s / (i * i),
        validity: Validity::ok(),
        fisher_info: Some(i),
        sigma_limit: None,
        sigma_limit_main: None,
    })
}

/// Total calls `T(t) = ε⁻² t⁻¹ e^{2γt} a₀⁻²` at fixed noise rate `γ`.
pub fn cost_model_gdn(gamma: f64, epsilon: f64, a0: f64, t: f64) -> Result<f64> {
    if !(gamma > 0.0 && epsilon > 0.0 && a0 > 0.0 && t > 0.0) {
        return Err(Error::domain("cost model arguments must be positive"));
    }
    Ok((2.0 * gamma * t).exp() / (epsilon * epsilon * t * a0 * a0))
}

/// Minimizer `t* = 1/(2γ)` of [`cost_model_gdn`].
pub fn optimal_depth(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::domain("noise rate must be positive"));
    }
    Ok(0.5 / gamma)
}

/// Total calls `T = ε⁻² t⁻¹ F⁻² a₀⁻²` at fixed fidelity.
pub fn cost_model_fixed_fidelity(epsilon: f64, a0: f64, fidelity: f64, t: f64) -> Result<f64> {
    if !(epsilon > 0.0 && a0 > 0.0 && t > 0.0 && fidelity > 0.0 && fidelity <= 1.0) {
        return Err(Error::domain("cost model arguments out of range"));
    }
    Ok(1.0 / (epsilon * epsilon * t * fidelity * fidelity * a0 * a0))
}

/// Total calls `T = η⁻¹ t⁻¹ ε⁻²` without noise.
pub fn cost_model_noiseless(epsilon: f64, eta: f64, t: f64) -> Result<f64> {
    if !(epsilon > 0.0 && eta > 0.0 && t > 0.0) {
        return Err(Error::domain("cost model arguments must be positive"));
    }
    Ok(1.0 / (eta * t * epsilon * epsilon))
}

/// Depth requirements quoted alongside the cost models, evaluated without
/// their hidden constants. Advisory only.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthAdvisory {
    /// `Δ⁻¹ log^{-1/2}(Δ ε⁻¹ η⁻¹)` (noiseless); `None` if the log is ≤ 0.
    pub noiseless: Option<f64>,
    /// `Δ⁻¹ log^{-1/2}(Δ ε⁻¹ a₀⁻² F⁻¹)` (fixed fidelity).
    pub fixed_fidelity: Option<f64>,
    /// `Δ⁻¹ (γ Δ⁻¹ + log(a₀⁻¹ ε⁻¹))` (fixed noise rate).
    pub fixed_rate: f64,
}

pub fn depth_advisory(gap: f64, epsilon: f64, a0: f64, fidelity: f64, gamma: f64) -> DepthAdvisory {
    let inv_sqrt_log = |arg: f64| {
        let l = arg.ln();
        (l > 0.0).then(|| 1.0 / (gap * l.sqrt()))
    };
    DepthAdvisory {
        noiseless: inv_sqrt_log(gap / (epsilon * a0)),
        fixed_fidelity: inv_sqrt_log(gap / (epsilon * a0 * a0 * fidelity)),
        fixed_rate: (gamma / gap + (1.0 / (a0 * epsilon)).ln()) / gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::spectral::{NoisySpec, PromiseInterval, SpectralDistribution};
    use std::f64::consts::{E, PI};

    fn model(kernel: Kernel, lo: f64, hi: f64, f: f64, a0: f64) -> PhaseModel {
        PhaseModel::new(kernel, PromiseInterval::from_bounds(lo, hi).unwrap(), f, a0, 0.0).unwrap()
    }

    #[test]
    fn fisher_wide_interval_gaussian_limit() {
        let m = model(Kernel::gaussian(0.1).unwrap(), -PI, PI, 1.0, 1.0);
        let i = fisher_information(&m, 0.0).unwrap();
        assert!((i * 0.01 - 1.0).abs() < 1e-3, "{i}");
    }

    #[test]
    fn fisher_truncated_gaussian_range_and_dual_form() {
        let m = model(Kernel::gaussian(0.3).unwrap(), -1.0, 1.0, 1.0, 1.0);
        let i = fisher_information(&m, 0.0).unwrap();
        let ratio = i * 0.09;
        assert!((0.95..=1.0).contains(&ratio), "{ratio}");
        let h = fisher_information_hessian(&m, 0.0).unwrap();
        assert!(((i - h) / i).abs() < 1e-6);
    }

    #[test]
    fn score_zero_mean() {
        let g = model(Kernel::gaussian(0.3).unwrap(), -1.0, 1.0, 1.0, 1.0);
        assert!(score_zero_mean_check(&g, 0.0).unwrap().abs() < 1e-12);
        assert!(score_zero_mean_check(&g, 0.5).unwrap().abs() < 1e-8);
        let f = model(Kernel::fejer(16).unwrap(), -1.0, 1.0, 1.0, 1.0);
        assert!(score_zero_mean_check(&f, 0.2).unwrap().abs() < 1e-8);
    }

    #[test]
    fn first_order_bias_vanishes_for_model_data() {
        let m = model(Kernel::gaussian(0.3).unwrap(), -1.0, 1.0, 1.0, 1.0);
        let spec = NoisySpec::new(SpectralDistribution::single(0.25).unwrap(), m.kernel, 1.0).unwrap();
        let p = FilteredDensity::new(spec, m.interval).unwrap();
        assert!(first_order_bias(&p, &m, 0.25).unwrap().abs() < 1e-10);
    }

    #[test]
    fn first_order_bias_matches_high_precision_oracle() {
        // (σ, a₀, φ₀, φ₁, |D|/2, expected) from 40-digit quadrature of
        // (a₁/Z) ∫_D g(x − φ₁) s(x) dx / I₀, subdivided towards the edge.
        let cases = [
            (0.3, 0.7, 0.25, 1.2, 1.0, 0.059177958480557869),
            (0.3, 0.7, -0.4, -1.5, 1.0, -0.011396639077063641),
            (0.06, 0.6, -0.02, 2.4, 0.9, 1.8698987917100188e-138),
        ];
        for (sigma, a0, phi0, phi1, half, want) in cases {
            let m = model(Kernel::gaussian(sigma).unwrap(), -half, half, 1.0, 1.0);
            let spectral = SpectralDistribution::new([(phi0, a0), (phi1, 1.0 - a0)]).unwrap();
            let p = FilteredDensity::new(NoisySpec::new(spectral, m.kernel, 1.0).unwrap(), m.interval).unwrap();
            let got = first_order_bias(&p, &m, phi0).unwrap();
            assert!(((got - want) / want).abs() < 1e-8, "{got:e} vs {want:e}");
        }
    }

    #[test]
    fn closed_form_bounds() {
        let r = gaussian_bias_bound_noiseless(0.3, 1.0, 0.7, 2.0).unwrap();
        let g = (-1.0f64 / 0.18).exp() / (0.3 * TAU.sqrt());
        assert!((r.bias_bound - 4.0 * 0.09 * g * (3.0 / 7.0) * 2.0).abs() < 1e-15);
        assert!(r.validity.valid);
        assert_eq!(gaussian_bias_bound_noiseless(0.3, 1.0, 1.0, 2.0).unwrap().bias_bound, 0.0);
        assert!(!gaussian_bias_bound_noiseless(0.5, 1.0, 0.7, 2.0).unwrap().validity.valid);
        assert!((gaussian_var_bound_noiseless(0.3) - 0.18).abs() < 1e-15);

        let gd = gaussian_bounds_gdn(0.1, 1.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(gd.bias_bound, 0.0);
        let gd = gaussian_bounds_gdn(0.1, 1.0, 0.5, 1.0 / E, 2.0).unwrap();
        assert!(gd.sigma_limit_main.is_some());
        let gd1 = gaussian_bounds_gdn(0.1, 1.0, 0.5, 1.0, 2.0).unwrap();
        assert!(gd1.sigma_limit_main.is_none());
        let nl = gaussian_bias_bound_noiseless(0.1, 1.0, 0.5, 2.0).unwrap();
        assert!((gd1.bias_bound / nl.bias_bound - 5.0).abs() < 1e-12);
    }

    #[test]
    fn cost_model_minimum() {
        for gamma in [0.01, 0.1, 1.0] {
            let t = optimal_depth(gamma).unwrap();
            let v = cost_model_gdn(gamma, 0.01, 0.5, t).unwrap();
            assert!(cost_model_gdn(gamma, 0.01, 0.5, t * 1.01).unwrap() > v);
            assert!(cost_model_gdn(gamma, 0.01, 0.5, t * 0.99).unwrap() > v);
            let ratio = v / (gamma / (0.01f64.powi(2) * 0.25));
            assert!((ratio / (2.0 * E) - 1.0).abs() < 1e-12);
        }
        assert_eq!(optimal_depth(0.1).unwrap(), 5.0);
        let a = cost_model_gdn(0.1, 0.01, 0.25, 3.0).unwrap();
        let b = cost_model_gdn(0.1, 0.01, 0.5, 3.0).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn nme_bound_limits() {
        let base = model(Kernel::gaussian(0.3).unwrap(), -1.0, 1.0, 1.0, 1.0);
        assert_eq!(nme_bounds(&base, 0.1, 1.0, 0.0).unwrap().bias_bound, 0.0);
        let r = nme_bounds(&base, 0.1, 1.0, 0.2).unwrap();
        let s = max_abs_score(&base, 0.1).unwrap();
        let i = fisher_information(&base, 0.1).unwrap();
        assert!((r.variance_bound - s * s / (i * i)).abs() < 1e-12 * r.variance_bound);
    }

    #[test]
    fn regularization_shrinks_score_and_information_together() {
        let d = PromiseInterval::from_bounds(-1.0, 1.0).unwrap();
        let mut last = (f64::INFINITY, f64::INFINITY);
        let mut ratios = Vec::new();
        for c in [0.1, 1.0, 10.0, 100.0] {
            let m = PhaseModel::new(Kernel::gaussian(0.3).unwrap(), d, 0.6, 0.7, c).unwrap();
            let (s, i) = (max_abs_score(&m, 0.1).unwrap(), fisher_information_reg(&m, 0.1).unwrap());
            assert!(s < last.0 && i < last.1);
            last = (s, i);
            ratios.push(s / i);
        }
        // Both fall like 1/c, so the bias bound levels off instead of vanishing.
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi / lo < 1.05, "{ratios:?}");
    }
}
