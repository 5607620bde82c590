//! Single-phase models and phase estimators.
//!
//! The model density on the filtering interval `D` is
//! `Q(x|φ) = q(x|φ) / N(φ)` with `q(x|φ) = F a₀ f(x − φ) + (1 − F)/2π` and
//! `N(φ) = ∫_D q(x|φ) dx`. With `F = 1` this is the noiseless kernel
//! restricted to `D`.

use std::f64::consts::TAU;

use rand::Rng;

use crate::kernels::Kernel;
use crate::optimize::{scan_golden_max, ScanOptions};
use crate::quadrature::integrate_with_breaks;
use crate::seed::{derive, stream_rng};
use crate::spectral::PromiseInterval;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseModel {
    pub kernel: Kernel,
    pub interval: PromiseInterval,
    pub fidelity: f64,
    pub a0: f64,
    /// Constant `c` added to the normalized density (`Q_c = Q + c`).
    pub reg_const: f64,
}

impl PhaseModel {
    pub fn new(kernel: Kernel, interval: PromiseInterval, fidelity: f64, a0: f64, reg_const: f64) -> Result<Self> {
        let m = PhaseModel { kernel, interval, fidelity, a0, reg_const };
        m.validate()?;
        Ok(m)
    }

    /// Noiseless model `Q(x|φ) = f(x − φ) / ∫_D f(x − φ) dx`.
    pub fn noiseless(kernel: Kernel, interval: PromiseInterval) -> Result<Self> {
        Self::new(kernel, interval, 1.0, 1.0, 0.0)
    }

    pub fn with_reg_const(mut self, c: f64) -> Result<Self> {
        self.reg_const = c;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.interval.validate()?;
        if !(self.fidelity > 0.0 && self.fidelity <= 1.0) {
            return Err(Error::domain(format!("fidelity must lie in (0, 1], got {}", self.fidelity)));
        }
        if !(self.a0 > 0.0 && self.a0 <= 1.0) {
            return Err(Error::domain(format!("overlap must lie in (0, 1], got {}", self.a0)));
        }
        if !(self.reg_const >= 0.0 && self.reg_const.is_finite()) {
            return Err(Error::domain(format!("regularization constant must be ≥ 0, got {}", self.reg_const)));
        }
        Ok(())
    }

    /// `F a₀`, the weight of the kernel term.
    pub fn amplitude(&self) -> f64 {
        self.fidelity * self.a0
    }

    /// `(1 − F)/2π`, the uniform floor.
    pub fn floor(&self) -> f64 {
        (1.0 - self.fidelity) / TAU
    }

    pub fn q(&self, x: f64, phi: f64) -> f64 {
        self.amplitude() * self.kernel.pdf(x - phi) + self.floor()
    }

    pub fn norm(&self, phi: f64) -> f64 {
        let d = &self.interval;
        self.amplitude() * self.kernel.interval_integral(d.lo() - phi, d.hi() - phi) + self.floor() * d.width
    }

    /// `∂_φ N(φ)`.
    pub fn norm_d1(&self, phi: f64) -> f64 {
        let d = &self.interval;
        self.amplitude() * (self.kernel.pdf(d.lo() - phi) - self.kernel.pdf(d.hi() - phi))
    }

    /// `∂²_φ N(φ)`.
    pub fn norm_d2(&self, phi: f64) -> f64 {
        let d = &self.interval;
        -self.amplitude() * (self.kernel.d1(d.lo() - phi) - self.kernel.d1(d.hi() - phi))
    }

    /// Normalized density `Q(x|φ)` (without the regularization constant).
    pub fn density(&self, x: f64, phi: f64) -> f64 {
        self.q(x, phi) / self.norm(phi)
    }

    /// `log Q(x|φ)`, or `log(Q(x|φ) + c)` when `c > 0`.
    pub fn log_density(&self, x: f64, phi: f64) -> Result<f64> {
        let v = self.log_density_unchecked(x, phi, self.norm(phi));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("log density at x = {x}, φ = {phi}")))
        }
    }

    fn log_density_unchecked(&self, x: f64, phi: f64, norm: f64) -> f64 {
        if self.reg_const > 0.0 {
            (self.q(x, phi) / norm + self.reg_const).ln()
        } else {
            self.q(x, phi).ln() - norm.ln()
        }
    }

    /// `∂_φ log Q(x|φ)` for the unregularized model.
    pub fn score(&self, x: f64, phi: f64) -> f64 {
        let dq = -self.amplitude() * self.kernel.d1(x - phi);
        dq / self.q(x, phi) - self.norm_d1(phi) / self.norm(phi)
    }

    /// `∂_φ log(Q(x|φ) + c)`.
    pub fn score_reg(&self, x: f64, phi: f64) -> f64 {
        if self.reg_const == 0.0 {
            return self.score(x, phi);
        }
        let q = self.density(x, phi);
        self.density_d1(x, phi) / (q + self.reg_const)
    }

    /// `∂_φ Q(x|φ)`.
    pub fn density_d1(&self, x: f64, phi: f64) -> f64 {
        let n = self.norm(phi);
        let dq = -self.amplitude() * self.kernel.d1(x - phi);
        (dq - self.q(x, phi) * self.norm_d1(phi) / n) / n
    }

    /// `∂²_φ log Q(x|φ)`.
    pub fn score_d1(&self, x: f64, phi: f64) -> f64 {
        let a = self.amplitude();
        let q = self.q(x, phi);
        let n = self.norm(phi);
        let (n1, n2) = (self.norm_d1(phi), self.norm_d2(phi));
        let dq = -a * self.kernel.d1(x - phi);
        let ddq = a * self.kernel.d2(x - phi);
        ddq / q - (dq / q).powi(2) - n2 / n + (n1 / n).powi(2)
    }

    /// `Q(x|φ) (∂_φ log Q)²`, finite where `Q` vanishes.
    pub fn fisher_integrand(&self, x: f64, phi: f64) -> f64 {
        let a = self.amplitude();
        let y = x - phi;
        let f = self.kernel.pdf(y);
        let q = a * f + self.floor();
        let dq = -a * self.kernel.d1(y);
        let dq2_over_q = if self.floor() == 0.0 {
            a * self.kernel.d1_sq_over_pdf(y)
        } else {
            a * a * f * self.kernel.d1_sq_over_pdf(y) / q
        };
        let n = self.norm(phi);
        let r = self.norm_d1(phi) / n;
        (dq2_over_q - 2.0 * dq * r + q * r * r) / n
    }

    /// Breakpoints for quadrature over `x ∈ D` at parameter `φ`.
    pub fn breakpoints(&self, phi: f64) -> Vec<f64> {
        self.kernel.breakpoints(phi, self.interval.lo(), self.interval.hi())
    }

    fn check_samples_in_domain(&self, xs: impl Iterator<Item = f64>) -> Result<()> {
        for x in xs {
            if !self.interval.contains(x) {
                return Err(Error::domain(format!("sample {x} lies outside the filtering interval")));
            }
        }
        Ok(())
    }
}

/// Noise weight `w` of the filtered GDN distribution:
/// `E[x] ≈ (1 − w) φ₀ + w φ_guess`.
pub fn noise_weight(fidelity: f64, a0: f64, sigma: f64, width: f64) -> Result<f64> {
    let m = crate::kernels::kernel_normalization(sigma)?;
    if !(fidelity > 0.0 && fidelity <= 1.0) || !(a0 > 0.0 && a0 <= 1.0) || !(width > 0.0) {
        return Err(Error::domain("noise weight needs F, a₀ in (0, 1] and |D| > 0"));
    }
    let noise = (1.0 - fidelity) * width * m / TAU;
    Ok(noise / (fidelity * a0 + noise))
}

/// Phase sample tagged with its quasiprobability branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedSample {
    pub x: f64,
    pub branch: u8,
    pub sign: i8,
}

impl TaggedSample {
    /// Branch 0 carries sign +1, every other branch −1.
    pub fn new(x: f64, branch: u8) -> Self {
        TaggedSample { x, branch, sign: if branch == 0 { 1 } else { -1 } }
    }

    pub fn tag_all(xs0: &[f64], xs1: &[f64]) -> Vec<TaggedSample> {
        xs0.iter()
            .map(|&x| TaggedSample::new(x, 0))
            .chain(xs1.iter().map(|&x| TaggedSample::new(x, 1)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: f64,
    pub bootstrap_stderr: Option<f64>,
    pub accepted: usize,
    pub total_shots: usize,
    /// The maximizer sat on the first or last scan point.
    pub at_boundary: bool,
    pub objective_trace: Option<Vec<(f64, f64)>>,
}

impl EstimateReport {
    fn point(estimate: f64, accepted: usize) -> Self {
        EstimateReport {
            estimate,
            bootstrap_stderr: None,
            accepted,
            total_shots: accepted,
            at_boundary: false,
            objective_trace: None,
        }
    }

    pub fn with_total_shots(mut self, total: usize) -> Self {
        self.total_shots = total;
        self
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.bootstrap_stderr = Some(stderr);
        self
    }
}

pub fn mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

pub fn mean_estimate(samples: &[f64]) -> Result<EstimateReport> {
    Ok(EstimateReport::point(mean(samples)?, samples.len()))
}

/// `(x̄ − w φ_guess)/(1 − w)`.
pub fn shifted_rescaled_mean(samples: &[f64], w: f64, phi_guess: f64) -> Result<EstimateReport> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::domain(format!("noise weight must lie in [0, 1), got {w}")));
    }
    let xbar = mean(samples)?;
    Ok(EstimateReport::point((xbar - w * phi_guess) / (1.0 - w), samples.len()))
}

/// `(Σ X₀ − Σ X₁)/(M₀ − M₁)`.
pub fn pec_average(x0: &[f64], x1: &[f64]) -> Result<EstimateReport> {
    if x0.len() == x1.len() {
        return Err(Error::Degenerate(format!("both branches hold {} samples", x0.len())));
    }
    let num: f64 = x0.iter().sum::<f64>() - x1.iter().sum::<f64>();
    let den = x0.len() as f64 - x1.len() as f64;
    Ok(EstimateReport::point(num / den, x0.len() + x1.len()))
}

/// Mean log-likelihood `(1/M) Σ log Q(x_j|φ)`; `-inf` where any sample has
/// zero model density.
pub fn mpe_objective(model: &PhaseModel, samples: &[f64], phi: f64) -> f64 {
    let n = model.norm(phi);
    let mut s = 0.0;
    for &x in samples {
        s += model.log_density_unchecked(x, phi, n);
    }
    s / samples.len() as f64
}

/// Moment-projection estimate: the maximizer of [`mpe_objective`] over `D`.
pub fn mpe_estimate(samples: &[f64], model: &PhaseModel) -> Result<EstimateReport> {
    mpe_estimate_with(samples, model, ScanOptions::default(), false)
}

pub fn mpe_estimate_with(
    samples: &[f64],
    model: &PhaseModel,
    opts: ScanOptions,
    keep_trace: bool,
) -> Result<EstimateReport> {
    model.validate()?;
    if model.reg_const != 0.0 {
        return Err(Error::domain("moment projection uses the unregularized model"));
    }
    if samples.len() < 2 {
        return Err(Error::domain(format!("need at least 2 samples, got {}", samples.len())));
    }
    model.check_samples_in_domain(samples.iter().copied())?;
    let d = &model.interval;
    let m = scan_golden_max(|phi| mpe_objective(model, samples, phi), d.lo(), d.hi(), opts)?;
    Ok(EstimateReport {
        estimate: m.argmax,
        bootstrap_stderr: None,
        accepted: samples.len(),
        total_shots: samples.len(),
        at_boundary: m.at_boundary,
        objective_trace: keep_trace.then_some(m.scan),
    })
}

/// Quasi-likelihood `(‖α‖₁/M) Σ sgn_j log Q_c(x_j|φ) + c ∫_D log Q_c(x|φ) dx`
/// with `M` the number of tagged samples.
pub fn nme_objective(model: &PhaseModel, samples: &[TaggedSample], alpha_norm: f64, phi: f64) -> f64 {
    let n = model.norm(phi);
    let mut s = 0.0;
    for t in samples {
        let v = model.log_density_unchecked(t.x, phi, n);
        if t.sign >= 0 {
            s += v;
        } else {
            s -= v;
        }
    }
    let mut total = alpha_norm * s / samples.len() as f64;
    if model.reg_const > 0.0 {
        let d = &model.interval;
        let integral = integrate_with_breaks(
            |x| model.log_density_unchecked(x, phi, n),
            d.lo(),
            d.hi(),
            &model.breakpoints(phi),
            1e-9,
        );
        total += match integral {
            Ok(v) => model.reg_const * v,
            Err(_) => f64::NAN,
        };
    }
    total
}

/// Noise-unbiased moment-projection estimate over tagged samples.
pub fn nme_estimate(samples: &[TaggedSample], model: &PhaseModel, alpha_norm: f64) -> Result<EstimateReport> {
    nme_estimate_with(samples, model, alpha_norm, ScanOptions::default(), false)
}

pub fn nme_estimate_with(
    samples: &[TaggedSample],
    model: &PhaseModel,
    alpha_norm: f64,
    opts: ScanOptions,
    keep_trace: bool,
) -> Result<EstimateReport> {
    model.validate()?;
    if !(alpha_norm > 0.0 && alpha_norm.is_finite()) {
        return Err(Error::domain(format!("‖α‖₁ must be positive, got {alpha_norm}")));
    }
    if samples.len() < 2 {
        return Err(Error::domain(format!("need at least 2 samples, got {}", samples.len())));
    }
    model.check_samples_in_domain(samples.iter().map(|t| t.x))?;
    let d = &model.interval;
    let m = scan_golden_max(|phi| nme_objective(model, samples, alpha_norm, phi), d.lo(), d.hi(), opts)?;
    Ok(EstimateReport {
        estimate: m.argmax,
        bootstrap_stderr: None,
        accepted: samples.len(),
        total_shots: samples.len(),
        at_boundary: m.at_boundary,
        objective_trace: keep_trace.then_some(m.scan),
    })
}

/// Right-hand side of the truncated-normal stationarity condition
/// `φ = x̄ + σ² [g_σ(φ − hi) − g_σ(φ − lo)] / G_σ(φ)` for the noiseless
/// Gaussian model on `[lo, hi]`.
pub fn gaussian_fixed_point_rhs(phi: f64, xbar: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    use crate::kernels::{raw_gauss, raw_gauss_mass};
    let g = raw_gauss_mass(lo - phi, hi - phi, sigma);
    xbar + sigma * sigma * (raw_gauss(phi - hi, sigma) - raw_gauss(phi - lo, sigma)) / g
}

/// Bootstrap standard error of `estimator` over `b` resamples drawn with
/// replacement. Resample `i` uses its own stream derived from `seed`; a
/// failing resample is redrawn, up to 10 attempts each.
pub fn bootstrap<T, F>(estimator: F, samples: &[T], b: usize, seed: u64) -> Result<f64>
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> Result<f64> + Sync + Send,
{
    if b < 2 {
        return Err(Error::domain(format!("bootstrap needs at least 2 resamples, got {b}")));
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len();
    let results = par::map_indexed(b, |i| {
        let mut rng = stream_rng(derive(seed, 0xB007), i as u64);
        let mut buf: Vec<T> = Vec::with_capacity(n);
        let mut last_err = None;
        for _ in 0..10 {
            buf.clear();
            for _ in 0..n {
                buf.push(samples[rng.random_range(0..n)].clone());
            }
            match estimator(&buf) {
                Ok(v) if v.is_finite() => return Ok(v),
                Ok(v) => last_err = Some(Error::NonFinite(format!("bootstrap estimate {v}"))),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap())
    });
    let mut values = Vec::with_capacity(b);
    for r in results {
        match r {
            Ok(v) => values.push(v),
            Err(e) => return Err(Error::RetryBudget(format!("bootstrap resample failed 10 times: {e}"))),
        }
    }
    Ok(sample_std(&values))
}

/// Sample standard deviation with the `n − 1` denominator.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Draws `m` samples from `Q(·|φ₀)` on `D` by rejection from a uniform
/// proposal.
pub fn sample_model<R: Rng + ?Sized>(model: &PhaseModel, phi0: f64, m: usize, rng: &mut R) -> Vec<f64> {
    let d = &model.interval;
    let bound = model.amplitude() * model.kernel.max_pdf() + model.floor();
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let x = d.lo() + d.width * rng.random::<f64>();
        if rng.random::<f64>() * bound < model.q(x, phi0) {
            out.push(x);
        }
    }
    out
}
