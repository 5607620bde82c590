//! Gaussian and Fejér kernels on the circle.
//!
//! Both kernels are densities on `[-π, π)` extended periodically, so
//! `pdf(x - φ)` is well defined for any real argument. The Gaussian kernel is
//! the normal density truncated to one period and renormalized by
//! [`kernel_normalization`]; the raw normal density is [`gaussian_pdf`].

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Number of cells in the tabulated Fejér inverse CDF.
pub const FEJER_TABLE_CELLS: usize = 1 << 14;

/// Wraps an angle to `[-π, π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if y >= PI {
        y - TAU
    } else {
        y
    }
}

/// Untruncated normal density `g_σ(x)`.
pub fn gaussian_pdf(x: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(raw_gauss(x, sigma))
}

#[inline]
pub(crate) fn raw_gauss(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    INV_SQRT_2PI / sigma * (-0.5 * z * z).exp()
}

/// `∫_lo^hi g_σ(x - φ) dx` for the untruncated normal density.
pub fn gaussian_interval_integral(lo: f64, hi: f64, phi: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(lo < hi) {
        return Err(Error::domain(format!("interval [{lo}, {hi}] is empty")));
    }
    Ok(raw_gauss_mass(lo - phi, hi - phi, sigma))
}

/// Normal mass on `[a, b]` (relative to a zero-mean density), using the
/// complementary error function on one-sided tails to keep relative accuracy.
pub(crate) fn raw_gauss_mass(a: f64, b: f64, sigma: f64) -> f64 {
    let s = sigma * SQRT_2;
    let (za, zb) = (a / s, b / s);
    if za >= 0.0 {
        0.5 * (libm::erfc(za) - libm::erfc(zb))
    } else if zb <= 0.0 {
        0.5 * (libm::erfc(-zb) - libm::erfc(-za))
    } else {
        0.5 * (libm::erf(zb) - libm::erf(za))
    }
}

/// `M_σ = ∫_{-π}^{π} g_σ(x) dx = erf(π / (√2 σ))`.
pub fn kernel_normalization(sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(libm::erf(PI / (SQRT_2 * sigma)))
}

/// Continuous Fejér density `(1/(2πK)) (1 - cos Kx)/(1 - cos x)`.
pub fn fejer_pdf(x: f64, k: u32) -> Result<f64> {
    check_k(k)?;
    Ok(fejer_density(x, k as f64))
}

fn fejer_density(x: f64, k: f64) -> f64 {
    let b = (0.5 * x).sin();
    if b.abs() < 1e-9 {
        return k / TAU;
    }
    let r = (0.5 * k * x).sin() / b;
    r * r / (TAU * k)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("kernel width must be positive, got {sigma}")))
    }
}

fn check_k(k: u32) -> Result<()> {
    if k >= 2 {
        Ok(())
    } else {
        Err(Error::domain(format!("Fejér register dimension must be at least 2, got {k}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Gaussian { sigma: f64 },
    Fejer { k: u32 },
}

impl Kernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Kernel::Gaussian { sigma })
    }

    pub fn fejer(k: u32) -> Result<Self> {
        check_k(k)?;
        Ok(Kernel::Fejer { k })
    }

    /// Fejér kernel of a register with `n` qubits (`K = 2^n`).
    pub fn fejer_qubits(n: u32) -> Result<Self> {
        if !(1..=30).contains(&n) {
            return Err(Error::domain(format!("register size {n} out of range")));
        }
        Self::fejer(1 << n)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { sigma } => check_sigma(sigma),
            Kernel::Fejer { k } => check_k(k),
        }
    }

    /// Density at `x`, periodic with period 2π.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Kernel::Gaussian { sigma } => raw_gauss(wrap_phase(x), sigma) / gauss_norm(sigma),
            Kernel::Fejer { k } => fejer_density(x, k as f64),
        }
    }

    /// `max_x pdf(x)`.
    pub fn max_pdf(&self) -> f64 {
        match *self {
            Kernel::Gaussian { sigma } => INV_SQRT_2PI / sigma / gauss_norm(sigma),
            Kernel::Fejer { k } => k as f64 / TAU,
        }
    }

    /// `∫_lo^hi pdf(x) dx` for `lo ≤ hi ≤ lo + 2π`; endpoints may lie
    /// outside `[-π, π)`.
    pub fn interval_integral(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        match *self {
            Kernel::Gaussian { sigma } => {
                let mut total = 0.0;
                for m in -2..=2 {
                    let shift = TAU * m as f64;
                    let a = (lo - shift).max(-PI);
                    let b = (hi - shift).min(PI);
                    if a < b {
                        total += raw_gauss_mass(a, b, sigma);
                    }
                }
                total / gauss_norm(sigma)
            }
            Kernel::Fejer { k } => fejer_antiderivative(hi, k) - fejer_antiderivative(lo, k),
        }
    }

    /// First derivative of the density.
    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            Kernel::Gaussian { sigma } => {
                let d = wrap_phase(x);
                -d / (sigma * sigma) * self.pdf(x)
            }
            Kernel::Fejer { k } => match FejerParts::new(x, k) {
                Some(p) => p.a * p.w / (TAU * p.k * p.b.powi(3)),
                None => fejer_series(x, k).1,
            },
        }
    }

    /// Second derivative of the density.
    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            Kernel::Gaussian { sigma } => {
                let d = wrap_phase(x);
                let s2 = sigma * sigma;
                (d * d / (s2 * s2) - 1.0 / s2) * self.pdf(x)
            }
            Kernel::Fejer { k } => match FejerParts::new(x, k) {
                Some(p) => {
                    let num = 0.5 * p.k * p.ac * p.w * p.b
                        - 0.5 * (p.k * p.k - 1.0) * p.a * p.a * p.b * p.b
                        - 1.5 * p.a * p.w * p.bc;
                    num / (TAU * p.k * p.b.powi(4))
                }
                None => fejer_series(x, k).2,
            },
        }
    }

    /// `pdf'(x)² / pdf(x)`, finite at the zeros of the Fejér kernel.
    pub fn d1_sq_over_pdf(&self, x: f64) -> f64 {
        match *self {
            Kernel::Gaussian { sigma } => {
                let d = wrap_phase(x);
                let s2 = sigma * sigma;
                d * d / (s2 * s2) * self.pdf(x)
            }
            Kernel::Fejer { k } => match FejerParts::new(x, k) {
                Some(p) => p.w * p.w / (TAU * p.k * p.b.powi(4)),
                None => {
                    let (f, f1, _) = fejer_series(x, k);
                    f1 * f1 / f
                }
            },
        }
    }

    /// Points in `[lo, hi]` where the density or its derivatives change
    /// rapidly; used to split quadrature ranges.
    pub fn breakpoints(&self, center: f64, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = Vec::new();
        match *self {
            Kernel::Gaussian { sigma } => {
                for m in -1..=1 {
                    let c = center + TAU * m as f64;
                    for j in -6..=6 {
                        let x = c + sigma * j as f64;
                        if x > lo && x < hi {
                            pts.push(x);
                        }
                    }
                }
            }
            Kernel::Fejer { k } => {
                // Zeros at 2πm/K split the kernel into smooth lobes.
                let step = TAU / k as f64;
                let m0 = ((lo - center) / step).floor() as i64;
                let m1 = ((hi - center) / step).ceil() as i64;
                for m in m0..=m1 {
                    let x = center + step * m as f64;
                    if x > lo && x < hi {
                        pts.push(x);
                    }
                }
            }
        }
        pts
    }
}

fn gauss_norm(sigma: f64) -> f64 {
    libm::erf(PI / (SQRT_2 * sigma))
}

/// Analytic log-derivative of the kernel density.
pub fn kernel_score(kernel: &Kernel, x: f64) -> Result<f64> {
    kernel.validate()?;
    match *kernel {
        Kernel::Gaussian { sigma } => Ok(-wrap_phase(x) / (sigma * sigma)),
        Kernel::Fejer { k } => {
            let x = wrap_phase(x);
            let kf = k as f64;
            if (kf * x).abs() < 1e-2 {
                return Ok(-(kf * kf - 1.0) * x / 6.0 - (kf.powi(4) - 1.0) * x.powi(3) / 360.0);
            }
            let a = (0.5 * kf * x).sin();
            if a.abs() < 1e-12 {
                return Err(Error::NonFinite(format!("Fejér score at kernel zero x = {x}")));
            }
            Ok(kf * (0.5 * kf * x).cos() / a - (0.5 * x).cos() / (0.5 * x).sin())
        }
    }
}

struct FejerParts {
    k: f64,
    a: f64,
    b: f64,
    ac: f64,
    bc: f64,
    w: f64,
}

impl FejerParts {
    /// Closed-form pieces; `None` close to the origin where they cancel.
    fn new(x: f64, k: u32) -> Option<Self> {
        let x = wrap_phase(x);
        let k = k as f64;
        if (k * x).abs() < 0.2 {
            return None;
        }
        let (a, ac) = (0.5 * k * x).sin_cos();
        let (b, bc) = (0.5 * x).sin_cos();
        let w = k * ac * b - a * bc;
        Some(FejerParts { k, a, b, ac, bc, w })
    }
}

/// `(f, f', f'')` of the Fejér kernel from its cosine series.
fn fejer_series(x: f64, k: u32) -> (f64, f64, f64) {
    let kf = k as f64;
    let (mut f, mut f1, mut f2) = (1.0, 0.0, 0.0);
    for j in 1..k {
        let jf = j as f64;
        let c = 2.0 * (1.0 - jf / kf);
        let (s, co) = (jf * x).sin_cos();
        f += c * co;
        f1 -= c * jf * s;
        f2 -= c * jf * jf * co;
    }
    (f / TAU, f1 / TAU, f2 / TAU)
}

/// Antiderivative of the Fejér density with `A(0) = 0`, valid on all of ℝ.
fn fejer_antiderivative(x: f64, k: u32) -> f64 {
    let kf = k as f64;
    let mut s = x;
    for j in 1..k {
        let jf = j as f64;
        s += 2.0 * (1.0 - jf / kf) * (jf * x).sin() / jf;
    }
    s / TAU
}

/// Draws kernel samples in `[-π, π)`. Build once and reuse; the Fejér
/// variant holds an inverse-CDF table.
#[derive(Debug, Clone)]
pub struct KernelSampler {
    inner: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Gaussian { sigma: f64 },
    Fejer { cdf: Vec<f64> },
}

impl KernelSampler {
    pub fn new(kernel: &Kernel) -> Result<Self> {
        kernel.validate()?;
        let inner = match *kernel {
            Kernel::Gaussian { sigma } => SamplerKind::Gaussian { sigma },
            Kernel::Fejer { k } => {
                let n = FEJER_TABLE_CELLS;
                let a0 = fejer_antiderivative(-PI, k);
                let mut cdf: Vec<f64> = (0..=n)
                    .map(|i| {
                        let x = -PI + TAU * i as f64 / n as f64;
                        fejer_antiderivative(x, k) - a0
                    })
                    .collect();
                let total = cdf[n];
                for c in &mut cdf {
                    *c /= total;
                }
                cdf[n] = 1.0;
                SamplerKind::Fejer { cdf }
            }
        };
        Ok(KernelSampler { inner })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.inner {
            SamplerKind::Gaussian { sigma } => loop {
                let z: f64 = rng.sample(StandardNormal);
                let x = z * sigma;
                if x > -PI && x < PI {
                    return x;
                }
            },
            SamplerKind::Fejer { cdf } => {
                let u: f64 = rng.random();
                // First index with cdf[i] > u; the cell is [i-1, i].
                let i = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1);
                let (c0, c1) = (cdf[i - 1], cdf[i]);
                let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                let n = (cdf.len() - 1) as f64;
                let x = -PI + TAU * ((i - 1) as f64 + t) / n;
                wrap_phase(x)
            }
        }
    }
}

/// Convenience wrapper that builds a sampler for a single draw.
pub fn kernel_sample<R: Rng + ?Sized>(kernel: &Kernel, rng: &mut R) -> Result<f64> {
    Ok(KernelSampler::new(kernel)?.sample(rng))
}
