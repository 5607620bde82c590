//! Spectral, noisy and filtered phase distributions.

use std::f64::consts::{PI, TAU};

use rand::Rng;

use crate::kernels::{wrap_phase, Kernel, KernelSampler};
use crate::quadrature::integrate_with_breaks;
use crate::{Error, Result};

const MERGE_TOL: f64 = 1e-12;

/// Point masses `a_j` at eigenphases `φ_j`, sorted by phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDistribution {
    entries: Vec<(f64, f64)>,
}

impl SpectralDistribution {
    /// Wraps phases, merges entries closer than 1e-12 rad and checks that
    /// the weights are positive and sum to one.
    pub fn new(entries: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut raw: Vec<(f64, f64)> = Vec::new();
        for (phase, weight) in entries {
            if !phase.is_finite() || !weight.is_finite() {
                return Err(Error::domain("non-finite spectral entry"));
            }
            if weight <= 0.0 {
                return Err(Error::domain(format!("weight {weight} at phase {phase} is not positive")));
            }
            raw.push((wrap_phase(phase), weight));
        }
        if raw.is_empty() {
            return Err(Error::domain("spectral distribution has no entries"));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut entries: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (p, w) in raw {
            match entries.last_mut() {
                Some(last) if p - last.0 <= MERGE_TOL => last.1 += w,
                _ => entries.push((p, w)),
            }
        }
        // Phases just below π and at −π coincide on the circle.
        if entries.len() > 1 {
            let (first, last) = (entries[0], entries[entries.len() - 1]);
            if first.0 + TAU - last.0 <= MERGE_TOL {
                entries[0].1 += last.1;
                entries.pop();
            }
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("weights sum to {total}, expected 1")));
        }
        Ok(SpectralDistribution { entries })
    }

    /// A single eigenphase with unit weight.
    pub fn single(phase: f64) -> Result<Self> {
        Self::new([(phase, 1.0)])
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total weight of the phases lying inside `d`.
    pub fn weight_in(&self, d: &PromiseInterval) -> f64 {
        self.entries.iter().filter(|e| d.contains(e.0)).map(|e| e.1).sum()
    }

    /// Entry with the smallest phase; for a Hamiltonian spectrum under
    /// `U = e^{iH}` with `|E| < π` this is the ground state.
    pub fn lowest(&self) -> (f64, f64) {
        self.entries[0]
    }

    /// Parses `phase,weight` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
            let (a, b) = line.split_once(',').ok_or_else(|| parse_err("expected `phase,weight`"))?;
            let p: f64 = a.trim().parse().map_err(|_| parse_err("invalid phase"))?;
            let w: f64 = b.trim().parse().map_err(|_| parse_err("invalid weight"))?;
            entries.push((p, w));
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# phase,weight\n");
        for (p, w) in &self.entries {
            s.push_str(&format!("{p:?},{w:?}\n"));
        }
        s
    }
}

/// Filtering interval `D = [φ_guess − |D|/2, φ_guess + |D|/2]` with buffers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromiseInterval {
    pub phi_guess: f64,
    pub width: f64,
    pub inner_buffer: f64,
    pub outer_buffer: f64,
}

impl PromiseInterval {
    /// Checks `0 < c < |D|/2`, `d ≥ 0` and `D ⊂ [−π, π]`.
    ///
    /// The outer buffer may reach past ±π: it only describes where other
    /// eigenphases are excluded, and the interval itself never wraps.
    pub fn new(phi_guess: f64, width: f64, inner_buffer: f64, outer_buffer: f64) -> Result<Self> {
        let d = PromiseInterval { phi_guess, width, inner_buffer, outer_buffer };
        d.validate()?;
        Ok(d)
    }

    /// Interval `[lo, hi]` with the default inner buffer `|D|/6` and no
    /// outer buffer.
    pub fn from_bounds(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::domain(format!("interval [{lo}, {hi}] is empty")));
        }
        let width = hi - lo;
        Self::new(0.5 * (lo + hi), width, width / 6.0, 0.0)
    }

    /// Interval of width `gap` centred on `phi_guess` with `c = d = gap/6`.
    pub fn from_gap(phi_guess: f64, gap: f64) -> Result<Self> {
        if !(gap > 0.0) {
            return Err(Error::domain(format!("gap must be positive, got {gap}")));
        }
        Self::new(phi_guess, gap, gap / 6.0, gap / 6.0).map_err(|e| match e {
            Error::Domain(msg) => Error::Domain(format!("{msg}; shift all phases so the interval does not wrap")),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let PromiseInterval { phi_guess, width, inner_buffer, outer_buffer } = *self;
        if ![phi_guess, width, inner_buffer, outer_buffer].iter().all(|v| v.is_finite()) {
            return Err(Error::domain("non-finite promise interval parameter"));
        }
        if !(width > 0.0) {
            return Err(Error::domain(format!("interval width must be positive, got {width}")));
        }
        if !(inner_buffer > 0.0 && inner_buffer < 0.5 * width) {
            return Err(Error::domain(format!("inner buffer {inner_buffer} outside (0, {})", 0.5 * width)));
        }
        if outer_buffer < 0.0 {
            return Err(Error::domain(format!("outer buffer {outer_buffer} is negative")));
        }
        let (lo, hi) = (self.lo(), self.hi());
        if lo < -PI - 1e-12 || hi > PI + 1e-12 {
            return Err(Error::domain(format!("interval [{lo:.4}, {hi:.4}] wraps around ±π")));
        }
        Ok(())
    }

    pub fn lo(&self) -> f64 {
        self.phi_guess - 0.5 * self.width
    }

    pub fn hi(&self) -> f64 {
        self.phi_guess + 0.5 * self.width
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo() && x <= self.hi()
    }

    /// Whether `φ` is at least the inner buffer away from both edges.
    pub fn in_inner(&self, phi: f64) -> bool {
        phi >= self.lo() + self.inner_buffer && phi <= self.hi() - self.inner_buffer
    }
}

/// Spectral distribution smoothed by a kernel and mixed with uniform noise
/// at weight `1 − F`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySpec {
    pub spectral: SpectralDistribution,
    pub kernel: Kernel,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterReport {
    pub requested: usize,
    pub total_shots: usize,
    pub accepted: usize,
    pub empirical_acceptance: f64,
}

impl FilterReport {
    pub fn new(requested: usize, total_shots: usize, accepted: usize) -> Self {
        let empirical_acceptance = if total_shots == 0 { 0.0 } else { accepted as f64 / total_shots as f64 };
        FilterReport { requested, total_shots, accepted, empirical_acceptance }
    }
}

impl NoisySpec {
    pub fn new(spectral: SpectralDistribution, kernel: Kernel, fidelity: f64) -> Result<Self> {
        kernel.validate()?;
        if !(fidelity > 0.0 && fidelity <= 1.0) {
            return Err(Error::domain(format!("fidelity must lie in (0, 1], got {fidelity}")));
        }
        Ok(NoisySpec { spectral, kernel, fidelity })
    }

    /// `(f ∗ a)(x) = Σ_j a_j f(x − φ_j)`.
    pub fn smoothed_pdf(&self, x: f64) -> f64 {
        self.spectral.entries().iter().map(|&(p, w)| w * self.kernel.pdf(x - p)).sum()
    }

    /// `p(x) = F (f ∗ a)(x) + (1 − F)/2π`.
    pub fn noisy_pdf(&self, x: f64) -> f64 {
        self.fidelity * self.smoothed_pdf(x) + (1.0 - self.fidelity) / TAU
    }

    /// `∫_D p(x) dx`.
    pub fn interval_mass(&self, d: &PromiseInterval) -> f64 {
        let smooth: f64 = self
            .spectral
            .entries()
            .iter()
            .map(|&(p, w)| w * self.kernel.interval_integral(d.lo() - p, d.hi() - p))
            .sum();
        self.fidelity * smooth + (1.0 - self.fidelity) * d.width / TAU
    }

    /// `F a₀ ∫_{−Δ/3}^{Δ/3} f + (1 − F)|D|/2π` with `a₀` the weight inside `D`.
    ///
    /// This lower-bounds [`interval_mass`](Self::interval_mass) whenever the
    /// target phase sits within `Δ/6` of the interval centre.
    pub fn acceptance_lower_bound(&self, d: &PromiseInterval, gap: f64) -> f64 {
        let a0 = self.spectral.weight_in(d);
        let core = self.kernel.interval_integral(-gap / 3.0, gap / 3.0);
        self.fidelity * a0 * core + (1.0 - self.fidelity) * d.width / TAU
    }

    /// Quadrature breakpoints for integrands built from `p` on `[lo, hi]`.
    pub fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = Vec::new();
        for &(p, _) in self.spectral.entries() {
            pts.extend(self.kernel.breakpoints(p, lo, hi));
        }
        pts
    }

    pub fn sampler(&self) -> Result<NoisySampler> {
        NoisySampler::new(self)
    }
}

/// Mixture sampler for a [`NoisySpec`].
#[derive(Debug, Clone)]
pub struct NoisySampler {
    kernel: KernelSampler,
    phases: Vec<f64>,
    cumulative: Vec<f64>,
    fidelity: f64,
}

impl NoisySampler {
    pub fn new(spec: &NoisySpec) -> Result<Self> {
        let kernel = KernelSampler::new(&spec.kernel)?;
        let mut acc = 0.0;
        let mut phases = Vec::new();
        let mut cumulative = Vec::new();
        for &(p, w) in spec.spectral.entries() {
            acc += w;
            phases.push(p);
            cumulative.push(acc);
        }
        Ok(NoisySampler { kernel, phases, cumulative, fidelity: spec.fidelity })
    }

    /// Draws a phase from the noiseless part `f ∗ a`.
    pub fn sample_smoothed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = rng.random::<f64>() * total;
        let j = self.cumulative.partition_point(|&c| c <= u).min(self.phases.len() - 1);
        wrap_phase(self.phases[j] + self.kernel.sample(rng))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.fidelity >= 1.0 || rng.random::<f64>() < self.fidelity {
            self.sample_smoothed(rng)
        } else {
            uniform_phase(rng)
        }
    }
}

pub(crate) fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    wrap_phase(-PI + TAU * rng.random::<f64>())
}

/// Draws `m` samples from `p`.
pub fn sample_noisy<R: Rng + ?Sized>(spec: &NoisySpec, rng: &mut R, m: usize) -> Result<Vec<f64>> {
    let s = spec.sampler()?;
    Ok((0..m).map(|_| s.sample(rng)).collect())
}

/// Keeps the samples inside `D`, in order.
pub fn filter_samples(samples: &[f64], d: &PromiseInterval) -> (Vec<f64>, FilterReport) {
    let kept: Vec<f64> = samples.iter().copied().filter(|&x| d.contains(x)).collect();
    let report = FilterReport::new(samples.len(), samples.len(), kept.len());
    (kept, report)
}

/// Rejection sampler emulating the QSP filter: proposes `x` uniform on `D`
/// and accepts with probability `p(x) / max f`, where the noise floor
/// `(1 − F)/2π` is included alongside `F (f ∗ a)(x)`.
///
/// Stops after `m` acceptances or `max_draws` proposals.
pub fn qsp_rejection_sample<R: Rng + ?Sized>(
    spec: &NoisySpec,
    d: &PromiseInterval,
    rng: &mut R,
    m: usize,
    max_draws: usize,
) -> Result<(Vec<f64>, FilterReport)> {
    d.validate()?;
    let fmax = spec.kernel.max_pdf();
    let mut out = Vec::with_capacity(m);
    let mut draws = 0usize;
    while out.len() < m {
        if draws >= max_draws {
            return Err(Error::RetryBudget(format!(
                "{} of {m} samples accepted after {draws} proposals",
                out.len()
            )));
        }
        draws += 1;
        let x = d.lo() + d.width * rng.random::<f64>();
        let accept = spec.noisy_pdf(x) / fmax;
        if rng.random::<f64>() < accept {
            out.push(x);
        }
    }
    let report = FilterReport::new(m, draws, out.len());
    Ok((out, report))
}

/// The filtered density `P(x) = p(x) 1_D(x) / ∫_D p`.
#[derive(Debug, Clone)]
pub struct FilteredDensity {
    pub spec: NoisySpec,
    pub interval: PromiseInterval,
    mass: f64,
}

impl FilteredDensity {
    pub fn new(spec: NoisySpec, interval: PromiseInterval) -> Result<Self> {
        interval.validate()?;
        let mass = spec.interval_mass(&interval);
        if !(mass > 0.0) {
            return Err(Error::Degenerate("filtered distribution has zero mass".into()));
        }
        Ok(FilteredDensity { spec, interval, mass })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if self.interval.contains(x) {
            self.spec.noisy_pdf(x) / self.mass
        } else {
            0.0
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.spec.breakpoints(self.interval.lo(), self.interval.hi())
    }

    /// `∫_D P(x) g(x) dx`.
    pub fn expect(&self, g: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
        integrate_with_breaks(
            |x| self.pdf(x) * g(x),
            self.interval.lo(),
            self.interval.hi(),
            &self.breakpoints(),
            tol,
        )
    }

    pub fn mean(&self) -> Result<f64> {
        self.expect(|x| x, 1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream_rng;

    fn gauss_spec(entries: &[(f64, f64)], sigma: f64, f: f64) -> NoisySpec {
        NoisySpec::new(SpectralDistribution::new(entries.iter().copied()).unwrap(), Kernel::gaussian(sigma).unwrap(), f)
            .unwrap()
    }

    #[test]
    fn spectral_validation_and_merging() {
        assert!(SpectralDistribution::new([(0.1, 0.5), (0.2, 0.4)]).is_err());
        assert!(SpectralDistribution::new([(0.1, 1.2), (0.2, -0.2)]).is_err());
        let s = SpectralDistribution::new([(0.3, 0.25), (0.3 + 1e-13, 0.25), (-1.0, 0.5)]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.entries()[1].1, 0.5);
        let w = SpectralDistribution::new([(PI, 0.5), (-PI, 0.5)]).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn text_roundtrip() {
        let s = SpectralDistribution::new([(-2.46, 0.518), (-1.0, 0.3), (0.5, 0.182)]).unwrap();
        let back = SpectralDistribution::parse(&s.to_text()).unwrap();
        assert_eq!(s, back);
        match SpectralDistribution::parse("0.1,0.5\nnope\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn promise_interval_from_gap() {
        let d = PromiseInterval::from_gap(-2.36, 1.46).unwrap();
        assert!((d.lo() + 3.09).abs() < 1e-12 && (d.hi() + 1.63).abs() < 1e-12);
        assert!((d.inner_buffer - 0.243_333_333_333_333).abs() < 1e-12);
        assert_eq!(d.inner_buffer, d.outer_buffer);
        let c = PromiseInterval::from_gap(0.0, PI / 2.0).unwrap();
        assert!((c.lo() + PI / 4.0).abs() < 1e-15 && (c.hi() - PI / 4.0).abs() < 1e-15);
        assert!(PromiseInterval::from_gap(3.0, 1.0).is_err());
        assert!(PromiseInterval::from_bounds(-PI, -PI / 2.0).is_ok());
    }

    #[test]
    fn noisy_pdf_limits() {
        let k = Kernel::fejer(16).unwrap();
        let one = NoisySpec::new(SpectralDistribution::single(0.0).unwrap(), k, 1.0).unwrap();
        for &x in &[-2.0, 0.0, 0.4] {
            assert_eq!(one.noisy_pdf(x), k.pdf(x));
        }
        let noise = NoisySpec::new(SpectralDistribution::single(0.0).unwrap(), k, 1e-300).unwrap();
        assert!((noise.noisy_pdf(0.3) - 1.0 / TAU).abs() < 1e-12);
        let two = gauss_spec(&[(0.2, 0.7), (1.3, 0.3)], 0.3, 1.0);
        let g = |x: f64| crate::kernels::raw_gauss(x, 0.3) / libm::erf(PI / (0.3 * 2f64.sqrt()));
        assert!((two.noisy_pdf(0.2) - (0.7 * g(0.0) + 0.3 * g(-1.1))).abs() < 1e-14);
    }

    #[test]
    fn interval_mass_limits() {
        let d = PromiseInterval::from_bounds(-1.0, 1.0).unwrap();
        let s = gauss_spec(&[(0.0, 1.0)], 1.0 / 6.0, 1.0);
        assert!(s.interval_mass(&d) >= 1.0 - 4e-9);
        let s = gauss_spec(&[(0.0, 1.0)], 0.3, 1e-300);
        assert!((s.interval_mass(&d) - 2.0 / TAU).abs() < 1e-12);
    }

    #[test]
    fn filtered_density_is_normalized() {
        let spec = gauss_spec(&[(0.1, 0.7), (1.4, 0.3)], 0.3, 0.6);
        let fd = FilteredDensity::new(spec, PromiseInterval::from_bounds(-1.0, 1.0).unwrap()).unwrap();
        assert!((fd.expect(|_| 1.0, 1e-12).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn acceptance_lower_bound_values() {
        let d = PromiseInterval::from_gap(0.0, 1.8).unwrap();
        let s = gauss_spec(&[(0.0, 1.0)], 0.3, 1.0);
        assert!((s.acceptance_lower_bound(&d, 1.8) - libm::erf(2f64.sqrt())).abs() < 1e-9);
        let narrow = gauss_spec(&[(0.0, 0.6), (2.0, 0.4)], 1e-3, 1.0);
        assert!((narrow.acceptance_lower_bound(&d, 1.8) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn filter_example() {
        let d = PromiseInterval::from_bounds(-1.0, 1.0).unwrap();
        let (kept, r) = filter_samples(&[-2.0, 0.5, 1.5], &d);
        assert_eq!(kept, vec![0.5]);
        assert_eq!(r.accepted, 1);
        assert!((r.empirical_acceptance - 1.0 / 3.0).abs() < 1e-15);
        let (kept, _) = filter_samples(&[-0.2, 0.3, 0.9], &d);
        assert_eq!(kept, vec![-0.2, 0.3, 0.9]);
    }

    #[test]
    fn uniform_noise_moments() {
        let s = gauss_spec(&[(0.0, 1.0)], 0.3, 1e-300);
        let mut rng = stream_rng(3, 0);
        let n = 100_000;
        let xs = sample_noisy(&s, &mut rng, n).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean;
        let sd = PI / 3f64.sqrt();
        assert!(mean.abs() < 4.0 * sd / (n as f64).sqrt());
        assert!((var / (PI * PI / 3.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn qsp_acceptance_at_peak_and_overhead() {
        let s = gauss_spec(&[(0.0, 1.0)], 0.05, 1.0);
        assert!((s.noisy_pdf(0.0) / s.kernel.max_pdf() - 1.0).abs() < 1e-14);
        let d = PromiseInterval::from_bounds(-2.0, 2.0).unwrap();
        let mut rng = stream_rng(4, 0);
        let (xs, r) = qsp_rejection_sample(&s, &d, &mut rng, 20_000, 10_000_000).unwrap();
        assert_eq!(xs.len(), 20_000);
        let expected = 4.0 / (0.05 * TAU.sqrt());
        let overhead = r.total_shots as f64 / r.accepted as f64;
        assert!((overhead / expected - 1.0).abs() < 0.05, "{overhead} vs {expected}");
        assert!(qsp_rejection_sample(&s, &d, &mut rng, 10, 5).is_err());
    }
}
