//! Distributional checks of the kernel, mixture and rejection samplers.

mod common;

use std::f64::consts::{PI, TAU};

use common::{ks2_crit_1pct, ks_crit_1pct, ks_statistic, ks_two_sample, CdfTable};
use qpe_mproj::kernels::KernelSampler;
use qpe_mproj::seed::stream_rng;
use qpe_mproj::spectral::{filter_samples, qsp_rejection_sample, sample_noisy};
use qpe_mproj::{Kernel, NoisySpec, PromiseInterval, SpectralDistribution};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const N: usize = 100_000;

fn kernel_ks(kernel: Kernel, seed: u64) -> f64 {
    let sampler = KernelSampler::new(&kernel).unwrap();
    let mut rng = stream_rng(seed, 0);
    let xs: Vec<f64> = (0..N).map(|_| sampler.sample(&mut rng)).collect();
    let table = CdfTable::new(|x| kernel.pdf(x), -PI, PI, 8192);
    ks_statistic(&xs, |x| table.cdf(x))
}

#[test]
fn fejer_16_sampler_is_close_to_the_analytic_cdf() {
    let d = kernel_ks(Kernel::fejer(16).unwrap(), 1);
    assert!(d < 0.006, "KS distance {d}");
}

#[test]
fn every_kernel_sampler_passes_ks_at_one_percent() {
    let kernels = [
        Kernel::gaussian(0.05).unwrap(),
        Kernel::gaussian(0.3).unwrap(),
        Kernel::gaussian(1.5).unwrap(),
        Kernel::fejer(2).unwrap(),
        Kernel::fejer(8).unwrap(),
        Kernel::fejer(256).unwrap(),
    ];
    for (i, k) in kernels.into_iter().enumerate() {
        let d = kernel_ks(k, 10 + i as u64);
        assert!(d < ks_crit_1pct(N), "{k:?}: KS {d} vs {}", ks_crit_1pct(N));
    }
}

#[test]
fn single_phase_noiseless_samples_follow_the_truncated_gaussian() {
    let spec = NoisySpec::new(SpectralDistribution::single(0.0).unwrap(), Kernel::gaussian(0.3).unwrap(), 1.0).unwrap();
    let xs = sample_noisy(&spec, &mut stream_rng(3, 0), N).unwrap();
    let normal = Normal::new(0.0, 0.3).unwrap();
    let (lo, hi) = (normal.cdf(-PI), normal.cdf(PI));
    let d = ks_statistic(&xs, |x| (normal.cdf(x) - lo) / (hi - lo));
    assert!(d < ks_crit_1pct(N), "KS {d}");
}

#[test]
fn noisy_mixture_samples_follow_noisy_pdf() {
    let spectral = SpectralDistribution::new([(0.2, 0.6), (-2.0, 0.3), (2.9, 0.1)]).unwrap();
    let spec = NoisySpec::new(spectral, Kernel::fejer(32).unwrap(), 0.5).unwrap();
    let xs = sample_noisy(&spec, &mut stream_rng(4, 0), N).unwrap();
    let table = CdfTable::new(|x| spec.noisy_pdf(x), -PI, PI, 8192);
    let d = ks_statistic(&xs, |x| table.cdf(x));
    assert!(d < ks_crit_1pct(N), "KS {d}");
}

#[test]
fn fig3_spec_acceptance_matches_interval_mass() {
    let spectral = SpectralDistribution::new([(0.1, 0.7), (1.8, 0.3)]).unwrap();
    let spec = NoisySpec::new(spectral, Kernel::gaussian(0.3).unwrap(), 1.0).unwrap();
    let d = PromiseInterval::from_bounds(-1.0, 1.0).unwrap();
    let xs = sample_noisy(&spec, &mut stream_rng(5, 0), N).unwrap();
    let (_, report) = filter_samples(&xs, &d);
    let p = spec.interval_mass(&d);
    let se = (p * (1.0 - p) / N as f64).sqrt();
    assert!((report.empirical_acceptance - p).abs() < 3.0 * se, "{} vs {p}", report.empirical_acceptance);
}

/// Random spec with one phase inside `D` near its centre and the rest outside.
fn random_spec(rng: &mut impl Rng) -> (NoisySpec, PromiseInterval) {
    let width = rng.random_range(0.8..2.5);
    let centre = rng.random_range(-PI + width / 2.0..PI - width / 2.0);
    let d = PromiseInterval::from_bounds(centre - width / 2.0, centre + width / 2.0).unwrap();
    let phi0 = centre + rng.random_range(-width / 6.0..width / 6.0);
    let a0 = rng.random_range(0.3..1.0);
    let mut entries = vec![(phi0, a0)];
    let others = rng.random_range(0..3usize);
    for _ in 0..others {
        // Anywhere on the circle outside D; the constructor wraps it.
        let off = rng.random_range(0.05..TAU - width - 0.05);
        entries.push((d.hi() + off, (1.0 - a0) / others as f64));
    }
    if others == 0 {
        entries[0].1 = 1.0;
    }
    let kernel = if rng.random::<bool>() {
        Kernel::gaussian(rng.random_range(0.05..0.5)).unwrap()
    } else {
        Kernel::fejer(1 << rng.random_range(3..8u32)).unwrap()
    };
    let fidelity = rng.random_range(0.2..=1.0);
    (NoisySpec::new(SpectralDistribution::new(entries).unwrap(), kernel, fidelity).unwrap(), d)
}

#[test]
fn acceptance_lower_bound_never_exceeds_interval_mass() {
    let mut rng = stream_rng(6, 0);
    for _ in 0..100 {
        let (spec, d) = random_spec(&mut rng);
        let lb = spec.acceptance_lower_bound(&d, d.width);
        let mass = spec.interval_mass(&d);
        assert!(lb <= mass + 1e-12, "{spec:?} {d:?}: bound {lb} > mass {mass}");
    }
}

#[test]
fn qsp_rejection_matches_filter_pipeline() {
    let mut rng = stream_rng(7, 0);
    for case in 0..5u64 {
        let (spec, d) = random_spec(&mut rng);
        let mut filtered = Vec::with_capacity(N);
        let sampler = spec.sampler().unwrap();
        let mut srng = stream_rng(8, case);
        while filtered.len() < N {
            let x = sampler.sample(&mut srng);
            if d.contains(x) {
                filtered.push(x);
            }
        }
        let (qsp, _) = qsp_rejection_sample(&spec, &d, &mut stream_rng(9, case), N, usize::MAX).unwrap();
        let ks = ks_two_sample(&filtered, &qsp);
        assert!(ks < ks2_crit_1pct(N, N), "case {case} {spec:?}: KS {ks}");
    }
}
