//! Classical post-processing for quantum phase estimation samples.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`] – Gaussian and Fejér kernel densities, derivatives and samplers.
//! * [`spectral`] – spectral, noisy and filtered phase distributions, promise
//!   intervals and the rejection samplers that produce filtered data.
//! * [`estimators`] – single-phase models and the mean, shifted mean, PEC
//!   average, moment-projection and noise-unbiased moment-projection estimators.
//! * [`bounds`] – Fisher information, first-order bias and the closed-form
//!   bias/variance/cost bounds for Gaussian kernels.
//! * [`qpesim`] – a statevector trajectory simulator of textbook QPE on a
//!   diagonal Ising chain with local depolarizing noise.
//!
//! Batch work (trajectories, trials, bootstrap resamples) runs through
//! [`par`], which uses rayon when the `parallel` feature is enabled and a
//! plain loop otherwise. Every batch derives per-item generators from a master
//! seed with [`seed::stream_rng`], so results do not depend on thread count.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod optimize;
pub mod par;
pub mod qpesim;
pub mod quadrature;
pub mod seed;
pub mod spectral;

pub use error::{Error, Result};
pub use kernels::{wrap_phase, Kernel};
pub use spectral::{NoisySpec, PromiseInterval, SpectralDistribution};
