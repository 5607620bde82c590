//! JSON experiment configuration and its validation.
//!
//! Every field is optional; each subcommand fills the gaps with its own
//! defaults and checks the result against the core preconditions before any
//! computation starts.

use std::f64::consts::{E, PI};
use std::fmt;
use std::path::{Path, PathBuf};

use qpe_mproj::estimators::PhaseModel;
use qpe_mproj::qpesim::{build_qpe_circuit, ising_spectrum, pec_alpha, IsingSpec};
use qpe_mproj::{Kernel, PromiseInterval};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_SEED: u64 = 20240917;

/// Rejected configuration. Maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<qpe_mproj::Error> for ConfigError {
    fn from(e: qpe_mproj::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Spectrum,
    Sample,
    Estimate,
    Bounds,
    Fig3,
    Fig5Shots,
    Fig5Qubits,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Spectrum => "spectrum",
            Kind::Sample => "sample",
            Kind::Estimate => "estimate",
            Kind::Bounds => "bounds",
            Kind::Fig3 => "fig3",
            Kind::Fig5Shots => "fig5-shots",
            Kind::Fig5Qubits => "fig5-qubits",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.start + step * i as f64).collect()
    }

    fn check(&self, name: &str) -> Result<(), ConfigError> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() || self.stop < self.start {
            return Err(bad(format!("{name}: need finite start ≤ stop and points ≥ 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingConfig {
    pub n_sites: Option<usize>,
    pub h: Option<f64>,
    pub t: Option<f64>,
    pub prep_angle: Option<f64>,
}

/// Kernel selection for the `estimate` and `bounds` models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian { sigma: f64 },
    Fejer { n_ctrl: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Kind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_ctrl: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    /// `[lo, hi]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_const: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ising: Option<IsingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_in_qft: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pec: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keep_rejected: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi0_grid: Option<Grid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi1_grid: Option<Grid>,
    /// Distance from the nearest spurious phase to `D`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spurious_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| bad(format!("JSON: {e}")))
    }

    pub fn load(path: &Path) -> anyhow::Result<Result<Self, ConfigError>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Ok(Self::from_json(&text))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// SHA-256 of the effective configuration (seed resolved, output path
    /// dropped), as lowercase hex.
    pub fn hash(&self, kind: Kind) -> String {
        let mut c = self.clone();
        c.experiment = Some(kind);
        c.seed = Some(self.seed());
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn check_kind(&self, kind: Kind) -> Result<(), ConfigError> {
        match self.experiment {
            Some(k) if k != kind => Err(bad(format!(
                "config is for `{}` but the `{}` subcommand was run",
                k.name(),
                kind.name()
            ))),
            _ => Ok(()),
        }
    }

    fn ising(&self) -> Result<IsingSpec, ConfigError> {
        let d = IsingSpec::default();
        let c = self.ising.unwrap_or(IsingConfig { n_sites: None, h: None, t: None, prep_angle: None });
        let spec = IsingSpec {
            n_sites: c.n_sites.unwrap_or(d.n_sites),
            h: c.h.unwrap_or(d.h),
            t: c.t.unwrap_or(d.t),
            prep_angle: c.prep_angle.unwrap_or(d.prep_angle),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn interval_or(&self, lo: f64, hi: f64) -> Result<PromiseInterval, ConfigError> {
        let [lo, hi] = self.interval.unwrap_or([lo, hi]);
        Ok(PromiseInterval::from_bounds(lo, hi)?)
    }

    fn fidelity_or(&self, default: f64) -> Result<f64, ConfigError> {
        let f = self.fidelity.unwrap_or(default);
        if !(f > 0.0 && f <= 1.0) {
            return Err(bad(format!("fidelity must lie in (0, 1], got {f}")));
        }
        Ok(f)
    }

    fn bootstrap_or(&self, default: usize) -> Result<usize, ConfigError> {
        let b = self.bootstrap.unwrap_or(default);
        if b == 1 {
            return Err(bad("bootstrap needs 0 (off) or at least 2 resamples"));
        }
        Ok(b)
    }
}

fn check_n(n: usize) -> Result<(), ConfigError> {
    if !(4..=10).contains(&n) {
        return Err(bad(format!("control register size {n} outside 4..=10")));
    }
    Ok(())
}

fn check_reg(c: f64) -> Result<f64, ConfigError> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(bad(format!("reg_const must be finite and ≥ 0, got {c}")));
    }
    Ok(c)
}

/// Default filtering interval of the simulated experiments, which contains
/// the Ising ground phase and excludes every other phase.
pub const SIM_INTERVAL: [f64; 2] = [-PI, -PI / 2.0];

#[derive(Debug, Clone)]
pub struct SpectrumSettings {
    pub ising: IsingSpec,
}

pub fn spectrum_settings(c: &ExperimentConfig) -> Result<SpectrumSettings, ConfigError> {
    c.check_kind(Kind::Spectrum)?;
    Ok(SpectrumSettings { ising: c.ising()? })
}

#[derive(Debug, Clone)]
pub struct SampleSettings {
    pub ising: IsingSpec,
    pub n_ctrl: usize,
    pub fidelity: f64,
    pub interval: PromiseInterval,
    pub shots: usize,
    pub noise_in_qft: bool,
    pub pec: bool,
    pub keep_rejected: bool,
    pub seed: u64,
}

pub fn sample_settings(c: &ExperimentConfig) -> Result<SampleSettings, ConfigError> {
    c.check_kind(Kind::Sample)?;
    let n_ctrl = c.n_ctrl.unwrap_or(6);
    check_n(n_ctrl)?;
    let shots = match c.shots.as_deref() {
        None => 1000,
        Some([m]) if *m > 0 => *m,
        Some(_) => return Err(bad("sample takes a single positive shot count")),
    };
    let fidelity = c.fidelity_or(1.0 / E)?;
    let pec = c.pec.unwrap_or(false);
    if pec {
        pec_alpha(fidelity)?;
    }
    let ising = c.ising()?;
    build_qpe_circuit(&ising, n_ctrl)?;
    Ok(SampleSettings {
        ising,
        n_ctrl,
        fidelity,
        interval: c.interval_or(SIM_INTERVAL[0], SIM_INTERVAL[1])?,
        shots,
        noise_in_qft: c.noise_in_qft.unwrap_or(true),
        pec,
        keep_rejected: c.keep_rejected.unwrap_or(false),
        seed: c.seed(),
    })
}

pub const ESTIMATORS: [&str; 4] = ["mean", "pec_average", "fmpe", "fnmpe"];

#[derive(Debug, Clone)]
pub struct EstimateSettings {
    pub input: PathBuf,
    pub estimators: Vec<String>,
    /// Model used by `fmpe`.
    pub model: PhaseModel,
    /// Noiseless model used by `fnmpe`.
    pub nme_model: PhaseModel,
    pub fidelity: f64,
    pub bootstrap: usize,
    pub seed: u64,
}

pub fn estimate_settings(c: &ExperimentConfig) -> Result<EstimateSettings, ConfigError> {
    c.check_kind(Kind::Estimate)?;
    let input = c.input.clone().ok_or_else(|| bad("estimate needs an `input` samples file"))?;
    let estimators = c.estimators.clone().unwrap_or_else(|| vec!["mean".into(), "fmpe".into()]);
    if estimators.is_empty() {
        return Err(bad("no estimators requested"));
    }
    for e in &estimators {
        if !ESTIMATORS.contains(&e.as_str()) {
            return Err(bad(format!("unknown estimator `{e}`; choose from {ESTIMATORS:?}")));
        }
    }
    let kernel = kernel_of(c, KernelConfig::Fejer { n_ctrl: c.n_ctrl.unwrap_or(6) as u32 })?;
    let interval = c.interval_or(SIM_INTERVAL[0], SIM_INTERVAL[1])?;
    let fidelity = c.fidelity_or(1.0 / E)?;
    let a0 = match c.a0 {
        Some(a) => a,
        None => ising_spectrum(&c.ising()?)?.weight_in(&interval),
    };
    let model = PhaseModel::new(kernel, interval, fidelity, a0, 0.0)?;
    let nme_model = PhaseModel::noiseless(kernel, interval)?.with_reg_const(check_reg(c.reg_const.unwrap_or(0.0))?)?;
    let needs_pec = estimators.iter().any(|e| e == "pec_average" || e == "fnmpe");
    if needs_pec {
        pec_alpha(fidelity)?;
    }
    Ok(EstimateSettings {
        input,
        estimators,
        model,
        nme_model,
        fidelity,
        bootstrap: c.bootstrap_or(0)?,
        seed: c.seed(),
    })
}

fn kernel_of(c: &ExperimentConfig, default: KernelConfig) -> Result<Kernel, ConfigError> {
    let k = match (c.kernel, c.sigma) {
        (Some(k), _) => k,
        (None, Some(sigma)) => KernelConfig::Gaussian { sigma },
        (None, None) => default,
    };
    Ok(match k {
        KernelConfig::Gaussian { sigma } => Kernel::gaussian(sigma)?,
        KernelConfig::Fejer { n_ctrl } => {
            check_n(n_ctrl as usize)?;
            Kernel::fejer_qubits(n_ctrl)?
        }
    })
}

#[derive(Debug, Clone)]
pub struct BoundsSettings {
    pub sigma: f64,
    pub interval: PromiseInterval,
    pub a0: f64,
    pub fidelity: f64,
    pub phi0: f64,
    pub spurious_distance: f64,
    pub reg_const: f64,
    pub h_norm: f64,
    pub epsilon: f64,
    pub gammas: Vec<f64>,
}

pub fn bounds_settings(c: &ExperimentConfig) -> Result<BoundsSettings, ConfigError> {
    c.check_kind(Kind::Bounds)?;
    let sigma = c.sigma.unwrap_or(0.3);
    Kernel::gaussian(sigma)?;
    let interval = c.interval_or(-1.0, 1.0)?;
    let a0 = c.a0.unwrap_or(0.7);
    let fidelity = c.fidelity_or(1.0 / E)?;
    PhaseModel::new(Kernel::gaussian(sigma)?, interval, fidelity, a0, 0.0)?;
    let phi0 = c.phi0.unwrap_or(interval.phi_guess);
    if !interval.contains(phi0) {
        return Err(bad(format!("phi0 = {phi0} lies outside the interval")));
    }
    let spurious_distance = c.spurious_distance.unwrap_or(0.5);
    if !(spurious_distance > 0.0) {
        return Err(bad("spurious_distance must be positive"));
    }
    let h_norm = c.h_norm.unwrap_or(0.0);
    if !(h_norm >= 0.0 && h_norm.is_finite()) {
        return Err(bad("h_norm must be finite and ≥ 0"));
    }
    let epsilon = c.epsilon.unwrap_or(1e-3);
    if !(epsilon > 0.0) {
        return Err(bad("epsilon must be positive"));
    }
    let gammas = c.gammas.clone().unwrap_or_else(|| vec![0.01, 0.1, 1.0]);
    if gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(bad("noise rates must be positive"));
    }
    Ok(BoundsSettings {
        sigma,
        interval,
        a0,
        fidelity,
        phi0,
        spurious_distance,
        reg_const: check_reg(c.reg_const.unwrap_or(0.0))?,
        h_norm,
        epsilon,
        gammas,
    })
}

#[derive(Debug, Clone)]
pub struct Fig3Settings {
    pub sigma: f64,
    pub a0: f64,
    pub interval: PromiseInterval,
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
}

pub fn fig3_settings(c: &ExperimentConfig) -> Result<Fig3Settings, ConfigError> {
    c.check_kind(Kind::Fig3)?;
    let sigma = c.sigma.unwrap_or(0.3);
    Kernel::gaussian(sigma)?;
    let a0 = c.a0.unwrap_or(0.7);
    if !(a0 > 0.0 && a0 < 1.0) {
        return Err(bad(format!("a0 must lie in (0, 1) for a two-phase spectrum, got {a0}")));
    }
    let interval = c.interval_or(-1.0, 1.0)?;
    let g0 = c.phi0_grid.unwrap_or(Grid { start: -0.6, stop: 0.6, points: 25 });
    let g1 = c.phi1_grid.unwrap_or(Grid { start: -3.0, stop: 3.0, points: 61 });
    g0.check("phi0_grid")?;
    g1.check("phi1_grid")?;
    if g0.values().iter().any(|&p| !interval.contains(p)) {
        return Err(bad("phi0_grid must lie inside the interval"));
    }
    if g1.start < -PI || g1.stop > PI {
        return Err(bad("phi1_grid must lie inside [-π, π]"));
    }
    Ok(Fig3Settings { sigma, a0, interval, phi0: g0.values(), phi1: g1.values() })
}

#[derive(Debug, Clone)]
pub struct Fig5Settings {
    pub ising: IsingSpec,
    pub n_values: Vec<usize>,
    pub shots: Vec<usize>,
    pub trials: usize,
    pub bootstrap: usize,
    pub fidelity: f64,
    pub interval: PromiseInterval,
    /// Overlap used by the GDN model; `None` takes the spectral weight in `D`.
    pub a0: Option<f64>,
    pub reg_const: f64,
    pub noise_in_qft: bool,
    pub seed: u64,
}

pub fn fig5_settings(c: &ExperimentConfig, kind: Kind) -> Result<Fig5Settings, ConfigError> {
    c.check_kind(kind)?;
    let (n_default, m_default) = match kind {
        Kind::Fig5Shots => (vec![8], vec![250, 1000, 4000]),
        Kind::Fig5Qubits => (vec![4, 5, 6, 7, 8], vec![1000]),
        _ => return Err(bad("not a Fig. 5 experiment")),
    };
    let n_values = c.n_values.clone().unwrap_or(n_default);
    let shots = c.shots.clone().unwrap_or(m_default);
    if n_values.is_empty() || shots.is_empty() {
        return Err(bad("n_values and shots must be non-empty"));
    }
    for &n in &n_values {
        check_n(n)?;
    }
    if shots.contains(&0) {
        return Err(bad("shot counts must be positive"));
    }
    let trials = c.trials.unwrap_or(200);
    if trials == 0 {
        return Err(bad("trials must be positive"));
    }
    let fidelity = c.fidelity_or(1.0 / E)?;
    pec_alpha(fidelity)?;
    let interval = c.interval_or(SIM_INTERVAL[0], SIM_INTERVAL[1])?;
    let ising = c.ising()?;
    let spectrum = ising_spectrum(&ising)?;
    if !interval.contains(spectrum.lowest().0) {
        return Err(bad("the interval does not contain the ground phase"));
    }
    if let Some(a) = c.a0 {
        if !(a > 0.0 && a <= 1.0) {
            return Err(bad(format!("a0 must lie in (0, 1], got {a}")));
        }
    }
    Ok(Fig5Settings {
        ising,
        n_values,
        shots,
        trials,
        bootstrap: c.bootstrap_or(500)?,
        fidelity,
        interval,
        a0: c.a0,
        reg_const: check_reg(c.reg_const.unwrap_or(0.0))?,
        noise_in_qft: c.noise_in_qft.unwrap_or(true),
        seed: c.seed(),
    })
}
