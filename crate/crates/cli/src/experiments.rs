//! Experiment runners behind the subcommands.
//!
//! Runners take validated settings and return plain rows; the binary turns
//! them into CSV or JSON. All randomness is keyed by the master seed, so
//! output does not depend on the worker count.

use anyhow::Result;
use qpe_mproj::bounds::{self, BoundReport};
use qpe_mproj::estimators::{
    bootstrap, mean, mean_estimate, mpe_estimate, nme_estimate, pec_average, PhaseModel, TaggedSample,
};
use qpe_mproj::qpesim::{
    build_qpe_circuit, filtered_pec_sampler, filtered_sampler, ising_spectrum, pec_alpha, Engine, NoiseConfig,
    QpeSimulator, ShotRecord,
};
use qpe_mproj::seed::derive;
use qpe_mproj::spectral::FilteredDensity;
use qpe_mproj::{par, Kernel, NoisySpec, PromiseInterval, SpectralDistribution};
use serde_json::{json, Value};

use crate::config::{
    BoundsSettings, EstimateSettings, Fig3Settings, Fig5Settings, SampleSettings, SpectrumSettings,
};
use crate::output::{num, Table};

pub fn run_spectrum(s: &SpectrumSettings) -> Result<(Table, Vec<(String, String)>)> {
    let spectrum = ising_spectrum(&s.ising)?;
    let mut t = Table::new(vec!["phase", "weight"]);
    for &(p, w) in spectrum.entries() {
        t.push(vec![num(p), num(w)]);
    }
    let (p0, a0) = spectrum.lowest();
    let mut extra = vec![("ground_phase".into(), num(p0)), ("a0".into(), num(a0))];
    if let Some(&(p1, _)) = spectrum.entries().iter().find(|&&(p, _)| p > p0) {
        extra.push(("gap".into(), num(p1 - p0)));
    }
    Ok((t, extra))
}

pub fn run_sample(s: &SampleSettings) -> Result<(Table, Vec<(String, String)>)> {
    let circuit = build_qpe_circuit(&s.ising, s.n_ctrl)?;
    let noise = if s.fidelity < 1.0 {
        NoiseConfig::calibrated(&circuit, s.fidelity, s.noise_in_qft)?
    } else {
        NoiseConfig::noiseless()
    };
    let p_err = noise.p_err;
    let sim = QpeSimulator::new(circuit, noise, Engine::Branch)?;
    let (report, records) = if s.pec {
        let (_, _, r, rec) = filtered_pec_sampler(&sim, &s.interval, s.fidelity, s.shots, s.seed)?;
        (r, rec)
    } else {
        let (_, r, rec) = filtered_sampler(&sim, &s.interval, s.shots, s.seed)?;
        (r, rec)
    };
    let mut t = Table::new(vec!["x", "branch", "had_error", "phi_ref"]);
    for r in records.iter().filter(|r| s.keep_rejected || r.accepted) {
        t.push(shot_row(r));
    }
    let extra = vec![
        ("p_err".into(), num(p_err)),
        ("total_shots".into(), report.total_shots.to_string()),
        ("accepted".into(), report.accepted.to_string()),
    ];
    Ok((t, extra))
}

fn shot_row(r: &ShotRecord) -> Vec<String> {
    vec![num(r.x), r.branch.to_string(), u8::from(r.had_error).to_string(), num(r.phi_ref)]
}

/// One estimator applied to a sample file.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub estimator: String,
    pub estimate: f64,
    pub stderr: f64,
    pub accepted: usize,
}

pub fn run_estimate(s: &EstimateSettings, samples: &[(f64, u8)]) -> Result<Vec<EstimateRow>> {
    let d = s.model.interval;
    let inside: Vec<(f64, u8)> = samples.iter().copied().filter(|&(x, _)| d.contains(x)).collect();
    let plain: Vec<f64> = inside.iter().filter(|&&(_, b)| b == 0).map(|&(x, _)| x).collect();
    let tagged: Vec<TaggedSample> = inside.iter().map(|&(x, b)| TaggedSample::new(x, b)).collect();
    let alpha_norm = pec_alpha(s.fidelity).map(|a| a[0].abs() + a[1].abs()).unwrap_or(1.0);
    let mut rows = Vec::new();
    for (k, name) in s.estimators.iter().enumerate() {
        let seed = derive(s.seed, 0xE57 + k as u64);
        let (est, se, n) = match name.as_str() {
            "mean" => {
                let e = apply(&plain, |x| mean(x));
                (e, boot(s.bootstrap, &plain, seed, |x| mean(x)), plain.len())
            }
            "fmpe" => {
                let f = |x: &[f64]| mpe_estimate(x, &s.model).map(|r| r.estimate);
                (apply(&plain, f), boot(s.bootstrap, &plain, seed, f), plain.len())
            }
            "pec_average" => (apply(&tagged, pec_tagged), boot(s.bootstrap, &tagged, seed, pec_tagged), tagged.len()),
            "fnmpe" => {
                let f = |x: &[TaggedSample]| nme_estimate(x, &s.nme_model, alpha_norm).map(|r| r.estimate);
                (apply(&tagged, f), boot(s.bootstrap, &tagged, seed, f), tagged.len())
            }
            other => anyhow::bail!("unknown estimator {other}"),
        };
        rows.push(EstimateRow { estimator: name.clone(), estimate: est, stderr: se, accepted: n });
    }
    Ok(rows)
}

pub fn estimate_table(rows: &[EstimateRow]) -> Table {
    let mut t = Table::new(vec!["estimator", "estimate", "stderr_bootstrap", "accepted"]);
    for r in rows {
        t.push(vec![r.estimator.clone(), num(r.estimate), num(r.stderr), r.accepted.to_string()]);
    }
    t
}

fn apply<T>(x: &[T], f: impl Fn(&[T]) -> qpe_mproj::Result<f64>) -> f64 {
    f(x).unwrap_or(f64::NAN)
}

fn boot<T, F>(b: usize, x: &[T], seed: u64, f: F) -> f64
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> qpe_mproj::Result<f64> + Sync + Send,
{
    if b == 0 {
        return f64::NAN;
    }
    bootstrap(f, x, b, seed).unwrap_or(f64::NAN)
}

fn pec_tagged(x: &[TaggedSample]) -> qpe_mproj::Result<f64> {
    let x0: Vec<f64> = x.iter().filter(|t| t.branch == 0).map(|t| t.x).collect();
    let x1: Vec<f64> = x.iter().filter(|t| t.branch != 0).map(|t| t.x).collect();
    pec_average(&x0, &x1).map(|r| r.estimate)
}

fn bound_json(r: &BoundReport) -> Value {
    json!({
        "bias_bound": r.bias_bound,
        "variance_bound": r.variance_bound,
        "valid": r.validity.valid,
        "reason": r.validity.reason,
        "fisher_info": r.fisher_info,
        "sigma_limit": r.sigma_limit,
        "sigma_limit_main": r.sigma_limit_main,
    })
}

/// Grid argmin of the fixed-rate cost model over `t = i·h`, `i = 1..=points`,
/// with `h = t*/(points/10)`, so the grid spans ten times the optimum.
pub fn cost_grid_argmin(gamma: f64, epsilon: f64, a0: f64, points: usize) -> Result<(f64, f64)> {
    let t_star = bounds::optimal_depth(gamma)?;
    let h = 10.0 * t_star / points as f64;
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 1..=points {
        let t = h * i as f64;
        let c = bounds::cost_model_gdn(gamma, epsilon, a0, t)?;
        if c < best.1 {
            best = (t, c);
        }
    }
    Ok((best.0, h))
}

pub fn run_bounds(s: &BoundsSettings) -> Result<Value> {
    let kernel = Kernel::gaussian(s.sigma)?;
    let width = s.interval.width;
    let noiseless = PhaseModel::noiseless(kernel, s.interval)?;
    let gdn = PhaseModel::new(kernel, s.interval, s.fidelity, s.a0, 0.0)?;

    let fisher = |m: &PhaseModel| -> Result<Value> {
        Ok(json!({
            "fisher_information": bounds::fisher_information(m, s.phi0)?,
            "fisher_information_hessian": bounds::fisher_information_hessian(m, s.phi0)?,
            "score_mean": bounds::score_zero_mean_check(m, s.phi0)?,
        }))
    };

    let nl = bounds::gaussian_bias_bound_noiseless(s.sigma, s.spurious_distance, s.a0, width)?;
    let i0 = bounds::fisher_information(&noiseless, s.phi0)?;
    let mut nl_json = bound_json(&nl);
    nl_json["inverse_fisher"] = json!(1.0 / i0);

    let g = bounds::gaussian_bounds_gdn(s.sigma, s.spurious_distance, s.a0, s.fidelity, width)?;
    let ig = bounds::fisher_information(&gdn, s.phi0)?;
    let mut g_json = bound_json(&g);
    g_json["sigma_limit_appendix"] = json!(bounds::gdn_sigma_limit(width, s.fidelity, s.a0));
    g_json["noise_ratio"] = json!(bounds::noise_ratio(s.fidelity, s.a0));
    g_json["shots_fisher_bound"] = json!(bounds::shots_fisher_bound(s.sigma, width, s.fidelity, s.a0));
    g_json["inverse_acceptance_fisher"] = json!(1.0 / (gdn.norm(s.phi0) * ig));

    let alpha_norm = pec_alpha(s.fidelity).map(|a| a[0].abs() + a[1].abs()).unwrap_or(1.0);
    let nme_model = noiseless.with_reg_const(s.reg_const)?;
    let nme = bounds::nme_bounds(&nme_model, s.phi0, alpha_norm, s.h_norm)?;
    let mut nme_json = bound_json(&nme);
    nme_json["reg_const"] = json!(s.reg_const);
    nme_json["alpha_norm"] = json!(alpha_norm);
    nme_json["h_norm"] = json!(s.h_norm);
    nme_json["max_abs_score"] = json!(bounds::max_abs_score(&nme_model, s.phi0)?);

    let mut cost = Vec::new();
    for &gamma in &s.gammas {
        let t_star = bounds::optimal_depth(gamma)?;
        let (t_grid, step) = cost_grid_argmin(gamma, s.epsilon, s.a0, 10_000)?;
        let c_star = bounds::cost_model_gdn(gamma, s.epsilon, s.a0, t_star)?;
        cost.push(json!({
            "gamma": gamma,
            "t_star": t_star,
            "t_grid_argmin": t_grid,
            "grid_step": step,
            "cost_at_t_star": c_star,
            "cost_over_gamma_eps2_a02": c_star / (gamma / (s.epsilon * s.epsilon * s.a0 * s.a0)),
            "fixed_fidelity_cost_at_t_star": bounds::cost_model_fixed_fidelity(s.epsilon, s.a0, s.fidelity, t_star)?,
            "noiseless_cost_at_t_star": bounds::cost_model_noiseless(s.epsilon, s.a0, t_star)?,
        }));
    }
    let gap = s.interval.width;
    let adv = bounds::depth_advisory(gap, s.epsilon, s.a0, s.fidelity, s.gammas[0]);

    Ok(json!({
        "model": {
            "sigma": s.sigma,
            "interval": [s.interval.lo(), s.interval.hi()],
            "a0": s.a0,
            "fidelity": s.fidelity,
            "phi0": s.phi0,
            "spurious_distance": s.spurious_distance,
        },
        "fisher": { "noiseless": fisher(&noiseless)?, "gdn": fisher(&gdn)? },
        "noiseless": nl_json,
        "gdn": g_json,
        "nme": nme_json,
        "cost_model": cost,
        "depth_advisory": {
            "gap": gap,
            "gamma": s.gammas[0],
            "noiseless": adv.noiseless,
            "fixed_fidelity": adv.fixed_fidelity,
            "fixed_rate": adv.fixed_rate,
        },
    }))
}

/// One `(φ₀, φ₁)` cell of the bias comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig3Cell {
    pub phi0: f64,
    pub phi1: f64,
    /// Distance from `φ₁` to the nearest edge of `D`.
    pub d: f64,
    /// `false` when `φ₁ ∈ D`; all values are then NaN.
    pub valid: bool,
    /// Signed first-order moment-projection bias.
    pub mproj_bias: f64,
    /// Signed `∫_D P x − φ₀`.
    pub mean_offset: f64,
}

impl Fig3Cell {
    pub fn b_mproj(&self) -> f64 {
        self.mproj_bias.abs()
    }

    pub fn b_mean(&self) -> f64 {
        self.mean_offset.abs()
    }

    pub fn ratio(&self) -> f64 {
        self.b_mproj() / self.b_mean()
    }
}

pub fn run_fig3(s: &Fig3Settings) -> Result<Vec<Fig3Cell>> {
    let kernel = Kernel::gaussian(s.sigma)?;
    let model = PhaseModel::noiseless(kernel, s.interval)?;
    let n1 = s.phi1.len();
    let cells = par::map_indexed(s.phi0.len() * n1, |i| {
        fig3_cell(&model, s.a0, s.phi0[i / n1], s.phi1[i % n1])
    });
    cells.into_iter().collect()
}

fn fig3_cell(model: &PhaseModel, a0: f64, phi0: f64, phi1: f64) -> Result<Fig3Cell> {
    let d_int = model.interval;
    let d = (d_int.lo() - phi1).max(phi1 - d_int.hi());
    let mut cell = Fig3Cell { phi0, phi1, d, valid: false, mproj_bias: f64::NAN, mean_offset: f64::NAN };
    if d_int.contains(phi1) {
        return Ok(cell);
    }
    let spectral = SpectralDistribution::new([(phi0, a0), (phi1, 1.0 - a0)])?;
    let p = FilteredDensity::new(NoisySpec::new(spectral, model.kernel, 1.0)?, d_int)?;
    cell.valid = true;
    cell.mproj_bias = bounds::first_order_bias(&p, model, phi0)?;
    cell.mean_offset = bounds::mean_estimator_offset(&p, phi0)?;
    Ok(cell)
}

pub fn fig3_table(cells: &[Fig3Cell]) -> Table {
    let mut t = Table::new(vec!["phi0", "phi1", "b_mproj", "b_mean", "ratio"]);
    for c in cells {
        t.push(vec![num(c.phi0), num(c.phi1), num(c.b_mproj()), num(c.b_mean()), num(c.ratio())]);
    }
    t
}

pub const FIG5_ESTIMATORS: [&str; 4] = ["mean", "pec_average", "fmpe_gdn", "fnmpe"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig5Row {
    /// Index into [`FIG5_ESTIMATORS`].
    pub estimator: usize,
    pub n: usize,
    pub m_shots: usize,
    pub trial: usize,
    pub estimate: f64,
    pub stderr: f64,
}

impl Fig5Row {
    pub fn name(&self) -> &'static str {
        FIG5_ESTIMATORS[self.estimator]
    }
}

/// Per-`n` simulator and models.
struct Fig5Setup {
    sim: QpeSimulator,
    gdn: PhaseModel,
    nme: PhaseModel,
    alpha_norm: f64,
    interval: PromiseInterval,
    fidelity: f64,
}

fn fig5_setup(s: &Fig5Settings, n: usize) -> Result<Fig5Setup> {
    let circuit = build_qpe_circuit(&s.ising, n)?;
    let noise = NoiseConfig::calibrated(&circuit, s.fidelity, s.noise_in_qft)?;
    let sim = QpeSimulator::new(circuit, noise, Engine::Branch)?;
    let a0 = match s.a0 {
        Some(a) => a,
        None => ising_spectrum(&s.ising)?.weight_in(&s.interval),
    };
    let kernel = Kernel::fejer_qubits(n as u32)?;
    let gdn = PhaseModel::new(kernel, s.interval, s.fidelity, a0, 0.0)?;
    let nme = PhaseModel::noiseless(kernel, s.interval)?.with_reg_const(s.reg_const)?;
    let alpha = pec_alpha(s.fidelity)?;
    Ok(Fig5Setup {
        sim,
        gdn,
        nme,
        alpha_norm: alpha[0].abs() + alpha[1].abs(),
        interval: s.interval,
        fidelity: s.fidelity,
    })
}

/// Seed of one trial; independent of the sweep layout.
pub fn fig5_trial_seed(seed: u64, n: usize, m_shots: usize, trial: usize) -> u64 {
    derive(derive(derive(seed, n as u64), m_shots as u64), trial as u64)
}

fn fig5_trial(st: &Fig5Setup, m_shots: usize, seed: u64, b: usize) -> Result<[(f64, f64); 4]> {
    let (x, _, _) = filtered_sampler(&st.sim, &st.interval, m_shots, derive(seed, 1))?;
    let (x0, x1, _, _) = filtered_pec_sampler(&st.sim, &st.interval, st.fidelity, m_shots, derive(seed, 2))?;
    let tagged = TaggedSample::tag_all(&x0, &x1);

    let mean_f = |v: &[f64]| mean_estimate(v).map(|r| r.estimate);
    let gdn_f = |v: &[f64]| mpe_estimate(v, &st.gdn).map(|r| r.estimate);
    let nme_f = |v: &[TaggedSample]| nme_estimate(v, &st.nme, st.alpha_norm).map(|r| r.estimate);
    Ok([
        (apply(&x, mean_f), boot(b, &x, derive(seed, 10), mean_f)),
        (apply(&tagged, pec_tagged), boot(b, &tagged, derive(seed, 11), pec_tagged)),
        (apply(&x, gdn_f), boot(b, &x, derive(seed, 12), gdn_f)),
        (apply(&tagged, nme_f), boot(b, &tagged, derive(seed, 13), nme_f)),
    ])
}

/// Runs every `(n, M′, trial)` point. Rows come back sorted by `n`, `M′`,
/// estimator and trial.
pub fn run_fig5(s: &Fig5Settings) -> Result<Vec<Fig5Row>> {
    let mut rows = Vec::new();
    for &n in &s.n_values {
        let st = fig5_setup(s, n)?;
        for &m in &s.shots {
            let results = par::map_indexed(s.trials, |t| {
                fig5_trial(&st, m, fig5_trial_seed(s.seed, n, m, t), s.bootstrap)
            });
            let results: Vec<[(f64, f64); 4]> = results.into_iter().collect::<Result<_>>()?;
            for e in 0..FIG5_ESTIMATORS.len() {
                for (t, r) in results.iter().enumerate() {
                    rows.push(Fig5Row { estimator: e, n, m_shots: m, trial: t, estimate: r[e].0, stderr: r[e].1 });
                }
            }
        }
    }
    Ok(rows)
}

pub fn fig5_table(rows: &[Fig5Row]) -> Table {
    let mut t = Table::new(vec!["estimator", "n", "M_shots", "trial", "estimate", "stderr_bootstrap"]);
    for r in rows {
        t.push(vec![
            r.name().to_string(),
            r.n.to_string(),
            r.m_shots.to_string(),
            r.trial.to_string(),
            num(r.estimate),
            num(r.stderr),
        ]);
    }
    t
}

/// Bias, spread and standard error of one estimator's trials (NaN rows
/// dropped).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    pub ok: usize,
    pub bias: f64,
    pub std: f64,
    pub stderr: f64,
}

pub fn summarize(values: impl IntoIterator<Item = f64>, truth: f64) -> TrialSummary {
    let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    let n = v.len();
    let m = if n == 0 { f64::NAN } else { v.iter().sum::<f64>() / n as f64 };
    let std = qpe_mproj::estimators::sample_std(&v);
    TrialSummary { ok: n, bias: m - truth, std, stderr: std / (n as f64).sqrt() }
}
