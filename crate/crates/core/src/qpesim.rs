//! Trajectory simulator for textbook QPE on a diagonal Ising chain.
//!
//! Qubits `0..n` form the control register (qubit 0 is the least significant
//! bit of the measured integer `x̃`), qubits `n..n+n_sites` hold the chain.
//! The evolution is `U = e^{iH}` with
//! `H = h Σ s_i + t Σ s_i s_{i+1}` and `s_i = +1` for bit 0, `−1` for bit 1.
//! Each chain qubit is prepared with `Ry(π − θ)|0⟩`, so bit 1 has amplitude
//! `cos(θ/2)`.
//!
//! Local depolarizing noise inserts a uniformly random Pauli on every qubit
//! after every moment with probability `p_err`. The error pattern of a
//! trajectory is drawn before the state is simulated.
//!
//! Two engines are provided. [`Engine::Statevector`] evolves the full
//! `2^{n + n_sites}` state. [`Engine::Branch`] uses that all chain operations
//! after preparation are diagonal or bit flips: the chain is then a classical
//! bitstring drawn at preparation, and only the control register is kept as a
//! statevector. Both produce the same measurement distribution.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use num_complex::Complex64;
use rand::Rng;

use crate::kernels::{wrap_phase, Kernel};
use crate::seed::{stream_rng, SimRng};
use crate::spectral::{FilterReport, PromiseInterval, SpectralDistribution};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsingSpec {
    pub n_sites: usize,
    pub h: f64,
    pub t: f64,
    pub prep_angle: f64,
}

impl Default for IsingSpec {
    fn default() -> Self {
        IsingSpec { n_sites: 4, h: 0.27, t: -0.46, prep_angle: 0.8 }
    }
}

impl IsingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=12).contains(&self.n_sites) {
            return Err(Error::domain(format!("chain length {} outside 2..=12", self.n_sites)));
        }
        if ![self.h, self.t, self.prep_angle].iter().all(|v| v.is_finite()) {
            return Err(Error::domain("non-finite Ising parameter"));
        }
        Ok(())
    }

    fn spin(z: usize, i: usize) -> f64 {
        if (z >> i) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `E(z)` for the bitstring `z` (bit `i` is site `i`).
    pub fn energy(&self, z: usize) -> f64 {
        let mut e = 0.0;
        for i in 0..self.n_sites {
            e += self.h * Self::spin(z, i);
        }
        for i in 0..self.n_sites - 1 {
            e += self.t * Self::spin(z, i) * Self::spin(z, i + 1);
        }
        e
    }

    /// Overlap `|⟨z|ψ⟩|²` of the product initial state.
    pub fn overlap(&self, z: usize) -> f64 {
        let (s, c) = (0.5 * self.prep_angle).sin_cos();
        let (p0, p1) = (s * s, c * c);
        (0..self.n_sites).map(|i| if (z >> i) & 1 == 1 { p1 } else { p0 }).product()
    }
}

/// Eigenphases `wrap(E(z))` with overlaps, degenerate phases merged.
pub fn ising_spectrum(spec: &IsingSpec) -> Result<SpectralDistribution> {
    spec.validate()?;
    let entries: Vec<(f64, f64)> = (0..1usize << spec.n_sites)
        .map(|z| (wrap_phase(spec.energy(z)), spec.overlap(z)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    SpectralDistribution::new(entries)
}

/// Analytic control-register distribution of noiseless textbook QPE:
/// `P(x̃) = Σ_j a_j (2π/K) f_K(2π x̃/K − φ_j − φ_ref)`.
pub fn textbook_distribution(spectrum: &SpectralDistribution, n_ctrl: u32, phi_ref: f64) -> Result<Vec<f64>> {
    let kernel = Kernel::fejer_qubits(n_ctrl)?;
    let k = 1usize << n_ctrl;
    Ok((0..k)
        .map(|x| {
            let theta = TAU * x as f64 / k as f64;
            spectrum
                .entries()
                .iter()
                .map(|&(p, w)| w * TAU / k as f64 * kernel.pdf(theta - p - phi_ref))
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Y(usize),
    Z(usize),
    Ry(usize, f64),
    /// `diag(1, e^{iθ})`.
    Phase(usize, f64),
    /// `e^{iθ}` on `|11⟩`.
    CPhase(usize, usize, f64),
    /// When `ctrl` is 1: phase `e^{i(angle·s_target + 2^power φ_ref·[carries_ref])}`.
    CEvolveZ { ctrl: usize, target: usize, angle: f64, carries_ref: bool, power: u32 },
    /// When `ctrl` is 1: phase `e^{i angle·s_a·s_b}`.
    CEvolveZZ { ctrl: usize, a: usize, b: usize, angle: f64 },
    Swap(usize, usize),
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::H(q) | Gate::X(q) | Gate::Y(q) | Gate::Z(q) | Gate::Ry(q, _) | Gate::Phase(q, _) => vec![q],
            Gate::CPhase(a, b, _) | Gate::Swap(a, b) => vec![a, b],
            Gate::CEvolveZ { ctrl, target, .. } => vec![ctrl, target],
            Gate::CEvolveZZ { ctrl, a, b, .. } => vec![ctrl, a, b],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpeCircuit {
    pub n_ctrl: usize,
    pub n_sys: usize,
    pub moments: Vec<Vec<Gate>>,
    /// Index of the first inverse-QFT moment.
    pub qft_start: usize,
}

impl QpeCircuit {
    pub fn n_qubits(&self) -> usize {
        self.n_ctrl + self.n_sys
    }

    /// Register dimension `K = 2^n`.
    pub fn k(&self) -> usize {
        1 << self.n_ctrl
    }

    pub fn depth(&self) -> usize {
        self.moments.len()
    }

    /// Number of moments followed by a noise layer.
    pub fn noisy_depth(&self, noise_in_qft: bool) -> usize {
        if noise_in_qft {
            self.moments.len()
        } else {
            self.qft_start
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nq = self.n_qubits();
        for (m, moment) in self.moments.iter().enumerate() {
            let mut seen = vec![false; nq];
            for g in moment {
                for q in g.qubits() {
                    if q >= nq {
                        return Err(Error::domain(format!("gate {g:?} in moment {m} addresses qubit {q}")));
                    }
                    if seen[q] {
                        return Err(Error::domain(format!("moment {m} touches qubit {q} twice")));
                    }
                    seen[q] = true;
                }
            }
        }
        Ok(())
    }
}

/// Textbook QPE circuit with `n_ctrl` control qubits: Hadamards on the
/// controls, chain preparation, controlled `U^{2^k}` blocks (one gate per
/// moment, angles scaled by `2^k`), inverse QFT and the final swaps.
pub fn build_qpe_circuit(spec: &IsingSpec, n_ctrl: usize) -> Result<QpeCircuit> {
    spec.validate()?;
    if !(1..=12).contains(&n_ctrl) {
        return Err(Error::domain(format!("control register size {n_ctrl} outside 1..=12")));
    }
    let n = n_ctrl;
    let sys = |i: usize| n + i;
    let mut moments: Vec<Vec<Gate>> = Vec::new();
    moments.push((0..n).map(Gate::H).collect());
    moments.push((0..spec.n_sites).map(|i| Gate::Ry(sys(i), PI - spec.prep_angle)).collect());
    for k in 0..n {
        let scale = (1u64 << k) as f64;
        for i in 0..spec.n_sites {
            moments.push(vec![Gate::CEvolveZ {
                ctrl: k,
                target: sys(i),
                angle: scale * spec.h,
                carries_ref: i == 0,
                power: k as u32,
            }]);
        }
        for i in 0..spec.n_sites - 1 {
            moments.push(vec![Gate::CEvolveZZ { ctrl: k, a: sys(i), b: sys(i + 1), angle: scale * spec.t }]);
        }
    }
    let qft_start = moments.len();
    for m in 0..n {
        let target = n - 1 - m;
        for l in 0..m {
            let angle = -PI / (1u64 << (m - l)) as f64;
            moments.push(vec![Gate::CPhase(n - 1 - l, target, angle)]);
        }
        moments.push(vec![Gate::H(target)]);
    }
    for j in 0..n / 2 {
        moments.push(vec![Gate::Swap(j, n - 1 - j)]);
    }
    let c = QpeCircuit { n_ctrl: n, n_sys: spec.n_sites, moments, qft_start };
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub p_err: f64,
    /// Apply noise after the inverse-QFT moments as well.
    pub noise_in_qft: bool,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig { p_err: 0.0, noise_in_qft: true }
    }

    pub fn new(p_err: f64, noise_in_qft: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&p_err) {
            return Err(Error::domain(format!("error probability must lie in [0, 1), got {p_err}")));
        }
        Ok(NoiseConfig { p_err, noise_in_qft })
    }

    /// Error rate giving no-error probability `fidelity` on `circuit`.
    pub fn calibrated(circuit: &QpeCircuit, fidelity: f64, noise_in_qft: bool) -> Result<Self> {
        let p = calibrate_perr(circuit.n_qubits(), circuit.noisy_depth(noise_in_qft), fidelity)?;
        Self::new(p, noise_in_qft)
    }
}

/// `p_err = 1 − F^{1/(N_q N_d)}`.
pub fn calibrate_perr(n_q: usize, n_d: usize, target_fidelity: f64) -> Result<f64> {
    if !(target_fidelity > 0.0 && target_fidelity <= 1.0) {
        return Err(Error::domain(format!("target fidelity must lie in (0, 1], got {target_fidelity}")));
    }
    if n_q == 0 || n_d == 0 {
        return Err(Error::domain("circuit has no error locations"));
    }
    Ok(-(target_fidelity.ln() / (n_q * n_d) as f64).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEvent {
    pub moment: usize,
    pub qubit: usize,
    pub pauli: Pauli,
}

/// Draws the error locations of one trajectory, ordered by moment then qubit.
pub fn sample_errors<R: Rng + ?Sized>(circuit: &QpeCircuit, noise: &NoiseConfig, rng: &mut R) -> Vec<ErrorEvent> {
    let mut out = Vec::new();
    if noise.p_err <= 0.0 {
        return out;
    }
    let nq = circuit.n_qubits();
    let slots = nq * circuit.noisy_depth(noise.noise_in_qft);
    let log_q = (-noise.p_err).ln_1p();
    let mut pos: usize = 0;
    let mut first = true;
    loop {
        let u = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_q).floor();
        if !skip.is_finite() || skip >= slots as f64 {
            break;
        }
        pos = if first { skip as usize } else { pos + 1 + skip as usize };
        first = false;
        if pos >= slots {
            break;
        }
        let pauli = match rng.random_range(0..3u8) {
            0 => Pauli::X,
            1 => Pauli::Y,
            _ => Pauli::Z,
        };
        out.push(ErrorEvent { moment: pos / nq, qubit: pos % nq, pauli });
    }
    out
}

/// Dense statevector over `n` qubits; qubit `q` is bit `q` of the index.
#[derive(Debug, Clone)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(n: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { n, amps }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn apply_1q(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1 << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a, b) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = m[0][0] * a + m[0][1] * b;
                self.amps[i | bit] = m[1][0] * a + m[1][1] * b;
            }
        }
    }

    pub fn h(&mut self, q: usize) {
        let bit = 1 << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a, b) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = (a + b) * FRAC_1_SQRT_2;
                self.amps[i | bit] = (a - b) * FRAC_1_SQRT_2;
            }
        }
    }

    pub fn x(&mut self, q: usize) {
        let bit = 1 << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                self.amps.swap(i, i | bit);
            }
        }
    }

    pub fn y(&mut self, q: usize) {
        let i_ = Complex64::i();
        self.apply_1q(q, [[Complex64::new(0.0, 0.0), -i_], [i_, Complex64::new(0.0, 0.0)]]);
    }

    pub fn z(&mut self, q: usize) {
        self.phase(q, PI);
    }

    pub fn ry(&mut self, q: usize, angle: f64) {
        let (s, c) = (0.5 * angle).sin_cos();
        let (s, c) = (Complex64::new(s, 0.0), Complex64::new(c, 0.0));
        self.apply_1q(q, [[c, -s], [s, c]]);
    }

    /// `diag(1, e^{iθ})` on qubit `q`.
    pub fn phase(&mut self, q: usize, theta: f64) {
        let bit = 1 << q;
        let p = Complex64::from_polar(1.0, theta);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & bit != 0 {
                *a *= p;
            }
        }
    }

    pub fn cphase(&mut self, a: usize, b: usize, theta: f64) {
        let mask = (1 << a) | (1 << b);
        let p = Complex64::from_polar(1.0, theta);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp *= p;
            }
        }
    }

    pub fn swap(&mut self, a: usize, b: usize) {
        let (ba, bb) = (1 << a, 1 << b);
        for i in 0..self.amps.len() {
            if i & ba != 0 && i & bb == 0 {
                self.amps.swap(i, (i & !ba) | bb);
            }
        }
    }

    /// Multiplies each amplitude with `ctrl` set by `e^{i g(index)}`.
    fn controlled_diag(&mut self, ctrl: usize, g: impl Fn(usize) -> f64) {
        let bit = 1 << ctrl;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & bit != 0 {
                *a *= Complex64::from_polar(1.0, g(i));
            }
        }
    }

    pub fn pauli(&mut self, q: usize, p: Pauli) {
        match p {
            Pauli::X => self.x(q),
            Pauli::Y => self.y(q),
            Pauli::Z => self.z(q),
        }
    }

    /// Marginal distribution of the lowest `n_low` qubits.
    pub fn low_marginal(&self, n_low: usize) -> Vec<f64> {
        let mask = (1 << n_low) - 1;
        let mut out = vec![0.0; 1 << n_low];
        for (i, a) in self.amps.iter().enumerate() {
            out[i & mask] += a.norm_sqr();
        }
        out
    }

    fn n_qubits(&self) -> usize {
        self.n
    }
}

fn spin_of(index: usize, q: usize) -> f64 {
    if (index >> q) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn ref_offset(carries_ref: bool, power: u32, phi_ref: f64) -> f64 {
    if carries_ref {
        (1u64 << power) as f64 * phi_ref
    } else {
        0.0
    }
}

/// Exact control-register distribution of the full statevector for a given
/// error pattern and reference phase.
pub fn control_distribution(circuit: &QpeCircuit, errors: &[ErrorEvent], phi_ref: f64) -> Result<Vec<f64>> {
    let mut sv = StateVector::zero(circuit.n_qubits());
    let mut e = 0;
    for (m, moment) in circuit.moments.iter().enumerate() {
        for g in moment {
            apply_full(&mut sv, g, phi_ref);
        }
        while e < errors.len() && errors[e].moment == m {
            sv.pauli(errors[e].qubit, errors[e].pauli);
            e += 1;
        }
    }
    check_norm(sv.norm_sqr())?;
    debug_assert_eq!(sv.n_qubits(), circuit.n_qubits());
    Ok(sv.low_marginal(circuit.n_ctrl))
}

fn apply_full(sv: &mut StateVector, g: &Gate, phi_ref: f64) {
    match *g {
        Gate::H(q) => sv.h(q),
        Gate::X(q) => sv.x(q),
        Gate::Y(q) => sv.y(q),
        Gate::Z(q) => sv.z(q),
        Gate::Ry(q, a) => sv.ry(q, a),
        Gate::Phase(q, t) => sv.phase(q, t),
        Gate::CPhase(a, b, t) => sv.cphase(a, b, t),
        Gate::Swap(a, b) => sv.swap(a, b),
        Gate::CEvolveZ { ctrl, target, angle, carries_ref, power } => {
            let off = ref_offset(carries_ref, power, phi_ref);
            sv.controlled_diag(ctrl, |i| angle * spin_of(i, target) + off)
        }
        Gate::CEvolveZZ { ctrl, a, b, angle } => sv.controlled_diag(ctrl, |i| angle * spin_of(i, a) * spin_of(i, b)),
    }
}

fn check_norm(n: f64) -> Result<()> {
    if (n - 1.0).abs() > 1e-8 {
        Err(Error::Internal(format!("state norm drifted to {n}")))
    } else {
        Ok(())
    }
}

/// Per chain qubit: the moment of its preparation gate and its angle.
fn prep_layout(circuit: &QpeCircuit) -> Result<Vec<(usize, f64)>> {
    let mut prep: Vec<Option<(usize, f64)>> = vec![None; circuit.n_sys];
    for (m, moment) in circuit.moments.iter().enumerate() {
        for g in moment {
            for q in g.qubits() {
                if q < circuit.n_ctrl {
                    continue;
                }
                let s = q - circuit.n_ctrl;
                match *g {
                    Gate::Ry(_, a) if prep[s].is_none() => prep[s] = Some((m, a)),
                    Gate::CEvolveZ { ctrl, target, .. } if ctrl < circuit.n_ctrl && target == q => {}
                    Gate::CEvolveZZ { ctrl, .. } if ctrl < circuit.n_ctrl && q != ctrl => {}
                    _ => {
                        return Err(Error::Unsupported(format!(
                            "gate {g:?} is not diagonal on chain qubit {q}"
                        )))
                    }
                }
            }
        }
    }
    prep.into_iter()
        .enumerate()
        .map(|(s, p)| p.ok_or_else(|| Error::Unsupported(format!("chain qubit {s} is never prepared"))))
        .collect()
}

/// Control-register distribution with the chain fixed to prepared bits
/// `prep_bits`.
fn branch_distribution(
    circuit: &QpeCircuit,
    layout: &[(usize, f64)],
    errors: &[ErrorEvent],
    phi_ref: f64,
    prep_bits: &[u8],
) -> Result<Vec<f64>> {
    let n = circuit.n_ctrl;
    let mut bits = vec![0u8; circuit.n_sys];
    let mut sv = StateVector::zero(n);
    let mut e = 0;
    for (m, moment) in circuit.moments.iter().enumerate() {
        for g in moment {
            match *g {
                Gate::Ry(q, _) if q >= n => {
                    let s = q - n;
                    if layout[s].0 == m {
                        bits[s] = prep_bits[s];
                    }
                }
                Gate::CEvolveZ { ctrl, target, angle, carries_ref, power } => {
                    let s = if bits[target - n] == 0 { 1.0 } else { -1.0 };
                    sv.phase(ctrl, angle * s + ref_offset(carries_ref, power, phi_ref));
                }
                Gate::CEvolveZZ { ctrl, a, b, angle } => {
                    let s = if bits[a - n] == bits[b - n] { 1.0 } else { -1.0 };
                    sv.phase(ctrl, angle * s);
                }
                ref other => apply_full(&mut sv, other, phi_ref),
            }
        }
        while e < errors.len() && errors[e].moment == m {
            let ev = errors[e];
            if ev.qubit < n {
                sv.pauli(ev.qubit, ev.pauli);
            } else if ev.pauli != Pauli::Z {
                bits[ev.qubit - n] ^= 1;
            }
            e += 1;
        }
    }
    check_norm(sv.norm_sqr())?;
    Ok(sv.low_marginal(n))
}

/// Chain bit of each qubit just before its preparation gate.
fn pre_prep_bits(circuit: &QpeCircuit, layout: &[(usize, f64)], errors: &[ErrorEvent]) -> Vec<u8> {
    let n = circuit.n_ctrl;
    let mut bits = vec![0u8; circuit.n_sys];
    for ev in errors {
        if ev.qubit >= n && ev.pauli != Pauli::Z {
            let s = ev.qubit - n;
            if ev.moment < layout[s].0 {
                bits[s] ^= 1;
            }
        }
    }
    bits
}

fn prob_one(pre_bit: u8, angle: f64) -> f64 {
    let (s, c) = (0.5 * angle).sin_cos();
    if pre_bit == 0 {
        s * s
    } else {
        c * c
    }
}

/// Exact control-register distribution of the branch engine, summing over
/// all preparation outcomes. Agrees with [`control_distribution`].
pub fn branch_control_distribution(circuit: &QpeCircuit, errors: &[ErrorEvent], phi_ref: f64) -> Result<Vec<f64>> {
    let layout = prep_layout(circuit)?;
    let pre = pre_prep_bits(circuit, &layout, errors);
    let mut total = vec![0.0; circuit.k()];
    for z in 0..1usize << circuit.n_sys {
        let bits: Vec<u8> = (0..circuit.n_sys).map(|s| ((z >> s) & 1) as u8).collect();
        let w: f64 = bits
            .iter()
            .enumerate()
            .map(|(s, &b)| {
                let p1 = prob_one(pre[s], layout[s].1);
                if b == 1 {
                    p1
                } else {
                    1.0 - p1
                }
            })
            .product();
        if w == 0.0 {
            continue;
        }
        let d = branch_distribution(circuit, &layout, errors, phi_ref, &bits)?;
        for (t, v) in total.iter_mut().zip(d) {
            *t += w * v;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Branch,
    Statevector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub x: f64,
    pub x_index: usize,
    pub had_error: bool,
    pub phi_ref: f64,
}

/// Simulator bound to one circuit and noise level.
#[derive(Debug, Clone)]
pub struct QpeSimulator {
    pub circuit: QpeCircuit,
    pub noise: NoiseConfig,
    pub engine: Engine,
    layout: Vec<(usize, f64)>,
}

impl QpeSimulator {
    pub fn new(circuit: QpeCircuit, noise: NoiseConfig, engine: Engine) -> Result<Self> {
        circuit.validate()?;
        NoiseConfig::new(noise.p_err, noise.noise_in_qft)?;
        let layout = match engine {
            Engine::Branch => prep_layout(&circuit)?,
            Engine::Statevector => Vec::new(),
        };
        Ok(QpeSimulator { circuit, noise, engine, layout })
    }

    pub fn sample_errors<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<ErrorEvent> {
        sample_errors(&self.circuit, &self.noise, rng)
    }

    /// Runs one trajectory with a fresh uniform reference phase.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Trajectory> {
        let errors = self.sample_errors(rng);
        self.run_with_errors(&errors, rng)
    }

    /// Runs one trajectory with a given error pattern.
    pub fn run_with_errors<R: Rng + ?Sized>(&self, errors: &[ErrorEvent], rng: &mut R) -> Result<Trajectory> {
        let phi_ref = -PI + TAU * rng.random::<f64>();
        self.run_fixed(errors, phi_ref, rng)
    }

    pub fn run_fixed<R: Rng + ?Sized>(&self, errors: &[ErrorEvent], phi_ref: f64, rng: &mut R) -> Result<Trajectory> {
        let dist = match self.engine {
            Engine::Statevector => control_distribution(&self.circuit, errors, phi_ref)?,
            Engine::Branch => {
                let pre = pre_prep_bits(&self.circuit, &self.layout, errors);
                let bits: Vec<u8> = pre
                    .iter()
                    .zip(&self.layout)
                    .map(|(&b, &(_, a))| u8::from(rng.random::<f64>() < prob_one(b, a)))
                    .collect();
                branch_distribution(&self.circuit, &self.layout, errors, phi_ref, &bits)?
            }
        };
        let x_index = sample_index(&dist, rng);
        let k = self.circuit.k() as f64;
        Ok(Trajectory {
            x: wrap_phase(TAU * x_index as f64 / k - phi_ref),
            x_index,
            had_error: !errors.is_empty(),
            phi_ref,
        })
    }
}

fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let total: f64 = dist.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// One simulated shot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRecord {
    pub x: f64,
    pub branch: u8,
    pub had_error: bool,
    pub phi_ref: f64,
    pub accepted: bool,
}

/// Runs `m_shots` trajectories (shot `i` uses stream `i` of `seed`) and keeps
/// the outcomes inside `D`.
pub fn filtered_sampler(
    sim: &QpeSimulator,
    d: &PromiseInterval,
    m_shots: usize,
    seed: u64,
) -> Result<(Vec<f64>, FilterReport, Vec<ShotRecord>)> {
    let shots: Vec<Result<ShotRecord>> = par::map_indexed(m_shots, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let t = sim.run(&mut rng)?;
        Ok(ShotRecord { x: t.x, branch: 0, had_error: t.had_error, phi_ref: t.phi_ref, accepted: d.contains(t.x) })
    });
    let records: Vec<ShotRecord> = shots.into_iter().collect::<Result<_>>()?;
    let kept: Vec<f64> = records.iter().filter(|r| r.accepted).map(|r| r.x).collect();
    let report = FilterReport::new(m_shots, m_shots, kept.len());
    Ok((kept, report, records))
}

/// Retry cap for drawing an erroneous trajectory in branch 1.
pub const BRANCH1_RETRIES: usize = 10_000;

/// `α = [1/F, 1 − 1/F]`.
pub fn pec_alpha(fidelity: f64) -> Result<[f64; 2]> {
    if !(fidelity > 0.0 && fidelity < 1.0) {
        return Err(Error::domain(format!("PEC needs F in (0, 1), got {fidelity}")));
    }
    Ok([1.0 / fidelity, 1.0 - 1.0 / fidelity])
}

/// Draws one trajectory that contains at least one error.
pub fn run_erroneous(sim: &QpeSimulator, rng: &mut SimRng) -> Result<Trajectory> {
    for _ in 0..BRANCH1_RETRIES {
        let errors = sim.sample_errors(rng);
        if !errors.is_empty() {
            return sim.run_with_errors(&errors, rng);
        }
    }
    Err(Error::RetryBudget(format!(
        "no erroneous trajectory in {BRANCH1_RETRIES} attempts (p_err = {})",
        sim.noise.p_err
    )))
}

/// Quasiprobability sampler: each shot picks branch `a` with probability
/// `|α_a|/‖α‖₁`; branch 0 is a plain noisy trajectory, branch 1 a trajectory
/// conditioned on at least one error. Returns `(X₀, X₁, report, records)`.
#[allow(clippy::type_complexity)]
pub fn filtered_pec_sampler(
    sim: &QpeSimulator,
    d: &PromiseInterval,
    fidelity: f64,
    m_shots: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>, FilterReport, Vec<ShotRecord>)> {
    let alpha = pec_alpha(fidelity)?;
    let norm = alpha[0].abs() + alpha[1].abs();
    let p0 = alpha[0].abs() / norm;
    let shots: Vec<Result<ShotRecord>> = par::map_indexed(m_shots, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let branch = u8::from(rng.random::<f64>() >= p0);
        let t = if branch == 0 { sim.run(&mut rng)? } else { run_erroneous(sim, &mut rng)? };
        Ok(ShotRecord { x: t.x, branch, had_error: t.had_error, phi_ref: t.phi_ref, accepted: d.contains(t.x) })
    });
    let records: Vec<ShotRecord> = shots.into_iter().collect::<Result<_>>()?;
    let mut x0 = Vec::new();
    let mut x1 = Vec::new();
    for r in records.iter().filter(|r| r.accepted) {
        if r.branch == 0 {
            x0.push(r.x);
        } else {
            x1.push(r.x);
        }
    }
    let report = FilterReport::new(m_shots, m_shots, x0.len() + x1.len());
    Ok((x0, x1, report, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ising_defaults() {
        let spec = IsingSpec::default();
        let s = ising_spectrum(&spec).unwrap();
        let (p0, a0) = s.lowest();
        assert!((p0 + 2.46).abs() < 1e-12);
        assert!((a0 - 0.4f64.cos().powi(8)).abs() < 1e-12);
        assert!((s.entries()[1].0 - p0 - 1.46).abs() < 1e-12);
        let aligned = ising_spectrum(&IsingSpec { prep_angle: 0.0, ..spec }).unwrap();
        assert_eq!(aligned.len(), 1);
        assert!((aligned.lowest().1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn circuit_depth_and_structure() {
        let c = build_qpe_circuit(&IsingSpec::default(), 4).unwrap();
        assert_eq!(c.depth(), 42);
        assert_eq!(c.qft_start, 30);
        assert_eq!(c.n_qubits(), 8);
        let c6 = build_qpe_circuit(&IsingSpec::default(), 6).unwrap();
        assert_eq!(c6.depth(), 2 + 6 * 7 + 21 + 3);
    }

    #[test]
    fn calibration_values() {
        let p = calibrate_perr(8, 20, (-1.0f64).exp()).unwrap();
        assert!((p - (1.0 - (-1.0f64 / 160.0).exp())).abs() < 1e-15);
        assert!((p - 0.00623).abs() < 1e-5);
        assert_eq!(calibrate_perr(8, 20, 1.0).unwrap(), 0.0);
        assert!(calibrate_perr(8, 20, 0.0).is_err());
    }

    #[test]
    fn engines_agree_exactly() {
        let spec = IsingSpec::default();
        let c = build_qpe_circuit(&spec, 3).unwrap();
        let noise = NoiseConfig::new(0.03, true).unwrap();
        let mut rng = stream_rng(17, 0);
        for _ in 0..20 {
            let errors = sample_errors(&c, &noise, &mut rng);
            let phi_ref = rng.random::<f64>() * TAU - PI;
            let a = control_distribution(&c, &errors, phi_ref).unwrap();
            let b = branch_control_distribution(&c, &errors, phi_ref).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "{errors:?}");
            }
        }
    }

    #[test]
    fn grid_aligned_eigenstate_is_exact() {
        // h chosen so E(all ones) sits on the K = 16 grid.
        let spec = IsingSpec { n_sites: 2, h: -TAU * 3.0 / 32.0, t: 0.0, prep_angle: 0.0 };
        let c = build_qpe_circuit(&spec, 4).unwrap();
        let sim = QpeSimulator::new(c, NoiseConfig::noiseless(), Engine::Statevector).unwrap();
        let mut rng = stream_rng(1, 0);
        let t = sim.run_fixed(&[], 0.0, &mut rng).unwrap();
        let expected = wrap_phase(2.0 * TAU * 3.0 / 32.0);
        assert!((t.x - expected).abs() < 1e-12, "{} vs {expected}", t.x);
    }

    #[test]
    fn pec_alpha_norm() {
        let a = pec_alpha((-1.0f64).exp()).unwrap();
        assert!((a[0].abs() + a[1].abs() - (2.0 * std::f64::consts::E - 1.0)).abs() < 1e-12);
        assert!(pec_alpha(1.0).is_err());
    }
}
