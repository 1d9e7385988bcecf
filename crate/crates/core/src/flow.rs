//! Unitary flow `d𝒦/dl = [η, 𝒦]` on the truncated Floquet operator.
//!
//! Two generators are available:
//!
//! * [`GeneratorKind::DCommutator`]: `η = [𝒟, 𝒦_int]` with `𝒟 = 1 ⊗ ωn̂`.
//!   Elementwise this is `ω (m − m') 𝒦_{(m,i),(m',j)}`, so the block at
//!   harmonic distance `d` decays at rate `(ωd)²` to leading order.
//! * [`GeneratorKind::Canonical`]: `η = [𝒦₀, 𝒦_int]` with `𝒦₀` the
//!   block-diagonal part.
//!
//! Both right-hand sides share the stiff linear part `Λ ⊙ 𝒦` with
//! `Λ = −(ω(m − m'))²`, which bounds explicit steps by `~3/(2Mω)²`. The
//! default integrator treats it exactly: Krogstad's fourth-order exponential
//! Runge–Kutta scheme with step-doubling error control, whose `φ`-functions
//! are scalars per harmonic distance. Dormand–Prince 5(4) is kept as an
//! explicit reference.
//!
//! The accumulated transformation `𝒰_c` is a product of exact exponentials
//! of a Magnus exponent per step, so it stays unitary to rounding.

use thiserror::Error;

use crate::effective::{EffectiveHamiltonian, Method};
use crate::floquet::{extract_harmonic_components, verify_s_invariance, FloquetError, FloquetOperator, HarmonicLayout};
use crate::linalg::{
    antihermitize, commutator_ah_h, expm, frobenius, hermitian_eigenvalues, hermitize, identity, matmul, max_abs,
    unitarity_defect, CMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    DCommutator,
    Canonical,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::DCommutator => "d_commutator",
            GeneratorKind::Canonical => "canonical",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Floquet(#[from] FloquetError),
    #[error("step size underflow at l = {l:.6e} (h = {h:.3e})")]
    StepUnderflow { l: f64, h: f64 },
    #[error("extracted U_c(0) has unitarity defect {0:.3e} > 1e-6; increase the harmonic cutoff")]
    UnitarityDefect(f64),
    #[error("flow did not converge (relative off-diagonal norm {0:.3e})")]
    NotConverged(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub generator: GeneratorKind,
    pub l_max: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// Per-step bound on the Frobenius norm of the embedded error estimate.
    pub step_tol: f64,
    /// Target for `‖𝒦_int‖_F / ‖𝒦₀‖_F`.
    pub convergence_tol: f64,
    pub buffer: usize,
    pub max_steps: usize,
    /// Full spectral drift is evaluated every this many accepted steps and
    /// at the end.
    pub drift_stride: usize,
    pub transform: TransformScheme,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Krogstad ETDRK4 with step doubling and local extrapolation.
    ExponentialRk4,
    DormandPrince45,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::ExponentialRk4 => "exponential_rk4",
            Integrator::DormandPrince45 => "dormand_prince45",
        }
    }
}

/// Update rule for the accumulated transformation `𝒰_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformScheme {
    /// `𝒰_c ← exp(h η((𝒦_n + 𝒦_{n+1})/2)) 𝒰_c`, second order.
    Midpoint,
    /// Fourth-order Magnus exponent from `η` at the two Gauss nodes of the
    /// step, with `𝒦` there taken from the integrator's dense output. For
    /// the d-commutator the first Magnus term is integrated exactly.
    Magnus4,
}

impl TransformScheme {
    pub fn name(self) -> &'static str {
        match self {
            TransformScheme::Midpoint => "midpoint",
            TransformScheme::Magnus4 => "magnus4",
        }
    }
}

impl FlowConfig {
    /// Defaults scaled to the drive frequency: `l_max = 50/ω²` and the
    /// exponential integrator with steps up to `1/ω²`.
    pub fn for_frequency(omega: f64, cutoff: usize) -> Self {
        let w2 = omega * omega;
        Self {
            generator: GeneratorKind::DCommutator,
            l_max: 50.0 / w2,
            initial_step: 1e-3 / w2,
            max_step: 1.0 / w2,
            step_tol: 1e-11,
            convergence_tol: 1e-8,
            buffer: (cutoff / 2).max(2),
            max_steps: 200_000,
            drift_stride: 25,
            transform: TransformScheme::Magnus4,
            integrator: Integrator::ExponentialRk4,
        }
    }

    /// Same defaults with Dormand–Prince, its step capped just inside the
    /// explicit stability bound for the fastest decay rate `(2Mω)²`.
    pub fn explicit(omega: f64, cutoff: usize) -> Self {
        let fastest = (2.0 * cutoff.max(1) as f64 * omega).powi(2);
        Self {
            max_step: 2.8 / fastest,
            integrator: Integrator::DormandPrince45,
            ..Self::for_frequency(omega, cutoff)
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.l_max) {
            return Err(FlowError::InvalidConfig("l_max must be positive"));
        }
        if !positive(self.initial_step) || !positive(self.max_step) {
            return Err(FlowError::InvalidConfig("step sizes must be positive"));
        }
        if !positive(self.step_tol) || !positive(self.convergence_tol) {
            return Err(FlowError::InvalidConfig("tolerances must be positive"));
        }
        if self.max_steps == 0 || self.drift_stride == 0 {
            return Err(FlowError::InvalidConfig("step counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowDiagnostic {
    pub l: f64,
    /// `‖𝒦_int‖_F`.
    pub offdiag_norm: f64,
    /// Largest eigenvalue change against `l = 0`, where evaluated.
    pub spectral_drift: Option<f64>,
    /// Interior block-Toeplitz deviation of `𝒦`.
    pub s_deviation: f64,
    /// `‖𝒰_c 𝒦(0) 𝒰_c† − 𝒦(l)‖_max`, where evaluated.
    pub transform_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub l: f64,
    pub k: CMatrix,
    pub uc: CMatrix,
    pub layout: HarmonicLayout,
    pub omega: f64,
    pub generator: GeneratorKind,
    pub diagnostics: Vec<FlowDiagnostic>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Suggested size of the next step.
    pub next_step: f64,
    pub converged: bool,
    k_initial: CMatrix,
    k0_norm: f64,
    initial_spectrum: Vec<f64>,
    /// `f(𝒦)` at the current point, reused as the first stage of the next
    /// explicit step.
    rate: Option<CMatrix>,
    /// `f(𝒦) − Λ ⊙ 𝒦` at the current point.
    nonlinear: Option<CMatrix>,
    stiffness: Stiffness,
}

#[derive(Debug, Clone)]
pub enum FlowOutcome {
    Converged(FlowState),
    NotConverged(FlowState),
}

impl FlowOutcome {
    pub fn state(&self) -> &FlowState {
        match self {
            FlowOutcome::Converged(s) | FlowOutcome::NotConverged(s) => s,
        }
    }

    pub fn into_state(self) -> FlowState {
        match self {
            FlowOutcome::Converged(s) | FlowOutcome::NotConverged(s) => s,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, FlowOutcome::Converged(_))
    }
}

fn harmonic_index(layout: &HarmonicLayout) -> Vec<i32> {
    (0..layout.size()).map(|r| layout.harmonic_of_row(r)).collect()
}

/// Splits `k` into its block-diagonal and off-block-diagonal parts.
pub fn split_blocks(k: &CMatrix, layout: &HarmonicLayout) -> (CMatrix, CMatrix) {
    let m = harmonic_index(layout);
    let mut diag = k.clone();
    let mut off = k.clone();
    for c in 0..k.ncols() {
        for r in 0..k.nrows() {
            if m[r] == m[c] {
                off[(r, c)] = crate::linalg::ZERO;
            } else {
                diag[(r, c)] = crate::linalg::ZERO;
            }
        }
    }
    (diag, off)
}

pub fn offdiag_norm(k: &CMatrix, layout: &HarmonicLayout) -> f64 {
    let m = harmonic_index(layout);
    let mut s = 0.0;
    for c in 0..k.ncols() {
        for r in 0..k.nrows() {
            if m[r] != m[c] {
                s += k[(r, c)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// `η` for the given generator, antihermitized.
pub fn make_generator(k: &CMatrix, kind: GeneratorKind, layout: &HarmonicLayout, omega: f64) -> CMatrix {
    match kind {
        GeneratorKind::DCommutator => {
            let m = harmonic_index(layout);
            let mut eta = k.clone();
            for c in 0..k.ncols() {
                for r in 0..k.nrows() {
                    eta[(r, c)] *= omega * (m[r] - m[c]) as f64;
                }
            }
            antihermitize(&eta)
        }
        GeneratorKind::Canonical => {
            let (diag, off) = split_blocks(k, layout);
            // both factors Hermitian: [A, B] = AB − (AB)†
            let ab = matmul(&diag, &off);
            antihermitize(&(&ab - ab.adjoint()))
        }
    }
}

fn rhs(k: &CMatrix, kind: GeneratorKind, layout: &HarmonicLayout, omega: f64) -> CMatrix {
    commutator_ah_h(&make_generator(k, kind, layout, omega), k)
}

/// Largest elementwise S-invariance deviation over the interior blocks.
pub fn s_deviation(k: &CMatrix, layout: &HarmonicLayout, omega: f64, buffer: usize) -> f64 {
    verify_s_invariance(k, *layout, buffer, omega, f64::INFINITY)
        .map(|s| s.max_deviation)
        .unwrap_or(f64::NAN)
}

/// Max-norm of `[𝒟, 𝒦]`, which vanishes exactly when only `d = 0` blocks
/// remain.
pub fn fixed_point_residual(state: &FlowState) -> f64 {
    let m = harmonic_index(&state.layout);
    let mut worst = 0.0_f64;
    for c in 0..state.k.ncols() {
        for r in 0..state.k.nrows() {
            let v = state.omega * (m[r] - m[c]) as f64 * state.k[(r, c)].norm();
            worst = worst.max(v);
        }
    }
    worst
}

fn spectral_drift(initial: &[f64], k: &CMatrix) -> f64 {
    hermitian_eigenvalues(k)
        .iter()
        .zip(initial)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn transform_residual(state: &FlowState) -> f64 {
    let rotated = matmul(&matmul(&state.uc, &state.k_initial), &state.uc.adjoint());
    max_abs(&(rotated - &state.k))
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

impl FlowState {
    pub fn new(op: &FloquetOperator, config: &FlowConfig) -> Result<Self, FlowError> {
        config.validate()?;
        let layout = op.layout();
        layout.interior(config.buffer)?;
        let (k, _) = hermitize(&op.assemble());
        let (k0, _) = split_blocks(&k, &layout);
        let initial_spectrum = hermitian_eigenvalues(&k);
        let mut state = Self {
            l: 0.0,
            uc: identity(k.nrows()),
            layout,
            omega: op.omega,
            generator: config.generator,
            diagnostics: Vec::new(),
            accepted_steps: 0,
            rejected_steps: 0,
            next_step: config.initial_step,
            converged: false,
            k0_norm: frobenius(&k0),
            k_initial: k.clone(),
            initial_spectrum,
            rate: None,
            nonlinear: None,
            stiffness: Stiffness::new(&layout, op.omega),
            k,
        };
        state.record(config, true);
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn offdiag_norm(&self) -> f64 {
        offdiag_norm(&self.k, &self.layout)
    }

    /// `‖𝒦_int‖_F / ‖𝒦₀‖_F` (absolute norm when `𝒦₀` vanishes).
    pub fn relative_offdiag(&self) -> f64 {
        let off = self.offdiag_norm();
        if self.k0_norm > 0.0 {
            off / self.k0_norm
        } else {
            off
        }
    }

    pub fn initial_spectrum(&self) -> &[f64] {
        &self.initial_spectrum
    }

    pub fn spectral_drift(&self) -> f64 {
        spectral_drift(&self.initial_spectrum, &self.k)
    }

    pub fn transform_residual(&self) -> f64 {
        transform_residual(self)
    }

    pub fn max_s_deviation(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.s_deviation).fold(0.0, f64::max)
    }

    pub fn max_spectral_drift(&self) -> f64 {
        self.diagnostics
            .iter()
            .filter_map(|d| d.spectral_drift)
            .fold(0.0, f64::max)
    }

    fn record(&mut self, config: &FlowConfig, full: bool) {
        let full = full || self.accepted_steps.is_multiple_of(config.drift_stride);
        let diag = FlowDiagnostic {
            l: self.l,
            offdiag_norm: self.offdiag_norm(),
            spectral_drift: full.then(|| self.spectral_drift()),
            s_deviation: s_deviation(&self.k, &self.layout, self.omega, config.buffer),
            transform_residual: full.then(|| transform_residual(self)),
        };
        self.diagnostics.push(diag);
    }

    fn has_converged(&self, config: &FlowConfig) -> bool {
        self.relative_offdiag() <= config.convergence_tol
    }
}

/// Elementwise structure of the linear part `Λ ⊙ 𝒦`.
#[derive(Debug, Clone)]
struct Stiffness {
    /// `|m − m'|` for every entry, column-major.
    distance: Vec<usize>,
    /// `(ωd)²` indexed by `d`.
    rate: Vec<f64>,
}

impl Stiffness {
    fn new(layout: &HarmonicLayout, omega: f64) -> Self {
        let m = harmonic_index(layout);
        let mut distance = Vec::with_capacity(m.len() * m.len());
        for &mc in &m {
            for &mr in &m {
                distance.push((mr - mc).unsigned_abs() as usize);
            }
        }
        let rate = (0..=2 * layout.cutoff).map(|d| (omega * d as f64).powi(2)).collect();
        Self { distance, rate }
    }

    /// `φ_0, …, φ_4` at `−τ(ωd)²` for every `d`.
    fn phi(&self, tau: f64) -> Vec<[f64; 5]> {
        self.rate.iter().map(|r| phi_functions(-tau * r)).collect()
    }

    /// `Σ_t w_t(d) X_t` entrywise.
    fn combine(&self, terms: &[(&CMatrix, &[f64])]) -> CMatrix {
        let (rows, cols) = terms[0].0.shape();
        let mut out = CMatrix::zeros(rows, cols);
        for (x, w) in terms {
            for ((o, x), &d) in out.as_mut_slice().iter_mut().zip(x.as_slice()).zip(&self.distance) {
                *o += x * w[d];
            }
        }
        out
    }

    /// `f ← f − Λ ⊙ k`.
    fn remove_linear(&self, f: &mut CMatrix, k: &CMatrix) {
        for ((f, k), &d) in f.as_mut_slice().iter_mut().zip(k.as_slice()).zip(&self.distance) {
            *f += k * self.rate[d];
        }
    }
}

/// `φ_k(z) = Σ_j z^j/(j+k)!` for `k = 0..5`.
pub fn phi_functions(z: f64) -> [f64; 5] {
    let mut p = [0.0; 5];
    if z.abs() < 1.0 {
        let mut inv_fact = 1.0;
        for (k, pk) in p.iter_mut().enumerate() {
            if k > 0 {
                inv_fact /= k as f64;
            }
            let mut term = inv_fact;
            for j in 0..30 {
                *pk += term;
                term *= z / (j + k + 1) as f64;
            }
        }
    } else {
        p[0] = z.exp();
        let mut inv_fact = 1.0;
        for k in 1..5 {
            p[k] = (p[k - 1] - inv_fact) / z;
            inv_fact /= k as f64;
        }
    }
    p
}

fn column(table: &[[f64; 5]], f: impl Fn(&[f64; 5]) -> f64) -> Vec<f64> {
    table.iter().map(f).collect()
}

/// One Krogstad ETDRK4 step of size `h` for `𝒦' = Λ ⊙ 𝒦 + N(𝒦)`, given
/// `nu = N(k)`.
fn krogstad(stiff: &Stiffness, k: &CMatrix, nu: &CMatrix, h: f64, n: &impl Fn(&CMatrix) -> CMatrix) -> CMatrix {
    let half = stiff.phi(0.5 * h);
    let full = stiff.phi(h);
    let e2 = column(&half, |p| p[0]);
    let a = stiff.combine(&[(k, &e2), (nu, &column(&half, |p| 0.5 * h * p[1]))]);
    let na = n(&a);
    let b = stiff.combine(&[
        (k, &e2),
        (nu, &column(&half, |p| 0.5 * h * p[1] - h * p[2])),
        (&na, &column(&half, |p| h * p[2])),
    ]);
    let nb = n(&b);
    let e = column(&full, |p| p[0]);
    let c = stiff.combine(&[
        (k, &e),
        (nu, &column(&full, |p| h * (p[1] - 2.0 * p[2]))),
        (&nb, &column(&full, |p| 2.0 * h * p[2])),
    ]);
    let nc = n(&c);
    let ab = column(&full, |p| h * (2.0 * p[2] - 4.0 * p[3]));
    stiff.combine(&[
        (k, &e),
        (nu, &column(&full, |p| h * (p[1] - 3.0 * p[2] + 4.0 * p[3]))),
        (&na, &ab),
        (&nb, &ab),
        (&nc, &column(&full, |p| h * (4.0 * p[3] - p[2]))),
    ])
}

/// Advances `state` by one accepted step, starting from a trial size `h` and
/// halving it on every rejection. Returns the step size actually taken.
pub fn flow_step(state: &mut FlowState, h: f64, config: &FlowConfig) -> Result<f64, FlowError> {
    let (h, ratio, rejected) = match config.integrator {
        Integrator::ExponentialRk4 => exponential_step(state, h, config)?,
        Integrator::DormandPrince45 => dormand_prince_step(state, h, config)?,
    };
    state.l += h;
    state.accepted_steps += 1;
    let mut grow = if ratio == 0.0 {
        5.0
    } else {
        (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
    };
    if rejected {
        grow = grow.min(1.0);
    }
    state.next_step = (h * grow).min(config.max_step);
    state.record(config, false);
    Ok(h)
}

fn underflow(state: &FlowState, h: f64, config: &FlowConfig) -> bool {
    h < 1e-14 * config.l_max.max(state.l)
}

/// Returns the accepted step, its error ratio and whether any attempt was
/// rejected.
fn exponential_step(state: &mut FlowState, h: f64, config: &FlowConfig) -> Result<(f64, f64, bool), FlowError> {
    let (kind, omega, layout) = (state.generator, state.omega, state.layout);
    let stiff = state.stiffness.clone();
    let n = |k: &CMatrix| {
        let mut f = rhs(k, kind, &layout, omega);
        stiff.remove_linear(&mut f, k);
        f
    };
    let nu = state.nonlinear.take().unwrap_or_else(|| n(&state.k));
    let mut h = h;
    let mut rejected = false;
    loop {
        if underflow(state, h, config) {
            state.nonlinear = Some(nu);
            return Err(FlowError::StepUnderflow { l: state.l, h });
        }
        let full = krogstad(&stiff, &state.k, &nu, h, &n);
        let mid = krogstad(&stiff, &state.k, &nu, 0.5 * h, &n);
        let n_mid = n(&mid);
        let half = krogstad(&stiff, &mid, &n_mid, 0.5 * h, &n);
        let diff = &half - &full;
        let ratio = frobenius(&diff) / 15.0 / config.step_tol;
        if ratio > 1.0 || !ratio.is_finite() {
            state.rejected_steps += 1;
            rejected = true;
            h *= 0.5;
            continue;
        }
        let (k_new, _) = hermitize(&scaled_sum(&[(&half, 1.0), (&diff, 1.0 / 15.0)]));
        let n_new = n(&k_new);
        let exponent = exponential_transform(
            &stiff,
            config.transform,
            (kind, &layout, omega),
            [&state.k, &nu, &n_mid, &n_new],
            h,
        );
        state.uc = matmul(&expm(&exponent), &state.uc);
        state.k = k_new;
        state.nonlinear = Some(n_new);
        state.rate = None;
        return Ok((h, ratio, rejected));
    }
}

/// Magnus exponent for `𝒰_c` over one exponential step. `N` along the step
/// is the quadratic through its values at `0, h/2, h`, which makes the
/// dense output of `𝒦` exact for that forcing.
fn exponential_transform(
    stiff: &Stiffness,
    scheme: TransformScheme,
    (kind, layout, omega): (GeneratorKind, &HarmonicLayout, f64),
    [k, n0, n_mid, n1]: [&CMatrix; 4],
    h: f64,
) -> CMatrix {
    let c2 = scaled_sum(&[(n1, 2.0 / (h * h)), (n_mid, -4.0 / (h * h)), (n0, 2.0 / (h * h))]);
    let c1 = scaled_sum(&[(n1, 1.0 / h), (n0, -1.0 / h), (&c2, -h)]);
    let dense = |tau: f64| {
        let p = stiff.phi(tau);
        stiff.combine(&[
            (k, &column(&p, |p| p[0])),
            (n0, &column(&p, |p| tau * p[1])),
            (&c1, &column(&p, |p| tau * tau * p[2])),
            (&c2, &column(&p, |p| 2.0 * tau.powi(3) * p[3])),
        ])
    };
    let generator = |k: &CMatrix| make_generator(k, kind, layout, omega);
    if scheme == TransformScheme::Midpoint {
        return generator(&dense(0.5 * h)) * crate::linalg::ONE.scale(h);
    }
    let s3 = 3f64.sqrt() / 6.0;
    let a1 = generator(&dense((0.5 - s3) * h));
    let a2 = generator(&dense((0.5 + s3) * h));
    let first = match kind {
        GeneratorKind::DCommutator => {
            let p = stiff.phi(h);
            let integral = stiff.combine(&[
                (k, &column(&p, |p| h * p[1])),
                (n0, &column(&p, |p| h * h * p[2])),
                (&c1, &column(&p, |p| h.powi(3) * p[3])),
                (&c2, &column(&p, |p| 2.0 * h.powi(4) * p[4])),
            ]);
            generator(&integral)
        }
        GeneratorKind::Canonical => scaled_sum(&[(&a1, 0.5 * h), (&a2, 0.5 * h)]),
    };
    // [A₁, A₂] = P − P† for antihermitian factors
    let p = matmul(&a1, &a2);
    let w = -s3 * 0.5 * h * h;
    antihermitize(&scaled_sum(&[(&first, 1.0), (&p, w), (&p.adjoint(), -w)]))
}

fn dormand_prince_step(state: &mut FlowState, h: f64, config: &FlowConfig) -> Result<(f64, f64, bool), FlowError> {
    let kind = state.generator;
    let omega = state.omega;
    let layout = state.layout;
    let f = |k: &CMatrix| rhs(k, kind, &layout, omega);
    let k1 = state.rate.take().unwrap_or_else(|| f(&state.k));
    let mut h = h;
    let mut rejected = false;
    loop {
        if underflow(state, h, config) {
            state.rate = Some(k1);
            return Err(FlowError::StepUnderflow { l: state.l, h });
        }
        let mut stages: Vec<CMatrix> = Vec::with_capacity(7);
        stages.push(k1.clone());
        for a in A.iter().take(5) {
            let mut y = state.k.clone();
            for (s, &coeff) in stages.iter().zip(a.iter()) {
                if coeff != 0.0 {
                    y += s * crate::linalg::ONE.scale(h * coeff);
                }
            }
            stages.push(f(&y));
        }
        let mut y_new = state.k.clone();
        for (s, &coeff) in stages.iter().zip(A[5].iter()) {
            if coeff != 0.0 {
                y_new += s * crate::linalg::ONE.scale(h * coeff);
            }
        }
        let k7 = f(&y_new);
        stages.push(k7);
        let mut err = CMatrix::zeros(y_new.nrows(), y_new.ncols());
        for (s, &e) in stages.iter().zip(E.iter()) {
            if e != 0.0 {
                err += s * crate::linalg::ONE.scale(h * e);
            }
        }
        let ratio = frobenius(&err) / config.step_tol;
        if ratio > 1.0 || !ratio.is_finite() {
            state.rejected_steps += 1;
            rejected = true;
            h *= 0.5;
            continue;
        }

        let k7 = stages.pop().expect("seven stages");
        state.uc = match config.transform {
            TransformScheme::Midpoint => {
                let mid = scaled_sum(&[(&state.k, 0.5), (&y_new, 0.5)]);
                let eta = make_generator(&mid, kind, &layout, omega);
                matmul(&expm(&(eta * crate::linalg::ONE.scale(h))), &state.uc)
            }
            TransformScheme::Magnus4 => {
                let s3 = 3f64.sqrt() / 6.0;
                let eta: Vec<CMatrix> = [0.5 - s3, 0.5 + s3]
                    .iter()
                    .map(|&t| {
                        let k = hermite(&state.k, &stages[0], &y_new, &k7, h, t);
                        make_generator(&k, kind, &layout, omega)
                    })
                    .collect();
                // Ω = h/2 (η₁ + η₂) + (√3/12) h² [η₂, η₁]
                let p = matmul(&eta[1], &eta[0]);
                let omega_m = scaled_sum(&[
                    (&eta[0], 0.5 * h),
                    (&eta[1], 0.5 * h),
                    (&p, s3 * 0.5 * h * h),
                    (&p.adjoint(), -s3 * 0.5 * h * h),
                ]);
                matmul(&expm(&antihermitize(&omega_m)), &state.uc)
            }
        };
        let (y_new, _) = hermitize(&y_new);
        state.k = y_new;
        state.rate = Some(k7);
        state.nonlinear = None;
        return Ok((h, ratio, rejected));
    }
}

fn scaled_sum(terms: &[(&CMatrix, f64)]) -> CMatrix {
    let mut out = terms[0].0 * crate::linalg::ONE.scale(terms[0].1);
    for (m, w) in &terms[1..] {
        out += *m * crate::linalg::ONE.scale(*w);
    }
    out
}

/// Cubic Hermite interpolant of `𝒦` at `l + t h` from values and slopes at
/// both ends of the step.
fn hermite(k0: &CMatrix, f0: &CMatrix, k1: &CMatrix, f1: &CMatrix, h: f64, t: f64) -> CMatrix {
    let (t2, t3) = (t * t, t * t * t);
    scaled_sum(&[
        (k0, 2.0 * t3 - 3.0 * t2 + 1.0),
        (f0, h * (t3 - 2.0 * t2 + t)),
        (k1, -2.0 * t3 + 3.0 * t2),
        (f1, h * (t3 - t2)),
    ])
}

/// Integrates until `‖𝒦_int‖_F ≤ convergence_tol·‖𝒦₀‖_F` or `l = l_max`.
pub fn run_flow(op: &FloquetOperator, config: &FlowConfig) -> Result<FlowOutcome, FlowError> {
    let mut state = FlowState::new(op, config)?;
    while !state.has_converged(config) && state.l < config.l_max && state.accepted_steps < config.max_steps {
        let h = state.next_step.min(config.l_max - state.l);
        flow_step(&mut state, h, config)?;
    }
    if state.accepted_steps > 0 && state.diagnostics.last().is_some_and(|d| d.spectral_drift.is_none()) {
        let drift = spectral_drift(&state.initial_spectrum, &state.k);
        let residual = transform_residual(&state);
        let last = state.diagnostics.last_mut().expect("initial diagnostic recorded");
        last.spectral_drift = Some(drift);
        last.transform_residual = Some(residual);
    }
    state.converged = state.has_converged(config);
    Ok(if state.converged {
        FlowOutcome::Converged(state)
    } else {
        FlowOutcome::NotConverged(state)
    })
}

/// Reads `H_eff = U_c(0)† H_c U_c(0)` off a flowed state.
///
/// `H_c` is the interior average of the `d = 0` blocks of `𝒦` with the
/// `ωm` shift removed; `U_c(0) = Σ_d` of the interior-averaged blocks of
/// `𝒰_c`.
pub fn extract_effective(
    state: &FlowState,
    buffer: usize,
    accept_unconverged: bool,
) -> Result<EffectiveHamiltonian, FlowError> {
    if !state.converged && !accept_unconverged {
        return Err(FlowError::NotConverged(state.relative_offdiag()));
    }
    let kc = extract_harmonic_components(&state.k, state.layout, buffer, state.omega)?;
    let uc = extract_harmonic_components(&state.uc, state.layout, buffer, 0.0)?;
    let h_c = kc
        .components
        .get(&0)
        .cloned()
        .unwrap_or_else(|| CMatrix::zeros(state.dim(), state.dim()));
    let u0 = uc.sum();
    let defect = unitarity_defect(&u0);
    if defect > 1e-6 {
        return Err(FlowError::UnitarityDefect(defect));
    }
    let h = matmul(&matmul(&u0.adjoint(), &h_c), &u0);
    Ok(EffectiveHamiltonian::new(&h, Method::Flow)
        .with("omega", state.omega)
        .with("cutoff", state.layout.cutoff as f64)
        .with("buffer", buffer as f64)
        .with("l_end", state.l)
        .with("converged", if state.converged { 1.0 } else { 0.0 })
        .with("relative_offdiag", state.relative_offdiag())
        .with("u0_unitarity_defect", defect)
        .with("k_block_spread", kc.spread)
        .with("u_block_spread", uc.spread)
        .with("accepted_steps", state.accepted_steps as f64)
        .with("rejected_steps", state.rejected_steps as f64))
}
