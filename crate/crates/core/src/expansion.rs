//! Closed-form high-frequency results for the shaken Bose-Hubbard chain.
//!
//! With `x = K/ω`:
//!
//! * `H⁽⁰⁾ = J J_0(x) Σ (c_i† c_{i+1} + h.c.) + U Σ n_i (n_i - 1)`
//! * `H⁽¹⁾ = 2 β(x) (U J / ω) Σ c_i† (n_i - n_{i+1}) c_{i+1} + h.c.`,
//!   `β(x) = 2 Σ_{m≥1} J_{2m-1}(x) / (2m - 1)`
//! * large-`U` series `H⁽⁰⁾ - Σ_n J (U/ω)^n (β_n⁺ C_n⁺ + β_n⁻ C_n⁻)`
//! * large-`J` series `H⁽⁰⁾ - U Σ_n J_0(x)^{n-1} (J/ω)^n (β_n⁺ T_n⁺ + β_n⁻ T_n⁻)`
//!
//! where `β_n^±(x) = (±1)^n Σ_m J_m(x) (1 + (-1)^{m-n}) / m^n` and the
//! operators are nested commutators with the on-site term (`C`) or the
//! hopping term (`T`), starting from `C_1^± = T_1^± = [Σ c_i† c_{i±1}, Σ n(n-1)]`.
//!
//! Each bracketed series term is Hermitian because `(C_n⁺)† = (-1)^n C_n⁻`
//! (likewise for `T`) and `β_n⁻ = (-1)^n β_n⁺`. That relation is checked
//! numerically per order rather than assumed; an order that fails it is
//! left out of the sum and reported.

use thiserror::Error;

use crate::bessel::{bessel_j, bessel_j_table, BesselError, MAX_ORDER};
use crate::effective::{EffectiveHamiltonian, Method};
use crate::fock::LatticeOperatorSet;
use crate::linalg::{commutator, frobenius, hermiticity_defect, max_abs, CMatrix};

use num_complex::Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpansionError {
    #[error(transparent)]
    Bessel(#[from] BesselError),
    #[error("driving frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("driving ratio K/omega = {0} is not finite")]
    NonFiniteRatio(f64),
    #[error("invalid series controls: {0}")]
    Controls(&'static str),
}

/// Couplings of the shaken chain: hopping `j`, interaction `u`, drive
/// amplitude `k_drive` and frequency `omega` (all energies, ħ = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivingParams {
    pub j: f64,
    pub u: f64,
    pub k_drive: f64,
    pub omega: f64,
}

impl DrivingParams {
    pub fn new(j: f64, u: f64, k_drive: f64, omega: f64) -> Result<Self, ExpansionError> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(ExpansionError::NonPositiveFrequency(omega));
        }
        let x = k_drive / omega;
        if !x.is_finite() {
            return Err(ExpansionError::NonFiniteRatio(x));
        }
        Ok(Self { j, u, k_drive, omega })
    }

    /// Parameters with the drive given through the ratio `x = K/ω`.
    pub fn from_ratio(j: f64, u: f64, x: f64, omega: f64) -> Result<Self, ExpansionError> {
        Self::new(j, u, x * omega, omega)
    }

    /// `K/ω`.
    pub fn x(&self) -> f64 {
        self.k_drive / self.omega
    }

    pub fn j_eff(&self) -> Result<f64, ExpansionError> {
        Ok(self.j * bessel_j(0, self.x())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControls {
    /// Highest Bessel order kept in the β sums.
    pub m_max: usize,
    /// Highest order of the `U` and `J` series.
    pub n_max: usize,
    /// Bessel sums stop once a term past `m > |x|` drops below this.
    pub term_tol: f64,
}

impl Default for SeriesControls {
    fn default() -> Self {
        Self {
            m_max: MAX_ORDER as usize,
            n_max: 1,
            term_tol: 0.0,
        }
    }
}

impl SeriesControls {
    pub fn validate(&self) -> Result<(), ExpansionError> {
        if self.m_max < 1 {
            return Err(ExpansionError::Controls("m_max must be at least 1"));
        }
        if self.m_max > MAX_ORDER as usize {
            return Err(ExpansionError::Controls("m_max exceeds the Bessel order range"));
        }
        if self.n_max < 1 {
            return Err(ExpansionError::Controls("n_max must be at least 1"));
        }
        if !(self.term_tol >= 0.0) {
            return Err(ExpansionError::Controls("term_tol must be non-negative"));
        }
        Ok(())
    }

    pub fn with_order(self, n_max: usize) -> Self {
        Self { n_max, ..self }
    }
}

/// A truncated series and the magnitude of its last included term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialSum {
    pub value: f64,
    pub last_term: f64,
    pub terms: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

fn bessel_sum(
    x: f64,
    controls: &SeriesControls,
    mut term: impl FnMut(usize, f64) -> Option<f64>,
) -> Result<PartialSum, ExpansionError> {
    controls.validate()?;
    let table = bessel_j_table(controls.m_max as u32, x)?;
    let mut sum = PartialSum {
        value: 0.0,
        last_term: 0.0,
        terms: 0,
    };
    for (m, &jm) in table.iter().enumerate().skip(1) {
        let Some(t) = term(m, jm) else { continue };
        sum.value += t;
        sum.last_term = t.abs();
        sum.terms += 1;
        if (m as f64) > x.abs() && t.abs() < controls.term_tol {
            break;
        }
    }
    Ok(sum)
}

/// `β(x) = 2 Σ_{m≥1} J_{2m-1}(x) / (2m - 1)`.
pub fn beta(x: f64, controls: &SeriesControls) -> Result<PartialSum, ExpansionError> {
    bessel_sum(x, controls, |m, jm| (m % 2 == 1).then(|| 2.0 * jm / m as f64))
}

/// `β_n^±(x) = (±1)^n Σ_{m≥1} J_m(x) (1 + (-1)^{m-n}) / m^n`; only
/// `m ≡ n (mod 2)` contributes.
pub fn beta_n(n: usize, sign: Sign, x: f64, controls: &SeriesControls) -> Result<PartialSum, ExpansionError> {
    if n < 1 {
        return Err(ExpansionError::Controls("series order starts at 1"));
    }
    let prefactor = sign.factor().powi(n as i32);
    let mut s = bessel_sum(x, controls, |m, jm| {
        (m % 2 == n % 2).then(|| 2.0 * jm / (m as f64).powi(n as i32))
    })?;
    s.value *= prefactor;
    Ok(s)
}

/// `J J_0(x) hop_sym + U onsite`.
pub fn h_eff0(params: &DrivingParams, ops: &LatticeOperatorSet) -> Result<EffectiveHamiltonian, ExpansionError> {
    let m = &ops.hop_sym * Complex64::new(params.j_eff()?, 0.0) + &ops.onsite * Complex64::new(params.u, 0.0);
    Ok(tag(EffectiveHamiltonian::new(&m, Method::ExpansionOrder0), params))
}

/// `2 β(x) (U J / ω) density_hop`.
pub fn h_eff1(
    params: &DrivingParams,
    ops: &LatticeOperatorSet,
    controls: &SeriesControls,
) -> Result<CMatrix, ExpansionError> {
    let b = beta(params.x(), controls)?;
    let rate = 2.0 * b.value * params.u * params.j / params.omega;
    Ok(&ops.density_hop * Complex64::new(rate, 0.0))
}

/// `H⁽⁰⁾ + H⁽¹⁾`.
pub fn h_eff_order1(
    params: &DrivingParams,
    ops: &LatticeOperatorSet,
    controls: &SeriesControls,
) -> Result<EffectiveHamiltonian, ExpansionError> {
    let h0 = h_eff0(params, ops)?;
    let h1 = h_eff1(params, ops, controls)?;
    let b = beta(params.x(), controls)?;
    Ok(tag(
        EffectiveHamiltonian::new(&(h0.matrix + h1), Method::ExpansionOrder1),
        params,
    )
    .with("beta", b.value)
    .with("beta_last_term", b.last_term))
}

fn hop_direction(ops: &LatticeOperatorSet, sign: Sign) -> &CMatrix {
    match sign {
        Sign::Plus => &ops.hop_plus,
        Sign::Minus => &ops.hop_minus,
    }
}

/// `[C_1^±, …, C_n^±]` with `C_{k+1} = [C_k, Σ n(n-1)]`.
pub fn recursive_c(n: usize, sign: Sign, ops: &LatticeOperatorSet) -> Vec<CMatrix> {
    nested(n, hop_direction(ops, sign), &ops.onsite, &ops.onsite)
}

/// `[T_1^±, …, T_n^±]` with `T_{k+1} = [T_k, Σ (c_j† c_{j+1} + h.c.)]`.
pub fn recursive_t(n: usize, sign: Sign, ops: &LatticeOperatorSet) -> Vec<CMatrix> {
    nested(n, hop_direction(ops, sign), &ops.onsite, &ops.hop_sym)
}

fn nested(n: usize, hop: &CMatrix, first: &CMatrix, repeat: &CMatrix) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(commutator(hop, first));
    while out.len() < n {
        let next = commutator(out.last().unwrap(), repeat);
        out.push(next);
    }
    out
}

/// Per-order data of a series evaluation.
#[derive(Debug, Clone)]
pub struct SeriesTerms {
    /// `β_n⁺ X_n⁺ + β_n⁻ X_n⁻` times its scalar prefactor, one per order.
    pub terms: Vec<CMatrix>,
    /// Largest `|(X_n⁺)† - (-1)^n X_n⁻|` per order.
    pub adjoint_defects: Vec<f64>,
    /// Orders (1-based) whose term failed the Hermiticity check.
    pub excluded: Vec<usize>,
}

impl SeriesTerms {
    pub fn term_norms(&self) -> Vec<f64> {
        self.terms.iter().map(frobenius).collect()
    }
}

/// Tolerance on the relative Hermiticity defect of a single series term.
const TERM_HERMITICITY_TOL: f64 = 1e-10;

fn series_terms(
    plus: Vec<CMatrix>,
    minus: Vec<CMatrix>,
    prefactor: impl Fn(usize) -> f64,
    x: f64,
    controls: &SeriesControls,
) -> Result<SeriesTerms, ExpansionError> {
    let mut out = SeriesTerms {
        terms: Vec::new(),
        adjoint_defects: Vec::new(),
        excluded: Vec::new(),
    };
    for (k, (xp, xm)) in plus.iter().zip(minus.iter()).enumerate() {
        let n = k + 1;
        let parity = if n % 2 == 0 { 1.0 } else { -1.0 };
        out.adjoint_defects
            .push(max_abs(&(xp.adjoint() - xm * Complex64::new(parity, 0.0))));
        let bp = beta_n(n, Sign::Plus, x, controls)?.value;
        let bm = beta_n(n, Sign::Minus, x, controls)?.value;
        let term = (xp * Complex64::new(bp, 0.0) + xm * Complex64::new(bm, 0.0)) * Complex64::new(prefactor(n), 0.0);
        let scale = max_abs(&term).max(f64::MIN_POSITIVE);
        if hermiticity_defect(&term) > TERM_HERMITICITY_TOL * scale {
            out.excluded.push(n);
            out.terms.push(CMatrix::zeros(term.nrows(), term.ncols()));
        } else {
            out.terms.push(term);
        }
    }
    Ok(out)
}

/// Orders `1..=n_max` of the large-interaction series, each already
/// multiplied by `J (U/ω)^n`.
pub fn series_u_terms(
    params: &DrivingParams,
    ops: &LatticeOperatorSet,
    controls: &SeriesControls,
) -> Result<SeriesTerms, ExpansionError> {
    controls.validate()?;
    let n = controls.n_max;
    let ratio = params.u / params.omega;
    series_terms(
        recursive_c(n, Sign::Plus, ops),
        recursive_c(n, Sign::Minus, ops),
        |k| params.j * ratio.powi(k as i32),
        params.x(),
        controls,
    )
}

/// Orders `1..=n_max` of the large-tunneling series, each already
/// multiplied by `U J_0(x)^{n-1} (J/ω)^n`.
pub fn series_j_terms(
    params: &DrivingParams,
    ops: &LatticeOperatorSet,
    controls: &SeriesControls,
) -> Result<SeriesTerms, ExpansionError> {
    controls.validate()?;
    let n = controls.n_max;
    let j0 = bessel_j(0, params.x())?;
    let ratio = params.j / params.omega;
    series_terms(
        recursive_t(n, Sign::Plus, ops),
        recursive_t(n, Sign::Minus, ops),
        |k| params.u * j0.powi(k as i32 - 1) * ratio.powi(k as i32),
        params.x(),
        controls,
    )
}

fn assemble_series(
    params: &DrivingParams,
    ops: &LatticeOperatorSet,
    terms: SeriesTerms,
    method: Method,
    controls: &SeriesControls,
) -> Result<EffectiveHamiltonian, ExpansionError> {
    let mut m = h_eff0(params, ops)?.matrix;
    for t in &terms.terms {
        m -= t;
    }
    let last = terms.terms.last().map_or(0.0, frobenius);
    let worst_adjoint = terms.adjoint_defects.iter().copied().fold(0.0, f64::max);
    let mut h = tag(EffectiveHamiltonian::new(&m, method), params)
        .with("n_max", controls.n_max as f64)
        .with("last_term_norm", last)
        .with("adjoint_relation_defect", worst_adjoint)
        .with("excluded_orders", terms.excluded.len() as f64);
    for n in &terms.excluded {
        h = h.with(&format!("excluded_order_{n}"), 1.0);
    }
    Ok(h)
}

/// Large-interaction series `H⁽⁰⁾ - Σ_{n ≤ n_max} J (U/ω)^n (β_n⁺ C_n⁺ + β_n⁻ C_n⁻)`.
pub fn h_eff_series_u(
    params: &DrivingParams,
    ops: &LatticeOperatorSet,
    controls: &SeriesControls,
) -> Result<EffectiveHamiltonian, ExpansionError> {
    let terms = series_u_terms(params, ops, controls)?;
    assemble_series(params, ops, terms, Method::ExpansionSeriesU, controls)
}

/// Large-tunneling series
/// `H⁽⁰⁾ - U Σ_{n ≤ n_max} J_0(x)^{n-1} (J/ω)^n (β_n⁺ T_n⁺ + β_n⁻ T_n⁻)`.
pub fn h_eff_series_j(
    params: &DrivingParams,
    ops: &LatticeOperatorSet,
    controls: &SeriesControls,
) -> Result<EffectiveHamiltonian, ExpansionError> {
    let terms = series_j_terms(params, ops, controls)?;
    assemble_series(params, ops, terms, Method::ExpansionSeriesJ, controls)
}

fn tag(h: EffectiveHamiltonian, p: &DrivingParams) -> EffectiveHamiltonian {
    h.with("J", p.j)
        .with("U", p.u)
        .with("K", p.k_drive)
        .with("omega", p.omega)
        .with("x", p.x())
}
