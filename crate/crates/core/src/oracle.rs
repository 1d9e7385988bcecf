//! Reference results from direct time-ordered propagation.
//!
//! The one-period propagator `U_T` is built as a product of short-time
//! exponentials and refined by step doubling. Its principal logarithm gives
//! the exact effective Hamiltonian, against which every approximate route is
//! compared.

use num_complex::Complex64;
use thiserror::Error;

use crate::effective::{EffectiveHamiltonian, Method};
use crate::fock::FockBasis;
use crate::linalg::{
    diag_conjugate, hermitian_eigen, hermiticity_defect, identity, matmul, max_abs, normal_eigen, unitarity_defect,
    unitary_step, CMatrix,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("at least 64 steps per period are required, got {0}")]
    TooFewSteps(usize),
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("sampler returned a non-Hermitian matrix at t = {t} (defect {defect:.3e})")]
    NonHermitianSample { t: f64, defect: f64 },
    #[error("step doubling did not reach {target:.1e} by {steps} steps (last change {change:.3e})")]
    NotConverged { steps: usize, change: f64, target: f64 },
    #[error("propagator unitarity defect {0:.3e} exceeds 1e-9")]
    NotUnitary(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("initial state norm deviates from 1 by {0:.3e}")]
    NotNormalized(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// `exp(-i h H(t + h/2))` per step, second order.
    Midpoint,
    /// Two exponentials per step at the Gauss–Legendre nodes, fourth order.
    CommutatorFreeMagnus4,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Midpoint => "midpoint_exponential",
            Scheme::CommutatorFreeMagnus4 => "commutator_free_magnus_4",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropagatorResult {
    pub u_t: CMatrix,
    pub period: f64,
    pub steps: usize,
    pub scheme: Scheme,
    pub unitarity_defect: f64,
    /// `‖U_T(s) − U_T(s/2)‖_max` for the accepted `s`.
    pub doubling_change: f64,
}

pub const DOUBLING_TOL: f64 = 1e-10;
pub const MAX_STEPS: usize = 1 << 22;
pub const SAMPLE_HERMITICITY_TOL: f64 = 1e-12;

fn sample(sampler: &dyn Fn(f64) -> CMatrix, t: f64) -> Result<CMatrix, OracleError> {
    let h = sampler(t);
    let defect = hermiticity_defect(&h);
    if defect > SAMPLE_HERMITICITY_TOL {
        return Err(OracleError::NonHermitianSample { t, defect });
    }
    Ok(h)
}

/// Ordered product of `steps` one-step propagators over `[0, period]`.
pub fn propagate_fixed(
    sampler: &dyn Fn(f64) -> CMatrix,
    period: f64,
    steps: usize,
    scheme: Scheme,
) -> Result<CMatrix, OracleError> {
    if !(period.is_finite() && period > 0.0) {
        return Err(OracleError::BadPeriod(period));
    }
    let h = period / steps as f64;
    let dim = sampler(0.0).nrows();
    let mut u = identity(dim);
    let s3 = 3f64.sqrt() / 6.0;
    let (c1, c2) = (0.5 - s3, 0.5 + s3);
    let (a1, a2) = (0.25 + s3, 0.25 - s3);
    for k in 0..steps {
        let t0 = k as f64 * h;
        u = match scheme {
            Scheme::Midpoint => {
                let hm = sample(sampler, t0 + 0.5 * h)?;
                matmul(&unitary_step(&hm, h), &u)
            }
            Scheme::CommutatorFreeMagnus4 => {
                let h1 = sample(sampler, t0 + c1 * h)?;
                let h2 = sample(sampler, t0 + c2 * h)?;
                let first = unitary_step(&(&h1 * Complex64::from(a1) + &h2 * Complex64::from(a2)), h);
                let second = unitary_step(&(&h1 * Complex64::from(a2) + &h2 * Complex64::from(a1)), h);
                matmul(&second, &matmul(&first, &u))
            }
        };
    }
    Ok(u)
}

/// Propagates over one period, doubling the step count from `steps` until
/// successive results differ by at most [`DOUBLING_TOL`].
pub fn propagate_period(
    sampler: &dyn Fn(f64) -> CMatrix,
    period: f64,
    steps: usize,
    scheme: Scheme,
) -> Result<PropagatorResult, OracleError> {
    propagate_period_with(sampler, period, steps, scheme, DOUBLING_TOL, MAX_STEPS)
}

pub fn propagate_period_with(
    sampler: &dyn Fn(f64) -> CMatrix,
    period: f64,
    steps: usize,
    scheme: Scheme,
    tol: f64,
    max_steps: usize,
) -> Result<PropagatorResult, OracleError> {
    if steps < 64 {
        return Err(OracleError::TooFewSteps(steps));
    }
    let mut steps = steps;
    let mut prev = propagate_fixed(sampler, period, steps, scheme)?;
    let mut change = f64::INFINITY;
    while steps * 2 <= max_steps {
        steps *= 2;
        let next = propagate_fixed(sampler, period, steps, scheme)?;
        change = max_abs(&(&next - &prev));
        if change <= tol {
            return Ok(PropagatorResult {
                unitarity_defect: unitarity_defect(&next),
                u_t: next,
                period,
                steps,
                scheme,
                doubling_change: change,
            });
        }
        prev = next;
    }
    Err(OracleError::NotConverged {
        steps,
        change,
        target: tol,
    })
}

#[derive(Debug, Clone)]
pub struct MonodromyEffective {
    pub h_eff: CMatrix,
    /// `θ_k / T` with `θ_k ∈ (−π, π]`, in the order of `eigenvectors` columns.
    pub quasienergies: Vec<f64>,
    pub eigenvectors: CMatrix,
    pub period: f64,
    /// Eigenphases within 1e-6 of the branch cut at `±π`.
    pub branch_cut_levels: Vec<usize>,
}

pub const BRANCH_CUT_TOL: f64 = 1e-6;

impl MonodromyEffective {
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    pub fn near_branch_cut(&self) -> bool {
        !self.branch_cut_levels.is_empty()
    }

    pub fn to_effective(&self) -> EffectiveHamiltonian {
        EffectiveHamiltonian::new(&self.h_eff, Method::Monodromy)
            .with("period", self.period)
            .with("branch_cut_levels", self.branch_cut_levels.len() as f64)
    }

    /// `exp(−i H_eff T)`.
    pub fn reconstruct(&self) -> CMatrix {
        let phases: Vec<Complex64> = self
            .quasienergies
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * self.period))
            .collect();
        diag_conjugate(&self.eigenvectors, &phases)
    }
}

/// Principal logarithm of `U_T = V diag(e^{−iθ_k}) V†`.
pub fn effective_from_monodromy(result: &PropagatorResult) -> Result<MonodromyEffective, OracleError> {
    effective_from_unitary(&result.u_t, result.period)
}

pub fn effective_from_unitary(u_t: &CMatrix, period: f64) -> Result<MonodromyEffective, OracleError> {
    if !(period.is_finite() && period > 0.0) {
        return Err(OracleError::BadPeriod(period));
    }
    let defect = unitarity_defect(u_t);
    if defect > 1e-9 {
        return Err(OracleError::NotUnitary(defect));
    }
    let (lambdas, v) = normal_eigen(u_t);
    let mut branch_cut_levels = Vec::new();
    let quasienergies: Vec<f64> = lambdas
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let mut theta = -l.arg();
            if theta <= -std::f64::consts::PI {
                theta += 2.0 * std::f64::consts::PI;
            }
            if std::f64::consts::PI - theta.abs() < BRANCH_CUT_TOL {
                branch_cut_levels.push(k);
            }
            theta / period
        })
        .collect();
    let diag: Vec<Complex64> = quasienergies.iter().map(|&e| Complex64::from(e)).collect();
    let (h_eff, _) = crate::linalg::hermitize(&diag_conjugate(&v, &diag));
    Ok(MonodromyEffective {
        h_eff,
        quasienergies,
        eigenvectors: v,
        period,
        branch_cut_levels,
    })
}

/// Maps `e` into `(−ω/2, ω/2]`.
pub fn fold(e: f64, omega: f64) -> f64 {
    let mut f = e - omega * (e / omega).round();
    if f <= -0.5 * omega {
        f += omega;
    } else if f > 0.5 * omega {
        f -= omega;
    }
    f
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub method: Method,
    /// `(level of A, level of B)` in the order of B's quasienergies.
    pub pairs: Vec<(usize, usize)>,
    pub deltas: Vec<f64>,
    pub max_delta: f64,
    pub mean_delta: f64,
    /// Largest principal angle between matched subspaces of degenerate
    /// clusters in B; zero when every cluster is a single level.
    pub max_principal_angle: f64,
    /// `‖A − H_eff_exact‖_F`.
    pub operator_distance: f64,
}

pub const CLUSTER_TOL: f64 = 1e-7;

/// Matches levels of `a` to quasienergies of `b` by eigenvector overlap and
/// reports folded energy differences.
pub fn compare_effective(
    a: &EffectiveHamiltonian,
    b: &MonodromyEffective,
    omega: f64,
) -> Result<SpectralReport, OracleError> {
    let n = a.dim();
    if n != b.eigenvectors.nrows() {
        return Err(OracleError::DimensionMismatch(n, b.eigenvectors.nrows()));
    }
    let (ea, va) = hermitian_eigen(&a.matrix);
    let overlap = matmul(&va.adjoint(), &b.eigenvectors).map(|z| z.norm_sqr());

    let mut order: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    order.sort_by(|&(i, j), &(k, l)| {
        overlap[(k, l)]
            .partial_cmp(&overlap[(i, j)])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((i, j).cmp(&(k, l)))
    });
    let mut a_of_b = vec![usize::MAX; n];
    let mut used_a = vec![false; n];
    let mut left = n;
    for (i, j) in order {
        if left == 0 {
            break;
        }
        if !used_a[i] && a_of_b[j] == usize::MAX {
            used_a[i] = true;
            a_of_b[j] = i;
            left -= 1;
        }
    }

    let pairs: Vec<(usize, usize)> = (0..n).map(|j| (a_of_b[j], j)).collect();
    let deltas: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| fold(fold(ea[i], omega) - fold(b.quasienergies[j], omega), omega).abs())
        .collect();
    let max_delta = deltas.iter().cloned().fold(0.0, f64::max);
    let mean_delta = if n == 0 {
        0.0
    } else {
        deltas.iter().sum::<f64>() / n as f64
    };

    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&x, &y| fold(b.quasienergies[x], omega).total_cmp(&fold(b.quasienergies[y], omega)));
    let mut max_angle = 0.0_f64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n
            && fold(b.quasienergies[sorted[end]], omega) - fold(b.quasienergies[sorted[end - 1]], omega) < CLUSTER_TOL
        {
            end += 1;
        }
        if end - start > 1 {
            let cluster = &sorted[start..end];
            let vb = b.eigenvectors.select_columns(cluster);
            let matched: Vec<usize> = cluster.iter().map(|&j| a_of_b[j]).collect();
            let vsel = va.select_columns(&matched);
            let s = matmul(&vsel.adjoint(), &vb).singular_values();
            let smin = s.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
            max_angle = max_angle.max(smin.acos());
        }
        start = end;
    }

    Ok(SpectralReport {
        method: a.method,
        pairs,
        deltas,
        max_delta,
        mean_delta,
        max_principal_angle: max_angle,
        operator_distance: crate::linalg::frobenius(&(&a.matrix - &b.h_eff)),
    })
}

#[derive(Debug, Clone, Default)]
pub struct StroboscopicSeries {
    /// `|⟨ψ₀|ψ(nT)⟩|²`.
    pub return_probability: Vec<f64>,
    /// `⟨n_i⟩` per period, when a basis was supplied.
    pub populations: Vec<Vec<f64>>,
    /// Variance of the single-particle density profile in site units.
    pub position_variance: Vec<f64>,
}

/// Applies `U_T` repeatedly, recording observables at `t = 0, T, …, n_periods·T`.
pub fn stroboscopic_evolve(
    u_t: &CMatrix,
    psi0: &[Complex64],
    n_periods: usize,
    basis: Option<&FockBasis>,
) -> Result<StroboscopicSeries, OracleError> {
    let dim = u_t.nrows();
    if psi0.len() != dim {
        return Err(OracleError::DimensionMismatch(dim, psi0.len()));
    }
    if let Some(b) = basis {
        if b.dim() != dim {
            return Err(OracleError::DimensionMismatch(dim, b.dim()));
        }
    }
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(OracleError::NotNormalized((norm - 1.0).abs()));
    }
    let start = nalgebra::DVector::from_column_slice(psi0);
    let mut psi = start.clone();
    let mut out = StroboscopicSeries::default();
    for step in 0..=n_periods {
        if step > 0 {
            psi = u_t * &psi;
        }
        out.return_probability.push(start.dotc(&psi).norm_sqr());
        if let Some(b) = basis {
            let mut pops = vec![0.0; b.sites()];
            for (k, z) in psi.iter().enumerate() {
                let w = z.norm_sqr();
                for (i, &n) in b.state(k).iter().enumerate() {
                    pops[i] += w * n as f64;
                }
            }
            let total: f64 = pops.iter().sum();
            let mean = pops.iter().enumerate().map(|(i, p)| i as f64 * p).sum::<f64>() / total;
            let second = pops.iter().enumerate().map(|(i, p)| (i * i) as f64 * p).sum::<f64>() / total;
            out.position_variance.push(second - mean * mean);
            out.populations.push(pops);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm, I};
    use crate::scenarios::DrivenTwoLevel;
    use std::f64::consts::PI;

    fn c(x: f64) -> Complex64 {
        Complex64::from(x)
    }

    fn static_h() -> CMatrix {
        CMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.3),
                c(0.1),
                Complex64::new(0.0, 0.2),
                c(0.1),
                c(-0.4),
                c(0.05),
                Complex64::new(0.0, -0.2),
                c(0.05),
                c(0.2),
            ],
        )
    }

    #[test]
    fn static_propagator_matches_exponential() {
        let h = static_h();
        let period = 2.0;
        let exact = expm(&(&h * (-I * period)));
        for scheme in [Scheme::Midpoint, Scheme::CommutatorFreeMagnus4] {
            let r = propagate_period(&|_| h.clone(), period, 64, scheme).unwrap();
            assert!(max_abs(&(&r.u_t - &exact)) < 1e-12);
            assert_eq!(r.steps, 128);
        }
    }

    #[test]
    fn rejects_short_grids_and_non_hermitian_samplers() {
        let h = static_h();
        assert_eq!(
            propagate_period(&|_| h.clone(), 1.0, 32, Scheme::Midpoint).unwrap_err(),
            OracleError::TooFewSteps(32)
        );
        let bad = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        assert!(matches!(
            propagate_period(&|_| bad.clone(), 1.0, 64, Scheme::Midpoint),
            Err(OracleError::NonHermitianSample { .. })
        ));
    }

    #[test]
    fn step_cap_reports_non_convergence() {
        let d = DrivenTwoLevel::new(1.0, 2.0, 10.0);
        let err = propagate_period_with(&d.sampler(), d.period(), 64, Scheme::Midpoint, 1e-10, 256).unwrap_err();
        assert!(matches!(err, OracleError::NotConverged { steps: 256, .. }));
    }

    #[test]
    fn schemes_agree_on_two_level() {
        let d = DrivenTwoLevel::new(1.0, 2.0, 10.0);
        let s = d.sampler();
        let mid = propagate_fixed(&s, d.period(), 1 << 14, Scheme::Midpoint).unwrap();
        let cf4 = propagate_fixed(&s, d.period(), 1 << 9, Scheme::CommutatorFreeMagnus4).unwrap();
        assert!(max_abs(&(&mid - &cf4)) < 1e-9, "{}", max_abs(&(&mid - &cf4)));
    }

    #[test]
    fn fourth_order_convergence_rate() {
        let d = DrivenTwoLevel::new(1.0, 2.0, 10.0);
        let s = d.sampler();
        let reference = propagate_fixed(&s, d.period(), 4096, Scheme::CommutatorFreeMagnus4).unwrap();
        let e1 = max_abs(&(propagate_fixed(&s, d.period(), 64, Scheme::CommutatorFreeMagnus4).unwrap() - &reference));
        let e2 = max_abs(&(propagate_fixed(&s, d.period(), 128, Scheme::CommutatorFreeMagnus4).unwrap() - &reference));
        let rate = (e1 / e2).log2();
        assert!(rate > 3.7 && rate < 4.3, "rate {rate}");
    }

    #[test]
    fn identity_gives_zero_hamiltonian() {
        let m = effective_from_unitary(&identity(4), 0.5).unwrap();
        assert_eq!(max_abs(&m.h_eff), 0.0);
        assert!(!m.near_branch_cut());
    }

    #[test]
    fn principal_log_recovers_small_static_h() {
        let h = static_h();
        let period = 1.5;
        let u = expm(&(&h * (-I * period)));
        let m = effective_from_unitary(&u, period).unwrap();
        assert!(max_abs(&(&m.h_eff - &h)) < 1e-12);
        assert!(max_abs(&(m.reconstruct() - &u)) < 1e-12);
    }

    #[test]
    fn large_energy_folds_by_omega() {
        let omega = 3.0;
        let period = 2.0 * PI / omega;
        let e = 0.7 * omega;
        let u = CMatrix::from_element(1, 1, Complex64::from_polar(1.0, -e * period));
        let m = effective_from_unitary(&u, period).unwrap();
        assert!((m.h_eff[(0, 0)].re - (e - omega)).abs() < 1e-12);
        assert!((m.quasienergies[0] - (e - omega)).abs() < 1e-12);
    }

    #[test]
    fn branch_cut_is_flagged() {
        let u = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-1.0), c(1.0)]));
        let m = effective_from_unitary(&u, 1.0).unwrap();
        assert_eq!(m.branch_cut_levels, vec![0]);
        assert!((m.quasienergies[0] - PI).abs() < 1e-15);
    }

    #[test]
    fn folding_is_invariant_under_projector_shift() {
        let h = static_h();
        let omega = 4.0;
        let period = 2.0 * PI / omega;
        let (_, v) = hermitian_eigen(&h);
        let col = v.column(1).clone_owned();
        let projector = &col * col.adjoint();
        let u1 = expm(&(&h * (-I * period)));
        let u2 = expm(&((&h + projector * c(omega)) * (-I * period)));
        let m1 = effective_from_unitary(&u1, period).unwrap();
        let m2 = effective_from_unitary(&u2, period).unwrap();
        assert!(max_abs(&(&m1.h_eff - &m2.h_eff)) < 1e-11);
    }

    #[test]
    fn fold_range() {
        assert_eq!(fold(0.5, 1.0), 0.5);
        assert_eq!(fold(-0.5, 1.0), 0.5);
        assert!((fold(0.7, 1.0) + 0.3).abs() < 1e-15);
        assert!((fold(-2.2, 1.0) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn self_comparison_is_exact() {
        let h = static_h();
        let period = 1.0;
        let m = effective_from_unitary(&expm(&(&h * (-I * period))), period).unwrap();
        let a = EffectiveHamiltonian::new(&m.h_eff, Method::Flow);
        let r = compare_effective(&a, &m, 2.0 * PI / period).unwrap();
        assert!(r.max_delta < 1e-13);
        assert!(r.max_principal_angle < 1e-7);
        let wrong = EffectiveHamiltonian::new(&identity(2), Method::Flow);
        assert!(compare_effective(&wrong, &m, 1.0).is_err());
    }

    #[test]
    fn matching_follows_vectors_not_order() {
        // A has the levels of B but one is shifted past its neighbour
        let u = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::from_polar(1.0, -0.1),
            Complex64::from_polar(1.0, -0.2),
        ]));
        let m = effective_from_unitary(&u, 1.0).unwrap();
        let a = EffectiveHamiltonian::new(
            &CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.25), c(0.2)])),
            Method::Flow,
        );
        let r = compare_effective(&a, &m, 2.0 * PI).unwrap();
        assert!((r.max_delta - 0.15).abs() < 1e-12);
        assert!((r.mean_delta - 0.075).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cluster_uses_subspace_angle() {
        let u = identity(3);
        let m = effective_from_unitary(&u, 1.0).unwrap();
        let a = EffectiveHamiltonian::new(&CMatrix::zeros(3, 3), Method::Flow);
        let r = compare_effective(&a, &m, 2.0 * PI).unwrap();
        assert_eq!(r.max_delta, 0.0);
        assert!(r.max_principal_angle < 1e-7);
    }

    #[test]
    fn stroboscopic_trivial_cases() {
        let psi0 = vec![c(0.6), Complex64::new(0.0, 0.8)];
        let s = stroboscopic_evolve(&identity(2), &psi0, 0, None).unwrap();
        assert_eq!(s.return_probability.len(), 1);
        assert!((s.return_probability[0] - 1.0).abs() < 1e-15);
        assert!(stroboscopic_evolve(&identity(2), &[c(1.0), c(1.0)], 3, None).is_err());
        let basis = FockBasis::new(3, 1).unwrap();
        let flip = CMatrix::from_row_slice(
            3,
            3,
            &[c(0.0), c(0.0), c(1.0), c(1.0), c(0.0), c(0.0), c(0.0), c(1.0), c(0.0)],
        );
        let s = stroboscopic_evolve(&flip, &[c(1.0), c(0.0), c(0.0)], 3, Some(&basis)).unwrap();
        assert_eq!(s.return_probability, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.position_variance, vec![0.0; 4]);
        assert_eq!(s.populations[0].iter().sum::<f64>(), 1.0);
        assert!(hermiticity_defect(&flip) > 0.0);
    }
}
