use std::f64::consts::PI;

use floquet_flow::bessel::bessel_jn;
use floquet_flow::expansion::{beta, beta_n, recursive_c, SeriesControls, Sign};
use floquet_flow::floquet::build_floquet_operator;
use floquet_flow::flow::{extract_effective, run_flow, FlowConfig};
use floquet_flow::fock::{build_operators, enumerate_basis};
use floquet_flow::linalg::{hermiticity_defect, identity, max_abs, unitarity_defect};
use floquet_flow::matrix_io::{read_matrix, write_matrix};
use floquet_flow::oracle::{
    compare_effective, effective_from_unitary, propagate_period_with, Scheme, DOUBLING_TOL, MAX_STEPS,
};
use floquet_flow::scenarios::DrivenTwoLevel;
use floquet_flow::{Boundary, CMatrix};
use num_complex::Complex64;
use proptest::prelude::*;

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// `J_n(x) = (1/π) ∫₀^π cos(nθ − x sin θ) dθ` by the trapezoid rule.
fn bessel_quadrature(n: i32, x: f64) -> f64 {
    let steps = 256;
    let h = PI / steps as f64;
    let f = |t: f64| (n as f64 * t - x * t.sin()).cos();
    let interior: f64 = (1..steps).map(|k| f(k as f64 * h)).sum();
    (interior + 0.5 * (f(0.0) + f(PI))) * h / PI
}

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Open), Just(Boundary::Periodic)]
}

proptest! {
    #[test]
    fn bessel_matches_integral_representation(n in -8i32..=8, x in -20.0f64..20.0) {
        prop_assert!((bessel_jn(n, x).unwrap() - bessel_quadrature(n, x)).abs() <= 1e-12);
    }

    #[test]
    fn bessel_three_term_recurrence(n in 1i32..30, x in 0.1f64..25.0) {
        let lhs = bessel_jn(n - 1, x).unwrap() + bessel_jn(n + 1, x).unwrap();
        let rhs = 2.0 * n as f64 / x * bessel_jn(n, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn beta_is_odd_and_first_order_pair_is_antisymmetric(x in 0.0f64..12.0) {
        let c = SeriesControls::default();
        let b = beta(x, &c).unwrap().value;
        prop_assert!((beta(-x, &c).unwrap().value + b).abs() <= 1e-14);
        prop_assert!((beta_n(1, Sign::Plus, x, &c).unwrap().value - b).abs() <= 1e-12);
        prop_assert!((beta_n(1, Sign::Minus, x, &c).unwrap().value + b).abs() <= 1e-12);
    }

    #[test]
    fn lattice_operators_are_hermitian_and_sized(sites in 3usize..=6, particles in 1usize..=3, b in boundary()) {
        let basis = enumerate_basis(sites, particles).unwrap();
        prop_assert_eq!(basis.dim(), binomial(sites + particles - 1, particles));
        let ops = build_operators(&basis, b).unwrap();
        for m in [&ops.hop_sym, &ops.onsite, &ops.tilt, &ops.density_hop] {
            prop_assert!(hermiticity_defect(m) <= 1e-14);
        }
        prop_assert!(max_abs(&(ops.hop_plus.adjoint() - &ops.hop_minus)) == 0.0);
        prop_assert!(max_abs(&(&ops.hop_plus + &ops.hop_minus - &ops.hop_sym)) == 0.0);
    }

    #[test]
    fn first_nested_commutator_has_closed_form(sites in 3usize..=5, particles in 1usize..=3, b in boundary()) {
        let basis = enumerate_basis(sites, particles).unwrap();
        prop_assume!(basis.dim() <= 50);
        let ops = build_operators(&basis, b).unwrap();
        let mut expected = CMatrix::zeros(basis.dim(), basis.dim());
        for (i, j) in basis.bonds(b).unwrap() {
            let hop = basis.hop(i, j);
            expected += (basis.number(i) * &hop - &hop * basis.number(j)) * Complex64::new(-2.0, 0.0);
        }
        prop_assert!(max_abs(&(&recursive_c(1, Sign::Plus, &ops)[0] - expected)) <= 1e-12);
    }

    #[test]
    fn floquet_operator_is_hermitian_block_toeplitz(
        delta in 0.1f64..3.0,
        amp in 0.0f64..3.0,
        omega in 0.5f64..20.0,
        cutoff in 1usize..6,
    ) {
        let d = DrivenTwoLevel::new(delta, amp, omega);
        let fourier = d.fourier().unwrap();
        let op = build_floquet_operator(&fourier, cutoff).unwrap();
        let k = op.assemble();
        prop_assert!(hermiticity_defect(&k) == 0.0);
        let layout = op.layout();
        let m = cutoff as i32;
        for a in -m..=m {
            for b in -m..=m {
                let mut expected = fourier.component(a - b).cloned().unwrap_or_else(|| CMatrix::zeros(2, 2));
                if a == b {
                    expected += identity(2) * Complex64::new(omega * a as f64, 0.0);
                }
                prop_assert!(max_abs(&(layout.block(&k, a, b) - expected)) <= 1e-14);
            }
        }
    }

    #[test]
    fn matrix_text_round_trips(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
        let m = CMatrix::from_fn(3, 2, |r, c| Complex64::new(values[2 * (2 * r + c)], values[2 * (2 * r + c) + 1]));
        let back = read_matrix(&write_matrix(&m)).unwrap();
        prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn monodromy_is_unitary_and_reconstructs(delta in 0.1f64..3.0, amp in 0.0f64..4.0, omega in 1.0f64..12.0) {
        let d = DrivenTwoLevel::new(delta, amp, omega);
        let r = propagate_period_with(&d.sampler(), d.period(), 64, Scheme::CommutatorFreeMagnus4, DOUBLING_TOL, MAX_STEPS)
            .unwrap();
        prop_assert!(unitarity_defect(&r.u_t) <= 1e-12);
        let m = effective_from_unitary(&r.u_t, d.period()).unwrap();
        prop_assert!(max_abs(&(m.reconstruct() - &r.u_t)) <= 1e-12);
        prop_assert!(m.quasienergies.iter().all(|e| e.abs() <= omega / 2.0 + 1e-12));
    }

    #[test]
    fn flow_preserves_spectrum_and_matches_monodromy(delta in 0.5f64..1.5, amp in 0.2f64..2.0, omega in 8.0f64..15.0) {
        let d = DrivenTwoLevel::new(delta, amp, omega);
        let config = FlowConfig::for_frequency(omega, 6);
        let op = build_floquet_operator(&d.fourier().unwrap(), 6).unwrap();
        let state = run_flow(&op, &config).unwrap().into_state();
        prop_assert!(state.converged);
        prop_assert!(state.max_spectral_drift() <= 10.0 * config.step_tol);
        let h = extract_effective(&state, config.buffer, false).unwrap();
        let r = propagate_period_with(&d.sampler(), d.period(), 64, Scheme::CommutatorFreeMagnus4, DOUBLING_TOL, MAX_STEPS)
            .unwrap();
        let reference = effective_from_unitary(&r.u_t, d.period()).unwrap();
        prop_assert!(compare_effective(&h, &reference, omega).unwrap().max_delta <= 1e-6);
    }
}
