use floquet_flow::expansion::DrivingParams;
use floquet_flow::floquet::fourier_decompose;
use floquet_flow::linalg::{hermitian_eigenvalues, max_abs};
use floquet_flow::oracle::{propagate_period_with, Scheme, DOUBLING_TOL, MAX_STEPS};
use floquet_flow::scenarios::ShakenLattice;
use floquet_flow::{Boundary, CMatrix};

fn lattice(boundary: Boundary, x: f64) -> ShakenLattice {
    let params = DrivingParams::from_ratio(1.0, 1.0, x, 4.0).unwrap();
    ShakenLattice::new(3, 2, boundary, params).unwrap()
}

fn period_map(sampler: &dyn Fn(f64) -> CMatrix, period: f64) -> CMatrix {
    propagate_period_with(
        sampler,
        period,
        128,
        Scheme::CommutatorFreeMagnus4,
        DOUBLING_TOL,
        MAX_STEPS,
    )
    .unwrap()
    .u_t
}

#[test]
fn lab_frame_matches_rotated_frame_at_reflected_drive() {
    let lab = lattice(Boundary::Open, 1.3);
    let rotated = lattice(Boundary::Open, -1.3);
    let a = period_map(&lab.lab_sampler(), lab.period());
    let b = period_map(&rotated.rotated_sampler(), rotated.period());
    assert!(max_abs(&(&a - &b)) <= 1e-9);
}

#[test]
fn frames_share_quasienergy_spectrum() {
    let l = lattice(Boundary::Open, 1.3);
    let a = period_map(&l.lab_sampler(), l.period());
    let b = period_map(&l.rotated_sampler(), l.period());
    // U + U† is Hermitian with eigenvalues 2 cos θ_k
    let sym = |u: &CMatrix| hermitian_eigenvalues(&(u + u.adjoint()));
    for (p, q) in sym(&a).iter().zip(sym(&b)) {
        assert!((p - q).abs() <= 1e-9);
    }
}

#[test]
fn analytic_components_match_quadrature() {
    for boundary in [Boundary::Open, Boundary::Periodic] {
        let l = lattice(boundary, 2.2);
        let analytic = l.rotated_fourier(6).unwrap();
        let sampled = fourier_decompose(l.rotated_sampler(), 4.0, 6, 64).unwrap();
        for n in -6..=6 {
            let d = max_abs(&(analytic.component(n).unwrap() - sampled.component(n).unwrap()));
            assert!(d <= 1e-12, "harmonic {n}: {d:e}");
        }
    }
}
