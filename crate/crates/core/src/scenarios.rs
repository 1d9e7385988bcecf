//! The two driven systems the engine is exercised on.
//!
//! **Shaken Bose-Hubbard chain.** In the lab frame
//! `H(t) = J hop_sym + U onsite + K cos(ωt) tilt`. The co-moving frame
//! removes the drive: hopping along `i → i+1` acquires the phase
//! `e^{±i x sin ωt}` with `x = K/ω`, giving
//!
//! `H̃(t) = J (e^{i x sin ωt} hop_plus + e^{-i x sin ωt} hop_minus) + U onsite`
//!
//! with Fourier components `H̃_0 = J J_0(x) hop_sym + U onsite` and
//! `H̃_n = J (J_n(x) hop_plus + J_n(-x) hop_minus)` (Jacobi–Anger). On a ring
//! this translation-invariant form is the model itself; the lab-frame tilt
//! is only well defined on an open chain.
//!
//! Conjugating the lab Hamiltonian by `exp(i x sin(ωt) Σ_j j n_j)` yields
//! the co-moving form at `-x`, not `x`: `c_i† c_{i+1}` picks up `e^{-i x sin ωt}`.
//! The closed-form [`expansion`](crate::expansion) results are stated for the
//! co-moving phases above, so a lab drive of amplitude `K` on an open chain
//! corresponds to [`ShakenLattice::rotated_fourier`] with `-K`.
//!
//! **Driven two-level system.** `H(t) = (Δ/2) σ_z + A cos(ωt) σ_x`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::bessel::{bessel_j_table, BesselError, MAX_ORDER};
use crate::expansion::DrivingParams;
use crate::floquet::{FloquetError, FourierHamiltonian};
use crate::fock::{build_operators, Boundary, FockBasis, FockError, LatticeOperatorSet};
use crate::linalg::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Lab,
    Rotated,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Bessel(#[from] BesselError),
    #[error(transparent)]
    Floquet(#[from] FloquetError),
}

#[derive(Debug, Clone)]
pub struct ShakenLattice {
    pub basis: FockBasis,
    pub ops: LatticeOperatorSet,
    pub params: DrivingParams,
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

impl ShakenLattice {
    pub fn new(
        sites: usize,
        particles: usize,
        boundary: Boundary,
        params: DrivingParams,
    ) -> Result<Self, ScenarioError> {
        let basis = FockBasis::new(sites, particles)?;
        let ops = build_operators(&basis, boundary)?;
        Ok(Self { basis, ops, params })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.params.omega
    }

    /// `J hop_sym + U onsite` (the undriven chain).
    pub fn static_part(&self) -> CMatrix {
        &self.ops.hop_sym * c(self.params.j) + &self.ops.onsite * c(self.params.u)
    }

    /// `t ↦ J hop_sym + U onsite + K cos(ωt) tilt`.
    pub fn lab_sampler(&self) -> impl Fn(f64) -> CMatrix + '_ {
        let base = self.static_part();
        move |t| &base + &self.ops.tilt * c(self.params.k_drive * (self.params.omega * t).cos())
    }

    /// `t ↦ J (e^{i x sin ωt} hop_plus + e^{-i x sin ωt} hop_minus) + U onsite`.
    pub fn rotated_sampler(&self) -> impl Fn(f64) -> CMatrix + '_ {
        let onsite = &self.ops.onsite * c(self.params.u);
        let x = self.params.x();
        move |t| {
            let phase = Complex64::from_polar(self.params.j, x * (self.params.omega * t).sin());
            &onsite + &self.ops.hop_plus * phase + &self.ops.hop_minus * phase.conj()
        }
    }

    pub fn sampler(&self, frame: Frame) -> Box<dyn Fn(f64) -> CMatrix + '_> {
        match frame {
            Frame::Lab => Box::new(self.lab_sampler()),
            Frame::Rotated => Box::new(self.rotated_sampler()),
        }
    }

    /// Co-moving-frame Fourier components for `|n| ≤ n_max`.
    pub fn rotated_fourier(&self, n_max: usize) -> Result<FourierHamiltonian, ScenarioError> {
        let p = &self.params;
        let x = p.x();
        let table = bessel_j_table(n_max as u32, x)?;
        let mut components = BTreeMap::new();
        components.insert(0, &self.ops.hop_sym * c(p.j * table[0]) + &self.ops.onsite * c(p.u));
        for n in 1..=n_max {
            let jn = table[n];
            let jn_neg = if n % 2 == 0 { jn } else { -jn };
            components.insert(
                n as i32,
                &self.ops.hop_plus * c(p.j * jn) + &self.ops.hop_minus * c(p.j * jn_neg),
            );
        }
        Ok(FourierHamiltonian::new(p.omega, components)?)
    }

    /// Smallest harmonic count beyond which every `|J_n(x)|` stays below
    /// `tol`.
    pub fn harmonics_needed(&self, tol: f64) -> Result<usize, ScenarioError> {
        harmonics_needed(self.params.x(), tol)
    }
}

pub fn harmonics_needed(x: f64, tol: f64) -> Result<usize, ScenarioError> {
    let table = bessel_j_table(MAX_ORDER, x)?;
    let last = table
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| v.abs() >= tol)
        .map(|(n, _)| n)
        .max()
        .unwrap_or(0);
    Ok(last.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivenTwoLevel {
    pub delta: f64,
    pub amp: f64,
    pub omega: f64,
}

impl DrivenTwoLevel {
    pub fn new(delta: f64, amp: f64, omega: f64) -> Self {
        Self { delta, amp, omega }
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn splitting(&self) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(self.delta / 2.0), c(0.0), c(0.0), c(-self.delta / 2.0)])
    }

    pub fn coupling(&self) -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
    }

    /// `t ↦ (Δ/2) σ_z + A cos(ωt) σ_x`.
    pub fn sampler(&self) -> impl Fn(f64) -> CMatrix {
        let h0 = self.splitting();
        let sx = self.coupling();
        let (amp, omega) = (self.amp, self.omega);
        move |t| &h0 + &sx * c(amp * (omega * t).cos())
    }

    pub fn fourier(&self) -> Result<FourierHamiltonian, FloquetError> {
        FourierHamiltonian::new(
            self.omega,
            BTreeMap::from([(0, self.splitting()), (1, self.coupling() * c(self.amp / 2.0))]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::h_eff0;
    use crate::floquet::{default_quadrature_points, fourier_decompose};
    use crate::linalg::{hermiticity_defect, max_abs};

    fn lattice(boundary: Boundary, x: f64) -> ShakenLattice {
        let p = DrivingParams::from_ratio(1.0, 0.8, x, 7.0).unwrap();
        ShakenLattice::new(3, 2, boundary, p).unwrap()
    }

    #[test]
    fn drive_vanishes_at_quarter_period() {
        let s = lattice(Boundary::Periodic, 1.3);
        let h = s.lab_sampler()(s.period() / 4.0);
        assert!(max_abs(&(h - s.static_part())) < 1e-14);
    }

    #[test]
    fn lab_fourier_has_three_harmonics() {
        let s = lattice(Boundary::Open, 1.3);
        let fh = fourier_decompose(s.lab_sampler(), 7.0, 5, 64).unwrap();
        assert!(max_abs(&(fh.component(0).unwrap() - s.static_part())) < 1e-13);
        let expected = &s.ops.tilt * c(s.params.k_drive / 2.0);
        assert!(max_abs(&(fh.component(1).unwrap() - &expected)) < 1e-13);
        for n in 2..=5 {
            assert!(max_abs(fh.component(n).unwrap()) < 1e-13);
        }
    }

    #[test]
    fn rotated_components() {
        let s = lattice(Boundary::Periodic, 0.0);
        let fh = s.rotated_fourier(4).unwrap();
        assert!(max_abs(&(fh.component(0).unwrap() - s.static_part())) < 1e-15);
        for n in 1..=4 {
            assert_eq!(max_abs(fh.component(n).unwrap()), 0.0);
        }
        let s = lattice(Boundary::Periodic, 1.7);
        let fh = s.rotated_fourier(8).unwrap();
        let h0 = h_eff0(&s.params, &s.ops).unwrap();
        assert_eq!(fh.component(0).unwrap(), &h0.matrix);
        for n in 1..=8 {
            let a = fh.component(n).unwrap();
            let b = fh.component(-n).unwrap();
            assert_eq!(&a.adjoint(), b);
        }
    }

    #[test]
    fn rotated_sampler_quadrature_reproduces_components() {
        let s = lattice(Boundary::Periodic, 2.1);
        let n_max = 16;
        let fh = fourier_decompose(
            s.rotated_sampler(),
            s.params.omega,
            n_max,
            default_quadrature_points(n_max),
        )
        .unwrap();
        let exact = s.rotated_fourier(n_max).unwrap();
        for n in -(n_max as i32)..=(n_max as i32) {
            let d = max_abs(&(fh.component(n).unwrap() - exact.component(n).unwrap()));
            assert!(d < 1e-13, "n = {n}: {d}");
        }
    }

    #[test]
    fn frame_transformation_of_lab_sampler() {
        // W(t) = exp(i x sin(ωt) tilt); W H_lab W^† - i W ∂_t W^†
        // = W H_lab W^† - K cos(ωt) tilt, compared with the co-moving
        // components at -x
        let s = lattice(Boundary::Open, 1.4);
        let omega = s.params.omega;
        let x = s.params.x();
        let lab = s.lab_sampler();
        let tilt_diag: Vec<f64> = (0..s.dim()).map(|k| s.ops.tilt[(k, k)].re).collect();
        let transformed = |t: f64| {
            let theta = x * (omega * t).sin();
            let h = lab(t);
            let mut out = CMatrix::zeros(s.dim(), s.dim());
            for a in 0..s.dim() {
                for b in 0..s.dim() {
                    let phase = Complex64::from_polar(1.0, theta * (tilt_diag[a] - tilt_diag[b]));
                    out[(a, b)] = h[(a, b)] * phase;
                }
            }
            out - &s.ops.tilt * c(s.params.k_drive * (omega * t).cos())
        };
        let n_max = 14;
        let fh = fourier_decompose(transformed, omega, n_max, 256).unwrap();
        let mirrored = ShakenLattice {
            params: DrivingParams::from_ratio(1.0, 0.8, -x, omega).unwrap(),
            ..s.clone()
        };
        let exact = mirrored.rotated_fourier(n_max).unwrap();
        for n in -(n_max as i32)..=(n_max as i32) {
            let d = max_abs(&(fh.component(n).unwrap() - exact.component(n).unwrap()));
            assert!(d < 1e-10, "n = {n}: {d}");
        }
    }

    #[test]
    fn two_level_sampler_and_components() {
        let d = DrivenTwoLevel::new(1.0, 2.0, 10.0);
        let h = d.sampler()(0.0);
        assert_eq!(hermiticity_defect(&h), 0.0);
        assert_eq!(h[(0, 1)], c(2.0));
        let fh = d.fourier().unwrap();
        assert_eq!(fh.component(-1).unwrap()[(1, 0)], c(1.0));
        let fq = fourier_decompose(d.sampler(), 10.0, 3, 64).unwrap();
        for n in -3..=3 {
            let exact = fh.component(n).cloned().unwrap_or_else(|| CMatrix::zeros(2, 2));
            assert!(max_abs(&(fq.component(n).unwrap() - exact)) < 1e-14);
        }
    }

    #[test]
    fn harmonic_count_grows_with_drive() {
        let small = harmonics_needed(0.5, 1e-15).unwrap();
        let large = harmonics_needed(2.4, 1e-15).unwrap();
        assert!(small < large);
        assert!(bessel_j_table(large as u32 + 1, 2.4).unwrap()[large + 1].abs() < 1e-15);
    }
}
