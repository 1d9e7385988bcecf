//! Bosonic Fock bases and the lattice operators of the Bose-Hubbard chain.
//!
//! A [`FockBasis`] spans the fixed-particle-number sector of `N` bosons on
//! `L` sites. States are ordered lexicographically descending on their
//! occupation vectors, so for `L = 3, N = 2` the order is
//! `(2,0,0), (1,1,0), (1,0,1), (0,2,0), (0,1,1), (0,0,2)`.
//!
//! Hopping follows the sign of the driven-lattice Hamiltonian as written,
//! `H_s = +J Σ (c_i† c_{i+1} + h.c.) + U Σ n_i (n_i - 1)`; the more common
//! `-J` convention is a gauge transformation away on bipartite chains.
//! The tilt operator uses site labels `0..L`, so any other labelling only
//! adds a multiple of `N`.

use std::collections::HashMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::CMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FockError {
    #[error("a lattice needs at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error("periodic boundary on 2 sites is ambiguous (the single bond would be counted twice)")]
    PeriodicTwoSite,
    #[error("occupation vector {0:?} is not in the basis")]
    UnknownState(Vec<u32>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Debug, Clone)]
pub struct FockBasis {
    sites: usize,
    particles: usize,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl FockBasis {
    pub fn new(sites: usize, particles: usize) -> Result<Self, FockError> {
        enumerate_basis(sites, particles)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &[u32] {
        &self.states[k]
    }

    pub fn index_of(&self, occupation: &[u32]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    pub fn require_index(&self, occupation: &[u32]) -> Result<usize, FockError> {
        self.index_of(occupation)
            .ok_or_else(|| FockError::UnknownState(occupation.to_vec()))
    }

    /// Nearest-neighbour bonds `(i, i+1)`, with `(L-1, 0)` closing the ring.
    pub fn bonds(&self, boundary: Boundary) -> Result<Vec<(usize, usize)>, FockError> {
        let l = self.sites;
        let mut bonds: Vec<(usize, usize)> = (0..l - 1).map(|i| (i, i + 1)).collect();
        if boundary == Boundary::Periodic {
            if l == 2 {
                return Err(FockError::PeriodicTwoSite);
            }
            bonds.push((l - 1, 0));
        }
        Ok(bonds)
    }

    /// Matrix of `c_i† c_j`.
    pub fn hop(&self, i: usize, j: usize) -> CMatrix {
        let d = self.dim();
        let mut m = CMatrix::zeros(d, d);
        for (k, s) in self.states.iter().enumerate() {
            if let Some((target, amp)) = self.apply_hop(s, i, j) {
                m[(target, k)] += Complex64::new(amp, 0.0);
            }
        }
        m
    }

    /// Matrix of `n_i`.
    pub fn number(&self, i: usize) -> CMatrix {
        self.diagonal(|s| s[i] as f64)
    }

    fn diagonal(&self, f: impl Fn(&[u32]) -> f64) -> CMatrix {
        let d = self.dim();
        let mut m = CMatrix::zeros(d, d);
        for (k, s) in self.states.iter().enumerate() {
            m[(k, k)] = Complex64::new(f(s), 0.0);
        }
        m
    }

    fn apply_hop(&self, s: &[u32], i: usize, j: usize) -> Option<(usize, f64)> {
        if s[j] == 0 {
            return None;
        }
        let mut t = s.to_vec();
        let mut amp = (t[j] as f64).sqrt();
        t[j] -= 1;
        amp *= (t[i] as f64 + 1.0).sqrt();
        t[i] += 1;
        Some((self.index[&t], amp))
    }
}

/// All occupation vectors of `particles` bosons on `sites` sites, in
/// lexicographically descending order.
pub fn enumerate_basis(sites: usize, particles: usize) -> Result<FockBasis, FockError> {
    if sites < 2 {
        return Err(FockError::TooFewSites(sites));
    }
    let mut states = Vec::new();
    let mut current = vec![0u32; sites];
    fill(&mut states, &mut current, 0, particles as u32);
    let index = states.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
    Ok(FockBasis {
        sites,
        particles,
        states,
        index,
    })
}

fn fill(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, site: usize, remaining: u32) {
    if site == current.len() - 1 {
        current[site] = remaining;
        out.push(current.clone());
        return;
    }
    for n in (0..=remaining).rev() {
        current[site] = n;
        fill(out, current, site + 1, remaining - n);
    }
    current[site] = 0;
}

/// Matrices of every lattice operator appearing in the shaken Bose-Hubbard
/// model and its effective Hamiltonians.
#[derive(Debug, Clone)]
pub struct LatticeOperatorSet {
    pub boundary: Boundary,
    /// `Σ_i (c_i† c_{i+1} + c_{i+1}† c_i)`
    pub hop_sym: CMatrix,
    /// `Σ_i c_i† c_{i+1}`
    pub hop_plus: CMatrix,
    /// `Σ_i c_{i+1}† c_i`
    pub hop_minus: CMatrix,
    /// `Σ_i n_i (n_i - 1)`
    pub onsite: CMatrix,
    /// `Σ_i i n_i`
    pub tilt: CMatrix,
    /// `Σ_i c_i† (n_i - n_{i+1}) c_{i+1} + h.c.`
    pub density_hop: CMatrix,
}

pub fn build_operators(basis: &FockBasis, boundary: Boundary) -> Result<LatticeOperatorSet, FockError> {
    let bonds = basis.bonds(boundary)?;
    let d = basis.dim();
    let mut hop_plus = CMatrix::zeros(d, d);
    for &(i, j) in &bonds {
        hop_plus += basis.hop(i, j);
    }
    let hop_minus = hop_plus.adjoint();
    let hop_sym = &hop_plus + &hop_minus;
    let onsite = basis.diagonal(|s| s.iter().map(|&n| (n as f64) * (n as f64 - 1.0)).sum());
    let tilt = basis.diagonal(|s| s.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum());
    let density_hop = density_assisted_hop(basis, boundary)?;
    Ok(LatticeOperatorSet {
        boundary,
        hop_sym,
        hop_plus,
        hop_minus,
        onsite,
        tilt,
        density_hop,
    })
}

/// `Σ_i c_i† (n_i - n_{i+1}) c_{i+1} + h.c.`
pub fn density_assisted_hop(basis: &FockBasis, boundary: Boundary) -> Result<CMatrix, FockError> {
    let forward = density_hop_forward(basis, boundary)?;
    Ok(&forward + forward.adjoint())
}

/// `Σ_i c_i† (n_i - n_{i+1}) c_{i+1}`, built by acting with the ladder
/// operators on each basis state. The occupation difference is evaluated in
/// the intermediate `N-1` particle state.
pub fn density_hop_forward(basis: &FockBasis, boundary: Boundary) -> Result<CMatrix, FockError> {
    let bonds = basis.bonds(boundary)?;
    let d = basis.dim();
    let mut forward = CMatrix::zeros(d, d);
    for (k, s) in basis.states.iter().enumerate() {
        for &(i, j) in &bonds {
            if s[j] == 0 {
                continue;
            }
            let mut t = s.clone();
            let mut amp = (t[j] as f64).sqrt();
            t[j] -= 1;
            let weight = t[i] as f64 - t[j] as f64;
            amp *= (t[i] as f64 + 1.0).sqrt();
            t[i] += 1;
            if weight != 0.0 {
                forward[(basis.index[&t], k)] += Complex64::new(amp * weight, 0.0);
            }
        }
    }
    Ok(forward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, hermiticity_defect, max_abs};

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn small_dimensions() {
        assert_eq!(enumerate_basis(2, 1).unwrap().dim(), 2);
        assert_eq!(enumerate_basis(3, 2).unwrap().dim(), 6);
        assert_eq!(enumerate_basis(3, 0).unwrap().dim(), 1);
    }

    #[test]
    fn dimension_matches_brute_force_enumeration() {
        // every vector in {0..N}^L, kept if it sums to N
        for (l, n) in [(5usize, 3u32), (4, 4), (2, 6), (6, 2)] {
            let mut count = 0;
            let total = (n as usize + 1).pow(l as u32);
            for code in 0..total {
                let mut c = code;
                let mut sum = 0;
                for _ in 0..l {
                    sum += c % (n as usize + 1);
                    c /= n as usize + 1;
                }
                if sum == n as usize {
                    count += 1;
                }
            }
            let basis = enumerate_basis(l, n as usize).unwrap();
            assert_eq!(basis.dim(), count);
            assert_eq!(basis.dim(), binomial(n as usize + l - 1, n as usize));
        }
        assert_eq!(enumerate_basis(5, 3).unwrap().dim(), 35);
    }

    #[test]
    fn order_and_index_round_trip() {
        let b = enumerate_basis(3, 2).unwrap();
        let expected: Vec<Vec<u32>> = vec![
            vec![2, 0, 0],
            vec![1, 1, 0],
            vec![1, 0, 1],
            vec![0, 2, 0],
            vec![0, 1, 1],
            vec![0, 0, 2],
        ];
        assert_eq!(b.states(), expected.as_slice());
        let b = enumerate_basis(4, 3).unwrap();
        for (k, s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(k));
        }
        assert!(b.states().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert_eq!(enumerate_basis(1, 3).unwrap_err(), FockError::TooFewSites(1));
        let b = enumerate_basis(2, 1).unwrap();
        assert_eq!(
            build_operators(&b, Boundary::Periodic).unwrap_err(),
            FockError::PeriodicTwoSite
        );
    }

    #[test]
    fn two_site_hop() {
        let b = enumerate_basis(2, 1).unwrap();
        let ops = build_operators(&b, Boundary::Open).unwrap();
        let expected = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        assert_eq!(ops.hop_sym, expected);
    }

    #[test]
    fn three_ring_single_particle() {
        let b = enumerate_basis(3, 1).unwrap();
        let ops = build_operators(&b, Boundary::Periodic).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 1.0 };
                assert_eq!(ops.hop_sym[(i, j)], Complex64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn onsite_diagonal_l3_n2() {
        let b = enumerate_basis(3, 2).unwrap();
        let ops = build_operators(&b, Boundary::Periodic).unwrap();
        let diag: Vec<f64> = (0..6).map(|k| ops.onsite[(k, k)].re).collect();
        assert_eq!(diag, vec![2.0, 0.0, 0.0, 2.0, 0.0, 2.0]);
    }

    #[test]
    fn hermiticity_and_adjoint_pairing() {
        for (l, n) in [(3, 2), (4, 3), (5, 2)] {
            let b = enumerate_basis(l, n).unwrap();
            for boundary in [Boundary::Open, Boundary::Periodic] {
                let ops = build_operators(&b, boundary).unwrap();
                for m in [&ops.hop_sym, &ops.onsite, &ops.tilt, &ops.density_hop] {
                    assert_eq!(hermiticity_defect(m), 0.0);
                }
                assert_eq!(ops.hop_minus, ops.hop_plus.adjoint());
            }
        }
    }

    /// Annihilation operator `c_j` from the N-particle sector into N-1.
    fn annihilate(from: &FockBasis, to: &FockBasis, j: usize) -> CMatrix {
        let mut m = CMatrix::zeros(to.dim(), from.dim());
        for (k, s) in from.states().iter().enumerate() {
            if s[j] > 0 {
                let mut t = s.clone();
                t[j] -= 1;
                m[(to.index_of(&t).unwrap(), k)] = Complex64::new((s[j] as f64).sqrt(), 0.0);
            }
        }
        m
    }

    #[test]
    fn density_hop_matches_ladder_matrix_products() {
        for (l, n) in [(3usize, 1usize), (3, 2), (3, 3), (4, 2), (4, 3)] {
            let b = enumerate_basis(l, n).unwrap();
            let lower = enumerate_basis(l, n - 1).unwrap();
            for boundary in [Boundary::Open, Boundary::Periodic] {
                let mut forward = CMatrix::zeros(b.dim(), b.dim());
                for (i, j) in b.bonds(boundary).unwrap() {
                    let ci = annihilate(&b, &lower, i);
                    let cj = annihilate(&b, &lower, j);
                    let diff = lower.number(i) - lower.number(j);
                    forward += ci.adjoint() * diff * cj;
                }
                let reference = &forward + forward.adjoint();
                let got = density_assisted_hop(&b, boundary).unwrap();
                assert!(max_abs(&(got - reference)) < 1e-14, "L={l} N={n}");
            }
        }
    }

    #[test]
    fn density_hop_vanishes_for_one_particle() {
        let b = enumerate_basis(3, 1).unwrap();
        let ops = build_operators(&b, Boundary::Periodic).unwrap();
        assert_eq!(max_abs(&ops.density_hop), 0.0);
    }

    #[test]
    fn uniform_state_sees_directional_hop() {
        let b = enumerate_basis(3, 3).unwrap();
        let ops = build_operators(&b, Boundary::Periodic).unwrap();
        let k = b.index_of(&[1, 1, 1]).unwrap();
        let lhs = ops.density_hop.column(k).into_owned();
        let rhs = (&ops.hop_plus - &ops.hop_minus).column(k).into_owned();
        assert!((lhs - rhs).camax() < 1e-14);
    }

    #[test]
    fn onsite_commutator_closed_form() {
        // [Σ c_i† c_{i+1}, Σ n(n-1)] = -2 Σ c_i† (n_i - n_{i+1}) c_{i+1}
        for (l, n) in [(3, 1), (3, 2), (3, 3), (4, 2), (5, 3), (4, 4)] {
            let b = enumerate_basis(l, n).unwrap();
            assert!(b.dim() <= 56);
            let ops = build_operators(&b, Boundary::Periodic).unwrap();
            let c1 = commutator(&ops.hop_plus, &ops.onsite);
            let closed = -(&ops.density_hop) * Complex64::new(0.5, 0.0);
            // the density hop pairs the forward part with its adjoint
            let c1_minus = commutator(&ops.hop_minus, &ops.onsite);
            let sym = (&c1 - &c1_minus) * Complex64::new(0.25, 0.0);
            assert!(max_abs(&(sym - closed)) < 1e-12, "L={l} N={n}");
        }
    }
}
