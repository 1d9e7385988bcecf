//! Fourier decomposition of time-periodic Hamiltonians and their embedding
//! as block operators on the truncated extended space.
//!
//! For `H(t) = Σ_n H_n e^{inωt}` the Floquet operator is
//! `K = Σ_n H_n ⊗ σ_n + 1 ⊗ ω n̂`, where `σ_n |m⟩ = |m + n⟩`. Harmonics
//! `-M..=M` are retained. Ordering on the assembled space is harmonic-major:
//! the system index runs fastest, so row `(m + M) * dim + i` belongs to
//! harmonic `m` and system state `i`. The block at row harmonic `m` and
//! column harmonic `m'` holds `H_{m-m'}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{frobenius, hermiticity_defect, hermitize, max_abs, CMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FloquetError {
    #[error("driving frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("sampled Hamiltonian at t = {t} is not Hermitian (defect {defect:.3e})")]
    NonHermitianSample { t: f64, defect: f64 },
    #[error("{points} quadrature points cannot resolve {n_max} harmonics (need at least {required})")]
    InsufficientQuadrature {
        points: usize,
        n_max: usize,
        required: usize,
    },
    #[error("harmonic cutoff {cutoff} is below the highest Fourier component {n_max}")]
    CutoffTooSmall { cutoff: usize, n_max: usize },
    #[error("interior buffer {buffer} must be smaller than the cutoff {cutoff}")]
    BufferTooLarge { buffer: usize, cutoff: usize },
    #[error("component {n} has shape {rows}x{cols}, expected {dim}x{dim}")]
    DimensionMismatch {
        n: i32,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("H_{{-{n}}} is not the adjoint of H_{n} (defect {defect:.3e})")]
    ConjugatePairing { n: i32, defect: f64 },
    #[error("matrix of size {size} does not fit {harmonics} harmonics of dimension {dim}")]
    LayoutMismatch { size: usize, harmonics: usize, dim: usize },
}

/// Fourier components `H_n` of a time-periodic Hermitian Hamiltonian.
#[derive(Debug, Clone)]
pub struct FourierHamiltonian {
    omega: f64,
    dim: usize,
    components: BTreeMap<i32, CMatrix>,
}

impl FourierHamiltonian {
    /// Validates `omega > 0`, square shapes and `H_{-n} = H_n^†`. A component
    /// given only for `n > 0` gets its partner filled in as the adjoint.
    pub fn new(omega: f64, components: BTreeMap<i32, CMatrix>) -> Result<Self, FloquetError> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(FloquetError::NonPositiveFrequency(omega));
        }
        let dim = components.values().next().map_or(0, |m| m.nrows());
        for (&n, m) in &components {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(FloquetError::DimensionMismatch {
                    n,
                    rows: m.nrows(),
                    cols: m.ncols(),
                    dim,
                });
            }
        }
        let mut full = components.clone();
        for (&n, m) in &components {
            match components.get(&-n) {
                Some(partner) => {
                    let scale = 1.0 + max_abs(m);
                    let defect = max_abs(&(partner - m.adjoint()));
                    if defect > 1e-10 * scale {
                        return Err(FloquetError::ConjugatePairing { n, defect });
                    }
                }
                None => {
                    full.insert(-n, m.adjoint());
                }
            }
        }
        Ok(Self {
            omega,
            dim,
            components: full,
        })
    }

    pub fn static_hamiltonian(omega: f64, h0: CMatrix) -> Result<Self, FloquetError> {
        Self::new(omega, BTreeMap::from([(0, h0)]))
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &BTreeMap<i32, CMatrix> {
        &self.components
    }

    pub fn component(&self, n: i32) -> Option<&CMatrix> {
        self.components.get(&n)
    }

    /// Largest stored `|n|`.
    pub fn n_max(&self) -> usize {
        self.components
            .keys()
            .map(|n| n.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// `Σ_n H_n e^{inωt}`.
    pub fn evaluate(&self, t: f64) -> CMatrix {
        let mut h = CMatrix::zeros(self.dim, self.dim);
        for (&n, m) in &self.components {
            let phase = Complex64::from_polar(1.0, n as f64 * self.omega * t);
            h += m * phase;
        }
        h
    }
}

/// Default number of trapezoid points for `n_max` harmonics.
pub fn default_quadrature_points(n_max: usize) -> usize {
    64.max(8 * n_max)
}

/// Fourier components `H_n = (1/T) ∫_0^T H(t) e^{-inωt} dt` by the uniform
/// trapezoid rule, which is exact for band-limited periodic integrands once
/// the point count exceeds twice the bandwidth.
pub fn fourier_decompose(
    sampler: impl Fn(f64) -> CMatrix,
    omega: f64,
    n_max: usize,
    quadrature_points: usize,
) -> Result<FourierHamiltonian, FloquetError> {
    if !(omega > 0.0) {
        return Err(FloquetError::NonPositiveFrequency(omega));
    }
    let required = (4 * n_max).max(1);
    if quadrature_points < required {
        return Err(FloquetError::InsufficientQuadrature {
            points: quadrature_points,
            n_max,
            required,
        });
    }
    let period = 2.0 * PI / omega;
    let samples: Vec<(f64, CMatrix)> = (0..quadrature_points)
        .map(|k| {
            let t = period * k as f64 / quadrature_points as f64;
            (t, sampler(t))
        })
        .collect();
    let dim = samples[0].1.nrows();
    for (t, h) in &samples {
        let defect = hermiticity_defect(h);
        if defect > 1e-12 * (1.0 + max_abs(h)) {
            return Err(FloquetError::NonHermitianSample { t: *t, defect });
        }
    }
    let mut components = BTreeMap::new();
    for n in 0..=n_max as i32 {
        let mut acc = CMatrix::zeros(dim, dim);
        for (k, (_, h)) in samples.iter().enumerate() {
            let angle = -2.0 * PI * (n as i64 * k as i64) as f64 / quadrature_points as f64;
            acc += h * Complex64::from_polar(1.0, angle);
        }
        acc /= Complex64::new(quadrature_points as f64, 0.0);
        if n == 0 {
            acc = hermitize(&acc).0;
        } else {
            components.insert(-n, acc.adjoint());
        }
        components.insert(n, acc);
    }
    FourierHamiltonian::new(omega, components)
}

/// Index bookkeeping for the truncated extended space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarmonicLayout {
    pub dim: usize,
    pub cutoff: usize,
}

impl HarmonicLayout {
    pub fn new(dim: usize, cutoff: usize) -> Self {
        Self { dim, cutoff }
    }

    pub fn harmonics(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn size(&self) -> usize {
        self.dim * self.harmonics()
    }

    /// Harmonic label `m ∈ -M..=M` of block row `b`.
    pub fn harmonic(&self, block: usize) -> i32 {
        block as i32 - self.cutoff as i32
    }

    /// Harmonic label of assembled row or column `r`.
    pub fn harmonic_of_row(&self, r: usize) -> i32 {
        self.harmonic(r / self.dim)
    }

    pub fn block_of(&self, m: i32) -> usize {
        (m + self.cutoff as i32) as usize
    }

    pub fn contains(&self, m: i32) -> bool {
        m.unsigned_abs() as usize <= self.cutoff
    }

    pub fn block(&self, matrix: &CMatrix, m: i32, mp: i32) -> CMatrix {
        let r = self.block_of(m) * self.dim;
        let c = self.block_of(mp) * self.dim;
        matrix.view((r, c), (self.dim, self.dim)).into_owned()
    }

    pub fn check(&self, matrix: &CMatrix) -> Result<(), FloquetError> {
        if matrix.nrows() != self.size() || matrix.ncols() != self.size() {
            return Err(FloquetError::LayoutMismatch {
                size: matrix.nrows(),
                harmonics: self.harmonics(),
                dim: self.dim,
            });
        }
        Ok(())
    }

    /// Interior harmonics `|m| ≤ M - buffer`.
    pub fn interior(&self, buffer: usize) -> Result<std::ops::RangeInclusive<i32>, FloquetError> {
        if buffer >= self.cutoff && self.cutoff > 0 {
            return Err(FloquetError::BufferTooLarge {
                buffer,
                cutoff: self.cutoff,
            });
        }
        let edge = self.cutoff.saturating_sub(buffer) as i32;
        Ok(-edge..=edge)
    }
}

/// Block-Toeplitz operator `Σ_d B_d ⊗ σ_d` on harmonics `-M..=M`, optionally
/// with the `1 ⊗ ω n̂` term kept separately.
#[derive(Debug, Clone)]
pub struct FloquetOperator {
    pub cutoff: usize,
    pub omega: f64,
    pub dim: usize,
    /// Block coupling harmonic `m'` to `m' + d`, keyed by `d`.
    pub blocks: BTreeMap<i32, CMatrix>,
    pub include_shift: bool,
}

pub fn build_floquet_operator(fh: &FourierHamiltonian, cutoff: usize) -> Result<FloquetOperator, FloquetError> {
    if cutoff < fh.n_max() {
        return Err(FloquetError::CutoffTooSmall {
            cutoff,
            n_max: fh.n_max(),
        });
    }
    Ok(FloquetOperator {
        cutoff,
        omega: fh.omega(),
        dim: fh.dim(),
        blocks: fh.components().clone(),
        include_shift: true,
    })
}

impl FloquetOperator {
    pub fn layout(&self) -> HarmonicLayout {
        HarmonicLayout::new(self.dim, self.cutoff)
    }

    /// The full `dim·(2M+1)` square matrix.
    pub fn assemble(&self) -> CMatrix {
        let layout = self.layout();
        let size = layout.size();
        let dim = self.dim;
        let mut k = CMatrix::zeros(size, size);
        for a in 0..layout.harmonics() {
            for b in 0..layout.harmonics() {
                let d = layout.harmonic(a) - layout.harmonic(b);
                if let Some(block) = self.blocks.get(&d) {
                    k.view_mut((a * dim, b * dim), (dim, dim)).copy_from(block);
                }
            }
            if self.include_shift {
                let shift = self.omega * layout.harmonic(a) as f64;
                for i in 0..dim {
                    k[(a * dim + i, a * dim + i)] += Complex64::new(shift, 0.0);
                }
            }
        }
        k
    }

    /// `(K_0, K_int)`: the harmonic-diagonal part with the shift, and every
    /// `d ≠ 0` block.
    pub fn split(&self) -> (FloquetOperator, FloquetOperator) {
        let mut diagonal = BTreeMap::new();
        let mut coupling = BTreeMap::new();
        for (&d, b) in &self.blocks {
            if d == 0 {
                diagonal.insert(d, b.clone());
            } else {
                coupling.insert(d, b.clone());
            }
        }
        let k0 = FloquetOperator {
            blocks: diagonal,
            ..self.clone_shape(self.include_shift)
        };
        let kint = FloquetOperator {
            blocks: coupling,
            ..self.clone_shape(false)
        };
        (k0, kint)
    }

    fn clone_shape(&self, include_shift: bool) -> FloquetOperator {
        FloquetOperator {
            cutoff: self.cutoff,
            omega: self.omega,
            dim: self.dim,
            blocks: BTreeMap::new(),
            include_shift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SInvariance {
    pub max_deviation: f64,
    pub holds: bool,
}

/// Largest Frobenius distance `‖B(m, m') - B(m+1, m'+1)‖` over interior
/// harmonic pairs, after removing `diagonal_shift · m` from the diagonal
/// blocks (pass `ω` for Floquet operators and `0` for transformations).
pub fn verify_s_invariance(
    matrix: &CMatrix,
    layout: HarmonicLayout,
    buffer: usize,
    diagonal_shift: f64,
    tol: f64,
) -> Result<SInvariance, FloquetError> {
    layout.check(matrix)?;
    let interior = layout.interior(buffer)?;
    let (lo, hi) = (*interior.start(), *interior.end());
    let shifted_block = |m: i32, mp: i32| {
        let mut b = layout.block(matrix, m, mp);
        if m == mp && diagonal_shift != 0.0 {
            for i in 0..layout.dim {
                b[(i, i)] -= Complex64::new(diagonal_shift * m as f64, 0.0);
            }
        }
        b
    };
    let mut max_deviation = 0.0_f64;
    for m in lo..hi {
        for mp in lo..hi {
            let dev = frobenius(&(shifted_block(m, mp) - shifted_block(m + 1, mp + 1)));
            max_deviation = max_deviation.max(dev);
        }
    }
    Ok(SInvariance {
        max_deviation,
        holds: max_deviation <= tol,
    })
}

#[derive(Debug, Clone)]
pub struct HarmonicComponents {
    /// Interior-averaged block for each harmonic difference `d`.
    pub components: BTreeMap<i32, CMatrix>,
    /// Largest Frobenius distance of a contributing block from its average.
    pub spread: f64,
}

impl HarmonicComponents {
    /// `Σ_d C_d`, the time-domain operator evaluated at `t = 0`.
    pub fn sum(&self) -> CMatrix {
        let dim = self.components.values().next().map_or(0, |m| m.nrows());
        self.components
            .values()
            .fold(CMatrix::zeros(dim, dim), |acc, c| acc + c)
    }
}

/// Projects an assembled operator back onto block-Toeplitz form by averaging
/// the blocks at each harmonic difference over interior harmonics, where
/// both the row and the column harmonic satisfy `|m| ≤ M - buffer`.
pub fn extract_harmonic_components(
    matrix: &CMatrix,
    layout: HarmonicLayout,
    buffer: usize,
    diagonal_shift: f64,
) -> Result<HarmonicComponents, FloquetError> {
    layout.check(matrix)?;
    let interior = layout.interior(buffer)?;
    let (lo, hi) = (*interior.start(), *interior.end());
    let span = hi - lo;
    let mut components = BTreeMap::new();
    let mut spread = 0.0_f64;
    for d in -span..=span {
        let blocks: Vec<CMatrix> = (lo..=hi)
            .filter(|m| (lo..=hi).contains(&(m - d)))
            .map(|m| {
                let mut b = layout.block(matrix, m, m - d);
                if d == 0 && diagonal_shift != 0.0 {
                    for i in 0..layout.dim {
                        b[(i, i)] -= Complex64::new(diagonal_shift * m as f64, 0.0);
                    }
                }
                b
            })
            .collect();
        let mut avg = CMatrix::zeros(layout.dim, layout.dim);
        for b in &blocks {
            avg += b;
        }
        avg /= Complex64::new(blocks.len() as f64, 0.0);
        for b in &blocks {
            spread = spread.max(frobenius(&(b - &avg)));
        }
        components.insert(d, avg);
    }
    Ok(HarmonicComponents { components, spread })
}
