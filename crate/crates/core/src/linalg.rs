//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>` (column-major). Products go
//! through `matrixmultiply::zgemm`, which is several times faster than the
//! generic nalgebra kernel for complex scalars at the sizes the flow uses
//! (a few hundred rows).

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `a * b` for column-major complex matrices.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: Complex64 is repr(C) { re, im }, the same layout as [f64; 2].
    // Strides describe nalgebra's contiguous column-major storage.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    c
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn real_scale(a: &CMatrix, s: f64) -> CMatrix {
    a.map(|z| z * s)
}

/// `[a, b] = ab - ba`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    matmul(a, b) - matmul(b, a)
}

/// `[eta, k]` for anti-Hermitian `eta` and Hermitian `k`, using
/// `(eta k)^† = -k eta` so that only one product is formed.
pub fn commutator_ah_h(eta: &CMatrix, k: &CMatrix) -> CMatrix {
    let p = matmul(eta, k);
    let pa = p.adjoint();
    p + pa
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Maximum absolute column sum.
pub fn one_norm(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest element of `|a - a^†| / 2`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut d = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            d = d.max(0.5 * (a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    d
}

/// Replace `a` by `(a + a^†)/2`, returning the pre-symmetrization defect.
pub fn hermitize(a: &CMatrix) -> (CMatrix, f64) {
    let defect = hermiticity_defect(a);
    let h = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    (h, defect)
}

/// Replace `a` by `(a - a^†)/2`.
pub fn antihermitize(a: &CMatrix) -> CMatrix {
    (a - a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `‖u^† u - 1‖_max`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let p = matmul(&u.adjoint(), u);
    max_abs(&(p - identity(u.nrows())))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors as the matching columns.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let (hs, _) = hermitize(h);
    let eig = SymmetricEigen::new(hs);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(h: &CMatrix) -> Vec<f64> {
    hermitian_eigen(h).0
}

/// Eigen-decomposition of a unitary (more generally, normal) matrix through
/// its complex Schur form, which is diagonal up to rounding for normal input.
/// The Schur vectors are re-orthonormalized by a QR pass and the values are
/// the Rayleigh quotients in that basis.
pub fn normal_eigen(u: &CMatrix) -> (Vec<Complex64>, CMatrix) {
    let n = u.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let (schur_vectors, _) = Schur::new(u.clone()).unpack();
    let q = schur_vectors.qr().q();
    let t = matmul(&q.adjoint(), &matmul(u, &q));
    let values = (0..n).map(|k| t[(k, k)]).collect();
    (values, q)
}

pub fn diag_conjugate(v: &CMatrix, d: &[Complex64]) -> CMatrix {
    let mut vd = v.clone();
    for (j, &dj) in d.iter().enumerate() {
        for i in 0..vd.nrows() {
            vd[(i, j)] *= dj;
        }
    }
    matmul(&vd, &v.adjoint())
}

/// Taylor degrees and the 1-norm bound up to which each one has a
/// truncation remainder `θ^{m+1}/(m+1)!` below the unit roundoff.
const TAYLOR: [(usize, f64); 5] = [(2, 8.7e-6), (4, 1.7e-3), (8, 6.9e-2), (12, 3.35e-1), (16, 8.2e-1)];

/// `Σ_{k≤m} a^k/k!` by Paterson–Stockmeyer in blocks of four; `m` must be
/// 2 or a multiple of four.
fn taylor_block(a: &CMatrix, m: usize) -> CMatrix {
    let n = a.nrows();
    if m == 2 {
        return identity(n) + a + real_scale(&matmul(a, a), 0.5);
    }
    let a2 = matmul(a, a);
    let a3 = matmul(&a2, a);
    let a4 = matmul(&a3, a);
    let powers = [identity(n), a.clone(), a2, a3];
    let mut inv_fact = vec![1.0_f64; m + 1];
    for k in 1..=m {
        inv_fact[k] = inv_fact[k - 1] / k as f64;
    }
    let chunk = |j: usize| {
        let mut b = CMatrix::zeros(n, n);
        for (i, p) in powers.iter().enumerate() {
            let k = 4 * j + i;
            if k <= m {
                b += real_scale(p, inv_fact[k]);
            }
        }
        b
    };
    let blocks = m / 4;
    let mut r = chunk(blocks - 1) + real_scale(&a4, inv_fact[m]);
    for j in (0..blocks - 1).rev() {
        r = matmul(&r, &a4) + chunk(j);
    }
    r
}

/// Matrix exponential by scaling and squaring around a truncated Taylor
/// polynomial; the degree is picked from the 1-norm of `a`.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return identity(n);
    }
    for &(degree, theta) in &TAYLOR {
        if norm <= theta {
            return taylor_block(a, degree);
        }
    }
    let (degree, theta) = TAYLOR[TAYLOR.len() - 1];
    let s = (norm / theta).log2().ceil().max(0.0) as i32;
    let mut r = taylor_block(&real_scale(a, 0.5_f64.powi(s)), degree);
    for _ in 0..s {
        r = matmul(&r, &r);
    }
    r
}

/// `exp(-i t h)` for Hermitian `h`.
pub fn unitary_step(h: &CMatrix, t: f64) -> CMatrix {
    expm(&(h * Complex64::new(0.0, -t)))
}

/// Embed a real matrix.
pub fn from_real(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> CMatrix {
        // small deterministic LCG, enough for test fixtures
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(n, n, |_, _| Complex64::new(next(), next()))
    }

    fn taylor_exp(a: &CMatrix) -> CMatrix {
        let mut term = identity(a.nrows());
        let mut sum = term.clone();
        for k in 1..80 {
            term = matmul(&term, a) / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    #[test]
    fn matmul_matches_nalgebra() {
        let a = sample(7, 1);
        let b = CMatrix::from_fn(7, 4, |i, j| Complex64::new(i as f64, -(j as f64)));
        let c = matmul(&a, &b);
        assert!(max_abs(&(c - &a * &b)) < 1e-13);
    }

    #[test]
    fn expm_matches_taylor_across_degrees() {
        for (k, scale) in [0.001, 0.1, 0.5, 1.5, 4.0, 30.0].into_iter().enumerate() {
            let a = sample(6, k as u64) * Complex64::new(scale, 0.0);
            let e = expm(&a);
            let reference = if scale > 2.0 {
                // square a Taylor evaluation of a/2^8
                let mut r = taylor_exp(&(a.clone() / Complex64::new(256.0, 0.0)));
                for _ in 0..8 {
                    r = matmul(&r, &r);
                }
                r
            } else {
                taylor_exp(&a)
            };
            let rel = max_abs(&(e - &reference)) / max_abs(&reference);
            assert!(rel < 1e-12, "scale {scale}: rel err {rel}");
        }
    }

    #[test]
    fn expm_matches_spectral_oracle() {
        for (k, t) in [1e-4, 0.02, 0.3, 2.0, 25.0].into_iter().enumerate() {
            let h = hermitize(&sample(9, 20 + k as u64)).0;
            let (vals, v) = hermitian_eigen(&h);
            let phases: Vec<Complex64> = vals.iter().map(|&e| Complex64::from_polar(1.0, -e * t)).collect();
            let reference = diag_conjugate(&v, &phases);
            let d = max_abs(&(unitary_step(&h, t) - reference));
            assert!(d < 1e-12, "t {t}: {d}");
        }
    }

    #[test]
    fn expm_of_jordan_block() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(0.5, 0.2), ONE * 3.0, ZERO, Complex64::new(0.5, 0.2)],
        );
        let ea = Complex64::new(0.5, 0.2).exp();
        let expected = CMatrix::from_row_slice(2, 2, &[ea, ea * 3.0, ZERO, ea]);
        assert!(max_abs(&(expm(&a) - expected)) < 1e-14);
    }

    #[test]
    fn expm_of_antihermitian_is_unitary() {
        let h = hermitize(&sample(10, 9)).0;
        let u = unitary_step(&h, 3.0);
        assert!(unitarity_defect(&u) < 1e-13);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let h = hermitize(&sample(8, 3)).0;
        let (vals, vecs) = hermitian_eigen(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d: Vec<Complex64> = vals.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        assert!(max_abs(&(diag_conjugate(&vecs, &d) - h)) < 1e-12);
    }

    #[test]
    fn normal_eigen_of_unitary_is_diagonal() {
        let h = hermitize(&sample(6, 4)).0;
        let u = unitary_step(&h, 1.0);
        let (vals, q) = normal_eigen(&u);
        assert!(vals.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!(max_abs(&(diag_conjugate(&q, &vals) - u)) < 1e-12);
    }

    #[test]
    fn normal_eigen_of_nearly_scalar_unitary() {
        let h = hermitize(&sample(10, 7)).0;
        let u = unitary_step(&h, 1e-7) * Complex64::from_polar(1.0, 0.3);
        let (vals, q) = normal_eigen(&u);
        assert!(unitarity_defect(&q) < 1e-13);
        assert!(max_abs(&(diag_conjugate(&q, &vals) - u)) < 1e-13);
    }

    #[test]
    fn single_product_commutator() {
        let k = hermitize(&sample(5, 5)).0;
        let eta = antihermitize(&sample(5, 6));
        assert!(max_abs(&(commutator_ah_h(&eta, &k) - commutator(&eta, &k))) < 1e-14);
    }
}
