//! Dense linear-algebra kernels.

mod expm;
mod matfun;
mod riccati;
mod schur;
mod sylvester;

pub use expm::{expm, expm_real};
pub use matfun::{
    frechet_hermitian, frechet_series_norm_bound, matfun_frechet, matfun_general,
    matfun_hermitian, AnalyticFn, HermitianEigen,
};
pub use riccati::{solve_are_stabilizing, AreSolution};
pub use schur::ComplexSchur;
pub use sylvester::{
    solve_lyapunov, solve_lyapunov_complex, solve_sylvester, solve_sylvester_schur,
    SylvesterSolution,
};

use crate::error::{Error, Result};
use crate::scalar::{CMat, Mat, Real, C};
use nalgebra::{ComplexField, DMatrix, Scalar};
use num_traits::{One, Zero};

/// `I_{m/2} ⊗ [[0, 1], [-1, 0]]`.
pub fn canonical_j<T: Real>(m: usize) -> Result<Mat<T>> {
    if m % 2 != 0 {
        return Err(Error::Dimension {
            context: "canonical_j",
            expected: "even dimension".into(),
            found: m.to_string(),
        });
    }
    let mut j = Mat::zeros(m, m);
    for k in 0..m / 2 {
        j[(2 * k, 2 * k + 1)] = T::one();
        j[(2 * k + 1, 2 * k)] = -T::one();
    }
    Ok(j)
}

pub fn to_complex<T: Real>(a: &Mat<T>) -> CMat<T> {
    a.map(|x| C::new(x, T::zero()))
}

pub fn real_part<T: Real>(a: &CMat<T>) -> Mat<T> {
    a.map(|z| z.re)
}

pub fn imag_part<T: Real>(a: &CMat<T>) -> Mat<T> {
    a.map(|z| z.im)
}

/// `(A + A*) / 2`.
pub fn hermitian_part<T: Real>(a: &CMat<T>) -> CMat<T> {
    (a + a.adjoint()).scale(T::lit(0.5))
}

/// Symmetrizer `(A + Aᵀ) / 2`.
pub fn sym<T: Real>(a: &Mat<T>) -> Mat<T> {
    (a + a.transpose()).scale(T::lit(0.5))
}

/// Antisymmetrizer `(A - Aᵀ) / 2`.
pub fn skew<T: Real>(a: &Mat<T>) -> Mat<T> {
    (a - a.transpose()).scale(T::lit(0.5))
}

/// Largest entry modulus.
pub fn max_abs<N: ComplexField>(a: &DMatrix<N>) -> N::RealField {
    a.iter()
        .map(|z| z.clone().modulus())
        .fold(N::RealField::zero(), |m, x| if x > m { x } else { m })
}

/// Frobenius norm.
pub fn fro<N: ComplexField>(a: &DMatrix<N>) -> N::RealField {
    a.norm()
}

/// Spectral norm (largest singular value).
pub fn norm2<N: ComplexField>(a: &DMatrix<N>) -> N::RealField {
    if a.is_empty() {
        return N::RealField::zero();
    }
    a.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(N::RealField::zero(), |m, x| if x > m { x } else { m })
}

/// `‖a − b‖_F / max(1, ‖b‖_F)`.
pub fn rel_diff<N: ComplexField>(a: &DMatrix<N>, b: &DMatrix<N>) -> N::RealField {
    let one = N::RealField::one();
    let nb = b.norm();
    (a - b).norm() / if nb > one { nb } else { one }
}

/// Block-diagonal matrix.
pub fn block_diag<N: Scalar + Zero + Clone>(blocks: &[&DMatrix<N>]) -> DMatrix<N> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Horizontal concatenation.
pub fn hstack<N: Scalar + Zero + Clone>(blocks: &[&DMatrix<N>]) -> DMatrix<N> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), b.shape()).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation.
pub fn vstack<N: Scalar + Zero + Clone>(blocks: &[&DMatrix<N>]) -> DMatrix<N> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), b.shape()).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Inverse through LU, failing on exact singularity.
pub fn inverse<N: ComplexField>(a: &DMatrix<N>, what: &'static str) -> Result<DMatrix<N>> {
    a.clone().try_inverse().ok_or(Error::Singular(what))
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues<T: Real>(a: &Mat<T>) -> Result<Vec<C<T>>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let s = ComplexSchur::new(&to_complex(a))?;
    Ok((0..a.nrows()).map(|i| s.t[(i, i)]).collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa<T: Real>(a: &Mat<T>) -> Result<T> {
    Ok(eigenvalues(a)?
        .into_iter()
        .map(|z| z.re)
        .fold(T::min_value().unwrap_or(-T::max_value().unwrap()), |m, x| if x > m { x } else { m }))
}

/// Real matrix whose spectrum lies in `Re z < -eps`.
pub fn is_hurwitz_eps<T: Real>(a: &Mat<T>, eps: T) -> bool {
    a.is_square()
        && a.nrows() > 0
        && a.iter().all(|x| x.is_finite())
        && spectral_abscissa(a).map(|s| s < -eps).unwrap_or(false)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn lambda_min_hermitian<T: Real>(h: &CMat<T>) -> T {
    let e = hermitian_part(h).symmetric_eigenvalues();
    e.iter().cloned().fold(T::max_value().unwrap(), |m, x| if x < m { x } else { m })
}

/// Lower Cholesky factor of a Hermitian matrix, `None` unless every pivot is positive.
pub fn cholesky_hpd<T: Real>(h: &CMat<T>) -> Option<CMat<T>> {
    let n = h.nrows();
    let mut l = CMat::<T>::zeros(n, n);
    for j in 0..n {
        let mut d = h[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > T::zero()) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = C::new(djj, T::zero());
        for i in j + 1..n {
            let mut s = h[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s.unscale(djj);
        }
    }
    Some(l)
}

/// Natural log-determinant of a Hermitian positive definite matrix, `None` when not positive definite.
pub fn ln_det_hpd<T: Real>(h: &CMat<T>) -> Option<T> {
    let l = cholesky_hpd(&hermitian_part(h))?;
    let acc = (0..l.nrows()).fold(T::zero(), |s, i| s + l[(i, i)].re.ln());
    Some(acc + acc)
}

/// Natural log-determinant of a general complex matrix (principal branch of each pivot).
pub fn ln_det_general<T: Real>(a: &CMat<T>) -> C<T> {
    let lu = a.clone().lu();
    let u = lu.u();
    let mut acc = C::new(T::zero(), T::zero());
    for i in 0..u.nrows() {
        acc += u[(i, i)].ln();
    }
    if lu.p().determinant::<T>() < T::zero() {
        acc += C::new(T::zero(), T::pi());
    }
    acc
}
