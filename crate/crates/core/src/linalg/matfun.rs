use crate::error::{Error, Result};
use crate::linalg::{expm, hermitian_part, norm2};
use crate::scalar::{CMat, Real, C};
use nalgebra::ComplexField;

const SERIES_TERMS: usize = 40;
const SMALL: f64 = 0.5;

/// Entire (or locally analytic) scalar functions lifted to matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticFn {
    /// `(e^z - 1) / z`.
    Phi,
    Cos,
    Sin,
    /// `sin z / z`.
    Sinc,
    /// `tan z / z`.
    Tanc,
    Exp,
    /// Power series with the given Taylor coefficients.
    Series(Vec<f64>),
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |p, i| p * i as f64)
}

impl AnalyticFn {
    /// First `count` Taylor coefficients at the origin.
    pub fn taylor(&self, count: usize) -> Vec<f64> {
        match self {
            AnalyticFn::Exp => (0..count).map(|k| 1.0 / factorial(k)).collect(),
            AnalyticFn::Phi => (0..count).map(|k| 1.0 / factorial(k + 1)).collect(),
            AnalyticFn::Cos => (0..count)
                .map(|k| if k % 2 == 0 { (-1f64).powi((k / 2) as i32) / factorial(k) } else { 0.0 })
                .collect(),
            AnalyticFn::Sin => (0..count)
                .map(|k| if k % 2 == 1 { (-1f64).powi((k / 2) as i32) / factorial(k) } else { 0.0 })
                .collect(),
            AnalyticFn::Sinc => (0..count)
                .map(|k| if k % 2 == 0 { (-1f64).powi((k / 2) as i32) / factorial(k + 1) } else { 0.0 })
                .collect(),
            AnalyticFn::Tanc => {
                let s = AnalyticFn::Sinc.taylor(count);
                let c = AnalyticFn::Cos.taylor(count);
                let mut q = vec![0.0; count];
                for k in 0..count {
                    let acc: f64 = (1..=k).map(|j| c[j] * q[k - j]).sum();
                    q[k] = s[k] - acc;
                }
                q
            }
            AnalyticFn::Series(v) => (0..count).map(|k| v.get(k).copied().unwrap_or(0.0)).collect(),
        }
    }

    fn series<T: Real>(&self, z: C<T>, derivative: bool) -> C<T> {
        let coeffs = self.taylor(SERIES_TERMS + 1);
        let mut acc = C::new(T::zero(), T::zero());
        if derivative {
            for k in (1..=SERIES_TERMS).rev() {
                acc = acc * z + C::new(T::lit(coeffs[k] * k as f64), T::zero());
            }
        } else {
            for k in (0..=SERIES_TERMS).rev() {
                acc = acc * z + C::new(T::lit(coeffs[k]), T::zero());
            }
        }
        acc
    }

    /// Scalar value `f(z)`.
    pub fn eval<T: Real>(&self, z: C<T>) -> C<T> {
        let small = z.modulus() < T::lit(SMALL);
        let one = C::new(T::one(), T::zero());
        match self {
            AnalyticFn::Exp => z.exp(),
            AnalyticFn::Cos => z.cos(),
            AnalyticFn::Sin => z.sin(),
            AnalyticFn::Series(_) => self.series(z, false),
            _ if small => self.series(z, false),
            AnalyticFn::Phi => (z.exp() - one) / z,
            AnalyticFn::Sinc => z.sin() / z,
            AnalyticFn::Tanc => z.tan() / z,
        }
    }

    /// Scalar derivative `f'(z)`.
    pub fn derivative<T: Real>(&self, z: C<T>) -> C<T> {
        let small = z.modulus() < T::lit(SMALL);
        let one = C::new(T::one(), T::zero());
        match self {
            AnalyticFn::Exp => z.exp(),
            AnalyticFn::Cos => -z.sin(),
            AnalyticFn::Sin => z.cos(),
            AnalyticFn::Series(_) => self.series(z, true),
            _ if small => self.series(z, true),
            AnalyticFn::Phi => ((z - one) * z.exp() + one) / (z * z),
            AnalyticFn::Sinc => (z * z.cos() - z.sin()) / (z * z),
            AnalyticFn::Tanc => {
                let c = z.cos();
                (z / (c * c) - z.tan()) / (z * z)
            }
        }
    }

    /// First divided difference `f[x, y]`.
    pub fn divided_difference<T: Real>(&self, x: C<T>, y: C<T>) -> C<T> {
        let h = x - y;
        let scale = T::one().max(x.modulus()).max(y.modulus());
        if h.modulus() > T::lit(1e-5) * scale {
            (self.eval(x) - self.eval(y)) / h
        } else {
            self.derivative((x + y).scale(T::lit(0.5)))
        }
    }

    /// `Σ k |f_k| x^{k-1}` at `x ≥ 0`.
    pub fn majorant_derivative<T: Real>(&self, x: T) -> T {
        let z = C::new(x, T::zero());
        let small = x < T::lit(SMALL);
        match self {
            AnalyticFn::Exp | AnalyticFn::Phi | AnalyticFn::Tanc => {
                if matches!(self, AnalyticFn::Tanc) && x >= T::frac_pi_2() {
                    return T::max_value().unwrap();
                }
                self.derivative(z).re
            }
            AnalyticFn::Cos => x.sinh(),
            AnalyticFn::Sin => x.cosh(),
            AnalyticFn::Sinc => {
                if small {
                    let c = self.taylor(SERIES_TERMS + 1);
                    (1..=SERIES_TERMS).rev().fold(T::zero(), |acc, k| acc * x + T::lit(c[k].abs() * k as f64))
                } else {
                    (x * x.cosh() - x.sinh()) / (x * x)
                }
            }
            AnalyticFn::Series(v) => v
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(T::zero(), |acc, (k, c)| acc * x + T::lit(c.abs() * k as f64)),
        }
    }
}

/// Unitary eigendecomposition of a Hermitian matrix, reused for several functions.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T: Real> {
    pub values: Vec<T>,
    pub vectors: CMat<T>,
}

impl<T: Real> HermitianEigen<T> {
    pub fn new(h: &CMat<T>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Dimension {
                context: "HermitianEigen::new",
                expected: "square matrix".into(),
                found: format!("{}x{}", h.nrows(), h.ncols()),
            });
        }
        let asym = (h - h.adjoint()).norm();
        if asym > T::lit(1e-10) * h.norm().max(T::one()) {
            return Err(Error::NotHermitian(asym.as_f64()));
        }
        let e = hermitian_part(h).symmetric_eigen();
        Ok(Self { values: e.eigenvalues.iter().cloned().collect(), vectors: e.eigenvectors })
    }

    /// `f(c H)` for a complex scalar `c`.
    pub fn apply(&self, f: &AnalyticFn, c: C<T>) -> CMat<T> {
        let u = &self.vectors;
        if c.re == T::zero() && c.im == T::zero() {
            let n = u.nrows();
            let f0: C<T> = f.eval(c);
            return CMat::<T>::identity(n, n).map(|z| z * f0);
        }
        let mut scaled = u.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let fv = f.eval(c.scale(lam));
            for i in 0..u.nrows() {
                scaled[(i, j)] *= fv;
            }
        }
        scaled * u.adjoint()
    }

    /// Frechet derivative of `f` at `c H` along `beta`.
    pub fn frechet(&self, f: &AnalyticFn, c: C<T>, beta: &CMat<T>) -> CMat<T> {
        let u = &self.vectors;
        let mut b = u.adjoint() * beta * u;
        let n = self.values.len();
        for i in 0..n {
            for j in 0..n {
                let dd = f.divided_difference(c.scale(self.values[i]), c.scale(self.values[j]));
                b[(i, j)] *= dd;
            }
        }
        u * b * u.adjoint()
    }
}

/// `f(H)` for Hermitian `H` via unitary diagonalization.
pub fn matfun_hermitian<T: Real>(f: &AnalyticFn, h: &CMat<T>) -> Result<CMat<T>> {
    Ok(HermitianEigen::new(h)?.apply(f, C::new(T::one(), T::zero())))
}

/// Frechet derivative `d f(H)(beta)` at Hermitian `H` from divided differences.
pub fn frechet_hermitian<T: Real>(f: &AnalyticFn, h: &CMat<T>, beta: &CMat<T>) -> Result<CMat<T>> {
    Ok(HermitianEigen::new(h)?.frechet(f, C::new(T::one(), T::zero()), beta))
}

fn phi_general<T: Real>(a: &CMat<T>) -> CMat<T> {
    let n = a.nrows();
    let mut aug = CMat::<T>::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, n)).fill_with_identity();
    expm(&aug).view((0, n), (n, n)).clone_owned()
}

/// `f(A)` for a general square matrix.
pub fn matfun_general<T: Real>(f: &AnalyticFn, a: &CMat<T>) -> Result<CMat<T>> {
    if !a.is_square() {
        return Err(Error::Dimension {
            context: "matfun_general",
            expected: "square matrix".into(),
            found: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let i = C::new(T::zero(), T::one());
    let half = T::lit(0.5);
    let out = match f {
        AnalyticFn::Exp => expm(a),
        AnalyticFn::Phi => phi_general(a),
        AnalyticFn::Cos => (expm(&a.map(|z| z * i)) + expm(&a.map(|z| -z * i))).scale(half),
        AnalyticFn::Sin => (expm(&a.map(|z| z * i)) - expm(&a.map(|z| -z * i))).map(|z| z / (i + i)),
        AnalyticFn::Sinc => (phi_general(&a.map(|z| z * i)) + phi_general(&a.map(|z| -z * i))).scale(half),
        AnalyticFn::Tanc => {
            let s = matfun_general(&AnalyticFn::Sinc, a)?;
            let c = matfun_general(&AnalyticFn::Cos, a)?;
            c.lu().solve(&s).ok_or(Error::Singular("cos(A) in tanc"))?
        }
        AnalyticFn::Series(v) => {
            let n = a.nrows();
            let mut acc = CMat::<T>::zeros(n, n);
            for c in v.iter().rev() {
                acc = &acc * a + CMat::<T>::identity(n, n).scale(T::lit(*c));
            }
            acc
        }
    };
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("matrix function evaluation overflowed".into()));
    }
    Ok(out)
}

/// Frechet derivative `d_alpha f(alpha)(beta)` as the (2,1) block of `f([[alpha, 0], [beta, alpha]])`.
pub fn matfun_frechet<T: Real>(f: &AnalyticFn, alpha: &CMat<T>, beta: &CMat<T>) -> Result<CMat<T>> {
    let n = alpha.nrows();
    if !alpha.is_square() || beta.shape() != (n, n) {
        return Err(Error::Dimension {
            context: "matfun_frechet",
            expected: format!("{n}x{n}"),
            found: format!("{}x{}", beta.nrows(), beta.ncols()),
        });
    }
    let mut block = CMat::<T>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(alpha);
    block.view_mut((n, n), (n, n)).copy_from(alpha);
    block.view_mut((n, 0), (n, n)).copy_from(beta);
    Ok(matfun_general(f, &block)?.view((n, 0), (n, n)).clone_owned())
}

/// Upper bound on the operator norm of `d_alpha f(alpha)` from the series majorant at `‖alpha‖`.
pub fn frechet_series_norm_bound<T: Real>(f: &AnalyticFn, alpha: &CMat<T>) -> T {
    f.majorant_derivative(norm2(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn herm3() -> CMat<f64> {
        CMat::from_row_slice(3, 3, &[
            C::new(0.7, 0.0), C::new(0.2, -0.5), C::new(-0.1, 0.3),
            C::new(0.2, 0.5), C::new(-1.1, 0.0), C::new(0.4, 0.1),
            C::new(-0.1, -0.3), C::new(0.4, -0.1), C::new(0.3, 0.0),
        ])
    }

    fn general3() -> CMat<f64> {
        CMat::from_row_slice(3, 3, &[
            C::new(0.1, 0.4), C::new(-0.3, 0.0), C::new(0.5, 0.2),
            C::new(0.0, -0.2), C::new(0.6, 0.1), C::new(0.2, 0.0),
            C::new(-0.4, 0.3), C::new(0.1, -0.1), C::new(-0.2, 0.0),
        ])
    }

    fn series_matrix(f: &AnalyticFn, a: &CMat<f64>, terms: usize) -> CMat<f64> {
        let c = f.taylor(terms + 1);
        let n = a.nrows();
        let mut acc = CMat::zeros(n, n);
        for k in (0..=terms).rev() {
            acc = &acc * a + CMat::identity(n, n).scale(c[k]);
        }
        acc
    }

    #[test]
    fn scalar_limits() {
        let zero = C::new(0.0f64, 0.0);
        assert_eq!(AnalyticFn::Phi.eval(zero), C::new(1.0, 0.0));
        assert_eq!(AnalyticFn::Sinc.eval(zero), C::new(1.0, 0.0));
        assert_eq!(AnalyticFn::Tanc.eval(zero), C::new(1.0, 0.0));
        assert!((AnalyticFn::Phi.derivative(zero).re - 0.5).abs() < 1e-16);
        assert!(AnalyticFn::Phi.taylor(10).iter().all(|&c| c > 0.0));
        let t = AnalyticFn::Tanc.taylor(4);
        assert!((t[2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hermitian_function_matches_series() {
        let h = herm3();
        for f in [AnalyticFn::Phi, AnalyticFn::Cos, AnalyticFn::Exp, AnalyticFn::Sinc] {
            let a = matfun_hermitian(&f, &h).unwrap();
            let b = series_matrix(&f, &h, 30);
            assert!(max_abs(&(a - b)) < 1e-12, "{f:?}");
        }
        let z = matfun_hermitian(&AnalyticFn::Phi, &CMat::<f64>::zeros(3, 3)).unwrap();
        assert!(max_abs(&(z - CMat::identity(3, 3))) < 1e-16);
        let c = matfun_hermitian(&AnalyticFn::Cos, &CMat::<f64>::zeros(2, 2)).unwrap();
        assert!(max_abs(&(c - CMat::identity(2, 2))) < 1e-16);
    }

    #[test]
    fn rejects_non_hermitian() {
        assert!(matches!(matfun_hermitian(&AnalyticFn::Phi, &general3()), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn general_function_matches_series() {
        let a = general3();
        for f in [AnalyticFn::Phi, AnalyticFn::Cos, AnalyticFn::Sin, AnalyticFn::Sinc, AnalyticFn::Tanc, AnalyticFn::Exp] {
            let x = matfun_general(&f, &a).unwrap();
            let y = series_matrix(&f, &a, 40);
            assert!(max_abs(&(x - y)) < 1e-13, "{f:?}");
        }
    }

    #[test]
    fn frechet_of_square() {
        let a = general3();
        let b = herm3();
        let sq = AnalyticFn::Series(vec![0.0, 0.0, 1.0]);
        let d = matfun_frechet(&sq, &a, &b).unwrap();
        assert!(max_abs(&(d - (&a * &b + &b * &a))) < 1e-14);
        let z = matfun_frechet(&AnalyticFn::Phi, &a, &CMat::zeros(3, 3)).unwrap();
        assert!(max_abs(&z) < 1e-16);
    }

    #[test]
    fn divided_differences_match_block_route() {
        let h = herm3().scale(1.7);
        let beta = general3();
        for f in [AnalyticFn::Phi, AnalyticFn::Exp, AnalyticFn::Cos, AnalyticFn::Sinc] {
            let dk = frechet_hermitian(&f, &h, &beta).unwrap();
            let blk = matfun_frechet(&f, &h, &beta).unwrap();
            assert!(max_abs(&(dk - blk)) < 1e-12, "{f:?}");
        }
        // nearly repeated eigenvalues
        let h2 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![C::new(0.3, 0.0), C::new(0.3 + 1e-9, 0.0), C::new(-0.2, 0.0)]));
        let dk = frechet_hermitian(&AnalyticFn::Phi, &h2, &beta).unwrap();
        let blk = matfun_frechet(&AnalyticFn::Phi, &h2, &beta).unwrap();
        assert!(max_abs(&(dk - blk)) < 1e-12);
    }

    #[test]
    fn norm_bound_values() {
        assert!((frechet_series_norm_bound(&AnalyticFn::Phi, &CMat::<f64>::zeros(2, 2)) - 0.5).abs() < 1e-16);
        let a = CMat::<f64>::from_diagonal(&nalgebra::DVector::from_vec(vec![C::new(1.0, 0.0), C::new(0.5, 0.0)]));
        assert!((frechet_series_norm_bound(&AnalyticFn::Exp, &a) - 1f64.exp()).abs() < 1e-14);
    }
}
