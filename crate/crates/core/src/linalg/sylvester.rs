use crate::error::{Error, Result};
use crate::linalg::{is_hurwitz_eps, spectral_abscissa, to_complex, ComplexSchur};
use crate::scalar::{CMat, Mat, Real, C};
use nalgebra::ComplexField;

/// Solution of a Sylvester equation together with its relative residual.
#[derive(Debug, Clone)]
pub struct SylvesterSolution<T: Real> {
    pub x: CMat<T>,
    pub residual: T,
}

/// Solves `A X + X B + W = 0` given Schur forms of `A` and `B`.
pub fn solve_sylvester_schur<T: Real>(
    sa: &ComplexSchur<T>,
    sb: &ComplexSchur<T>,
    w: &CMat<T>,
) -> Result<CMat<T>> {
    let (n, m) = (sa.dim(), sb.dim());
    if w.shape() != (n, m) {
        return Err(Error::Dimension {
            context: "solve_sylvester",
            expected: format!("{n}x{m}"),
            found: format!("{}x{}", w.nrows(), w.ncols()),
        });
    }
    if n == 0 || m == 0 {
        return Ok(CMat::zeros(n, m));
    }
    let scale = sa.t.iter().chain(sb.t.iter()).fold(T::zero(), |s, z| s.max(z.modulus()));
    let scale = if scale > T::zero() { scale } else { T::one() };
    let mut sep = T::max_value().unwrap();
    for i in 0..n {
        for j in 0..m {
            sep = sep.min((sa.t[(i, i)] + sb.t[(j, j)]).modulus());
        }
    }
    if sep <= T::lit(1e3) * T::eps() * scale {
        return Err(Error::SingularSylvester(sep.as_f64()));
    }
    let c = sa.u.adjoint() * w * &sb.u;
    let mut y = CMat::<T>::zeros(n, m);
    let mut rhs = vec![C::new(T::zero(), T::zero()); n];
    for j in 0..m {
        for i in 0..n {
            let mut acc = -c[(i, j)];
            for k in 0..j {
                acc -= sb.t[(k, j)] * y[(i, k)];
            }
            rhs[i] = acc;
        }
        let shift = sb.t[(j, j)];
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for k in i + 1..n {
                acc -= sa.t[(i, k)] * y[(k, j)];
            }
            y[(i, j)] = acc / (sa.t[(i, i)] + shift);
        }
    }
    Ok(&sa.u * y * sb.u.adjoint())
}

/// Solves `A X + X B + W = 0` by complex Bartels–Stewart.
pub fn solve_sylvester<T: Real>(a: &CMat<T>, b: &CMat<T>, w: &CMat<T>) -> Result<SylvesterSolution<T>> {
    let sa = ComplexSchur::new(a)?;
    let sb = ComplexSchur::new(b)?;
    let x = solve_sylvester_schur(&sa, &sb, w)?;
    let res = (a * &x + &x * b + w).norm();
    let denom = (a.norm() + b.norm()) * x.norm() + w.norm();
    let residual = if denom > T::zero() { res / denom } else { res };
    Ok(SylvesterSolution { x, residual })
}

/// Solves the complex Lyapunov equation `A X + X A* + U = 0`.
pub fn solve_lyapunov_complex<T: Real>(a: &CMat<T>, u: &CMat<T>) -> Result<CMat<T>> {
    let sa = ComplexSchur::new(a)?;
    if sa.eigenvalues().iter().any(|z| z.re >= T::zero()) {
        let max_real = sa.eigenvalues().iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re.as_f64()));
        return Err(Error::NotHurwitz { max_real });
    }
    solve_sylvester_schur(&sa, &sa.adjoint(), u)
}

/// Solves `A X + X Aᵀ + U = 0` for Hurwitz real `A`.
pub fn solve_lyapunov<T: Real>(a: &Mat<T>, u: &Mat<T>) -> Result<Mat<T>> {
    if !is_hurwitz_eps(a, T::zero()) {
        let max_real = spectral_abscissa(a).map(|s| s.as_f64()).unwrap_or(f64::NAN);
        return Err(Error::NotHurwitz { max_real });
    }
    if u.shape() != a.shape() {
        return Err(Error::Dimension {
            context: "solve_lyapunov",
            expected: format!("{}x{}", a.nrows(), a.ncols()),
            found: format!("{}x{}", u.nrows(), u.ncols()),
        });
    }
    Ok(solve_lyapunov_complex(&to_complex(a), &to_complex(u))?.map(|z| z.re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm_real, max_abs};

    fn hurwitz3() -> Mat<f64> {
        Mat::from_row_slice(3, 3, &[-1.0, 2.0, 0.3, -0.5, -0.8, 1.0, 0.2, -0.4, -2.0])
    }

    #[test]
    fn scalar_lyapunov() {
        let x = solve_lyapunov(&Mat::from_element(1, 1, -1.0f64), &Mat::from_element(1, 1, 2.0)).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_identity_halves() {
        let u = Mat::from_row_slice(2, 2, &[1.0f64, 2.0, -3.0, 4.0]);
        let x = solve_lyapunov(&(-Mat::identity(2, 2)), &u).unwrap();
        assert!(max_abs(&(x - u.scale(0.5))) < 1e-15);
    }

    #[test]
    fn rejects_unstable() {
        assert!(matches!(
            solve_lyapunov(&Mat::<f64>::identity(2, 2), &Mat::identity(2, 2)),
            Err(Error::NotHurwitz { .. })
        ));
    }

    #[test]
    fn gramian_matches_time_integral() {
        let a = hurwitz3();
        let x = solve_lyapunov(&a, &Mat::identity(3, 3)).unwrap();
        // composite Simpson on [0, 40] of e^{tA} e^{tAᵀ}
        let (t_end, steps) = (40.0, 20000);
        let h = t_end / steps as f64;
        let step = expm_real(&a.scale(h));
        let mut e = Mat::<f64>::identity(3, 3);
        let mut acc = Mat::<f64>::zeros(3, 3);
        for k in 0..=steps {
            let w = if k == 0 || k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += (&e * e.transpose()).scale(w * h / 3.0);
            e = &step * e;
        }
        let d = max_abs(&(x - acc));
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn scalar_sylvester_and_zero_rhs() {
        let a = to_complex(&Mat::from_element(1, 1, -1.0f64));
        let b = to_complex(&Mat::from_element(1, 1, -2.0f64));
        let w = to_complex(&Mat::from_element(1, 1, 3.0f64));
        let s = solve_sylvester(&a, &b, &w).unwrap();
        assert!((s.x[(0, 0)].re - 1.0).abs() < 1e-15);
        let z = solve_sylvester(&a, &b, &CMat::zeros(1, 1)).unwrap();
        assert_eq!(z.x[(0, 0)].norm(), 0.0);
    }

    #[test]
    fn cross_gramian_matches_time_integral() {
        let a1 = hurwitz3();
        let a2 = Mat::from_row_slice(2, 2, &[-0.7, 1.5, -1.5, -0.7]);
        let w = Mat::from_row_slice(3, 2, &[1.0, 0.5, -0.2, 0.3, 0.8, -1.0]);
        let s = solve_sylvester(&to_complex(&a1.transpose()), &to_complex(&a2), &to_complex(&w)).unwrap();
        assert!(s.residual < 1e-13);
        let (t_end, steps) = (40.0, 20000);
        let h = t_end / steps as f64;
        let (s1, s2) = (expm_real(&a1.transpose().scale(h)), expm_real(&a2.scale(h)));
        let (mut e1, mut e2) = (Mat::identity(3, 3), Mat::identity(2, 2));
        let mut acc = Mat::zeros(3, 2);
        for k in 0..=steps {
            let wt = if k == 0 || k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += (&e1 * &w * &e2).scale(wt * h / 3.0);
            e1 = &s1 * e1;
            e2 = &s2 * e2;
        }
        assert!(max_abs(&(s.x.map(|z| z.re) - acc)) < 1e-10);
    }

    #[test]
    fn single_precision_lyapunov() {
        let x = solve_lyapunov(&Mat::from_element(1, 1, -2.0f32), &Mat::from_element(1, 1, 1.0f32)).unwrap();
        assert!((x[(0, 0)] - 0.25f32).abs() < 1e-6f32);
    }
}
