//! Mixed moments `(1/2π)∫ F₁*F₂F₃*F₄F₅* dλ` of stable transfer functions via cross-Gramians.

use crate::error::{Error, Result};
use crate::linalg::{inverse, solve_sylvester_schur, to_complex, ComplexSchur};
use crate::scalar::{CMat, Mat, Real, C};
use std::sync::Arc;

#[derive(Debug)]
struct SchurPair<T: Real> {
    fwd: ComplexSchur<T>,
    adj: ComplexSchur<T>,
}

/// Strictly proper realization `C(sI − A)⁻¹B` with a Hurwitz `A` and a cached Schur form.
#[derive(Debug, Clone)]
pub struct Realization<T: Real> {
    pub a: CMat<T>,
    pub b: CMat<T>,
    pub c: CMat<T>,
    schur: Arc<SchurPair<T>>,
}

impl<T: Real> Realization<T> {
    pub fn new(a: CMat<T>, b: CMat<T>, c: CMat<T>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || c.ncols() != n {
            return Err(Error::Dimension {
                context: "Realization",
                expected: format!("A {n}x{n}, B {n}x*, C *x{n}"),
                found: format!("A {:?}, B {:?}, C {:?}", a.shape(), b.shape(), c.shape()),
            });
        }
        let fwd = ComplexSchur::new(&a)?;
        if let Some(z) = fwd.eigenvalues().into_iter().find(|z| z.re >= T::zero()) {
            return Err(Error::NotHurwitz { max_real: z.re.as_f64() });
        }
        let adj = fwd.adjoint();
        Ok(Self { a, b, c, schur: Arc::new(SchurPair { fwd, adj }) })
    }

    pub fn from_real(a: &Mat<T>, b: &Mat<T>, c: &Mat<T>) -> Result<Self> {
        Self::new(to_complex(a), to_complex(b), to_complex(c))
    }

    /// Same dynamics with a new input matrix.
    pub fn with_b(&self, b: CMat<T>) -> Self {
        assert_eq!(b.nrows(), self.a.nrows());
        Self { b, ..self.clone() }
    }

    /// Same dynamics with a new output matrix.
    pub fn with_c(&self, c: CMat<T>) -> Self {
        assert_eq!(c.ncols(), self.a.nrows());
        Self { c, ..self.clone() }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// `C(iλI − A)⁻¹B`.
    pub fn eval(&self, lambda: T) -> Result<CMat<T>> {
        let mut m = -self.a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += C::new(T::zero(), lambda);
        }
        Ok(&self.c * inverse(&m, "realization resolvent")? * &self.b)
    }
}

/// Solves `A₁*Q + QA₂ + W = 0`.
pub fn obs_sylvester<T: Real>(f1: &Realization<T>, f2: &Realization<T>, w: &CMat<T>) -> Result<CMat<T>> {
    solve_sylvester_schur(&f1.schur.adj, &f2.schur.fwd, w)
}

/// Solves `A₂P + PA₃* + W = 0`.
pub fn ctrl_sylvester<T: Real>(f2: &Realization<T>, f3: &Realization<T>, w: &CMat<T>) -> Result<CMat<T>> {
    solve_sylvester_schur(&f2.schur.fwd, &f3.schur.adj, w)
}

/// Observability cross-Gramian: `A₁*Q + QA₂ + C₁*C₂ = 0`.
pub fn obs_cross<T: Real>(f1: &Realization<T>, f2: &Realization<T>) -> Result<CMat<T>> {
    obs_sylvester(f1, f2, &(f1.c.adjoint() * &f2.c))
}

/// Controllability cross-Gramian: `A₂P + PA₃* + B₂B₃* = 0`.
pub fn ctrl_cross<T: Real>(f2: &Realization<T>, f3: &Realization<T>) -> Result<CMat<T>> {
    ctrl_sylvester(f2, f3, &(&f2.b * f3.b.adjoint()))
}

/// `(1/2π)∫ F₁*F₂ = B₁*Q₁₂B₂`.
pub fn mixed_moment2_left<T: Real>(f1: &Realization<T>, f2: &Realization<T>) -> Result<CMat<T>> {
    Ok(f1.b.adjoint() * obs_cross(f1, f2)? * &f2.b)
}

/// `(1/2π)∫ F₂F₃* = C₂P₂₃C₃*`.
pub fn mixed_moment2_right<T: Real>(f2: &Realization<T>, f3: &Realization<T>) -> Result<CMat<T>> {
    Ok(&f2.c * ctrl_cross(f2, f3)? * f3.c.adjoint())
}

/// `(1/2π)∫ F₁*F₂F₃* = B₁*Q₁₂P₂₃C₃*`.
pub fn mixed_moment3<T: Real>(f1: &Realization<T>, f2: &Realization<T>, f3: &Realization<T>) -> Result<CMat<T>> {
    Ok(f1.b.adjoint() * obs_cross(f1, f2)? * ctrl_cross(f2, f3)? * f3.c.adjoint())
}

/// `(1/2π)∫ F₁*F₂F₃*F₄ = B₁*(Q₁₂P₂₃Q₃₄ + Q₁₄′)B₄` where `A₁*Q₁₄′ + Q₁₄′A₄ + Q₁₂B₂B₃*Q₃₄ = 0`.
pub fn mixed_moment4_left<T: Real>(
    f1: &Realization<T>,
    f2: &Realization<T>,
    f3: &Realization<T>,
    f4: &Realization<T>,
) -> Result<CMat<T>> {
    let q12 = obs_cross(f1, f2)?;
    let p23 = ctrl_cross(f2, f3)?;
    let q34 = obs_cross(f3, f4)?;
    let q14 = obs_sylvester(f1, f4, &(&q12 * &f2.b * f3.b.adjoint() * &q34))?;
    Ok(f1.b.adjoint() * (&q12 * p23 * &q34 + q14) * &f4.b)
}

/// `(1/2π)∫ F₂F₃*F₄F₅* = C₂(P₂₅ + P₂₃Q₃₄P₄₅)C₅*` where `A₂P₂₅ + P₂₅A₅* + P₂₃C₃*C₄P₄₅ = 0`.
pub fn mixed_moment4_right<T: Real>(
    f2: &Realization<T>,
    f3: &Realization<T>,
    f4: &Realization<T>,
    f5: &Realization<T>,
) -> Result<CMat<T>> {
    let p23 = ctrl_cross(f2, f3)?;
    let q34 = obs_cross(f3, f4)?;
    let p45 = ctrl_cross(f4, f5)?;
    let p25 = ctrl_sylvester(f2, f5, &(&p23 * f3.c.adjoint() * &f4.c * &p45))?;
    Ok(&f2.c * (p25 + p23 * q34 * p45) * f5.c.adjoint())
}

/// `(1/2π)∫ F₁*F₂F₃*F₄F₅* = B₁*(Q₁₂P₂₅ + Q₁₄P₄₅)C₅*`.
pub fn mixed_moment5<T: Real>(
    f1: &Realization<T>,
    f2: &Realization<T>,
    f3: &Realization<T>,
    f4: &Realization<T>,
    f5: &Realization<T>,
) -> Result<CMat<T>> {
    let q12 = obs_cross(f1, f2)?;
    let p23 = ctrl_cross(f2, f3)?;
    let q34 = obs_cross(f3, f4)?;
    let p45 = ctrl_cross(f4, f5)?;
    let c34 = f3.c.adjoint() * &f4.c;
    let q14 = obs_sylvester(f1, f4, &(&q12 * &p23 * &c34 + f1.c.adjoint() * &f2.c * &p23 * &q34))?;
    let p25 = ctrl_sylvester(f2, f5, &(&p23 * &c34 * &p45))?;
    Ok(f1.b.adjoint() * (q12 * p25 + q14 * p45) * f5.c.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::quadrature::{integrate_half_line, QuadOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar() -> Realization<f64> {
        Realization::from_real(&Mat::from_element(1, 1, -1.0), &Mat::from_element(1, 1, 1.0), &Mat::from_element(1, 1, 1.0)).unwrap()
    }

    fn random_cmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat<f64> {
        CMat::from_fn(r, c, |_, _| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_realization(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> Realization<f64> {
        let mut a = random_cmat(rng, n, n);
        let shift = ComplexSchur::new(&a).unwrap().eigenvalues().iter().fold(f64::NEG_INFINITY, |s, z| s.max(z.re));
        let margin = rng.random_range(0.3..1.5);
        for i in 0..n {
            a[(i, i)] -= C::new(shift + margin, 0.0);
        }
        Realization::new(a, random_cmat(rng, n, m), random_cmat(rng, p, n)).unwrap()
    }

    /// `(1/2π)∫_ℝ f` for a matrix-valued integrand by adaptive quadrature.
    fn quad(rows: usize, cols: usize, f: impl Fn(f64) -> CMat<f64> + Sync) -> CMat<f64> {
        let dim = 2 * rows * cols;
        let rep = integrate_half_line(
            |l: f64| {
                let mut out = vec![0.0; dim];
                for x in [l, -l] {
                    for (i, z) in f(x).iter().enumerate() {
                        out[2 * i] += z.re;
                        out[2 * i + 1] += z.im;
                    }
                }
                Ok(out)
            },
            &[0.5, 1.0, 2.0],
            4.0,
            dim,
            QuadOptions { abs_tol: 1e-11, rel_tol: 1e-9, max_intervals: 4000 },
        )
        .unwrap();
        CMat::from_fn(rows, cols, |i, j| {
            let k = i + j * rows;
            C::new(rep.value[2 * k], rep.value[2 * k + 1]) / (2.0 * std::f64::consts::PI)
        })
    }

    #[test]
    fn scalar_values() {
        let f = scalar();
        assert!((mixed_moment3(&f, &f, &f).unwrap()[(0, 0)] - C::new(0.25, 0.0)).norm() < 1e-15);
        assert!((mixed_moment5(&f, &f, &f, &f, &f).unwrap()[(0, 0)] - C::new(3.0 / 16.0, 0.0)).norm() < 1e-15);
        assert!((mixed_moment2_left(&f, &f).unwrap()[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((mixed_moment2_right(&f, &f).unwrap()[(0, 0)].re - 0.5).abs() < 1e-15);
        // |F|⁴ integrates to 1/4 with F = 1/(s+1)
        assert!((mixed_moment4_left(&f, &f, &f, &f).unwrap()[(0, 0)].re - 0.25).abs() < 1e-15);
        assert!((mixed_moment4_right(&f, &f, &f, &f).unwrap()[(0, 0)].re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_middle_factor_vanishes() {
        let f = scalar();
        let z = f.with_b(CMat::zeros(1, 1)).with_c(CMat::zeros(1, 1));
        assert_eq!(mixed_moment3(&f, &z, &f).unwrap()[(0, 0)].norm(), 0.0);
        assert_eq!(mixed_moment5(&f, &f, &z, &f, &f).unwrap()[(0, 0)].norm(), 0.0);
    }

    #[test]
    fn rejects_unstable() {
        let r = Realization::from_real(&Mat::from_element(1, 1, 0.5), &Mat::from_element(1, 1, 1.0), &Mat::from_element(1, 1, 1.0));
        assert!(matches!(r, Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn low_order_moments_match_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let f1 = random_realization(&mut rng, 3, 2, 2);
            let f2 = random_realization(&mut rng, 2, 3, 2);
            let f3 = random_realization(&mut rng, 4, 3, 2);
            let f4 = random_realization(&mut rng, 2, 2, 2);
            let oracle = quad(2, 3, |l| f1.eval(l).unwrap().adjoint() * f2.eval(l).unwrap());
            assert!(max_abs(&(mixed_moment2_left(&f1, &f2).unwrap() - oracle)) < 1e-7);
            let oracle = quad(2, 2, |l| f2.eval(l).unwrap() * f3.eval(l).unwrap().adjoint());
            assert!(max_abs(&(mixed_moment2_right(&f2, &f3).unwrap() - oracle)) < 1e-7);
            let oracle = quad(2, 2, |l| {
                f1.eval(l).unwrap().adjoint() * f2.eval(l).unwrap() * f3.eval(l).unwrap().adjoint() * f4.eval(l).unwrap()
            });
            assert!(max_abs(&(mixed_moment4_left(&f1, &f2, &f3, &f4).unwrap() - oracle)) < 1e-7);
            let f5 = random_realization(&mut rng, 3, 2, 2);
            let oracle = quad(2, 2, |l| {
                f2.eval(l).unwrap() * f3.eval(l).unwrap().adjoint() * f4.eval(l).unwrap() * f5.eval(l).unwrap().adjoint()
            });
            assert!(max_abs(&(mixed_moment4_right(&f2, &f3, &f4, &f5).unwrap() - oracle)) < 1e-7);
        }
    }

    #[test]
    fn third_order_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f1 = random_realization(&mut rng, 3, 2, 3);
            let f2 = random_realization(&mut rng, 2, 2, 3);
            let f3 = random_realization(&mut rng, 3, 2, 2);
            let oracle = quad(2, 2, |l| f1.eval(l).unwrap().adjoint() * f2.eval(l).unwrap() * f3.eval(l).unwrap().adjoint());
            let d = max_abs(&(mixed_moment3(&f1, &f2, &f3).unwrap() - oracle));
            assert!(d < 1e-6, "{d}");
        }
    }

    #[test]
    fn fifth_order_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let f1 = random_realization(&mut rng, 2, 2, 2);
            let f2 = random_realization(&mut rng, 3, 3, 2);
            let f3 = random_realization(&mut rng, 2, 3, 2);
            let f4 = random_realization(&mut rng, 2, 2, 2);
            let f5 = random_realization(&mut rng, 3, 2, 2);
            let oracle = quad(2, 2, |l| {
                f1.eval(l).unwrap().adjoint()
                    * f2.eval(l).unwrap()
                    * f3.eval(l).unwrap().adjoint()
                    * f4.eval(l).unwrap()
                    * f5.eval(l).unwrap().adjoint()
            });
            let d = max_abs(&(mixed_moment5(&f1, &f2, &f3, &f4, &f5).unwrap() - oracle));
            assert!(d < 1e-6, "{d}");
        }
    }
}
