use crate::error::{Error, Result};
use crate::scalar::{CMat, Real, C};
use nalgebra::{ComplexField, Schur};

/// Complex Schur form `A = U T U*` with `T` upper triangular.
#[derive(Debug, Clone)]
pub struct ComplexSchur<T: Real> {
    pub u: CMat<T>,
    pub t: CMat<T>,
}

impl<T: Real> ComplexSchur<T> {
    pub fn new(a: &CMat<T>) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::Dimension {
                context: "ComplexSchur::new",
                expected: "square matrix".into(),
                found: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        if n == 0 {
            return Ok(Self { u: CMat::zeros(0, 0), t: CMat::zeros(0, 0) });
        }
        if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Eigen("non-finite matrix entry".into()));
        }
        let schur = Schur::try_new(a.clone(), T::eps(), 10_000 + 100 * n)
            .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
        let (u, mut t) = schur.unpack();
        let mut out = Self { u, t: t.clone() };
        // Any residual 2x2 bumps are split explicitly.
        let mut k = 0;
        while k + 1 < n {
            let scale = t[(k, k)].modulus() + t[(k + 1, k + 1)].modulus();
            if t[(k + 1, k)].modulus() > T::eps() * scale.max(T::one()) {
                out.split_block(k)?;
                t = out.t.clone();
            }
            k += 1;
        }
        for j in 0..n {
            for i in j + 1..n {
                out.t[(i, j)] = C::new(T::zero(), T::zero());
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// Eigenvalues in Schur order.
    pub fn eigenvalues(&self) -> Vec<C<T>> {
        (0..self.dim()).map(|i| self.t[(i, i)]).collect()
    }

    /// Schur form of `A*`, obtained by reversing the basis order.
    pub fn adjoint(&self) -> Self {
        let n = self.dim();
        let t = CMat::from_fn(n, n, |i, j| self.t[(n - 1 - j, n - 1 - i)].conj());
        let u = CMat::from_fn(n, n, |i, j| self.u[(i, n - 1 - j)]);
        Self { u, t }
    }

    /// Reconstructs `U T U*`.
    pub fn matrix(&self) -> CMat<T> {
        &self.u * &self.t * self.u.adjoint()
    }

    fn apply_rotation(&mut self, k: usize, z: [[C<T>; 2]; 2]) {
        let n = self.dim();
        for j in 0..n {
            let (a, b) = (self.t[(k, j)], self.t[(k + 1, j)]);
            self.t[(k, j)] = z[0][0].conj() * a + z[1][0].conj() * b;
            self.t[(k + 1, j)] = z[0][1].conj() * a + z[1][1].conj() * b;
        }
        for i in 0..n {
            let (a, b) = (self.t[(i, k)], self.t[(i, k + 1)]);
            self.t[(i, k)] = a * z[0][0] + b * z[1][0];
            self.t[(i, k + 1)] = a * z[0][1] + b * z[1][1];
            let (a, b) = (self.u[(i, k)], self.u[(i, k + 1)]);
            self.u[(i, k)] = a * z[0][0] + b * z[1][0];
            self.u[(i, k + 1)] = a * z[0][1] + b * z[1][1];
        }
    }

    fn unit_rotation(v0: C<T>, v1: C<T>) -> Option<[[C<T>; 2]; 2]> {
        let nrm = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
        if nrm == T::zero() {
            return None;
        }
        let (a, b) = (v0.unscale(nrm), v1.unscale(nrm));
        Some([[a, -b.conj()], [b, a.conj()]])
    }

    fn split_block(&mut self, k: usize) -> Result<()> {
        let (a, b, c, d) = (self.t[(k, k)], self.t[(k, k + 1)], self.t[(k + 1, k)], self.t[(k + 1, k + 1)]);
        let half = T::lit(0.5);
        let tr = (a + d) * half;
        let disc = ((a - d) * (a - d) * half * half + b * c).sqrt();
        let mu = tr + disc;
        let (v0, v1) = if (a - mu).norm_sqr() + b.norm_sqr() >= c.norm_sqr() + (d - mu).norm_sqr() {
            (b, mu - a)
        } else {
            (mu - d, c)
        };
        let z = Self::unit_rotation(v0, v1).ok_or_else(|| Error::Eigen("degenerate 2x2 block".into()))?;
        self.apply_rotation(k, z);
        self.t[(k + 1, k)] = C::new(T::zero(), T::zero());
        Ok(())
    }

    fn swap(&mut self, k: usize) {
        let (a, b, t12) = (self.t[(k, k)], self.t[(k + 1, k + 1)], self.t[(k, k + 1)]);
        if let Some(z) = Self::unit_rotation(t12, b - a) {
            self.apply_rotation(k, z);
        }
        self.t[(k + 1, k)] = C::new(T::zero(), T::zero());
        self.t[(k, k)] = b;
        self.t[(k + 1, k + 1)] = a;
    }

    /// Moves eigenvalues satisfying `select` to the leading block; returns how many were selected.
    pub fn reorder<F: Fn(C<T>) -> bool>(&mut self, select: F) -> usize {
        let n = self.dim();
        let mut placed = 0;
        for j in 0..n {
            if select(self.t[(j, j)]) {
                let mut k = j;
                while k > placed {
                    self.swap(k - 1);
                    k -= 1;
                }
                placed += 1;
            }
        }
        placed
    }
}
