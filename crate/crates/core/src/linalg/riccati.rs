use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, solve_sylvester, ComplexSchur};
use crate::scalar::{CMat, Real};

/// Stabilizing solution of `A* Q + Q A + W + Q B B* Q = 0`.
#[derive(Debug, Clone)]
pub struct AreSolution<T: Real> {
    pub q: CMat<T>,
    /// Gain `B* Q`.
    pub l: CMat<T>,
    /// Closed-loop matrix `A + B L`.
    pub closed_loop: CMat<T>,
    pub residual: T,
}

fn are_residual<T: Real>(a: &CMat<T>, g: &CMat<T>, w: &CMat<T>, q: &CMat<T>) -> CMat<T> {
    a.adjoint() * q + q * a + w + q * g * q
}

fn relative<T: Real>(r: &CMat<T>, a: &CMat<T>, g: &CMat<T>, w: &CMat<T>, q: &CMat<T>) -> T {
    let qn = q.norm();
    let denom = T::lit(2.0) * a.norm() * qn + w.norm() + g.norm() * qn * qn;
    if denom > T::zero() {
        r.norm() / denom
    } else {
        r.norm()
    }
}

/// Hamiltonian Schur method with stable-subspace selection followed by Newton refinement.
pub fn solve_are_stabilizing<T: Real>(a: &CMat<T>, b: &CMat<T>, w: &CMat<T>) -> Result<AreSolution<T>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || w.shape() != (n, n) {
        return Err(Error::Dimension {
            context: "solve_are_stabilizing",
            expected: format!("A {n}x{n}, B {n}xm, W {n}x{n}"),
            found: format!("A {:?}, B {:?}, W {:?}", a.shape(), b.shape(), w.shape()),
        });
    }
    let g = b * b.adjoint();
    let w = hermitian_part(w);
    let mut h = CMat::<T>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&w);
    h.view_mut((n, n), (n, n)).copy_from(&(-a.adjoint()));
    let mut schur = ComplexSchur::new(&h)?;
    let hscale = h.norm().max(T::one());
    let tol = T::lit(1e2) * T::eps() * hscale;
    let stable = schur.reorder(|z| z.re < -tol);
    if stable != n {
        return Err(Error::NoStabilizingSolution(format!(
            "Hamiltonian has {stable} stable eigenvalues, expected {n}"
        )));
    }
    let u1 = schur.u.view((0, 0), (n, n)).clone_owned();
    let u2 = schur.u.view((n, 0), (n, n)).clone_owned();
    // Q = -U2 U1^{-1}, computed as a transposed solve.
    let lu = u1.adjoint().lu();
    let y = lu
        .solve(&u2.adjoint())
        .ok_or_else(|| Error::NoStabilizingSolution("stable subspace is not a graph".into()))?
        .adjoint();
    let mut q = hermitian_part(&(-y));

    let mut r = are_residual(a, &g, &w, &q);
    let mut rel = relative(&r, a, &g, &w, &q);
    for _ in 0..4 {
        if rel < T::lit(1e2) * T::eps() {
            break;
        }
        let ac = a + &g * &q;
        let step = match solve_sylvester(&ac.adjoint(), &ac, &r) {
            Ok(s) => s.x,
            Err(_) => break,
        };
        let cand = hermitian_part(&(&q + step));
        let rc = are_residual(a, &g, &w, &cand);
        let relc = relative(&rc, a, &g, &w, &cand);
        if relc < rel {
            q = cand;
            r = rc;
            rel = relc;
        } else {
            break;
        }
    }
    let l = b.adjoint() * &q;
    let closed_loop = a + b * &l;
    let cl_schur = ComplexSchur::new(&closed_loop)?;
    let abscissa = cl_schur.eigenvalues().iter().fold(T::min_value().unwrap(), |m, z| m.max(z.re));
    if abscissa >= T::zero() {
        return Err(Error::NoStabilizingSolution(format!(
            "closed loop not Hurwitz (abscissa {:e})",
            abscissa.as_f64()
        )));
    }
    Ok(AreSolution { q, l, closed_loop, residual: rel })
}
