//! State-space route to the core matrix through the infinite cascade and its truncations.

use crate::error::{Error, Result};
use crate::freq::{scan_grid, spectral_densities};
use crate::linalg::{hermitian_part, inverse, norm2, solve_are_stabilizing, solve_lyapunov, to_complex};
use crate::moments::{ctrl_cross, ctrl_sylvester, obs_sylvester, Realization};
use crate::scalar::{CMat, Mat, Real, C};
use crate::system::{is_hurwitz, s_root, LinearSystem};
use crate::variational::CoreMatrix;
use rayon::prelude::*;

/// Matrices `α_k, β_k, γ_k` of the Wick-type reordering recursion.
///
/// `alpha[k]` and `beta[k]` are valid for `1 ≤ k ≤ depth` (`beta[0] = I`), `gamma[k]` for `k < depth`.
/// `alpha[0]` is the zero matrix.
#[derive(Debug, Clone)]
pub struct AbgRecursion<T: Real> {
    pub alpha: Vec<Mat<T>>,
    pub beta: Vec<Mat<T>>,
    pub gamma: Vec<Mat<T>>,
    /// Condition numbers of `γ_k`.
    pub gamma_cond: Vec<f64>,
}

impl<T: Real> AbgRecursion<T> {
    pub fn depth(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn max_beta_norm(&self, upto: usize) -> T {
        self.beta[1..=upto.min(self.depth())].iter().fold(T::zero(), |m, b| m.max(norm2(b)))
    }
}

fn condition<T: Real>(m: &Mat<T>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let (mx, mn) = sv.iter().fold((T::zero(), T::max_value().unwrap()), |(a, b), &s| (a.max(s), b.min(s)));
    if mn > T::zero() {
        (mx / mn).as_f64()
    } else {
        f64::INFINITY
    }
}

/// Runs the recursion to depth `K`; a `γ_k` with condition number above `cond_limit` aborts.
pub fn recursion_abg<T: Real>(sys: &LinearSystem<T>, depth: usize, cond_limit: f64) -> Result<AbgRecursion<T>> {
    if !is_hurwitz(&sys.a) {
        return Err(Error::NotHurwitz {
            max_real: crate::linalg::spectral_abscissa(&sys.a).map(|s| s.as_f64()).unwrap_or(f64::NAN),
        });
    }
    let n = sys.states();
    let theta = sys.theta.clone();
    let c0 = condition(&theta);
    if c0 > cond_limit {
        return Err(Error::IllConditionedGamma { k: 0, rcond: 1.0 / c0 });
    }
    let theta_inv = inverse(&theta, "CCR matrix")?;
    let pi = sys.pi();
    let mut alpha = vec![Mat::zeros(n, n), theta.clone()];
    let mut beta = vec![Mat::identity(n, n), &theta_inv * sys.mho() * &theta_inv];
    let mut gamma = vec![theta];
    let mut gamma_cond = vec![c0];
    alpha.truncate(depth + 1);
    beta.truncate(depth + 1);
    for k in 1..depth {
        let src = if k == 1 { &alpha[1] * &pi * &gamma[0] } else { &alpha[k] * &gamma[k - 1] };
        let g = solve_lyapunov(&sys.a, &src)?;
        let cond = condition(&g);
        if cond > cond_limit {
            return Err(Error::IllConditionedGamma { k, rcond: 1.0 / cond });
        }
        let g_inv = inverse(&g, "gamma")?;
        beta.push(&g_inv * &src * &g_inv);
        alpha.push(&g * &beta[k]);
        gamma.push(g);
        gamma_cond.push(cond);
    }
    Ok(AbgRecursion { alpha, beta, gamma, gamma_cond })
}

/// `G_k(iλ) = Gα_k ⋯ Gα₁𝒞ᵀ`, or `I_r` for `k = 0`.
pub fn g_k<T: Real>(sys: &LinearSystem<T>, rec: &AbgRecursion<T>, k: usize, g: &CMat<T>) -> CMat<T> {
    if k == 0 {
        return CMat::identity(sys.outputs(), sys.outputs());
    }
    let mut out = to_complex(&sys.c.transpose());
    for j in 1..=k {
        out = g * to_complex(&rec.alpha[j]) * out;
    }
    out
}

/// `Ψ(λ)^k = (−1)^k G_k*β_kG_k`.
pub fn psi_power_factorized<T: Real>(sys: &LinearSystem<T>, rec: &AbgRecursion<T>, k: usize, lambda: T) -> Result<CMat<T>> {
    if k > rec.depth() {
        return Err(Error::Dimension { context: "psi_power_factorized", expected: format!("k <= {}", rec.depth()), found: k.to_string() });
    }
    if k == 0 {
        return Ok(CMat::identity(sys.outputs(), sys.outputs()));
    }
    let (_, g) = crate::freq::transfer(sys, lambda)?;
    let gk = g_k(sys, rec, k, &g);
    let sign = if k % 2 == 0 { T::one() } else { -T::one() };
    Ok((gk.adjoint() * to_complex(&rec.beta[k]) * gk).scale(sign))
}

/// `‖GUG* − VG*V⁻¹UV⁻¹GV‖` at `λ` with `𝒜V + V𝒜ᵀ + U = 0`.
pub fn transposition_check<T: Real>(sys: &LinearSystem<T>, u: &Mat<T>, lambda: T) -> Result<T> {
    let v = solve_lyapunov(&sys.a, u)?;
    if condition(&v) > 1e14 {
        return Err(Error::Singular("Lyapunov solution V"));
    }
    let vi = to_complex(&inverse(&v, "Lyapunov solution V")?);
    let (v, u) = (to_complex(&v), to_complex(u));
    let (_, g) = crate::freq::transfer(sys, lambda)?;
    let lhs = &g * &u * g.adjoint();
    let rhs = &v * g.adjoint() * &vi * &u * &vi * &g * &v;
    Ok((lhs - rhs).norm())
}

/// Grid estimate of `sup_λ ‖Ψ(λ)‖₂`.
pub fn psi_norm_estimate<T: Real>(sys: &LinearSystem<T>) -> Result<T> {
    let mut best = T::zero();
    for l in scan_grid(sys) {
        best = best.max(norm2(&spectral_densities(sys, T::lit(l))?.1));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeOptions {
    /// Fixed truncation order; chosen by the tail rule when absent.
    pub order: Option<usize>,
    /// Truncation `j + k ≤ J_max` of the double series; defaults to the cascade order.
    pub series_order: Option<usize>,
    pub tail_tol: f64,
    pub max_order: usize,
    pub cond_limit: f64,
}

impl Default for CascadeOptions {
    fn default() -> Self {
        Self { order: None, series_order: None, tail_tol: 1e-12, max_order: 40, cond_limit: 1e12 }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |p, i| p * i as f64)
}

/// Smallest `N` with `(2θ‖Ψ‖∞)^{N+1} / (N+2)! · max(1, max_k ‖β_k‖) < tol`.
pub fn choose_order<T: Real>(sys: &LinearSystem<T>, theta: T, opts: &CascadeOptions) -> Result<(usize, AbgRecursion<T>)> {
    if let Some(n) = opts.order {
        return Ok((n, recursion_abg(sys, n, opts.cond_limit)?));
    }
    let x = 2.0 * theta.as_f64() * psi_norm_estimate(sys)?.as_f64();
    if x == 0.0 {
        return Ok((0, recursion_abg(sys, 0, opts.cond_limit)?));
    }
    let mut depth = opts.max_order.min(8);
    loop {
        let rec = recursion_abg(sys, depth, opts.cond_limit)?;
        for n in 0..depth {
            let b = rec.max_beta_norm(n + 1).as_f64().max(1.0);
            if x.powi(n as i32 + 1) / factorial(n + 2) * b < opts.tail_tol {
                return Ok((n, rec));
            }
        }
        if depth >= opts.max_order {
            return Ok((depth, rec));
        }
        depth = (2 * depth).min(opts.max_order);
    }
}

/// Truncation of the cascade at order `N`: `𝒻 = [I_r; G_1; …; G_N]`, `ℋ_θ,N`, and the realization of `𝒻FS`.
#[derive(Debug, Clone)]
pub struct CascadeTruncation<T: Real> {
    pub order: usize,
    pub theta: T,
    pub rec: AbgRecursion<T>,
    /// `(N+1)(n+ν)` square, block lower bidiagonal.
    pub s_a: Mat<T>,
    pub s_b: CMat<T>,
    pub s_c: Mat<T>,
    /// `diag(I_r, (−2iθ)^k φ_k β_k)`.
    pub h: CMat<T>,
    /// Realization `(f_a, f_b, f_c, f_d)` of `𝒻`.
    pub f_a: Mat<T>,
    pub f_b: Mat<T>,
    pub f_c: Mat<T>,
    pub f_d: Mat<T>,
}

/// `(−2iθ)^k φ_k`.
fn h_coeff<T: Real>(theta: T, k: usize) -> C<T> {
    let phi_k = T::lit(1.0 / factorial(k + 1));
    let mut z = C::new(phi_k, T::zero());
    for _ in 0..k {
        z *= C::new(T::zero(), -(theta + theta));
    }
    z
}

pub fn build_cascade<T: Real>(sys: &LinearSystem<T>, theta: T, order: usize, rec: AbgRecursion<T>) -> Result<CascadeTruncation<T>> {
    if rec.depth() < order {
        return Err(Error::Dimension { context: "build_cascade", expected: format!("depth >= {order}"), found: rec.depth().to_string() });
    }
    let (ns, r, m) = (sys.states(), sys.outputs(), sys.inputs());
    let nc = (order + 1) * ns;
    let mut s_a = Mat::zeros(nc, nc);
    for k in 0..=order {
        s_a.view_mut((k * ns, k * ns), (ns, ns)).copy_from(&sys.a);
    }
    if order >= 1 {
        s_a.view_mut((ns, 0), (ns, ns)).copy_from(&(&rec.alpha[1] * sys.pi()));
    }
    for k in 2..=order {
        s_a.view_mut((k * ns, (k - 1) * ns), (ns, ns)).copy_from(&rec.alpha[k]);
    }
    let mut s_b = CMat::zeros(nc, m);
    s_b.view_mut((0, 0), (ns, m)).copy_from(&(to_complex(&sys.b) * s_root(&sys.j)));
    let mut s_c = Mat::zeros(r + order * ns, nc);
    s_c.view_mut((0, 0), (r, ns)).copy_from(&sys.c);
    for k in 1..=order {
        s_c.view_mut((r + (k - 1) * ns, k * ns), (ns, ns)).fill_with_identity();
    }
    let mut h = CMat::zeros(r + order * ns, r + order * ns);
    h.view_mut((0, 0), (r, r)).fill_with_identity();
    for k in 1..=order {
        let blk = to_complex(&rec.beta[k]).map(|z| z * h_coeff(theta, k));
        h.view_mut((r + (k - 1) * ns, r + (k - 1) * ns), (ns, ns)).copy_from(&blk);
    }
    let nf = order * ns;
    let f_a = s_a.view((ns, ns), (nf, nf)).clone_owned();
    let mut f_b = Mat::zeros(nf, r);
    if order >= 1 {
        f_b.view_mut((0, 0), (ns, r)).copy_from(&(&rec.alpha[1] * sys.c.transpose()));
    }
    let f_c = s_c.view((0, ns), (r + nf, nf)).clone_owned();
    let mut f_d = Mat::zeros(r + nf, r);
    f_d.view_mut((0, 0), (r, r)).fill_with_identity();
    Ok(CascadeTruncation { order, theta, rec, s_a, s_b, s_c, h, f_a, f_b, f_c, f_d })
}

fn resolvent<T: Real>(a: &CMat<T>, lambda: T) -> Result<CMat<T>> {
    let mut m = -a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += C::new(T::zero(), lambda);
    }
    inverse(&m, "cascade resolvent")
}

impl<T: Real> CascadeTruncation<T> {
    pub fn states(&self) -> usize {
        self.s_a.nrows()
    }

    /// `𝒻_N(iλ)`.
    pub fn eval_f(&self, lambda: T) -> Result<CMat<T>> {
        let d = to_complex(&self.f_d);
        if self.order == 0 {
            return Ok(d);
        }
        Ok(to_complex(&self.f_c) * resolvent(&to_complex(&self.f_a), lambda)? * to_complex(&self.f_b) + d)
    }

    /// `𝒻_N(iλ)*ℋ_θ,N𝒻_N(iλ)`.
    pub fn first_factor_product(&self, lambda: T) -> Result<CMat<T>> {
        let f = self.eval_f(lambda)?;
        Ok(f.adjoint() * &self.h * f)
    }

    /// `Σ_{k>N} φ_k (2θ‖Ψ‖)^k`.
    pub fn tail_bound(&self, psi_norm: T) -> T {
        let x = T::lit(2.0) * self.theta * psi_norm;
        let mut acc = T::zero();
        let mut term = T::one();
        for k in 1..200 {
            term = term * x / T::lit((k + 1) as f64);
            if k > self.order {
                acc += term;
                if term < T::eps() * acc {
                    break;
                }
            }
        }
        acc
    }
}

/// Stabilizing solution of the truncated cascade Riccati equation and the factor `𝒢_θ`.
#[derive(Debug, Clone)]
pub struct CascadeAre<T: Real> {
    pub q: CMat<T>,
    pub l: CMat<T>,
    /// `sA + sB·sL`.
    pub a_g: CMat<T>,
    pub residual: T,
}

pub fn solve_cascade_are<T: Real>(casc: &CascadeTruncation<T>) -> Result<CascadeAre<T>> {
    let sc = to_complex(&casc.s_c);
    let w = hermitian_part(&(sc.adjoint() * &casc.h * &sc).scale(casc.theta));
    let sol = solve_are_stabilizing(&to_complex(&casc.s_a), &casc.s_b, &w)?;
    Ok(CascadeAre { q: sol.q, l: sol.l, a_g: sol.closed_loop, residual: sol.residual })
}

impl<T: Real> CascadeAre<T> {
    /// `𝒢_θ(iλ) = I + sL(iλ − sA − sB·sL)⁻¹sB`.
    pub fn eval_g(&self, casc: &CascadeTruncation<T>, lambda: T) -> Result<CMat<T>> {
        let m = casc.s_b.ncols();
        Ok(CMat::identity(m, m) + &self.l * resolvent(&self.a_g, lambda)? * &casc.s_b)
    }

    /// `‖𝒦*diag(ℋ, I)𝒦 − I‖` at `λ`.
    pub fn isometry_residual(&self, casc: &CascadeTruncation<T>, lambda: T) -> Result<T> {
        let x = resolvent(&to_complex(&casc.s_a), lambda)? * &casc.s_b;
        let top = (to_complex(&casc.s_c) * &x).scale(casc.theta.sqrt());
        let m = casc.s_b.ncols();
        let bottom = CMat::identity(m, m) - &self.l * &x;
        let prod = top.adjoint() * &casc.h * &top + bottom.adjoint() * &bottom;
        Ok((prod - CMat::identity(m, m)).norm())
    }
}

/// State-space core matrix with the truncation data used.
#[derive(Debug, Clone)]
pub struct StateSpaceCore<T: Real> {
    pub core: CoreMatrix<T>,
    pub order: usize,
    pub are_residual: T,
}

/// Block row `k` of `sC`: `[𝒞, 0, …]` for `k = 0`, otherwise the selector of state block `k`.
fn sc_row<T: Real>(casc: &CascadeTruncation<T>, ns: usize, r: usize, k: usize) -> CMat<T> {
    let s = to_complex(&casc.s_c);
    if k == 0 {
        s.rows(0, r).clone_owned()
    } else {
        s.rows(r + (k - 1) * ns, ns).clone_owned()
    }
}

/// `β̃_k`: `I_r` for `k = 0`, otherwise `β_k`.
fn beta_t<T: Real>(casc: &CascadeTruncation<T>, r: usize, k: usize) -> CMat<T> {
    if k == 0 {
        CMat::identity(r, r)
    } else {
        to_complex(&casc.rec.beta[k])
    }
}

/// `χ_θ` assembled from Gramian mixed moments of the truncated cascade.
pub fn core_matrix_statespace<T: Real>(sys: &LinearSystem<T>, theta: T, opts: &CascadeOptions) -> Result<StateSpaceCore<T>> {
    let (order, rec) = choose_order(sys, theta, opts)?;
    let casc = build_cascade(sys, theta, order, rec)?;
    let are = solve_cascade_are(&casc)?;
    let core = assemble_statespace_core(sys, &casc, &are, opts.series_order.unwrap_or(order))?;
    Ok(StateSpaceCore { core, order, are_residual: are.residual })
}

/// Blocks `(1,1)`, `(1,2)`, `(2,1)` from the cascade and the Riccati factor, summing `j + k ≤ j_max`.
pub fn assemble_statespace_core<T: Real>(
    sys: &LinearSystem<T>,
    casc: &CascadeTruncation<T>,
    are: &CascadeAre<T>,
    j_max: usize,
) -> Result<CoreMatrix<T>> {
    let (ns, r, n) = (sys.states(), sys.outputs(), casc.order);
    let nc = casc.states();
    let theta = casc.theta;
    let s = s_root(&sys.j);
    let bc = to_complex(&sys.b);
    let jc = to_complex(&sys.j);
    let sc = to_complex(&casc.s_c);
    let b_w = {
        let mut b = CMat::zeros(nc, ns);
        b.view_mut((0, 0), (ns, ns)).fill_with_identity();
        b
    };
    // 𝒻𝒞G, Ξ = (sA + sB·sL, sB) and Gℬ
    let w = Realization::new(to_complex(&casc.s_a), b_w.clone(), sc.clone())?;
    let xi = Realization::new(are.a_g.clone(), casc.s_b.clone(), sc.clone())?;
    let gb = Realization::new(to_complex(&sys.a), bc.clone(), CMat::identity(ns, ns))?;
    let f_sp = if n > 0 {
        Some(Realization::new(to_complex(&casc.f_a), to_complex(&casc.f_b), to_complex(&casc.f_c))?)
    } else {
        None
    };
    let p0t = b_w.clone();

    let p_gg = ctrl_cross(&xi, &xi)?;
    let hsc = &casc.h * &sc;
    let q_wg = obs_sylvester(&w, &xi, &(sc.adjoint() * &hsc))?;
    let tail = &p_gg * &p0t;
    let mut c11 = b_w.adjoint() * &q_wg * &tail;
    let mut c12 = b_w.adjoint() * &q_wg * (&p_gg * are.l.adjoint() * &s + &casc.s_b * &s);
    let mut c21 = to_complex(&casc.f_d).adjoint() * &hsc * &tail;
    let q_fg = match &f_sp {
        Some(f) => Some(obs_sylvester(f, &xi, &(f.c.adjoint() * &hsc))?),
        None => None,
    };
    if let (Some(f), Some(q)) = (&f_sp, &q_fg) {
        c21 += f.b.adjoint() * q * &tail;
    }

    // ϖ-series: indices 0 ≤ j, k ≤ N with j + k ≤ J_max
    let two_i_theta = C::new(T::zero(), theta + theta);
    let wjk = |j: usize, k: usize| -> C<T> {
        let phi = T::lit(1.0 / factorial(j + k + 2));
        let mut z = two_i_theta * phi;
        for _ in 0..j + k {
            z *= C::new(T::zero(), -(theta + theta));
        }
        z
    };
    let b4 = &b_w * &bc * &jc;
    let p45 = ctrl_sylvester(&w, &gb, &(&b4 * bc.adjoint()))?;
    let idx: Vec<usize> = (0..=n.min(j_max)).collect();
    // output β̃ₖ(sC)ₖ shared by β̃ⱼGⱼFS𝒢 (on Ξ) and β̃ₖGₖF (on 𝒻𝒞G)
    let f2c: Vec<CMat<T>> = idx.iter().map(|&j| beta_t(casc, r, j) * sc_row(casc, ns, r, j)).collect();
    let per_j: Vec<(CMat<T>, Option<CMat<T>>)> = idx
        .par_iter()
        .map(|&j| {
            let cwj = sc_row(casc, ns, r, j);
            let q12w = obs_sylvester(&w, &xi, &(cwj.adjoint() * &f2c[j]))?;
            let q12f = match (&f_sp, j) {
                (Some(f), j) if j >= 1 => {
                    let cfj = f.c.rows(r + (j - 1) * ns, ns).clone_owned();
                    Some(obs_sylvester(f, &xi, &(cfj.adjoint() * &f2c[j]))?)
                }
                _ => None,
            };
            Ok((q12w, q12f))
        })
        .collect::<Result<_>>()?;
    let per_k: Vec<(CMat<T>, CMat<T>, CMat<T>)> = idx
        .par_iter()
        .map(|&k| {
            let k4 = sc_row(casc, ns, r, k).adjoint() * &f2c[k];
            let q34 = obs_sylvester(&xi, &w, &k4)?;
            let p25 = ctrl_sylvester(&xi, &gb, &(&p_gg * &k4 * &p45))?;
            Ok((k4, q34, p25))
        })
        .collect::<Result<_>>()?;

    let mut src14w = CMat::zeros(nc, nc);
    let mut src4l = CMat::zeros(nc, nc);
    let mut direct11 = CMat::zeros(nc, ns);
    let mut direct12 = CMat::zeros(nc, nc);
    let nf = n * ns;
    let mut src14f = CMat::zeros(nf, nc);
    let mut direct21f = CMat::zeros(nf, ns);
    let gb_b = &casc.s_b * casc.s_b.adjoint();
    for j in 0..=n.min(j_max) {
        let (q12w, q12f) = &per_j[j];
        let cwj = sc_row(casc, ns, r, j);
        let c1c2 = cwj.adjoint() * &f2c[j] * &p_gg;
        for k in 0..=n.min(j_max - j) {
            let c = wjk(j, k);
            let (k4, q34, p25) = &per_k[k];
            let qp = q12w * &p_gg;
            src14w += (&qp * k4 + &c1c2 * q34).map(|z| z * c);
            direct11 += (q12w * p25).map(|z| z * c);
            direct12 += (&qp * q34).map(|z| z * c);
            src4l += (q12w * &gb_b * q34).map(|z| z * c);
            if j == 0 {
                c21 += (&f2c[0] * (p25 + &p_gg * q34 * &p45)).map(|z| z * c);
            } else if let (Some(f), Some(q12f)) = (&f_sp, q12f) {
                let cfj = f.c.rows(r + (j - 1) * ns, ns).clone_owned();
                src14f += ((q12f * &p_gg) * k4 + cfj.adjoint() * &f2c[j] * &p_gg * q34).map(|z| z * c);
                direct21f += (q12f * p25).map(|z| z * c);
            }
        }
    }
    let q14w = obs_sylvester(&w, &w, &src14w)?;
    let q4l = obs_sylvester(&w, &w, &src4l)?;
    c11 += b_w.adjoint() * (direct11 + &q14w * &p45);
    c12 += b_w.adjoint() * (direct12 + q4l) * &b4;
    if let Some(f) = &f_sp {
        let q14f = obs_sylvester(f, &w, &src14f)?;
        c21 += f.b.adjoint() * (direct21f + q14f * &p45);
    }
    let re = |z: &CMat<T>| z.map(|x| x.re);
    Ok(CoreMatrix::from_blocks(&re(&c11), &re(&c12), &re(&c21)))
}

#[cfg(test)]
mod tests;
