//! Core matrix, Frechet derivatives of the cost and the weighted mean-square machinery.

use crate::error::{Error, Result};
use crate::freq::{check_spectral_condition, frequency_scale, scan_grid, FreqSample};
use crate::linalg::{cholesky_hpd, hermitian_part, inverse, norm2, skew, solve_lyapunov, sym, to_complex, vstack, hstack, AnalyticFn};
use crate::quadrature::{integrate_half_line, Grid, QuadOptions};
use crate::scalar::{CMat, Mat, Real, C};
use crate::system::{is_hurwitz, ClosedLoop, LinearSystem};
use nalgebra::{DMatrix, Scalar};
use num_traits::Zero;

/// Zeroes the bottom-right `ρ × μ` block of an `(s+ρ) × (s+μ)` matrix.
pub fn project_sparsity<N: Scalar + Zero + Clone>(m: &DMatrix<N>, s: usize, mu: usize, rho: usize) -> Result<DMatrix<N>> {
    if m.shape() != (s + rho, s + mu) {
        return Err(Error::Dimension {
            context: "project_sparsity",
            expected: format!("{}x{}", s + rho, s + mu),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let mut out = m.clone();
    out.view_mut((s, s), (rho, mu)).fill(N::zero());
    Ok(out)
}

/// Sparse block matrix `[[∂𝒜, ∂ℬ], [∂𝒞, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreMatrix<T: Real> {
    pub chi: Mat<T>,
    pub states: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl<T: Real> CoreMatrix<T> {
    pub fn from_blocks(da: &Mat<T>, db: &Mat<T>, dc: &Mat<T>) -> Self {
        let (s, mu, rho) = (da.nrows(), db.ncols(), dc.nrows());
        let chi = vstack(&[&hstack(&[da, db]), &hstack(&[dc, &Mat::zeros(rho, mu)])]);
        Self { chi, states: s, inputs: mu, outputs: rho }
    }

    pub fn zeros(s: usize, mu: usize, rho: usize) -> Self {
        Self { chi: Mat::zeros(s + rho, s + mu), states: s, inputs: mu, outputs: rho }
    }

    pub fn d_a(&self) -> Mat<T> {
        self.chi.view((0, 0), (self.states, self.states)).clone_owned()
    }
    pub fn d_b(&self) -> Mat<T> {
        self.chi.view((0, self.states), (self.states, self.inputs)).clone_owned()
    }
    pub fn d_c(&self) -> Mat<T> {
        self.chi.view((self.states, 0), (self.outputs, self.states)).clone_owned()
    }

    /// `⟨χ, [[δ𝒜, δℬ], [δ𝒞, 0]]⟩`.
    pub fn pair(&self, da: &Mat<T>, db: &Mat<T>, dc: &Mat<T>) -> T {
        self.d_a().dot(da) + self.d_b().dot(db) + self.d_c().dot(dc)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { chi: self.chi.scale(s), ..self.clone() }
    }
}

/// Affine parameterization `Γ = Γ₀ + Γ₁γΓ₂` of the closed-loop matrices.
#[derive(Debug, Clone)]
pub struct GammaAssembly<T: Real> {
    pub gamma: Mat<T>,
    pub gamma0: Mat<T>,
    pub gamma1: Mat<T>,
    pub gamma2: Mat<T>,
    pub small_gamma: Mat<T>,
}

pub fn gamma_assembly<T: Real>(cl: &ClosedLoop<T>) -> GammaAssembly<T> {
    let (n, nu, m1, m2, p1, p2, r) = (cl.n(), cl.nu(), cl.m1(), cl.m2(), cl.p1(), cl.p2(), cl.r());
    let p = &cl.plant;
    let k = &cl.controller;
    let z = |a, b| Mat::<T>::zeros(a, b);
    let id = |a| Mat::<T>::identity(a, a);
    let sys = &cl.sys;
    let gamma = vstack(&[&hstack(&[&sys.a, &sys.b]), &hstack(&[&sys.c, &z(r, m1 + m2)])]);
    let gamma0 = vstack(&[
        &hstack(&[&p.a, &z(n, nu), &p.b, &(&p.e * &k.d)]),
        &z(nu, n + nu + m1 + m2),
        &hstack(&[&cl.n_w, &z(r, nu + m1 + m2)]),
    ]);
    let gamma1 = vstack(&[
        &hstack(&[&z(n, nu), &p.e]),
        &hstack(&[&id(nu), &z(nu, p2)]),
        &hstack(&[&z(r, nu), &cl.k_w]),
    ]);
    let gamma2 = vstack(&[
        &hstack(&[&z(nu, n), &id(nu), &z(nu, m1 + m2)]),
        &hstack(&[&z(m2, n + nu + m1), &id(m2)]),
        &hstack(&[&p.c, &z(p1, nu), &p.d, &z(p1, m2)]),
    ]);
    let small_gamma = vstack(&[&hstack(&[&k.a, &k.b, &k.e]), &hstack(&[&k.c, &z(p2, m2 + p1)])]);
    GammaAssembly { gamma, gamma0, gamma1, gamma2, small_gamma }
}

/// Weighting operator `𝔐_{θ,F}` frozen at one frequency.
#[derive(Debug, Clone)]
pub struct NodeWeight<T: Real> {
    /// `φ(2iθΨ)`.
    pub phi: CMat<T>,
    /// `SΔ_θ⁻¹S`.
    pub sds: CMat<T>,
    /// `ϖ_θ`, the derivative of `φ` at `2iθΨ` along `FSΔ_θ⁻¹SF*`.
    pub varpi: CMat<T>,
    /// `2iθJ`.
    pub tij: CMat<T>,
}

impl<T: Real> NodeWeight<T> {
    pub fn new(s: &FreqSample<T>, theta: T) -> Result<Self> {
        let delta = s.delta(theta);
        if cholesky_hpd(&delta).is_none() {
            return Err(Error::SpectralCondition {
                margin: crate::linalg::lambda_min_hermitian(&delta).as_f64(),
                lambda: s.lambda.as_f64(),
            });
        }
        let dinv = hermitian_part(&inverse(&delta, "Delta")?);
        let sds = &s.s * dinv * &s.s;
        let two_theta = C::new(theta + theta, T::zero());
        let phi = s.ipsi.apply(&AnalyticFn::Phi, two_theta);
        let beta = hermitian_part(&(&s.f * &sds * s.f.adjoint()));
        let varpi = s.ipsi.frechet(&AnalyticFn::Phi, two_theta, &beta);
        let tij = s.j.map(|z| z * C::new(T::zero(), theta + theta));
        Ok(Self { phi, sds, varpi, tij })
    }

    /// `φ(2iθΨ) X SΔ⁻¹S + ϖ X 2iθJ`.
    pub fn apply(&self, x: &CMat<T>) -> CMat<T> {
        &self.phi * x * &self.sds + &self.varpi * x * &self.tij
    }
}

/// `(φ_θ, ψ_θ, ϖ_θ)` at one frequency.
#[derive(Debug, Clone)]
pub struct IntegrandPieces<T: Real> {
    pub phi_theta: CMat<T>,
    pub psi_theta: CMat<T>,
    pub varpi: CMat<T>,
}

pub fn phi_psi_varpi<T: Real>(sys: &LinearSystem<T>, theta: T, lambda: T) -> Result<IntegrandPieces<T>> {
    let s = FreqSample::new(sys, lambda)?;
    let w = NodeWeight::new(&s, theta)?;
    Ok(IntegrandPieces {
        phi_theta: &w.phi * &s.f * &w.sds,
        psi_theta: &w.varpi * &s.f * &s.j,
        varpi: w.varpi,
    })
}

/// `ℶ([G*𝒞ᵀ; I] X [ℬᵀG*, I])` without the real part.
pub fn core_integrand<T: Real>(sys: &LinearSystem<T>, s: &FreqSample<T>, x: &CMat<T>) -> CMat<T> {
    let gs = s.g.adjoint();
    let left = &gs * to_complex(&sys.c.transpose());
    let right = to_complex(&sys.b.transpose()) * &gs;
    let (n, m, r) = (sys.states(), sys.inputs(), sys.outputs());
    let mut out = CMat::zeros(n + r, n + m);
    let lx = &left * x;
    out.view_mut((0, 0), (n, n)).copy_from(&(&lx * &right));
    out.view_mut((0, n), (n, m)).copy_from(&lx);
    out.view_mut((n, 0), (r, n)).copy_from(&(x * &right));
    out
}

fn accumulate_re<T: Real>(m: &CMat<T>, out: &mut [T]) {
    for (o, z) in out.iter_mut().zip(m.iter()) {
        *o += z.re;
    }
}

/// Integrand for cost and core matrix at `±λ`: `[ln det Δ, Re χ-entries...]`.
fn cost_core_integrand<T: Real>(sys: &LinearSystem<T>, theta: T, lambda: T) -> Result<Vec<T>> {
    let (n, m, r) = (sys.states(), sys.inputs(), sys.outputs());
    let k = (n + r) * (n + m);
    let mut out = vec![T::zero(); 1 + k];
    for l in [lambda, -lambda] {
        let s = FreqSample::new(sys, l)?;
        let w = NodeWeight::new(&s, theta)?;
        let delta = s.delta(theta);
        out[0] += crate::linalg::ln_det_hpd(&delta).ok_or(Error::SpectralCondition { margin: 0.0, lambda: l.as_f64() })?;
        let x = w.apply(&s.f);
        accumulate_re(&core_integrand(sys, &s, &x), &mut out[1..]);
    }
    Ok(out)
}

fn assemble_core<T: Real>(sys: &LinearSystem<T>, v: &[T]) -> CoreMatrix<T> {
    let (n, m, r) = (sys.states(), sys.inputs(), sys.outputs());
    let chi = Mat::from_column_slice(n + r, n + m, &v[..(n + r) * (n + m)]).unscale(T::two_pi());
    CoreMatrix { chi, states: n, inputs: m, outputs: r }
}

fn require_hurwitz<T: Real>(sys: &LinearSystem<T>) -> Result<()> {
    if !is_hurwitz(&sys.a) {
        return Err(Error::NotHurwitz {
            max_real: crate::linalg::spectral_abscissa(&sys.a).map(|s| s.as_f64()).unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Cost and core matrix from one adaptive integration, with the final rule.
#[derive(Debug, Clone)]
pub struct CostCore<T: Real> {
    pub cost: T,
    pub core: CoreMatrix<T>,
    pub error: f64,
    pub nodes: usize,
    pub grid: Grid<T>,
}

/// Adaptive evaluation of `Υ_θ` and `χ_θ`.
pub fn cost_and_core<T: Real>(sys: &LinearSystem<T>, theta: T, opts: QuadOptions) -> Result<CostCore<T>> {
    require_hurwitz(sys)?;
    let (scale, peaks) = frequency_scale(sys);
    let (n, m, r) = (sys.states(), sys.inputs(), sys.outputs());
    let dim = 1 + (n + r) * (n + m);
    let rep = integrate_half_line(|l| cost_core_integrand(sys, theta, T::lit(l)), &peaks, 4.0 * scale, dim, opts)?;
    Ok(CostCore {
        cost: -rep.value[0] / (T::lit(2.0) * T::two_pi()),
        core: assemble_core(sys, &rep.value[1..]),
        error: rep.error,
        nodes: rep.nodes,
        grid: rep.grid,
    })
}

/// `Υ_θ` and `χ_θ` with a fixed rule.
pub fn cost_and_core_on_grid<T: Real>(sys: &LinearSystem<T>, theta: T, grid: &Grid<T>) -> Result<(T, CoreMatrix<T>)> {
    require_hurwitz(sys)?;
    let (n, m, r) = (sys.states(), sys.inputs(), sys.outputs());
    let dim = 1 + (n + r) * (n + m);
    let v = grid.integrate(dim, |l| cost_core_integrand(sys, theta, l))?;
    Ok((-v[0] / (T::lit(2.0) * T::two_pi()), assemble_core(sys, &v[1..])))
}

/// `χ_θ = (1/2π)∫ Re ℶ([G*𝒞ᵀ; I](φ_θ + 2iθψ_θ)[ℬᵀG*, I]) dλ`.
pub fn core_matrix_freq<T: Real>(sys: &LinearSystem<T>, theta: T, opts: QuadOptions) -> Result<CoreMatrix<T>> {
    Ok(cost_and_core(sys, theta, opts)?.core)
}

/// `χ₀ = [[𝒬𝒫, 𝒬ℬ], [𝒞𝒫, 0]]` from the Gramians.
pub fn core_matrix_lqg<T: Real>(sys: &LinearSystem<T>) -> Result<CoreMatrix<T>> {
    let p = sys.gramian()?;
    let q = solve_lyapunov(&sys.a.transpose(), &sys.pi())?;
    Ok(CoreMatrix::from_blocks(&(&q * &p), &(&q * &sys.b), &(&sys.c * &p)))
}

/// Partial derivatives with respect to `(R₂, M₂, L₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGradient<T: Real> {
    pub d_r2: Mat<T>,
    pub d_m2: Mat<T>,
    pub d_l2: Mat<T>,
}

impl<T: Real> ControllerGradient<T> {
    /// Squared Euclidean norm of the stacked gradient.
    pub fn norm_squared(&self) -> T {
        self.d_r2.norm_squared() + self.d_m2.norm_squared() + self.d_l2.norm_squared()
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        let a = crate::linalg::max_abs(&(&self.d_r2 - &o.d_r2));
        let b = crate::linalg::max_abs(&(&self.d_m2 - &o.d_m2));
        let c = crate::linalg::max_abs(&(&self.d_l2 - &o.d_l2));
        a.max(b).max(c)
    }

    pub fn as_params(&self) -> crate::system::ControllerParams<T> {
        crate::system::ControllerParams { r2: self.d_r2.clone(), m2: self.d_m2.clone(), l2: self.d_l2.clone() }
    }
}

/// Blocks `∂a, ∂b, ∂e, ∂c` of `scale·Γ₁ᵀχΓ₂ᵀ`.
pub fn controller_matrix_gradients<T: Real>(cl: &ClosedLoop<T>, core: &CoreMatrix<T>, scale: T) -> [Mat<T>; 4] {
    let g = gamma_assembly(cl);
    let mg = (g.gamma1.transpose() * &core.chi * g.gamma2.transpose()).scale(scale);
    let (nu, m2, p1, p2) = (cl.nu(), cl.m2(), cl.p1(), cl.p2());
    [
        mg.view((0, 0), (nu, nu)).clone_owned(),
        mg.view((0, nu), (nu, m2)).clone_owned(),
        mg.view((0, nu + m2), (nu, p1)).clone_owned(),
        mg.view((nu, 0), (p2, nu)).clone_owned(),
    ]
}

/// Chain rule from `∂Υ = scale·⟨χ, δΓ⟩` to the energy and coupling matrices of the controller.
pub fn controller_gradients<T: Real>(cl: &ClosedLoop<T>, core: &CoreMatrix<T>, scale: T) -> ControllerGradient<T> {
    let [da, db, de, dc] = controller_matrix_gradients(cl, core, scale);
    let two = T::lit(2.0);
    let k = &cl.controller;
    let theta2 = &k.theta2;
    let j2 = crate::linalg::canonical_j::<T>(cl.m2()).expect("even m2");
    let jt1 = crate::linalg::canonical_j::<T>(cl.p1()).expect("even p1");
    let ta = theta2 * &da;
    let d_r2 = sym(&ta).scale(-two);
    let d_m2 = (&j2 * &k.params.m2 * skew(&ta)).scale(two + two)
        + (db.transpose() * theta2).scale(two)
        - (&j2 * k.d.transpose() * &dc).scale(two);
    let d_l2 = (&jt1 * &k.params.l2 * skew(&ta)).scale(two + two) + (de.transpose() * theta2).scale(two);
    ControllerGradient { d_r2, d_m2, d_l2 }
}

/// `‖∂R₂‖_F + ‖∂M₂‖_F + ‖∂L₂‖_F`.
pub fn stationarity_residual<T: Real>(g: &ControllerGradient<T>) -> T {
    g.d_r2.norm() + g.d_m2.norm() + g.d_l2.norm()
}

/// `𝔐_{θ,F}(X)` at frequency `λ` for the reference system.
pub fn weighting_operator_apply<T: Real>(sys_ref: &LinearSystem<T>, theta: T, lambda: T, x: &CMat<T>) -> Result<CMat<T>> {
    let s = FreqSample::new(sys_ref, lambda)?;
    Ok(NodeWeight::new(&s, theta)?.apply(x))
}

/// Weighting operators of a reference system frozen on the nodes of a rule.
#[derive(Debug, Clone)]
pub struct FrozenWeight<T: Real> {
    pub theta: T,
    pub grid: Grid<T>,
    /// Weights at `+λ` and `−λ` for each node.
    pub weights: Vec<[NodeWeight<T>; 2]>,
}

impl<T: Real> FrozenWeight<T> {
    pub fn new(sys_ref: &LinearSystem<T>, theta: T, grid: &Grid<T>) -> Result<Self> {
        use rayon::prelude::*;
        let weights = grid
            .nodes
            .par_iter()
            .map(|&l| {
                Ok([
                    NodeWeight::new(&FreqSample::new(sys_ref, l)?, theta)?,
                    NodeWeight::new(&FreqSample::new(sys_ref, -l)?, theta)?,
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { theta, grid: grid.clone(), weights })
    }

    /// `V = (1/4π)∫⟨F, 𝔐(F)⟩` and its core matrix.
    pub fn cost_and_core(&self, sys: &LinearSystem<T>) -> Result<(T, CoreMatrix<T>)> {
        use rayon::prelude::*;
        require_hurwitz(sys)?;
        let (n, m, r) = (sys.states(), sys.inputs(), sys.outputs());
        let k = (n + r) * (n + m);
        let vals: Vec<Vec<T>> = self
            .grid
            .nodes
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(&l, w)| {
                let mut out = vec![T::zero(); 2 + k];
                for (x, wt) in [l, -l].into_iter().zip(w.iter()) {
                    let s = FreqSample::new(sys, x)?;
                    let mf = wt.apply(&s.f);
                    let ip = (s.f.adjoint() * &mf).trace();
                    out[0] += ip.re;
                    out[1] += ip.im;
                    accumulate_re(&core_integrand(sys, &s, &mf), &mut out[2..]);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut acc = vec![T::zero(); 2 + k];
        for (v, &wt) in vals.iter().zip(&self.grid.weights) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += wt * *x;
            }
        }
        let cost = acc[0] / (T::lit(2.0) * T::two_pi());
        Ok((cost, assemble_core(sys, &acc[2..])))
    }

    /// `V` alone.
    pub fn cost(&self, sys: &LinearSystem<T>) -> Result<T> {
        use rayon::prelude::*;
        require_hurwitz(sys)?;
        let vals: Vec<T> = self
            .grid
            .nodes
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(&l, w)| {
                let mut acc = T::zero();
                for (x, wt) in [l, -l].into_iter().zip(w.iter()) {
                    let s = FreqSample::new(sys, x)?;
                    acc += (s.f.adjoint() * wt.apply(&s.f)).trace().re;
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let acc = vals.iter().zip(&self.grid.weights).fold(T::zero(), |a, (v, &w)| a + w * *v);
        Ok(acc / (T::lit(2.0) * T::two_pi()))
    }

    /// Imaginary part of `(1/4π)∫⟨F, 𝔐(F)⟩`.
    pub fn cost_imaginary_part(&self, sys: &LinearSystem<T>) -> Result<T> {
        let mut acc = T::zero();
        for ((&l, w), &wt) in self.grid.nodes.iter().zip(&self.weights).zip(&self.grid.weights) {
            for (x, nw) in [l, -l].into_iter().zip(w.iter()) {
                let s = FreqSample::new(sys, x)?;
                acc += wt * (s.f.adjoint() * nw.apply(&s.f)).trace().im;
            }
        }
        Ok(acc / (T::lit(2.0) * T::two_pi()))
    }
}

/// Weighted mean-square cost with the weight frozen at `sys_ref`, on a rule adapted to `sys_ref`.
pub fn weighted_cost<T: Real>(sys: &LinearSystem<T>, sys_ref: &LinearSystem<T>, theta: T, opts: QuadOptions) -> Result<T> {
    let grid = cost_and_core(sys_ref, theta, opts)?.grid;
    Ok(FrozenWeight::new(sys_ref, theta, &grid)?.cost_and_core(sys)?.0)
}

/// Grid estimate of `sup_λ ‖F(iλ)‖₂`.
pub fn hinf_norm_estimate<T: Real>(sys: &LinearSystem<T>) -> Result<T> {
    let mut best = T::zero();
    for l in scan_grid(sys) {
        let s = crate::freq::transfer(sys, T::lit(l))?;
        best = best.max(norm2(&s.0));
    }
    Ok(best)
}

/// `2ϑ_r(2θ‖F‖∞²) / inf λ_min(Δ_θ)` with `ϑ_r(u) = φ(u) + √r u φ′(u)`.
pub fn weighting_norm_bound<T: Real>(sys: &LinearSystem<T>, theta: T) -> Result<T> {
    let check = check_spectral_condition(sys, theta)?;
    if !check.admissible {
        return Err(Error::SpectralCondition { margin: check.margin, lambda: check.lambda });
    }
    let fnorm = hinf_norm_estimate(sys)?;
    let u = C::new(T::lit(2.0) * theta * fnorm * fnorm, T::zero());
    let r = T::lit(sys.outputs() as f64);
    let vartheta = AnalyticFn::Phi.eval(u).re + r.sqrt() * u.re * AnalyticFn::Phi.derivative(u).re;
    Ok(T::lit(2.0) * vartheta / T::lit(check.margin))
}
