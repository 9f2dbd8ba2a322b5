//! Transfer functions, quantum spectral densities and the QEF growth rate.

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, hermitian_part, inverse, lambda_min_hermitian, ln_det_general, ln_det_hpd, to_complex, AnalyticFn, HermitianEigen};
use crate::quadrature::{integrate_half_line, Grid, QuadOptions};
use crate::scalar::{CMat, Real, C};
use crate::system::{is_hurwitz, s_root, LinearSystem};
use nalgebra::ComplexField;

/// `(F(iλ), G(iλ))` with `G = (iλI − 𝒜)⁻¹` and `F = 𝒞Gℬ`.
pub fn transfer<T: Real>(sys: &LinearSystem<T>, lambda: T) -> Result<(CMat<T>, CMat<T>)> {
    let n = sys.states();
    let mut m = to_complex(&(-&sys.a));
    for i in 0..n {
        m[(i, i)] += C::new(T::zero(), lambda);
    }
    let g = inverse(&m, "resolvent")?;
    let f = to_complex(&sys.c) * &g * to_complex(&sys.b);
    Ok((f, g))
}

/// `(Φ, Ψ) = (FF*, FJF*)`.
pub fn spectral_densities<T: Real>(sys: &LinearSystem<T>, lambda: T) -> Result<(CMat<T>, CMat<T>)> {
    let (f, _) = transfer(sys, lambda)?;
    let phi = &f * f.adjoint();
    let psi = &f * to_complex(&sys.j) * f.adjoint();
    Ok((phi, psi))
}

/// Frequency-domain quantities at one node, with a cached eigendecomposition of `iΨ`.
#[derive(Debug, Clone)]
pub struct FreqSample<T: Real> {
    pub lambda: T,
    pub f: CMat<T>,
    pub g: CMat<T>,
    pub phi: CMat<T>,
    pub psi: CMat<T>,
    /// Eigendecomposition of the Hermitian matrix `iΨ`.
    pub ipsi: HermitianEigen<T>,
    pub s: CMat<T>,
    pub j: CMat<T>,
}

impl<T: Real> FreqSample<T> {
    pub fn new(sys: &LinearSystem<T>, lambda: T) -> Result<Self> {
        let (f, g) = transfer(sys, lambda)?;
        let j = to_complex(&sys.j);
        let phi = hermitian_part(&(&f * f.adjoint()));
        let psi = &f * &j * f.adjoint();
        let psi = (&psi - psi.adjoint()).scale(T::lit(0.5));
        let ipsi = HermitianEigen::new(&psi.map(|z| z * C::new(T::zero(), T::one())))?;
        Ok(Self { lambda, f, g, phi, psi, ipsi, s: s_root(&sys.j), j })
    }

    fn real(x: T) -> C<T> {
        C::new(x, T::zero())
    }

    /// `φ(2iθΨ)`.
    pub fn phi_of(&self, theta: T) -> CMat<T> {
        self.ipsi.apply(&AnalyticFn::Phi, Self::real(theta + theta))
    }

    /// `Σ_θ = S F* φ(2iθΨ) F S`.
    pub fn sigma(&self, theta: T) -> CMat<T> {
        let fs = &self.f * &self.s;
        hermitian_part(&(fs.adjoint() * self.phi_of(theta) * fs))
    }

    /// `Δ_θ = I − θΣ_θ`.
    pub fn delta(&self, theta: T) -> CMat<T> {
        let sig = self.sigma(theta);
        let m = sig.nrows();
        CMat::identity(m, m) - sig.scale(theta)
    }

    /// `cos(θΨ) − θΦ sinc(θΨ)`.
    pub fn d_theta(&self, theta: T) -> CMat<T> {
        let c = C::new(T::zero(), -theta);
        let cos = self.ipsi.apply(&AnalyticFn::Cos, c);
        let sinc = self.ipsi.apply(&AnalyticFn::Sinc, c);
        cos - (&self.phi * sinc).scale(theta)
    }

    /// `(I − θ(Φ − iΨ)φ(2iθΨ)) e^{−iθΨ}`.
    pub fn d_theta_exp(&self, theta: T) -> CMat<T> {
        let r = self.f.nrows();
        let i = C::new(T::zero(), T::one());
        let e = self.ipsi.apply(&AnalyticFn::Exp, Self::real(-theta));
        let w = &self.phi - self.psi.map(|z| z * i);
        (CMat::identity(r, r) - (w * self.phi_of(theta)).scale(theta)) * e
    }

    /// Smallest eigenvalue of `Δ_θ`.
    pub fn delta_margin(&self, theta: T) -> T {
        lambda_min_hermitian(&self.delta(theta))
    }
}

/// `D_θ(λ)` by the trigonometric and the exponential forms.
pub fn d_theta<T: Real>(sys: &LinearSystem<T>, theta: T, lambda: T) -> Result<(CMat<T>, CMat<T>)> {
    let s = FreqSample::new(sys, lambda)?;
    Ok((s.d_theta(theta), s.d_theta_exp(theta)))
}

/// `(Σ_θ(λ), Δ_θ(λ))`.
pub fn sigma_delta<T: Real>(sys: &LinearSystem<T>, theta: T, lambda: T) -> Result<(CMat<T>, CMat<T>)> {
    let s = FreqSample::new(sys, lambda)?;
    let sig = s.sigma(theta);
    let m = sig.nrows();
    let del = CMat::identity(m, m) - sig.scale(theta);
    Ok((sig, del))
}

/// Outcome of the spectral admissibility scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCheck {
    pub admissible: bool,
    /// Estimated `inf_λ λ_min(Δ_θ(λ))`.
    pub margin: f64,
    /// Frequency attaining the estimate.
    pub lambda: f64,
}

/// Natural frequency scale and the moduli of the imaginary parts of the spectrum of `𝒜`.
pub fn frequency_scale<T: Real>(sys: &LinearSystem<T>) -> (f64, Vec<f64>) {
    let ev = eigenvalues(&sys.a).unwrap_or_default();
    let scale = ev.iter().fold(1.0f64, |m, z| m.max(z.modulus().as_f64()));
    let mut peaks: Vec<f64> = ev.iter().map(|z| z.im.as_f64().abs()).filter(|x| *x > 0.0).collect();
    peaks.sort_by(f64::total_cmp);
    peaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * scale);
    (scale, peaks)
}

/// Deterministic scan grid over `λ ≥ 0`.
pub fn scan_grid<T: Real>(sys: &LinearSystem<T>) -> Vec<f64> {
    let (scale, peaks) = frequency_scale(sys);
    let mut pts = vec![0.0];
    let count = 300;
    for k in 0..=count {
        pts.push(scale * 10f64.powf(-3.0 + 6.0 * k as f64 / count as f64));
    }
    for p in peaks {
        for d in [-0.05, -0.01, 0.0, 0.01, 0.05] {
            pts.push(p * (1.0 + d));
        }
    }
    pts.sort_by(f64::total_cmp);
    pts
}

/// Scans `λ_min(Δ_θ(±λ))` on a frequency grid and refines around the minimum.
pub fn check_spectral_condition<T: Real>(sys: &LinearSystem<T>, theta: T) -> Result<SpectralCheck> {
    if !is_hurwitz(&sys.a) {
        return Err(Error::NotHurwitz {
            max_real: crate::linalg::spectral_abscissa(&sys.a).map(|s| s.as_f64()).unwrap_or(f64::NAN),
        });
    }
    if theta == T::zero() {
        return Ok(SpectralCheck { admissible: true, margin: 1.0, lambda: 0.0 });
    }
    let eval = |l: f64| -> Result<f64> {
        let a = FreqSample::new(sys, T::lit(l))?.delta_margin(theta).as_f64();
        let b = FreqSample::new(sys, T::lit(-l))?.delta_margin(theta).as_f64();
        Ok(a.min(b))
    };
    let grid = scan_grid(sys);
    let mut best = (f64::INFINITY, 0.0, 0usize);
    for (i, &l) in grid.iter().enumerate() {
        let v = eval(l)?;
        if v < best.0 {
            best = (v, l, i);
        }
    }
    // golden-section refinement on the bracketing cell
    let lo = if best.2 > 0 { grid[best.2 - 1] } else { grid[0] };
    let hi = if best.2 + 1 < grid.len() { grid[best.2 + 1] } else { grid[best.2] };
    let (mut a, mut b) = (lo, hi);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..40 {
        if b - a <= 1e-10 * b.max(1.0) {
            break;
        }
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        let (f1, f2) = (eval(x1)?, eval(x2)?);
        if f1 < best.0 {
            best = (f1, x1, best.2);
        }
        if f2 < best.0 {
            best = (f2, x2, best.2);
        }
        if f1 < f2 {
            b = x2;
        } else {
            a = x1;
        }
    }
    Ok(SpectralCheck { admissible: best.0 > 0.0, margin: best.0, lambda: best.1 })
}

/// QEF growth rate computed by both log-determinant routes.
#[derive(Debug, Clone)]
pub struct QefReport<T: Real> {
    /// `−(1/4π)∫ ln det Δ_θ`.
    pub value: T,
    /// `−(1/4π)∫ ln det D_θ`.
    pub value_d: T,
    pub error: f64,
    pub nodes: usize,
    /// Frequency beyond which the half line is integrated in the reciprocal variable.
    pub split: f64,
    pub converged: bool,
    pub grid: Grid<T>,
}

fn ln_det_delta<T: Real>(s: &FreqSample<T>, theta: T) -> Result<T> {
    let delta = s.delta(theta);
    ln_det_hpd(&delta).ok_or_else(|| Error::SpectralCondition {
        margin: lambda_min_hermitian(&delta).as_f64(),
        lambda: s.lambda.as_f64(),
    })
}

/// Symmetrized integrand `[ln det Δ(λ) + ln det Δ(−λ), Re ln det D(λ) + Re ln det D(−λ)]`.
fn qef_integrand<T: Real>(sys: &LinearSystem<T>, theta: T, lambda: T) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); 2];
    for l in [lambda, -lambda] {
        let s = FreqSample::new(sys, l)?;
        out[0] += ln_det_delta(&s, theta)?;
        out[1] += ln_det_general(&s.d_theta(theta)).re;
    }
    Ok(out)
}

fn half_line_setup<T: Real>(sys: &LinearSystem<T>) -> (Vec<f64>, f64) {
    let (scale, peaks) = frequency_scale(sys);
    (peaks, 4.0 * scale)
}

/// `Υ_θ = −(1/4π)∫ ln det Δ_θ(λ) dλ` with the `D_θ` route reported alongside.
pub fn qef_rate<T: Real>(sys: &LinearSystem<T>, theta: T, opts: QuadOptions) -> Result<QefReport<T>> {
    if !is_hurwitz(&sys.a) {
        return Err(Error::NotHurwitz {
            max_real: crate::linalg::spectral_abscissa(&sys.a).map(|s| s.as_f64()).unwrap_or(f64::NAN),
        });
    }
    let (peaks, split) = half_line_setup(sys);
    let rep = integrate_half_line(|l| qef_integrand(sys, theta, T::lit(l)), &peaks, split, 2, opts)?;
    let k = -T::one() / (T::lit(4.0) * T::pi());
    Ok(QefReport {
        value: rep.value[0] * k,
        value_d: rep.value[1] * k,
        error: rep.error / (4.0 * std::f64::consts::PI),
        nodes: rep.nodes,
        split: rep.split,
        converged: rep.converged,
        grid: rep.grid,
    })
}

/// `Υ_θ` evaluated with a fixed rule.
pub fn qef_rate_on_grid<T: Real>(sys: &LinearSystem<T>, theta: T, grid: &Grid<T>) -> Result<T> {
    let v = grid.integrate(1, |l| {
        let mut acc = T::zero();
        for x in [l, -l] {
            acc += ln_det_delta(&FreqSample::new(sys, x)?, theta)?;
        }
        Ok(vec![acc])
    })?;
    Ok(-v[0] / (T::lit(4.0) * T::pi()))
}

/// Frequency rule adapted to the integrands of `sys`: the `Δ_θ` log-determinant and the entries of `Φ`.
pub fn adapted_grid<T: Real>(sys: &LinearSystem<T>, theta: T, opts: QuadOptions) -> Result<Grid<T>> {
    let (peaks, split) = half_line_setup(sys);
    let r = sys.outputs();
    let rep = integrate_half_line(
        |l| {
            let mut out = vec![T::zero(); 1 + r * r];
            for x in [T::lit(l), -T::lit(l)] {
                let s = FreqSample::new(sys, x)?;
                out[0] += ln_det_delta(&s, theta)?;
                for (o, z) in out[1..].iter_mut().zip(s.phi.iter()) {
                    *o += z.re;
                }
            }
            Ok(out)
        },
        &peaks,
        split,
        1 + r * r,
        opts,
    )?;
    Ok(rep.grid)
}

/// `Υ_* = ½ tr(𝒞𝒫𝒞ᵀ)`.
pub fn mean_square_rate<T: Real>(sys: &LinearSystem<T>) -> Result<T> {
    let p = sys.gramian()?;
    Ok((&sys.c * p * sys.c.transpose()).trace() * T::lit(0.5))
}
