//! Plant, controller and closed-loop models built from energy and coupling matrices.

use crate::error::{Error, Result};
use crate::linalg::{block_diag, canonical_j, expm_real, hstack, is_hurwitz_eps, solve_lyapunov, vstack};
use crate::scalar::{CMat, Mat, Real, C};

/// Margin used by the Hurwitz test.
pub const EPS_STAB: f64 = 1e-9;

fn dim_err(context: &'static str, expected: String, m: &Mat<impl Real>) -> Error {
    Error::Dimension { context, expected, found: format!("{}x{}", m.nrows(), m.ncols()) }
}

fn check_shape<T: Real>(context: &'static str, m: &Mat<T>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(dim_err(context, format!("{rows}x{cols}"), m));
    }
    Ok(())
}

fn check_ccr<T: Real>(context: &'static str, theta: &Mat<T>) -> Result<()> {
    let n = theta.nrows();
    if !theta.is_square() || n % 2 != 0 {
        return Err(dim_err(context, "even square matrix".into(), theta));
    }
    let asym = (theta + theta.transpose()).norm();
    if asym > T::lit(1e-12) * theta.norm().max(T::one()) {
        return Err(Error::InvalidModel(format!("{context}: CCR matrix is not antisymmetric")));
    }
    let det = theta.determinant();
    if det.abs() <= T::eps() * theta.norm().max(T::one()).powi(n as i32) {
        return Err(Error::InvalidModel(format!("{context}: CCR matrix is singular")));
    }
    Ok(())
}

/// Checks that the rows of `d` are signed unit vectors forming conjugate pairs.
pub fn validate_feedthrough<T: Real>(d: &Mat<T>) -> Result<()> {
    let (p, m) = d.shape();
    if p % 2 != 0 || m % 2 != 0 || p > m {
        return Err(Error::InvalidModel(format!("feedthrough must be p x m with even p <= m, got {p}x{m}")));
    }
    for i in 0..p {
        let nz: Vec<T> = d.row(i).iter().cloned().filter(|x| *x != T::zero()).collect();
        if nz.len() != 1 || nz[0].abs() != T::one() {
            return Err(Error::InvalidModel(format!("feedthrough row {i} is not a signed unit vector")));
        }
    }
    let jm = canonical_j::<T>(m)?;
    let jp = canonical_j::<T>(p)?;
    if d * jm * d.transpose() != jp {
        return Err(Error::InvalidModel("feedthrough rows do not form conjugate pairs".into()));
    }
    Ok(())
}

/// CCR matrices of plant, controller, closed loop and fields.
#[derive(Debug, Clone)]
pub struct CcrStructure<T: Real> {
    pub theta1: Mat<T>,
    pub theta2: Mat<T>,
    pub theta: Mat<T>,
    pub j_mat: Mat<T>,
    pub omega: CMat<T>,
    pub s_root: CMat<T>,
}

impl<T: Real> CcrStructure<T> {
    pub fn new(theta1: Mat<T>, theta2: Mat<T>, m: usize) -> Result<Self> {
        check_ccr("theta1", &theta1)?;
        check_ccr("theta2", &theta2)?;
        let theta = block_diag(&[&theta1, &theta2]);
        let j_mat = canonical_j(m)?;
        let omega = Mat::identity(m, m).map(|x| C::new(x, T::zero())) + j_mat.map(|x| C::new(T::zero(), x));
        let s_root = s_root(&j_mat);
        Ok(Self { theta1, theta2, theta, j_mat, omega, s_root })
    }
}

/// Field square root `S = (I - iJ)/√2`, so that `S² = I - iJ`.
pub fn s_root<T: Real>(j: &Mat<T>) -> CMat<T> {
    let r = T::lit(0.5).sqrt();
    CMat::from_fn(j.nrows(), j.ncols(), |i, k| {
        C::new(if i == k { r } else { T::zero() }, -j[(i, k)] * r)
    })
}

/// Plant energy/coupling parameters and the realized matrices.
#[derive(Debug, Clone)]
pub struct PlantModel<T: Real> {
    pub r1: Mat<T>,
    pub m1: Mat<T>,
    pub l1: Mat<T>,
    pub theta1: Mat<T>,
    pub d: Mat<T>,
    pub a: Mat<T>,
    pub b: Mat<T>,
    pub c: Mat<T>,
    pub e: Mat<T>,
}

impl<T: Real> PlantModel<T> {
    pub fn n(&self) -> usize {
        self.r1.nrows()
    }
    pub fn m1(&self) -> usize {
        self.m1.nrows()
    }
    pub fn p1(&self) -> usize {
        self.d.nrows()
    }
    pub fn p2(&self) -> usize {
        self.l1.nrows()
    }
}

/// Builds the plant `A = 2Θ₁(R₁ + M₁ᵀJ₁M₁ + L₁ᵀJ̃₂L₁)`, `B = 2Θ₁M₁ᵀ`, `C = 2DJ₁M₁`, `E = 2Θ₁L₁ᵀ`.
pub fn build_plant<T: Real>(r1: Mat<T>, m1: Mat<T>, l1: Mat<T>, theta1: Mat<T>, d: Mat<T>) -> Result<PlantModel<T>> {
    let n = r1.nrows();
    check_shape("R1", &r1, n, n)?;
    check_ccr("theta1", &theta1)?;
    check_shape("Theta1", &theta1, n, n)?;
    let mm = m1.nrows();
    check_shape("M1", &m1, mm, n)?;
    check_shape("L1", &l1, l1.nrows(), n)?;
    check_shape("D", &d, d.nrows(), mm)?;
    validate_feedthrough(&d)?;
    if (&r1 - r1.transpose()).norm() > T::lit(1e-12) * r1.norm().max(T::one()) {
        return Err(Error::InvalidModel("R1 is not symmetric".into()));
    }
    let j1 = canonical_j(mm)?;
    let jt2 = canonical_j(l1.nrows())?;
    let two = T::lit(2.0);
    let a = (&theta1 * (&r1 + m1.transpose() * &j1 * &m1 + l1.transpose() * &jt2 * &l1)).scale(two);
    let b = (&theta1 * m1.transpose()).scale(two);
    let c = (&d * &j1 * &m1).scale(two);
    let e = (&theta1 * l1.transpose()).scale(two);
    Ok(PlantModel { r1, m1, l1, theta1, d, a, b, c, e })
}

/// Optimization variable `(R₂, M₂, L₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams<T: Real> {
    pub r2: Mat<T>,
    pub m2: Mat<T>,
    pub l2: Mat<T>,
}

impl<T: Real> ControllerParams<T> {
    pub fn zeros(nu: usize, m2: usize, p1: usize) -> Self {
        Self { r2: Mat::zeros(nu, nu), m2: Mat::zeros(m2, nu), l2: Mat::zeros(p1, nu) }
    }

    pub fn nu(&self) -> usize {
        self.r2.nrows()
    }

    /// Frobenius norm of the stacked parameters.
    pub fn norm(&self) -> T {
        (self.r2.norm_squared() + self.m2.norm_squared() + self.l2.norm_squared()).sqrt()
    }

    /// `self + s·dir` with `R₂` kept exactly symmetric.
    pub fn axpy(&self, s: T, dir: &ControllerParams<T>) -> Self {
        let r2 = &self.r2 + dir.r2.scale(s);
        let r2 = (&r2 + r2.transpose()).scale(T::lit(0.5));
        Self { r2, m2: &self.m2 + dir.m2.scale(s), l2: &self.l2 + dir.l2.scale(s) }
    }
}

/// Controller parameters with their realized matrices.
#[derive(Debug, Clone)]
pub struct Controller<T: Real> {
    pub params: ControllerParams<T>,
    pub theta2: Mat<T>,
    pub d: Mat<T>,
    pub a: Mat<T>,
    pub b: Mat<T>,
    pub c: Mat<T>,
    pub e: Mat<T>,
}

/// Builds `a = 2Θ₂(R₂ + M₂ᵀJ₂M₂ + L₂ᵀJ̃₁L₂)`, `b = 2Θ₂M₂ᵀ`, `c = 2dJ₂M₂`, `e = 2Θ₂L₂ᵀ`.
pub fn build_controller<T: Real>(params: ControllerParams<T>, theta2: Mat<T>, d: Mat<T>) -> Result<Controller<T>> {
    let nu = params.r2.nrows();
    check_shape("R2", &params.r2, nu, nu)?;
    check_ccr("theta2", &theta2)?;
    check_shape("Theta2", &theta2, nu, nu)?;
    let m2 = params.m2.nrows();
    check_shape("M2", &params.m2, m2, nu)?;
    check_shape("L2", &params.l2, params.l2.nrows(), nu)?;
    check_shape("d", &d, d.nrows(), m2)?;
    validate_feedthrough(&d)?;
    if (&params.r2 - params.r2.transpose()).norm() > T::lit(1e-12) * params.r2.norm().max(T::one()) {
        return Err(Error::InvalidModel("R2 is not symmetric".into()));
    }
    let j2 = canonical_j(m2)?;
    let jt1 = canonical_j(params.l2.nrows())?;
    let two = T::lit(2.0);
    let (r2, mm, l2) = (&params.r2, &params.m2, &params.l2);
    let a = (&theta2 * (r2 + mm.transpose() * &j2 * mm + l2.transpose() * &jt1 * l2)).scale(two);
    let b = (&theta2 * mm.transpose()).scale(two);
    let c = (&d * &j2 * mm).scale(two);
    let e = (&theta2 * l2.transpose()).scale(two);
    Ok(Controller { params, theta2, d, a, b, c, e })
}

/// State-space triple `(𝒜, ℬ, 𝒞)` with field CCR matrix `J` and state CCR matrix `Θ`.
#[derive(Debug, Clone)]
pub struct LinearSystem<T: Real> {
    pub a: Mat<T>,
    pub b: Mat<T>,
    pub c: Mat<T>,
    pub j: Mat<T>,
    pub theta: Mat<T>,
}

impl<T: Real> LinearSystem<T> {
    /// Free triple; `Θ` is recovered from `𝒜Θ + Θ𝒜ᵀ + ℬJℬᵀ = 0`.
    pub fn new(a: Mat<T>, b: Mat<T>, c: Mat<T>, j: Mat<T>) -> Result<Self> {
        let n = a.nrows();
        check_shape("system A", &a, n, n)?;
        check_shape("system B", &b, n, j.nrows())?;
        check_shape("system C", &c, c.nrows(), n)?;
        let mho = &b * &j * b.transpose();
        let theta = solve_lyapunov(&a, &mho)?;
        Ok(Self { a, b, c, j, theta })
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

    /// `℧ = ℬJℬᵀ`.
    pub fn mho(&self) -> Mat<T> {
        &self.b * &self.j * self.b.transpose()
    }

    /// `Π = 𝒞ᵀ𝒞`.
    pub fn pi(&self) -> Mat<T> {
        self.c.transpose() * &self.c
    }

    pub fn is_hurwitz(&self) -> bool {
        is_hurwitz(&self.a)
    }

    /// Controllability Gramian `𝒫` with `𝒜𝒫 + 𝒫𝒜ᵀ + ℬℬᵀ = 0`.
    pub fn gramian(&self) -> Result<Mat<T>> {
        solve_lyapunov(&self.a, &(&self.b * self.b.transpose()))
    }

    pub fn with_c(&self, c: Mat<T>) -> Self {
        Self { c, ..self.clone() }
    }
}

/// Closed loop of plant and coherent controller together with the criterion weights.
#[derive(Debug, Clone)]
pub struct ClosedLoop<T: Real> {
    pub sys: LinearSystem<T>,
    pub plant: PlantModel<T>,
    pub controller: Controller<T>,
    pub n_w: Mat<T>,
    pub k_w: Mat<T>,
    pub mho: Mat<T>,
    pub pi: Mat<T>,
    /// Closed-loop energy matrix.
    pub energy: Mat<T>,
    /// Closed-loop coupling matrix.
    pub coupling: Mat<T>,
}

impl<T: Real> ClosedLoop<T> {
    pub fn n(&self) -> usize {
        self.plant.n()
    }
    pub fn nu(&self) -> usize {
        self.controller.params.nu()
    }
    pub fn m1(&self) -> usize {
        self.plant.m1()
    }
    pub fn m2(&self) -> usize {
        self.controller.params.m2.nrows()
    }
    pub fn p1(&self) -> usize {
        self.plant.p1()
    }
    pub fn p2(&self) -> usize {
        self.plant.p2()
    }
    pub fn r(&self) -> usize {
        self.n_w.nrows()
    }

    /// Same plant and weights with new controller parameters.
    pub fn with_params(&self, params: ControllerParams<T>) -> Result<Self> {
        let ctrl = build_controller(params, self.controller.theta2.clone(), self.controller.d.clone())?;
        assemble_closed_loop(self.plant.clone(), ctrl, self.n_w.clone(), self.k_w.clone())
    }

    pub fn params(&self) -> &ControllerParams<T> {
        &self.controller.params
    }
}

/// Interconnects plant and controller; `𝒞 = [N, Kc]`.
pub fn assemble_closed_loop<T: Real>(
    plant: PlantModel<T>,
    controller: Controller<T>,
    n_w: Mat<T>,
    k_w: Mat<T>,
) -> Result<ClosedLoop<T>> {
    let (n, nu) = (plant.n(), controller.params.nu());
    let (p1, p2) = (plant.p1(), plant.p2());
    let r = n_w.nrows();
    check_shape("N", &n_w, r, n)?;
    check_shape("K", &k_w, r, p2)?;
    check_shape("controller c", &controller.c, p2, nu)?;
    check_shape("controller e", &controller.e, nu, p1)?;
    let (a, b, c, e, d) = (&plant.a, &plant.b, &plant.c, &plant.e, &plant.d);
    let (ac, bc, cc, ec, dc) = (&controller.a, &controller.b, &controller.c, &controller.e, &controller.d);
    let big_a = vstack(&[&hstack(&[a, &(e * cc)]), &hstack(&[&(ec * c), ac])]);
    let big_b = vstack(&[&hstack(&[b, &(e * dc)]), &hstack(&[&(ec * d), bc])]);
    let big_c = hstack(&[&n_w, &(&k_w * cc)]);
    let j = block_diag(&[&canonical_j(plant.m1())?, &canonical_j(controller.params.m2.nrows())?]);
    let theta = block_diag(&[&plant.theta1, &controller.theta2]);

    let half = T::lit(0.5);
    let (l1, l2, r1, r2) = (&plant.l1, &controller.params.l2, &plant.r1, &controller.params.r2);
    let off = (l1.transpose() * cc + c.transpose() * l2).scale(half);
    let energy = vstack(&[&hstack(&[r1, &off]), &hstack(&[&off.transpose(), r2])]);
    let coupling = vstack(&[
        &hstack(&[&plant.m1, &(d.transpose() * l2)]),
        &hstack(&[&(dc.transpose() * l1), &controller.params.m2]),
    ]);

    let sys = LinearSystem { a: big_a, b: big_b, c: big_c, j, theta };
    let mho = sys.mho();
    let pi = sys.pi();
    Ok(ClosedLoop { sys, plant, controller, n_w, k_w, mho, pi, energy, coupling })
}

/// Weights `N = Σ`, `K = −Σ` penalizing the mismatch between plant and controller output.
pub fn filtering_weights<T: Real>(sigma: &Mat<T>) -> (Mat<T>, Mat<T>) {
    (sigma.clone(), -sigma)
}

/// `‖𝒜Θ + Θ𝒜ᵀ + ℬJℬᵀ‖_F`.
pub fn pr_residual<T: Real>(sys: &LinearSystem<T>) -> T {
    (&sys.a * &sys.theta + &sys.theta * sys.a.transpose() + sys.mho()).norm()
}

/// Two-point CCR kernel `V(τ)`.
pub fn ccr_kernel<T: Real>(sys: &LinearSystem<T>, tau: T) -> Mat<T> {
    if tau >= T::zero() {
        expm_real(&sys.a.scale(tau)) * &sys.theta
    } else {
        &sys.theta * expm_real(&sys.a.transpose().scale(-tau))
    }
}

/// Covariance kernel `P(τ)` of the criterion process and its commutator kernel `Λ(τ) = 𝒞V(τ)𝒞ᵀ`.
pub fn covariance_kernel<T: Real>(sys: &LinearSystem<T>, tau: T) -> Result<(Mat<T>, Mat<T>)> {
    let p = sys.gramian()?;
    let inner = if tau >= T::zero() {
        expm_real(&sys.a.scale(tau)) * p
    } else {
        p * expm_real(&sys.a.transpose().scale(-tau))
    };
    let cov = &sys.c * inner * sys.c.transpose();
    let lam = &sys.c * ccr_kernel(sys, tau) * sys.c.transpose();
    Ok((cov, lam))
}

/// True iff every eigenvalue has real part below `−EPS_STAB`.
pub fn is_hurwitz<T: Real>(a: &Mat<T>) -> bool {
    is_hurwitz_eps(a, T::lit(EPS_STAB))
}
