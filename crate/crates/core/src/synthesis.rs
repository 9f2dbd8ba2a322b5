//! Admissibility-preserving gradient descent over the controller parameters.

use crate::error::{Error, Result};
use crate::freq::{check_spectral_condition, mean_square_rate, qef_rate_on_grid};
use crate::linalg::spectral_abscissa;
use crate::quadrature::{Grid, QuadOptions};
use crate::scalar::{Mat, Real};
use crate::system::{is_hurwitz, pr_residual, ClosedLoop, ControllerParams};
use crate::variational::{
    controller_gradients, core_matrix_lqg, cost_and_core, cost_and_core_on_grid, stationarity_residual,
    ControllerGradient, FrozenWeight,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Function being minimized.
#[derive(Debug, Clone)]
pub enum Objective<T: Real> {
    /// `Υ_*`, admissibility is Hurwitz stability only.
    MeanSquare,
    /// `Υ_θ` on a fixed frequency rule.
    Risk { theta: T, grid: Grid<T> },
    /// `V` with a frozen weighting operator; the gradient is scaled by `θ`.
    Weighted(FrozenWeight<T>),
}

impl<T: Real> Objective<T> {
    /// `Υ_θ` on a rule adapted to the closed loop `cl`.
    pub fn risk(cl: &ClosedLoop<T>, theta: T, quad: QuadOptions) -> Result<Self> {
        admissibility_margin(cl, Some(theta))?;
        let grid = cost_and_core(&cl.sys, theta, quad)?.grid;
        Ok(Objective::Risk { theta, grid })
    }

    /// Weight frozen at `cl_ref`.
    pub fn weighted(cl_ref: &ClosedLoop<T>, theta: T, grid: &Grid<T>) -> Result<Self> {
        Ok(Objective::Weighted(FrozenWeight::new(&cl_ref.sys, theta, grid)?))
    }

    pub fn theta(&self) -> Option<T> {
        match self {
            Objective::MeanSquare => None,
            Objective::Risk { theta, .. } => Some(*theta),
            Objective::Weighted(w) => Some(w.theta),
        }
    }

    /// Cost and admissibility margin at `cl`, or `None` when `cl` is not admissible.
    pub fn cost(&self, cl: &ClosedLoop<T>) -> Result<Option<(T, f64)>> {
        let margin = match admissibility_margin(cl, self.theta()) {
            Ok(m) => m,
            Err(e) if e.is_inadmissible() => return Ok(None),
            Err(e) => return Err(e),
        };
        let cost = match self {
            Objective::MeanSquare => mean_square_rate(&cl.sys),
            Objective::Risk { theta, grid } => qef_rate_on_grid(&cl.sys, *theta, grid),
            Objective::Weighted(w) => w.cost(&cl.sys),
        };
        match cost {
            Ok(c) => Ok(Some((c, margin))),
            Err(e) if e.is_inadmissible() => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Gradient with respect to `(R₂, M₂, L₂)` at an admissible `cl`.
    pub fn gradient(&self, cl: &ClosedLoop<T>) -> Result<ControllerGradient<T>> {
        let (core, scale) = match self {
            Objective::MeanSquare => (core_matrix_lqg(&cl.sys)?, T::one()),
            Objective::Risk { theta, grid } => (cost_and_core_on_grid(&cl.sys, *theta, grid)?.1, *theta),
            Objective::Weighted(w) => (w.cost_and_core(&cl.sys)?.1, w.theta),
        };
        Ok(controller_gradients(cl, &core, scale))
    }

    /// Cost, gradient and margin, or `None` when `cl` is not admissible.
    pub fn evaluate(&self, cl: &ClosedLoop<T>) -> Result<Option<Evaluation<T>>> {
        let Some((cost, margin)) = self.cost(cl)? else { return Ok(None) };
        Ok(Some(Evaluation { cost, grad: self.gradient(cl)?, margin }))
    }
}

/// Cost, gradient and admissibility margin at one controller.
#[derive(Debug, Clone)]
pub struct Evaluation<T: Real> {
    pub cost: T,
    pub grad: ControllerGradient<T>,
    pub margin: f64,
}

const PR_TOL: f64 = 1e-9;

/// Spectral-condition margin at `θ`, or the stability margin `−max Re λ(𝒜)` without `θ`.
pub fn admissibility_margin<T: Real>(cl: &ClosedLoop<T>, theta: Option<T>) -> Result<f64> {
    let sys = &cl.sys;
    let abscissa = spectral_abscissa(&sys.a)?.as_f64();
    if !is_hurwitz(&sys.a) {
        return Err(Error::NotHurwitz { max_real: abscissa });
    }
    let scale = 1.0 + sys.a.norm().as_f64() * sys.theta.norm().as_f64() + sys.mho().norm().as_f64();
    let pr = pr_residual(sys).as_f64();
    if pr > PR_TOL * scale {
        return Err(Error::InvalidModel(format!("physical realizability residual {pr:e}")));
    }
    match theta {
        None => Ok(-abscissa),
        Some(th) => {
            let check = check_spectral_condition(sys, th)?;
            if check.admissible {
                Ok(check.margin)
            } else {
                Err(Error::SpectralCondition { margin: check.margin, lambda: check.lambda })
            }
        }
    }
}

/// Trial step at each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Always start from `initial_step`.
    Fixed,
    /// Barzilai–Borwein estimate from the last two iterates, clipped to `[min_step, max_step]`.
    BarzilaiBorwein { max_step: f64, variant: BbVariant },
}

/// Which Barzilai–Borwein quotient to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbVariant {
    /// `sᵀs / sᵀy`.
    Long,
    /// `sᵀy / yᵀy`.
    Short,
    /// Long on odd iterations, short on even ones.
    Alternating,
}

#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    pub max_iters: usize,
    /// Absolute stationarity tolerance.
    pub tol_stat: f64,
    /// Stop also once the residual drops below `rel_tol` times the initial residual.
    pub rel_tol: f64,
    pub armijo: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub step_rule: StepRule,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol_stat: 1e-6,
            rel_tol: 0.0,
            armijo: 1e-4,
            initial_step: 1.0,
            min_step: 1e-14,
            step_rule: StepRule::BarzilaiBorwein { max_step: 1e3, variant: BbVariant::Short },
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentState<T: Real> {
    pub params: ControllerParams<T>,
    pub cost: T,
    pub grad: ControllerGradient<T>,
    /// Step that produced this iterate; zero for the starting point.
    pub step: f64,
    pub iteration: usize,
    pub margin: f64,
}

impl<T: Real> DescentState<T> {
    pub fn residual(&self) -> T {
        stationarity_residual(&self.grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Stationary,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct DescentTrace<T: Real> {
    pub states: Vec<DescentState<T>>,
    pub stop: StopReason,
}

impl<T: Real> DescentTrace<T> {
    pub fn last(&self) -> &DescentState<T> {
        self.states.last().expect("trace holds the starting point")
    }

    pub fn params(&self) -> &ControllerParams<T> {
        &self.last().params
    }

    pub fn iterations(&self) -> usize {
        self.last().iteration
    }
}

fn inner<T: Real>(a: &ControllerParams<T>, b: &ControllerParams<T>) -> f64 {
    (a.r2.dot(&b.r2) + a.m2.dot(&b.m2) + a.l2.dot(&b.l2)).as_f64()
}

fn difference<T: Real>(a: &ControllerParams<T>, b: &ControllerParams<T>) -> ControllerParams<T> {
    ControllerParams { r2: &a.r2 - &b.r2, m2: &a.m2 - &b.m2, l2: &a.l2 - &b.l2 }
}

/// Steepest descent with backtracking on `objective` starting from `init`.
pub fn descend<T: Real>(
    base: &ClosedLoop<T>,
    init: &ControllerParams<T>,
    objective: &Objective<T>,
    opts: &DescentOptions,
) -> Result<DescentTrace<T>> {
    let cl = base.with_params(init.clone())?;
    admissibility_margin(&cl, objective.theta())?;
    let Some(ev) = objective.evaluate(&cl)? else {
        return Err(Error::SpectralCondition { margin: 0.0, lambda: f64::NAN });
    };
    let mut state =
        DescentState { params: init.clone(), cost: ev.cost, grad: ev.grad, step: 0.0, iteration: 0, margin: ev.margin };
    let res0 = state.residual().as_f64();
    let tol = opts.tol_stat.max(opts.rel_tol * res0);
    let mut states = vec![state.clone()];
    let mut prev: Option<(ControllerParams<T>, ControllerGradient<T>)> = None;
    let stop = loop {
        let res = state.residual().as_f64();
        if res < tol {
            break StopReason::Stationary;
        }
        if state.iteration >= opts.max_iters {
            break StopReason::MaxIterations;
        }
        let mut step = match (opts.step_rule, &prev) {
            (StepRule::BarzilaiBorwein { max_step, variant }, Some((p, g))) => {
                let s = difference(&state.params, p);
                let y = difference(&state.grad.as_params(), &g.as_params());
                let sy = inner(&s, &y);
                let long = match variant {
                    BbVariant::Long => true,
                    BbVariant::Short => false,
                    BbVariant::Alternating => state.iteration % 2 == 1,
                };
                if sy > 0.0 {
                    let q = if long { inner(&s, &s) / sy } else { sy / inner(&y, &y) };
                    q.clamp(opts.min_step, max_step)
                } else {
                    opts.initial_step
                }
            }
            _ => opts.initial_step,
        };
        let dir = state.grad.as_params();
        let g2 = state.grad.norm_squared().as_f64();
        let mut halvings = 0;
        let accepted = loop {
            if step < opts.min_step {
                return Err(Error::LineSearch(halvings));
            }
            let trial = state.params.axpy(T::lit(-step), &dir);
            let cl = base.with_params(trial.clone())?;
            if let Some((cost, margin)) = objective.cost(&cl)? {
                if cost.as_f64() <= state.cost.as_f64() - opts.armijo * step * g2 {
                    break DescentState {
                        params: trial,
                        cost,
                        grad: objective.gradient(&cl)?,
                        step,
                        iteration: state.iteration + 1,
                        margin,
                    };
                }
            }
            step *= 0.5;
            halvings += 1;
        };
        prev = Some((state.params.clone(), state.grad.clone()));
        state = accepted;
        states.push(state.clone());
    };
    Ok(DescentTrace { states, stop })
}

/// Stage of a continuation run.
#[derive(Debug, Clone)]
pub struct ContinuationStage<T: Real> {
    pub theta: T,
    pub trace: DescentTrace<T>,
}

/// `Υ_θ` descent over `θ/8, θ/4, θ/2, θ`, each stage warm-started from the previous one.
pub fn descend_continuation<T: Real>(
    base: &ClosedLoop<T>,
    init: &ControllerParams<T>,
    theta: T,
    quad: QuadOptions,
    opts: &DescentOptions,
) -> Result<Vec<ContinuationStage<T>>> {
    let mut params = init.clone();
    let mut stages = Vec::with_capacity(4);
    for div in [8.0, 4.0, 2.0, 1.0] {
        let th = theta / T::lit(div);
        let objective = Objective::risk(&base.with_params(params.clone())?, th, quad)?;
        let trace = descend(base, &params, &objective, opts)?;
        params = trace.params().clone();
        stages.push(ContinuationStage { theta: th, trace });
    }
    Ok(stages)
}

#[derive(Debug, Clone, Copy)]
pub struct InitOptions {
    pub seed: u64,
    /// Maximum number of random draws when the seed is not stabilizing.
    pub budget: usize,
    /// Initial half-width of the sampling interval.
    pub sigma0: f64,
    /// Factor applied to the half-width after every `anneal_every` rejected draws.
    pub anneal_factor: f64,
    pub anneal_every: usize,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self { seed: 0, budget: 1000, sigma0: 0.1, anneal_factor: 1.5, anneal_every: 100 }
    }
}

/// Outcome of the mean-square initialization.
#[derive(Debug, Clone)]
pub struct CqlqgInit<T: Real> {
    pub seed_params: ControllerParams<T>,
    /// Random draws used; zero when the supplied seed was stabilizing.
    pub draws: usize,
    pub trace: DescentTrace<T>,
}

impl<T: Real> CqlqgInit<T> {
    pub fn params(&self) -> &ControllerParams<T> {
        self.trace.params()
    }
}

fn uniform_mat<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sigma: f64) -> Mat<T> {
    Mat::from_fn(rows, cols, |_, _| T::lit(rng.random_range(-sigma..=sigma)))
}

/// Random stabilizing controller parameters with entries uniform on `[−σ, σ]`.
pub fn random_stabilizing<T: Real>(base: &ClosedLoop<T>, opts: &InitOptions) -> Result<(ControllerParams<T>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (nu, m2, p1) = (base.nu(), base.m2(), base.p1());
    let mut sigma = opts.sigma0;
    for draw in 1..=opts.budget {
        let r = uniform_mat::<T>(&mut rng, nu, nu, sigma);
        let params = ControllerParams {
            r2: (&r + r.transpose()).scale(T::lit(0.5)),
            m2: uniform_mat(&mut rng, m2, nu, sigma),
            l2: uniform_mat(&mut rng, p1, nu, sigma),
        };
        if admissibility_margin(&base.with_params(params.clone())?, None).is_ok() {
            return Ok((params, draw));
        }
        if opts.anneal_every > 0 && draw % opts.anneal_every == 0 {
            sigma *= opts.anneal_factor;
        }
    }
    Err(Error::NoAdmissibleSeed(opts.budget))
}

/// Local minimizer of `Υ_*` reached by descent from `seed`, or from a random stabilizing draw.
pub fn cqlqg_init<T: Real>(
    base: &ClosedLoop<T>,
    seed: Option<&ControllerParams<T>>,
    init_opts: &InitOptions,
    opts: &DescentOptions,
) -> Result<CqlqgInit<T>> {
    let usable = seed.filter(|p| {
        base.with_params((*p).clone()).map(|cl| admissibility_margin(&cl, None).is_ok()).unwrap_or(false)
    });
    let (seed_params, draws) = match usable {
        Some(p) => (p.clone(), 0),
        None => random_stabilizing(base, init_opts)?,
    };
    let trace = descend(base, &seed_params, &Objective::MeanSquare, opts)?;
    Ok(CqlqgInit { seed_params, draws, trace })
}

#[derive(Debug, Clone, Copy)]
pub struct WeightedOptions {
    pub descent: DescentOptions,
    /// Outer loop stops once consecutive parameters differ by less than this in Frobenius norm.
    pub outer_tol: f64,
    pub quad: QuadOptions,
}

impl Default for WeightedOptions {
    fn default() -> Self {
        Self { descent: DescentOptions { tol_stat: 1e-9, ..Default::default() }, outer_tol: 1e-8, quad: QuadOptions::default() }
    }
}

/// Iterates of the weighted mean-square scheme.
#[derive(Debug, Clone)]
pub struct WeightedRun<T: Real> {
    /// `params[0]` is the initial controller.
    pub params: Vec<ControllerParams<T>>,
    pub inner_iterations: Vec<usize>,
    /// `‖params[k] − params[k−1]‖_F` per outer step.
    pub step_norms: Vec<f64>,
    /// Stationarity residual of `Υ_θ` at the last iterate, on the shared rule.
    pub risk_residual: f64,
    pub converged: bool,
    pub theta: T,
    pub grid: Grid<T>,
}

impl<T: Real> WeightedRun<T> {
    pub fn last(&self) -> &ControllerParams<T> {
        self.params.last().expect("run holds the initial controller")
    }

    /// `|Υ_θ(last) − Υ_θ(reference)|` on the shared rule.
    ///
    /// Stationary points come in families related by symplectic changes of the controller
    /// state, so parameters are compared through the cost.
    pub fn cost_gap(&self, base: &ClosedLoop<T>, reference: &ControllerParams<T>) -> Result<f64> {
        let a = qef_rate_on_grid(&base.with_params(self.last().clone())?.sys, self.theta, &self.grid)?;
        let b = qef_rate_on_grid(&base.with_params(reference.clone())?.sys, self.theta, &self.grid)?;
        Ok((a - b).abs().as_f64())
    }
}

/// Outer loop: freeze the weight at the current controller, then descend the weighted cost.
pub fn weighted_cqlqg_iterate<T: Real>(
    base: &ClosedLoop<T>,
    init: &ControllerParams<T>,
    theta: T,
    k_outer: usize,
    opts: &WeightedOptions,
) -> Result<WeightedRun<T>> {
    let cl0 = base.with_params(init.clone())?;
    admissibility_margin(&cl0, Some(theta))?;
    let grid = cost_and_core(&cl0.sys, theta, opts.quad)?.grid;
    let mut params = vec![init.clone()];
    let (mut inner_iterations, mut step_norms) = (Vec::new(), Vec::new());
    let mut converged = false;
    for _ in 0..k_outer {
        let current = params.last().expect("nonempty").clone();
        let objective = Objective::weighted(&base.with_params(current.clone())?, theta, &grid)?;
        let trace = descend(base, &current, &objective, &opts.descent)?;
        let next = trace.params().clone();
        let dn = difference(&next, &current).norm().as_f64();
        inner_iterations.push(trace.iterations());
        step_norms.push(dn);
        params.push(next);
        if dn < opts.outer_tol {
            converged = true;
            break;
        }
    }
    let risk = Objective::Risk { theta, grid: grid.clone() };
    let end = base.with_params(params.last().expect("nonempty").clone())?;
    let risk_residual = match risk.evaluate(&end)? {
        Some(ev) => stationarity_residual(&ev.grad).as_f64(),
        None => f64::INFINITY,
    };
    Ok(WeightedRun { params, inner_iterations, step_norms, risk_residual, converged, theta, grid })
}
