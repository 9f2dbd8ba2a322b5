//! Vector-valued adaptive Gauss–Kronrod (21-point) quadrature on finite intervals and the half line.

use crate::error::{Error, Result};
use crate::scalar::Real;
use rayon::prelude::*;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Stopping rule for adaptive refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 4000 }
    }
}

impl QuadOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { abs_tol: tol, rel_tol: tol, ..Self::default() }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone)]
pub struct QuadratureReport<T: Real> {
    pub value: Vec<T>,
    /// Euclidean norm of the accumulated Kronrod–Gauss differences.
    pub error: f64,
    /// Integrand evaluations.
    pub nodes: usize,
    pub converged: bool,
    /// Frequency above which the half-line is mapped onto `(0, 1]`.
    pub split: f64,
    /// Final node set with weights, reusable as a fixed rule.
    pub grid: Grid<T>,
}

/// Fixed quadrature rule `Σ wᵢ f(xᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T: Real> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to a vector-valued integrand; evaluation is parallel, summation ordered.
    pub fn integrate<F>(&self, dim: usize, f: F) -> Result<Vec<T>>
    where
        F: Fn(T) -> Result<Vec<T>> + Sync + Send,
    {
        let vals: Vec<Vec<T>> = self.nodes.par_iter().map(|&x| f(x)).collect::<Result<_>>()?;
        let mut acc = vec![T::zero(); dim];
        for (v, &w) in vals.iter().zip(&self.weights) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += w * *x;
            }
        }
        Ok(acc)
    }
}

struct Piece<T: Real> {
    a: f64,
    b: f64,
    value: Vec<T>,
    error: f64,
}

struct Keyed(f64, usize);
impl PartialEq for Keyed {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Keyed {}
impl PartialOrd for Keyed {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Keyed {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then_with(|| o.1.cmp(&self.1))
    }
}

fn norm<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

fn kronrod_nodes(a: f64, b: f64) -> Vec<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = Vec::with_capacity(21);
    for k in 0..10 {
        out.push((c - h * XGK[k], h * WGK[k]));
        out.push((c + h * XGK[k], h * WGK[k]));
    }
    out.push((c, h * WGK[10]));
    out
}

fn gk21<T, F>(f: &F, a: f64, b: f64, dim: usize) -> Result<Piece<T>>
where
    T: Real,
    F: Fn(f64) -> Result<Vec<T>> + Sync,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let pts: Vec<f64> = (0..21)
        .map(|i| if i == 20 { c } else if i % 2 == 0 { c - h * XGK[i / 2] } else { c + h * XGK[i / 2] })
        .collect();
    let vals: Vec<Vec<T>> = pts.par_iter().map(|&x| f(x)).collect::<Result<_>>()?;
    let mut kron = vec![T::zero(); dim];
    let mut gauss = vec![T::zero(); dim];
    for (i, v) in vals.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::Quadrature(format!("integrand returned {} values, expected {dim}", v.len())));
        }
        let k = if i == 20 { 10 } else { i / 2 };
        let wk = T::lit(WGK[k] * h);
        let wg = if k % 2 == 1 { Some(T::lit(WG[k / 2] * h)) } else { None };
        for d in 0..dim {
            kron[d] += wk * v[d];
            if let Some(w) = wg {
                gauss[d] += w * v[d];
            }
        }
    }
    let diff: Vec<T> = kron.iter().zip(&gauss).map(|(k, g)| *k - *g).collect();
    if kron.iter().any(|x| !x.is_finite()) {
        return Err(Error::Quadrature(format!("non-finite integrand on [{a:e}, {b:e}]")));
    }
    Ok(Piece { a, b, value: kron, error: norm(&diff) })
}

/// Adaptive integration over the union of consecutive intervals given by `breaks`.
pub fn integrate_breaks<T, F>(f: F, breaks: &[f64], dim: usize, opts: QuadOptions) -> Result<QuadratureReport<T>>
where
    T: Real,
    F: Fn(f64) -> Result<Vec<T>> + Sync,
{
    if breaks.len() < 2 {
        return Err(Error::Quadrature("need at least one interval".into()));
    }
    let mut pieces: Vec<Piece<T>> = Vec::new();
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let p = gk21(&f, w[0], w[1], dim)?;
            heap.push(Keyed(p.error, pieces.len()));
            pieces.push(p);
        }
    }
    let mut evals = 21 * pieces.len();
    let mut alive: Vec<bool> = vec![true; pieces.len()];
    let totals = |pieces: &[Piece<T>], alive: &[bool]| {
        let mut v = vec![T::zero(); dim];
        let mut e = 0.0;
        for (p, _) in pieces.iter().zip(alive).filter(|(_, a)| **a) {
            for d in 0..dim {
                v[d] += p.value[d];
            }
            e += p.error;
        }
        (v, e)
    };
    let (mut value, mut error) = totals(&pieces, &alive);
    let mut converged = false;
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * norm(&value));
        if error <= target {
            converged = true;
            break;
        }
        if heap.len() >= opts.max_intervals {
            break;
        }
        let Some(Keyed(_, idx)) = heap.pop() else { break };
        let (a, b) = (pieces[idx].a, pieces[idx].b);
        let mid = 0.5 * (a + b);
        if !(mid > a && mid < b) {
            break;
        }
        let left = gk21(&f, a, mid, dim)?;
        let right = gk21(&f, mid, b, dim)?;
        evals += 42;
        alive[idx] = false;
        for d in 0..dim {
            value[d] += left.value[d] + right.value[d] - pieces[idx].value[d];
        }
        error += left.error + right.error - pieces[idx].error;
        for p in [left, right] {
            heap.push(Keyed(p.error, pieces.len()));
            pieces.push(p);
            alive.push(true);
        }
        if evals % (42 * 64) == 0 {
            let (v, e) = totals(&pieces, &alive);
            value = v;
            error = e;
        }
    }
    let (value, error) = totals(&pieces, &alive);
    let mut live: Vec<&Piece<T>> = pieces.iter().zip(&alive).filter(|(_, a)| **a).map(|(p, _)| p).collect();
    live.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut grid = Grid { nodes: Vec::new(), weights: Vec::new() };
    for p in live {
        for (x, w) in kronrod_nodes(p.a, p.b) {
            grid.nodes.push(T::lit(x));
            grid.weights.push(T::lit(w));
        }
    }
    Ok(QuadratureReport { value, error, nodes: evals, converged, split: f64::INFINITY, grid })
}

/// `∫_0^∞ f`, splitting at `split` and mapping `[split, ∞)` onto `(0, 1]` via `λ = split/u`.
///
/// Returned grid nodes are expressed in the original variable with the Jacobian folded into the weights.
pub fn integrate_half_line<T, F>(f: F, interior: &[f64], split: f64, dim: usize, opts: QuadOptions) -> Result<QuadratureReport<T>>
where
    T: Real,
    F: Fn(f64) -> Result<Vec<T>> + Sync,
{
    let mut breaks: Vec<f64> = vec![0.0];
    let mut inner: Vec<f64> = interior.iter().cloned().filter(|x| *x > 0.0 && *x < split).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * split);
    breaks.extend(inner);
    breaks.push(split);
    // Tail integrand lives on [split, split + 1] as t = split + u.
    breaks.push(split + 0.5);
    breaks.push(split + 1.0);
    let mapped = |x: f64| -> Result<Vec<T>> {
        if x <= split {
            f(x)
        } else {
            let u = x - split;
            let lam = split / u;
            let jac = T::lit(split / (u * u));
            Ok(f(lam)?.into_iter().map(|v| v * jac).collect())
        }
    };
    let mut rep = integrate_breaks(mapped, &breaks, dim, opts)?;
    for (x, w) in rep.grid.nodes.iter_mut().zip(rep.grid.weights.iter_mut()) {
        let xv = x.as_f64();
        if xv > split {
            let u = xv - split;
            *w *= T::lit(split / (u * u));
            *x = T::lit(split / u);
        }
    }
    rep.split = split;
    Ok(rep)
}
