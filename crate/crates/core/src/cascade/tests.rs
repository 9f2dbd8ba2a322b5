use super::*;
use crate::freq::FreqSample;
use crate::linalg::{max_abs, rel_diff};
use crate::moments::{mixed_moment3, mixed_moment4_left, mixed_moment4_right, mixed_moment5, mixed_moment2_left, mixed_moment2_right};
use crate::quadrature::QuadOptions;
use crate::testutil::benchmark_cl;
use crate::variational::{core_matrix_freq, core_matrix_lqg};

const THETA: f64 = 0.1;
const LAMBDAS: [f64; 6] = [0.03, 0.4, 1.0, 1.32, 2.7, 9.0];

fn sys() -> LinearSystem<f64> {
    benchmark_cl().sys
}

fn rel(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(a).max(max_abs(b)).max(1e-300)
}

#[test]
fn initial_conditions() {
    let s = sys();
    let rec = recursion_abg(&s, 4, 1e12).unwrap();
    assert_eq!(rec.alpha[1], s.theta);
    assert_eq!(rec.gamma[0], s.theta);
    assert_eq!(rec.beta[0], Mat::identity(4, 4));
    let ti = s.theta.clone().try_inverse().unwrap();
    assert!(rel(&rec.beta[1], &(&ti * s.mho() * &ti)) < 1e-13);
    assert_eq!(rec.depth(), 4);
}

#[test]
fn opposite_symmetries_and_alternating_definiteness() {
    let s = sys();
    let rec = recursion_abg(&s, 8, 1e12).unwrap();
    for k in 0..=8 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let b = &rec.beta[k];
        assert!(rel(&b.transpose(), &b.scale(sign)) < 1e-12, "beta_{k}");
    }
    for k in 0..8 {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        let g = &rec.gamma[k];
        assert!(rel(&g.transpose(), &g.scale(sign)) < 1e-12, "gamma_{k}");
    }
    for l in 1..=4 {
        let b = rec.beta[2 * l].scale(if l % 2 == 0 { 1.0 } else { -1.0 });
        let h = to_complex(&crate::linalg::sym(&b));
        assert!(crate::linalg::lambda_min_hermitian(&h) > 0.0, "beta_{}", 2 * l);
    }
}

#[test]
fn psi_powers_factorize() {
    let s = sys();
    let rec = recursion_abg(&s, 4, 1e12).unwrap();
    for &l in &LAMBDAS {
        let psi = FreqSample::new(&s, l).unwrap().psi;
        assert_eq!(psi_power_factorized(&s, &rec, 0, l).unwrap(), CMat::identity(s.outputs(), s.outputs()));
        assert!(max_abs(&(psi_power_factorized(&s, &rec, 1, l).unwrap() - &psi)) < 1e-9);
        let p4 = &psi * &psi * &psi * &psi;
        assert!(rel_diff(&psi_power_factorized(&s, &rec, 4, l).unwrap(), &p4) < 1e-8);
    }
    assert!(psi_power_factorized(&s, &rec, 5, 1.0).is_err());
}

#[test]
fn system_transposition() {
    let s = sys();
    for &l in &LAMBDAS {
        assert!(transposition_check(&s, &s.mho(), l).unwrap() < 1e-10);
    }
    assert!(transposition_check(&s, &Mat::zeros(4, 4), 1.0).is_err());
    let x = Mat::from_fn(4, 3, |i, j| ((i * 5 + j * 2) as f64).sin());
    let u = &x * x.transpose() + Mat::identity(4, 4).scale(0.1);
    for l in [0.1, 0.5, 0.9, 1.3, 1.7, 2.2, 3.0, 5.0, 8.0, 20.0] {
        assert!(transposition_check(&s, &u, l).unwrap() < 1e-9);
    }
}

#[test]
fn first_factorization() {
    let s = sys();
    let psi_norm = psi_norm_estimate(&s).unwrap();
    let zeroth = build_cascade(&s, THETA, 0, recursion_abg(&s, 0, 1e12).unwrap()).unwrap();
    let (n, rec) = choose_order(&s, THETA, &CascadeOptions::default()).unwrap();
    assert!(n >= 4 && n < 40, "{n}");
    let casc = build_cascade(&s, THETA, n, rec.clone()).unwrap();
    let flat = build_cascade(&s, 0.0, n, rec).unwrap();
    assert!(max_abs(&(&casc.h - casc.h.adjoint())) < 1e-15);
    for k in 0..20 {
        let l = 0.05 + 0.25 * k as f64;
        let smp = FreqSample::new(&s, l).unwrap();
        let target = smp.ipsi.apply(&AnalyticFn::Phi, C::new(2.0 * THETA, 0.0));
        let d0 = norm2(&(zeroth.first_factor_product(l).unwrap() - &target));
        assert!(d0 <= zeroth.tail_bound(psi_norm) * (1.0 + 1e-9), "{d0}");
        assert!(max_abs(&(casc.first_factor_product(l).unwrap() - &target)) < 1e-8);
        assert!(max_abs(&(flat.first_factor_product(l).unwrap() - CMat::identity(s.outputs(), s.outputs()))) < 1e-15);
    }
}

use crate::linalg::AnalyticFn;

fn cascade_and_are(theta: f64) -> (CascadeTruncation<f64>, CascadeAre<f64>) {
    let s = sys();
    let (n, rec) = choose_order(&s, theta, &CascadeOptions::default()).unwrap();
    let casc = build_cascade(&s, theta, n, rec).unwrap();
    let are = solve_cascade_are(&casc).unwrap();
    (casc, are)
}

#[test]
fn riccati_at_zero_theta_is_trivial() {
    let s = sys();
    let casc = build_cascade(&s, 0.0, 3, recursion_abg(&s, 3, 1e12).unwrap()).unwrap();
    let are = solve_cascade_are(&casc).unwrap();
    assert!(max_abs(&are.q) < 1e-12);
    assert!(max_abs(&(are.eval_g(&casc, 0.7).unwrap() - CMat::identity(4, 4))) < 1e-12);
}

#[test]
fn weighted_isometry_and_second_factorization() {
    let (casc, are) = cascade_and_are(THETA);
    assert!(are.residual < 1e-8);
    let s = sys();
    for &l in &LAMBDAS {
        assert!(are.isometry_residual(&casc, l).unwrap() < 1e-8);
        let g = are.eval_g(&casc, l).unwrap();
        let dinv = FreqSample::new(&s, l).unwrap().delta(THETA).try_inverse().unwrap();
        assert!(max_abs(&(&g * g.adjoint() - dinv)) < 1e-7);
    }
}

#[test]
fn state_space_core_at_zero_theta_is_lqg() {
    let s = sys();
    let ss = core_matrix_statespace(&s, 0.0, &CascadeOptions::default()).unwrap();
    let lqg = core_matrix_lqg(&s).unwrap();
    assert!(max_abs(&(&ss.core.chi - &lqg.chi)) < 1e-7);
}

#[test]
fn state_space_core_zero_output() {
    let s = sys();
    let z = s.with_c(Mat::zeros(2, 4));
    let ss = core_matrix_statespace(&z, THETA, &CascadeOptions::default()).unwrap();
    assert_eq!(max_abs(&ss.core.chi), 0.0);
}

#[test]
fn routes_agree() {
    let s = sys();
    for theta in [0.02, 0.05, THETA] {
        let ss = core_matrix_statespace(&s, theta, &CascadeOptions::default()).unwrap();
        let fr = core_matrix_freq(&s, theta, QuadOptions::default()).unwrap();
        let d = (&ss.core.chi - &fr.chi).norm();
        assert!(d <= 1e-5 * (1.0 + fr.chi.norm()), "theta {theta}: {d} order {}", ss.order);
    }
}

/// Per-term evaluation with the generic mixed-moment routines.
fn naive_core(s: &LinearSystem<f64>, casc: &CascadeTruncation<f64>, are: &CascadeAre<f64>, j_max: usize) -> CoreMatrix<f64> {
    let (ns, r, n) = (s.states(), s.outputs(), casc.order);
    let nc = casc.states();
    let sm = s_root(&s.j);
    let sc = to_complex(&casc.s_c);
    let mut bw = CMat::zeros(nc, ns);
    bw.view_mut((0, 0), (ns, ns)).fill_with_identity();
    let w = Realization::new(to_complex(&casc.s_a), bw.clone(), sc.clone()).unwrap();
    let xi = Realization::new(are.a_g.clone(), casc.s_b.clone(), sc.clone()).unwrap();
    let zh = xi.with_c(&casc.h * &sc);
    let p0 = xi.with_c(bw.transpose());
    let ysp = xi.with_c(&sm * &are.l);
    let gb = Realization::new(to_complex(&s.a), to_complex(&s.b), CMat::identity(ns, ns)).unwrap();
    let mut c11 = mixed_moment3(&w, &zh, &p0).unwrap();
    let mut c12 = mixed_moment3(&w, &zh, &ysp).unwrap() + mixed_moment2_left(&w, &zh).unwrap() * &sm;
    let mut c21 = to_complex(&casc.f_d).adjoint() * mixed_moment2_right(&zh, &p0).unwrap();
    let f = Realization::new(to_complex(&casc.f_a), to_complex(&casc.f_b), to_complex(&casc.f_c)).unwrap();
    c21 += mixed_moment3(&f, &zh, &p0).unwrap();
    let row = |k: usize| sc_row(casc, ns, r, k);
    for j in 0..=n.min(j_max) {
        for k in 0..=n.min(j_max - j) {
            let mut c = C::new(0.0, 2.0 * THETA) / factorial(j + k + 2);
            for _ in 0..j + k {
                c *= C::new(0.0, -2.0 * THETA);
            }
            let f1 = w.with_c(row(j));
            let f2 = xi.with_c(beta_t(casc, r, j) * row(j));
            let f3 = xi.with_c(row(k));
            let f4 = w.with_b(&bw * to_complex(&s.b) * to_complex(&s.j)).with_c(beta_t(casc, r, k) * row(k));
            c11 += mixed_moment5(&f1, &f2, &f3, &f4, &gb).unwrap() * c;
            c12 += mixed_moment4_left(&f1, &f2, &f3, &f4).unwrap() * c;
            if j == 0 {
                c21 += mixed_moment4_right(&f2, &f3, &f4, &gb).unwrap() * c;
            } else {
                let fj = f.with_c(f.c.rows(r + (j - 1) * ns, ns).clone_owned());
                c21 += mixed_moment5(&fj, &f2, &f3, &f4, &gb).unwrap() * c;
            }
        }
    }
    let re = |z: &CMat<f64>| z.map(|x| x.re);
    CoreMatrix::from_blocks(&re(&c11), &re(&c12), &re(&c21))
}

#[test]
fn aggregated_sums_match_term_by_term_moments() {
    let s = sys();
    let casc = build_cascade(&s, THETA, 3, recursion_abg(&s, 3, 1e12).unwrap()).unwrap();
    let are = solve_cascade_are(&casc).unwrap();
    for j_max in [0, 2, 3, 5] {
        let fast = assemble_statespace_core(&s, &casc, &are, j_max).unwrap();
        let slow = naive_core(&s, &casc, &are, j_max);
        assert!(rel(&fast.chi, &slow.chi) < 1e-10, "{j_max}");
    }
}

#[test]
fn series_truncation_converges() {
    let s = sys();
    let order = 8;
    let casc = build_cascade(&s, THETA, order, recursion_abg(&s, order, 1e12).unwrap()).unwrap();
    let are = solve_cascade_are(&casc).unwrap();
    let full = assemble_statespace_core(&s, &casc, &are, order).unwrap().chi;
    let mut prev = f64::INFINITY;
    for j_max in [1, 3, 5] {
        let d = max_abs(&(assemble_statespace_core(&s, &casc, &are, j_max).unwrap().chi - &full));
        assert!(d < prev);
        prev = d;
    }
    assert!(prev < 1e-4);
}

#[test]
fn ill_conditioned_gamma_is_reported() {
    let s = sys();
    assert!(matches!(recursion_abg(&s, 6, 1.0), Err(Error::IllConditionedGamma { k: 0, .. }) | Err(Error::IllConditionedGamma { .. })));
}
