use crate::linalg::to_complex;
use crate::scalar::{CMat, Mat, Real};
use nalgebra::ComplexField;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1<T: Real>(a: &CMat<T>) -> T {
    (0..a.ncols())
        .map(|j| a.column(j).iter().fold(T::zero(), |s, z| s + z.modulus()))
        .fold(T::zero(), |m, x| if x > m { x } else { m })
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm<T: Real>(a: &CMat<T>) -> CMat<T> {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let nrm = norm1(a).as_f64();
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.unscale(T::lit(2f64.powi(s)));
    let b: Vec<T> = PADE13.iter().map(|&x| T::lit(x)).collect();
    let id = CMat::<T>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let c = |k: usize| nalgebra::Complex::new(b[k], T::zero());
    let inner_u = &a6 * (a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]))
        + a6.scale(b[7])
        + a4.scale(b[5])
        + a2.scale(b[3])
        + id.map(|z| z * c(1));
    let u = &a * inner_u;
    let v = &a6 * (a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]))
        + a6.scale(b[6])
        + a4.scale(b[4])
        + a2.scale(b[2])
        + id.map(|z| z * c(0));
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).unwrap_or_else(|| CMat::from_element(n, n, nalgebra::Complex::new(T::lit(f64::NAN), T::lit(f64::NAN))));
    for _ in 0..s.max(0) {
        r = &r * &r;
    }
    r
}

/// Real matrix exponential.
pub fn expm_real<T: Real>(a: &Mat<T>) -> Mat<T> {
    expm(&to_complex(a)).map(|z| z.re)
}
