//! Small vector helpers shared by the field and coupling code.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

pub type Vec3 = Vector3<f64>;
pub type CVec3 = Vector3<Complex64>;
/// Complex Jacobian, `m[(i, j)] = ∂_j f_i`.
pub type CMat3 = Matrix3<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn complexify(v: &Vec3) -> CVec3 {
    v.map(|x| Complex64::new(x, 0.0))
}

#[inline]
pub fn conj(v: &CVec3) -> CVec3 {
    v.map(|z| z.conj())
}

#[inline]
pub fn re(v: &CVec3) -> Vec3 {
    v.map(|z| z.re)
}

#[inline]
pub fn im(v: &CVec3) -> Vec3 {
    v.map(|z| z.im)
}

#[inline]
pub fn ccross(a: &CVec3, b: &CVec3) -> CVec3 {
    CVec3::new(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )
}

/// Unconjugated bilinear dot product.
#[inline]
pub fn cdot(a: &CVec3, b: &CVec3) -> Complex64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Hermitian inner product `a* · b`.
#[inline]
pub fn hdot(a: &CVec3, b: &CVec3) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2]
}

#[inline]
pub fn norm_sqr(a: &CVec3) -> f64 {
    a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()
}

/// Curl from a Jacobian `jac[(i, j)] = ∂_j f_i`.
#[inline]
pub fn curl_from_jacobian(jac: &CMat3) -> CVec3 {
    CVec3::new(
        jac[(2, 1)] - jac[(1, 2)],
        jac[(0, 2)] - jac[(2, 0)],
        jac[(1, 0)] - jac[(0, 1)],
    )
}

#[inline]
pub fn divergence_from_jacobian(jac: &CMat3) -> Complex64 {
    jac[(0, 0)] + jac[(1, 1)] + jac[(2, 2)]
}

/// Relative difference `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn rel_diff_vec(a: &Vec3, b: &Vec3, floor: f64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(floor)
}
