//! Velocity-dependent coupling coefficients between a dielectric sphere and
//! electromagnetic modes.
//!
//! Every `(ε − 1)`-weighted integral runs over the sphere interior only.
//! Values are per photon in natural units: `λ`, `η` as wavenumbers and `γ`,
//! `g` as pure numbers.

use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::modes::{domain_rule, ModeField};
use crate::quadrature::{integrate_over_sphere, BallRule, QuadratureSpec};
use crate::units::{permittivity, BeamParams, DielectricSphere};
use crate::vecmath::{c, ccross, conj, curl_from_jacobian, norm_sqr, CMat3, CVec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Quadrature,
    ClosedForm,
    /// Real mode: the imaginary part vanishes identically, so no integral is evaluated.
    RealModeExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingVector {
    pub value: Vec3,
    pub provenance: Provenance,
    pub at_q: Vec3,
    /// Relative change against the half-order rule; zero for closed forms.
    pub error_estimate: f64,
    pub flagged: bool,
}

impl CouplingVector {
    fn closed_form(value: Vec3, at_q: Vec3) -> Self {
        Self {
            value,
            provenance: Provenance::ClosedForm,
            at_q,
            error_estimate: 0.0,
            flagged: false,
        }
    }

    fn real_mode(at_q: Vec3) -> Self {
        Self {
            value: Vec3::zeros(),
            provenance: Provenance::RealModeExact,
            at_q,
            error_estimate: 0.0,
            flagged: false,
        }
    }
}

/// `Σ_l a_l ∂_q b_l` as a complex 3-vector, with `grad[(l, α)] = ∂_{q_α} b_l`.
fn contract_gradq(a: &CVec3, grad: &CMat3) -> CVec3 {
    grad.transpose() * a
}

/// `−∫ ε Σ_l (a·ê_l) ∇_q (f_j·ê_l)` over the normalization domain, with
/// `a = f_k` or `f_k*`. Returns `None` when `f_j` does not depend on `q`.
fn gradq_term(fk: &dyn ModeField, fj: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, conjugate: bool) -> Option<CVec3> {
    let probe = fj.normalization();
    fj.grad_q(q, q)?;
    let kmax = fk.frequency().max(fj.frequency());
    let (nodes, weights) = domain_rule(&probe, q, kmax);
    let mut acc = CVec3::zeros();
    for (p, w) in nodes.iter().zip(&weights) {
        let grad = fj.grad_q(p, q)?;
        let a = if conjugate { conj(&fk.value(p)) } else { fk.value(p) };
        acc += contract_gradq(&a, &grad) * c(w * permittivity(p, q, sphere), 0.0);
    }
    Some(-acc)
}

/// Result of one combined quadrature pass for a single complex mode.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SingleModeCouplings {
    pub at_q: Vec3,
    /// `λ(q)` per photon.
    pub lambda: Vec3,
    /// `γ(q)` per photon.
    pub gamma: Vec3,
    pub omega0: f64,
    /// Perturbed mode frequency `ω(q)`.
    pub omega: f64,
    pub grad_omega: Vec3,
    pub error_estimate: f64,
    pub flagged: bool,
}

/// `[Im(f*×∇×f), d×Im(f*×∇×f), |f|², ∇|f|²]` at one node.
#[inline]
fn single_mode_integrand(mode: &dyn ModeField, r: &Vec3, d: &Vec3) -> [f64; 10] {
    let (f, jac) = mode.value_and_jacobian(r);
    let fc = conj(&f);
    let v = ccross(&fc, &curl_from_jacobian(&jac));
    let im = Vec3::new(v.x.im, v.y.im, v.z.im);
    let tq = d.cross(&im);
    let g = (jac.transpose() * fc).map(|z| 2.0 * z.re);
    [im.x, im.y, im.z, tq.x, tq.y, tq.z, norm_sqr(&f), g.x, g.y, g.z]
}

fn assemble(mode: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, v: &[f64; 10], err: f64, flagged: bool) -> SingleModeCouplings {
    let e = sphere.eps_contrast();
    let omega0 = mode.frequency();
    let half = 0.5 * e * omega0;
    SingleModeCouplings {
        at_q: *q,
        lambda: -Vec3::new(v[0], v[1], v[2]) * e,
        gamma: -Vec3::new(v[3], v[4], v[5]) * e,
        omega0,
        omega: omega0 - half * v[6],
        grad_omega: -Vec3::new(v[7], v[8], v[9]) * half,
        error_estimate: err,
        flagged,
    }
}

/// `λ`, `γ`, `ω` and `∇ω` from one pass over the sphere, with an
/// order-refinement error estimate.
pub fn single_mode_couplings(mode: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec) -> SingleModeCouplings {
    let res = integrate_over_sphere(|r, d| single_mode_integrand(mode, r, d), q, sphere.radius, quad);
    assemble(mode, sphere, q, &res.value, res.error_estimate, res.flagged)
}

/// Same as [`single_mode_couplings`] with a prebuilt rule and no error
/// estimate, for inner loops.
pub fn single_mode_couplings_with_rule(mode: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, rule: &BallRule) -> SingleModeCouplings {
    let v = rule.integrate(q, sphere.radius, |r, d| single_mode_integrand(mode, r, d));
    assemble(mode, sphere, q, &v, 0.0, false)
}

/// Couplings and their exact `q`-Jacobians for one discrete ball rule.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CouplingGradients {
    pub lambda: Vec3,
    pub gamma: Vec3,
    /// `d_lambda[(i, a)] = ∂λ_i/∂q_a`.
    pub d_lambda: Matrix3<f64>,
    pub d_gamma: Matrix3<f64>,
    pub omega0: f64,
    /// `ω(q) − ω₀`, kept separately to avoid cancellation.
    pub omega_shift: f64,
    pub grad_omega: Vec3,
}

/// Couplings with Jacobians from differentiating under the integral.
///
/// The rule's nodes move rigidly with `q`, so the returned Jacobians are the
/// exact derivatives of the discrete couplings. Returns `None` when the mode
/// has no closed-form Hessian.
pub fn single_mode_gradients_with_rule(mode: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, rule: &BallRule) -> Option<CouplingGradients> {
    mode.hessian(q)?;
    let v = rule.integrate(q, sphere.radius, |r, d| {
        let mut out = [0.0; 28];
        let (f, jac) = mode.value_and_jacobian(r);
        let Some(hess) = mode.hessian(r) else {
            return [f64::NAN; 28];
        };
        let fc = conj(&f);
        let curl = curl_from_jacobian(&jac);
        let im = ccross(&fc, &curl).map(|z| z.im);
        let t = d.cross(&im);
        out[..3].copy_from_slice(im.as_slice());
        out[3..6].copy_from_slice(t.as_slice());
        for a in 0..3 {
            let da: CVec3 = jac.column(a).into();
            // D[(l, b)] = ∂_a ∂_b f_l
            let dmat = CMat3::from_fn(|l, b| hess[l][(a, b)]);
            let dv = (ccross(&conj(&da), &curl) + ccross(&fc, &curl_from_jacobian(&dmat))).map(|z| z.im);
            let dt = d.cross(&dv);
            for i in 0..3 {
                out[6 + 3 * i + a] = dv[i];
                out[15 + 3 * i + a] = dt[i];
            }
        }
        out[24] = norm_sqr(&f);
        let g = (jac.transpose() * fc).map(|z| 2.0 * z.re);
        out[25..28].copy_from_slice(g.as_slice());
        out
    });
    let e = sphere.eps_contrast();
    let omega0 = mode.frequency();
    let half = 0.5 * e * omega0;
    Some(CouplingGradients {
        lambda: -Vec3::new(v[0], v[1], v[2]) * e,
        gamma: -Vec3::new(v[3], v[4], v[5]) * e,
        d_lambda: -Matrix3::from_row_slice(&v[6..15]) * e,
        d_gamma: -Matrix3::from_row_slice(&v[15..24]) * e,
        omega0,
        omega_shift: -half * v[24],
        grad_omega: -Vec3::new(v[25], v[26], v[27]) * half,
    })
}

/// `λ(q) = −Im ∫ (ε − 1) f*×(∇×f)` per photon, optionally with the
/// `∇_q` term when the mode provides it.
pub fn lambda_single(mode: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec, include_gradq: bool) -> CouplingVector {
    if mode.is_real() {
        return CouplingVector::real_mode(*q);
    }
    let res = integrate_over_sphere(
        |r, _| {
            let (f, jac) = mode.value_and_jacobian(r);
            let v = ccross(&conj(&f), &curl_from_jacobian(&jac));
            [v.x.im, v.y.im, v.z.im]
        },
        q,
        sphere.radius,
        quad,
    );
    let mut value = -Vec3::from(res.value) * sphere.eps_contrast();
    if include_gradq {
        if let Some(t) = gradq_term(mode, mode, sphere, q, true) {
            value += t.map(|z| z.im);
        }
    }
    CouplingVector {
        value,
        provenance: Provenance::Quadrature,
        at_q: *q,
        error_estimate: res.error_estimate,
        flagged: res.flagged,
    }
}

/// `γ(q) = −Im ∫ (ε − 1)(r − q)×[f*×(∇×f)]` per photon.
pub fn gamma_single(mode: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec) -> CouplingVector {
    if mode.is_real() {
        return CouplingVector::real_mode(*q);
    }
    let res = integrate_over_sphere(
        |r, d| {
            let (f, jac) = mode.value_and_jacobian(r);
            let v = ccross(&conj(&f), &curl_from_jacobian(&jac));
            let t = d.cross(&Vec3::new(v.x.im, v.y.im, v.z.im));
            [t.x, t.y, t.z]
        },
        q,
        sphere.radius,
        quad,
    );
    CouplingVector {
        value: -Vec3::from(res.value) * sphere.eps_contrast(),
        provenance: Provenance::Quadrature,
        at_q: *q,
        error_estimate: res.error_estimate,
        flagged: res.flagged,
    }
}

/// Shared body of the real-mode coefficients; `weighted` selects the
/// `(r − q)×` moment arm.
fn real_pair(uk: &dyn ModeField, uj: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec, weighted: bool) -> Result<CouplingVector> {
    if !uk.is_real() || !uj.is_real() {
        return Err(Error::domain("real-mode coefficient requested for a complex mode; use complex_coupling_coeffs"));
    }
    let res = integrate_over_sphere(
        |r, d| {
            let a = uk.value(r).map(|z| z.re);
            let curl = curl_from_jacobian(&uj.jacobian(r)).map(|z| z.re);
            let v = a.cross(&curl);
            let v = if weighted { d.cross(&v) } else { v };
            [v.x, v.y, v.z]
        },
        q,
        sphere.radius,
        quad,
    );
    let mut value = -Vec3::from(res.value) * sphere.eps_contrast();
    if !weighted {
        if let Some(t) = gradq_term(uk, uj, sphere, q, false) {
            value += t.map(|z| z.re);
        }
    }
    Ok(CouplingVector {
        value,
        provenance: Provenance::Quadrature,
        at_q: *q,
        error_estimate: res.error_estimate,
        flagged: res.flagged,
    })
}

/// `η_kj(q) = −∫ [ε Σ_l u_k,l ∇_q u_j,l + (ε − 1) u_k×(∇×u_j)]` for real modes.
pub fn eta_kj(uk: &dyn ModeField, uj: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec) -> Result<CouplingVector> {
    real_pair(uk, uj, sphere, q, quad, false)
}

/// `g_kj(q) = −∫ (ε − 1)(r − q)×[u_k×(∇×u_j)]` for real modes.
pub fn g_kj(uk: &dyn ModeField, uj: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec) -> Result<CouplingVector> {
    real_pair(uk, uj, sphere, q, quad, true)
}

/// Complex-mode coefficients: superscript 1 uses `f_k`, superscript 2 uses `f_k*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexCouplings {
    pub eta1: CVec3,
    pub eta2: CVec3,
    pub g1: CVec3,
    pub g2: CVec3,
    pub error_estimate: f64,
    pub flagged: bool,
}

#[inline]
fn complex_pair_integrand(fk: &dyn ModeField, fj: &dyn ModeField, r: &Vec3, d: &Vec3) -> [f64; 24] {
    let a = fk.value(r);
    let curl = curl_from_jacobian(&fj.jacobian(r));
    let v1 = ccross(&a, &curl);
    let v2 = ccross(&conj(&a), &curl);
    let dc = crate::vecmath::complexify(d);
    let t1 = ccross(&dc, &v1);
    let t2 = ccross(&dc, &v2);
    let mut out = [0.0; 24];
    for (slot, v) in [v1, v2, t1, t2].iter().enumerate() {
        for i in 0..3 {
            out[6 * slot + 2 * i] = v[i].re;
            out[6 * slot + 2 * i + 1] = v[i].im;
        }
    }
    out
}

fn unpack(v: &[f64; 24], slot: usize, scale: f64) -> CVec3 {
    CVec3::new(
        c(v[6 * slot], v[6 * slot + 1]),
        c(v[6 * slot + 2], v[6 * slot + 3]),
        c(v[6 * slot + 4], v[6 * slot + 5]),
    ) * c(scale, 0.0)
}

fn assemble_complex(v: &[f64; 24], sphere: &DielectricSphere, err: f64, flagged: bool) -> ComplexCouplings {
    let s = -sphere.eps_contrast();
    ComplexCouplings {
        eta1: unpack(v, 0, s),
        eta2: unpack(v, 1, s),
        g1: unpack(v, 2, s),
        g2: unpack(v, 3, s),
        error_estimate: err,
        flagged,
    }
}

/// `η⁽¹⁾, η⁽²⁾, g⁽¹⁾, g⁽²⁾` for a pair of (possibly complex) modes.
pub fn complex_coupling_coeffs(fk: &dyn ModeField, fj: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec) -> ComplexCouplings {
    let res = integrate_over_sphere(|r, d| complex_pair_integrand(fk, fj, r, d), q, sphere.radius, quad);
    let mut out = assemble_complex(&res.value, sphere, res.error_estimate, res.flagged);
    if let Some(t) = gradq_term(fk, fj, sphere, q, false) {
        out.eta1 += t;
    }
    if let Some(t) = gradq_term(fk, fj, sphere, q, true) {
        out.eta2 += t;
    }
    out
}

/// [`complex_coupling_coeffs`] with a prebuilt rule, for inner loops.
pub fn complex_coupling_coeffs_with_rule(fk: &dyn ModeField, fj: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, rule: &BallRule) -> ComplexCouplings {
    let v = rule.integrate(q, sphere.radius, |r, d| complex_pair_integrand(fk, fj, r, d));
    assemble_complex(&v, sphere, 0.0, false)
}

/// Near-focus approximation `λ = −(4/3)(n² − 1)/L_c (R/z_R)³ (k z_R)² ê_z`.
pub fn lambda_focus_closed_form(beam: &BeamParams, sphere: &DielectricSphere) -> CouplingVector {
    let zr = beam.rayleigh_range;
    let kz = beam.wavenumber * zr;
    let lz = -4.0 / 3.0 * sphere.eps_contrast() / beam.cavity_length * (sphere.radius / zr).powi(3) * kz * kz;
    CouplingVector::closed_form(Vec3::new(0.0, 0.0, lz), Vec3::zeros())
}

/// Near-focus approximation
/// `γ = −(4/15)(n² − 1) z_R/L_c (R/z_R)⁵ (k z_R)² (1 + 2k z_R) (−q_y ê_x + q_x ê_y)/z_R`.
pub fn gamma_focus_closed_form(beam: &BeamParams, sphere: &DielectricSphere, q: &Vec3) -> CouplingVector {
    let zr = beam.rayleigh_range;
    let kz = beam.wavenumber * zr;
    let pre = -4.0 / 15.0 * sphere.eps_contrast() * zr / beam.cavity_length * (sphere.radius / zr).powi(5) * kz * kz * (1.0 + 2.0 * kz);
    CouplingVector::closed_form(Vec3::new(-q.y / zr, q.x / zr, 0.0) * pre, *q)
}

/// `Λ = ∫ (ε − 1) E×B` over the sphere.
pub fn field_momentum_in_sphere<E, B>(e: E, b: B, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec) -> Vec3
where
    E: Fn(&Vec3) -> Vec3 + Sync,
    B: Fn(&Vec3) -> Vec3 + Sync,
{
    let v = BallRule::new(quad).integrate(q, sphere.radius, |r, _| {
        let s = e(r).cross(&b(r));
        [s.x, s.y, s.z]
    });
    Vec3::from(v) * sphere.eps_contrast()
}

/// `Γ = ∫ (ε − 1)(r − q)×(E×B)` over the sphere.
pub fn field_angular_momentum_in_sphere<E, B>(e: E, b: B, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec) -> Vec3
where
    E: Fn(&Vec3) -> Vec3 + Sync,
    B: Fn(&Vec3) -> Vec3 + Sync,
{
    let v = BallRule::new(quad).integrate(q, sphere.radius, |r, d| {
        let s = d.cross(&e(r).cross(&b(r)));
        [s.x, s.y, s.z]
    });
    Vec3::from(v) * sphere.eps_contrast()
}
