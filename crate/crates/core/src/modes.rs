//! Analytic mode families, complex-mode mixing and mode hygiene checks.
//!
//! All built-in families are empty-space fields: they do not depend on the
//! sphere position (weak-scattering approximation), so [`ModeField::grad_q`]
//! returns `None`. The slot exists so that exact normal modes can be
//! plugged in later.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{box_rule, composite_gauss_legendre, BallRule, QuadratureSpec};
use crate::units::{permittivity, BeamParams, DielectricSphere};
use crate::vecmath::{c, complexify, conj, curl_from_jacobian, divergence_from_jacobian, hdot, CMat3, CVec3, Vec3, I};

/// Domain over which a mode is normalized, `∫ ε f*·f = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NormalizationVolume {
    /// Axis-aligned box `[origin, origin + lengths]`.
    Box { origin: Vec3, lengths: Vec3 },
    /// Transverse plane times an effective cavity length.
    Beam { cavity_length: f64 },
}

impl NormalizationVolume {
    pub fn volume(&self) -> Option<f64> {
        match self {
            NormalizationVolume::Box { lengths, .. } => Some(lengths.x * lengths.y * lengths.z),
            NormalizationVolume::Beam { .. } => None,
        }
    }
}

/// A (real or complex) vector mode function `f(r)`.
pub trait ModeField: Send + Sync {
    fn value(&self, r: &Vec3) -> CVec3;

    /// `m[(i, j)] = ∂f_i/∂r_j`.
    fn jacobian(&self, r: &Vec3) -> CMat3;

    fn value_and_jacobian(&self, r: &Vec3) -> (CVec3, CMat3) {
        (self.value(r), self.jacobian(r))
    }

    fn curl(&self, r: &Vec3) -> CVec3 {
        curl_from_jacobian(&self.jacobian(r))
    }

    /// Second derivatives `h[l][(a, b)] = ∂_a ∂_b f_l`, when available in
    /// closed form.
    fn hessian(&self, _r: &Vec3) -> Option<Hessian> {
        None
    }

    /// `m[(l, a)] = ∂f_l/∂q_a`, or `None` when the mode does not depend on
    /// the sphere position.
    fn grad_q(&self, _r: &Vec3, _q: &Vec3) -> Option<CMat3> {
        None
    }

    /// Empty-cavity angular frequency (equal to the wavenumber for `c = 1`).
    fn frequency(&self) -> f64;

    fn is_real(&self) -> bool;

    fn normalization(&self) -> NormalizationVolume;

    fn describe(&self) -> String;
}

pub type SharedMode = Arc<dyn ModeField>;

/// Per-component Hessians of a vector field.
pub type Hessian = [CMat3; 3];

/// Paraxial Gaussian traveling-wave mode, polarized along `x` and
/// propagating along `+z`:
/// `f = [u ê_x + (i/k) ∂u/∂x ê_z] e^{ikz} / √L_c`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianMode {
    pub beam: BeamParams,
    amplitude: f64,
}

/// Build the Gaussian paraxial mode of `beam`.
pub fn gaussian_paraxial_mode(beam: &BeamParams) -> GaussianMode {
    let k = beam.wavenumber;
    let zr = beam.rayleigh_range;
    GaussianMode {
        beam: *beam,
        // √(2/π)/w(z) · e^{-i atan(z/z_R)} = √(k z_R/π) / (z_R + i z)
        amplitude: (k * zr / std::f64::consts::PI).sqrt() / beam.cavity_length.sqrt(),
    }
}

impl GaussianMode {
    /// Scalar envelope `u(x, y, z)` without the `e^{ikz}/√L_c` carrier.
    pub fn envelope(&self, r: &Vec3) -> Complex64 {
        let s = c(self.beam.rayleigh_range, r.z);
        let rho2 = r.x * r.x + r.y * r.y;
        (-(self.beam.wavenumber * rho2) / (2.0 * s)).exp() / s * (self.amplitude * self.beam.cavity_length.sqrt())
    }

    /// `u e^{ikz}/√L_c` and `s = z_R + iz`.
    #[inline]
    fn carrier(&self, r: &Vec3) -> (Complex64, Complex64) {
        let k = self.beam.wavenumber;
        let s = c(self.beam.rayleigh_range, r.z);
        let rho2 = r.x * r.x + r.y * r.y;
        let phase = c(0.0, k * r.z) - (k * rho2) / (2.0 * s);
        (phase.exp() * self.amplitude / s, s)
    }
}

impl ModeField for GaussianMode {
    fn value(&self, r: &Vec3) -> CVec3 {
        let (u, s) = self.carrier(r);
        CVec3::new(u, c(0.0, 0.0), -I * r.x / s * u)
    }

    fn jacobian(&self, r: &Vec3) -> CMat3 {
        self.value_and_jacobian(r).1
    }

    fn value_and_jacobian(&self, r: &Vec3) -> (CVec3, CMat3) {
        let k = self.beam.wavenumber;
        let (u, s) = self.carrier(r);
        let inv_s = 1.0 / s;
        let rho2 = r.x * r.x + r.y * r.y;
        let (x, y) = (r.x, r.y);
        // ∂z ln(u e^{ikz}) = -i/s + i k ρ²/(2 s²) + i k
        let dz_log = -I * inv_s + I * (k * rho2 * 0.5) * inv_s * inv_s + c(0.0, k);
        let zero = c(0.0, 0.0);
        let value = CVec3::new(u, zero, -I * x * inv_s * u);
        let jac = CMat3::new(
            -(k * x) * inv_s * u,
            -(k * y) * inv_s * u,
            dz_log * u,
            zero,
            zero,
            zero,
            (-I * inv_s + I * (k * x * x) * inv_s * inv_s) * u,
            I * (k * x * y) * inv_s * inv_s * u,
            (-x * inv_s * inv_s - I * x * inv_s * dz_log) * u,
        );
        (value, jac)
    }

    fn hessian(&self, r: &Vec3) -> Option<Hessian> {
        let k = self.beam.wavenumber;
        let (u, s) = self.carrier(r);
        let is = 1.0 / s;
        let (x, y) = (r.x, r.y);
        let rho2 = x * x + y * y;
        // L = ∇ ln U and its derivatives
        let l = [-(k * x) * is, -(k * y) * is, -I * is + I * (k * rho2 * 0.5) * is * is + c(0.0, k)];
        let mut ll = CMat3::zeros();
        ll[(0, 0)] = -k * is;
        ll[(1, 1)] = -k * is;
        ll[(0, 2)] = I * (k * x) * is * is;
        ll[(1, 2)] = I * (k * y) * is * is;
        ll[(2, 2)] = -is * is + (k * rho2) * is * is * is;
        ll[(2, 0)] = ll[(0, 2)];
        ll[(2, 1)] = ll[(1, 2)];
        // F_z = G U with G = −i x / s
        let g = -I * x * is;
        let dg = [-I * is, c(0.0, 0.0), -x * is * is];
        let mut gg = CMat3::zeros();
        gg[(0, 2)] = -is * is;
        gg[(2, 0)] = -is * is;
        gg[(2, 2)] = 2.0 * I * x * is * is * is;
        let mut hx = CMat3::zeros();
        let mut hz = CMat3::zeros();
        for a in 0..3 {
            for b in 0..3 {
                let uab = (l[a] * l[b] + ll[(a, b)]) * u;
                hx[(a, b)] = uab;
                hz[(a, b)] = gg[(a, b)] * u + dg[a] * l[b] * u + dg[b] * l[a] * u + g * uab;
            }
        }
        Some([hx, CMat3::zeros(), hz])
    }

    fn frequency(&self) -> f64 {
        self.beam.omega()
    }

    fn is_real(&self) -> bool {
        false
    }

    fn normalization(&self) -> NormalizationVolume {
        NormalizationVolume::Beam {
            cavity_length: self.beam.cavity_length,
        }
    }

    fn describe(&self) -> String {
        format!(
            "gaussian(lambda0={}, z_R={}, L_c={})",
            self.beam.wavelength, self.beam.rayleigh_range, self.beam.cavity_length
        )
    }
}

/// Axis-aligned box used by plane and standing waves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxDomain {
    pub origin: Vec3,
    pub lengths: Vec3,
}

impl BoxDomain {
    pub fn new(origin: Vec3, lengths: Vec3) -> Self {
        Self { origin, lengths }
    }

    pub fn volume(&self) -> f64 {
        self.lengths.x * self.lengths.y * self.lengths.z
    }

    pub fn normalization_volume(&self) -> NormalizationVolume {
        NormalizationVolume::Box {
            origin: self.origin,
            lengths: self.lengths,
        }
    }
}

fn check_transverse(k_vec: &Vec3, pol: &Vec3) -> Result<Vec3> {
    let pn = pol.norm();
    if pn == 0.0 || k_vec.norm() == 0.0 {
        return Err(Error::domain("wavevector and polarization must be nonzero"));
    }
    if k_vec.dot(pol).abs() > 1e-12 * k_vec.norm() * pn {
        return Err(Error::domain("polarization is not transverse to the wavevector"));
    }
    Ok(pol / pn)
}

/// Traveling plane wave `ê e^{i(k·r + φ)} / √V`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneWaveMode {
    pub k_vec: Vec3,
    pub polarization: Vec3,
    pub phase: f64,
    pub domain: BoxDomain,
}

pub fn plane_wave_mode(k_vec: Vec3, polarization: Vec3, phase: f64, domain: BoxDomain) -> Result<PlaneWaveMode> {
    let polarization = check_transverse(&k_vec, &polarization)?;
    Ok(PlaneWaveMode {
        k_vec,
        polarization,
        phase,
        domain,
    })
}

impl ModeField for PlaneWaveMode {
    fn value(&self, r: &Vec3) -> CVec3 {
        let e = Complex64::from_polar(1.0 / self.domain.volume().sqrt(), self.k_vec.dot(r) + self.phase);
        complexify(&self.polarization) * e
    }

    fn jacobian(&self, r: &Vec3) -> CMat3 {
        let f = self.value(r);
        f * complexify(&self.k_vec).transpose() * I
    }

    fn hessian(&self, r: &Vec3) -> Option<Hessian> {
        let f = self.value(r);
        let kk = (self.k_vec * self.k_vec.transpose()).map(|x| c(-x, 0.0));
        Some([kk * f.x, kk * f.y, kk * f.z])
    }

    fn frequency(&self) -> f64 {
        self.k_vec.norm()
    }

    fn is_real(&self) -> bool {
        false
    }

    fn normalization(&self) -> NormalizationVolume {
        self.domain.normalization_volume()
    }

    fn describe(&self) -> String {
        format!("plane(k={:?}, pol={:?})", self.k_vec.as_slice(), self.polarization.as_slice())
    }
}

/// Real standing wave `√(2/V) sin(k·r + φ) ê`.
#[derive(Debug, Clone, Copy)]
pub struct StandingWaveMode {
    pub k_vec: Vec3,
    pub polarization: Vec3,
    pub phase: f64,
    pub domain: BoxDomain,
}

pub fn standing_wave_mode(k_vec: Vec3, polarization: Vec3, phase: f64, domain: BoxDomain) -> Result<StandingWaveMode> {
    let polarization = check_transverse(&k_vec, &polarization)?;
    Ok(StandingWaveMode {
        k_vec,
        polarization,
        phase,
        domain,
    })
}

impl StandingWaveMode {
    fn amplitude(&self) -> f64 {
        (2.0 / self.domain.volume()).sqrt()
    }

    /// The traveling waves `f± = ê e^{±i(k·r+φ)}/√V` and weights `c±` with
    /// `u = c₊ f₊ + c₋ f₋`.
    pub fn constituents(&self) -> [(Complex64, PlaneWaveMode); 2] {
        let w = 1.0 / (2.0f64.sqrt());
        let plus = PlaneWaveMode {
            k_vec: self.k_vec,
            polarization: self.polarization,
            phase: self.phase,
            domain: self.domain,
        };
        let minus = PlaneWaveMode {
            k_vec: -self.k_vec,
            polarization: self.polarization,
            phase: -self.phase,
            domain: self.domain,
        };
        [(-I * w, plus), (I * w, minus)]
    }
}

impl ModeField for StandingWaveMode {
    fn value(&self, r: &Vec3) -> CVec3 {
        complexify(&(self.polarization * (self.amplitude() * (self.k_vec.dot(r) + self.phase).sin())))
    }

    fn jacobian(&self, r: &Vec3) -> CMat3 {
        let a = self.amplitude() * (self.k_vec.dot(r) + self.phase).cos();
        let m = self.polarization * self.k_vec.transpose() * a;
        m.map(|x| c(x, 0.0))
    }

    fn hessian(&self, r: &Vec3) -> Option<Hessian> {
        let a = -self.amplitude() * (self.k_vec.dot(r) + self.phase).sin();
        let kk = self.k_vec * self.k_vec.transpose() * a;
        let e = self.polarization;
        Some([0, 1, 2].map(|l| kk.map(|x| c(x * e[l], 0.0))))
    }

    fn frequency(&self) -> f64 {
        self.k_vec.norm()
    }

    fn is_real(&self) -> bool {
        true
    }

    fn normalization(&self) -> NormalizationVolume {
        self.domain.normalization_volume()
    }

    fn describe(&self) -> String {
        format!("standing(k={:?}, pol={:?}, phase={})", self.k_vec.as_slice(), self.polarization.as_slice(), self.phase)
    }
}

/// Linear combination `Σ c_j f_j` of modes sharing a frequency.
#[derive(Clone)]
pub struct MixedMode {
    pub terms: Vec<(Complex64, SharedMode)>,
    frequency: f64,
    real: bool,
}

impl std::fmt::Debug for MixedMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MixedMode").field("mode", &self.describe()).finish()
    }
}

impl MixedMode {
    pub fn new(terms: Vec<(Complex64, SharedMode)>) -> Result<Self> {
        let active: Vec<&(Complex64, SharedMode)> = terms.iter().filter(|(w, _)| w.norm() > 0.0).collect();
        let first = active.first().ok_or_else(|| Error::domain("mixed mode needs a nonzero term"))?;
        let frequency = first.1.frequency();
        for (_, m) in &active {
            if ((m.frequency() - frequency) / frequency).abs() > 1e-12 {
                return Err(Error::domain("mixing modes of different frequency"));
            }
        }
        // real when every active weight is real and every constituent is real
        let real = active.iter().all(|(w, m)| w.im == 0.0 && m.is_real());
        Ok(Self { terms, frequency, real })
    }

    /// Global phase `e^{iφ} f`.
    pub fn phase_shifted(mode: SharedMode, phi: f64) -> Self {
        let frequency = mode.frequency();
        Self {
            terms: vec![(Complex64::from_polar(1.0, phi), mode)],
            frequency,
            real: false,
        }
    }
}

impl ModeField for MixedMode {
    fn value(&self, r: &Vec3) -> CVec3 {
        self.terms.iter().fold(CVec3::zeros(), |acc, (w, m)| acc + m.value(r) * *w)
    }

    fn jacobian(&self, r: &Vec3) -> CMat3 {
        self.terms.iter().fold(CMat3::zeros(), |acc, (w, m)| acc + m.jacobian(r) * *w)
    }

    fn hessian(&self, r: &Vec3) -> Option<Hessian> {
        let mut acc = [CMat3::zeros(); 3];
        for (w, m) in &self.terms {
            let h = m.hessian(r)?;
            for l in 0..3 {
                acc[l] += h[l] * *w;
            }
        }
        Some(acc)
    }

    fn value_and_jacobian(&self, r: &Vec3) -> (CVec3, CMat3) {
        self.terms.iter().fold((CVec3::zeros(), CMat3::zeros()), |(v, j), (w, m)| {
            let (mv, mj) = m.value_and_jacobian(r);
            (v + mv * *w, j + mj * *w)
        })
    }

    fn frequency(&self) -> f64 {
        self.frequency
    }

    fn is_real(&self) -> bool {
        self.real
    }

    fn normalization(&self) -> NormalizationVolume {
        self.terms[0].1.normalization()
    }

    fn describe(&self) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(w, m)| format!("({:.6}{:+.6}i)*{}", w.re, w.im, m.describe()))
            .collect();
        parts.join(" + ")
    }
}

/// Complex conjugate of a mode, `f → f*`.
#[derive(Clone)]
pub struct ConjugateMode(pub SharedMode);

impl ModeField for ConjugateMode {
    fn value(&self, r: &Vec3) -> CVec3 {
        conj(&self.0.value(r))
    }

    fn jacobian(&self, r: &Vec3) -> CMat3 {
        self.0.jacobian(r).map(|z| z.conj())
    }

    fn hessian(&self, r: &Vec3) -> Option<Hessian> {
        self.0.hessian(r).map(|h| h.map(|m| m.map(|z| z.conj())))
    }

    fn value_and_jacobian(&self, r: &Vec3) -> (CVec3, CMat3) {
        let (v, j) = self.0.value_and_jacobian(r);
        (conj(&v), j.map(|z| z.conj()))
    }

    fn frequency(&self) -> f64 {
        self.0.frequency()
    }

    fn is_real(&self) -> bool {
        self.0.is_real()
    }

    fn normalization(&self) -> NormalizationVolume {
        self.0.normalization()
    }

    fn describe(&self) -> String {
        format!("conj({})", self.0.describe())
    }
}

/// Unitary matrix mixing degenerate real modes into complex ones.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMix {
    pub matrix: DMatrix<Complex64>,
}

impl UnitaryMix {
    pub const UNITARITY_TOL: f64 = 1e-12;

    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::domain("mixing matrix must be square"));
        }
        let dev = (&matrix * matrix.adjoint() - DMatrix::identity(matrix.nrows(), matrix.ncols()))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if dev > Self::UNITARITY_TOL {
            return Err(Error::domain(format!("mixing matrix is not unitary (deviation {dev:.3e})")));
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }
}

/// Complex modes `f_k = Σ_j U*_kj u_j` from degenerate real modes.
pub fn complex_from_real(reals: &[SharedMode], mix: &UnitaryMix) -> Result<Vec<MixedMode>> {
    let u = &mix.matrix;
    if u.nrows() != reals.len() {
        return Err(Error::domain("mixing matrix size does not match the number of modes"));
    }
    (0..u.nrows())
        .map(|k| {
            let terms: Vec<(Complex64, SharedMode)> = (0..u.ncols())
                .filter(|&j| u[(k, j)].norm() > 0.0)
                .map(|j| (u[(k, j)].conj(), reals[j].clone()))
                .collect();
            MixedMode::new(terms)
        })
        .collect()
}

/// Maximum of `|∇·(ε f)| / (k max|f|)` over sample points.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GaugeReport {
    pub residual: f64,
    pub samples: usize,
}

/// Evaluate the generalized radiation-gauge residual `∇·(ε f)` on a grid
/// covering the mode's domain (and the sphere, when present). Points within
/// `10⁻³ R` of the sphere surface are skipped because `ε` jumps there.
pub fn check_gauge(mode: &dyn ModeField, sphere: Option<&DielectricSphere>, q: &Vec3, points_per_axis: usize) -> GaugeReport {
    let n = points_per_axis.max(2);
    let (origin, lengths) = match mode.normalization() {
        NormalizationVolume::Box { origin, lengths } => (origin, lengths),
        NormalizationVolume::Beam { .. } => {
            // region around the focus where the paraxial field lives
            let w = 3.0 / mode.frequency().sqrt();
            let scale = Vec3::new(w, w, 3.0 * w);
            (q - scale, 2.0 * scale)
        }
    };
    let mut points: Vec<Vec3> = Vec::with_capacity(2 * n * n * n);
    let grid = |o: Vec3, l: Vec3, out: &mut Vec<Vec3>| {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let t = Vec3::new(i as f64, j as f64, k as f64) / (n - 1) as f64;
                    out.push(o + l.component_mul(&t));
                }
            }
        }
    };
    grid(origin, lengths, &mut points);
    if let Some(s) = sphere {
        let half = Vec3::repeat(1.2 * s.radius);
        grid(q - half, 2.0 * half, &mut points);
    }
    let mut max_div = 0.0f64;
    let mut max_f = 0.0f64;
    let mut used = 0;
    for p in &points {
        let eps = match sphere {
            Some(s) => {
                let d = (p - q).norm();
                if (d - s.radius).abs() < 0.5e-3 * s.radius {
                    continue;
                }
                permittivity(p, q, s)
            }
            None => 1.0,
        };
        let (f, jac) = mode.value_and_jacobian(p);
        max_div = max_div.max((divergence_from_jacobian(&jac) * eps).norm());
        max_f = max_f.max(crate::vecmath::norm_sqr(&f).sqrt());
        used += 1;
    }
    let residual = if max_f > 0.0 { max_div / (mode.frequency() * max_f) } else { 0.0 };
    GaugeReport { residual, samples: used }
}

#[derive(Debug, Clone)]
pub struct GramReport {
    pub gram: DMatrix<Complex64>,
    pub max_deviation: f64,
}

/// Panel length and order used for box and plane integrals.
const DOMAIN_PANEL_ORDER: usize = 16;

/// Nodes and weights covering a normalization domain. Beam domains use the
/// transverse plane through `q` with weights scaled by `L_c`.
pub(crate) fn domain_rule(norm: &NormalizationVolume, q: &Vec3, kmax: f64) -> (Vec<Vec3>, Vec<f64>) {
    match *norm {
        NormalizationVolume::Box { origin, lengths } => {
            let panel = (std::f64::consts::PI / kmax).min(lengths.min());
            box_rule(&origin, &lengths, panel, DOMAIN_PANEL_ORDER)
        }
        NormalizationVolume::Beam { cavity_length } => {
            // the field decays as exp(-ρ²/w²) with w ≳ sqrt(2/k)
            let half = 40.0 * (2.0 / kmax).sqrt();
            let panels = 40;
            let (xs, wx) = composite_gauss_legendre(q.x - half, q.x + half, panels, DOMAIN_PANEL_ORDER);
            let (ys, wy) = composite_gauss_legendre(q.y - half, q.y + half, panels, DOMAIN_PANEL_ORDER);
            let mut nodes = Vec::with_capacity(xs.len() * ys.len());
            let mut weights = Vec::with_capacity(xs.len() * ys.len());
            for (x, wxi) in xs.iter().zip(&wx) {
                for (y, wyi) in ys.iter().zip(&wy) {
                    nodes.push(Vec3::new(*x, *y, q.z));
                    weights.push(wxi * wyi * cavity_length);
                }
            }
            (nodes, weights)
        }
    }
}

/// Gram matrix `G_kj = ∫ ε f*_k · f_j` over the modes' common normalization
/// domain. The sphere contribution `(n² − 1) ∫_ball` uses the ball rule.
pub fn check_orthonormality(
    modes: &[SharedMode],
    sphere: Option<&DielectricSphere>,
    q: &Vec3,
    quad: &QuadratureSpec,
) -> Result<GramReport> {
    let first = modes.first().ok_or_else(|| Error::domain("no modes given"))?;
    let norm = first.normalization();
    if modes.iter().any(|m| m.normalization() != norm) {
        return Err(Error::domain("modes do not share a normalization volume"));
    }
    let kmax = modes.iter().map(|m| m.frequency()).fold(0.0, f64::max);
    let n = modes.len();
    let mut gram = DMatrix::<Complex64>::zeros(n, n);

    let accumulate = |gram: &mut DMatrix<Complex64>, p: &Vec3, w: f64| {
        let vals: Vec<CVec3> = modes.iter().map(|m| m.value(p)).collect();
        for a in 0..n {
            for b in 0..n {
                gram[(a, b)] += hdot(&vals[a], &vals[b]) * w;
            }
        }
    };

    let (nodes, weights) = domain_rule(&norm, q, kmax);
    for (p, w) in nodes.iter().zip(&weights) {
        accumulate(&mut gram, p, *w);
    }

    if let Some(s) = sphere {
        let rule = BallRule::new(quad);
        let contrast = s.eps_contrast();
        for a in 0..n {
            for b in a..n {
                let v = rule.integrate(q, s.radius, |r, _| {
                    let z = hdot(&modes[a].value(r), &modes[b].value(r));
                    [z.re, z.im]
                });
                let z = c(v[0], v[1]) * contrast;
                gram[(a, b)] += z;
                if a != b {
                    gram[(b, a)] += z.conj();
                }
            }
        }
    }

    let max_deviation = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| {
            let delta = if a == b { 1.0 } else { 0.0 };
            (gram[(a, b)] - delta).norm()
        })
        .fold(0.0, f64::max);
    Ok(GramReport { gram, max_deviation })
}

/// Position-dependent mode frequency from first-order cavity perturbation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FrequencyShift {
    pub omega0: f64,
    pub omega: f64,
    /// `∇_q ω`, from differentiating under the integral.
    pub gradient: Vec3,
    pub error_estimate: f64,
}

impl FrequencyShift {
    pub fn relative_shift(&self) -> f64 {
        (self.omega - self.omega0) / self.omega0
    }
}

/// `ω(q) = ω₀ [1 − ½ (n² − 1) ∫_ball |f|²]`, with its gradient.
pub fn mode_frequency_shift(mode: &dyn ModeField, sphere: &DielectricSphere, q: &Vec3, quad: &QuadratureSpec) -> FrequencyShift {
    let res = crate::quadrature::integrate_over_sphere(
        |r, _| {
            let (f, jac) = mode.value_and_jacobian(r);
            // ∂_a |f|² = 2 Re Σ_l f_l* ∂_a f_l
            let g = (jac.transpose() * conj(&f)).map(|z| 2.0 * z.re);
            [crate::vecmath::norm_sqr(&f), g.x, g.y, g.z]
        },
        q,
        sphere.radius,
        quad,
    );
    let omega0 = mode.frequency();
    let half = 0.5 * sphere.eps_contrast() * omega0;
    FrequencyShift {
        omega0,
        omega: omega0 - half * res.value[0],
        gradient: -Vec3::new(res.value[1], res.value[2], res.value[3]) * half,
        error_estimate: res.error_estimate,
    }
}
