//! Classical single-mode sphere dynamics and rotating-wave coupled-mode
//! amplitude evolution.
//!
//! The photon number is a fixed parameter of the mechanical evolution; the
//! amplitude evolution conversely follows a prescribed sphere trajectory.

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion};
use num_complex::Complex64;
use serde::Serialize;

use crate::coupling::{complex_coupling_coeffs_with_rule, single_mode_couplings_with_rule, single_mode_gradients_with_rule, CouplingGradients};
use crate::error::{Error, Result};
use crate::geomphase::richardson_jacobian;
use crate::modes::{mode_frequency_shift, SharedMode};
use crate::quadrature::{BallRule, QuadratureSpec};
use crate::units::DielectricSphere;
use crate::vecmath::{c, Vec3};

/// Phase-space state of the rigid sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechState {
    pub q: Vec3,
    /// Canonical momentum.
    pub p: Vec3,
    pub orientation: UnitQuaternion<f64>,
    /// Canonical angular momentum in the space frame.
    pub j: Vec3,
}

impl MechState {
    pub fn at_rest(q: Vec3) -> Self {
        Self {
            q,
            p: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
            j: Vec3::zeros(),
        }
    }
}

/// Inertia and photon number of a single-mode run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechParams {
    pub mass: f64,
    pub inertia: f64,
    pub n_photons: f64,
}

impl MechParams {
    pub fn new(sphere: &DielectricSphere, n_photons: f64) -> Self {
        Self {
            mass: sphere.mass,
            inertia: sphere.moment_of_inertia,
            n_photons,
        }
    }
}

/// `λ`, `γ`, `ω` at one position with their `q`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    pub lambda: Vec3,
    pub gamma: Vec3,
    /// `d_lambda[(i, a)] = ∂λ_i/∂q_a`.
    pub d_lambda: Matrix3<f64>,
    pub d_gamma: Matrix3<f64>,
    pub omega0: f64,
    /// `ω(q) − ω₀`.
    pub omega_shift: f64,
    pub grad_omega: Vec3,
}

impl From<CouplingGradients> for FieldSample {
    fn from(g: CouplingGradients) -> Self {
        Self {
            lambda: g.lambda,
            gamma: g.gamma,
            d_lambda: g.d_lambda,
            d_gamma: g.d_gamma,
            omega0: g.omega0,
            omega_shift: g.omega_shift,
            grad_omega: g.grad_omega,
        }
    }
}

/// Position-dependent single-mode couplings seen by the sphere.
pub trait CouplingField: Sync {
    fn sample(&self, q: &Vec3) -> FieldSample;
}

/// Couplings of one complex mode evaluated with a fixed ball rule.
pub struct QuadratureField {
    pub mode: SharedMode,
    pub sphere: DielectricSphere,
    rule: BallRule,
    /// Finite-difference step used when the mode has no closed-form Hessian.
    pub fd_step: f64,
}

impl QuadratureField {
    pub fn new(mode: SharedMode, sphere: DielectricSphere, quad: &QuadratureSpec, fd_step: f64) -> Self {
        Self {
            mode,
            sphere,
            rule: BallRule::new(quad),
            fd_step,
        }
    }
}

impl CouplingField for QuadratureField {
    fn sample(&self, q: &Vec3) -> FieldSample {
        if let Some(g) = single_mode_gradients_with_rule(self.mode.as_ref(), &self.sphere, q, &self.rule) {
            return g.into();
        }
        let base = single_mode_couplings_with_rule(self.mode.as_ref(), &self.sphere, q, &self.rule);
        let lam = |x: &Vec3| single_mode_couplings_with_rule(self.mode.as_ref(), &self.sphere, x, &self.rule).lambda;
        let gam = |x: &Vec3| single_mode_couplings_with_rule(self.mode.as_ref(), &self.sphere, x, &self.rule).gamma;
        let (d_lambda, _) = richardson_jacobian(&lam, q, self.fd_step);
        let (d_gamma, _) = richardson_jacobian(&gam, q, self.fd_step);
        FieldSample {
            lambda: base.lambda,
            gamma: base.gamma,
            d_lambda,
            d_gamma,
            omega0: base.omega0,
            omega_shift: base.omega - base.omega0,
            grad_omega: base.grad_omega,
        }
    }
}

/// Wrapper that drops the velocity-dependent couplings, leaving only the
/// adiabatic potential `ω(q)(n + ½)`.
pub struct AdiabaticField<'a>(pub &'a dyn CouplingField);

impl CouplingField for AdiabaticField<'_> {
    fn sample(&self, q: &Vec3) -> FieldSample {
        let s = self.0.sample(q);
        FieldSample {
            lambda: Vec3::zeros(),
            gamma: Vec3::zeros(),
            d_lambda: Matrix3::zeros(),
            d_gamma: Matrix3::zeros(),
            ..s
        }
    }
}

/// `q̇ = (p + λn)/m`.
pub fn kinetic_from_canonical(p: &Vec3, lambda: &Vec3, n_photons: f64, mass: f64) -> Vec3 {
    (p + lambda * n_photons) / mass
}

/// `ω = (J + γn)/I`.
pub fn angular_velocity_from_canonical(j: &Vec3, gamma: &Vec3, n_photons: f64, inertia: f64) -> Vec3 {
    (j + gamma * n_photons) / inertia
}

/// Energy split into the constant `ω₀(n + ½)` and the mechanical rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energy {
    pub total: f64,
    /// `(p + λn)²/2m + (J + γn)²/2I + (ω(q) − ω₀)(n + ½)`.
    pub mechanical: f64,
}

fn energy(state: &MechState, s: &FieldSample, params: &MechParams) -> Energy {
    let n = params.n_photons;
    let pk = state.p + s.lambda * n;
    let lk = state.j + s.gamma * n;
    let mechanical = pk.norm_squared() / (2.0 * params.mass) + lk.norm_squared() / (2.0 * params.inertia) + s.omega_shift * (n + 0.5);
    Energy {
        total: mechanical + s.omega0 * (n + 0.5),
        mechanical,
    }
}

/// `H = (p + λn)²/2m + (J + γn)²/2I + ω(q)(n + ½)` (ħ = 1).
pub fn hamiltonian_single_mode(state: &MechState, field: &dyn CouplingField, params: &MechParams) -> Energy {
    energy(state, &field.sample(&state.q), params)
}

/// Right-hand side `(q̇, ṗ)` and the space-frame angular velocity.
fn rhs(q: &Vec3, p: &Vec3, j: &Vec3, field: &dyn CouplingField, params: &MechParams) -> (Vec3, Vec3, Vec3) {
    let s = field.sample(q);
    let n = params.n_photons;
    let pk = p + s.lambda * n;
    let lk = j + s.gamma * n;
    let q_dot = pk / params.mass;
    let omega = lk / params.inertia;
    // −∂_q H; the (∂λ)ᵀ and (∂γ)ᵀ terms come from the minimal coupling
    let p_dot = -(s.d_lambda.transpose() * pk) * (n / params.mass) - (s.d_gamma.transpose() * lk) * (n / params.inertia) - s.grad_omega * (n + 0.5);
    (q_dot, p_dot, omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: MechState,
    pub q_dot: Vec3,
    pub omega_body: Vec3,
    pub energy: Energy,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub dt: f64,
    pub steps: usize,
    /// Largest `|E_mech(t) − E_mech(0)|` over all steps.
    pub max_energy_error: f64,
    /// Largest fixed-point iteration count used in one step.
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolveOptions {
    pub dt: f64,
    pub steps: usize,
    /// Record every `sample_every`-th step (the first and last are always kept).
    pub sample_every: usize,
    /// Abort when the per-step mechanical energy change exceeds this budget.
    pub energy_budget: Option<f64>,
    pub max_iterations: usize,
}

impl EvolveOptions {
    pub fn new(dt: f64, steps: usize) -> Self {
        Self {
            dt,
            steps,
            sample_every: steps.max(1),
            energy_budget: None,
            max_iterations: 60,
        }
    }
}

fn sample_of(t: f64, state: &MechState, field: &dyn CouplingField, params: &MechParams) -> TrajectorySample {
    let s = field.sample(&state.q);
    TrajectorySample {
        t,
        state: *state,
        q_dot: kinetic_from_canonical(&state.p, &s.lambda, params.n_photons, params.mass),
        omega_body: angular_velocity_from_canonical(&state.j, &s.gamma, params.n_photons, params.inertia),
        energy: energy(state, &s, params),
    }
}

/// One implicit-midpoint step. Returns the new state and the iteration count.
fn midpoint_step(state: &MechState, guess: (Vec3, Vec3), field: &dyn CouplingField, params: &MechParams, dt: f64, max_iterations: usize) -> Result<(MechState, usize)> {
    let (mut q1, mut p1) = guess;
    let j = state.j;
    let mut last = f64::INFINITY;
    let mut omega_mid = Vec3::zeros();
    let qs = state.q.norm() + 1.0;
    let ps = state.p.norm();
    for it in 1..=max_iterations {
        let qm = (state.q + q1) * 0.5;
        let pm = (state.p + p1) * 0.5;
        let (qd, pd, om) = rhs(&qm, &pm, &j, field, params);
        let qn = state.q + qd * dt;
        let pn = state.p + pd * dt;
        let pscale = ps.max(pn.norm()).max(f64::MIN_POSITIVE);
        let change = ((qn - q1).norm() / qs).max((pn - p1).norm() / pscale);
        q1 = qn;
        p1 = pn;
        omega_mid = om;
        // stop at round-off: no further contraction
        if change <= 1e-15 || (change >= last && change < 1e-12) {
            let orientation = UnitQuaternion::from_scaled_axis(omega_mid * dt) * state.orientation;
            return Ok((
                MechState {
                    q: q1,
                    p: p1,
                    orientation: UnitQuaternion::new_normalize(*orientation.quaternion()),
                    j,
                },
                it,
            ));
        }
        last = change;
    }
    let _ = omega_mid;
    Err(Error::NonConvergence {
        what: "implicit midpoint iteration".into(),
        estimate: last,
        limit: 1e-12,
    })
}

/// Integrate Hamilton's equations of the single-mode Hamiltonian with the
/// implicit midpoint rule (symplectic and symmetric). `J` is conserved
/// because `H` does not depend on the orientation. A negative `dt`
/// integrates backward in time.
pub fn evolve_classical(initial: &MechState, field: &dyn CouplingField, params: &MechParams, opts: &EvolveOptions) -> Result<Trajectory> {
    if opts.dt == 0.0 || !opts.dt.is_finite() {
        return Err(Error::domain("time step must be finite and nonzero"));
    }
    let every = opts.sample_every.max(1);
    let mut state = *initial;
    let first = sample_of(0.0, &state, field, params);
    let e0 = first.energy.mechanical;
    let mut prev_e = e0;
    let mut samples = vec![first];
    let mut prev_q = state.q;
    let mut prev_p = state.p;
    let mut max_err = 0.0f64;
    let mut max_it = 0;
    for step in 1..=opts.steps {
        // linear extrapolation from the previous step
        let guess = if step == 1 {
            let (qd, pd, _) = rhs(&state.q, &state.p, &state.j, field, params);
            (state.q + qd * opts.dt, state.p + pd * opts.dt)
        } else {
            (state.q * 2.0 - prev_q, state.p * 2.0 - prev_p)
        };
        let (next, it) = midpoint_step(&state, guess, field, params, opts.dt, opts.max_iterations)?;
        max_it = max_it.max(it);
        prev_q = state.q;
        prev_p = state.p;
        state = next;
        let record = step % every == 0 || step == opts.steps;
        if record || opts.energy_budget.is_some() {
            let smp = sample_of(step as f64 * opts.dt, &state, field, params);
            let e = smp.energy.mechanical;
            if let Some(budget) = opts.energy_budget {
                if (e - prev_e).abs() > budget {
                    return Err(Error::NonConvergence {
                        what: format!("energy budget at step {step}"),
                        estimate: (e - prev_e).abs(),
                        limit: budget,
                    });
                }
            }
            prev_e = e;
            max_err = max_err.max((e - e0).abs());
            if record {
                samples.push(smp);
            }
        }
    }
    Ok(Trajectory {
        samples,
        dt: opts.dt,
        steps: opts.steps,
        max_energy_error: max_err,
        max_iterations: max_it,
    })
}

/// Per-axis harmonic frequencies `Ω_a = sqrt((n + ½) ∂²ω/∂q_a² / m)`
/// from central differences of `∇ω`. Axes with non-positive curvature
/// report zero.
pub fn harmonic_frequencies(field: &dyn CouplingField, q0: &Vec3, params: &MechParams, h: f64) -> Vec3 {
    let mut out = Vec3::zeros();
    for a in 0..3 {
        let mut e = Vec3::zeros();
        e[a] = h;
        let curv = (field.sample(&(q0 + e)).grad_omega[a] - field.sample(&(q0 - e)).grad_omega[a]) / (2.0 * h);
        let k = curv * (params.n_photons + 0.5);
        out[a] = if k > 0.0 { (k / params.mass).sqrt() } else { 0.0 };
    }
    out
}

/// `10⁻³` of the shortest harmonic period at `q0`.
pub fn default_time_step(field: &dyn CouplingField, q0: &Vec3, params: &MechParams, h: f64) -> Result<f64> {
    let w = harmonic_frequencies(field, q0, params, h).max();
    if w <= 0.0 {
        return Err(Error::domain("no confining curvature at the reference point; set dt explicitly"));
    }
    Ok(1e-3 * 2.0 * std::f64::consts::PI / w)
}

/// Prescribed sphere motion `t ↦ (q, q̇, ω)`.
pub trait Trajectory3: Sync {
    fn at(&self, t: f64) -> (Vec3, Vec3, Vec3);
}

impl<F: Fn(f64) -> (Vec3, Vec3, Vec3) + Sync> Trajectory3 for F {
    fn at(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        self(t)
    }
}

/// Modes and sphere with the coupling rule used by the amplitude equations.
pub struct ModeSet {
    pub modes: Vec<SharedMode>,
    pub sphere: DielectricSphere,
    rule: BallRule,
    quad: QuadratureSpec,
}

impl ModeSet {
    pub fn new(modes: Vec<SharedMode>, sphere: DielectricSphere, quad: &QuadratureSpec) -> Self {
        Self {
            modes,
            sphere,
            rule: BallRule::new(quad),
            quad: *quad,
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Perturbed frequencies `ω_k(q)`.
    pub fn frequencies(&self, q: &Vec3) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.modes.iter().map(|m| mode_frequency_shift(m.as_ref(), &self.sphere, q, &self.quad).omega))
    }

    /// `C_kj = √(ω_k/ω_j)(q̇·η⁽²⁾_kj + ω·g⁽²⁾_kj)` at `q`.
    pub fn velocity_couplings(&self, q: &Vec3, q_dot: &Vec3, omega_body: &Vec3, freqs: &DVector<f64>) -> DMatrix<Complex64> {
        let n = self.len();
        let qd = crate::vecmath::complexify(q_dot);
        let ob = crate::vecmath::complexify(omega_body);
        DMatrix::from_fn(n, n, |k, j| {
            let cc = complex_coupling_coeffs_with_rule(self.modes[k].as_ref(), self.modes[j].as_ref(), &self.sphere, q, &self.rule);
            let s = (freqs[k] / freqs[j]).sqrt();
            (crate::vecmath::cdot(&qd, &cc.eta2) + crate::vecmath::cdot(&ob, &cc.g2)) * s
        })
    }

    /// Hermitian generator `K` of `i ȧ = K a`:
    /// `K = diag ω(q) + M`, `M_kj = −(i/2)(C_kj − C*_jk)`.
    pub fn generator(&self, q: &Vec3, q_dot: &Vec3, omega_body: &Vec3) -> DMatrix<Complex64> {
        let freqs = self.frequencies(q);
        let cm = self.velocity_couplings(q, q_dot, omega_body, &freqs);
        let n = self.len();
        DMatrix::from_fn(n, n, |k, j| {
            let m = (cm[(k, j)] - cm[(j, k)].conj()) * c(0.0, -0.5);
            if k == j {
                m + freqs[k]
            } else {
                m
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeSample {
    pub t: f64,
    /// Lab-frame amplitudes `a_k(t)`.
    pub amplitudes: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeHistory {
    pub samples: Vec<AmplitudeSample>,
    /// Reference frequencies of the interaction picture.
    pub frequencies: Vec<f64>,
    pub max_norm_drift: f64,
    /// Largest `|a_k|²` reached by each mode over all steps.
    pub peak_population: Vec<f64>,
    pub flagged: bool,
}

/// Integrate `i ȧ = K(t) a` along a prescribed trajectory with a Cayley
/// step in the interaction picture of the initial frequencies. The step is
/// exactly unitary for Hermitian `K`.
pub fn evolve_mode_amplitudes(set: &ModeSet, trajectory: &dyn Trajectory3, a0: &[Complex64], dt: f64, steps: usize, sample_every: usize) -> Result<AmplitudeHistory> {
    let n = set.len();
    if a0.len() != n {
        return Err(Error::domain("initial amplitude count does not match the mode count"));
    }
    if !(dt > 0.0) {
        return Err(Error::domain("time step must be > 0"));
    }
    let (q0, _, _) = trajectory.at(0.0);
    let w0 = set.frequencies(&q0);
    let every = sample_every.max(1);
    // b = e^{iω0 t} a
    let mut b = DVector::from_column_slice(a0);
    let norm0 = b.norm_squared();
    let mut peak: Vec<f64> = a0.iter().map(|z| z.norm_sqr()).collect();
    let mut max_drift = 0.0f64;
    let to_lab = |b: &DVector<Complex64>, t: f64| -> Vec<Complex64> { (0..n).map(|k| b[k] * Complex64::from_polar(1.0, -w0[k] * t)).collect() };
    let mut samples = vec![AmplitudeSample { t: 0.0, amplitudes: to_lab(&b, 0.0) }];
    let id = DMatrix::<Complex64>::identity(n, n);
    for step in 0..steps {
        let tm = (step as f64 + 0.5) * dt;
        let (q, qd, om) = trajectory.at(tm);
        let k = set.generator(&q, &qd, &om);
        // K_I = D (K − diag ω0) D†, D = diag e^{iω0 t}
        let ki = DMatrix::from_fn(n, n, |r, s| {
            let d = if r == s { c(w0[r], 0.0) } else { c(0.0, 0.0) };
            (k[(r, s)] - d) * Complex64::from_polar(1.0, (w0[r] - w0[s]) * tm)
        });
        let half = &ki * c(0.0, 0.5 * dt);
        let lhs = &id + &half;
        let rhs_v = (&id - &half) * &b;
        b = lhs.lu().solve(&rhs_v).ok_or_else(|| Error::domain("singular Cayley system"))?;
        for (pk, z) in peak.iter_mut().zip(b.iter()) {
            *pk = pk.max(z.norm_sqr());
        }
        max_drift = max_drift.max((b.norm_squared() - norm0).abs());
        let done = step + 1;
        if done % every == 0 || done == steps {
            let t = done as f64 * dt;
            samples.push(AmplitudeSample { t, amplitudes: to_lab(&b, t) });
        }
    }
    Ok(AmplitudeHistory {
        samples,
        frequencies: w0.iter().copied().collect(),
        max_norm_drift: max_drift,
        peak_population: peak,
        flagged: max_drift > 1e-6,
    })
}

/// Rotating-frame two-level prediction for a sinusoidal drive
/// `q(t) = q₀ + A sin(Ωt) ê`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoLevelOracle {
    /// Drive-period average of `ω₂(q(t)) − ω₁(q(t))`.
    pub splitting: f64,
    /// On-resonance population Rabi frequency `Ω_R = 2|G|`.
    pub rabi: f64,
}

/// Samples per drive period; the periodic trapezoid rule is exact for
/// harmonics below this count.
const ORACLE_PHASES: usize = 32;

impl TwoLevelOracle {
    /// `G` is the `e^{iΩt}` Fourier component of `M₁₂(t)`. For a
    /// position-independent `κ = C₁₂ − C₂₁*` at unit velocity it reduces to
    /// `G = −(i/4) AΩκ`.
    pub fn new(set: &ModeSet, q0: &Vec3, direction: &Vec3, amplitude: f64, drive_frequency: f64) -> Result<Self> {
        if set.len() != 2 {
            return Err(Error::domain("two-level oracle needs exactly two modes"));
        }
        let mut splitting = 0.0;
        let mut g = c(0.0, 0.0);
        for i in 0..ORACLE_PHASES {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / ORACLE_PHASES as f64;
            let q = q0 + direction * (amplitude * phi.sin());
            let v = direction * (amplitude * drive_frequency * phi.cos());
            let freqs = set.frequencies(&q);
            let cm = set.velocity_couplings(&q, &v, &Vec3::zeros(), &freqs);
            let m12 = (cm[(0, 1)] - cm[(1, 0)].conj()) * c(0.0, -0.5);
            splitting += freqs[1] - freqs[0];
            g += m12 * Complex64::from_polar(1.0, -phi);
        }
        let inv = 1.0 / ORACLE_PHASES as f64;
        Ok(Self {
            splitting: splitting * inv,
            rabi: 2.0 * (g * inv).norm(),
        })
    }

    /// Peak transfer `Ω_R² / (Ω_R² + δ²)` at detuning `δ = Ω − (ω₂ − ω₁)`.
    pub fn peak_transfer(&self, drive_frequency: f64) -> f64 {
        let d = drive_frequency - self.splitting;
        self.rabi * self.rabi / (self.rabi * self.rabi + d * d)
    }

    /// Time of the first transfer maximum at the given drive frequency.
    pub fn peak_time(&self, drive_frequency: f64) -> f64 {
        let d = drive_frequency - self.splitting;
        std::f64::consts::PI / (self.rabi * self.rabi + d * d).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{gaussian_paraxial_mode, standing_wave_mode, BoxDomain};
    use crate::units::{BeamParams, UnitSystem, Dimension};
    use crate::vecmath::rel_diff;
    use std::f64::consts::PI;
    use std::sync::Arc;

    /// Analytic isotropic harmonic field with a uniform-curl λ.
    struct ToyField {
        curv: f64,
        b: f64,
    }

    impl CouplingField for ToyField {
        fn sample(&self, q: &Vec3) -> FieldSample {
            // λ = ½ b ẑ × q, γ = 0, ω − ω₀ = ½ curv |q|²
            let lambda = Vec3::new(-0.5 * self.b * q.y, 0.5 * self.b * q.x, 0.0);
            let mut dl = Matrix3::zeros();
            dl[(0, 1)] = -0.5 * self.b;
            dl[(1, 0)] = 0.5 * self.b;
            FieldSample {
                lambda,
                gamma: Vec3::zeros(),
                d_lambda: dl,
                d_gamma: Matrix3::zeros(),
                omega0: 10.0,
                omega_shift: 0.5 * self.curv * q.norm_squared(),
                grad_omega: q * self.curv,
            }
        }
    }

    fn reference_field() -> (QuadratureField, DielectricSphere, BeamParams) {
        let units = UnitSystem::default();
        let l = |m: f64| units.to_internal(m, Dimension::Length);
        let beam = BeamParams::new(l(1064e-9), l(0.53e-6), l(4e-3), 1e6).unwrap();
        let rho = units.to_internal(2200.0, Dimension::Density);
        let sphere = DielectricSphere::from_density(l(100e-9), 1.45, rho).unwrap();
        let field = QuadratureField::new(Arc::new(gaussian_paraxial_mode(&beam)), sphere, &QuadratureSpec::dynamics_default(), 1e-3 * beam.rayleigh_range);
        (field, sphere, beam)
    }

    #[test]
    fn kinetic_relations() {
        let l = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(kinetic_from_canonical(&Vec3::new(2.0, 0.0, 0.0), &l, 0.0, 2.0), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(kinetic_from_canonical(&(-l * 5.0), &l, 5.0, 3.0), Vec3::zeros());
        assert_eq!(angular_velocity_from_canonical(&(-l * 5.0), &l, 5.0, 3.0), Vec3::zeros());
    }

    #[test]
    fn hamiltonian_cases() {
        let f = ToyField { curv: 2.0, b: 0.5 };
        let free = MechParams { mass: 2.0, inertia: 1.0, n_photons: 0.0 };
        let s = MechState {
            p: Vec3::new(1.0, 2.0, 0.0),
            ..MechState::at_rest(Vec3::new(0.3, 0.0, 0.0))
        };
        // only the zero-point term ½ω(q) survives besides p²/2m
        let e = hamiltonian_single_mode(&s, &f, &free);
        assert!(rel_diff(e.mechanical - 0.5 * (0.5 * 2.0 * 0.09), 5.0 / 4.0, 0.0) < 1e-15);
        let n = 7.0;
        let params = MechParams { n_photons: n, ..free };
        let smp = f.sample(&s.q);
        let minimal = MechState {
            p: -smp.lambda * n,
            j: -smp.gamma * n,
            ..s
        };
        let e = hamiltonian_single_mode(&minimal, &f, &params);
        assert!(rel_diff(e.total, (smp.omega0 + smp.omega_shift) * (n + 0.5), 0.0) < 1e-15);
    }

    #[test]
    fn reference_hamiltonian_at_focus() {
        let (field, sphere, beam) = reference_field();
        let params = MechParams::new(&sphere, 1e6);
        let e = hamiltonian_single_mode(&MechState::at_rest(Vec3::zeros()), &field, &params);
        let s = field.sample(&Vec3::zeros());
        let expect = (s.lambda * 1e6).norm_squared() / (2.0 * sphere.mass)
            + (s.gamma * 1e6).norm_squared() / (2.0 * sphere.moment_of_inertia)
            + (beam.omega() + s.omega_shift) * (1e6 + 0.5);
        assert!(rel_diff(e.total, expect, 0.0) < 1e-15);
        assert!(s.gamma.norm() < 1e-12 * s.lambda.norm() * sphere.radius);
        assert!(s.omega_shift < 0.0);
    }

    #[test]
    fn free_motion_without_photons() {
        let f = ToyField { curv: 0.0, b: 1.0 };
        let params = MechParams { mass: 2.0, inertia: 0.5, n_photons: 0.0 };
        let s0 = MechState {
            p: Vec3::new(0.2, -0.1, 0.4),
            j: Vec3::new(0.0, 0.0, 0.3),
            ..MechState::at_rest(Vec3::new(0.1, 0.2, 0.3))
        };
        let tr = evolve_classical(&s0, &f, &params, &EvolveOptions::new(0.01, 500)).unwrap();
        let last = tr.samples.last().unwrap();
        let expect = s0.q + s0.p / params.mass * 5.0;
        assert!((last.state.q - expect).norm() < 1e-12);
        assert_eq!(last.state.j, s0.j);
        // spin about ẑ at ω = J/I accumulates angle ωt
        let angle = last.state.orientation.angle();
        assert!((angle - (0.3 / 0.5 * 5.0) % (2.0 * PI)).abs() < 1e-10);
        assert!((last.state.orientation.quaternion().norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillation_and_time_reversal_in_toy_field() {
        let f = ToyField { curv: 4.0, b: 0.0 };
        let params = MechParams { mass: 1.0, inertia: 1.0, n_photons: 0.5 };
        // k = curv (n + ½) = 4, Ω = 2
        let w = harmonic_frequencies(&f, &Vec3::zeros(), &params, 1e-3);
        assert!((w - Vec3::repeat(2.0)).norm() < 1e-9);
        let dt = default_time_step(&f, &Vec3::zeros(), &params, 1e-3).unwrap();
        let period = PI;
        let steps = (period / dt).round() as usize;
        let s0 = MechState::at_rest(Vec3::new(0.1, 0.0, 0.0));
        let tr = evolve_classical(&s0, &f, &params, &EvolveOptions::new(period / steps as f64, steps)).unwrap();
        let back = tr.samples.last().unwrap().state;
        assert!((back.q - s0.q).norm() < 1e-6 * 0.1);
        let rewind = evolve_classical(&back, &f, &params, &EvolveOptions::new(-period / steps as f64, steps)).unwrap();
        let r = rewind.samples.last().unwrap().state;
        assert!((r.q - s0.q).norm() < 1e-13 && (r.p - s0.p).norm() < 1e-13);
    }

    #[test]
    fn magnetic_like_coupling_conserves_energy() {
        // λ with uniform curl acts like a magnetic field: circular orbits
        let f = ToyField { curv: 0.0, b: 2.0 };
        let params = MechParams { mass: 1.0, inertia: 1.0, n_photons: 1.0 };
        let s0 = MechState {
            p: Vec3::new(1.0, 0.0, 0.0),
            ..MechState::at_rest(Vec3::zeros())
        };
        let tr = evolve_classical(&s0, &f, &params, &EvolveOptions { sample_every: 10, ..EvolveOptions::new(1e-3, 10_000) }).unwrap();
        assert!(tr.max_energy_error < 1e-12, "{}", tr.max_energy_error);
        for smp in &tr.samples {
            let reported = smp.q_dot;
            let s = f.sample(&smp.state.q);
            assert!((reported - kinetic_from_canonical(&smp.state.p, &s.lambda, 1.0, 1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn adiabatic_wrapper_and_period_at_reference_parameters() {
        let (field, sphere, beam) = reference_field();
        let params = MechParams::new(&sphere, 1e6);
        let h = 1e-3 * beam.rayleigh_range;
        let w = harmonic_frequencies(&field, &Vec3::zeros(), &params, h);
        assert!(w.x > w.z && w.y > w.z && w.z > 0.0);
        let adiabatic = AdiabaticField(&field);
        let dt = default_time_step(&adiabatic, &Vec3::zeros(), &params, h).unwrap();
        let period_x = 2.0 * PI / w.x;
        let steps = (period_x / dt).round() as usize;
        let amp = 0.005 * beam.waist();
        let s0 = MechState::at_rest(Vec3::new(amp, 0.0, 0.0));
        let opts = EvolveOptions { sample_every: 1, ..EvolveOptions::new(period_x / steps as f64, steps) };
        let tr = evolve_classical(&s0, &adiabatic, &params, &opts).unwrap();
        // returns to the start after one harmonic period, passing through −amp halfway
        let last = tr.samples.last().unwrap().state.q;
        assert!((last - s0.q).norm() < 1e-4 * amp);
        let half = tr.samples[steps / 2].state.q.x;
        assert!((half + amp).abs() < 1e-3 * amp);

        // coupling on vs off: the nonadiabatic terms barely change the orbit
        let full = evolve_classical(&s0, &field, &params, &opts).unwrap();
        let dev = full
            .samples
            .iter()
            .zip(&tr.samples)
            .map(|(a, b)| (a.state.q - b.state.q).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-6 * amp, "deviation {dev:e}");
    }

    fn two_mode_set() -> (ModeSet, f64) {
        let bx = BoxDomain::new(Vec3::zeros(), Vec3::new(0.5, 0.5, 2.0));
        let k1 = PI / 2.0;
        let u1 = standing_wave_mode(Vec3::new(0.0, 0.0, k1), Vec3::new(1.0, 0.0, 0.0), 0.0, bx).unwrap();
        let u2 = standing_wave_mode(Vec3::new(0.0, 0.0, 2.0 * k1), Vec3::new(1.0, 0.0, 0.0), 0.0, bx).unwrap();
        let sphere = DielectricSphere::from_density(0.1, 1.45, 1.0).unwrap();
        (ModeSet::new(vec![Arc::new(u1), Arc::new(u2)], sphere, &QuadratureSpec::dynamics_default()), k1)
    }

    #[test]
    fn stationary_sphere_keeps_populations() {
        let (set, _) = two_mode_set();
        let q0 = Vec3::new(0.25, 0.25, 0.6);
        let still = move |_t: f64| (q0, Vec3::zeros(), Vec3::zeros());
        let a0 = [c(0.6, 0.0), c(0.0, 0.8)];
        let hist = evolve_mode_amplitudes(&set, &still, &a0, 0.05, 400, 100).unwrap();
        let w = set.frequencies(&q0);
        for smp in &hist.samples {
            for k in 0..2 {
                assert!((smp.amplitudes[k].norm() - a0[k].norm()).abs() < 1e-13);
                let expect = a0[k] * Complex64::from_polar(1.0, -w[k] * smp.t);
                assert!((smp.amplitudes[k] - expect).norm() < 1e-12);
            }
        }
        assert!(hist.max_norm_drift < 1e-13);
    }

    #[test]
    fn generator_is_hermitian_for_moving_sphere() {
        let (set, _) = two_mode_set();
        let k = set.generator(&Vec3::new(0.25, 0.25, 0.6), &Vec3::new(0.01, -0.02, 0.03), &Vec3::new(0.0, 0.1, 0.0));
        assert!((&k - k.adjoint()).norm() < 1e-15 * k.norm());
        assert!(k[(0, 1)].norm() > 0.0);
    }

    #[test]
    fn resonant_transfer_short_run() {
        // larger drive than the acceptance run, to keep the unit test fast
        let (set, _) = two_mode_set();
        let q0 = Vec3::new(0.25, 0.25, 0.6);
        let amp = 0.1;
        let w = set.frequencies(&q0);
        let guess = TwoLevelOracle::new(&set, &q0, &Vec3::z(), amp, w[1] - w[0]).unwrap();
        let omega = guess.splitting;
        let oracle = TwoLevelOracle::new(&set, &q0, &Vec3::z(), amp, omega).unwrap();
        let drive = move |t: f64| (q0 + Vec3::z() * (amp * (omega * t).sin()), Vec3::z() * (amp * omega * (omega * t).cos()), Vec3::zeros());
        let t_half = PI / oracle.rabi;
        let dt = 2.0 * PI / omega / 20.0;
        let steps = (1.2 * t_half / dt) as usize;
        let hist = evolve_mode_amplitudes(&set, &drive, &[c(1.0, 0.0), c(0.0, 0.0)], dt, steps, 1).unwrap();
        assert!(hist.max_norm_drift < 1e-10);
        assert!((hist.peak_population[1] - oracle.peak_transfer(omega)).abs() < 0.01, "{:?}", hist.peak_population);
        let (i_max, _) = hist
            .samples
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (i, s)| if s.amplitudes[1].norm_sqr() > best.1 { (i, s.amplitudes[1].norm_sqr()) } else { best });
        assert!((hist.samples[i_max].t / oracle.peak_time(omega) - 1.0).abs() < 0.05);
    }
}
