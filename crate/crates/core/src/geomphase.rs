//! Geometric phase along sphere paths, nonadiabatic and trap forces.

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::CouplingVector;
use crate::modes::{mode_frequency_shift, ModeField};
use crate::quadrature::{gauss_legendre, QuadratureSpec};
use crate::units::{BeamParams, DielectricSphere};
use crate::vecmath::Vec3;

/// Parametric path `s ∈ [0, 1] ↦ q(s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathKind {
    Line { from: Vec3, to: Vec3 },
    /// Piecewise-linear path through the vertices in order.
    Polyline { vertices: Vec<Vec3> },
    /// Full circle starting at `center + radius·u`, running toward `v`.
    Circle { center: Vec3, radius: f64, u: Vec3, v: Vec3 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSpec {
    pub kind: PathKind,
    /// Gauss–Legendre panels per segment.
    pub sample_count: usize,
    pub description: String,
}

/// Nodes per Gauss–Legendre panel.
const PANEL_ORDER: usize = 4;

impl PathSpec {
    pub fn line(from: Vec3, to: Vec3, sample_count: usize) -> Self {
        Self {
            kind: PathKind::Line { from, to },
            sample_count,
            description: format!("line {:?} -> {:?}", from.as_slice(), to.as_slice()),
        }
    }

    /// Straight path along the beam axis.
    pub fn axis(qz_i: f64, qz_f: f64, sample_count: usize) -> Self {
        Self::line(Vec3::new(0.0, 0.0, qz_i), Vec3::new(0.0, 0.0, qz_f), sample_count)
    }

    pub fn polyline(vertices: Vec<Vec3>, sample_count: usize) -> Self {
        Self {
            description: format!("polyline with {} vertices", vertices.len()),
            kind: PathKind::Polyline { vertices },
            sample_count,
        }
    }

    pub fn circle(center: Vec3, radius: f64, u: Vec3, v: Vec3, sample_count: usize) -> Self {
        Self {
            kind: PathKind::Circle { center, radius, u: u.normalize(), v: v.normalize() },
            sample_count,
            description: format!("circle of radius {radius} about {:?}", center.as_slice()),
        }
    }

    pub fn reversed(&self) -> Self {
        let kind = match &self.kind {
            PathKind::Line { from, to } => PathKind::Line { from: *to, to: *from },
            PathKind::Polyline { vertices } => PathKind::Polyline {
                vertices: vertices.iter().rev().copied().collect(),
            },
            PathKind::Circle { center, radius, u, v } => PathKind::Circle {
                center: *center,
                radius: *radius,
                u: *u,
                v: -v,
            },
        };
        Self {
            kind,
            sample_count: self.sample_count,
            description: format!("reverse of {}", self.description),
        }
    }

    pub fn start(&self) -> Vec3 {
        self.point(0.0)
    }

    pub fn end(&self) -> Vec3 {
        self.point(1.0)
    }

    pub fn point(&self, s: f64) -> Vec3 {
        match &self.kind {
            PathKind::Line { from, to } => from + (to - from) * s,
            PathKind::Polyline { vertices } => {
                let n = vertices.len().saturating_sub(1).max(1);
                let t = (s * n as f64).clamp(0.0, n as f64);
                let i = (t.floor() as usize).min(n - 1);
                let a = vertices[i];
                let b = vertices[(i + 1).min(vertices.len() - 1)];
                a + (b - a) * (t - i as f64)
            }
            PathKind::Circle { center, radius, u, v } => {
                let a = 2.0 * std::f64::consts::PI * s;
                center + (u * a.cos() + v * a.sin()) * *radius
            }
        }
    }

    /// Quadrature nodes `q` and weighted tangents `w · dq/ds`.
    fn nodes(&self, panels: usize) -> Vec<(Vec3, Vec3)> {
        let (x, w) = gauss_legendre(PANEL_ORDER);
        let mut out = Vec::new();
        let push_segment = |out: &mut Vec<(Vec3, Vec3)>, s0: f64, s1: f64, f: &dyn Fn(f64) -> (Vec3, Vec3)| {
            let h = (s1 - s0) / panels as f64;
            for p in 0..panels {
                let lo = s0 + p as f64 * h;
                for (xi, wi) in x.iter().zip(&w) {
                    let s = lo + 0.5 * h * (xi + 1.0);
                    let (q, dq) = f(s);
                    out.push((q, dq * (0.5 * h * wi)));
                }
            }
        };
        match &self.kind {
            PathKind::Line { from, to } => {
                let (a, b) = (*from, *to);
                push_segment(&mut out, 0.0, 1.0, &|s| (a + (b - a) * s, b - a));
            }
            PathKind::Polyline { vertices } => {
                for pair in vertices.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    push_segment(&mut out, 0.0, 1.0, &|s| (a + (b - a) * s, b - a));
                }
            }
            PathKind::Circle { center, radius, u, v } => {
                let (c, r, u, v) = (*center, *radius, *u, *v);
                let tau = 2.0 * std::f64::consts::PI;
                push_segment(&mut out, 0.0, 1.0, &|s| {
                    let a = tau * s;
                    (c + (u * a.cos() + v * a.sin()) * r, (v * a.cos() - u * a.sin()) * (r * tau))
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMethod {
    LineIntegral,
    ClosedForm,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseResult {
    pub theta_rad: f64,
    pub method: PhaseMethod,
    pub path: PathSpec,
    pub q_start: Vec3,
    pub q_end: Vec3,
    pub photon_number: f64,
    /// Relative change under panel doubling; zero for closed forms.
    pub error_estimate: f64,
    pub flagged: bool,
}

/// Relative tolerance of the panel-doubling check.
pub const PHASE_DOUBLING_TOL: f64 = 1e-8;

fn line_sum<F>(path: &PathSpec, panels: usize, lambda: &F) -> (f64, bool)
where
    F: Fn(&Vec3) -> CouplingVector + Sync,
{
    let nodes = path.nodes(panels);
    let terms: Vec<(f64, bool)> = nodes
        .par_iter()
        .map(|(q, dq)| {
            let l = lambda(q);
            (l.value.dot(dq), l.flagged)
        })
        .collect();
    terms.iter().fold((0.0, false), |(s, f), (t, g)| (s + t, f || *g))
}

/// `Θ = ∫_C λ(q)·dq ⟨n⟩` (ħ = 1), with a panel-doubling convergence check.
pub fn geometric_phase<F>(path: &PathSpec, lambda: F, n_photons: f64) -> PhaseResult
where
    F: Fn(&Vec3) -> CouplingVector + Sync,
{
    let panels = path.sample_count.max(1);
    let (coarse, f1) = line_sum(path, panels, &lambda);
    let (fine, f2) = line_sum(path, 2 * panels, &lambda);
    let scale = fine.abs().max(coarse.abs());
    let error_estimate = if scale > 0.0 { (fine - coarse).abs() / scale } else { 0.0 };
    PhaseResult {
        theta_rad: fine * n_photons,
        method: PhaseMethod::LineIntegral,
        path: path.clone(),
        q_start: path.start(),
        q_end: path.end(),
        photon_number: n_photons,
        error_estimate,
        flagged: f1 || f2 || error_estimate > PHASE_DOUBLING_TOL,
    }
}

/// `x/(1+x²) + atan x` with `x = q_z/z_R`.
fn axis_antiderivative(qz: f64, zr: f64) -> f64 {
    let x = qz / zr;
    x / (1.0 + x * x) + x.atan()
}

/// Prefactor `−(2/3)(n² − 1) k² R³ / L_c`.
fn axis_prefactor(beam: &BeamParams, sphere: &DielectricSphere) -> f64 {
    -2.0 / 3.0 * sphere.eps_contrast() * beam.wavenumber.powi(2) * sphere.radius.powi(3) / beam.cavity_length
}

/// On-axis closed form
/// `Θ = −(2/3)(n² − 1)(k²R³/L_c)⟨n⟩ [x/(1+x²) + atan x]` between the endpoints.
pub fn geometric_phase_axis_closed_form(beam: &BeamParams, sphere: &DielectricSphere, qz_i: f64, qz_f: f64, n_photons: f64) -> PhaseResult {
    let zr = beam.rayleigh_range;
    let bracket = axis_antiderivative(qz_f, zr) - axis_antiderivative(qz_i, zr);
    let path = PathSpec::axis(qz_i, qz_f, 1);
    PhaseResult {
        theta_rad: axis_prefactor(beam, sphere) * n_photons * bracket,
        method: PhaseMethod::ClosedForm,
        q_start: path.start(),
        q_end: path.end(),
        path,
        photon_number: n_photons,
        error_estimate: 0.0,
        flagged: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fig2Row {
    pub q_z: f64,
    /// `|Θ|` accumulated from the first grid point by line integration.
    pub theta_line: f64,
    /// `|Θ|` from the on-axis closed form.
    pub theta_closed: f64,
}

/// Nodes per grid interval of the cumulative sweep.
const SWEEP_NODES: usize = 3;

/// Cumulative `|Θ(q_z,0 → q_z)|` along the beam axis over an ascending grid.
pub fn figure2_sweep<F>(beam: &BeamParams, sphere: &DielectricSphere, n_photons: f64, grid: &[f64], lambda: F) -> Vec<Fig2Row>
where
    F: Fn(&Vec3) -> CouplingVector + Sync,
{
    if grid.is_empty() {
        return Vec::new();
    }
    let (x, w) = gauss_legendre(SWEEP_NODES);
    let increments: Vec<f64> = grid
        .windows(2)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|pair| {
            let (a, b) = (pair[0], pair[1]);
            let h = b - a;
            x.iter()
                .zip(&w)
                .map(|(xi, wi)| {
                    let z = a + 0.5 * h * (xi + 1.0);
                    lambda(&Vec3::new(0.0, 0.0, z)).value.z * 0.5 * h * wi
                })
                .sum::<f64>()
        })
        .collect();
    let mut acc = 0.0;
    let mut rows = Vec::with_capacity(grid.len());
    rows.push(Fig2Row {
        q_z: grid[0],
        theta_line: 0.0,
        theta_closed: 0.0,
    });
    for (i, inc) in increments.iter().enumerate() {
        acc += inc;
        let qz = grid[i + 1];
        let closed = geometric_phase_axis_closed_form(beam, sphere, grid[0], qz, n_photons).theta_rad;
        rows.push(Fig2Row {
            q_z: qz,
            theta_line: (acc * n_photons).abs(),
            theta_closed: closed.abs(),
        });
    }
    rows
}

/// `n` equally spaced points covering `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ForceResult {
    pub force: Vec3,
    /// Relative change between steps `h` and `h/2`.
    pub richardson_error: f64,
    pub flagged: bool,
}

/// Tolerance of the two-step finite-difference agreement.
pub const FD_TOL: f64 = 1e-4;

/// Central-difference Jacobian `m[(i, j)] = ∂_j F_i` at step `h`.
fn fd_jacobian<F>(field: &F, q: &Vec3, h: f64) -> nalgebra::Matrix3<f64>
where
    F: Fn(&Vec3) -> Vec3 + Sync,
{
    let cols: Vec<Vec3> = (0..3)
        .into_par_iter()
        .map(|j| {
            let mut e = Vec3::zeros();
            e[j] = h;
            (field(&(q + e)) - field(&(q - e))) / (2.0 * h)
        })
        .collect();
    nalgebra::Matrix3::from_columns(&cols)
}

/// Central-difference Jacobian at steps `h` and `h/2`, combined by
/// Richardson extrapolation, with the relative two-step disagreement.
pub fn richardson_jacobian<F>(field: &F, q: &Vec3, h: f64) -> (nalgebra::Matrix3<f64>, f64)
where
    F: Fn(&Vec3) -> Vec3 + Sync,
{
    let a = fd_jacobian(field, q, h);
    let b = fd_jacobian(field, q, 0.5 * h);
    let scale = b.norm();
    let err = if scale > 0.0 { (a - b).norm() / scale } else { 0.0 };
    ((4.0 * b - a) / 3.0, err)
}

/// `F = ⟨n⟩ [q̇ × (∇×λ) − ∇(ω·γ)]` by central differences with step `h`.
pub fn nonadiabatic_force<L, G>(q: &Vec3, q_dot: &Vec3, omega_body: &Vec3, lambda: L, gamma: G, n_photons: f64, h: f64) -> ForceResult
where
    L: Fn(&Vec3) -> Vec3 + Sync,
    G: Fn(&Vec3) -> Vec3 + Sync,
{
    let mut force = Vec3::zeros();
    let mut err = 0.0f64;
    if q_dot.norm() > 0.0 {
        let (jl, el) = richardson_jacobian(&lambda, q, h);
        let curl = Vec3::new(jl[(2, 1)] - jl[(1, 2)], jl[(0, 2)] - jl[(2, 0)], jl[(1, 0)] - jl[(0, 1)]);
        force += q_dot.cross(&curl);
        err = err.max(el);
    }
    if omega_body.norm() > 0.0 {
        // ∇(ω·γ) = (∂γ)ᵀ ω
        let (jg, eg) = richardson_jacobian(&gamma, q, h);
        force -= jg.transpose() * omega_body;
        err = err.max(eg);
    }
    ForceResult {
        force: force * n_photons,
        richardson_error: err,
        flagged: err > FD_TOL,
    }
}

/// `(q̇·λ + ω·γ) ⟨n⟩ Δt` (ħ = 1), with per-photon `λ`, `γ`.
pub fn velocity_phase_shift(q_dot: &Vec3, omega_body: &Vec3, lambda: &Vec3, gamma: &Vec3, n_photons: f64, dt: f64) -> f64 {
    (q_dot.dot(lambda) + omega_body.dot(gamma)) * n_photons * dt
}

/// Gradient force `−⟨n⟩ ∇ω(q)` (ħ = 1) from the mode frequency shift.
pub fn trap_force(q: &Vec3, mode: &dyn ModeField, sphere: &DielectricSphere, n_photons: f64, quad: &QuadratureSpec) -> Vec3 {
    -mode_frequency_shift(mode, sphere, q, quad).gradient * n_photons
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{lambda_single, Provenance};
    use crate::modes::{gaussian_paraxial_mode, standing_wave_mode, BoxDomain, MixedMode, SharedMode};
    use crate::vecmath::rel_diff;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn reference_beam() -> BeamParams {
        BeamParams::new(1.064, 0.53, 4000.0, 1e6).unwrap()
    }

    fn sphere() -> DielectricSphere {
        DielectricSphere::from_density(0.1, 1.45, 1.0).unwrap()
    }

    fn constant_field(v: Vec3) -> impl Fn(&Vec3) -> CouplingVector + Sync {
        move |q: &Vec3| CouplingVector {
            value: v,
            provenance: Provenance::ClosedForm,
            at_q: *q,
            error_estimate: 0.0,
            flagged: false,
        }
    }

    fn analytic_field<F: Fn(&Vec3) -> Vec3 + Sync>(f: F) -> impl Fn(&Vec3) -> CouplingVector + Sync {
        move |q: &Vec3| CouplingVector {
            value: f(q),
            provenance: Provenance::ClosedForm,
            at_q: *q,
            error_estimate: 0.0,
            flagged: false,
        }
    }

    #[test]
    fn closed_loop_in_constant_field_vanishes() {
        let f = constant_field(Vec3::new(0.3, -1.0, 2.0));
        let sq = PathSpec::polyline(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.5), Vec3::new(0.0, 1.0, 0.0), Vec3::zeros()],
            3,
        );
        assert!(geometric_phase(&sq, &f, 1e6).theta_rad.abs() < 1e-9);
        let circle = PathSpec::circle(Vec3::new(0.1, 0.2, 0.3), 0.5, Vec3::x(), Vec3::z(), 8);
        assert!(geometric_phase(&circle, &f, 1e6).theta_rad.abs() < 1e-9);
    }

    #[test]
    fn stokes_on_a_circle() {
        // λ = ½ B × q: circulation = B·n̂ π r²
        let b = Vec3::new(0.0, 0.0, 2.0);
        let f = analytic_field(move |q: &Vec3| 0.5 * b.cross(q));
        let r = 0.7;
        let circle = PathSpec::circle(Vec3::zeros(), r, Vec3::x(), Vec3::y(), 16);
        let res = geometric_phase(&circle, &f, 1.0);
        assert!(rel_diff(res.theta_rad, 2.0 * PI * r * r, 0.0) < 1e-10);
        assert!(!res.flagged);
        let back = geometric_phase(&circle.reversed(), &f, 1.0);
        assert!(rel_diff(back.theta_rad, -res.theta_rad, 0.0) < 1e-13);
    }

    #[test]
    fn real_mode_gives_no_phase() {
        let sw = standing_wave_mode(
            Vec3::new(0.0, 0.0, 2.0 * PI / 1.064),
            Vec3::new(1.0, 0.0, 0.0),
            0.0,
            BoxDomain::new(Vec3::repeat(-2.0), Vec3::repeat(4.0)),
        )
        .unwrap();
        let s = sphere();
        let quad = QuadratureSpec::new(8, 12, 24);
        let res = geometric_phase(&PathSpec::axis(-0.5, 0.5, 4), |q: &Vec3| lambda_single(&sw, &s, q, &quad, true), 1e6);
        assert_eq!(res.theta_rad, 0.0);
    }

    #[test]
    fn closed_form_properties() {
        let b = reference_beam();
        let s = sphere();
        assert_eq!(geometric_phase_axis_closed_form(&b, &s, 0.3, 0.3, 1e6).theta_rad, 0.0);
        let full = geometric_phase_axis_closed_form(&b, &s, -0.4, 0.4, 1e6).theta_rad;
        let half = geometric_phase_axis_closed_form(&b, &s, 0.0, 0.4, 1e6).theta_rad;
        assert!(rel_diff(full, 2.0 * half, 0.0) < 1e-15);
        // hand evaluation of the bracket at ±λ₀/2 with ⟨n⟩ = 10⁶
        let k = 2.0 * PI / 1.064;
        let x: f64 = 0.532 / 0.53;
        let hand = -2.0 / 3.0 * (1.45f64 * 1.45 - 1.0) * k * k * 1e-3 / 4000.0 * 1e6 * 2.0 * (x / (1.0 + x * x) + x.atan());
        let cf = geometric_phase_axis_closed_form(&b, &s, -0.532, 0.532, 1e6).theta_rad;
        assert!(rel_diff(cf, hand, 0.0) < 1e-14);
        assert!((cf / PI + 5.2512).abs() < 1e-3, "{}", cf / PI);
        assert!(rel_diff(geometric_phase_axis_closed_form(&b, &s, -0.532, 0.532, 2e6).theta_rad, 2.0 * cf, 0.0) < 1e-15);
    }

    #[test]
    fn axis_line_integral_vs_point_particle_oracle() {
        let b = reference_beam();
        let g = gaussian_paraxial_mode(&b);
        let quad = QuadratureSpec::new(12, 24, 48);
        let k = b.wavenumber;
        let zr = b.rayleigh_range;
        let mut prev = f64::INFINITY;
        for r in [0.1, 0.05, 0.025] {
            let s = DielectricSphere::from_density(r, 1.45, 1.0).unwrap();
            let res = geometric_phase(&PathSpec::axis(-0.532, 0.532, 6), |q: &Vec3| lambda_single(&g, &s, q, &quad, true), 1e6);
            assert!(!res.flagged, "{}", res.error_estimate);
            // point particle: λ_z = −(n²−1)V k |u|²/L_c, integrated in closed form
            let x: f64 = 0.532 / zr;
            let point = -(4.0 / 3.0) * s.eps_contrast() * k * k * r.powi(3) / b.cavity_length * 1e6 * 2.0 * x.atan();
            let err = rel_diff(res.theta_rad, point, 0.0);
            assert!(err < prev && err < 0.05, "R={r}: {} vs {}", res.theta_rad, point);
            prev = err;
        }
    }

    #[test]
    fn reversal_composition_and_scaling() {
        let b = reference_beam();
        let g: SharedMode = Arc::new(gaussian_paraxial_mode(&b));
        let s = sphere();
        let quad = QuadratureSpec::new(8, 12, 24);
        let field = |q: &Vec3| lambda_single(g.as_ref(), &s, q, &quad, true);
        let p = PathSpec::line(Vec3::new(0.1, 0.0, -0.3), Vec3::new(-0.05, 0.1, 0.4), 4);
        let fwd = geometric_phase(&p, field, 1e6).theta_rad;
        let back = geometric_phase(&p.reversed(), field, 1e6).theta_rad;
        assert!((fwd + back).abs() < 1e-12 * fwd.abs());
        let mid = Vec3::new(0.2, 0.2, 0.0);
        let p1 = PathSpec::line(Vec3::new(0.1, 0.0, -0.3), mid, 4);
        let p2 = PathSpec::line(mid, Vec3::new(-0.05, 0.1, 0.4), 4);
        let via = PathSpec::polyline(vec![Vec3::new(0.1, 0.0, -0.3), mid, Vec3::new(-0.05, 0.1, 0.4)], 4);
        let sum = geometric_phase(&p1, field, 1e6).theta_rad + geometric_phase(&p2, field, 1e6).theta_rad;
        assert!(rel_diff(geometric_phase(&via, field, 1e6).theta_rad, sum, 0.0) < 1e-10);
        assert!(rel_diff(geometric_phase(&p, field, 3e6).theta_rad, 3.0 * fwd, 0.0) < 1e-14);
        // global phase of the mode is irrelevant
        let shifted = MixedMode::phase_shifted(g.clone(), 1.234);
        let ph = geometric_phase(&p, |q: &Vec3| lambda_single(&shifted, &s, q, &quad, true), 1e6).theta_rad;
        assert!(rel_diff(ph, fwd, 0.0) < 1e-12);
        // (n² − 1) scaling
        let s2 = DielectricSphere::from_density(0.1, (1.0 + 2.0 * s.eps_contrast()).sqrt(), 1.0).unwrap();
        let doubled = geometric_phase(&p, |q: &Vec3| lambda_single(g.as_ref(), &s2, q, &quad, true), 1e6).theta_rad;
        assert!(rel_diff(doubled, 2.0 * fwd, 0.0) < 1e-12);
    }

    #[test]
    fn sweep_matches_direct_phase() {
        let b = reference_beam();
        let g = gaussian_paraxial_mode(&b);
        let s = sphere();
        let quad = QuadratureSpec::new(12, 24, 48);
        let field = |q: &Vec3| lambda_single(&g, &s, q, &quad, true);
        let grid = uniform_grid(-0.532, 0.532, 101);
        let rows = figure2_sweep(&b, &s, 1e6, &grid, field);
        assert_eq!(rows.len(), 101);
        assert_eq!(rows[0].theta_line, 0.0);
        for w in rows.windows(2) {
            assert!(w[1].theta_line > w[0].theta_line);
            assert!(w[1].theta_closed > w[0].theta_closed);
        }
        // increments are symmetric about the focus
        for i in 0..50 {
            let a = rows[i + 1].theta_line - rows[i].theta_line;
            let z = rows[100 - i].theta_line - rows[99 - i].theta_line;
            assert!(rel_diff(a, z, 0.0) < 1e-10);
        }
        let direct = geometric_phase(&PathSpec::axis(-0.532, 0.532, 8), field, 1e6);
        assert!(rel_diff(rows[100].theta_line, direct.theta_rad.abs(), 0.0) < 1e-8);
        let closed = geometric_phase_axis_closed_form(&b, &s, -0.532, 0.532, 1e6);
        assert!(rel_diff(rows[100].theta_closed, closed.theta_rad.abs(), 0.0) < 1e-15);
    }

    #[test]
    fn trivial_force_cases() {
        let lam = |q: &Vec3| Vec3::new(-q.y, q.x, 0.0);
        let gam = |q: &Vec3| Vec3::new(q.x * q.x, 0.0, q.z);
        let q = Vec3::new(0.1, 0.2, 0.3);
        let zero = nonadiabatic_force(&q, &Vec3::zeros(), &Vec3::zeros(), lam, gam, 1e6, 1e-3);
        assert_eq!(zero.force, Vec3::zeros());
        // ∇×λ = 2ẑ, so q̇ ∥ ẑ gives no first term
        let par = nonadiabatic_force(&q, &Vec3::new(0.0, 0.0, 0.5), &Vec3::zeros(), lam, gam, 1.0, 1e-3);
        assert!(par.force.norm() < 1e-9);
        let perp = nonadiabatic_force(&q, &Vec3::new(0.5, 0.0, 0.0), &Vec3::zeros(), lam, gam, 1.0, 1e-3);
        assert!((perp.force - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-9);
        // ∇(ω·γ) with ω = x̂: ∇(x²) = 2x x̂
        let tor = nonadiabatic_force(&q, &Vec3::zeros(), &Vec3::x(), lam, gam, 1.0, 1e-3);
        assert!((tor.force - Vec3::new(-0.2, 0.0, 0.0)).norm() < 1e-9);
        assert!(!tor.flagged);
    }

    #[test]
    fn velocity_phase_properties() {
        let l = Vec3::new(0.0, 0.0, 2.0);
        let g = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(velocity_phase_shift(&Vec3::x(), &Vec3::z(), &l, &g, 1e6, 1.0), 0.0);
        let a = velocity_phase_shift(&Vec3::new(0.0, 0.0, 0.1), &Vec3::new(0.0, 0.3, 0.0), &l, &g, 1.0, 2.0);
        let b = velocity_phase_shift(&Vec3::new(0.0, 0.0, 0.1), &Vec3::new(0.0, 0.3, 0.0), &l, &g, 1.0, 4.0);
        assert!(rel_diff(b, 2.0 * a, 0.0) < 1e-15);
    }

    #[test]
    fn trap_force_is_restoring() {
        let b = reference_beam();
        let g = gaussian_paraxial_mode(&b);
        let s = sphere();
        let quad = QuadratureSpec::new(12, 24, 48);
        let ahead = trap_force(&Vec3::new(0.0, 0.0, 0.05), &g, &s, 1e6, &quad);
        let behind = trap_force(&Vec3::new(0.0, 0.0, -0.05), &g, &s, 1e6, &quad);
        assert!(ahead.z < 0.0 && behind.z > 0.0);
        let side = trap_force(&Vec3::new(0.05, 0.0, 0.0), &g, &s, 1e6, &quad);
        assert!(side.x < 0.0);
        assert!(trap_force(&Vec3::zeros(), &g, &s, 1e6, &quad).norm() < 1e-12 * side.norm());
        // finite difference of ⟨n⟩ω(q) at q_z = z_R/2
        let qz = b.rayleigh_range / 2.0;
        let h = 1e-4 * b.rayleigh_range;
        let w = |z: f64| mode_frequency_shift(&g, &s, &Vec3::new(0.0, 0.0, z), &quad).omega * 1e6;
        let fd = -(w(qz + h) - w(qz - h)) / (2.0 * h);
        let an = trap_force(&Vec3::new(0.0, 0.0, qz), &g, &s, 1e6, &quad).z;
        assert!(rel_diff(an, fd, 0.0) < 0.01, "{an} vs {fd}");
    }
}
