//! Quadrature over the sphere volume and a few auxiliary domains.
//!
//! Every `(ε − 1)`-weighted integral is supported on the closed ball
//! `|r − q| ≤ R`, where `ε − 1 = n² − 1` is constant, so the rules here only
//! ever see smooth integrands. Ball rules are a radial Gauss–Legendre rule
//! (with the `r²` Jacobian) times a Gauss–Legendre rule in `cos θ` and a
//! uniform rule in `φ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::vecmath::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Same angular grid on every radial shell.
    TensorGaussLegendre,
    /// Angular order shrinks with the shell radius (fewer nodes near the center).
    LayeredGaussLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub radial_order: usize,
    /// Gauss–Legendre order in `cos θ`.
    pub angular_order: usize,
    /// Uniform nodes in `φ`.
    pub azimuthal_order: usize,
    pub scheme: Scheme,
    pub target_rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            radial_order: 24,
            angular_order: 48,
            azimuthal_order: 96,
            scheme: Scheme::TensorGaussLegendre,
            target_rel_tol: 1e-8,
        }
    }
}

impl QuadratureSpec {
    pub fn new(radial: usize, angular: usize, azimuthal: usize) -> Self {
        Self {
            radial_order: radial,
            angular_order: angular,
            azimuthal_order: azimuthal,
            ..Self::default()
        }
    }

    /// Coarse rule for inner loops of the dynamics integrators.
    pub fn dynamics_default() -> Self {
        Self::new(4, 6, 12)
    }

    pub fn doubled(&self) -> Self {
        Self {
            radial_order: 2 * self.radial_order,
            angular_order: 2 * self.angular_order,
            azimuthal_order: 2 * self.azimuthal_order,
            ..*self
        }
    }

    pub fn halved(&self) -> Self {
        Self {
            radial_order: (self.radial_order / 2).max(1),
            angular_order: (self.angular_order / 2).max(1),
            azimuthal_order: (self.azimuthal_order / 2).max(1),
            ..*self
        }
    }

    pub fn node_count(&self) -> usize {
        BallRule::new(self).len()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`, split into `panels` equal panels.
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

/// Nodes of one radial shell of a ball rule on the unit ball.
#[derive(Debug, Clone)]
struct Shell {
    offsets: Vec<Vec3>,
    weights: Vec<f64>,
}

/// Quadrature rule on the unit ball, grouped by radial shell so that the
/// reduction order is fixed regardless of how shells are scheduled.
#[derive(Debug, Clone)]
pub struct BallRule {
    shells: Vec<Shell>,
}

impl BallRule {
    pub fn new(spec: &QuadratureSpec) -> Self {
        let (xr, wr) = gauss_legendre(spec.radial_order);
        let shells = xr
            .iter()
            .zip(&wr)
            .map(|(&x, &w)| {
                let r = 0.5 * (x + 1.0);
                let wr = 0.5 * w * r * r;
                let (nt, np) = match spec.scheme {
                    Scheme::TensorGaussLegendre => (spec.angular_order, spec.azimuthal_order),
                    Scheme::LayeredGaussLegendre => (
                        ((spec.angular_order as f64 * r).ceil() as usize).clamp(4.min(spec.angular_order), spec.angular_order),
                        ((spec.azimuthal_order as f64 * r).ceil() as usize).clamp(8.min(spec.azimuthal_order), spec.azimuthal_order),
                    ),
                };
                let (ct, wt) = gauss_legendre(nt);
                let dphi = 2.0 * PI / np as f64;
                let mut offsets = Vec::with_capacity(nt * np);
                let mut weights = Vec::with_capacity(nt * np);
                for (c, wc) in ct.iter().zip(&wt) {
                    let s = (1.0 - c * c).sqrt();
                    for j in 0..np {
                        let phi = (j as f64 + 0.5) * dphi;
                        offsets.push(Vec3::new(r * s * phi.cos(), r * s * phi.sin(), r * c));
                        weights.push(wr * wc * dphi);
                    }
                }
                Shell { offsets, weights }
            })
            .collect();
        Self { shells }
    }

    pub fn len(&self) -> usize {
        self.shells.iter().map(|s| s.weights.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Σ w f(q + R d, R d)` over the ball of radius `R` centered at `q`.
    ///
    /// The integrand receives the absolute point and the offset `r − q`.
    pub fn integrate<const N: usize, F>(&self, q: &Vec3, radius: f64, f: F) -> [f64; N]
    where
        F: Fn(&Vec3, &Vec3) -> [f64; N] + Sync,
    {
        let vol = radius.powi(3);
        let partial: Vec<[f64; N]> = self
            .shells
            .par_iter()
            .map(|shell| {
                let mut acc = [0.0; N];
                for (d, w) in shell.offsets.iter().zip(&shell.weights) {
                    let d = d * radius;
                    let r = q + d;
                    let v = f(&r, &d);
                    for k in 0..N {
                        acc[k] += w * v[k];
                    }
                }
                acc
            })
            .collect();
        let mut total = [0.0; N];
        for p in &partial {
            for k in 0..N {
                total[k] += p[k];
            }
        }
        total.map(|x| x * vol)
    }

    /// Like [`integrate`](Self::integrate) but also returns `Σ w |f|`, the
    /// scale used to judge cancellation.
    fn integrate_with_scale<const N: usize, F>(&self, q: &Vec3, radius: f64, f: F) -> ([f64; N], f64)
    where
        F: Fn(&Vec3, &Vec3) -> [f64; N] + Sync,
    {
        let vol = radius.powi(3);
        let partial: Vec<([f64; N], f64)> = self
            .shells
            .par_iter()
            .map(|shell| {
                let mut acc = [0.0; N];
                let mut mag = 0.0;
                for (d, w) in shell.offsets.iter().zip(&shell.weights) {
                    let d = d * radius;
                    let r = q + d;
                    let v = f(&r, &d);
                    let mut n2 = 0.0;
                    for k in 0..N {
                        acc[k] += w * v[k];
                        n2 += v[k] * v[k];
                    }
                    mag += w * n2.sqrt();
                }
                (acc, mag)
            })
            .collect();
        let mut total = [0.0; N];
        let mut mag = 0.0;
        for (p, m) in &partial {
            for k in 0..N {
                total[k] += p[k];
            }
            mag += m;
        }
        (total.map(|x| x * vol), mag * vol)
    }
}

/// Result of a sphere-volume integral with its order-refinement estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<const N: usize> {
    pub value: [f64; N],
    /// Relative change against the half-order rule.
    pub error_estimate: f64,
    /// Set when the estimate exceeds ten times the target tolerance.
    pub flagged: bool,
}

/// Integrate `f` over the ball `|r − q| ≤ R`, with an error estimate from
/// the half-order rule.
pub fn integrate_over_sphere<const N: usize, F>(f: F, q: &Vec3, radius: f64, spec: &QuadratureSpec) -> Integral<N>
where
    F: Fn(&Vec3, &Vec3) -> [f64; N] + Sync,
{
    let (value, scale) = BallRule::new(spec).integrate_with_scale(q, radius, &f);
    let coarse = BallRule::new(&spec.halved()).integrate(q, radius, &f);
    let error_estimate = relative_change(&value, &coarse, scale);
    Integral {
        value,
        error_estimate,
        flagged: error_estimate > 10.0 * spec.target_rel_tol,
    }
}

/// `|a − b| / |a|`, falling back to the magnitude scale `Σ w|f|` when the
/// integral itself cancels to near zero.
pub fn relative_change<const N: usize>(a: &[f64; N], b: &[f64; N], scale: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = if na > 1e-8 * scale { na } else { scale };
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Tensor Gauss–Legendre rule over an axis-aligned box, composite along each
/// axis so that every panel spans at most `max_panel` in length.
pub fn box_rule(origin: &Vec3, lengths: &Vec3, max_panel: f64, order: usize) -> (Vec<Vec3>, Vec<f64>) {
    let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
        .map(|a| {
            let panels = ((lengths[a] / max_panel).ceil() as usize).max(1);
            composite_gauss_legendre(origin[a], origin[a] + lengths[a], panels, order)
        })
        .collect();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (x, wx) in axes[0].0.iter().zip(&axes[0].1) {
        for (y, wy) in axes[1].0.iter().zip(&axes[1].1) {
            for (z, wz) in axes[2].0.iter().zip(&axes[2].1) {
                nodes.push(Vec3::new(*x, *y, *z));
                weights.push(wx * wy * wz);
            }
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [1, 2, 5, 12, 24, 48] {
            let (x, w) = gauss_legendre(n);
            let sw: f64 = w.iter().sum();
            assert!((sw - 2.0).abs() < 1e-13, "n = {n}");
            // ∫ x^(2n-2) over [-1,1] = 2/(2n-1)
            let p = 2 * n - 2;
            let integral: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
            assert!((integral - 2.0 / (p as f64 + 1.0)).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn constant_and_moment() {
        let spec = QuadratureSpec::default();
        let q = Vec3::new(0.2, -1.0, 3.0);
        let r = 0.37;
        let one = integrate_over_sphere(|_, _| [1.0], &q, r, &spec);
        let vol = 4.0 / 3.0 * PI * r.powi(3);
        assert!((one.value[0] - vol).abs() / vol < 1e-10);
        assert!(!one.flagged);
        let second = integrate_over_sphere(|_, d| [d.norm_squared()], &q, r, &spec);
        let oracle = 0.8 * PI * r.powi(5);
        assert!((second.value[0] - oracle).abs() / oracle < 1e-10);
        let odd = integrate_over_sphere(|_, d| [d.x, d.y, d.z], &q, r, &spec);
        for v in odd.value {
            assert!(v.abs() < 1e-12 * r.powi(4));
        }
    }

    #[test]
    fn layered_scheme_matches_tensor_on_smooth_integrand() {
        let mut spec = QuadratureSpec::new(12, 16, 32);
        let q = Vec3::new(0.0, 0.0, 0.1);
        let f = |r: &Vec3, _: &Vec3| [(-(r.norm_squared())).exp() * (3.0 * r.z).cos()];
        let tensor = integrate_over_sphere(f, &q, 0.5, &spec);
        spec.scheme = Scheme::LayeredGaussLegendre;
        let layered = integrate_over_sphere(f, &q, 0.5, &spec);
        assert!((tensor.value[0] - layered.value[0]).abs() / tensor.value[0].abs() < 1e-8);
        assert!(BallRule::new(&spec).len() < QuadratureSpec::new(12, 16, 32).node_count());
    }

    #[test]
    fn order_doubling_gate() {
        let spec = QuadratureSpec::default();
        let q = Vec3::new(0.05, 0.0, 0.0);
        let f = |r: &Vec3, _: &Vec3| [(-2.0 * (r.x * r.x + r.y * r.y)).exp() * (5.9 * r.z).sin(), r.x.cos()];
        let a = integrate_over_sphere(f, &q, 0.1, &spec);
        let b = integrate_over_sphere(f, &q, 0.1, &spec.doubled());
        assert!(relative_change(&a.value, &b.value, 1.0) < spec.target_rel_tol);
    }

    #[test]
    fn underresolved_rule_is_flagged() {
        let spec = QuadratureSpec::new(2, 2, 4);
        let f = |r: &Vec3, _: &Vec3| [(40.0 * r.x).cos() * (33.0 * r.z).sin() + (25.0 * r.y).cos()];
        let res = integrate_over_sphere(f, &Vec3::zeros(), 1.0, &spec);
        assert!(res.flagged);
    }

    #[test]
    fn box_rule_volume() {
        let (nodes, w) = box_rule(&Vec3::new(-1.0, 0.0, 2.0), &Vec3::new(2.0, 3.0, 0.5), 0.7, 6);
        assert_eq!(nodes.len(), w.len());
        let vol: f64 = w.iter().sum();
        assert!((vol - 3.0).abs() < 1e-13);
    }
}
