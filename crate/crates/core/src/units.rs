//! Unit conventions, material and beam parameter bundles, and the
//! permittivity profile of the sphere.
//!
//! Library code works in natural units `c = ħ = ε₀ = μ₀ = 1` with lengths
//! measured in multiples of [`UnitSystem::length_scale`] meters. In that
//! system an angular frequency is a wavenumber, a mass is an inverse
//! length (`mc/ħ`) and momenta per photon are wavenumbers.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::vecmath::Vec3;

/// Speed of light, m/s.
pub const C_SI: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B_SI: f64 = 1.380_649e-23;

/// Fused-silica density, kg/m³. Used when a sphere has no explicit mass.
pub const DEFAULT_DENSITY_SI: f64 = 2200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `c = ħ = ε₀ = μ₀ = 1`, lengths in units of `length_scale` meters.
    Natural,
    /// Plain SI. Only used to label values that were converted back.
    Si,
}

/// Physical dimension of a quantity, used for conversions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Dimensionless,
    Length,
    Time,
    Mass,
    Energy,
    Momentum,
    AngularMomentum,
    Force,
    AngularFrequency,
    Velocity,
    Power,
    Density,
    MomentOfInertia,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitSystem {
    pub convention: Convention,
    /// Meters per internal length unit.
    pub length_scale: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::natural(1e-6)
    }
}

impl UnitSystem {
    pub fn natural(length_scale: f64) -> Self {
        Self {
            convention: Convention::Natural,
            length_scale,
        }
    }

    pub fn si() -> Self {
        Self {
            convention: Convention::Si,
            length_scale: 1.0,
        }
    }

    /// Size of one internal unit of `dim`, expressed in SI.
    pub fn si_per_internal(&self, dim: Dimension) -> f64 {
        if self.convention == Convention::Si {
            return 1.0;
        }
        let l0 = self.length_scale;
        match dim {
            Dimension::Dimensionless => 1.0,
            Dimension::Length => l0,
            Dimension::Time => l0 / C_SI,
            Dimension::Mass => HBAR_SI / (C_SI * l0),
            Dimension::Energy => HBAR_SI * C_SI / l0,
            Dimension::Momentum => HBAR_SI / l0,
            Dimension::AngularMomentum => HBAR_SI,
            Dimension::Force => HBAR_SI * C_SI / (l0 * l0),
            Dimension::AngularFrequency => C_SI / l0,
            Dimension::Velocity => C_SI,
            Dimension::Power => HBAR_SI * C_SI * C_SI / (l0 * l0),
            Dimension::Density => HBAR_SI / (C_SI * l0.powi(4)),
            Dimension::MomentOfInertia => HBAR_SI * l0 / C_SI,
        }
    }

    pub fn to_internal(&self, si_value: f64, dim: Dimension) -> f64 {
        si_value / self.si_per_internal(dim)
    }

    pub fn to_si(&self, internal: f64, dim: Dimension) -> f64 {
        internal * self.si_per_internal(dim)
    }

    pub fn vec_to_si(&self, v: &Vec3, dim: Dimension) -> Vec3 {
        v * self.si_per_internal(dim)
    }

    pub fn vec_to_internal(&self, v: &Vec3, dim: Dimension) -> Vec3 {
        v / self.si_per_internal(dim)
    }

    /// `k_B T` in internal energy units.
    pub fn thermal_energy(&self, temperature_k: f64) -> f64 {
        self.to_internal(K_B_SI * temperature_k, Dimension::Energy)
    }

    pub fn label(&self) -> String {
        match self.convention {
            Convention::Natural => format!("natural(c=hbar=eps0=1, length_unit={:e} m)", self.length_scale),
            Convention::Si => "SI".to_string(),
        }
    }
}

/// Rigid homogeneous dielectric sphere. All fields in internal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DielectricSphere {
    pub radius: f64,
    pub refractive_index: f64,
    pub mass: f64,
    pub moment_of_inertia: f64,
    pub density: Option<f64>,
}

impl DielectricSphere {
    pub fn new(radius: f64, refractive_index: f64, mass: f64, moment_of_inertia: f64) -> Result<Self> {
        let s = Self {
            radius,
            refractive_index,
            mass,
            moment_of_inertia,
            density: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// Uniform sphere of the given density; mass and inertia are derived.
    pub fn from_density(radius: f64, refractive_index: f64, density: f64) -> Result<Self> {
        let (mass, moment_of_inertia) = derive_inertia(radius, Some(density))?;
        let s = Self {
            radius,
            refractive_index,
            mass,
            moment_of_inertia,
            density: Some(density),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::domain(format!("sphere radius must be > 0, got {}", self.radius)));
        }
        if !(self.refractive_index > 1.0) {
            return Err(Error::domain(format!(
                "refractive index must be > 1, got {}",
                self.refractive_index
            )));
        }
        if !(self.mass > 0.0) || !(self.moment_of_inertia > 0.0) {
            return Err(Error::domain("mass and moment of inertia must be > 0"));
        }
        Ok(())
    }

    /// `n²`, the permittivity inside the sphere.
    pub fn eps_inside(&self) -> f64 {
        self.refractive_index * self.refractive_index
    }

    /// `n² − 1`, the constant weight of every `(ε − 1)` integral.
    pub fn eps_contrast(&self) -> f64 {
        self.eps_inside() - 1.0
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }

    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        match self.density {
            Some(rho) => Self::from_density(radius, self.refractive_index, rho),
            None => {
                let scale = (radius / self.radius).powi(3);
                Self::new(
                    radius,
                    self.refractive_index,
                    self.mass * scale,
                    self.moment_of_inertia * scale * (radius / self.radius).powi(2),
                )
            }
        }
    }
}

/// Mass and moment of inertia of a uniform sphere: `m = 4/3 π R³ ρ`, `I = 2/5 m R²`.
pub fn derive_inertia(radius: f64, density: Option<f64>) -> Result<(f64, f64)> {
    let rho = density.ok_or_else(|| Error::config("density is required to derive mass and inertia"))?;
    if !(rho > 0.0) || radius < 0.0 {
        return Err(Error::domain("density must be > 0 and radius ≥ 0"));
    }
    let mass = 4.0 / 3.0 * PI * radius.powi(3) * rho;
    Ok((mass, 0.4 * mass * radius * radius))
}

/// Permittivity profile of a sphere of radius `R` centered at `q`:
/// `n²` for `|r − q| ≤ R`, else `1`. The boundary is inside the sphere.
pub fn permittivity(r: &Vec3, q: &Vec3, sphere: &DielectricSphere) -> f64 {
    if (r - q).norm() <= sphere.radius {
        sphere.eps_inside()
    } else {
        1.0
    }
}

/// Gaussian traveling-wave beam in an effective cavity of length `L_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub wavelength: f64,
    pub wavenumber: f64,
    pub rayleigh_range: f64,
    pub cavity_length: f64,
    pub mean_photons: f64,
    pub power: Option<f64>,
}

impl BeamParams {
    pub fn new(wavelength: f64, rayleigh_range: f64, cavity_length: f64, mean_photons: f64) -> Result<Self> {
        let b = Self {
            wavelength,
            wavenumber: 2.0 * PI / wavelength,
            rayleigh_range,
            cavity_length,
            mean_photons,
            power: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) || !(self.wavenumber * self.rayleigh_range > 0.0) {
            return Err(Error::domain("beam needs λ₀ > 0 and k·z_R > 0"));
        }
        if !(self.cavity_length > 0.0) {
            return Err(Error::domain("cavity length must be > 0"));
        }
        if !(self.mean_photons >= 0.0) {
            return Err(Error::domain("mean photon number must be ≥ 0"));
        }
        Ok(())
    }

    /// Beam radius `w(z) = sqrt(2(z² + z_R²)/(k z_R))`.
    pub fn beam_radius(&self, z: f64) -> f64 {
        (2.0 * (z * z + self.rayleigh_range * self.rayleigh_range) / (self.wavenumber * self.rayleigh_range)).sqrt()
    }

    pub fn waist(&self) -> f64 {
        self.beam_radius(0.0)
    }

    /// Vacuum angular frequency, equal to `k` when `c = 1`.
    pub fn omega(&self) -> f64 {
        self.wavenumber
    }
}

/// Mean photon number of a circulating beam: `P (L_c / c) / (ħ ω)`.
///
/// Arguments in internal units (`c = ħ = 1`).
pub fn photon_number_from_power(power: f64, cavity_length: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::domain(format!("angular frequency must be > 0, got {omega}")));
    }
    if power < 0.0 || !(cavity_length > 0.0) {
        return Err(Error::domain("power must be ≥ 0 and cavity length > 0"));
    }
    Ok(power * cavity_length / omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn silica() -> DielectricSphere {
        DielectricSphere::from_density(0.1, 1.45, 1.0).unwrap()
    }

    #[test]
    fn permittivity_center_outside_boundary() {
        let s = silica();
        let q = Vec3::new(0.3, -0.2, 1.0);
        assert_eq!(permittivity(&q, &q, &s), 2.1025);
        let out = q + Vec3::new(0.0, 2.0 * s.radius, 0.0);
        assert_eq!(permittivity(&out, &q, &s), 1.0);
        let edge = Vec3::new(s.radius, 0.0, 0.0);
        assert_eq!(permittivity(&edge, &Vec3::zeros(), &s), 1.45 * 1.45);
    }

    #[test]
    fn photon_number_from_tweezer_power() {
        let u = UnitSystem::natural(1e-6);
        let p = u.to_internal(15e-3, Dimension::Power);
        let lc = u.to_internal(4e-3, Dimension::Length);
        let omega = u.to_internal(2.0 * PI * C_SI / 1064e-9, Dimension::AngularFrequency);
        let n = photon_number_from_power(p, lc, omega).unwrap();
        // direct SI evaluation P·L_c/(c·ħω)
        let oracle = 15e-3 * 4e-3 / (C_SI * HBAR_SI * 2.0 * PI * C_SI / 1064e-9);
        assert!((n - oracle).abs() / oracle < 1e-12);
        assert!((n / 1.0e6 - 1.0717).abs() < 1e-3, "n = {n}");
        assert_eq!(photon_number_from_power(0.0, lc, omega).unwrap(), 0.0);
        let n2 = photon_number_from_power(2.0 * p, lc, omega).unwrap();
        assert!((n2 / n - 2.0).abs() < 1e-14);
        assert!(photon_number_from_power(p, lc, 0.0).is_err());
    }

    #[test]
    fn inertia_from_density() {
        let u = UnitSystem::si();
        let (m, i) = derive_inertia(u.to_internal(100e-9, Dimension::Length), Some(2200.0)).unwrap();
        let oracle = 4.0 / 3.0 * PI * 1e-21 * 2200.0;
        assert!((m - oracle).abs() / oracle < 1e-14);
        assert!((m / 9.2153e-18 - 1.0).abs() < 1e-4);
        assert!((i / (m * 1e-14) - 0.4).abs() < 1e-12);
        assert_eq!(derive_inertia(0.0, Some(2200.0)).unwrap(), (0.0, 0.0));
        assert!(matches!(derive_inertia(1.0, None), Err(Error::Config(_))));
    }

    #[test]
    fn sphere_validation() {
        assert!(DielectricSphere::new(0.0, 1.45, 1.0, 1.0).is_err());
        assert!(DielectricSphere::new(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(DielectricSphere::new(1.0, 1.45, -1.0, 1.0).is_err());
        assert!(BeamParams::new(1.064, 0.53, 4000.0, -1.0).is_err());
    }

    #[test]
    fn beam_radius_positive() {
        let b = BeamParams::new(1.064, 0.53, 4000.0, 1e6).unwrap();
        for z in [-10.0, -0.5, 0.0, 0.3, 100.0] {
            assert!(b.beam_radius(z) > 0.0);
        }
        let w0 = b.waist();
        assert!((w0 * w0 - 2.0 * 0.53 / b.wavenumber).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn unit_round_trip(v in -1e30f64..1e30, scale in 1e-9f64..1e3) {
            let u = UnitSystem::natural(scale);
            for dim in [Dimension::Length, Dimension::Time, Dimension::Mass, Dimension::Energy,
                        Dimension::Momentum, Dimension::AngularMomentum, Dimension::Force,
                        Dimension::AngularFrequency, Dimension::Power, Dimension::Density,
                        Dimension::MomentOfInertia, Dimension::Velocity] {
                let back = u.to_si(u.to_internal(v, dim), dim);
                prop_assert!((back - v).abs() <= 1e-12 * v.abs());
            }
        }

        #[test]
        fn permittivity_piecewise_and_isotropic(x in -0.3f64..0.3, y in -0.3f64..0.3, z in -0.3f64..0.3,
                                               ax in -1f64..1.0, ay in -1f64..1.0, az in 0.1f64..1.0,
                                               angle in 0f64..6.28) {
            let s = silica();
            let q = Vec3::new(0.5, 0.1, -0.2);
            let d = Vec3::new(x, y, z);
            let e = permittivity(&(q + d), &q, &s);
            prop_assert!(e == 1.0 || e == s.eps_inside());
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(ax, ay, az)), angle);
            let d2 = rot * d;
            // rotations preserve the norm up to rounding; skip points on the boundary shell
            if (d.norm() - s.radius).abs() > 1e-12 {
                prop_assert_eq!(permittivity(&(q + d2), &q, &s), e);
            }
        }
    }
}
