//! Run configuration in SI units and its conversion to internal units.
//!
//! Keys carry their SI unit as a suffix. Unknown keys are rejected.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomphase::PathSpec;
use crate::modes::{gaussian_paraxial_mode, plane_wave_mode, standing_wave_mode, BoxDomain, SharedMode};
use crate::quadrature::QuadratureSpec;
use crate::units::{photon_number_from_power, BeamParams, DielectricSphere, Dimension, UnitSystem, DEFAULT_DENSITY_SI, K_B_SI};
use crate::vecmath::Vec3;

/// Parameters bundled with the binary for `paper-repro`.
pub const BUNDLED_PARAMS_JSON: &str = include_str!("../configs/paper-params.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsSection {
    /// Meters per internal length unit.
    pub length_scale_m: f64,
}

impl Default for UnitsSection {
    fn default() -> Self {
        Self { length_scale_m: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSection {
    pub radius_m: f64,
    pub refractive_index: f64,
    /// Used for mass and inertia when those are not given.
    #[serde(default)]
    pub density_kg_m3: Option<f64>,
    #[serde(default)]
    pub mass_kg: Option<f64>,
    #[serde(default)]
    pub moment_of_inertia_kg_m2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub wavelength_m: f64,
    pub rayleigh_range_m: f64,
    pub cavity_length_m: f64,
    /// Mean photon number; derived from `power_w` when absent.
    #[serde(default)]
    pub mean_photons: Option<f64>,
    #[serde(default)]
    pub power_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub origin_m: [f64; 3],
    pub lengths_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSection {
    /// Paraxial Gaussian mode of the `beam` section. A struct variant so
    /// that unknown keys are rejected.
    Gaussian {},
    PlaneWave {
        k_per_m: [f64; 3],
        polarization: [f64; 3],
        #[serde(default)]
        phase_rad: f64,
        #[serde(rename = "box")]
        domain: BoxSection,
    },
    StandingWave {
        k_per_m: [f64; 3],
        polarization: [f64; 3],
        #[serde(default)]
        phase_rad: f64,
        #[serde(rename = "box")]
        domain: BoxSection,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSection {
    /// Beam axis from `z_start_m` to `z_end_m`; defaults to `[−λ₀/2, +λ₀/2]`.
    Axis {
        #[serde(default)]
        z_start_m: Option<f64>,
        #[serde(default)]
        z_end_m: Option<f64>,
        #[serde(default = "default_panels")]
        panels: usize,
    },
    Line {
        from_m: [f64; 3],
        to_m: [f64; 3],
        #[serde(default = "default_panels")]
        panels: usize,
    },
    Polyline {
        vertices_m: Vec<[f64; 3]>,
        #[serde(default = "default_panels")]
        panels: usize,
    },
    Circle {
        center_m: [f64; 3],
        radius_m: f64,
        u: [f64; 3],
        v: [f64; 3],
        #[serde(default = "default_panels")]
        panels: usize,
    },
}

impl Default for ModeSection {
    fn default() -> Self {
        ModeSection::Gaussian {}
    }
}

fn default_panels() -> usize {
    16
}

impl Default for PathSection {
    fn default() -> Self {
        PathSection::Axis {
            z_start_m: None,
            z_end_m: None,
            panels: default_panels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Section {
    pub points: usize,
}

impl Default for Fig2Section {
    fn default() -> Self {
        Self { points: 101 }
    }
}

/// Thermal model for velocity estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    pub temperature_k: f64,
    /// Interval of the velocity phase estimate.
    pub interval_s: f64,
}

impl Default for ThermalSection {
    fn default() -> Self {
        Self {
            temperature_k: 300.0,
            interval_s: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ForceSection {
    /// Defaults to the thermal rms displacement along each trap axis.
    #[serde(default)]
    pub position_m: Option<[f64; 3]>,
    /// Defaults to the thermal rms speed along every axis.
    #[serde(default)]
    pub velocity_m_s: Option<[f64; 3]>,
    #[serde(default)]
    pub angular_velocity_rad_s: Option<[f64; 3]>,
    /// Defaults to `2·10⁻³ z_R`.
    #[serde(default)]
    pub fd_step_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub initial_position_m: [f64; 3],
    #[serde(default)]
    pub initial_velocity_m_s: [f64; 3],
    #[serde(default)]
    pub initial_angular_velocity_rad_s: [f64; 3],
    /// Defaults to `10⁻³` of the shortest harmonic period at the focus.
    #[serde(default)]
    pub dt_s: Option<f64>,
    pub steps: usize,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Drop `λ` and `γ`, keeping only the potential `ω(q)(n + ½)`.
    #[serde(default)]
    pub adiabatic: bool,
    #[serde(default = "QuadratureSpec::dynamics_default")]
    pub quadrature: QuadratureSpec,
    /// Per-step mechanical energy change allowed, relative to `|E_mech(0)|`.
    #[serde(default)]
    pub energy_budget_rel: Option<f64>,
}

fn default_sample_every() -> usize {
    100
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            initial_position_m: [20e-9, 10e-9, 40e-9],
            initial_velocity_m_s: [0.0; 3],
            initial_angular_velocity_rad_s: [0.0; 3],
            dt_s: None,
            steps: 100_000,
            sample_every: default_sample_every(),
            adiabatic: false,
            quadrature: QuadratureSpec::dynamics_default(),
            energy_budget_rel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesEvolveSection {
    pub modes: Vec<ModeSection>,
    /// `[re, im]` per mode.
    pub initial_amplitudes: Vec<[f64; 2]>,
    /// Sphere radius for this run; defaults to the `sphere` section.
    #[serde(default)]
    pub sphere_radius_m: Option<f64>,
    pub center_m: [f64; 3],
    pub direction: [f64; 3],
    pub amplitude_m: f64,
    /// Defaults to the drive-averaged splitting `ω₂ − ω₁` of the first two modes.
    #[serde(default)]
    pub drive_frequency_rad_s: Option<f64>,
    /// Extra detuning in units of the two-level Rabi frequency.
    #[serde(default)]
    pub detuning_rabi: f64,
    pub steps_per_period: usize,
    /// Run length in units of the predicted time to peak transfer.
    pub duration_peak_times: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "QuadratureSpec::dynamics_default")]
    pub quadrature: QuadratureSpec,
}

impl Default for ModesEvolveSection {
    fn default() -> Self {
        let domain = BoxSection {
            origin_m: [0.0; 3],
            lengths_m: [0.5e-6, 0.5e-6, 2e-6],
        };
        let kz = std::f64::consts::PI / 2e-6;
        let mode = |m: f64| ModeSection::StandingWave {
            k_per_m: [0.0, 0.0, m * kz],
            polarization: [1.0, 0.0, 0.0],
            phase_rad: 0.0,
            domain: domain.clone(),
        };
        Self {
            modes: vec![mode(1.0), mode(2.0)],
            initial_amplitudes: vec![[1.0, 0.0], [0.0, 0.0]],
            sphere_radius_m: None,
            center_m: [0.25e-6, 0.25e-6, 0.6e-6],
            direction: [0.0, 0.0, 1.0],
            amplitude_m: 0.05e-6,
            drive_frequency_rad_s: None,
            detuning_rabi: 0.0,
            steps_per_period: 20,
            duration_peak_times: 1.2,
            sample_every: default_sample_every(),
            quadrature: QuadratureSpec::dynamics_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub units: UnitsSection,
    pub sphere: SphereSection,
    pub beam: BeamSection,
    #[serde(default)]
    pub mode: ModeSection,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub path: PathSection,
    #[serde(default)]
    pub fig2: Fig2Section,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default)]
    pub force: ForceSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub modes_evolve: ModesEvolveSection,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Parse JSON; schema violations report line and column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config at line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn bundled() -> Self {
        Self::from_json_str(BUNDLED_PARAMS_JSON).expect("bundled parameters parse")
    }

    pub fn resolve(&self) -> Result<Resolved> {
        Resolved::new(self)
    }
}

/// Configuration converted to internal units.
#[derive(Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub units: UnitSystem,
    pub sphere: DielectricSphere,
    pub beam: BeamParams,
    pub n_photons: f64,
    /// Photon number implied by `power_w`, if given.
    pub n_photons_from_power: Option<f64>,
    pub mode: SharedMode,
    pub path: PathSpec,
    /// `k_B T` in internal energy units.
    pub thermal_energy: f64,
    /// Velocity-phase interval in internal time units.
    pub thermal_interval: f64,
}

fn v3(a: &[f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl Resolved {
    fn new(cfg: &RunConfig) -> Result<Self> {
        if !(cfg.units.length_scale_m > 0.0) {
            return Err(Error::config("units.length_scale_m must be > 0"));
        }
        let units = UnitSystem::natural(cfg.units.length_scale_m);
        let len = |m: f64| units.to_internal(m, Dimension::Length);

        let s = &cfg.sphere;
        let radius = len(s.radius_m);
        let sphere = match (s.mass_kg, s.moment_of_inertia_kg_m2) {
            (Some(m), Some(i)) => DielectricSphere::new(radius, s.refractive_index, units.to_internal(m, Dimension::Mass), units.to_internal(i, Dimension::MomentOfInertia))?,
            (None, None) => {
                let rho = units.to_internal(s.density_kg_m3.unwrap_or(DEFAULT_DENSITY_SI), Dimension::Density);
                DielectricSphere::from_density(radius, s.refractive_index, rho)?
            }
            _ => return Err(Error::config("sphere: give both mass_kg and moment_of_inertia_kg_m2, or neither")),
        };

        let b = &cfg.beam;
        let mut beam = BeamParams::new(len(b.wavelength_m), len(b.rayleigh_range_m), len(b.cavity_length_m), b.mean_photons.unwrap_or(1.0))?;
        let n_from_power = match b.power_w {
            Some(p) => Some(photon_number_from_power(units.to_internal(p, Dimension::Power), beam.cavity_length, beam.omega())?),
            None => None,
        };
        let n_photons = match (b.mean_photons, n_from_power) {
            (Some(n), _) => n,
            (None, Some(n)) => n,
            (None, None) => return Err(Error::config("beam: give mean_photons or power_w")),
        };
        beam.mean_photons = n_photons;

        let mode = build_mode(&cfg.mode, &units, &beam)?;
        let path = build_path(&cfg.path, &units, &beam)?;
        Ok(Self {
            config: cfg.clone(),
            units,
            sphere,
            beam,
            n_photons,
            n_photons_from_power: n_from_power,
            mode,
            path,
            thermal_energy: units.thermal_energy(cfg.thermal.temperature_k),
            thermal_interval: units.to_internal(cfg.thermal.interval_s, Dimension::Time),
        })
    }

    /// Thermal rms speed `sqrt(k_B T / m)` per axis.
    pub fn thermal_speed(&self) -> f64 {
        (self.thermal_energy / self.sphere.mass).sqrt()
    }

    /// Thermal rms angular speed `sqrt(k_B T / I)` per axis.
    pub fn thermal_angular_speed(&self) -> f64 {
        (self.thermal_energy / self.sphere.moment_of_inertia).sqrt()
    }

    pub fn vec_len(&self, a: &[f64; 3]) -> Vec3 {
        self.units.vec_to_internal(&v3(a), Dimension::Length)
    }

    pub fn vec_velocity(&self, a: &[f64; 3]) -> Vec3 {
        self.units.vec_to_internal(&v3(a), Dimension::Velocity)
    }

    pub fn vec_angular(&self, a: &[f64; 3]) -> Vec3 {
        self.units.vec_to_internal(&v3(a), Dimension::AngularFrequency)
    }

    pub fn time(&self, seconds: f64) -> f64 {
        self.units.to_internal(seconds, Dimension::Time)
    }

    pub fn build_mode(&self, section: &ModeSection) -> Result<SharedMode> {
        build_mode(section, &self.units, &self.beam)
    }

    /// `k_B` in internal units per kelvin, for reports.
    pub fn boltzmann(&self) -> f64 {
        self.units.to_internal(K_B_SI, Dimension::Energy)
    }
}

fn build_box(b: &BoxSection, units: &UnitSystem) -> BoxDomain {
    BoxDomain::new(units.vec_to_internal(&v3(&b.origin_m), Dimension::Length), units.vec_to_internal(&v3(&b.lengths_m), Dimension::Length))
}

fn build_mode(section: &ModeSection, units: &UnitSystem, beam: &BeamParams) -> Result<SharedMode> {
    // wavenumbers scale inversely to lengths
    let k_internal = |k: &[f64; 3]| v3(k) * units.length_scale;
    Ok(match section {
        ModeSection::Gaussian {} => Arc::new(gaussian_paraxial_mode(beam)),
        ModeSection::PlaneWave { k_per_m, polarization, phase_rad, domain } => Arc::new(plane_wave_mode(k_internal(k_per_m), v3(polarization), *phase_rad, build_box(domain, units))?),
        ModeSection::StandingWave { k_per_m, polarization, phase_rad, domain } => Arc::new(standing_wave_mode(k_internal(k_per_m), v3(polarization), *phase_rad, build_box(domain, units))?),
    })
}

fn build_path(section: &PathSection, units: &UnitSystem, beam: &BeamParams) -> Result<PathSpec> {
    let len = |a: &[f64; 3]| units.vec_to_internal(&v3(a), Dimension::Length);
    let check = |panels: usize| if panels == 0 { Err(Error::config("path.panels must be ≥ 1")) } else { Ok(panels) };
    Ok(match section {
        PathSection::Axis { z_start_m, z_end_m, panels } => {
            let zi = z_start_m.map(|z| units.to_internal(z, Dimension::Length)).unwrap_or(-0.5 * beam.wavelength);
            let zf = z_end_m.map(|z| units.to_internal(z, Dimension::Length)).unwrap_or(0.5 * beam.wavelength);
            PathSpec::axis(zi, zf, check(*panels)?)
        }
        PathSection::Line { from_m, to_m, panels } => PathSpec::line(len(from_m), len(to_m), check(*panels)?),
        PathSection::Polyline { vertices_m, panels } => {
            if vertices_m.len() < 2 {
                return Err(Error::config("path.vertices_m needs at least two points"));
            }
            PathSpec::polyline(vertices_m.iter().map(len).collect(), check(*panels)?)
        }
        PathSection::Circle { center_m, radius_m, u, v, panels } => {
            PathSpec::circle(len(center_m), units.to_internal(*radius_m, Dimension::Length), v3(u), v3(v), check(*panels)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_parameters_resolve() {
        let r = RunConfig::bundled().resolve().unwrap();
        assert!((r.beam.wavelength - 1.064).abs() < 1e-12);
        assert!((r.sphere.radius - 0.1).abs() < 1e-12);
        assert_eq!(r.n_photons, 1e6);
        let from_power = r.n_photons_from_power.unwrap();
        assert!((from_power / 1e6 - 1.07).abs() < 0.01, "{from_power}");
        assert!((r.path.start().z + 0.532).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = "{\n  \"sphere\": {\"radius_m\": 1e-7, \"refractive_index\": 1.45},\n  \"beam\": {\"wavelength_m\": 1e-6, \"rayleigh_range_m\": 5e-7, \"cavity_length_m\": 4e-3, \"mean_photons\": 1},\n  \"sead\": 3\n}";
        let err = RunConfig::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("sead"), "{err}");
        let nested = text.replace("\"sead\": 3", "\"mode\": {\"kind\": \"gaussian\", \"waist\": 1}");
        assert!(RunConfig::from_json_str(&nested).is_err());
    }

    #[test]
    fn round_trip_preserves_config() {
        let cfg = RunConfig::bundled();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), cfg);
    }

    #[test]
    fn mass_without_inertia_is_an_error() {
        let mut cfg = RunConfig::bundled();
        cfg.sphere.mass_kg = Some(1e-18);
        assert!(cfg.resolve().is_err());
    }
}
