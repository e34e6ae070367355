//! Optomechanics of a moving dielectric sphere in radiation fields.
//!
//! The crate evaluates the velocity-dependent couplings between a rigid
//! dielectric sphere and electromagnetic modes, the geometric phase the
//! sphere picks up when it is transported through a traveling-wave mode,
//! the resulting nonadiabatic forces, and integrates both the classical
//! single-mode dynamics and the rotating-wave coupled-mode equations.
//!
//! Internally everything is expressed in natural units (`c = ħ = ε₀ = 1`)
//! with a configurable length unit, see [`units::UnitSystem`]. Couplings are
//! stored per photon: `λ` as a wavenumber (momentum / ħ) and `γ` as a pure
//! number (angular momentum / ħ).

pub mod config;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod geomphase;
pub mod modes;
pub mod output;
pub mod quadrature;
pub mod repro;
pub mod units;
pub mod vecmath;

pub use error::{Error, Result};
