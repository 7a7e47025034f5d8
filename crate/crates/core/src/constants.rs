//! Physical constants (exact SI values where defined).

use std::f64::consts::PI;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Elementary charge (C).
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Superconducting flux quantum Φ₀ = πħ/e (Wb).
pub const PHI0: f64 = PI * HBAR / E_CHARGE;
/// Flux scale converting dimensionless fields to webers: Φ₀/π = ħ/e.
pub const FLUX_SCALE: f64 = HBAR / E_CHARGE;
