//! Quasiclassical, non-Markovian model of an autonomous superconducting heat
//! engine: a flux-tunable working resonator coupled to two filtered thermal
//! baths and, through a SQUID, to a low-frequency mechanical-like mode.
//!
//! The crate is organised by stage of the pipeline:
//!
//! - [`circuit`]: elementary parameters, flux minimum, derived parameters.
//! - [`spectral`]: filter responses, memory kernel, noise spectra, static Green's function.
//! - [`greens`]: sideband (Floquet) Green's function coefficients under a sinusoidal drive.
//! - [`slowdyn`]: noise pressure, total dissipation, stationary points, amplitude/phase evolution, output power.
//! - [`thermo`]: heat flow, efficiencies and the time-resolved Otto cycle.
//! - [`oracle`]: time-domain stochastic simulation used to cross-check the frequency-domain results.
//! - [`sweep`]: parameter sweeps with incremental, resumable persistence.

pub mod circuit;
pub mod constants;
pub mod error;
pub mod greens;
pub mod oracle;
pub mod quadrature;
pub mod slowdyn;
pub mod spectral;
pub mod sweep;
pub mod thermo;

pub use circuit::{CircuitParameters, DerivedParameters, FilterDamping, ParameterFile};
pub use error::{Error, Result};
pub use greens::{DriveState, SidebandGreens};
pub use spectral::{Filter, FrequencyGrid, PsdModel};
