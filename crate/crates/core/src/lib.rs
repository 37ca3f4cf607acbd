//! Solver library for a two-dimensional conserved phase field coupled to
//! incompressible flow and a heat balance. The composition mixes through a
//! fourth-order interfacial flux, the flow feels capillary and vortical
//! stresses from the mixture, and local spinodal stability is set by the
//! effective coefficient `u = theta + |curl v|^2`, so stirring can hold an
//! otherwise unstable mixture uniform.
//!
//! Module map:
//! * [`grid`]: collocated fields and the mimetic finite-difference calculus;
//! * [`material`]: potentials, mobility, viscosity, chemical potential;
//! * [`dynamics`]: time stepping (semi-implicit composition step, projected
//!   flow step, explicit heat step) and the simulation driver;
//! * [`thermo`]: energy/entropy bookkeeping and the per-step audit;
//! * [`verify`]: dispersion, threshold, stirring, and identity checks;
//! * [`config`], [`snapshot`], [`diagnostics`]: run configuration, binary
//!   field snapshots, CSV diagnostics.

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod material;
pub mod snapshot;
pub mod thermo;
pub mod verify;

pub use error::Error;
