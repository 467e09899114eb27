//! Effective Hubbard parameters of a gated semiconductor quantum-dot array.
//!
//! The crate models a square lattice of electrostatically defined quantum
//! dots with a separable cosine confinement potential. It computes, in order:
//!
//! 1. 1D/2D Bloch bands of the cosine potential ([`bands`]),
//! 2. exponentially localized Wannier orbitals per 1D band ([`wannier`]),
//! 3. gate-screened Coulomb matrix elements in the on-site Wannier basis
//!    ([`coulomb`]),
//! 4. exact many-body spectra of the single-site problem ([`ed`]),
//! 5. effective lattice-model parameters U, t, t′, V, μ_σ, E₀ and a
//!    temperature feasibility report ([`effective`]).
//!
//! [`pipeline`] chains the stages behind a content-addressed disk cache and
//! drives parameter sweeps; [`csvio`] fixes the on-disk CSV schemas. All
//! energies are meV, lengths nm, wavevectors nm⁻¹.

pub mod bands;
pub mod config;
pub mod coulomb;
pub mod csvio;
pub mod ed;
pub mod effective;
pub mod error;
pub mod pipeline;
pub mod wannier;

pub use config::{Config, DeviceConfig, NumericsConfig, Scales, TaskConfig};
pub use error::{Error, Result};
