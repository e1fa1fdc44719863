//! Eigenvalue theory of the truncated-unitary (Poincaré disk) and spherical
//! random matrix ensembles.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense complex matrices, Householder QR, Hessenberg reduction,
//!   shifted-QR Schur decomposition and Haar/Ginibre samplers.
//! * [`geometry`]: the pseudosphere, its stereographic projection to the disk
//!   and the Coulomb potentials living on it.
//! * [`ensembles`]: samplers and (unnormalised, log-space) densities for the
//!   truncated-unitary, spherical and Jacobi ensembles.
//! * [`kernel`]: lowest Landau level states, the determinantal correlation
//!   kernel and the radial laws derived from it.
//! * [`verify`]: the determinant factorisations and recursive integral
//!   reductions that integrate out the strictly upper Schur entries.
//! * [`plasma`]: Metropolis–Hastings sampling of the one-component plasma.
//! * [`stats`]: KS / chi-square tests and special functions.

pub mod ensembles;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod plasma;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod verify;

pub use num_complex::Complex64;
pub use rng::RngState;
