//! diraclab: a pseudospectral laboratory for two-dimensional Dirac-Hartree
//! dynamics with a periodic external potential, matrix-valued Wigner
//! phase-space analysis with band projectors, and a weighted-particle solver
//! for the limiting relativistic Vlasov transport equations.
//!
//! The crate is organized around the pipeline
//!
//! ```text
//! lattice/spectral -> symbol -> potential -> propagate -> wigner -> vlasov
//!                                                \________ experiments ____/
//! ```
//!
//! See the `examples/` directory for one runnable program per capability and
//! the `diraclab` binary for the batch experiment drivers.

pub mod lattice;
pub mod potential;
pub mod propagate;
pub mod spectral;
pub mod symbol;
pub mod vlasov;
pub mod wigner;

pub mod experiments;
