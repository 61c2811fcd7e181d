//! Finite-dimensional toolkit for completely positive maps.
//!
//! The crate represents states, observables (POVMs), channels and quantum
//! instruments uniformly as block-Choi CP maps, constructs their minimal
//! Kraus/Naimark dilations, computes Radon-Nikodym commutant operators,
//! decides extremality, and solves joint-map (compatibility) feasibility
//! problems.

pub mod matcore;
pub mod cpmap;
pub mod dilation;
pub mod radon_nikodym;
pub mod extremality;
pub mod joint;
pub mod verify;

pub use matcore::{C64, ComplexMatrix, Tolerances};
pub use cpmap::HybridCpMap;
