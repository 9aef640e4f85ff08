//! decolab: quantum vs classical intrinsic-decoherence dynamics in smooth
//! two-degree-of-freedom Hamiltonian systems.
//!
//! The library computes the linear entropy of a reduced subsystem three ways:
//! exact quantum split-operator propagation, classical backward-trajectory
//! Monte Carlo (with histogram and tangent-matrix variants), and second-order
//! perturbative decoherence rates — plus scenario presets and file outputs
//! that tie the engines together for side-by-side comparison.

pub mod centropy;
pub mod classical;
pub mod experiments;
pub mod model;
pub mod numerics;
pub mod perturbation;
pub mod quantum;

pub use model::{
    CouplingSpec, FunctionSpec, GaussianState, ModelError, PhasePoint, ProductState, SystemSpec,
};
