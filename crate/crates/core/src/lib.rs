//! Closed-universe simulator: a qubit, a spin bath and a double-well
//! observer evolved as one pure state with a matrix-free Krylov propagator.

pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod observables;
pub mod par;
pub mod propagator;
pub mod tensorspace;
pub mod verification;

pub use error::{Error, Result};
pub use experiments::{run_full_model, run_protocol, ExperimentRecord, Protocol, ProtocolKind};
pub use hamiltonian::{build_total_hamiltonian, HamiltonianSet, PhysicalParams, QeAxis, TermMask};
pub use propagator::{evolve, PropagatorConfig};
pub use tensorspace::{partial_trace, DensityMatrix, OperatorSum, SpaceLayout, StateVector, C64};
