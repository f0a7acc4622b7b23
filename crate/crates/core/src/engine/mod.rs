//! Density-matrix dynamics of the NV ⊗ dark-spin register.

pub mod cluster;
pub mod evolve;
pub mod hamiltonian;
pub mod ops;
pub mod state;

pub use cluster::{ClusterConfig, SpinSpec};
pub use evolve::{
    apply_dephasing_envelope, apply_pulse, evolve_lindblad, evolve_unitary, optical_pump,
    optical_pump_dissipators, optical_pump_with_step, propagator, selective_pulse, Dissipator, Species,
};
pub use hamiltonian::{
    build_dipolar_hamiltonian, excited_state_hamiltonian, ground_state_hamiltonian, lock_hamiltonian,
};
pub use ops::{OperatorMatrix, Register, C64};
pub use state::{measure_p0, DensityMatrix};
