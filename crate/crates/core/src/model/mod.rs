//! Control schedules and cluster Hamiltonians.

mod hamiltonian;
mod schedule;

pub use hamiltonian::{build_hamiltonian, ClusterHamiltonian, HamiltonianBuilder, ShiftMode, MAX_SITES};
pub use schedule::{ramp_schedule, sudden_schedule, Schedule, Segment, Step};
