//! Time evolution of cluster states under piecewise-linear schedules.
//!
//! Each schedule segment is cut into a fixed number of steps; within a step
//! the Hamiltonian is frozen at its time average and the exact short-time
//! propagator is applied. Clusters are independent, so callers evolve many
//! of them concurrently over shared builders.

mod ed;
mod propagator;
mod state;

pub use ed::{ed_checkpoints, ed_full_lattice, ed_state, lattice_sites, ED_MAX_SITES};
pub use propagator::{apply_hamiltonian, energy, krylov_propagate, propagate, DenseExp, PropagatorOptions};
pub use state::{QuantumState, SzMoments};

use crate::error::{invalid, Result};
use crate::model::{HamiltonianBuilder, Schedule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub steps_per_segment: usize,
    pub propagator: PropagatorOptions,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { steps_per_segment: 5, propagator: PropagatorOptions::default() }
    }
}

/// Evolves `psi0` through the whole schedule.
pub fn evolve_piecewise(builder: &HamiltonianBuilder, schedule: &Schedule, psi0: &QuantumState, opts: &EvolveOptions) -> Result<QuantumState> {
    evolve_observed(builder, schedule, psi0, opts, &[], |_, _| Ok(()))
}

/// Evolves `psi0` and calls `observe(k, state)` when the evolution reaches
/// `checkpoints[k]`. Checkpoints must be sorted; each one splits the step it
/// falls into, so the final state depends on them only through that split.
pub fn evolve_observed<F>(
    builder: &HamiltonianBuilder,
    schedule: &Schedule,
    psi0: &QuantumState,
    opts: &EvolveOptions,
    checkpoints: &[f64],
    mut observe: F,
) -> Result<QuantumState>
where
    F: FnMut(usize, &QuantumState) -> Result<()>,
{
    if psi0.n_sites() != builder.n_sites() {
        return invalid(format!("state has {} sites, Hamiltonian {}", psi0.n_sites(), builder.n_sites()));
    }
    if (psi0.norm() - 1.0).abs() > state::NORM_TOL {
        return invalid(format!("initial state norm {} is not 1", psi0.norm()));
    }
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return invalid("checkpoint times must be sorted");
    }
    let steps = schedule.steps(opts.steps_per_segment, checkpoints)?;
    let eps = 1e-12 * schedule.duration();
    let mut psi = psi0.clone();
    let mut next = 0;
    let dense = builder.n_sites() <= opts.propagator.dense_max_sites;
    let mut cached: Option<((f64, f64), DenseExp)> = None;

    for step in &steps {
        while next < checkpoints.len() && checkpoints[next] <= step.t0 + eps {
            observe(next, &psi)?;
            next += 1;
        }
        let h = builder.at(step.omega, step.delta);
        let tau = 2.0 * std::f64::consts::PI * step.dt;
        if dense {
            let key = (step.omega, step.delta);
            if cached.as_ref().map(|(k, _)| *k != key).unwrap_or(true) {
                cached = Some((key, DenseExp::new(&h)?));
            }
            cached.as_ref().expect("just filled").1.apply(psi.amplitudes_mut(), tau);
        } else {
            krylov_propagate(&h, psi.amplitudes_mut(), tau, &opts.propagator)?;
        }
    }
    while next < checkpoints.len() {
        observe(next, &psi)?;
        next += 1;
    }
    Ok(psi)
}
