use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{InteractionModel, Spacing};

/// Largest cluster whose 2^n state vector is handled.
pub const MAX_SITES: usize = 24;

/// How the site shift `I_i = sum_j V_ij / 2` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// Infinite-lattice value within the interaction cutoff, identical for all sites.
    #[default]
    Bulk,
    /// Sum restricted to partners inside the cluster.
    ClusterRestricted,
}

/// Parameter-independent part of a cluster Hamiltonian.
///
/// The diagonal is stored per basis configuration with unit `c6`, together
/// with the total magnetisation, so that `(c6, omega, delta)` can be changed
/// without touching the pair sums. Bit `i` of a configuration is 1 when site
/// `i` is in the Rydberg state (`s_i = +1/2`).
#[derive(Debug, Clone)]
pub struct HamiltonianBuilder {
    n_sites: usize,
    c6: f64,
    shift_mode: ShiftMode,
    unit_site_shifts: Vec<f64>,
    unit_interaction: Vec<f64>,
    magnetization: Vec<f64>,
}

impl HamiltonianBuilder {
    pub fn new(sites: &[(i32, i32)], spacing: &Spacing, interaction: &InteractionModel, shift_mode: ShiftMode) -> Result<Self> {
        let n = sites.len();
        if n == 0 {
            return invalid("cluster has no sites");
        }
        if n > MAX_SITES {
            return Err(Error::Capacity(format!("{n} sites exceed the {MAX_SITES}-site state-vector limit")));
        }
        let mut seen = HashSet::with_capacity(n);
        for s in sites {
            if !seen.insert(*s) {
                return invalid(format!("duplicate site {s:?}"));
            }
        }

        let mut pairs = Vec::new();
        let mut unit_site_shifts = vec![0.0; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = interaction.unit_coupling(spacing, sites[j].0 - sites[i].0, sites[j].1 - sites[i].1);
                if v != 0.0 {
                    pairs.push((i, j, v));
                    unit_site_shifts[i] += v / 2.0;
                    unit_site_shifts[j] += v / 2.0;
                }
            }
        }
        if shift_mode == ShiftMode::Bulk {
            let bulk = interaction.with_c6(1.0).bulk_shift(spacing);
            unit_site_shifts.iter_mut().for_each(|s| *s = bulk);
        }

        let dim = 1usize << n;
        let mut unit_interaction = vec![0.0; dim];
        let mut magnetization = vec![0.0; dim];
        for b in 0..dim {
            let spin = |i: usize| if b >> i & 1 == 1 { 0.5 } else { -0.5 };
            let mut e = 0.0;
            let mut m = 0.0;
            for (i, &shift) in unit_site_shifts.iter().enumerate() {
                e += shift * spin(i);
                m += spin(i);
            }
            for &(i, j, v) in &pairs {
                e += v * spin(i) * spin(j);
            }
            unit_interaction[b] = e;
            magnetization[b] = m;
        }

        Ok(HamiltonianBuilder { n_sites: n, c6: interaction.c6, shift_mode, unit_site_shifts, unit_interaction, magnetization })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn c6(&self) -> f64 {
        self.c6
    }

    pub fn shift_mode(&self) -> ShiftMode {
        self.shift_mode
    }

    pub fn with_c6(&self, c6: f64) -> Self {
        HamiltonianBuilder { c6, ..self.clone() }
    }

    pub fn site_shifts(&self) -> Vec<f64> {
        self.unit_site_shifts.iter().map(|s| s * self.c6).collect()
    }

    /// Hamiltonian at fixed controls.
    pub fn at(&self, omega: f64, delta: f64) -> ClusterHamiltonian {
        let c6 = self.c6;
        let diagonal = self
            .unit_interaction
            .iter()
            .zip(&self.magnetization)
            .map(|(e, m)| c6 * e - delta * m)
            .collect();
        ClusterHamiltonian { n_sites: self.n_sites, diagonal, omega, site_shifts: self.site_shifts() }
    }
}

/// `H = omega sum_i S^x_i + sum_i (I_i - delta) S^z_i + sum_{i<j} V_ij S^z_i S^z_j`
/// in the S^z product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterHamiltonian {
    pub n_sites: usize,
    /// Diagonal energies indexed by basis configuration.
    pub diagonal: Vec<f64>,
    /// Uniform transverse field; single flips couple with amplitude `omega / 2`.
    pub omega: f64,
    pub site_shifts: Vec<f64>,
}

impl ClusterHamiltonian {
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// Dense real matrix; only for small clusters.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.n_sites > 12 {
            return Err(Error::Capacity(format!("dense matrix for {} sites", self.n_sites)));
        }
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            m[(b, b)] = self.diagonal[b];
            for i in 0..self.n_sites {
                m[(b ^ (1 << i), b)] += 0.5 * self.omega;
            }
        }
        Ok(m)
    }
}

/// Assembles the Hamiltonian of a cluster at fixed controls.
pub fn build_hamiltonian(
    sites: &[(i32, i32)],
    spacing: &Spacing,
    interaction: &InteractionModel,
    omega: f64,
    delta: f64,
    shift_mode: ShiftMode,
) -> Result<ClusterHamiltonian> {
    Ok(HamiltonianBuilder::new(sites, spacing, interaction, shift_mode)?.at(omega, delta))
}
