//! Dynamical numerical linked-cluster expansion on the square lattice.
//!
//! Clusters are fixed polyominoes (edge-connected site sets), so every
//! embedding on the lattice is counted once per site and weights depend on
//! orientation as well as shape. Clusters related by a lattice symmetry that
//! leaves the interaction invariant share one time evolution.
//!
//! The expanded property of a cluster is the sum, over its site pairs at each
//! target displacement, of the connected correlator evaluated inside the
//! cluster. With this choice the weights of all multi-site clusters vanish
//! for non-interacting spins.

mod cache;
mod classes;
mod cluster;
mod euler;
mod expansion;

pub use cache::{cache_file_name, CACHE_VERSION};
pub use classes::{classify, compatible_symmetries, HamiltonianClass, LatticeSymmetry};
pub use cluster::{connected_subsets, enumerate_clusters, Cluster, ClusterKey, MAX_ORDER};
pub use euler::{euler_resum, Resummed};
pub use expansion::{
    capacity_warning, class_moments, cluster_properties, cluster_properties_batch, member_moments, nlce_batch, nlce_correlators,
    nlce_run, normalize_displacement, subtract_weights, ClusterTable, NlceNode, NlceOptions, NlceOutput, PropertyTable, WeightTable,
    DEFAULT_EULER_START, DEFAULT_ORDER, NLCE_COMFORT_ORDER, NLCE_MAX_ORDER,
};
