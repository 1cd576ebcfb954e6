use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::lattice::{Cutoff, InteractionModel, Spacing};

use super::cluster::{canonical_sites, key_of_canonical, Cluster, ClusterKey};

/// Point-group element `(x, y) -> (a x + b y, c x + d y)` of the square lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSymmetry {
    a: i32,
    b: i32,
    c: i32,
    d: i32,
}

impl LatticeSymmetry {
    pub const ALL: [LatticeSymmetry; 8] = [
        LatticeSymmetry { a: 1, b: 0, c: 0, d: 1 },
        LatticeSymmetry { a: 0, b: -1, c: 1, d: 0 },
        LatticeSymmetry { a: -1, b: 0, c: 0, d: -1 },
        LatticeSymmetry { a: 0, b: 1, c: -1, d: 0 },
        LatticeSymmetry { a: -1, b: 0, c: 0, d: 1 },
        LatticeSymmetry { a: 1, b: 0, c: 0, d: -1 },
        LatticeSymmetry { a: 0, b: 1, c: 1, d: 0 },
        LatticeSymmetry { a: 0, b: -1, c: -1, d: 0 },
    ];

    pub fn apply(&self, p: (i32, i32)) -> (i32, i32) {
        (self.a * p.0 + self.b * p.1, self.c * p.0 + self.d * p.1)
    }
}

/// Elements of the square point group that leave every pair coupling of the
/// cut-off interaction unchanged on the given lattice.
pub fn compatible_symmetries(spacing: &Spacing, cutoff: &Cutoff) -> Vec<LatticeSymmetry> {
    let model = InteractionModel { c6: 1.0, cutoff: *cutoff };
    let reach = cutoff.reach(spacing) + 1;
    LatticeSymmetry::ALL
        .into_iter()
        .filter(|g| {
            (-reach..=reach).all(|dy| {
                (-reach..=reach).all(|dx| {
                    let (tx, ty) = g.apply((dx, dy));
                    let v = model.unit_coupling(spacing, dx, dy);
                    let w = model.unit_coupling(spacing, tx, ty);
                    (v - w).abs() <= 1e-12 * v.abs().max(w.abs())
                })
            })
        })
        .collect()
}

/// Clusters whose Hamiltonians coincide under a lattice symmetry.
///
/// `symmetry_maps[k][i]` is the representative site that member `k`'s site
/// `i` maps to, so member moments are `rep(map[i], map[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianClass {
    /// Index into the cluster list the class was built from.
    pub representative: usize,
    pub members: Vec<usize>,
    pub symmetry_maps: Vec<Vec<u8>>,
}

/// Canonical image of `cluster` under `g` and the site map cluster -> image.
fn image(cluster: &Cluster, g: &LatticeSymmetry) -> (ClusterKey, Vec<(i32, i32)>) {
    let mut moved: Vec<(i32, i32)> = cluster.sites().iter().map(|&p| g.apply(p)).collect();
    let raw = moved.clone();
    canonical_sites(&mut moved);
    let shift = (raw.iter().map(|p| p.0).min().unwrap_or(0), raw.iter().map(|p| p.1).min().unwrap_or(0));
    let mapped = raw.iter().map(|p| (p.0 - shift.0, p.1 - shift.1)).collect();
    (key_of_canonical(&moved), mapped)
}

/// Partitions `clusters` into Hamiltonian classes under `symmetries`. Every
/// symmetric image of a cluster must itself be in the list.
pub fn classify(clusters: &[Cluster], symmetries: &[LatticeSymmetry]) -> Vec<HamiltonianClass> {
    let index: HashMap<ClusterKey, usize> = clusters.iter().enumerate().map(|(i, c)| (c.key(), i)).collect();
    let mut by_rep: HashMap<usize, HamiltonianClass> = HashMap::new();
    let mut order = Vec::new();
    for (ci, c) in clusters.iter().enumerate() {
        let best = symmetries
            .iter()
            .map(|g| image(c, g))
            .filter(|(k, _)| index.contains_key(k))
            .min_by_key(|(k, _)| *k);
        let (key, mapped) = best.unwrap_or_else(|| (c.key(), c.sites().to_vec()));
        let rep = index[&key];
        let rep_cluster = &clusters[rep];
        let map: Vec<u8> = mapped.iter().map(|&p| rep_cluster.position(p).expect("image lies on representative") as u8).collect();
        let class = by_rep.entry(rep).or_insert_with(|| {
            order.push(rep);
            HamiltonianClass { representative: rep, members: Vec::new(), symmetry_maps: Vec::new() }
        });
        class.members.push(ci);
        class.symmetry_maps.push(map);
    }
    order.into_iter().map(|r| by_rep.remove(&r).expect("registered")).collect()
}
