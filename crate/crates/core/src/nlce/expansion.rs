use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolve::{evolve_observed, EvolveOptions, QuantumState, SzMoments};
use crate::lattice::{Cutoff, InteractionModel, Spacing};
use crate::model::{HamiltonianBuilder, Schedule, ShiftMode};
use crate::observables::{CorrelationMap, Window};

use super::classes::{classify, compatible_symmetries, HamiltonianClass};
use super::cluster::{canonical_sites, connected_subsets, enumerate_clusters, key_of_canonical, Cluster, ClusterKey};
use super::euler::euler_resum;

/// Highest order accepted for a full expansion table.
pub const NLCE_MAX_ORDER: usize = 11;
/// Orders above this are slow enough to deserve a warning.
pub const NLCE_COMFORT_ORDER: usize = 9;
pub const DEFAULT_ORDER: usize = 9;
pub const DEFAULT_EULER_START: usize = 3;

pub fn capacity_warning(order: usize) -> Option<String> {
    (order > NLCE_COMFORT_ORDER).then(|| format!("order {order} expansion needs on the order of 1e5 cluster solves and several GB of memory"))
}

/// Clusters, Hamiltonian classes and sub-cluster multiplicities for one
/// lattice geometry and interaction range.
#[derive(Debug, Clone)]
pub struct ClusterTable {
    spacing: Spacing,
    cutoff: Cutoff,
    clusters: Vec<Cluster>,
    /// `order_start[k]` is the first cluster of order `k + 1`; one past the end last.
    order_start: Vec<usize>,
    index: HashMap<ClusterKey, usize>,
    classes: Vec<HamiltonianClass>,
    class_of: Vec<(u32, u32)>,
    /// Proper connected subsets of each cluster, as (cluster, multiplicity).
    subclusters: Vec<Vec<(u32, u32)>>,
}

impl ClusterTable {
    /// All fixed polyominoes through `max_order`.
    pub fn build(max_order: usize, spacing: &Spacing, cutoff: &Cutoff) -> Result<Self> {
        if max_order == 0 || max_order > NLCE_MAX_ORDER {
            return Err(Error::Capacity(format!("expansion order must lie in 1..={NLCE_MAX_ORDER}, got {max_order}")));
        }
        let clusters = enumerate_clusters(max_order)?.into_iter().flatten().collect();
        Self::from_clusters(clusters, spacing, cutoff)
    }

    /// Table over every distinct connected sub-shape of an arbitrary graph.
    pub fn for_graph(sites: &[(i32, i32)], spacing: &Spacing, cutoff: &Cutoff) -> Result<Self> {
        let graph = Cluster::new(sites.to_vec())?;
        let mut shapes: Vec<Cluster> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for mask in connected_subsets(&graph.adjacency()) {
            let sub = graph.subset(mask);
            if seen.insert(key_of_canonical(&sub)) {
                shapes.push(Cluster::from_canonical(sub));
            }
        }
        Self::from_clusters(shapes, spacing, cutoff)
    }

    /// Builds the table from a list closed under taking connected subsets.
    pub fn from_clusters(clusters: Vec<Cluster>, spacing: &Spacing, cutoff: &Cutoff) -> Result<Self> {
        Self::assemble(clusters, spacing, cutoff, None)
    }

    /// `classes`, when given, must refer to `clusters` sorted by order then key.
    pub(crate) fn assemble(mut clusters: Vec<Cluster>, spacing: &Spacing, cutoff: &Cutoff, classes: Option<Vec<HamiltonianClass>>) -> Result<Self> {
        let spacing = spacing.validated()?;
        if clusters.is_empty() {
            return invalid("cluster list is empty");
        }
        clusters.sort_by_key(|c| (c.order(), c.key()));
        clusters.dedup();
        let max_order = clusters.last().map(|c| c.order()).unwrap_or(0);
        let mut order_start = vec![0; max_order + 1];
        for k in 1..=max_order {
            order_start[k] = clusters.partition_point(|c| c.order() <= k);
        }
        let index: HashMap<ClusterKey, usize> = clusters.iter().enumerate().map(|(i, c)| (c.key(), i)).collect();

        let classes = match classes {
            Some(c) => c,
            None => {
                let symmetries = compatible_symmetries(&spacing, cutoff);
                let mut classes = Vec::new();
                for k in 0..max_order {
                    let (start, end) = (order_start[k], order_start[k + 1]);
                    for mut class in classify(&clusters[start..end], &symmetries) {
                        class.representative += start;
                        class.members.iter_mut().for_each(|m| *m += start);
                        classes.push(class);
                    }
                }
                classes
            }
        };
        let mut class_of = vec![(u32::MAX, 0u32); clusters.len()];
        for (ci, class) in classes.iter().enumerate() {
            if class.members.len() != class.symmetry_maps.len() || class.representative >= clusters.len() {
                return Err(Error::Consistency(format!("class {ci} is malformed")));
            }
            let rep_order = clusters[class.representative].order();
            for (pos, (&m, map)) in class.members.iter().zip(&class.symmetry_maps).enumerate() {
                let ok = m < clusters.len()
                    && class_of[m].0 == u32::MAX
                    && clusters[m].order() == rep_order
                    && map.len() == rep_order
                    && map.iter().all(|&x| (x as usize) < rep_order);
                if !ok {
                    return Err(Error::Consistency(format!("class {ci} has an invalid member entry")));
                }
                class_of[m] = (ci as u32, pos as u32);
            }
        }
        if class_of.iter().any(|c| c.0 == u32::MAX) {
            return Err(Error::Consistency("some clusters belong to no class".into()));
        }

        let subclusters = clusters
            .par_iter()
            .map(|c| {
                let full = (1u32 << c.order()) - 1;
                let mut keys: Vec<ClusterKey> =
                    connected_subsets(&c.adjacency()).into_iter().filter(|&m| m != full).map(|m| key_of_canonical(&c.subset(m))).collect();
                keys.sort_unstable();
                let mut out: Vec<(u32, u32)> = Vec::new();
                for k in keys {
                    let idx = *index.get(&k).ok_or_else(|| {
                        Error::Consistency(format!("sub-cluster {:?} of {:?} is missing from the table", Cluster::from_key(k).map(|c| c.sites().to_vec()), c.sites()))
                    })? as u32;
                    match out.last_mut() {
                        Some((last, n)) if *last == idx => *n += 1,
                        _ => out.push((idx, 1)),
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(ClusterTable { spacing, cutoff: *cutoff, clusters, order_start, index, classes, class_of, subclusters })
    }

    pub fn max_order(&self) -> usize {
        self.order_start.len() - 1
    }

    pub fn spacing(&self) -> &Spacing {
        &self.spacing
    }

    pub fn cutoff(&self) -> &Cutoff {
        &self.cutoff
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn clusters_of_order(&self, order: usize) -> &[Cluster] {
        if order == 0 || order > self.max_order() {
            return &[];
        }
        &self.clusters[self.order_start[order - 1]..self.order_start[order]]
    }

    pub fn classes(&self) -> &[HamiltonianClass] {
        &self.classes
    }

    pub fn find(&self, cluster: &Cluster) -> Option<usize> {
        self.index.get(&cluster.key()).copied()
    }

    /// `(cluster index, multiplicity)` of every proper connected subset.
    pub fn subclusters(&self, cluster: usize) -> &[(u32, u32)] {
        &self.subclusters[cluster]
    }

    /// Class index and member position of a cluster.
    pub fn class_of(&self, cluster: usize) -> (usize, usize) {
        let (c, p) = self.class_of[cluster];
        (c as usize, p as usize)
    }

    pub(crate) fn cache_parts(&self) -> (Vec<ClusterKey>, &[HamiltonianClass]) {
        (self.clusters.iter().map(|c| c.key()).collect(), &self.classes)
    }
}

/// Time-evolution settings of an expansion run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlceOptions {
    pub evolve: EvolveOptions,
    pub shift_mode: ShiftMode,
    pub euler_start: usize,
}

impl Default for NlceOptions {
    fn default() -> Self {
        NlceOptions { evolve: EvolveOptions::default(), shift_mode: ShiftMode::Bulk, euler_start: DEFAULT_EULER_START }
    }
}

/// One `(interaction, schedule)` point of a batch, observed at `times`
/// (the end of the schedule when empty).
#[derive(Debug, Clone)]
pub struct NlceNode {
    pub interaction: InteractionModel,
    pub schedule: Schedule,
    pub times: Vec<f64>,
}

impl NlceNode {
    pub fn new(interaction: InteractionModel, schedule: Schedule) -> Self {
        NlceNode { interaction, schedule, times: Vec::new() }
    }

    fn checkpoints(&self) -> Vec<f64> {
        if self.times.is_empty() {
            vec![self.schedule.duration()]
        } else {
            self.times.clone()
        }
    }
}

/// Normalises a displacement to `dx > 0`, or `dx == 0` and `dy >= 0`.
pub fn normalize_displacement(d: (i32, i32)) -> (i32, i32) {
    if d.0 < 0 || (d.0 == 0 && d.1 < 0) {
        (-d.0, -d.1)
    } else {
        d
    }
}

fn validate_targets(targets: &[(i32, i32)], max_order: usize) -> Result<Vec<(i32, i32)>> {
    if targets.is_empty() {
        return invalid("no target displacements");
    }
    let mut out = Vec::with_capacity(targets.len());
    for &t in targets {
        let n = normalize_displacement(t);
        if (n.0.abs() + n.1.abs()) as usize >= max_order {
            return invalid(format!("displacement {t:?} does not fit inside any cluster of order <= {max_order}"));
        }
        if !out.contains(&n) {
            out.push(n);
        }
    }
    Ok(out)
}

/// Evolves a class representative from all-down and returns its moments at each checkpoint.
pub fn class_moments(
    table: &ClusterTable,
    class: usize,
    interaction: &InteractionModel,
    schedule: &Schedule,
    times: &[f64],
    opts: &NlceOptions,
) -> Result<Vec<SzMoments>> {
    let rep = &table.clusters[table.classes[class].representative];
    let builder = HamiltonianBuilder::new(rep.sites(), &table.spacing, interaction, opts.shift_mode)?;
    moments_with(&builder, schedule, times, &opts.evolve)
}

fn moments_with(builder: &HamiltonianBuilder, schedule: &Schedule, times: &[f64], opts: &EvolveOptions) -> Result<Vec<SzMoments>> {
    let mut out = Vec::with_capacity(times.len());
    evolve_observed(builder, schedule, &QuantumState::all_down(builder.n_sites())?, opts, times, |_, psi| {
        out.push(psi.sz_moments());
        Ok(())
    })?;
    Ok(out)
}

/// Moments of a class member from those of its representative.
pub fn member_moments(rep: &SzMoments, map: &[u8]) -> SzMoments {
    let n = map.len();
    let sz = map.iter().map(|&m| rep.sz[m as usize]).collect();
    let mut szsz = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            szsz[i * n + j] = rep.szsz(map[i] as usize, map[j] as usize);
        }
    }
    SzMoments { n_sites: n, sz, szsz }
}

/// Slot 0 is `sum_i <S^z_i>`; slot `1 + k` is the sum of connected correlators
/// `4 <S^z_i S^z_j>_c` over site pairs of the cluster at displacement `targets[k]`.
fn property_vector(cluster: &Cluster, rep: &SzMoments, map: &[u8], targets: &[(i32, i32)], out: &mut [f64]) {
    let sites = cluster.sites();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, a) in sites.iter().enumerate() {
        let mi = map[i] as usize;
        out[0] += rep.sz[mi];
        for (j, b) in sites.iter().enumerate() {
            let d = (b.0 - a.0, b.1 - a.1);
            if let Some(k) = targets.iter().position(|&t| t == d) {
                let mj = map[j] as usize;
                out[1 + k] += 4.0 * (rep.szsz(mi, mj) - rep.sz[mi] * rep.sz[mj]);
            }
        }
    }
}

/// Cluster properties `P(c)` for one node, laid out cluster-major then time then slot.
#[derive(Debug, Clone)]
pub struct PropertyTable {
    pub targets: Vec<(i32, i32)>,
    pub times: Vec<f64>,
    values: Vec<f64>,
}

impl PropertyTable {
    pub fn n_slots(&self) -> usize {
        self.targets.len() + 1
    }

    fn stride(&self) -> usize {
        self.times.len() * self.n_slots()
    }

    pub fn cluster(&self, c: usize) -> &[f64] {
        let s = self.stride();
        &self.values[c * s..(c + 1) * s]
    }
}

/// Evolves every class of the table for each node.
pub fn cluster_properties_batch(table: &ClusterTable, nodes: &[NlceNode], targets: &[(i32, i32)], opts: &NlceOptions) -> Result<Vec<PropertyTable>> {
    let targets = validate_targets(targets, table.max_order())?;
    if nodes.is_empty() {
        return invalid("no expansion nodes");
    }
    for node in nodes {
        if node.interaction.cutoff != table.cutoff {
            return invalid("node interaction cutoff differs from the cluster table's");
        }
    }
    let checkpoints: Vec<Vec<f64>> = nodes.iter().map(|n| n.checkpoints()).collect();
    let slots = targets.len() + 1;
    let unit = nodes[0].interaction.with_c6(1.0);

    // per class: per node, per member, property vectors
    let per_class: Vec<Vec<Vec<f64>>> = (0..table.classes.len())
        .into_par_iter()
        .map(|ci| {
            let class = &table.classes[ci];
            let rep = &table.clusters[class.representative];
            let base = HamiltonianBuilder::new(rep.sites(), &table.spacing, &unit, opts.shift_mode)?;
            let mut by_node = Vec::with_capacity(nodes.len());
            for (node, times) in nodes.iter().zip(&checkpoints) {
                let builder = base.with_c6(node.interaction.c6);
                let moments = moments_with(&builder, &node.schedule, times, &opts.evolve)?;
                let mut buf = vec![0.0; class.members.len() * times.len() * slots];
                for (pos, (&m, map)) in class.members.iter().zip(&class.symmetry_maps).enumerate() {
                    for (t, mo) in moments.iter().enumerate() {
                        let off = (pos * times.len() + t) * slots;
                        property_vector(&table.clusters[m], mo, map, &targets, &mut buf[off..off + slots]);
                    }
                }
                by_node.push(buf);
            }
            Ok(by_node)
        })
        .collect::<Result<_>>()?;

    let mut out: Vec<PropertyTable> = checkpoints
        .iter()
        .map(|times| PropertyTable { targets: targets.clone(), times: times.clone(), values: vec![0.0; table.clusters.len() * times.len() * slots] })
        .collect();
    for (ci, by_node) in per_class.into_iter().enumerate() {
        let class = &table.classes[ci];
        for (node_out, buf) in out.iter_mut().zip(by_node) {
            let stride = node_out.stride();
            for (pos, &m) in class.members.iter().enumerate() {
                node_out.values[m * stride..(m + 1) * stride].copy_from_slice(&buf[pos * stride..(pos + 1) * stride]);
            }
        }
    }
    Ok(out)
}

pub fn cluster_properties(table: &ClusterTable, node: &NlceNode, targets: &[(i32, i32)], opts: &NlceOptions) -> Result<PropertyTable> {
    Ok(cluster_properties_batch(table, std::slice::from_ref(node), targets, opts)?.pop().expect("one node"))
}

/// Cluster weights `W(c) = P(c) - sum_{s proper connected subset} W(s)`,
/// same layout as [`PropertyTable`].
#[derive(Debug, Clone)]
pub struct WeightTable {
    pub targets: Vec<(i32, i32)>,
    pub times: Vec<f64>,
    values: Vec<f64>,
}

impl WeightTable {
    pub fn n_slots(&self) -> usize {
        self.targets.len() + 1
    }

    fn stride(&self) -> usize {
        self.times.len() * self.n_slots()
    }

    pub fn cluster(&self, c: usize) -> &[f64] {
        let s = self.stride();
        &self.values[c * s..(c + 1) * s]
    }

    /// Weight of cluster `c` at checkpoint `t` for `target` (`None` for `sum <S^z>`).
    pub fn weight(&self, c: usize, t: usize, target: Option<(i32, i32)>) -> Option<f64> {
        let slot = match target {
            None => 0,
            Some(d) => 1 + self.targets.iter().position(|&x| x == normalize_displacement(d))?,
        };
        Some(self.cluster(c)[t * self.n_slots() + slot])
    }

    /// `sum_{connected c subset G} W(c)` over every connected site subset of
    /// the graph `G`; for a finite graph this reproduces its own property.
    pub fn graph_sum(&self, table: &ClusterTable, sites: &[(i32, i32)]) -> Result<Vec<f64>> {
        let graph = Cluster::new(sites.to_vec())?;
        let mut acc = vec![0.0; self.stride()];
        for mask in connected_subsets(&graph.adjacency()) {
            let mut sub = graph.subset(mask);
            canonical_sites(&mut sub);
            let idx = *table
                .index
                .get(&key_of_canonical(&sub))
                .ok_or_else(|| Error::Consistency(format!("sub-cluster {sub:?} is missing from the table")))?;
            acc.iter_mut().zip(self.cluster(idx)).for_each(|(a, w)| *a += w);
        }
        Ok(acc)
    }
}

pub fn subtract_weights(table: &ClusterTable, props: &PropertyTable) -> Result<WeightTable> {
    let stride = props.stride();
    if props.values.len() != stride * table.clusters.len() {
        return Err(Error::Consistency("property table does not match the cluster table".into()));
    }
    let mut values = props.values.clone();
    for k in 1..=table.max_order() {
        let (start, end) = (table.order_start[k - 1], table.order_start[k]);
        let (lower, rest) = values.split_at_mut(start * stride);
        let current = &mut rest[..(end - start) * stride];
        current.par_chunks_mut(stride).enumerate().for_each(|(off, w)| {
            for &(s, mult) in &table.subclusters[start + off] {
                let s = s as usize;
                let m = mult as f64;
                w.iter_mut().zip(&lower[s * stride..(s + 1) * stride]).for_each(|(a, b)| *a -= m * b);
            }
        });
    }
    Ok(WeightTable { targets: props.targets.clone(), times: props.times.clone(), values })
}

/// Per-site lattice correlators from an expansion, by order and resummed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlceOutput {
    pub targets: Vec<(i32, i32)>,
    pub times: Vec<f64>,
    pub max_order: usize,
    pub euler_start: usize,
    /// `partial[(t * max_order + k) * slots + s]`: sum through order `k + 1`.
    partial: Vec<f64>,
    /// Fewer orders than the Euler start: resummed values are raw partial sums.
    pub resum_fallback: bool,
}

impl NlceOutput {
    fn from_weights(table: &ClusterTable, weights: &WeightTable, euler_start: usize) -> Self {
        let slots = weights.n_slots();
        let n_t = weights.times.len();
        let max_order = table.max_order();
        let mut partial = vec![0.0; n_t * max_order * slots];
        for k in 0..max_order {
            for c in table.order_start[k]..table.order_start[k + 1] {
                let w = weights.cluster(c);
                for t in 0..n_t {
                    for s in 0..slots {
                        partial[(t * max_order + k) * slots + s] += w[t * slots + s];
                    }
                }
            }
            if k > 0 {
                for t in 0..n_t {
                    for s in 0..slots {
                        partial[(t * max_order + k) * slots + s] += partial[(t * max_order + k - 1) * slots + s];
                    }
                }
            }
        }
        NlceOutput {
            targets: weights.targets.clone(),
            times: weights.times.clone(),
            max_order,
            euler_start,
            partial,
            resum_fallback: max_order < euler_start,
        }
    }

    fn slots(&self) -> usize {
        self.targets.len() + 1
    }

    fn slot(&self, target: (i32, i32)) -> Option<usize> {
        let d = normalize_displacement(target);
        self.targets.iter().position(|&x| x == d).map(|k| k + 1)
    }

    fn series(&self, t: usize, slot: usize) -> Vec<f64> {
        let s = self.slots();
        (0..self.max_order).map(|k| self.partial[(t * self.max_order + k) * s + slot]).collect()
    }

    /// `C(target)` at checkpoint `t` summed through `order`.
    pub fn partial_sum(&self, t: usize, order: usize, target: (i32, i32)) -> Option<f64> {
        if order == 0 || order > self.max_order || t >= self.times.len() {
            return None;
        }
        Some(self.series(t, self.slot(target)?)[order - 1])
    }

    pub fn resummed(&self, t: usize, target: (i32, i32)) -> Option<f64> {
        if t >= self.times.len() {
            return None;
        }
        Some(euler_resum(&self.series(t, self.slot(target)?), self.euler_start).value)
    }

    /// `<S^z>` per site through `order`, or resummed for `None`.
    pub fn mean_sz(&self, t: usize, order: Option<usize>) -> f64 {
        let series = self.series(t, 0);
        match order {
            Some(o) => series[o.clamp(1, self.max_order) - 1],
            None => euler_resum(&series, self.euler_start).value,
        }
    }

    /// Rydberg fraction `<S^z> + 1/2`.
    pub fn mean_occupation(&self, t: usize, order: Option<usize>) -> f64 {
        self.mean_sz(t, order) + 0.5
    }

    /// Correlators at checkpoint `t` as a map, through `order` or resummed for `None`.
    pub fn correlation_map(&self, t: usize, order: Option<usize>) -> CorrelationMap {
        let wx = self.targets.iter().map(|d| d.0.abs()).max().unwrap_or(0);
        let wy = self.targets.iter().map(|d| d.1.abs()).max().unwrap_or(0);
        let mut map = CorrelationMap::empty(Window::new(wx, wy));
        for &d in &self.targets {
            let v = match order {
                Some(o) => self.partial_sum(t, o.clamp(1, self.max_order), d),
                None => self.resummed(t, d),
            };
            if let Some(v) = v {
                map.set(d.0, d.1, v, 0.0, 0).expect("target inside its own window");
            }
        }
        map
    }
}

/// Expansion of every node of a batch sharing one cluster table.
pub fn nlce_batch(table: &ClusterTable, nodes: &[NlceNode], targets: &[(i32, i32)], opts: &NlceOptions) -> Result<Vec<NlceOutput>> {
    let props = cluster_properties_batch(table, nodes, targets, opts)?;
    props.iter().map(|p| Ok(NlceOutput::from_weights(table, &subtract_weights(table, p)?, opts.euler_start))).collect()
}

pub fn nlce_run(table: &ClusterTable, node: &NlceNode, targets: &[(i32, i32)], opts: &NlceOptions) -> Result<NlceOutput> {
    Ok(nlce_batch(table, std::slice::from_ref(node), targets, opts)?.pop().expect("one node"))
}

/// Builds the cluster table for `spacing` and the interaction's cutoff, then
/// expands the correlators at the end of `schedule`.
pub fn nlce_correlators(
    max_order: usize,
    spacing: &Spacing,
    interaction: &InteractionModel,
    schedule: &Schedule,
    targets: &[(i32, i32)],
    opts: &NlceOptions,
) -> Result<NlceOutput> {
    let table = ClusterTable::build(max_order, spacing, &interaction.cutoff)?;
    nlce_run(&table, &NlceNode::new(*interaction, schedule.clone()), targets, opts)
}
