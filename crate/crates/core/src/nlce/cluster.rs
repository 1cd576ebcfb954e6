use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest cluster size handled by the enumeration.
pub const MAX_ORDER: usize = 12;

/// Packed site set of a canonical cluster: occupancy bitmask of the bounding
/// box (bit `x + width * y`) in the low 48 bits, width above.
pub type ClusterKey = u64;

/// Edge-connected set of square-lattice sites (a fixed polyomino), translated
/// so that the smallest `x` and `y` are 0. Sites are stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<(i32, i32)>", into = "Vec<(i32, i32)>")]
pub struct Cluster {
    sites: Vec<(i32, i32)>,
}

impl TryFrom<Vec<(i32, i32)>> for Cluster {
    type Error = Error;

    fn try_from(sites: Vec<(i32, i32)>) -> Result<Self> {
        Cluster::new(sites)
    }
}

impl From<Cluster> for Vec<(i32, i32)> {
    fn from(c: Cluster) -> Self {
        c.sites
    }
}

/// Translates to the origin and sorts row-major.
pub(crate) fn canonical_sites(sites: &mut [(i32, i32)]) {
    let mx = sites.iter().map(|s| s.0).min().unwrap_or(0);
    let my = sites.iter().map(|s| s.1).min().unwrap_or(0);
    for s in sites.iter_mut() {
        s.0 -= mx;
        s.1 -= my;
    }
    sites.sort_unstable_by_key(|&(x, y)| (y, x));
}

/// Key of a site set that is already canonical.
pub(crate) fn key_of_canonical(sites: &[(i32, i32)]) -> ClusterKey {
    let w = sites.iter().map(|s| s.0).max().unwrap_or(0) as u64 + 1;
    let mut mask = 0u64;
    for &(x, y) in sites {
        mask |= 1 << (x as u64 + w * y as u64);
    }
    mask | (w << 48)
}

/// Edge adjacency of a site list as bitmasks.
pub(crate) fn adjacency(sites: &[(i32, i32)]) -> Vec<u32> {
    let mut adj = vec![0u32; sites.len()];
    for (i, a) in sites.iter().enumerate() {
        for (j, b) in sites.iter().enumerate() {
            if (a.0 - b.0).abs() + (a.1 - b.1).abs() == 1 {
                adj[i] |= 1 << j;
            }
        }
    }
    adj
}

fn is_connected(adj: &[u32], set: u32) -> bool {
    if set == 0 {
        return false;
    }
    let mut reached = 1u32 << set.trailing_zeros();
    loop {
        let mut next = reached;
        let mut bits = reached;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            next |= adj[i] & set;
        }
        if next == reached {
            return reached == set;
        }
        reached = next;
    }
}

impl Cluster {
    /// Validates distinctness and edge connectivity, then canonicalises.
    pub fn new(mut sites: Vec<(i32, i32)>) -> Result<Self> {
        if sites.is_empty() {
            return invalid("cluster has no sites");
        }
        if sites.len() > 32 {
            return Err(Error::Capacity(format!("{} sites exceed the 32-site cluster limit", sites.len())));
        }
        canonical_sites(&mut sites);
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return invalid("cluster sites must be distinct");
        }
        let full = if sites.len() == 32 { u32::MAX } else { (1u32 << sites.len()) - 1 };
        if !is_connected(&adjacency(&sites), full) {
            return invalid("cluster is not edge-connected");
        }
        Ok(Cluster { sites })
    }

    pub(crate) fn from_canonical(sites: Vec<(i32, i32)>) -> Self {
        Cluster { sites }
    }

    pub fn sites(&self) -> &[(i32, i32)] {
        &self.sites
    }

    pub fn order(&self) -> usize {
        self.sites.len()
    }

    pub fn width(&self) -> i32 {
        self.sites.iter().map(|s| s.0).max().unwrap_or(0) + 1
    }

    pub fn height(&self) -> i32 {
        self.sites.last().map(|s| s.1).unwrap_or(0) + 1
    }

    pub fn key(&self) -> ClusterKey {
        key_of_canonical(&self.sites)
    }

    pub fn from_key(key: ClusterKey) -> Result<Self> {
        let w = (key >> 48) as i32;
        if w == 0 {
            return Err(Error::Parse(format!("cluster key {key:#x} has zero width")));
        }
        let mask = key & ((1 << 48) - 1);
        let sites: Vec<(i32, i32)> = (0..48).filter(|b| mask >> b & 1 == 1).map(|b| (b % w, b / w)).collect();
        let c = Cluster::new(sites)?;
        if c.key() != key {
            return Err(Error::Parse(format!("cluster key {key:#x} is not canonical")));
        }
        Ok(c)
    }

    /// Index of the site at `pos`, if present.
    pub fn position(&self, pos: (i32, i32)) -> Option<usize> {
        self.sites.binary_search_by_key(&(pos.1, pos.0), |&(x, y)| (y, x)).ok()
    }

    pub(crate) fn adjacency(&self) -> Vec<u32> {
        adjacency(&self.sites)
    }

    /// Sites selected by `mask`, canonicalised.
    pub(crate) fn subset(&self, mask: u32) -> Vec<(i32, i32)> {
        let mut out: Vec<(i32, i32)> = (0..self.order()).filter(|i| mask >> i & 1 == 1).map(|i| self.sites[i]).collect();
        canonical_sites(&mut out);
        out
    }
}

/// All fixed polyominoes with up to `max_order` sites, grouped by order
/// (`result[k]` holds the clusters of order `k + 1`), each sorted by key.
pub fn enumerate_clusters(max_order: usize) -> Result<Vec<Vec<Cluster>>> {
    if max_order == 0 || max_order > MAX_ORDER {
        return Err(Error::Capacity(format!("cluster order must lie in 1..={MAX_ORDER}, got {max_order}")));
    }
    let n = max_order as i32;
    // cells with y > 0, or y == 0 and x >= 0; x in [-(n-1), n-1]
    let width = 2 * n + 1;
    let cell = |x: i32, y: i32| ((x + n) + width * y) as usize;
    let mut seen = vec![false; (width * (n + 1)) as usize];
    let mut by_order: Vec<Vec<Cluster>> = vec![Vec::new(); max_order];
    let mut poly: Vec<(i32, i32)> = Vec::with_capacity(max_order);

    fn grow(
        untried: &mut Vec<(i32, i32)>,
        poly: &mut Vec<(i32, i32)>,
        seen: &mut [bool],
        cell: &dyn Fn(i32, i32) -> usize,
        max_order: usize,
        out: &mut [Vec<Cluster>],
    ) {
        while let Some(c) = untried.pop() {
            poly.push(c);
            let mut sites = poly.clone();
            canonical_sites(&mut sites);
            out[poly.len() - 1].push(Cluster::from_canonical(sites));
            if poly.len() < max_order {
                let mut fresh = Vec::with_capacity(4);
                for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let (x, y) = (c.0 + dx, c.1 + dy);
                    let allowed = y > 0 || (y == 0 && x >= 0);
                    if allowed && x.abs() < max_order as i32 && !seen[cell(x, y)] {
                        seen[cell(x, y)] = true;
                        fresh.push((x, y));
                    }
                }
                let mut next = untried.clone();
                next.extend_from_slice(&fresh);
                grow(&mut next, poly, seen, cell, max_order, out);
                for f in fresh {
                    seen[cell(f.0, f.1)] = false;
                }
            }
            poly.pop();
        }
    }

    seen[cell(0, 0)] = true;
    let mut untried = vec![(0, 0)];
    grow(&mut untried, &mut poly, &mut seen, &cell, max_order, &mut by_order);
    for group in &mut by_order {
        group.sort_unstable_by_key(|c| c.key());
    }
    Ok(by_order)
}

/// Every non-empty connected subset of a graph with adjacency bitmasks `adj`,
/// each exactly once.
pub fn connected_subsets(adj: &[u32]) -> Vec<u32> {
    fn extend(set: u32, mut ext: u32, mut banned: u32, adj: &[u32], out: &mut Vec<u32>) {
        out.push(set);
        while ext != 0 {
            let v = ext.trailing_zeros() as usize;
            let bit = 1u32 << v;
            ext &= !bit;
            let grown = set | bit;
            let next = ext | (adj[v] & !grown & !banned & !ext);
            extend(grown, next, banned, adj, out);
            banned |= bit;
        }
    }
    let mut out = Vec::new();
    for root in 0..adj.len() {
        let lower = (1u32 << root) - 1;
        let banned = lower | (1 << root);
        extend(1 << root, adj[root] & !banned, banned, adj, &mut out);
    }
    out
}
