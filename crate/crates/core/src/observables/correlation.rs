use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::evolve::QuantumState;

/// Displacement window `|dx| <= max_dx`, `|dy| <= max_dy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub max_dx: i32,
    pub max_dy: i32,
}

impl Window {
    pub fn new(max_dx: i32, max_dy: i32) -> Self {
        Window { max_dx: max_dx.abs(), max_dy: max_dy.abs() }
    }

    pub fn contains(&self, dx: i32, dy: i32) -> bool {
        dx.abs() <= self.max_dx && dy.abs() <= self.max_dy
    }

    fn width(&self) -> usize {
        (2 * self.max_dx + 1) as usize
    }

    fn len(&self) -> usize {
        self.width() * (2 * self.max_dy + 1) as usize
    }

    fn slot(&self, dx: i32, dy: i32) -> usize {
        (dx + self.max_dx) as usize + self.width() * (dy + self.max_dy) as usize
    }

    fn displacement(&self, slot: usize) -> (i32, i32) {
        ((slot % self.width()) as i32 - self.max_dx, (slot / self.width()) as i32 - self.max_dy)
    }
}

/// Connected correlators `C(dx, dy) = 4 <S^z_i S^z_{i+r}>_c` over a
/// displacement window. Entries with no contributing pairs are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    window: Window,
    values: Vec<Option<f64>>,
    errors: Vec<f64>,
    counts: Vec<usize>,
    /// Number of snapshots behind the estimate; zero for exact states.
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEntry {
    pub dx: i32,
    pub dy: i32,
    pub value: f64,
    pub error: f64,
    /// Number of site pairs averaged.
    pub n: usize,
}

impl CorrelationMap {
    pub fn empty(window: Window) -> Self {
        let len = window.len();
        CorrelationMap { window, values: vec![None; len], errors: vec![0.0; len], counts: vec![0; len], n_samples: 0 }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Sets `C(dx, dy)` and its mirror `C(-dx, -dy)`.
    pub fn set(&mut self, dx: i32, dy: i32, value: f64, error: f64, n: usize) -> Result<()> {
        if !self.window.contains(dx, dy) {
            return invalid(format!("displacement ({dx}, {dy}) outside window {:?}", self.window));
        }
        for (x, y) in [(dx, dy), (-dx, -dy)] {
            let s = self.window.slot(x, y);
            self.values[s] = Some(value);
            self.errors[s] = error;
            self.counts[s] = n;
        }
        Ok(())
    }

    pub fn get(&self, dx: i32, dy: i32) -> Option<f64> {
        if !self.window.contains(dx, dy) {
            return None;
        }
        self.values[self.window.slot(dx, dy)]
    }

    pub fn error(&self, dx: i32, dy: i32) -> Option<f64> {
        self.get(dx, dy).map(|_| self.errors[self.window.slot(dx, dy)])
    }

    pub fn count(&self, dx: i32, dy: i32) -> usize {
        if !self.window.contains(dx, dy) {
            return 0;
        }
        self.counts[self.window.slot(dx, dy)]
    }

    /// All populated entries, ordered by `dy` then `dx`.
    pub fn entries(&self) -> Vec<CorrelationEntry> {
        (0..self.values.len())
            .filter_map(|s| {
                let value = self.values[s]?;
                let (dx, dy) = self.window.displacement(s);
                Some(CorrelationEntry { dx, dy, value, error: self.errors[s], n: self.counts[s] })
            })
            .collect()
    }

    pub fn map_values(&self, mut f: impl FnMut(i32, i32, f64, f64) -> (f64, f64)) -> Self {
        let mut out = self.clone();
        for s in 0..out.values.len() {
            if let Some(v) = out.values[s] {
                let (dx, dy) = out.window.displacement(s);
                let (nv, ne) = f(dx, dy, v, out.errors[s]);
                out.values[s] = Some(nv);
                out.errors[s] = ne;
            }
        }
        out
    }

    /// CSV with columns `dx, dy, value, error, n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dx,dy,value,error,n\n");
        for e in self.entries() {
            let _ = writeln!(out, "{},{},{},{},{}", e.dx, e.dy, e.value, e.error, e.n);
        }
        out
    }
}

/// Correlators of an exact state, averaged over all site pairs at each
/// displacement. `sites[i]` is the lattice position of cluster site `i`.
pub fn correlators_from_state(psi: &QuantumState, sites: &[(i32, i32)], window: Window) -> Result<CorrelationMap> {
    if sites.len() != psi.n_sites() {
        return invalid(format!("{} site positions for a {}-site state", sites.len(), psi.n_sites()));
    }
    let moments = psi.sz_moments();
    let mut sums: HashMap<(i32, i32), (f64, usize)> = HashMap::new();
    for (i, a) in sites.iter().enumerate() {
        for (j, b) in sites.iter().enumerate() {
            let d = (b.0 - a.0, b.1 - a.1);
            if !window.contains(d.0, d.1) {
                continue;
            }
            let e = sums.entry(d).or_insert((0.0, 0));
            e.0 += moments.connected(i, j);
            e.1 += 1;
        }
    }
    let mut map = CorrelationMap::empty(window);
    for ((dx, dy), (sum, n)) in sums {
        let s = window.slot(dx, dy);
        map.values[s] = Some(sum / n as f64);
        map.counts[s] = n;
    }
    Ok(map)
}

/// Imperfect Rydberg detection with efficiency `alpha`: `C(0,0)` becomes
/// `4 (alpha <n> - alpha^2 <n>^2)` and every other correlator is scaled by
/// `alpha^2`. `mean_n` is the Rydberg occupation `<S^z> + 1/2`.
pub fn apply_detection_scaling(map: &CorrelationMap, mean_n: f64, alpha: f64) -> Result<CorrelationMap> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid(format!("detection efficiency must lie in (0, 1], got {alpha}"));
    }
    if !(0.0..=1.0).contains(&mean_n) {
        return invalid(format!("mean occupation must lie in [0, 1], got {mean_n}"));
    }
    let a2 = alpha * alpha;
    Ok(map.map_values(|dx, dy, v, e| {
        if dx == 0 && dy == 0 {
            (onsite_detected(mean_n, alpha), e * a2)
        } else {
            (v * a2, e * a2)
        }
    }))
}

/// `C*(0,0) = 4 (alpha n - alpha^2 n^2)`.
pub fn onsite_detected(mean_n: f64, alpha: f64) -> f64 {
    4.0 * (alpha * mean_n - alpha * alpha * mean_n * mean_n)
}
