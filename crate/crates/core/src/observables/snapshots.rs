use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolve::{QuantumState, ED_MAX_SITES};
use crate::lattice::LatticeGeometry;

use super::correlation::{CorrelationMap, Window};

/// Binary images of detected ground-state atoms (1 = atom seen) on an
/// `nx x ny` grid. Rydberg atoms, holes and lost atoms all read 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    nx: usize,
    ny: usize,
    mask: Vec<bool>,
    data: Vec<u8>,
    pub metadata: BTreeMap<String, String>,
}

impl SnapshotSet {
    pub fn new(nx: usize, ny: usize, mask: Vec<bool>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return invalid("snapshot grid must be non-empty");
        }
        if mask.len() != nx * ny {
            return invalid(format!("mask has {} entries for a {nx}x{ny} grid", mask.len()));
        }
        Ok(SnapshotSet { nx, ny, mask, data: Vec::new(), metadata: BTreeMap::new() })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_sites(&self) -> usize {
        self.nx * self.ny
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n_shots(&self) -> usize {
        self.data.len() / self.n_sites()
    }

    pub fn push(&mut self, shot: &[u8]) -> Result<()> {
        if shot.len() != self.n_sites() {
            return invalid(format!("shot has {} sites, grid has {}", shot.len(), self.n_sites()));
        }
        if shot.iter().any(|&v| v > 1) {
            return invalid("shot entries must be 0 or 1");
        }
        self.data.extend_from_slice(shot);
        Ok(())
    }

    pub fn shot(&self, k: usize) -> &[u8] {
        let n = self.n_sites();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn shots(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.n_sites())
    }

    /// Mean detected ground-atom fraction over ROI sites.
    pub fn mean_ground(&self) -> f64 {
        let roi: Vec<usize> = (0..self.n_sites()).filter(|&i| self.mask[i]).collect();
        if roi.is_empty() || self.n_shots() == 0 {
            return f64::NAN;
        }
        let total: usize = self.shots().map(|s| roi.iter().map(|&i| s[i] as usize).sum::<usize>()).sum();
        total as f64 / (roi.len() * self.n_shots()) as f64
    }

    /// Text format: `#` header lines carrying the grid size, mask and
    /// metadata, a column header, then one row of 0/1 values per shot.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# snapshots nx={} ny={}", self.nx, self.ny);
        let mask: String = self.mask.iter().map(|&m| if m { '1' } else { '0' }).collect();
        let _ = writeln!(out, "# mask={mask}");
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        let header: Vec<String> = (0..self.n_sites()).map(|i| format!("s{i}")).collect();
        let _ = writeln!(out, "{}", header.join(","));
        for shot in self.shots() {
            let row: Vec<&str> = shot.iter().map(|&v| if v == 1 { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| Error::Parse(format!("snapshot file line {}: {msg}", line + 1));

        let (ln, first) = lines.next().ok_or_else(|| Error::Parse("empty snapshot file".into()))?;
        let dims = first.strip_prefix("# snapshots").ok_or_else(|| parse_err(ln, "expected '# snapshots nx=.. ny=..'"))?;
        let mut nx = None;
        let mut ny = None;
        for tok in dims.split_whitespace() {
            match tok.split_once('=') {
                Some(("nx", v)) => nx = v.parse::<usize>().ok(),
                Some(("ny", v)) => ny = v.parse::<usize>().ok(),
                _ => return Err(parse_err(ln, &format!("unexpected token '{tok}'"))),
            }
        }
        let (nx, ny) = match (nx, ny) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(parse_err(ln, "missing grid dimensions")),
        };
        let mut mask = vec![true; nx * ny];
        let mut metadata = BTreeMap::new();
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (ln, line) in lines {
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest.trim().split_once('=').ok_or_else(|| parse_err(ln, "header lines must be key=value"))?;
                if k == "mask" {
                    if v.len() != nx * ny || v.chars().any(|c| c != '0' && c != '1') {
                        return Err(parse_err(ln, "mask must be nx*ny characters of 0/1"));
                    }
                    mask = v.chars().map(|c| c == '1').collect();
                } else {
                    metadata.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            if !saw_header {
                saw_header = true;
                if line.starts_with('s') {
                    continue;
                }
            }
            let row: std::result::Result<Vec<u8>, _> = line.split(',').map(|v| v.trim().parse::<u8>()).collect();
            let row = row.map_err(|_| parse_err(ln, "shot values must be 0 or 1"))?;
            if row.len() != nx * ny || row.iter().any(|&v| v > 1) {
                return Err(parse_err(ln, &format!("expected {} values of 0/1", nx * ny)));
            }
            rows.push(row);
        }
        let mut set = SnapshotSet::new(nx, ny, mask)?;
        set.metadata = metadata;
        for r in rows {
            set.push(&r)?;
        }
        Ok(set)
    }
}

/// Imaging imperfections applied when sampling snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    /// Probability that a Rydberg atom is removed before imaging.
    pub rydberg_removal_eff: f64,
    /// Probability that a site holds an atom at all.
    pub filling: f64,
    /// Probability that a ground-state atom is imaged.
    pub ground_detection_eff: f64,
}

impl DetectionModel {
    pub fn perfect() -> Self {
        DetectionModel { rydberg_removal_eff: 1.0, filling: 1.0, ground_detection_eff: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rydberg_removal_eff", self.rydberg_removal_eff),
            ("filling", self.filling),
            ("ground_detection_eff", self.ground_detection_eff),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    /// Slope of `E[detected | n]` in the Rydberg occupation `n`; negative for a
    /// working detector. Correlators between distinct sites scale by its square.
    pub fn contrast(&self) -> f64 {
        -self.filling * (self.ground_detection_eff + self.rydberg_removal_eff - 1.0)
    }

    pub fn attenuation(&self) -> f64 {
        self.contrast().powi(2)
    }

    /// Expected detected ground fraction for Rydberg occupation `n`.
    pub fn expected_ground(&self, n: f64) -> f64 {
        self.filling * self.ground_detection_eff + self.contrast() * n
    }
}

/// Projective S^z measurements of `psi` (site `i` = grid site `i`) passed
/// through the detection model.
pub fn sample_snapshots<R: Rng + ?Sized>(
    psi: &QuantumState,
    geom: &LatticeGeometry,
    n_shots: usize,
    detection: &DetectionModel,
    rng: &mut R,
) -> Result<SnapshotSet> {
    if psi.n_sites() > ED_MAX_SITES {
        return Err(Error::Capacity(format!("sampling is limited to {ED_MAX_SITES} sites, state has {}", psi.n_sites())));
    }
    if psi.n_sites() != geom.n_sites() {
        return invalid(format!("state has {} sites, grid has {}", psi.n_sites(), geom.n_sites()));
    }
    detection.validate()?;
    let mut cdf = Vec::with_capacity(psi.dim());
    let mut acc = 0.0;
    for p in psi.probabilities() {
        acc += p;
        cdf.push(acc);
    }
    let mut set = SnapshotSet::new(geom.nx, geom.ny, geom.roi_mask())?;
    set.data.reserve(n_shots * psi.n_sites());
    let mut shot = vec![0u8; psi.n_sites()];
    for _ in 0..n_shots {
        let u: f64 = rng.random::<f64>() * acc;
        let config = cdf.partition_point(|&c| c <= u).min(psi.dim() - 1);
        for (i, v) in shot.iter_mut().enumerate() {
            let present = rng.random::<f64>() < detection.filling;
            let rydberg = config >> i & 1 == 1;
            let seen = if !present {
                false
            } else if rydberg {
                rng.random::<f64>() >= detection.rydberg_removal_eff
            } else {
                rng.random::<f64>() < detection.ground_detection_eff
            };
            *v = seen as u8;
        }
        set.data.extend_from_slice(&shot);
    }
    Ok(set)
}

/// Connected correlators of the imaged occupations in spin normalisation,
/// `C(r) = 4 cov(g_i, g_{i+r})` with the plug-in (1/N) covariance, averaged
/// over ROI pairs. Errors follow from
/// the shot-to-shot spread of the per-shot covariance contributions.
pub fn correlators_from_snapshots(set: &SnapshotSet, window: Window) -> Result<CorrelationMap> {
    let n_shots = set.n_shots();
    if n_shots < 2 {
        return invalid(format!("need at least 2 shots, got {n_shots}"));
    }
    let roi: Vec<usize> = (0..set.n_sites()).filter(|&i| set.mask[i]).collect();
    if roi.is_empty() {
        return invalid("region of interest is empty");
    }
    let nx = set.nx as i32;
    let ny = set.ny as i32;

    let mut means = vec![0.0; set.n_sites()];
    for shot in set.shots() {
        for &i in &roi {
            means[i] += shot[i] as f64;
        }
    }
    means.iter_mut().for_each(|m| *m /= n_shots as f64);

    // displacements in the half plane; the mirror is filled by CorrelationMap::set
    let mut groups: Vec<((i32, i32), Vec<(usize, usize)>)> = Vec::new();
    for dy in 0..=window.max_dy.min(ny - 1) {
        for dx in -window.max_dx.min(nx - 1)..=window.max_dx.min(nx - 1) {
            if dy == 0 && dx < 0 {
                continue;
            }
            let mut pairs = Vec::new();
            for &i in &roi {
                let (x, y) = ((i % set.nx) as i32, (i / set.nx) as i32);
                let (x2, y2) = (x + dx, y + dy);
                if x2 < 0 || x2 >= nx || y2 >= ny {
                    continue;
                }
                let j = (x2 + nx * y2) as usize;
                if set.mask[j] {
                    pairs.push((i, j));
                }
            }
            if !pairs.is_empty() {
                groups.push(((dx, dy), pairs));
            }
        }
    }

    let mut sum = vec![0.0; groups.len()];
    let mut sum_sq = vec![0.0; groups.len()];
    let mut dev = vec![0.0; set.n_sites()];
    for shot in set.shots() {
        for &i in &roi {
            dev[i] = shot[i] as f64 - means[i];
        }
        for (g, (_, pairs)) in groups.iter().enumerate() {
            let phi: f64 = pairs.iter().map(|&(i, j)| dev[i] * dev[j]).sum::<f64>() / pairs.len() as f64;
            sum[g] += phi;
            sum_sq[g] += phi * phi;
        }
    }

    let n = n_shots as f64;
    let mut map = CorrelationMap::empty(window);
    map.n_samples = n_shots;
    for (g, ((dx, dy), pairs)) in groups.iter().enumerate() {
        let mean = sum[g] / n;
        let var = (sum_sq[g] / n - mean * mean).max(0.0);
        let value = 4.0 * mean;
        let error = 4.0 * (var / (n - 1.0)).sqrt();
        map.set(*dx, *dy, value, error, pairs.len())?;
    }
    Ok(map)
}

/// Configuration histogram of `w x h` sub-windows.
///
/// Bit `k` (row-major inside the window) of a configuration is 1 when no
/// ground atom was seen there, i.e. the site reads as Rydberg.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemStats {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl SubsystemStats {
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    pub fn probability(&self, config: usize) -> f64 {
        self.counts[config] as f64 / self.total as f64
    }

    pub fn n_sites(&self) -> usize {
        self.width * self.height
    }

    /// The two checkerboard configurations.
    pub fn afm_configs(&self) -> [usize; 2] {
        let mut a = 0usize;
        for k in 0..self.n_sites() {
            let (x, y) = (k % self.width, k / self.width);
            if (x + y) % 2 == 0 {
                a |= 1 << k;
            }
        }
        let all = (1usize << self.n_sites()) - 1;
        [a, all ^ a]
    }

    pub fn classes(&self) -> ClassProbabilities {
        let [a, b] = self.afm_configs();
        let afm = self.probability(a) + self.probability(b);
        let all_ground = self.probability(0);
        let single: f64 = (0..self.n_sites()).map(|k| self.probability(1 << k)).sum();
        let other = (1.0 - afm - all_ground - single).max(0.0);
        let uniform = 2.0 / (1u64 << self.n_sites()) as f64;
        ClassProbabilities { afm, all_ground, single_rydberg: single, other, afm_enhancement: afm / uniform }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassProbabilities {
    pub afm: f64,
    pub all_ground: f64,
    pub single_rydberg: f64,
    pub other: f64,
    /// `P(AFM) / (2 / 2^(w h))`.
    pub afm_enhancement: f64,
}

const MAX_SUBSYSTEM_SITES: usize = 20;

/// Histogram over all placements of a `w x h` window that lie fully inside the ROI.
pub fn subsystem_statistics(set: &SnapshotSet, w: usize, h: usize) -> Result<SubsystemStats> {
    if w == 0 || h == 0 || w * h > MAX_SUBSYSTEM_SITES {
        return invalid(format!("sub-system must have between 1 and {MAX_SUBSYSTEM_SITES} sites"));
    }
    if w > set.nx || h > set.ny {
        return invalid(format!("{w}x{h} window larger than the {}x{} grid", set.nx, set.ny));
    }
    let mut placements = Vec::new();
    for y0 in 0..=(set.ny - h) {
        for x0 in 0..=(set.nx - w) {
            let sites: Vec<usize> = (0..w * h).map(|k| (x0 + k % w) + set.nx * (y0 + k / w)).collect();
            if sites.iter().all(|&s| set.mask[s]) {
                placements.push(sites);
            }
        }
    }
    if placements.is_empty() {
        return invalid(format!("no {w}x{h} window fits inside the region of interest"));
    }
    if set.n_shots() == 0 {
        return invalid("snapshot set is empty");
    }
    let mut counts = vec![0u64; 1 << (w * h)];
    for shot in set.shots() {
        for sites in &placements {
            let mut config = 0usize;
            for (k, &s) in sites.iter().enumerate() {
                if shot[s] == 0 {
                    config |= 1 << k;
                }
            }
            counts[config] += 1;
        }
    }
    let total = (set.n_shots() * placements.len()) as u64;
    Ok(SubsystemStats { width: w, height: h, counts, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Spacing;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn checkerboard_set(nx: usize, ny: usize, shots: usize) -> SnapshotSet {
        let mut set = SnapshotSet::new(nx, ny, vec![true; nx * ny]).unwrap();
        for k in 0..shots {
            let shot: Vec<u8> = (0..nx * ny).map(|i| (((i % nx) + (i / nx) + k) % 2) as u8).collect();
            set.push(&shot).unwrap();
        }
        set
    }

    #[test]
    fn checkerboard_correlators() {
        let set = checkerboard_set(6, 6, 10);
        let m = correlators_from_snapshots(&set, Window::new(2, 2)).unwrap();
        assert!((m.get(1, 0).unwrap() + 1.0).abs() < 1e-12);
        assert!((m.get(0, 1).unwrap() + 1.0).abs() < 1e-12);
        assert!((m.get(1, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.get(0, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!(m.error(1, 0).unwrap() < 1e-12);
    }

    #[test]
    fn checkerboard_statistics() {
        let set = checkerboard_set(6, 6, 4);
        let stats = subsystem_statistics(&set, 3, 3).unwrap();
        let c = stats.classes();
        assert!((c.afm - 1.0).abs() < 1e-15);
        assert!((c.afm_enhancement - 256.0).abs() < 1e-9);
        assert!((stats.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_must_fit() {
        let set = checkerboard_set(2, 2, 2);
        assert!(subsystem_statistics(&set, 3, 3).is_err());
        let mut masked = SnapshotSet::new(3, 3, vec![true, true, true, true, false, true, true, true, true]).unwrap();
        masked.push(&[1; 9]).unwrap();
        assert!(subsystem_statistics(&masked, 2, 2).is_err());
    }

    #[test]
    fn empty_roi_rejected() {
        let mut set = SnapshotSet::new(2, 2, vec![false; 4]).unwrap();
        set.push(&[1, 1, 1, 1]).unwrap();
        set.push(&[1, 0, 1, 1]).unwrap();
        assert!(correlators_from_snapshots(&set, Window::new(1, 1)).is_err());
        let one = checkerboard_set(2, 2, 1);
        assert!(correlators_from_snapshots(&one, Window::new(1, 1)).is_err());
    }

    #[test]
    fn perfect_detection_of_all_down() {
        let geom = LatticeGeometry::new(2, 2, Spacing::isotropic()).unwrap();
        let psi = QuantumState::all_down(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = sample_snapshots(&psi, &geom, 50, &DetectionModel::perfect(), &mut rng).unwrap();
        assert!(set.shots().all(|s| s.iter().all(|&v| v == 1)));
    }

    #[test]
    fn removal_efficiency_on_all_up() {
        let geom = LatticeGeometry::new(2, 2, Spacing::isotropic()).unwrap();
        let psi = QuantumState::basis(4, 0b1111).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let det = DetectionModel { rydberg_removal_eff: 0.9, ..DetectionModel::perfect() };
        let set = sample_snapshots(&psi, &geom, 20_000, &det, &mut rng).unwrap();
        let mean = set.mean_ground();
        // binomial standard error ~ 0.0011
        assert!((mean - 0.1).abs() < 0.006, "{mean}");
        assert!((det.expected_ground(1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sampling_capacity() {
        let geom = LatticeGeometry::new(17, 1, Spacing::isotropic()).unwrap();
        let psi = QuantumState::all_down(17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_snapshots(&psi, &geom, 1, &DetectionModel::perfect(), &mut rng), Err(Error::Capacity(_))));
    }

    #[test]
    fn csv_round_trip() {
        let mut set = checkerboard_set(3, 2, 3);
        set.metadata.insert("seed".into(), "7".into());
        let text = set.to_csv();
        let back = SnapshotSet::from_csv(&text).unwrap();
        assert_eq!(back, set);
        assert!(SnapshotSet::from_csv("# snapshots nx=2 ny=1\ns0,s1\n1,2\n").is_err());
    }
}
