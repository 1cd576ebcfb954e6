use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::evolve::{EvolveOptions, PropagatorOptions};
use crate::lattice::{Cutoff, InteractionModel, Spacing};
use crate::model::ShiftMode;
use crate::nlce::{nlce_batch, ClusterTable, NlceNode, NlceOptions, NLCE_MAX_ORDER};

use super::scan::PulseSettings;

const GRID_FORMAT: &str = "quench-prediction-grid";
const GRID_VERSION: u32 = 1;

/// Everything a prediction grid depends on. Its hash names the cached file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Strictly increasing.
    pub c6_values: Vec<f64>,
    /// Strictly increasing.
    pub detunings: Vec<f64>,
    pub pulse: PulseSettings,
    pub order: usize,
    pub spacing: Spacing,
    pub cutoff: Cutoff,
    pub shift_mode: ShiftMode,
    pub euler_start: usize,
    pub steps_per_segment: usize,
}

impl GridSpec {
    pub fn new(c6_values: Vec<f64>, detunings: Vec<f64>, pulse: PulseSettings, order: usize, spacing: Spacing, cutoff: Cutoff) -> Self {
        let defaults = NlceOptions::default();
        GridSpec {
            c6_values,
            detunings,
            pulse,
            order,
            spacing,
            cutoff,
            shift_mode: defaults.shift_mode,
            euler_start: defaults.euler_start,
            steps_per_segment: defaults.evolve.steps_per_segment,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, xs) in [("C6", &self.c6_values), ("detuning", &self.detunings)] {
            if xs.is_empty() {
                return invalid(format!("{name} grid is empty"));
            }
            if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| !(w[0] < w[1])) {
                return invalid(format!("{name} grid must be finite and strictly increasing"));
            }
        }
        if self.order == 0 || self.order > NLCE_MAX_ORDER {
            return Err(Error::Capacity(format!("grid order {} outside 1..={NLCE_MAX_ORDER}", self.order)));
        }
        if self.steps_per_segment == 0 {
            return invalid("steps per segment must be positive");
        }
        self.pulse.validate()?;
        self.spacing.validated()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("grid spec serialises");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn nlce_options(&self) -> NlceOptions {
        NlceOptions {
            evolve: EvolveOptions { steps_per_segment: self.steps_per_segment, propagator: PropagatorOptions::default() },
            shift_mode: self.shift_mode,
            euler_start: self.euler_start,
        }
    }
}

/// Lattice prediction at one grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridValue {
    /// Rydberg fraction per site.
    pub occupation: f64,
    pub c10: f64,
    pub c01: f64,
}

impl GridValue {
    /// Undetected on-site correlator `4 n (1 - n)`.
    pub fn c00(&self) -> f64 {
        4.0 * self.occupation * (1.0 - self.occupation)
    }

    fn combine(terms: impl Iterator<Item = (f64, GridValue)>) -> GridValue {
        let mut out = GridValue { occupation: 0.0, c10: 0.0, c01: 0.0 };
        for (w, v) in terms {
            out.occupation += w * v.occupation;
            out.c10 += w * v.c10;
            out.c01 += w * v.c01;
        }
        out
    }
}

/// Which expansion value the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSeries {
    /// Partial sum through the grid order.
    #[default]
    FinalOrder,
    /// Euler-resummed partial sums.
    Resummed,
}

/// NLCE predictions over a `(C6, detuning)` grid, `C6`-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionGrid {
    format: String,
    version: u32,
    pub spec: GridSpec,
    pub hash: String,
    final_order: Vec<GridValue>,
    resummed: Vec<GridValue>,
}

impl PredictionGrid {
    pub fn c6_values(&self) -> &[f64] {
        &self.spec.c6_values
    }

    pub fn detunings(&self) -> &[f64] {
        &self.spec.detunings
    }

    pub fn value(&self, c6_index: usize, delta_index: usize, series: ModelSeries) -> GridValue {
        let k = c6_index * self.spec.detunings.len() + delta_index;
        match series {
            ModelSeries::FinalOrder => self.final_order[k],
            ModelSeries::Resummed => self.resummed[k],
        }
    }

    /// Model at the grid's `C6` nodes, interpolated to `deltas` along the
    /// detuning axis. Also reports whether any delta was off-grid.
    pub fn at_detunings(&self, deltas: &[f64], series: ModelSeries) -> Result<(Vec<Vec<GridValue>>, bool)> {
        let grid_d = self.detunings();
        let (lo, hi) = (grid_d[0], grid_d[grid_d.len() - 1]);
        let tol = 1e-9 * (hi - lo).abs().max(1.0);
        let mut interpolated = false;
        for &d in deltas {
            if d < lo - tol || d > hi + tol {
                return invalid(format!("detuning {d} lies outside the grid range [{lo}, {hi}]"));
            }
            if !grid_d.iter().any(|g| (g - d).abs() <= tol) {
                interpolated = true;
            }
        }
        let rows = (0..self.c6_values().len())
            .map(|i| {
                deltas
                    .iter()
                    .map(|&d| {
                        let w = lagrange_weights(grid_d, d);
                        GridValue::combine(w.into_iter().map(|(j, wj)| (wj, self.value(i, j, series))))
                    })
                    .collect()
            })
            .collect();
        Ok((rows, interpolated))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses a stored grid and checks that it was built for `spec`.
    pub fn from_json(text: &str, spec: &GridSpec) -> Result<Self> {
        let grid: PredictionGrid = serde_json::from_str(text).map_err(|e| Error::Parse(format!("prediction grid: {e}")))?;
        if grid.format != GRID_FORMAT || grid.version != GRID_VERSION {
            return Err(Error::Parse(format!("prediction grid has format {} v{}", grid.format, grid.version)));
        }
        let n = spec.c6_values.len() * spec.detunings.len();
        if grid.spec != *spec || grid.hash != spec.hash() || grid.final_order.len() != n || grid.resummed.len() != n {
            return Err(Error::Parse("prediction grid was built for different parameters".into()));
        }
        Ok(grid)
    }

    pub fn file_name(spec: &GridSpec) -> String {
        format!("grid-{}.json", &spec.hash()[..16])
    }

    /// Loads the grid for `spec` from `dir` or builds and stores it.
    pub fn load_or_build(dir: &Path, spec: &GridSpec) -> Result<(Self, PathBuf)> {
        let path = dir.join(PredictionGrid::file_name(spec));
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(grid) = PredictionGrid::from_json(&text, spec) {
                return Ok((grid, path));
            }
        }
        let grid = build_nlce_grid(spec)?;
        std::fs::create_dir_all(dir)?;
        std::fs::write(&path, grid.to_json()?)?;
        Ok((grid, path))
    }
}

/// Evaluates the expansion at every `(C6, detuning)` node at the end of the pulse.
pub fn build_nlce_grid(spec: &GridSpec) -> Result<PredictionGrid> {
    spec.validate()?;
    let table = ClusterTable::build(spec.order, &spec.spacing, &spec.cutoff)?;
    build_nlce_grid_with_table(spec, &table)
}

/// As [`build_nlce_grid`] with a prebuilt cluster table of matching order,
/// spacing and cutoff.
pub fn build_nlce_grid_with_table(spec: &GridSpec, table: &ClusterTable) -> Result<PredictionGrid> {
    spec.validate()?;
    if table.max_order() != spec.order || table.cutoff() != &spec.cutoff || table.spacing() != &spec.spacing {
        return invalid("cluster table does not match the grid specification");
    }
    let mut nodes = Vec::with_capacity(spec.c6_values.len() * spec.detunings.len());
    for &c6 in &spec.c6_values {
        let interaction = InteractionModel::new(c6, spec.cutoff)?;
        for &d in &spec.detunings {
            nodes.push(NlceNode::new(interaction, spec.pulse.schedule(d)?));
        }
    }
    let outputs = nlce_batch(table, &nodes, &[(1, 0), (0, 1)], &spec.nlce_options())?;
    let pick = |out: &crate::nlce::NlceOutput, order: Option<usize>| -> Result<GridValue> {
        let get = |d| match order {
            Some(o) => out.partial_sum(0, o, d),
            None => out.resummed(0, d),
        };
        Ok(GridValue {
            occupation: out.mean_occupation(0, order),
            c10: get((1, 0)).ok_or_else(|| Error::Consistency("missing (1,0) correlator".into()))?,
            c01: get((0, 1)).ok_or_else(|| Error::Consistency("missing (0,1) correlator".into()))?,
        })
    };
    let final_order = outputs.iter().map(|o| pick(o, Some(spec.order))).collect::<Result<Vec<_>>>()?;
    let resummed = outputs.iter().map(|o| pick(o, None)).collect::<Result<Vec<_>>>()?;
    Ok(PredictionGrid { format: GRID_FORMAT.into(), version: GRID_VERSION, spec: spec.clone(), hash: spec.hash(), final_order, resummed })
}

/// Weights of the local Lagrange interpolant through up to four nodes of the
/// sorted `xs` nearest to `x`. Exact at the nodes.
pub(crate) fn lagrange_weights(xs: &[f64], x: f64) -> Vec<(usize, f64)> {
    if let Some(k) = xs.iter().position(|&v| v == x) {
        return vec![(k, 1.0)];
    }
    let n = xs.len();
    let width = n.min(4);
    let above = xs.partition_point(|&v| v < x);
    let start = above.saturating_sub(width / 2).min(n - width);
    let nodes = start..start + width;
    nodes
        .clone()
        .map(|j| {
            let w = nodes.clone().filter(|&m| m != j).map(|m| (x - xs[m]) / (xs[j] - xs[m])).product();
            (j, w)
        })
        .collect()
}
