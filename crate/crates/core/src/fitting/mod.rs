//! Two-parameter fit of the interaction strength and the detection
//! efficiency to correlator scans after a sudden pulse, against a cached
//! grid of expansion predictions.

mod fit;
mod grid;
mod scan;

pub use fit::{fit_c6_alpha, synthetic_scan, FitOptions, FitResult, Weighting};
pub use grid::{build_nlce_grid, build_nlce_grid_with_table, GridSpec, GridValue, ModelSeries, PredictionGrid};
pub use scan::{CorrelatorScan, PulseSettings, ScanPoint};
