//! Correlators from exact states and from sampled snapshots, detection
//! corrections, correlation-length fits and sub-system statistics.
//!
//! All correlators use the spin normalisation `C = 4 <S^z S^z>_c`, so a
//! single site with `<S^z> = 0` has `C(0,0) = 1`. Snapshots record ground
//! atoms, whose occupation is `1/2 - S^z`; the sign flip cancels in `C`.

mod correlation;
mod corrlen;
mod snapshots;

pub use correlation::{apply_detection_scaling, correlators_from_state, onsite_detected, CorrelationEntry, CorrelationMap, Window};
pub use corrlen::{fit_correlation_length, CorrelationLengthFit, DEFAULT_R_MAX, DEFAULT_R_MIN};
pub use snapshots::{
    correlators_from_snapshots, sample_snapshots, subsystem_statistics, ClassProbabilities, DetectionModel, SnapshotSet, SubsystemStats,
};
