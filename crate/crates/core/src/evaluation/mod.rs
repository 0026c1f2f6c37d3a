//! Regression metrics, noise and amplitude sweeps, physical-unit error
//! conversion, lateral smoothing and CSV report emission.

mod metrics;
mod report;
mod sweeps;

pub use metrics::{bootstrap_ci, physical_units, r2_metrics, MetricsReport, ParamMetric, PhysicalError};
pub use report::{emit_report, metrics_table, sha256_file, ReportTable, RunManifest};
pub use sweeps::{
    amplitude_label, amplitude_offsets, amplitude_sweep, default_amplitude_grid, default_snr_levels,
    encode_with_offsets, lateral_median_smooth, snr_sweep, AmplitudePoint, SnrLevel, SweepInput,
};
