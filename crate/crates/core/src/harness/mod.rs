//! Monte Carlo experiments: outage sweeps, range tracking, delay sensitivity.

pub mod config;
pub mod output;
pub mod sweep;
pub mod tracking;

pub use config::{
    DroneSpec, EmSettings, ExperimentConfig, MSensitivitySettings, Scenario, TrackingSettings,
};
pub use sweep::{
    outage_rows, run_m_sensitivity, run_sweep, run_trial, Metric, OutageReport, OutageRow,
    SweepResult, TrialRecord, PHASE_EXCLUSION_RAD,
};
pub use tracking::{run_tracking, trajectory, DroneTrackSummary, TrackRow, TrackingResult};

/// Evaluates `f(0..n)` in order, on the rayon pool when available.
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
