//! Estimators operating on detected time tags: histograms, intensity
//! correlation, conditional counting, fringe and decay fits, fidelity
//! estimates. Everything consumes plain tag slices so records can come from
//! a live run or from disk.

mod calibration;
mod conditional;
mod fidelity;
mod fringes;
mod g2;
mod histogram;
mod lm;

pub use calibration::{
    fit_exponential_tail, fit_power_law, fit_pulse_ladder, fit_ramsey, DecayFit, ExponentialFit,
    PowerLawFit, RamseyFit,
};
pub use conditional::{conditional_counts, window_counts, ConditionalConfig, ConditionalCounts};
pub use fidelity::{
    bootstrap_classical, bootstrap_fringe_visibility, classical_fidelity, coherent_fidelity,
    fidelity_bound, ClassicalCounts,
};
pub use fringes::{
    deconvolve_visibility, fit_fringe, fringe_scan, FringeConfig, FringeData, FringeFit,
};
pub use g2::{g2_windowed, G2Config, G2Result};
pub use histogram::Histogram;
pub use lm::{fit_least_squares, gradient_check, Fit, LmOptions};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("insufficient counts: estimator needs {needed}, got {got}")]
    InsufficientCounts { needed: f64, got: f64 },
    #[error("insufficient points: fit needs {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("bin width {bin_width_ps} ps cannot resolve a {period_ps} ps fringe period")]
    PeriodUnderResolved { bin_width_ps: f64, period_ps: f64 },
    #[error("fringe phases separated by {separation} rad, expected half a turn")]
    PhaseInconsistent { separation: f64 },
    #[error("fit did not converge after {iterations} iterations")]
    DidNotConverge { iterations: usize },
    #[error("invalid input: {reason}")]
    InvalidInput { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
