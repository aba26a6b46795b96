//! Simulator for an optically controlled electron spin qubit coupled to a
//! four-level trion system in Voigt geometry.
//!
//! The crate is organized as a pipeline:
//!
//! * [`quantum`] - level structure, transition channels, Hamiltonians, gates
//! * [`pulse`] - pulse sequences and the text format that describes them
//! * [`dynamics`] - master-equation and quantum-jump trajectory evolution
//! * [`detection`] - spectral filtering and the detector chain (efficiency,
//!   jitter, dark counts, laser leakage), producing time tags
//! * [`analysis`] - histograms, g2, conditional correlations, fringe and
//!   calibration fits, fidelity estimators
//! * [`runner`] - batch execution of repetition cycles over scan points
//!
//! All angular frequencies are in rad/ns, times in ns, rates in 1/ns unless a
//! field name says otherwise. Detector-side timestamps are integer picoseconds.

pub mod analysis;
pub mod detection;
pub mod dynamics;
pub mod pulse;
pub mod quantum;
pub mod rng;
pub mod runner;
pub mod units;

pub use quantum::{build_channels, Level, SystemParams, TransitionChannel};
pub use runner::{RunPlan, RunSummary};
