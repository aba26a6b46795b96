//! Time evolution of the driven four-level system over one repetition cycle:
//! a density-matrix master equation and a quantum-jump trajectory unraveling
//! that share a compiled timeline.
//!
//! The quasi-static dephasing offset enters the Hamiltonian on free-evolution
//! segments (and nowhere else, in both pictures): inside a resonant drive
//! window the offset is orders of magnitude below the Rabi coupling and would
//! only rescale click probabilities at second order, while between pulses it
//! is exactly the spin-precession noise being modeled.

mod master;
mod oracles;
mod trajectory;

pub use master::{evolve_master, master_intensities, MasterEvolution, MasterIntensities};
pub use oracles::{ramsey_oracle, spin_pumping_oracle, PumpPopulations};
pub use trajectory::{run_block, run_trajectory, TrajectoryResult};

use crate::pulse::{DriveRole, Pulse, PulseBody, PulseError, RotationCalibration, Sequence};
use crate::quantum::{
    hamiltonian, rotation_unitary, ActiveDrive, HamiltonianError, Op, SystemParams,
    TransitionChannel, N_CHANNELS,
};
use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

/// Default step factor: dt = factor * min(lifetime, Rabi period). The
/// stability precondition caps the factor at 1e-3; the default sits below it.
pub const DEFAULT_DT_FACTOR: f64 = 5e-4;
pub const MAX_DT_FACTOR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("step dt = {dt:.3e} ns too large: {why}")]
    StepTooLarge { dt: f64, why: String },
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
}

/// Which pulse an emitted photon is attributed to: the latest pulse that has
/// meaningfully begun by the emission time (half-maximum point for Gaussian
/// drives, start time otherwise), wrapping to the cycle's last pulse for
/// photons that precede the first one (decay tails cross cycle boundaries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PulseOrigin {
    ResetPulse,
    Pump,
    Entanglement,
    Readout,
    Rotation,
}

/// One emitted photon in a trajectory record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionEvent {
    pub cycle: u64,
    /// Emission time within the cycle, ns, in [0, period).
    pub t: f64,
    /// Transition channel 0..4. For a frequency-erased detection event this
    /// is the parent's Red channel and `erased` is set.
    pub channel: usize,
    pub origin: PulseOrigin,
    pub erased: bool,
}

/// Measurement back-action model for emitted photons.
///
/// `FrequencyResolved` matches narrowband-filtered detection: each jump
/// projects onto a definite channel and the spin lands in a basis state.
/// `FrequencyErased` matches broadband time-resolved detection: a jump keeps
/// the which-frequency superposition, leaving the ground spin in
/// (down + i*up)/sqrt(2) weighted by the branching amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseBasis {
    FrequencyResolved,
    FrequencyErased,
}

/// Control imperfections applied while compiling a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Imperfections {
    /// Tilt of the rotation axis from x toward z, radians.
    pub rotation_axis_tilt: f64,
}

/// Instantaneous timeline action.
#[derive(Debug, Clone)]
pub(crate) enum Action {
    Rotate { unitary: Op },
    Reset,
}

/// One step of a compiled cycle, in time order.
#[derive(Debug, Clone)]
pub(crate) enum StepKind {
    Act(Action),
    Free { t0: f64, t1: f64 },
    Window { idx: usize },
}

/// Precomputed propagator table for one drive window: cum[k] approximates
/// the non-Hermitian propagator from the window start to step k. The source
/// pulse is kept so density-matrix evolution can rebuild H(t) exactly on the
/// same grid.
#[derive(Debug, Clone)]
pub(crate) struct WindowTable {
    pub t0: f64,
    pub dt: f64,
    /// cum[0] = identity; length = steps + 1.
    pub cum: Vec<Op>,
    pub pulse: Pulse,
}

/// A single-point sequence compiled against system parameters: resolved
/// rotation unitaries, drive windows with propagator tables, emission-origin
/// boundaries, decay data.
#[derive(Debug, Clone)]
pub struct CompiledCycle {
    pub period: f64,
    pub dt: f64,
    steps: Vec<StepKind>,
    windows: Vec<WindowTable>,
    /// (support start, origin) sorted by time, for photon attribution.
    origin_marks: Vec<(f64, PulseOrigin)>,
    /// Drive supports for detection-side laser leakage.
    pub drive_spans: Vec<(f64, f64)>,
}

fn origin_of(p: &Pulse) -> PulseOrigin {
    match &p.body {
        PulseBody::Reset { .. } => PulseOrigin::ResetPulse,
        PulseBody::Rotate { .. } => PulseOrigin::Rotation,
        PulseBody::Drive { role, .. } => match role {
            DriveRole::Pump => PulseOrigin::Pump,
            DriveRole::Entanglement => PulseOrigin::Entanglement,
            DriveRole::Readout => PulseOrigin::Readout,
        },
    }
}

/// Attribution boundary: where the pulse starts mattering for emission. The
/// far Gaussian tail still belongs to the previous pulse.
fn attribution_start(p: &Pulse) -> f64 {
    match &p.body {
        PulseBody::Drive { shape: crate::pulse::Shape::Gaussian { fwhm }, .. } => {
            p.t0 - fwhm / 2.0
        }
        _ => p.t0,
    }
}

impl CompiledCycle {
    /// Compiles a scan-free sequence. `dt_factor` relative to
    /// min(1/gamma, Rabi period) must not exceed [`MAX_DT_FACTOR`].
    pub fn new(
        seq: &Sequence,
        params: &SystemParams,
        channels: &[TransitionChannel; N_CHANNELS],
        cal: Option<&RotationCalibration>,
        imperfections: &Imperfections,
        dt_factor: f64,
    ) -> Result<Self, DynamicsError> {
        assert!(seq.scans.is_empty(), "compile a materialized sequence");
        seq.validate()?;
        let bound = stability_bound(params, seq);
        if !(dt_factor > 0.0) || dt_factor > MAX_DT_FACTOR {
            return Err(DynamicsError::StepTooLarge {
                dt: dt_factor * bound / MAX_DT_FACTOR,
                why: format!(
                    "dt factor {dt_factor} outside (0, {MAX_DT_FACTOR}]; bound is {bound:.3e} ns"
                ),
            });
        }
        let dt = dt_factor * bound;

        // Breakpoints: instantaneous actions and drive-window edges.
        let mut actions: Vec<(f64, Action, usize)> = Vec::new();
        let mut spans: Vec<(f64, f64, usize)> = Vec::new();
        for (i, p) in seq.pulses.iter().enumerate() {
            match &p.body {
                PulseBody::Reset { .. } => actions.push((p.t0, Action::Reset, i)),
                PulseBody::Rotate { .. } => {
                    let theta = Sequence::rotation_angle(p, cal)?;
                    let unitary = rotation_unitary(theta, imperfections.rotation_axis_tilt);
                    actions.push((p.t0, Action::Rotate { unitary }, i));
                }
                PulseBody::Drive { .. } => {
                    let (s, e) = p.support();
                    spans.push((s, e, i));
                }
            }
        }
        actions.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut cuts: Vec<f64> = vec![0.0, seq.period];
        cuts.extend(actions.iter().map(|a| a.0));
        cuts.extend(spans.iter().flat_map(|s| [s.0, s.1]));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

        let mut steps = Vec::new();
        let mut windows = Vec::new();
        let mut action_iter = actions.iter().peekable();
        for pair in cuts.windows(2) {
            let (t0, t1) = (pair[0], pair[1]);
            while let Some((t, act, _)) = action_iter.peek() {
                if *t <= t0 + 1e-12 {
                    steps.push(StepKind::Act(act.clone()));
                    action_iter.next();
                } else {
                    break;
                }
            }
            if t1 - t0 < 1e-12 {
                continue;
            }
            let mid = 0.5 * (t0 + t1);
            match spans.iter().find(|(s, e, _)| mid >= *s && mid < *e) {
                Some(&(_, _, pulse_idx)) => {
                    let table = build_window(
                        &seq.pulses[pulse_idx],
                        t0,
                        t1,
                        params,
                        channels,
                        dt,
                    )?;
                    windows.push(table);
                    steps.push(StepKind::Window { idx: windows.len() - 1 });
                }
                None => steps.push(StepKind::Free { t0, t1 }),
            }
        }
        for (t, act, _) in action_iter {
            debug_assert!((*t - seq.period).abs() < 1e-9);
            let _ = (t, act);
        }

        let mut origin_marks: Vec<(f64, PulseOrigin)> =
            seq.pulses.iter().map(|p| (attribution_start(p), origin_of(p))).collect();
        origin_marks.sort_by(|a, b| a.0.total_cmp(&b.0));

        Ok(Self {
            period: seq.period,
            dt,
            steps,
            windows,
            origin_marks,
            drive_spans: spans.iter().map(|&(s, e, _)| (s, e)).collect(),
        })
    }

    pub fn origin_at(&self, t: f64) -> PulseOrigin {
        match self.origin_marks.iter().rev().find(|(start, _)| *start <= t) {
            Some((_, o)) => *o,
            // Before the first pulse: tail of the previous cycle's last pulse.
            None => self.origin_marks.last().map(|(_, o)| *o).unwrap_or(PulseOrigin::Pump),
        }
    }

    pub(crate) fn steps(&self) -> &[StepKind] {
        &self.steps
    }

    pub(crate) fn window(&self, idx: usize) -> &WindowTable {
        &self.windows[idx]
    }
}

/// min(lifetime, shortest Rabi period) in ns.
pub fn stability_bound(params: &SystemParams, seq: &Sequence) -> f64 {
    let max_rabi = seq.max_rabi();
    let lifetime = 1.0 / params.gamma;
    if max_rabi > 0.0 {
        lifetime.min(std::f64::consts::TAU / max_rabi)
    } else {
        lifetime
    }
}

/// Non-Hermitian effective Hamiltonian: H(t) - (i/2) * gamma * P_trion.
fn h_eff(
    pulse: &Pulse,
    t: f64,
    params: &SystemParams,
    channels: &[TransitionChannel; N_CHANNELS],
) -> Result<Op, HamiltonianError> {
    let target = match &pulse.body {
        PulseBody::Drive { target, .. } => *target,
        _ => unreachable!("windows are built from drive pulses"),
    };
    let drive = ActiveDrive { channel: target, rabi: pulse.drive_rabi(t), detuning: 0.0 };
    let mut h = hamiltonian(params, channels, &[drive], 0.0)?;
    let half = C64::new(0.0, -params.gamma / 2.0);
    h[(2, 2)] += half;
    h[(3, 3)] += half;
    Ok(h)
}

/// Integrates dU/dt = -i H_eff(t) U over [t0, t1) with classic RK4, storing
/// the cumulative propagator at every step.
fn build_window(
    pulse: &Pulse,
    t0: f64,
    t1: f64,
    params: &SystemParams,
    channels: &[TransitionChannel; N_CHANNELS],
    dt_target: f64,
) -> Result<WindowTable, DynamicsError> {
    let len = t1 - t0;
    let n = (len / dt_target).ceil().max(1.0) as usize;
    let dt = len / n as f64;
    let mut cum = Vec::with_capacity(n + 1);
    let mut u = Op::identity();
    cum.push(u);
    let mi = C64::new(0.0, -1.0);
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        let h0 = h_eff(pulse, t, params, channels)? * mi;
        let h1 = h_eff(pulse, t + dt / 2.0, params, channels)? * mi;
        let h2 = h_eff(pulse, t + dt, params, channels)? * mi;
        let k1 = h0 * u;
        let k2 = h1 * (u + k1 * C64::new(dt / 2.0, 0.0));
        let k3 = h1 * (u + k2 * C64::new(dt / 2.0, 0.0));
        let k4 = h2 * (u + k3 * C64::new(dt, 0.0));
        u += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
        cum.push(u);
    }
    Ok(WindowTable { t0, dt, cum, pulse: pulse.clone() })
}

/// Free-segment exponentials: e^{(-i E_j - gamma_j/2) tau} per level, with
/// the quasi-static offset added to the ground splitting.
pub(crate) fn free_phases(params: &SystemParams, eps: f64, tau: f64) -> [C64; 4] {
    let e = params.energies();
    let decay = (-params.gamma * tau / 2.0).exp();
    let mut out = [C64::new(0.0, 0.0); 4];
    for (j, out_j) in out.iter_mut().enumerate() {
        let energy = match j {
            0 => e[0] + eps / 2.0,
            1 => e[1] - eps / 2.0,
            _ => e[j],
        };
        let (s, c) = (-energy * tau).sin_cos();
        let amp = if j >= 2 { decay } else { 1.0 };
        *out_j = C64::new(c * amp, s * amp);
    }
    out
}
