//! Level structure and operators for the four-level trion system.
//!
//! Basis order is fixed as (SpinDown, SpinUp, TrionDown, TrionUp). The ground
//! doublet is split by `delta_e`, the trion doublet by `delta_h`; the "up"
//! member of each doublet is the lower-energy one. Decay to SpinUp emits the
//! higher-frequency (Blue) photon of a parent's pair, decay to SpinDown the
//! Red one, and the Blue-Red gap of each pair is exactly `delta_e`.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

pub type Op = Matrix4<C64>;
pub type Ket = Vector4<C64>;

pub const DIM: usize = 4;
pub const N_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Level {
    SpinDown,
    SpinUp,
    TrionDown,
    TrionUp,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::SpinDown, Level::SpinUp, Level::TrionDown, Level::TrionUp];

    pub fn index(self) -> usize {
        match self {
            Level::SpinDown => 0,
            Level::SpinUp => 1,
            Level::TrionDown => 2,
            Level::TrionUp => 3,
        }
    }

    pub fn is_ground(self) -> bool {
        matches!(self, Level::SpinDown | Level::SpinUp)
    }

    pub fn is_trion(self) -> bool {
        !self.is_ground()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Polarization {
    H,
    V,
}

/// Frequency branch of a decay photon relative to its parent's pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    Red,
    Blue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DephasingShape {
    Gaussian,
    Exponential,
}

/// Quasi-static spin dephasing: per-cycle random offset added to the ground
/// splitting, with ensemble envelope exp(-(dt/T2*)^2) (Gaussian draw) or
/// exp(-dt/T2*) (Lorentzian draw).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dephasing {
    pub t2star: f64,
    pub shape: DephasingShape,
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("parameter {name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("branching row for {parent:?} must be two probabilities summing to 1, got {sum}")]
    Branching { parent: Level, sum: f64 },
}

/// Physical parameters of the emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Ground (electron) Zeeman splitting, rad/ns.
    pub delta_e: f64,
    /// Trion (hole) Zeeman splitting, rad/ns.
    pub delta_h: f64,
    /// Total radiative rate of each trion state, 1/ns.
    pub gamma: f64,
    /// branching[parent][ground]: decay probability of parent trion
    /// (0 = TrionDown, 1 = TrionUp) into ground state (0 = SpinDown,
    /// 1 = SpinUp). Each row sums to 1.
    pub branching: [[f64; 2]; 2],
    /// Quasi-static dephasing of the ground splitting, if enabled.
    pub dephasing: Option<Dephasing>,
}

impl SystemParams {
    pub fn new(
        delta_e: f64,
        delta_h: f64,
        gamma: f64,
        branching: [[f64; 2]; 2],
        dephasing: Option<Dephasing>,
    ) -> Result<Self, ParamError> {
        if !(gamma > 0.0) {
            return Err(ParamError::NonPositive { name: "gamma", value: gamma });
        }
        for (name, v) in [("delta_e", delta_e), ("delta_h", delta_h)] {
            if !(v >= 0.0) {
                return Err(ParamError::Negative { name, value: v });
            }
        }
        for (row, parent) in branching.iter().zip([Level::TrionDown, Level::TrionUp]) {
            let ok = row.iter().all(|p| (0.0..=1.0).contains(p));
            let sum = row[0] + row[1];
            if !ok || (sum - 1.0).abs() > 1e-12 {
                return Err(ParamError::Branching { parent, sum });
            }
        }
        if let Some(d) = dephasing {
            if !(d.t2star > 0.0) {
                return Err(ParamError::NonPositive { name: "t2star", value: d.t2star });
            }
        }
        Ok(Self { delta_e, delta_h, gamma, branching, dephasing })
    }

    /// Even branching, no dephasing; splittings and rate as given.
    pub fn symmetric(delta_e: f64, delta_h: f64, gamma: f64) -> Self {
        Self::new(delta_e, delta_h, gamma, [[0.5, 0.5], [0.5, 0.5]], None)
            .expect("symmetric params are valid")
    }

    /// Radiative lifetime 1/gamma in ns.
    pub fn lifetime(&self) -> f64 {
        1.0 / self.gamma
    }

    /// Bare level energies (rad/ns) in basis order, relative to the doublet
    /// centers: the "up" member of each doublet is lower.
    pub fn energies(&self) -> [f64; 4] {
        [self.delta_e / 2.0, -self.delta_e / 2.0, self.delta_h / 2.0, -self.delta_h / 2.0]
    }
}

/// One optical decay channel: parent trion to ground state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionChannel {
    /// Position in [`build_channels`] output; the sequence format labels
    /// channels T1..T4 in this order.
    pub id: usize,
    pub parent: Level,
    pub ground: Level,
    pub polarization: Polarization,
    pub branch: Branch,
    /// Decay rate of this channel, 1/ns (gamma times branching).
    pub rate: f64,
    /// Photon frequency offset from the quartet center, rad/ns.
    pub offset: f64,
}

/// Builds the four decay channels. Ordering: T1 = TrionDown->SpinDown,
/// T2 = TrionDown->SpinUp, T3 = TrionUp->SpinDown, T4 = TrionUp->SpinUp.
/// The two channels of a parent differ in polarization, and the channel into
/// SpinUp sits `delta_e` above its Red partner.
pub fn build_channels(params: &SystemParams) -> [TransitionChannel; N_CHANNELS] {
    let e = params.energies();
    let mut out = [TransitionChannel {
        id: 0,
        parent: Level::TrionDown,
        ground: Level::SpinDown,
        polarization: Polarization::V,
        branch: Branch::Red,
        rate: 0.0,
        offset: 0.0,
    }; N_CHANNELS];
    let defs = [
        (Level::TrionDown, Level::SpinDown, Polarization::V),
        (Level::TrionDown, Level::SpinUp, Polarization::H),
        (Level::TrionUp, Level::SpinDown, Polarization::H),
        (Level::TrionUp, Level::SpinUp, Polarization::V),
    ];
    for (id, (parent, ground, pol)) in defs.into_iter().enumerate() {
        let branch = if ground == Level::SpinUp { Branch::Blue } else { Branch::Red };
        out[id] = TransitionChannel {
            id,
            parent,
            ground,
            polarization: pol,
            branch,
            rate: params.gamma * params.branching[parent.index() - 2][ground.index()],
            offset: e[parent.index()] - e[ground.index()],
        };
    }
    out
}

/// A laser drive acting on one transition channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveDrive {
    pub channel: usize,
    /// Instantaneous Rabi frequency (envelope already applied), rad/ns.
    pub rabi: f64,
    /// Laser detuning from the transition, rad/ns (laser minus transition).
    pub detuning: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum HamiltonianError {
    #[error("two drives on channel T{} with different detunings ({a} vs {b} rad/ns)", channel + 1)]
    SameChannelDetunings { channel: usize, a: f64, b: f64 },
    #[error("drives on channels T{} and T{} imply inconsistent energies for their shared trion", a + 1, b + 1)]
    InconsistentFrame { a: usize, b: usize },
    #[error("drive references channel T{}, valid channels are T1..T4", channel + 1)]
    UnknownChannel { channel: usize },
}

/// Hamiltonian in the frame co-rotating with the drive laser(s), with the
/// ground splitting shifted by the quasi-static offset `eps`.
///
/// Diagonal: ground Zeeman terms, trion terms placed so each driven
/// transition sits at minus its detuning; with no drives the trion doublet
/// keeps its bare `delta_h` positions. Off-diagonal: rabi/2 on each driven
/// transition. Effective Rabi frequency is sqrt(rabi^2 + detuning^2).
pub fn hamiltonian(
    params: &SystemParams,
    channels: &[TransitionChannel; N_CHANNELS],
    drives: &[ActiveDrive],
    eps: f64,
) -> Result<Op, HamiltonianError> {
    let mut diag = params.energies();
    diag[0] += eps / 2.0;
    diag[1] -= eps / 2.0;

    // Net drive per channel; reject detuning conflicts on one channel.
    let mut rabi = [0.0f64; N_CHANNELS];
    let mut detuning = [None::<f64>; N_CHANNELS];
    for d in drives {
        if d.channel >= N_CHANNELS {
            return Err(HamiltonianError::UnknownChannel { channel: d.channel });
        }
        match detuning[d.channel] {
            None => detuning[d.channel] = Some(d.detuning),
            Some(prev) if (prev - d.detuning).abs() > 1e-9 => {
                return Err(HamiltonianError::SameChannelDetunings {
                    channel: d.channel,
                    a: prev,
                    b: d.detuning,
                });
            }
            Some(_) => {}
        }
        rabi[d.channel] += d.rabi;
    }

    // Each driven channel pins its parent trion at E(ground) - detuning.
    let mut pinned: [Option<(f64, usize)>; 2] = [None, None];
    for (id, det) in detuning.iter().enumerate() {
        let Some(det) = det else { continue };
        let ch = channels[id];
        let want = diag[ch.ground.index()] - det;
        let slot = ch.parent.index() - 2;
        match pinned[slot] {
            None => pinned[slot] = Some((want, id)),
            Some((prev, prev_id)) => {
                if (prev - want).abs() > 1e-9 {
                    return Err(HamiltonianError::InconsistentFrame { a: prev_id, b: id });
                }
            }
        }
    }
    match pinned {
        [Some((e_down, _)), Some((e_up, _))] => {
            diag[2] = e_down;
            diag[3] = e_up;
        }
        [Some((e_down, _)), None] => {
            diag[3] += e_down - diag[2];
            diag[2] = e_down;
        }
        [None, Some((e_up, _))] => {
            diag[2] += e_up - diag[3];
            diag[3] = e_up;
        }
        [None, None] => {}
    }

    let mut h = Op::zeros();
    for (i, d) in diag.iter().enumerate() {
        h[(i, i)] = C64::new(*d, 0.0);
    }
    for (id, r) in rabi.iter().enumerate() {
        if *r != 0.0 {
            let ch = channels[id];
            let half = C64::new(r / 2.0, 0.0);
            h[(ch.ground.index(), ch.parent.index())] += half;
            h[(ch.parent.index(), ch.ground.index())] += half;
        }
    }
    Ok(h)
}

/// Rotation of the ground spin by `theta` about an axis tilted by
/// `axis_tilt` from x toward z in the Bloch frame where SpinUp is +z.
/// Identity on the trion subspace. R_x(pi) sends SpinUp to -i*SpinDown.
pub fn rotation_unitary(theta: f64, axis_tilt: f64) -> Op {
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    let (nx, nz) = (axis_tilt.cos(), axis_tilt.sin());
    // Basis (SpinDown, SpinUp): sigma_z|SpinUp> = +|SpinUp>.
    let u = Matrix2::new(
        C64::new(c, s * nz),
        C64::new(0.0, -s * nx),
        C64::new(0.0, -s * nx),
        C64::new(c, -s * nz),
    );
    let mut full = Op::identity();
    for i in 0..2 {
        for j in 0..2 {
            full[(i, j)] = u[(i, j)];
        }
    }
    full
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(Ket),
    Density(Op),
}

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("pure-state norm deviates from 1 by {0:.3e}")]
    Norm(f64),
    #[error("density matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("density-matrix trace deviates from 1 by {0:.3e}")]
    Trace(f64),
    #[error("density matrix has eigenvalue {0:.3e} below tolerance")]
    NotPositive(f64),
}

impl QuantumState {
    pub fn basis(level: Level) -> Self {
        let mut v = Ket::zeros();
        v[level.index()] = C64::new(1.0, 0.0);
        QuantumState::Pure(v)
    }

    /// Maximally mixed ground-spin state.
    pub fn mixed_ground() -> Self {
        let mut m = Op::zeros();
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(1, 1)] = C64::new(0.5, 0.0);
        QuantumState::Density(m)
    }

    pub fn density(&self) -> Op {
        match self {
            QuantumState::Pure(v) => v * v.adjoint(),
            QuantumState::Density(m) => *m,
        }
    }

    pub fn population(&self, level: Level) -> f64 {
        let i = level.index();
        match self {
            QuantumState::Pure(v) => v[i].norm_sqr(),
            QuantumState::Density(m) => m[(i, i)].re,
        }
    }

    /// Applies a unitary: U psi or U rho U^dagger.
    pub fn apply_unitary(&mut self, u: &Op) {
        match self {
            QuantumState::Pure(v) => *v = u * *v,
            QuantumState::Density(m) => *m = u * *m * u.adjoint(),
        }
    }

    /// Checks physicality: unit norm (pure) or Hermitian, unit trace,
    /// eigenvalues >= -tol (density).
    pub fn validate(&self, tol: f64) -> Result<(), StateError> {
        match self {
            QuantumState::Pure(v) => {
                let dev = (v.norm_squared() - 1.0).abs();
                if dev > tol {
                    return Err(StateError::Norm(dev));
                }
            }
            QuantumState::Density(m) => {
                let mut asym = 0.0f64;
                for i in 0..DIM {
                    for j in 0..DIM {
                        asym = asym.max((m[(i, j)] - m[(j, i)].conj()).norm());
                    }
                }
                if asym > 1e-12_f64.max(tol * 1e-3) {
                    return Err(StateError::NotHermitian(asym));
                }
                let tr_dev = (m.trace().re - 1.0).abs();
                if tr_dev > tol {
                    return Err(StateError::Trace(tr_dev));
                }
                let min = min_eigenvalue(m);
                if min < -tol {
                    return Err(StateError::NotPositive(min));
                }
            }
        }
        Ok(())
    }
}

/// Smallest eigenvalue of a Hermitian 4x4 matrix.
pub fn min_eigenvalue(m: &Op) -> f64 {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    sym.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, b| a.min(*b))
}

/// Azimuth of the ground-spin Bloch vector, arg(<up-amp> * conj(<down-amp>))
/// for a pure state. The state (down + i*up)/sqrt(2) has azimuth pi/2.
pub fn ground_azimuth(v: &Ket) -> f64 {
    (v[1] * v[0].conj()).arg()
}
