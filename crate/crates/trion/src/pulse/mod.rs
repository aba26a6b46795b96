//! Pulse sequences: one repetition cycle of reset, drive and rotation pulses,
//! plus optional scan directives over pulse fields.
//!
//! Numeric fields keep the units of the sequence text (ns, GHz, mW, nm,
//! multiples of pi); accessors convert to internal units. Gaussian envelopes
//! peak at `t0` and are truncated at 3 FWHM either side; square envelopes
//! start at `t0`. Rotations are instantaneous markers.

mod parse;

pub use parse::parse_sequence;

use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Truncation half-width of Gaussian envelopes, in units of FWHM.
pub const GAUSS_TRUNC_FWHM: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Square { dur: f64 },
    Gaussian { fwhm: f64 },
}

/// What a drive pulse is for; decides how emission during and after it is
/// labeled. Inferred from the pulse name (read*/probe* -> Readout,
/// ent* -> Entanglement, anything else -> Pump).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveRole {
    Pump,
    Entanglement,
    Readout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationAngle {
    /// Angle as a multiple of pi.
    ThetaPi(f64),
    /// Rotation-laser power; converted through [`RotationCalibration`].
    PowerMw(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PulseBody {
    Reset {
        dur: f64,
    },
    Drive {
        shape: Shape,
        /// Transition channel index 0..4 (T1..T4 in the text format).
        target: usize,
        /// Peak Rabi frequency in GHz (angular frequency is TAU times this).
        rabi_ghz: f64,
        role: DriveRole,
    },
    Rotate {
        angle: RotationAngle,
        /// Rotation-laser detuning from the driven line, bookkeeping only.
        detuning_nm: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub name: String,
    /// Envelope peak (Gaussian) or start (square/reset) time, ns.
    pub t0: f64,
    pub body: PulseBody,
}

impl Pulse {
    /// Occupied interval [start, end) in ns; zero-length for rotations.
    pub fn support(&self) -> (f64, f64) {
        match &self.body {
            PulseBody::Reset { dur } => (self.t0, self.t0 + dur),
            PulseBody::Drive { shape: Shape::Square { dur }, .. } => (self.t0, self.t0 + dur),
            PulseBody::Drive { shape: Shape::Gaussian { fwhm }, .. } => {
                (self.t0 - GAUSS_TRUNC_FWHM * fwhm, self.t0 + GAUSS_TRUNC_FWHM * fwhm)
            }
            PulseBody::Rotate { .. } => (self.t0, self.t0),
        }
    }

    /// Instantaneous Rabi frequency in rad/ns at time `t`; zero for
    /// non-drive pulses and outside the support.
    pub fn drive_rabi(&self, t: f64) -> f64 {
        let PulseBody::Drive { shape, rabi_ghz, .. } = &self.body else {
            return 0.0;
        };
        let peak = TAU * rabi_ghz;
        match shape {
            Shape::Square { dur } => {
                if t >= self.t0 && t < self.t0 + dur {
                    peak
                } else {
                    0.0
                }
            }
            Shape::Gaussian { fwhm } => {
                let dt = t - self.t0;
                if dt.abs() >= GAUSS_TRUNC_FWHM * fwhm {
                    0.0
                } else {
                    peak * (-4.0 * std::f64::consts::LN_2 * dt * dt / (fwhm * fwhm)).exp()
                }
            }
        }
    }

    /// Peak Rabi frequency in rad/ns (zero for non-drive pulses).
    pub fn peak_rabi(&self) -> f64 {
        match &self.body {
            PulseBody::Drive { rabi_ghz, .. } => TAU * rabi_ghz,
            _ => 0.0,
        }
    }

    pub fn is_drive(&self) -> bool {
        matches!(self.body, PulseBody::Drive { .. })
    }
}

/// Power-to-angle calibration for rotation pulses: theta = coeff * P^exponent
/// radians with P in mW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationCalibration {
    pub coeff: f64,
    pub exponent: f64,
}

impl RotationCalibration {
    pub const DEFAULT_EXPONENT: f64 = 0.77;

    pub fn new(coeff: f64) -> Self {
        Self { coeff, exponent: Self::DEFAULT_EXPONENT }
    }

    pub fn angle_from_power(&self, power_mw: f64) -> f64 {
        self.coeff * power_mw.powf(self.exponent)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PulseError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("pulses {a} and {b} overlap")]
    Overlap { a: String, b: String },
    #[error("pulse {name} target {token} is not one of T1..T4")]
    UnknownTarget { name: String, token: String },
    #[error("pulse {pulse} support [{start}, {end}) ns leaves the cycle [0, {period}) ns")]
    OutOfCycle { pulse: String, start: f64, end: f64, period: f64 },
    #[error("pulse {pulse} uses power_mw but no rotation calibration was supplied")]
    CalibrationRequired { pulse: String },
}

/// A scan directive: vary `pulse`.`field` linearly from `from` to `to`
/// (inclusive) over `steps` points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub pulse: String,
    pub field: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl ScanSpec {
    pub fn value(&self, step: usize) -> f64 {
        debug_assert!(step < self.steps);
        if self.steps == 1 {
            self.from
        } else {
            self.from + (self.to - self.from) * step as f64 / (self.steps - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub period: f64,
    pub pulses: Vec<Pulse>,
    pub scans: Vec<ScanSpec>,
}

impl Sequence {
    pub fn new(period: f64, pulses: Vec<Pulse>, scans: Vec<ScanSpec>) -> Result<Self, PulseError> {
        let seq = Self { period, pulses, scans };
        seq.validate()?;
        Ok(seq)
    }

    /// Structural checks: positive period, supports inside [0, period),
    /// no overlap among reset/drive supports, scan targets exist.
    pub fn validate(&self) -> Result<(), PulseError> {
        if !(self.period > 0.0) {
            return Err(PulseError::Syntax {
                line: 0,
                reason: format!("period must be positive, got {}", self.period),
            });
        }
        for p in &self.pulses {
            let (s, e) = p.support();
            let inside = match p.body {
                PulseBody::Rotate { .. } => s >= 0.0 && s < self.period,
                _ => s >= 0.0 && e <= self.period,
            };
            if !inside {
                return Err(PulseError::OutOfCycle {
                    pulse: p.name.clone(),
                    start: s,
                    end: e,
                    period: self.period,
                });
            }
            if let PulseBody::Drive { target, .. } = p.body {
                if target >= crate::quantum::N_CHANNELS {
                    return Err(PulseError::UnknownTarget {
                        name: p.name.clone(),
                        token: format!("T{}", target + 1),
                    });
                }
            }
        }
        let occupied: Vec<&Pulse> =
            self.pulses.iter().filter(|p| !matches!(p.body, PulseBody::Rotate { .. })).collect();
        for (i, a) in occupied.iter().enumerate() {
            for b in &occupied[i + 1..] {
                let (s1, e1) = a.support();
                let (s2, e2) = b.support();
                if s1 < e2 && s2 < e1 {
                    return Err(PulseError::Overlap { a: a.name.clone(), b: b.name.clone() });
                }
            }
        }
        for scan in &self.scans {
            let Some(p) = self.pulses.iter().find(|p| p.name == scan.pulse) else {
                return Err(PulseError::Syntax {
                    line: 0,
                    reason: format!("scan references unknown pulse {}", scan.pulse),
                });
            };
            if !field_applies(&scan.field, &p.body) {
                return Err(PulseError::Syntax {
                    line: 0,
                    reason: format!(
                        "scan field {} does not apply to pulse {}",
                        scan.field, scan.pulse
                    ),
                });
            }
            if scan.steps == 0 {
                return Err(PulseError::Syntax {
                    line: 0,
                    reason: format!("scan over {}.{} has zero steps", scan.pulse, scan.field),
                });
            }
        }
        if self.scans.len() > 2 {
            return Err(PulseError::Syntax {
                line: 0,
                reason: format!("at most two scan directives are supported, got {}", self.scans.len()),
            });
        }
        Ok(())
    }

    /// Number of scan points (product over scan directives; 1 with no scans).
    pub fn scan_points(&self) -> usize {
        self.scans.iter().map(|s| s.steps).product::<usize>().max(1)
    }

    /// Scan values of flat point index `point` (row-major over directives).
    pub fn scan_values(&self, point: usize) -> Vec<f64> {
        let mut idx = point;
        let mut out = Vec::with_capacity(self.scans.len());
        for s in self.scans.iter().rev() {
            out.push(s.value(idx % s.steps));
            idx /= s.steps;
        }
        out.reverse();
        out
    }

    /// Concrete single-point sequence with scanned fields substituted.
    /// The result carries no scan directives and is re-validated (a scanned
    /// duration can push a pulse into a neighbor or out of the cycle).
    pub fn materialize(&self, point: usize) -> Result<Sequence, PulseError> {
        let values = self.scan_values(point);
        let mut pulses = self.pulses.clone();
        for (scan, value) in self.scans.iter().zip(values) {
            let p = pulses
                .iter_mut()
                .find(|p| p.name == scan.pulse)
                .expect("validated scan target exists");
            set_field(p, &scan.field, value);
        }
        Sequence::new(self.period, pulses, Vec::new())
    }

    /// Largest peak Rabi frequency over drive pulses, rad/ns.
    pub fn max_rabi(&self) -> f64 {
        self.pulses.iter().map(|p| p.peak_rabi()).fold(0.0, f64::max)
    }

    /// Resolves the rotation angle of `pulse` in radians.
    pub fn rotation_angle(
        pulse: &Pulse,
        cal: Option<&RotationCalibration>,
    ) -> Result<f64, PulseError> {
        match &pulse.body {
            PulseBody::Rotate { angle: RotationAngle::ThetaPi(x), .. } => Ok(x * PI),
            PulseBody::Rotate { angle: RotationAngle::PowerMw(p), .. } => cal
                .map(|c| c.angle_from_power(*p))
                .ok_or_else(|| PulseError::CalibrationRequired { pulse: pulse.name.clone() }),
            _ => Ok(0.0),
        }
    }
}

fn field_applies(field: &str, body: &PulseBody) -> bool {
    match (field, body) {
        ("t0", _) => true,
        ("dur", PulseBody::Reset { .. }) => true,
        ("dur", PulseBody::Drive { shape: Shape::Square { .. }, .. }) => true,
        ("fwhm", PulseBody::Drive { shape: Shape::Gaussian { .. }, .. }) => true,
        ("rabi_ghz", PulseBody::Drive { .. }) => true,
        ("theta_pi", PulseBody::Rotate { angle: RotationAngle::ThetaPi(_), .. }) => true,
        ("power_mw", PulseBody::Rotate { angle: RotationAngle::PowerMw(_), .. }) => true,
        ("detuning_nm", PulseBody::Rotate { .. }) => true,
        _ => false,
    }
}

fn set_field(p: &mut Pulse, field: &str, value: f64) {
    match (field, &mut p.body) {
        ("t0", _) => p.t0 = value,
        ("dur", PulseBody::Reset { dur }) => *dur = value,
        ("dur", PulseBody::Drive { shape: Shape::Square { dur }, .. }) => *dur = value,
        ("fwhm", PulseBody::Drive { shape: Shape::Gaussian { fwhm }, .. }) => *fwhm = value,
        ("rabi_ghz", PulseBody::Drive { rabi_ghz, .. }) => *rabi_ghz = value,
        ("theta_pi", PulseBody::Rotate { angle: RotationAngle::ThetaPi(x), .. }) => *x = value,
        ("power_mw", PulseBody::Rotate { angle: RotationAngle::PowerMw(x), .. }) => *x = value,
        ("detuning_nm", PulseBody::Rotate { detuning_nm, .. }) => *detuning_nm = value,
        _ => unreachable!("field validated by field_applies"),
    }
}

/// Canonical text form; [`parse_sequence`] of the output reproduces the
/// structure exactly.
pub fn serialize(seq: &Sequence) -> String {
    let mut out = String::new();
    out.push_str(&format!("period {}\n", seq.period));
    for p in &seq.pulses {
        out.push_str(&format!("pulse {} ", p.name));
        match &p.body {
            PulseBody::Reset { dur } => {
                out.push_str(&format!("kind=reset t0={} dur={}", p.t0, dur));
            }
            PulseBody::Drive { shape, target, rabi_ghz, .. } => {
                out.push_str(&format!("kind=drive t0={}", p.t0));
                match shape {
                    Shape::Square { dur } => out.push_str(&format!(" shape=square dur={}", dur)),
                    Shape::Gaussian { fwhm } => {
                        out.push_str(&format!(" shape=gauss fwhm={}", fwhm))
                    }
                }
                out.push_str(&format!(" target=T{} rabi_ghz={}", target + 1, rabi_ghz));
            }
            PulseBody::Rotate { angle, detuning_nm } => {
                out.push_str(&format!("kind=rotate t0={}", p.t0));
                match angle {
                    RotationAngle::ThetaPi(x) => out.push_str(&format!(" theta_pi={}", x)),
                    RotationAngle::PowerMw(x) => out.push_str(&format!(" power_mw={}", x)),
                }
                if *detuning_nm != 0.0 {
                    out.push_str(&format!(" detuning_nm={}", detuning_nm));
                }
            }
        }
        out.push('\n');
    }
    for s in &seq.scans {
        out.push_str(&format!(
            "scan {}.{} from={} to={} steps={}\n",
            s.pulse, s.field, s.from, s.to, s.steps
        ));
    }
    out
}
