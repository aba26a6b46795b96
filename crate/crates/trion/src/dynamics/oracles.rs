//! Closed-form reference solutions used to pin the numerical engines.
//!
//! These are derived independently of the integrators: the pumping model is
//! the eigendecomposition of a 2x2 rate block, the interferometry curve is
//! the exact two-rotation composition averaged over the offset distribution.

use crate::quantum::{Dephasing, DephasingShape};

/// Populations of the incoherent pumping model: ground |down> driven into
/// the trion at rate `w`, trion decaying at `gamma` with equal branching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpPopulations {
    pub down: f64,
    pub trion: f64,
    pub up: f64,
}

/// Rate-equation solution for optical pumping starting from |down>.
///
/// d/dt (P_down, P_trion) = M (P_down, P_trion) with
/// M = [[-w, gamma/2], [w, -gamma]]; P_up collects the other decay branch.
/// Eigenvalues are (-(w + gamma) +- sqrt(w^2 + gamma^2)) / 2, always
/// distinct for nonnegative inputs, so the propagator is a plain
/// two-exponential sum.
pub fn spin_pumping_oracle(w: f64, gamma: f64, t: f64) -> PumpPopulations {
    assert!(w >= 0.0 && gamma > 0.0 && t >= 0.0);
    let d = (w * w + gamma * gamma).sqrt();
    let lp = 0.5 * (-(w + gamma) + d);
    let lm = 0.5 * (-(w + gamma) - d);
    let ep = (lp * t).exp();
    let em = (lm * t).exp();
    let down = (-(w + lm) * ep + (w + lp) * em) / d;
    let trion = (ep - em) * w / d;
    let up = 1.0 - down - trion;
    PumpPopulations { down, trion, up }
}

/// Two-pulse interferometry: rotation by `theta` about x, free precession at
/// `omega` for `delay`, rotation by `theta` again, then the |down>
/// population starting from |up>.
///
/// The exact composition gives sin^2(theta) * (1 + cos(omega * delay)) / 2;
/// averaging the precession phase over the quasi-static offset distribution
/// multiplies the oscillating term by the ensemble envelope.
pub fn ramsey_oracle(theta: f64, omega: f64, delay: f64, dephasing: Option<Dephasing>) -> f64 {
    let env = match dephasing {
        None => 1.0,
        Some(d) => match d.shape {
            // Offset std sqrt(2)/T2* makes the envelope exp(-(delay/T2*)^2).
            DephasingShape::Gaussian => (-(delay / d.t2star).powi(2)).exp(),
            // Lorentzian offsets of half-width 1/T2* give exp(-delay/T2*).
            DephasingShape::Exponential => (-(delay / d.t2star).abs()).exp(),
        },
    };
    let s = theta.sin();
    s * s * (1.0 + env * (omega * delay).cos()) / 2.0
}
