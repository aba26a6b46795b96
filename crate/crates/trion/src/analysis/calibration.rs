//! Fits for the standard calibration curves: decay-tail lifetime, pump-pulse
//! ladder, pulse-area power law, and Ramsey interference with a dephasing
//! envelope.

use super::{fit_least_squares, AnalysisError, LmOptions};
use crate::quantum::DephasingShape;
use std::f64::consts::{PI, TAU};

/// y = amplitude * exp(-t / lifetime), in the caller's time unit.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialFit {
    pub amplitude: f64,
    pub lifetime: f64,
}

/// counts = amplitude * ratio^n over a ladder of n pump pulses.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    pub amplitude: f64,
    pub ratio: f64,
}

impl DecayFit {
    /// Fraction of population transferred out after n pulses.
    pub fn transferred(&self, n: u32) -> f64 {
        1.0 - self.ratio.powi(n as i32)
    }
}

/// y = coeff * x^exponent.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawFit {
    pub coeff: f64,
    pub exponent: f64,
}

/// y = offset + amplitude * env(tau) * cos(omega * tau + phase), with env the
/// Gaussian or exponential dephasing envelope exp(-(tau/t2star)^2) or
/// exp(-tau/t2star).
#[derive(Debug, Clone, Copy)]
pub struct RamseyFit {
    pub offset: f64,
    pub amplitude: f64,
    pub t2star: f64,
    pub omega: f64,
    pub phase: f64,
}

impl RamseyFit {
    /// Fringe contrast at zero delay.
    pub fn visibility(&self) -> f64 {
        (self.amplitude / self.offset).abs()
    }

    /// Fidelity of the superposition-preparing rotation inferred from the
    /// fringe visibility.
    pub fn rotation_fidelity(&self) -> f64 {
        (1.0 + self.visibility().clamp(0.0, 1.0).sqrt()) / 2.0
    }
}

/// Weighted linear regression y = intercept + slope * x.
fn weighted_line(pts: &[(f64, f64, f64)]) -> Result<(f64, f64), AnalysisError> {
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, w) in pts {
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let den = s * sxx - sx * sx;
    if den.abs() < 1e-12 * s * sxx.max(1e-300) {
        return Err(AnalysisError::InvalidInput {
            reason: "degenerate abscissa for linear regression".into(),
        });
    }
    let slope = (s * sxy - sx * sy) / den;
    let intercept = (sy * sxx - sx * sxy) / den;
    Ok((intercept, slope))
}

/// Log-linear lifetime fit of a decay tail. Points are (t, counts); zero and
/// negative counts are skipped, and counts weight the regression so the fit
/// matches a Poisson maximum-likelihood estimate to first order.
pub fn fit_exponential_tail(points: &[(f64, f64)]) -> Result<ExponentialFit, AnalysisError> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|(_, c)| *c > 0.0)
        .map(|&(t, c)| (t, c.ln(), c))
        .collect();
    if pts.len() < 3 {
        return Err(AnalysisError::InsufficientPoints { needed: 3, got: pts.len() });
    }
    let (intercept, slope) = weighted_line(&pts)?;
    if slope >= 0.0 {
        return Err(AnalysisError::InvalidInput { reason: "tail does not decay".into() });
    }
    Ok(ExponentialFit { amplitude: intercept.exp(), lifetime: -1.0 / slope })
}

/// Geometric fit of leftover signal versus the number of pump pulses.
pub fn fit_pulse_ladder(points: &[(u32, f64)]) -> Result<DecayFit, AnalysisError> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|(_, c)| *c > 0.0)
        .map(|&(n, c)| (n as f64, c.ln(), c))
        .collect();
    if pts.len() < 3 {
        return Err(AnalysisError::InsufficientPoints { needed: 3, got: pts.len() });
    }
    let (intercept, slope) = weighted_line(&pts)?;
    Ok(DecayFit { amplitude: intercept.exp(), ratio: slope.exp() })
}

/// Log-log power-law fit. Points with non-positive coordinates are skipped;
/// at least four must survive so the exponent is not just a two-point slope.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, AnalysisError> {
    let pts: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln(), 1.0))
        .collect();
    if pts.len() < 4 {
        return Err(AnalysisError::InsufficientPoints { needed: 4, got: pts.len() });
    }
    let (intercept, slope) = weighted_line(&pts)?;
    Ok(PowerLawFit { coeff: intercept.exp(), exponent: slope })
}

/// Damped-cosine fit of a Ramsey delay scan. Points are (tau, population);
/// `omega0` seeds the oscillation frequency and `shape` selects the envelope.
pub fn fit_ramsey(
    points: &[(f64, f64)],
    omega0: f64,
    shape: DephasingShape,
) -> Result<RamseyFit, AnalysisError> {
    if points.len() < 10 {
        return Err(AnalysisError::InsufficientPoints { needed: 10, got: points.len() });
    }
    if !(omega0 > 0.0) {
        return Err(AnalysisError::InvalidInput { reason: "need a positive seed frequency".into() });
    }
    let span = points.last().unwrap().0 - points[0].0;
    let step = span / (points.len() - 1) as f64;
    if step > (TAU / omega0) / 3.0 {
        return Err(AnalysisError::PeriodUnderResolved {
            bin_width_ps: step,
            period_ps: TAU / omega0,
        });
    }
    let env = move |tau: f64, t2: f64| -> f64 {
        match shape {
            DephasingShape::Gaussian => (-(tau / t2).powi(2)).exp(),
            DephasingShape::Exponential => (-(tau / t2).abs()).exp(),
        }
    };
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let amp0 = points.iter().map(|p| (p.1 - mean).abs()).fold(0.0, f64::max);
    let residuals = |p: &[f64], out: &mut [f64]| {
        let t2 = p[2].abs().max(1e-9);
        for (k, &(tau, y)) in points.iter().enumerate() {
            out[k] = p[0] + p[1] * env(tau, t2) * (p[3] * tau + p[4]).cos() - y;
        }
    };
    let fit = fit_least_squares(
        residuals,
        points.len(),
        &[mean, amp0.max(1e-3), span / 2.0, omega0, 0.0],
        &LmOptions::default(),
    )?;
    let [offset, mut amplitude, t2star, mut omega, mut phase] =
        <[f64; 5]>::try_from(fit.params.as_slice()).unwrap();
    if amplitude < 0.0 {
        amplitude = -amplitude;
        phase += PI;
    }
    if omega < 0.0 {
        omega = -omega;
        phase = -phase;
    }
    phase = phase.rem_euclid(TAU);
    if phase > PI {
        phase -= TAU;
    }
    Ok(RamseyFit { offset, amplitude, t2star: t2star.abs(), omega, phase })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ramsey_oracle;
    use crate::quantum::Dephasing;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand_distr::{Distribution, Poisson};

    #[test]
    fn lifetime_recovered_from_poisson_noised_tail() {
        let mut rng = crate::rng::stream(11, 0);
        let exact: Vec<(f64, f64)> = (0..80)
            .map(|k| {
                let t = 0.1 * k as f64;
                (t, 5e4 * (-t / 1.32).exp())
            })
            .collect();
        let fit = fit_exponential_tail(&exact).unwrap();
        assert_relative_eq!(fit.lifetime, 1.32, epsilon = 1e-9);
        assert_relative_eq!(fit.amplitude, 5e4, epsilon = 1e-6);
        let noisy: Vec<(f64, f64)> = exact
            .iter()
            .map(|&(t, c)| (t, Poisson::new(c).unwrap().sample(&mut rng)))
            .collect();
        let fit = fit_exponential_tail(&noisy).unwrap();
        assert_relative_eq!(fit.lifetime, 1.32, max_relative = 0.02);
        assert!(fit_exponential_tail(&exact[..2]).is_err());
        assert!(fit_exponential_tail(&[(0.0, 1.0), (1.0, 2.0), (2.0, 4.0)]).is_err());
    }

    #[test]
    fn pump_ladder_halves_per_pulse() {
        let pts: Vec<(u32, f64)> = (0..8).map(|n| (n, 9000.0 * 0.5f64.powi(n as i32))).collect();
        let fit = fit_pulse_ladder(&pts).unwrap();
        assert_relative_eq!(fit.ratio, 0.5, epsilon = 1e-9);
        assert_relative_eq!(fit.amplitude, 9000.0, epsilon = 1e-6);
        // After pulse n the transferred fraction follows 1 - r^(n+1) when the
        // ladder is indexed by pulses already applied.
        assert_relative_eq!(1.0 - fit.ratio.powi(4), 0.9375, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.transferred(3), 0.875, epsilon = 1e-9);
    }

    #[test]
    fn power_law_exponent_recovered() {
        let pts: Vec<(f64, f64)> =
            (1..=9).map(|k| (0.1 * k as f64, 2.4 * (0.1 * k as f64).powf(0.77))).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert_relative_eq!(fit.exponent, 0.77, epsilon = 1e-9);
        assert_relative_eq!(fit.coeff, 2.4, epsilon = 1e-9);
        assert!(matches!(
            fit_power_law(&pts[..3]),
            Err(AnalysisError::InsufficientPoints { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn ramsey_fit_matches_the_closed_form_scan() {
        let omega = TAU * 8.5;
        for shape in [DephasingShape::Gaussian, DephasingShape::Exponential] {
            let deph = Dephasing { t2star: 0.83, shape };
            let pts: Vec<(f64, f64)> = (0..240)
                .map(|k| {
                    let tau = 0.01 * k as f64;
                    (tau, ramsey_oracle(PI / 2.0, omega, tau, Some(deph)))
                })
                .collect();
            let fit = fit_ramsey(&pts, omega * 0.99, shape).unwrap();
            assert_relative_eq!(fit.t2star, 0.83, max_relative = 1e-6);
            assert_relative_eq!(fit.omega, omega, max_relative = 1e-7);
            assert_relative_eq!(fit.offset, 0.5, epsilon = 1e-7);
            assert_relative_eq!(fit.visibility(), 1.0, epsilon = 1e-6);
            assert_relative_eq!(fit.rotation_fidelity(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn ramsey_fit_separates_rotation_angle_from_dephasing() {
        // A rotation short of pi/2 scales offset and amplitude together, so
        // the visibility stays 1 while the offset tracks the angle.
        let omega = TAU * 8.5;
        let deph = Dephasing { t2star: 0.83, shape: DephasingShape::Gaussian };
        let theta: f64 = 0.4 * PI;
        let pts: Vec<(f64, f64)> = (0..240)
            .map(|k| {
                let tau = 0.01 * k as f64;
                (tau, ramsey_oracle(theta, omega, tau, Some(deph)))
            })
            .collect();
        let fit = fit_ramsey(&pts, omega, DephasingShape::Gaussian).unwrap();
        let s2 = theta.sin().powi(2);
        assert_relative_eq!(fit.offset, s2 / 2.0, epsilon = 1e-6);
        assert_relative_eq!(fit.visibility(), 1.0, epsilon = 1e-5);
        assert_relative_eq!(fit.t2star, 0.83, max_relative = 1e-5);
        // 0.1 ns steps cannot resolve the 0.118 ns period.
        let coarse: Vec<(f64, f64)> = pts.iter().copied().step_by(10).collect();
        assert!(matches!(
            fit_ramsey(&coarse, omega, DephasingShape::Gaussian),
            Err(AnalysisError::PeriodUnderResolved { .. })
        ));
    }
}
