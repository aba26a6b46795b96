//! Fidelity estimators for the heralded spin-photon state: a classical
//! (population) term from color-sorted herald/readout coincidences, a
//! coherence term from a pair of opposite-basis fringe fits, and Poisson or
//! binomial bootstraps for their uncertainties.

use super::fringes::{fit_fringe, FringeData};
use super::AnalysisError;
use rand_distr::{Binomial, Distribution, Poisson};
use std::f64::consts::PI;

/// Coincidences sorted by herald color and readout result.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalCounts {
    /// Red herald, spin read out down.
    pub red_down: u64,
    /// Red herald, spin read out up.
    pub red_up: u64,
    pub blue_down: u64,
    pub blue_up: u64,
}

/// Population overlap with the ideal correlations: red heralds should find the
/// spin down, blue heralds up. Averages the two conditional probabilities so
/// an asymmetric herald ratio does not skew the estimate.
pub fn classical_fidelity(counts: &ClassicalCounts) -> Result<f64, AnalysisError> {
    let red = counts.red_down + counts.red_up;
    let blue = counts.blue_down + counts.blue_up;
    if red == 0 || blue == 0 {
        return Err(AnalysisError::InsufficientCounts {
            needed: 1.0,
            got: red.min(blue) as f64,
        });
    }
    Ok(0.5 * counts.red_down as f64 / red as f64 + 0.5 * counts.blue_up as f64 / blue as f64)
}

/// Coherence term from two fringes read out along opposite superposition
/// axes. The two must oscillate in antiphase; if their phase separation is
/// not within half a radian of pi the fits do not describe the same
/// entangled state and the estimate is refused.
pub fn coherent_fidelity(
    v_plus: f64,
    phase_plus: f64,
    v_minus: f64,
    phase_minus: f64,
) -> Result<f64, AnalysisError> {
    let mut sep = (phase_plus - phase_minus).rem_euclid(2.0 * PI);
    if sep > PI {
        sep = 2.0 * PI - sep;
    }
    if (sep - PI).abs() > 0.5 {
        return Err(AnalysisError::PhaseInconsistent { separation: sep });
    }
    Ok((1.0 + (v_plus.abs() + v_minus.abs()) / 2.0) / 2.0)
}

/// Entanglement fidelity lower bound from the two measured terms.
pub fn fidelity_bound(f_classical: f64, f_coherent: f64) -> f64 {
    (f_classical + f_coherent) / 2.0
}

/// Poisson bootstrap of the classical fidelity. Each resample redraws the
/// four coincidence counts around their observed values. Returns the mean
/// and standard deviation over the resamples.
pub fn bootstrap_classical(
    counts: &ClassicalCounts,
    n_resamples: usize,
    seed: u64,
) -> Result<(f64, f64), AnalysisError> {
    classical_fidelity(counts)?;
    let mut rng = crate::rng::stream(seed, 0);
    let mut draw = |n: u64| -> u64 {
        if n == 0 {
            return 0;
        }
        Poisson::new(n as f64).unwrap().sample(&mut rng) as u64
    };
    let mut samples = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let resampled = ClassicalCounts {
            red_down: draw(counts.red_down),
            red_up: draw(counts.red_up),
            blue_down: draw(counts.blue_down),
            blue_up: draw(counts.blue_up),
        };
        if let Ok(f) = classical_fidelity(&resampled) {
            samples.push(f);
        }
    }
    if samples.len() < n_resamples / 2 {
        return Err(AnalysisError::InsufficientCounts {
            needed: n_resamples as f64 / 2.0,
            got: samples.len() as f64,
        });
    }
    Ok(mean_std(&samples))
}

/// Bootstrap of a fringe visibility: redraws each bin's click count from a
/// binomial at the observed rate and refits. Returns the mean and standard
/// deviation of the refitted visibilities.
pub fn bootstrap_fringe_visibility(
    data: &FringeData,
    omega0_per_ps: f64,
    n_resamples: usize,
    seed: u64,
) -> Result<(f64, f64), AnalysisError> {
    fit_fringe(data, omega0_per_ps)?;
    let mut rng = crate::rng::stream(seed, 1);
    let mut samples = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let clicks = data
            .heralds
            .iter()
            .zip(&data.clicks)
            .map(|(&h, &c)| {
                if h == 0 {
                    return 0;
                }
                let p = (c as f64 / h as f64).clamp(0.0, 1.0);
                if p == 0.0 {
                    0
                } else if p == 1.0 {
                    h
                } else {
                    Binomial::new(h, p).unwrap().sample(&mut rng)
                }
            })
            .collect();
        let resampled = FringeData {
            centers_ps: data.centers_ps.clone(),
            heralds: data.heralds.clone(),
            clicks,
        };
        if let Ok(fit) = fit_fringe(&resampled, omega0_per_ps) {
            samples.push(fit.visibility);
        }
    }
    if samples.len() < n_resamples / 2 {
        return Err(AnalysisError::DidNotConverge { iterations: n_resamples });
    }
    Ok(mean_std(&samples))
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use std::f64::consts::TAU;

    #[test]
    fn classical_term_averages_the_two_herald_colors() {
        // 16:1 red and 29:1 blue correct:wrong ratios.
        let counts = ClassicalCounts {
            red_down: 1600,
            red_up: 100,
            blue_down: 50,
            blue_up: 1450,
        };
        let f = classical_fidelity(&counts).unwrap();
        assert_relative_eq!(f, 0.5 * (16.0 / 17.0) + 0.5 * (29.0 / 30.0), epsilon = 1e-12);
        assert!(classical_fidelity(&ClassicalCounts {
            red_down: 0,
            red_up: 0,
            blue_down: 5,
            blue_up: 5
        })
        .is_err());
    }

    #[test]
    fn coherent_term_requires_antiphase_fringes() {
        let f = coherent_fidelity(0.6, 0.3, 0.5, 0.3 + PI - 0.2).unwrap();
        assert_relative_eq!(f, (1.0 + 0.55) / 2.0, epsilon = 1e-12);
        // Wrap-around separation still recognized as antiphase.
        assert!(coherent_fidelity(0.6, 3.0, 0.5, 3.0 + PI).is_ok());
        let err = coherent_fidelity(0.6, 0.0, 0.5, 0.8);
        assert!(matches!(err, Err(AnalysisError::PhaseInconsistent { separation }) if separation > 0.7));
        assert_relative_eq!(fidelity_bound(0.9287, 0.5885), 0.7586, epsilon = 1e-4);
    }

    #[test]
    fn classical_bootstrap_tracks_poisson_error_propagation() {
        let counts = ClassicalCounts {
            red_down: 3200,
            red_up: 200,
            blue_down: 100,
            blue_up: 2900,
        };
        let f = classical_fidelity(&counts).unwrap();
        let (mean, std) = bootstrap_classical(&counts, 400, 7).unwrap();
        assert_abs_diff_eq!(mean, f, epsilon = 0.003);
        // Analytic propagation of the two binomial fractions.
        let var_red: f64 = 16.0 / 17.0 * (1.0 - 16.0 / 17.0) / 3400.0;
        let var_blue: f64 = 29.0 / 30.0 * (1.0 - 29.0 / 30.0) / 3000.0;
        let expected = (0.25 * (var_red + var_blue)).sqrt();
        assert_relative_eq!(std, expected, max_relative = 0.3);
    }

    #[test]
    fn visibility_bootstrap_spread_shrinks_with_statistics() {
        let omega = TAU / 66.0;
        let make = |per_bin: u64, seed: u64| {
            let mut rng = crate::rng::stream(seed, 2);
            let centers: Vec<f64> = (0..60).map(|k| (k as f64 + 0.5) * 8.0).collect();
            let heralds = vec![per_bin; 60];
            let clicks = centers
                .iter()
                .map(|&t| {
                    let p = 0.4 * (1.0 + 0.6 * (omega * t).cos());
                    (0..per_bin).filter(|_| rng.gen::<f64>() < p).count() as u64
                })
                .collect();
            FringeData { centers_ps: centers, heralds, clicks }
        };
        let (mean_small, std_small) =
            bootstrap_fringe_visibility(&make(60, 1), omega, 150, 9).unwrap();
        let (mean_big, std_big) = bootstrap_fringe_visibility(&make(960, 1), omega, 150, 9).unwrap();
        assert_abs_diff_eq!(mean_small, 0.6, epsilon = 0.12);
        assert_abs_diff_eq!(mean_big, 0.6, epsilon = 0.04);
        // Sixteen times the data should shrink the error by about four.
        assert!(std_big < 0.45 * std_small, "{std_big} vs {std_small}");
    }
}
