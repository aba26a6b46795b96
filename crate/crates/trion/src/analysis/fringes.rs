//! Herald-time-resolved conditional fringes: the readout click rate as a
//! function of the herald detection time inside its window, fitted with a
//! cosine model and corrected for jitter and bin-averaging attenuation.

use super::{fit_least_squares, AnalysisError, LmOptions};
use crate::detection::TimeTag;
use std::f64::consts::{PI, TAU};

#[derive(Debug, Clone, Copy)]
pub struct FringeConfig {
    /// Herald window, ps within the cycle.
    pub herald_window: (f64, f64),
    /// Readout window, ps within the cycle.
    pub readout_window: (f64, f64),
    pub herald_channel: Option<u8>,
    pub readout_channel: Option<u8>,
    /// Width of the herald-time bins, ps.
    pub bin_width_ps: f64,
}

/// Binned conditional click rates along the herald time axis.
#[derive(Debug, Clone)]
pub struct FringeData {
    pub centers_ps: Vec<f64>,
    pub heralds: Vec<u64>,
    pub clicks: Vec<u64>,
}

impl FringeData {
    pub fn rates(&self) -> Vec<f64> {
        self.heralds
            .iter()
            .zip(&self.clicks)
            .map(|(&h, &c)| if h > 0 { c as f64 / h as f64 } else { f64::NAN })
            .collect()
    }

    pub fn total_heralds(&self) -> u64 {
        self.heralds.iter().sum()
    }
}

/// Fitted fringe: rate(t) = mean * (1 + visibility * cos(omega * t + phase)).
#[derive(Debug, Clone, Copy)]
pub struct FringeFit {
    pub mean: f64,
    pub visibility: f64,
    pub omega_per_ps: f64,
    pub phase: f64,
}

impl FringeFit {
    pub fn period_ps(&self) -> f64 {
        TAU / self.omega_per_ps
    }
}

/// Bins heralded cycles by the first herald's arrival time and counts
/// readout-window clicks for each bin.
pub fn fringe_scan(
    tags: &[TimeTag],
    n_cycles: u64,
    cfg: &FringeConfig,
) -> Result<FringeData, AnalysisError> {
    if !(cfg.bin_width_ps > 0.0) {
        return Err(AnalysisError::InvalidInput { reason: "bin width must be positive".into() });
    }
    let span = cfg.herald_window.1 - cfg.herald_window.0;
    if !(span > 0.0) {
        return Err(AnalysisError::InvalidInput { reason: "empty herald window".into() });
    }
    let bins = (span / cfg.bin_width_ps).ceil() as usize;
    let mut heralds = vec![0u64; bins];
    let mut clicks = vec![0u64; bins];
    let in_win = |t: &TimeTag, w: (f64, f64), ch: Option<u8>| {
        ch.is_none_or(|c| c == t.channel) && t.t_ps >= w.0 && t.t_ps < w.1
    };
    let mut i = 0usize;
    while i < tags.len() {
        let cycle = tags[i].cycle;
        let mut j = i;
        while j < tags.len() && tags[j].cycle == cycle {
            j += 1;
        }
        let cycle_tags = &tags[i..j];
        i = j;
        if cycle >= n_cycles {
            return Err(AnalysisError::InvalidInput {
                reason: format!("tag in cycle {cycle} beyond the stated {n_cycles} cycles"),
            });
        }
        let Some(h) = cycle_tags
            .iter()
            .find(|t| in_win(t, cfg.herald_window, cfg.herald_channel))
        else {
            continue;
        };
        let bin = ((h.t_ps - cfg.herald_window.0) / cfg.bin_width_ps) as usize;
        let bin = bin.min(bins - 1);
        heralds[bin] += 1;
        if cycle_tags.iter().any(|t| in_win(t, cfg.readout_window, cfg.readout_channel)) {
            clicks[bin] += 1;
        }
    }
    let centers_ps = (0..bins)
        .map(|k| cfg.herald_window.0 + (k as f64 + 0.5) * cfg.bin_width_ps)
        .collect();
    Ok(FringeData { centers_ps, heralds, clicks })
}

/// Weighted cosine fit of a fringe scan. `omega0_per_ps` seeds the frequency
/// search; the fit refines it.
pub fn fit_fringe(data: &FringeData, omega0_per_ps: f64) -> Result<FringeFit, AnalysisError> {
    if !(omega0_per_ps > 0.0) {
        return Err(AnalysisError::InvalidInput { reason: "need a positive seed frequency".into() });
    }
    let period = TAU / omega0_per_ps;
    let bin_w = if data.centers_ps.len() >= 2 {
        data.centers_ps[1] - data.centers_ps[0]
    } else {
        period
    };
    if bin_w > period / 3.0 {
        return Err(AnalysisError::PeriodUnderResolved { bin_width_ps: bin_w, period_ps: period });
    }
    // Usable bins: enough heralds for a meaningful rate.
    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut sigma = Vec::new();
    for ((&c, &h), &tc) in data.clicks.iter().zip(&data.heralds).zip(&data.centers_ps) {
        if h == 0 {
            continue;
        }
        let rate = c as f64 / h as f64;
        t.push(tc);
        y.push(rate);
        sigma.push((c.max(1) as f64).sqrt() / h as f64);
    }
    if t.len() < 8 {
        return Err(AnalysisError::InsufficientPoints { needed: 8, got: t.len() });
    }
    // Projection initials at the seed frequency.
    let mean0 = y.iter().sum::<f64>() / y.len() as f64;
    let (mut pc, mut ps) = (0.0, 0.0);
    for (ti, yi) in t.iter().zip(&y) {
        pc += (yi - mean0) * (omega0_per_ps * ti).cos();
        ps += (yi - mean0) * (omega0_per_ps * ti).sin();
    }
    let amp0 = 2.0 * (pc * pc + ps * ps).sqrt() / y.len() as f64;
    let phase0 = (-ps).atan2(pc);
    let v0 = (amp0 / mean0.max(1e-9)).clamp(0.05, 1.5);
    let residuals = |p: &[f64], out: &mut [f64]| {
        for i in 0..t.len() {
            let model = p[0] * (1.0 + p[1] * (p[2] * t[i] + p[3]).cos());
            out[i] = (model - y[i]) / sigma[i];
        }
    };
    let fit = fit_least_squares(
        residuals,
        t.len(),
        &[mean0, v0, omega0_per_ps, phase0],
        &LmOptions::default(),
    )?;
    let mut mean = fit.params[0];
    let mut vis = fit.params[1];
    let mut omega = fit.params[2];
    let mut phase = fit.params[3];
    if mean < 0.0 {
        // Degenerate; flip the whole parametrization.
        mean = -mean;
        phase += PI;
    }
    if vis < 0.0 {
        vis = -vis;
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
    Ok(FringeFit { mean, visibility: vis, omega_per_ps: omega, phase })
}

/// Undoes the two known instrumental attenuations of a fitted visibility:
/// Gaussian timing jitter (factor exp(-omega^2 sigma^2 / 2)) and averaging
/// over a finite herald bin (factor sinc(omega w / 2)).
pub fn deconvolve_visibility(
    v_raw: f64,
    omega_per_ps: f64,
    jitter_sigma_ps: f64,
    bin_width_ps: f64,
) -> f64 {
    let jitter = (omega_per_ps * jitter_sigma_ps).powi(2) / 2.0;
    let x = omega_per_ps * bin_width_ps / 2.0;
    let sinc = if x.abs() < 1e-12 { 1.0 } else { x.sin() / x };
    v_raw * jitter.exp() / sinc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn synthesize(
        n: u64,
        v: f64,
        omega: f64,
        phase: f64,
        jitter_sigma_ps: f64,
        seed: u64,
    ) -> Vec<TimeTag> {
        let mut rng = crate::rng::stream(seed, 0);
        let jitter = (jitter_sigma_ps > 0.0).then(|| Normal::new(0.0, jitter_sigma_ps).unwrap());
        let mut tags = Vec::new();
        for c in 0..n {
            // True emission time uniform over the herald window.
            let t_true = 200.0 + rng.gen::<f64>() * 1500.0;
            let p = 0.3 * (1.0 + v * (omega * t_true + phase).cos());
            let click = rng.gen::<f64>() < p;
            let t_obs = t_true + jitter.as_ref().map_or(0.0, |j| j.sample(&mut rng));
            tags.push(TimeTag { cycle: c, channel: 0, t_ps: t_obs });
            if click {
                tags.push(TimeTag { cycle: c, channel: 0, t_ps: 9000.0 });
            }
        }
        tags
    }

    fn config() -> FringeConfig {
        FringeConfig {
            herald_window: (150.0, 1800.0),
            readout_window: (8500.0, 9500.0),
            herald_channel: None,
            readout_channel: None,
            bin_width_ps: 10.0,
        }
    }

    #[test]
    fn recovers_fringe_parameters_from_synthetic_clicks() {
        let omega = TAU / 66.0;
        let tags = synthesize(150_000, 0.6, omega, 1.2, 0.0, 31);
        let data = fringe_scan(&tags, 150_000, &config()).unwrap();
        let fit = fit_fringe(&data, omega * 1.02).unwrap();
        assert_relative_eq!(fit.mean, 0.3, max_relative = 0.02);
        assert_relative_eq!(fit.visibility, 0.6, max_relative = 0.05);
        assert_relative_eq!(fit.omega_per_ps, omega, max_relative = 1e-3);
        assert_abs_diff_eq!(fit.phase, 1.2, epsilon = 0.05);
        assert_relative_eq!(fit.period_ps(), 66.0, max_relative = 1e-3);
    }

    #[test]
    fn jitter_attenuates_and_deconvolution_restores() {
        let omega = TAU / 66.0;
        let sigma = 16.986;
        let tags = synthesize(400_000, 0.9, omega, 0.4, sigma, 32);
        let data = fringe_scan(&tags, 400_000, &config()).unwrap();
        let fit = fit_fringe(&data, omega).unwrap();
        // Attenuation: jitter factor 0.271 times bin factor sinc(0.476).
        let expected_raw = 0.9 * (-(omega * sigma).powi(2) / 2.0).exp()
            * ((omega * 10.0 / 2.0).sin() / (omega * 10.0 / 2.0));
        assert_relative_eq!(fit.visibility, expected_raw, max_relative = 0.08);
        let v = deconvolve_visibility(fit.visibility, fit.omega_per_ps, sigma, 10.0);
        assert_relative_eq!(v, 0.9, max_relative = 0.08);
    }

    #[test]
    fn coarse_bins_cannot_resolve_the_period() {
        let omega = TAU / 66.0;
        let tags = synthesize(5_000, 0.6, omega, 0.0, 0.0, 33);
        let mut cfg = config();
        cfg.bin_width_ps = 30.0;
        let data = fringe_scan(&tags, 5_000, &cfg).unwrap();
        let err = fit_fringe(&data, omega);
        assert!(matches!(err, Err(AnalysisError::PeriodUnderResolved { .. })));
    }

    #[test]
    fn deconvolution_factors_match_the_known_attenuations() {
        let sigma = 16.986;
        let w66 = TAU / 66.0;
        let w110 = TAU / 110.0;
        assert_relative_eq!(1.0 / deconvolve_visibility(1.0, w66, sigma, 0.0), 0.27, epsilon = 0.005);
        assert_relative_eq!(1.0 / deconvolve_visibility(1.0, w110, sigma, 0.0), 0.62, epsilon = 0.005);
    }
}
