//! Pulsed intensity correlation from cycle-indexed tags: coincidences at
//! zero cycle lag against the accidental level from nonzero lags.

use super::AnalysisError;
use crate::detection::TimeTag;

#[derive(Debug, Clone, Copy)]
pub struct G2Config {
    /// Count window on detector channel 0, ps within the cycle.
    pub window_a: (f64, f64),
    /// Count window on detector channel 1.
    pub window_b: (f64, f64),
    /// Accidentals are averaged over cycle lags 1..=max_lag.
    pub max_lag: u64,
    /// Minimum mean lagged coincidences for a meaningful estimate.
    pub min_mean_coincidences: f64,
}

impl Default for G2Config {
    fn default() -> Self {
        Self {
            window_a: (0.0, f64::MAX),
            window_b: (0.0, f64::MAX),
            max_lag: 10,
            min_mean_coincidences: 100.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct G2Result {
    /// Same-cycle coincidence sum.
    pub zero_lag: u64,
    /// Coincidence sums at cycle lags 1..=max_lag.
    pub lagged: Vec<u64>,
    /// zero_lag / mean(lagged).
    pub g2: f64,
}

/// Estimates the normalized zero-delay correlation between the two detector
/// channels of an even split. Tags must be cycle-indexed; `n_cycles` bounds
/// the record (cycles with no tags count as zero).
pub fn g2_windowed(
    tags: &[TimeTag],
    n_cycles: u64,
    cfg: &G2Config,
) -> Result<G2Result, AnalysisError> {
    if n_cycles == 0 || cfg.max_lag == 0 {
        return Err(AnalysisError::InvalidInput {
            reason: "need at least one cycle and one lag".into(),
        });
    }
    let n = n_cycles as usize;
    let mut a = vec![0u32; n];
    let mut b = vec![0u32; n];
    for t in tags {
        let c = t.cycle as usize;
        if c >= n {
            return Err(AnalysisError::InvalidInput {
                reason: format!("tag in cycle {c} beyond the stated {n_cycles} cycles"),
            });
        }
        match t.channel {
            0 if t.t_ps >= cfg.window_a.0 && t.t_ps < cfg.window_a.1 => a[c] += 1,
            1 if t.t_ps >= cfg.window_b.0 && t.t_ps < cfg.window_b.1 => b[c] += 1,
            _ => {}
        }
    }
    let zero_lag: u64 = a.iter().zip(&b).map(|(&x, &y)| x as u64 * y as u64).sum();
    let mut lagged = Vec::with_capacity(cfg.max_lag as usize);
    for lag in 1..=cfg.max_lag as usize {
        if lag >= n {
            break;
        }
        let sum: u64 = a[..n - lag]
            .iter()
            .zip(&b[lag..])
            .map(|(&x, &y)| x as u64 * y as u64)
            .sum();
        lagged.push(sum);
    }
    if lagged.is_empty() {
        return Err(AnalysisError::InvalidInput {
            reason: "record shorter than one cycle lag".into(),
        });
    }
    let mean = lagged.iter().sum::<u64>() as f64 / lagged.len() as f64;
    if mean < cfg.min_mean_coincidences {
        return Err(AnalysisError::InsufficientCounts {
            needed: cfg.min_mean_coincidences,
            got: mean,
        });
    }
    Ok(G2Result { zero_lag, lagged, g2: zero_lag as f64 / mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tag(cycle: u64, channel: u8, t_ps: f64) -> TimeTag {
        TimeTag { cycle, channel, t_ps }
    }

    #[test]
    fn ideal_single_photons_give_zero_correlation() {
        // One photon per cycle split randomly: never a same-cycle pair, but
        // lagged pairs occur at the product rate.
        let mut rng = crate::rng::stream(4, 0);
        let n = 40_000u64;
        let mut tags = Vec::new();
        for c in 0..n {
            let ch = u8::from(rng.gen::<f64>() < 0.5);
            tags.push(tag(c, ch, 500.0));
        }
        let r = g2_windowed(&tags, n, &G2Config::default()).unwrap();
        assert_eq!(r.zero_lag, 0);
        assert_eq!(r.g2, 0.0);
        let mean = r.lagged.iter().sum::<u64>() as f64 / r.lagged.len() as f64;
        assert!((mean - n as f64 / 4.0).abs() < 5.0 * (n as f64 / 4.0).sqrt());
    }

    #[test]
    fn poisson_light_gives_unit_correlation() {
        // Independent Poisson clicks on both channels: zero-lag equals the
        // accidental level.
        let mut rng = crate::rng::stream(5, 0);
        let n = 30_000u64;
        let mut tags = Vec::new();
        for c in 0..n {
            for ch in [0u8, 1u8] {
                let mut t = 0.0;
                loop {
                    t -= (1.0f64 - rng.gen::<f64>()).ln() / 0.0008;
                    if t >= 1000.0 {
                        break;
                    }
                    tags.push(tag(c, ch, t));
                }
            }
        }
        let r = g2_windowed(&tags, n, &G2Config::default()).unwrap();
        assert!((r.g2 - 1.0).abs() < 0.1, "g2 {}", r.g2);
    }

    #[test]
    fn windows_exclude_out_of_band_tags() {
        let tags = vec![
            tag(0, 0, 100.0),
            tag(0, 1, 100.0),
            tag(1, 0, 100.0),
            tag(1, 1, 5000.0),
            tag(2, 0, 100.0),
            tag(2, 1, 100.0),
        ];
        let cfg = G2Config {
            window_a: (0.0, 1000.0),
            window_b: (0.0, 1000.0),
            max_lag: 2,
            min_mean_coincidences: 0.0,
        };
        let r = g2_windowed(&tags, 3, &cfg).unwrap();
        assert_eq!(r.zero_lag, 2);
        let r_all = g2_windowed(
            &tags,
            3,
            &G2Config { min_mean_coincidences: 0.0, ..Default::default() },
        )
        .unwrap();
        assert_eq!(r_all.zero_lag, 3);
    }

    #[test]
    fn starving_the_estimator_is_an_error() {
        let tags = vec![tag(0, 0, 1.0), tag(1, 1, 1.0)];
        let err = g2_windowed(&tags, 2, &G2Config::default());
        assert!(matches!(err, Err(AnalysisError::InsufficientCounts { .. })));
    }
}
