//! Detector chain: spectral filtering, efficiency, timing jitter, dark
//! counts, and laser leakage turn emission events into time tags, plus the
//! on-disk tag format.
//!
//! Randomness is drawn from one ChaCha stream per cycle, so the tag record
//! is a pure function of (seed, cycle contents) and does not depend on how
//! the dynamics run was blocked or threaded.

use crate::dynamics::EmissionEvent;
use crate::pulse::{PulseBody, Sequence, Shape, GAUSS_TRUNC_FWHM};
use crate::quantum::{Level, TransitionChannel, N_CHANNELS};
use crate::units::fwhm_to_sigma;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("invalid detector configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad tag header: expected `cycle,channel,t_ps`, found `{found}`")]
    BadHeader { found: String },
    #[error("tag file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterShape {
    Gaussian,
    Lorentzian,
}

/// Spectral filter in front of the detector. Offsets are angular frequencies
/// (rad/ns) relative to the zero-field line center, the same axis the
/// transition channels use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub center_offset: f64,
    pub fwhm: f64,
    pub shape: FilterShape,
}

impl FilterConfig {
    /// Power transmission at a given spectral offset.
    pub fn transmission(&self, offset: f64) -> f64 {
        let x = offset - self.center_offset;
        match self.shape {
            FilterShape::Gaussian => (-4.0 * std::f64::consts::LN_2 * (x / self.fwhm).powi(2)).exp(),
            FilterShape::Lorentzian => 1.0 / (1.0 + (2.0 * x / self.fwhm).powi(2)),
        }
    }
}

/// Detector and collection chain. `efficiency` is the end-to-end detection
/// probability before spectral filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub filter: Option<FilterConfig>,
    pub efficiency: f64,
    pub jitter_fwhm_ps: f64,
    pub dark_rate_per_ns: f64,
    /// Probability per drive pulse per cycle of one spurious laser tag,
    /// net of all filtering.
    pub laser_leakage: f64,
    /// Split tags evenly over two detector channels (intensity
    /// interferometer geometry) instead of a single channel 0.
    pub hbt_split: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            filter: None,
            efficiency: 1.0,
            jitter_fwhm_ps: 0.0,
            dark_rate_per_ns: 0.0,
            laser_leakage: 0.0,
            hbt_split: false,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let bad = |reason: String| Err(DetectionError::InvalidConfig { reason });
        if !(0.0..=1.0).contains(&self.efficiency) {
            return bad(format!("efficiency {} outside [0, 1]", self.efficiency));
        }
        if !(0.0..=1.0).contains(&self.laser_leakage) {
            return bad(format!("laser_leakage {} outside [0, 1]", self.laser_leakage));
        }
        if self.jitter_fwhm_ps < 0.0 || !self.jitter_fwhm_ps.is_finite() {
            return bad(format!("jitter_fwhm_ps {} negative", self.jitter_fwhm_ps));
        }
        if self.dark_rate_per_ns < 0.0 || !self.dark_rate_per_ns.is_finite() {
            return bad(format!("dark_rate_per_ns {} negative", self.dark_rate_per_ns));
        }
        if let Some(f) = &self.filter {
            if f.fwhm <= 0.0 || !f.fwhm.is_finite() {
                return bad(format!("filter fwhm {} not positive", f.fwhm));
            }
        }
        Ok(())
    }
}

/// A detected click: cycle index, detector channel, time within the cycle in
/// picoseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeTag {
    pub cycle: u64,
    pub channel: u8,
    pub t_ps: f64,
}

/// Run geometry the detector needs beyond the raw events.
#[derive(Debug, Clone, Copy)]
pub struct DetectionContext<'a> {
    pub period_ns: f64,
    pub n_cycles: u64,
    pub sequence: &'a Sequence,
}

/// Mean filter transmission of one emission event. A frequency-resolved
/// photon sits on its channel's line; a frequency-erased photon spreads over
/// the parent's two branches with the branching weights.
fn event_transmission(
    ev: &EmissionEvent,
    channels: &[TransitionChannel; N_CHANNELS],
    filter: &Option<FilterConfig>,
) -> f64 {
    let Some(f) = filter else { return 1.0 };
    let ch = &channels[ev.channel];
    if !ev.erased {
        return f.transmission(ch.offset);
    }
    let parent = ch.parent;
    let mut num = 0.0;
    let mut den = 0.0;
    for c in channels.iter().filter(|c| c.parent == parent) {
        num += c.rate * f.transmission(c.offset);
        den += c.rate;
    }
    num / den
}

fn drive_pulses(seq: &Sequence) -> Vec<(f64, Shape)> {
    seq.pulses
        .iter()
        .filter_map(|p| match &p.body {
            PulseBody::Drive { shape, .. } => Some((p.t0, *shape)),
            _ => None,
        })
        .collect()
}

/// Converts emission events into detector time tags.
///
/// Events must be sorted by (cycle, t), as the runner produces them. Output
/// tags are sorted the same way; jittered tags that cross a cycle boundary
/// move to the neighboring cycle, or are dropped at the record's edges.
pub fn detect(
    events: &[EmissionEvent],
    channels: &[TransitionChannel; N_CHANNELS],
    cfg: &DetectorConfig,
    ctx: &DetectionContext,
    seed: u64,
) -> Result<Vec<TimeTag>, DetectionError> {
    cfg.validate()?;
    let period = ctx.period_ns;
    let sigma_ns = fwhm_to_sigma(cfg.jitter_fwhm_ps) / 1000.0;
    let jitter = (sigma_ns > 0.0).then(|| Normal::new(0.0, sigma_ns).unwrap());
    let dark_mean = cfg.dark_rate_per_ns * period;
    let dark = (dark_mean > 0.0).then(|| Poisson::new(dark_mean).unwrap());
    let drives = drive_pulses(ctx.sequence);
    let detect_seed = crate::rng::derive(seed, 1);

    let mut tags: Vec<TimeTag> = Vec::with_capacity(events.len());
    let mut push = |rng: &mut rand_chacha::ChaCha12Rng, cycle: u64, t_ns: f64| {
        let (mut cycle, mut t_ns) = (cycle as i64, t_ns);
        if t_ns < 0.0 {
            cycle -= 1;
            t_ns += period;
        } else if t_ns >= period {
            cycle += 1;
            t_ns -= period;
        }
        if cycle < 0 || cycle >= ctx.n_cycles as i64 {
            return;
        }
        let channel = if cfg.hbt_split && rng.gen::<f64>() < 0.5 { 1 } else { 0 };
        tags.push(TimeTag { cycle: cycle as u64, channel, t_ps: t_ns * 1000.0 });
    };

    let mut ev_idx = 0usize;
    for cycle in 0..ctx.n_cycles {
        let mut rng = crate::rng::stream(detect_seed, cycle);
        while ev_idx < events.len() && events[ev_idx].cycle == cycle {
            let ev = &events[ev_idx];
            ev_idx += 1;
            let p = cfg.efficiency * event_transmission(ev, channels, &cfg.filter);
            let keep = rng.gen::<f64>() < p;
            let dt = match &jitter {
                Some(j) => loop {
                    let x = j.sample(&mut rng);
                    if x.abs() <= 5.0 * sigma_ns {
                        break x;
                    }
                },
                None => 0.0,
            };
            if keep {
                push(&mut rng, cycle, ev.t + dt);
            }
        }
        if cfg.laser_leakage > 0.0 {
            for (t0, shape) in &drives {
                if rng.gen::<f64>() >= cfg.laser_leakage {
                    continue;
                }
                let t = match shape {
                    Shape::Square { dur } => t0 + rng.gen::<f64>() * dur,
                    Shape::Gaussian { fwhm } => {
                        // The intensity profile is the squared field
                        // envelope: a Gaussian narrower by sqrt(2).
                        let std = fwhm_to_sigma(*fwhm) / 2f64.sqrt();
                        let n = Normal::new(*t0, std).unwrap();
                        loop {
                            let t = n.sample(&mut rng);
                            if (t - t0).abs() <= GAUSS_TRUNC_FWHM * fwhm {
                                break t;
                            }
                        }
                    }
                };
                push(&mut rng, cycle, t);
            }
        }
        if let Some(d) = &dark {
            let n = d.sample(&mut rng) as u64;
            for _ in 0..n {
                let t = rng.gen::<f64>() * period;
                push(&mut rng, cycle, t);
            }
        }
    }
    tags.sort_by(|a, b| a.cycle.cmp(&b.cycle).then(a.t_ps.total_cmp(&b.t_ps)));
    Ok(tags)
}

/// Writes tags as CSV: `cycle,channel,t_ps`, times at femtosecond precision.
pub fn write_tags(path: &Path, tags: &[TimeTag]) -> Result<(), DetectionError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "cycle,channel,t_ps")?;
    for t in tags {
        writeln!(w, "{},{},{:.3}", t.cycle, t.channel, t.t_ps)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tags(path: &Path) -> Result<Vec<TimeTag>, DetectionError> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "cycle,channel,t_ps" {
        return Err(DetectionError::BadHeader { found: header });
    }
    let mut tags = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |name: &str| {
            parts.next().map(str::trim).filter(|s| !s.is_empty()).ok_or_else(|| {
                DetectionError::Parse { line: lineno, reason: format!("missing {name}") }
            })
        };
        let cycle = field("cycle")?.parse::<u64>().map_err(|e| DetectionError::Parse {
            line: lineno,
            reason: format!("cycle: {e}"),
        })?;
        let channel = field("channel")?.parse::<u8>().map_err(|e| DetectionError::Parse {
            line: lineno,
            reason: format!("channel: {e}"),
        })?;
        let t_ps = field("t_ps")?.parse::<f64>().map_err(|e| DetectionError::Parse {
            line: lineno,
            reason: format!("t_ps: {e}"),
        })?;
        if parts.next().is_some() {
            return Err(DetectionError::Parse { line: lineno, reason: "extra field".into() });
        }
        tags.push(TimeTag { cycle, channel, t_ps });
    }
    Ok(tags)
}

/// Writes the sidecar metadata as ordered `key=value` lines.
pub fn write_meta(path: &Path, entries: &[(String, String)]) -> Result<(), DetectionError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for (k, v) in entries {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<Vec<(String, String)>, DetectionError> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => out.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                return Err(DetectionError::Parse {
                    line: i + 1,
                    reason: "expected key=value".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Ground state a detected channel heralds (detector channels are not spin
/// channels; this helper is for frequency-resolved runs where the tag file
/// was produced behind a line filter and the caller knows the channel).
pub fn heralded_spin(channels: &[TransitionChannel; N_CHANNELS], channel: usize) -> Level {
    channels[channel].ground
}
