//! Cycle-conditioned counting: statistics of signal-window clicks in cycles
//! that carry a herald-window click.

use super::{AnalysisError, Histogram};
use crate::detection::TimeTag;

#[derive(Debug, Clone, Copy)]
pub struct ConditionalConfig {
    /// Herald window, ps within the cycle.
    pub herald_window: (f64, f64),
    /// Signal window, ps within the cycle.
    pub signal_window: (f64, f64),
    /// Restrict heralds to one detector channel.
    pub herald_channel: Option<u8>,
    /// Restrict signals to one detector channel.
    pub signal_channel: Option<u8>,
}

#[derive(Debug, Clone)]
pub struct ConditionalCounts {
    /// Cycles containing at least one herald.
    pub heralded_cycles: u64,
    /// Heralded cycles containing at least one signal click.
    pub coincident_cycles: u64,
    /// Total signal clicks in heralded cycles.
    pub signal_clicks: u64,
    /// coincident_cycles / heralded_cycles.
    pub rate: f64,
    /// Signal click times in heralded cycles.
    pub histogram: Histogram,
}

fn in_window(t: &TimeTag, window: (f64, f64), channel: Option<u8>) -> bool {
    channel.is_none_or(|c| c == t.channel) && t.t_ps >= window.0 && t.t_ps < window.1
}

/// Counts tags of one cycle-sorted record falling in a window, per cycle.
pub fn window_counts(
    tags: &[TimeTag],
    n_cycles: u64,
    window: (f64, f64),
    channel: Option<u8>,
) -> Vec<u32> {
    let mut counts = vec![0u32; n_cycles as usize];
    for t in tags {
        if (t.cycle as usize) < counts.len() && in_window(t, window, channel) {
            counts[t.cycle as usize] += 1;
        }
    }
    counts
}

/// Conditional statistics over a cycle-sorted tag record.
pub fn conditional_counts(
    tags: &[TimeTag],
    n_cycles: u64,
    cfg: &ConditionalConfig,
    bin_width_ps: f64,
) -> Result<ConditionalCounts, AnalysisError> {
    if n_cycles == 0 {
        return Err(AnalysisError::InvalidInput { reason: "empty record".into() });
    }
    let mut histogram = Histogram::new(cfg.signal_window.0, cfg.signal_window.1, bin_width_ps)?;
    let mut heralded_cycles = 0u64;
    let mut coincident_cycles = 0u64;
    let mut signal_clicks = 0u64;
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
        let heralded =
            cycle_tags.iter().any(|t| in_window(t, cfg.herald_window, cfg.herald_channel));
        if !heralded {
            continue;
        }
        heralded_cycles += 1;
        let mut any = false;
        for t in cycle_tags.iter().filter(|t| in_window(t, cfg.signal_window, cfg.signal_channel)) {
            any = true;
            signal_clicks += 1;
            histogram.fill(t.t_ps);
        }
        if any {
            coincident_cycles += 1;
        }
    }
    let rate = if heralded_cycles > 0 {
        coincident_cycles as f64 / heralded_cycles as f64
    } else {
        0.0
    };
    Ok(ConditionalCounts { heralded_cycles, coincident_cycles, signal_clicks, rate, histogram })
}
