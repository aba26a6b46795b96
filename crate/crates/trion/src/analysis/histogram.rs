//! Fixed-width time histogram with the on-disk CSV format.

use super::AnalysisError;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Histogram over [start_ps, end_ps) with uniform bins. Samples outside the
/// range are counted in `overflow` but not binned.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    start_ps: f64,
    bin_width_ps: f64,
    counts: Vec<u64>,
    total: u64,
    overflow: u64,
}

impl Histogram {
    pub fn new(start_ps: f64, end_ps: f64, bin_width_ps: f64) -> Result<Self, AnalysisError> {
        if !(end_ps > start_ps) || !(bin_width_ps > 0.0) {
            return Err(AnalysisError::InvalidInput {
                reason: format!("bad histogram range [{start_ps}, {end_ps}) / {bin_width_ps}"),
            });
        }
        let bins = ((end_ps - start_ps) / bin_width_ps).ceil() as usize;
        Ok(Self { start_ps, bin_width_ps, counts: vec![0; bins], total: 0, overflow: 0 })
    }

    pub fn fill(&mut self, t_ps: f64) {
        let idx = (t_ps - self.start_ps) / self.bin_width_ps;
        if idx >= 0.0 && (idx as usize) < self.counts.len() {
            self.counts[idx as usize] += 1;
            self.total += 1;
        } else {
            self.overflow += 1;
        }
    }

    pub fn fill_all<I: IntoIterator<Item = f64>>(&mut self, times: I) {
        for t in times {
            self.fill(t);
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn bin_width_ps(&self) -> f64 {
        self.bin_width_ps
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.start_ps + i as f64 * self.bin_width_ps
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) + self.bin_width_ps / 2.0
    }

    /// Share of in-range samples per bin.
    pub fn normalized(&self) -> Vec<f64> {
        let denom = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / denom).collect()
    }

    /// Nonempty bins as (center, count) points, for fitting.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (self.bin_center(i), c as f64))
            .collect()
    }

    /// CSV columns: `bin_start_ps,bin_end_ps,count,normalized`.
    pub fn write_csv(&self, path: &Path) -> Result<(), AnalysisError> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "bin_start_ps,bin_end_ps,count,normalized")?;
        let norm = self.normalized();
        for (i, &c) in self.counts.iter().enumerate() {
            writeln!(
                w,
                "{:.3},{:.3},{},{:.9}",
                self.bin_start(i),
                self.bin_start(i + 1),
                c,
                norm[i]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
