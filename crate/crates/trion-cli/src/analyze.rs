//! The analyze command: load tag files (checking metadata consistency), run
//! the selected analysis, write a JSON report plus any histogram CSV, and
//! print a one-line machine-readable summary.

use crate::config::AnalysisKind;
use crate::CliError;
use serde_json::json;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use trion::analysis::{
    bootstrap_classical, bootstrap_fringe_visibility, classical_fidelity, conditional_counts,
    deconvolve_visibility, fidelity_bound, fit_exponential_tail, fit_fringe, fringe_scan,
    g2_windowed, AnalysisError, ClassicalCounts, ConditionalConfig, FringeConfig, G2Config,
    Histogram,
};
use trion::detection::{read_meta, read_tags, DetectionError, TimeTag};
use trion::units::fwhm_to_sigma;

const BOOTSTRAP_SEED: u64 = 1;

struct TagSet {
    tags: Vec<TimeTag>,
    n_cycles: u64,
}

fn input_error(e: DetectionError) -> CliError {
    CliError::Config(e.to_string())
}

fn analysis_error(e: AnalysisError) -> CliError {
    CliError::Analysis(e.to_string())
}

fn meta_value<'a>(entries: &'a [(String, String)], key: &str) -> Option<&'a str> {
    entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Loads each tag file with its sidecar metadata. Without `force`, every
/// input must carry a sidecar and all config hashes must match.
fn load_inputs(paths: &[PathBuf], force: bool) -> Result<Vec<TagSet>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Config("at least one tag file is required".into()));
    }
    let mut sets = Vec::with_capacity(paths.len());
    let mut hashes: Vec<(String, PathBuf)> = Vec::new();
    for path in paths {
        let tags = read_tags(path).map_err(input_error)?;
        let meta_path = path.with_extension("meta");
        let meta = if meta_path.exists() {
            Some(read_meta(&meta_path).map_err(input_error)?)
        } else if force {
            None
        } else {
            return Err(CliError::Config(format!(
                "{}: missing metadata sidecar {}; pass --force to analyze anyway",
                path.display(),
                meta_path.display()
            )));
        };
        let n_cycles = meta
            .as_ref()
            .and_then(|m| meta_value(m, "cycles"))
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| tags.last().map_or(0, |t| t.cycle + 1));
        if let Some(hash) = meta.as_ref().and_then(|m| meta_value(m, "config_hash")) {
            hashes.push((hash.to_string(), path.clone()));
        }
        sets.push(TagSet { tags, n_cycles });
    }
    if !force {
        if let Some((first, first_path)) = hashes.first() {
            if let Some((other, other_path)) = hashes.iter().find(|(h, _)| h != first) {
                return Err(CliError::Config(format!(
                    "mixed config hashes: {} ({}) vs {} ({}); pass --force to analyze anyway",
                    &first[..12.min(first.len())],
                    first_path.display(),
                    &other[..12.min(other.len())],
                    other_path.display()
                )));
            }
        }
    }
    Ok(sets)
}

/// Concatenates per-file records of one logical run into a cycle-sorted
/// stream.
fn merge(sets: Vec<TagSet>) -> (Vec<TimeTag>, u64) {
    let n_cycles = sets.iter().map(|s| s.n_cycles).max().unwrap_or(0);
    let mut tags: Vec<TimeTag> = sets.into_iter().flat_map(|s| s.tags).collect();
    tags.sort_by(|a, b| (a.cycle, a.t_ps).partial_cmp(&(b.cycle, b.t_ps)).unwrap());
    (tags, n_cycles)
}

fn emit(out_dir: &Path, name: &str, report: serde_json::Value) -> Result<(), CliError> {
    let path = out_dir.join(format!("report_{name}.json"));
    let pretty = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&path, pretty + "\n").map_err(|e| CliError::Analysis(e.to_string()))?;
    println!("{report}");
    Ok(())
}

pub fn bypass(f1: f64, f2: f64, out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Analysis(e.to_string()))?;
    let report = json!({ "kind": "fidelity", "f1": f1, "f2": f2, "bound": fidelity_bound(f1, f2) });
    emit(out_dir, "fidelity", report)
}

fn write_fringe_csv(path: &Path, data: &trion::analysis::FringeData) -> Result<(), CliError> {
    let rates = data.rates();
    let mut csv = String::from("center_ps,heralds,clicks,rate\n");
    for i in 0..data.centers_ps.len() {
        let rate = if rates[i].is_nan() { "nan".into() } else { format!("{:.9}", rates[i]) };
        csv.push_str(&format!(
            "{:.3},{},{},{rate}\n",
            data.centers_ps[i], data.heralds[i], data.clicks[i]
        ));
    }
    std::fs::write(path, csv).map_err(|e| CliError::Analysis(e.to_string()))
}

pub fn analyze(
    kind: &AnalysisKind,
    inputs: &[PathBuf],
    out_dir: &Path,
    force: bool,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Analysis(e.to_string()))?;
    match kind {
        AnalysisKind::G2 { window_a, window_b, max_lag, min_mean_coincidences } => {
            let (tags, n_cycles) = merge(load_inputs(inputs, force)?);
            let cfg = G2Config {
                window_a: *window_a,
                window_b: *window_b,
                max_lag: *max_lag,
                min_mean_coincidences: *min_mean_coincidences,
            };
            let res = g2_windowed(&tags, n_cycles, &cfg).map_err(analysis_error)?;
            let lagged_mean =
                res.lagged.iter().sum::<u64>() as f64 / res.lagged.len().max(1) as f64;
            emit(
                out_dir,
                "g2",
                json!({
                    "kind": "g2",
                    "g2_zero": res.g2,
                    "zero_lag_coincidences": res.zero_lag,
                    "lagged_mean": lagged_mean,
                    "cycles": n_cycles,
                }),
            )
        }
        AnalysisKind::Conditional { herald, signal, herald_channel, signal_channel, bin_width_ps } => {
            let (tags, n_cycles) = merge(load_inputs(inputs, force)?);
            let cfg = ConditionalConfig {
                herald_window: *herald,
                signal_window: *signal,
                herald_channel: *herald_channel,
                signal_channel: *signal_channel,
            };
            let counts =
                conditional_counts(&tags, n_cycles, &cfg, *bin_width_ps).map_err(analysis_error)?;
            if counts.heralded_cycles == 0 {
                return Err(CliError::Analysis("no conditioning events".into()));
            }
            counts
                .histogram
                .write_csv(&out_dir.join("conditional_hist.csv"))
                .map_err(analysis_error)?;
            emit(
                out_dir,
                "conditional",
                json!({
                    "kind": "conditional",
                    "heralded_cycles": counts.heralded_cycles,
                    "coincident_cycles": counts.coincident_cycles,
                    "signal_clicks": counts.signal_clicks,
                    "rate": counts.rate,
                }),
            )
        }
        AnalysisKind::Fringe {
            herald,
            readout,
            herald_channel,
            readout_channel,
            bin_width_ps,
            period_ps,
            jitter_fwhm_ps,
            resamples,
        } => {
            let (tags, n_cycles) = merge(load_inputs(inputs, force)?);
            let cfg = FringeConfig {
                herald_window: *herald,
                readout_window: *readout,
                herald_channel: *herald_channel,
                readout_channel: *readout_channel,
                bin_width_ps: *bin_width_ps,
            };
            let data = fringe_scan(&tags, n_cycles, &cfg).map_err(analysis_error)?;
            if data.total_heralds() == 0 {
                return Err(CliError::Analysis("no conditioning events".into()));
            }
            write_fringe_csv(&out_dir.join("fringe_data.csv"), &data)?;
            let omega0 = TAU / period_ps;
            let fit = fit_fringe(&data, omega0).map_err(analysis_error)?;
            let sigma = fwhm_to_sigma(*jitter_fwhm_ps);
            let deconvolved =
                deconvolve_visibility(fit.visibility, fit.omega_per_ps, sigma, *bin_width_ps);
            let (_, vis_err) =
                bootstrap_fringe_visibility(&data, omega0, *resamples, BOOTSTRAP_SEED)
                    .map_err(analysis_error)?;
            emit(
                out_dir,
                "fringe",
                json!({
                    "kind": "fringe",
                    "heralds": data.total_heralds(),
                    "mean": fit.mean,
                    "visibility_raw": fit.visibility,
                    "visibility_err": vis_err,
                    "visibility_deconvolved": deconvolved,
                    "omega_per_ps": fit.omega_per_ps,
                    "period_ps": fit.period_ps(),
                    "phase": fit.phase,
                }),
            )
        }
        AnalysisKind::Lifetime { window, bin_width_ps, tail_start_ps } => {
            let (tags, _) = merge(load_inputs(inputs, force)?);
            let mut hist =
                Histogram::new(window.0, window.1, *bin_width_ps).map_err(analysis_error)?;
            hist.fill_all(tags.iter().map(|t| t.t_ps));
            if hist.total() == 0 {
                return Err(CliError::Analysis("no conditioning events".into()));
            }
            hist.write_csv(&out_dir.join("lifetime_hist.csv")).map_err(analysis_error)?;
            let points: Vec<(f64, f64)> = hist
                .points()
                .into_iter()
                .filter(|(t, _)| *t >= *tail_start_ps)
                .map(|(t, c)| (t / 1000.0, c))
                .collect();
            let fit = fit_exponential_tail(&points).map_err(analysis_error)?;
            emit(
                out_dir,
                "lifetime",
                json!({
                    "kind": "lifetime",
                    "lifetime_ns": fit.lifetime,
                    "amplitude": fit.amplitude,
                    "tail_points": points.len(),
                    "counts": hist.total(),
                }),
            )
        }
        AnalysisKind::Classical { herald, readout, herald_channel, readout_channel, resamples } => {
            if inputs.len() != 4 {
                return Err(CliError::Config(format!(
                    "classical analysis takes exactly four tag files \
                     (red_down red_up blue_down blue_up), got {}",
                    inputs.len()
                )));
            }
            let sets = load_inputs(inputs, force)?;
            let cfg = ConditionalConfig {
                herald_window: *herald,
                signal_window: *readout,
                herald_channel: *herald_channel,
                signal_channel: *readout_channel,
            };
            let width = readout.1 - readout.0;
            let mut coincidences = [0u64; 4];
            let mut heralds = 0u64;
            for (k, set) in sets.iter().enumerate() {
                let counts = conditional_counts(&set.tags, set.n_cycles, &cfg, width)
                    .map_err(analysis_error)?;
                coincidences[k] = counts.coincident_cycles;
                heralds += counts.heralded_cycles;
            }
            if heralds == 0 {
                return Err(CliError::Analysis("no conditioning events".into()));
            }
            let counts = ClassicalCounts {
                red_down: coincidences[0],
                red_up: coincidences[1],
                blue_down: coincidences[2],
                blue_up: coincidences[3],
            };
            let f1 = classical_fidelity(&counts).map_err(analysis_error)?;
            let (_, f1_err) = bootstrap_classical(&counts, *resamples, BOOTSTRAP_SEED)
                .map_err(analysis_error)?;
            emit(
                out_dir,
                "classical",
                json!({
                    "kind": "classical",
                    "f1": f1,
                    "f1_err": f1_err,
                    "red_down": counts.red_down,
                    "red_up": counts.red_up,
                    "blue_down": counts.blue_down,
                    "blue_up": counts.blue_up,
                }),
            )
        }
    }
}
