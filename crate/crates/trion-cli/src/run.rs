//! The simulate and scan commands: run trajectory batches over scan points,
//! push the emissions through the detector chain, and write tag files or an
//! aggregated curve.

use crate::config::RunConfig;
use crate::CliError;
use std::fmt::Write as _;
use std::path::Path;
use trion::detection::{detect, write_meta, write_tags, DetectionContext, TimeTag};
use trion::pulse::Sequence;
use trion::quantum::build_channels;
use trion::runner::RunPlan;

/// Independent master seed for each scan point. Domains 0 and 1 under a point
/// seed are claimed by the trajectory and detection streams.
fn point_seed(master: u64, point: usize) -> u64 {
    trion::rng::derive(master, 16 + point as u64)
}

struct PointRun {
    sequence: Sequence,
    tags: Vec<TimeTag>,
    emissions: usize,
}

fn run_point(cfg: &RunConfig, point: usize) -> Result<PointRun, CliError> {
    let sequence = cfg
        .sequence
        .materialize(point)
        .map_err(|e| CliError::Config(format!("scan point {point}: {e}")))?;
    let plan = RunPlan {
        params: cfg.params.clone(),
        sequence: sequence.clone(),
        calibration: cfg.calibration,
        imperfections: cfg.imperfections,
        collapse: cfg.collapse,
        dt_factor: cfg.dt_factor,
        cycles: cfg.cycles,
        seed: point_seed(cfg.seed, point),
        block_size: cfg.block_size,
    };
    let summary = plan.run().map_err(|e| CliError::Simulation(e.to_string()))?;
    let channels = build_channels(&cfg.params);
    let ctx = DetectionContext {
        period_ns: sequence.period,
        n_cycles: cfg.cycles,
        sequence: &sequence,
    };
    let tags = detect(&summary.events, &channels, &cfg.detector, &ctx, plan.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(PointRun { sequence, tags, emissions: summary.events.len() })
}

fn filter_description(cfg: &RunConfig) -> String {
    match &cfg.detector.filter {
        None => "none".into(),
        Some(f) => format!(
            "{:?} center_rad_ns={} fwhm_rad_ns={}",
            f.shape, f.center_offset, f.fwhm
        ),
    }
}

fn meta_entries(
    cfg: &RunConfig,
    sequence: &Sequence,
    point: usize,
    channel: Option<u8>,
    tag_count: usize,
) -> Vec<(String, String)> {
    let vars = cfg
        .sequence
        .scans
        .iter()
        .map(|s| format!("{}.{}", s.pulse, s.field))
        .collect::<Vec<_>>()
        .join(";");
    let vals = cfg
        .sequence
        .scan_values(point)
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(";");
    let kv = |k: &str, v: String| (k.to_string(), v);
    let mut out = vec![
        kv("format", "trion-tags/1".into()),
        kv("period_ns", sequence.period.to_string()),
        kv("cycles", cfg.cycles.to_string()),
        kv("collapse", cfg.collapse_name().into()),
        kv("seed", cfg.seed.to_string()),
        kv("point_seed", point_seed(cfg.seed, point).to_string()),
        kv("scan_point", point.to_string()),
        kv("scan_points", cfg.sequence.scan_points().to_string()),
        kv("scan_variables", vars),
        kv("scan_values", vals),
        kv("efficiency", cfg.detector.efficiency.to_string()),
        kv("jitter_fwhm_ps", cfg.detector.jitter_fwhm_ps.to_string()),
        kv("dark_rate_per_ns", cfg.detector.dark_rate_per_ns.to_string()),
        kv("laser_leakage", cfg.detector.laser_leakage.to_string()),
        kv("hbt_split", cfg.detector.hbt_split.to_string()),
        kv("filter", filter_description(cfg)),
        kv("dt_factor", cfg.dt_factor.to_string()),
        kv("block_size", cfg.block_size.to_string()),
        kv("tags", tag_count.to_string()),
        kv("config_hash", cfg.config_hash.clone()),
    ];
    if let Some(ch) = channel {
        out.insert(3, kv("channel", ch.to_string()));
    }
    out
}

pub fn simulate(cfg: &RunConfig, out_dir: &Path, stem: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Simulation(e.to_string()))?;
    let io_err = |e: trion::detection::DetectionError| CliError::Simulation(e.to_string());
    for point in 0..cfg.sequence.scan_points() {
        let run = run_point(cfg, point)?;
        let channels: &[u8] = if cfg.detector.hbt_split { &[0, 1] } else { &[0] };
        for &ch in channels {
            let tags: Vec<TimeTag> = run.tags.iter().filter(|t| t.channel == ch).copied().collect();
            let base = format!("{stem}_p{point:03}_c{ch}");
            let tag_path = out_dir.join(format!("{base}.csv"));
            write_tags(&tag_path, &tags).map_err(io_err)?;
            let meta = meta_entries(cfg, &run.sequence, point, Some(ch), tags.len());
            write_meta(&out_dir.join(format!("{base}.meta")), &meta).map_err(io_err)?;
            println!(
                "point {point}: {} emissions, {} tags -> {}",
                run.emissions,
                tags.len(),
                tag_path.display()
            );
        }
    }
    Ok(())
}

pub fn scan(cfg: &RunConfig, out_dir: &Path, stem: &str) -> Result<(), CliError> {
    if cfg.sequence.scans.is_empty() {
        return Err(CliError::Config(
            "scan requires a scan directive in the sequence file".into(),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Simulation(e.to_string()))?;
    let (w0, w1) = (cfg.scan_window_ns.0 * 1000.0, cfg.scan_window_ns.1 * 1000.0);
    let mut csv = String::from("point");
    for s in &cfg.sequence.scans {
        write!(csv, ",{}.{}", s.pulse, s.field).unwrap();
    }
    csv.push_str(",cycles,clicks,rate\n");
    let points = cfg.sequence.scan_points();
    for point in 0..points {
        let run = run_point(cfg, point)?;
        let clicks =
            run.tags.iter().filter(|t| t.t_ps >= w0 && t.t_ps < w1).count() as u64;
        write!(csv, "{point}").unwrap();
        for v in cfg.sequence.scan_values(point) {
            write!(csv, ",{v}").unwrap();
        }
        writeln!(csv, ",{},{clicks},{:.9}", cfg.cycles, clicks as f64 / cfg.cycles as f64)
            .unwrap();
    }
    let path = out_dir.join(format!("{stem}_scan.csv"));
    std::fs::write(&path, csv).map_err(|e| CliError::Simulation(e.to_string()))?;
    let meta = meta_entries(cfg, &cfg.sequence, 0, None, 0);
    let meta: Vec<(String, String)> = meta
        .into_iter()
        .filter(|(k, _)| !matches!(k.as_str(), "point_seed" | "scan_point" | "scan_values" | "tags"))
        .collect();
    write_meta(&path.with_extension("meta"), &meta)
        .map_err(|e| CliError::Simulation(e.to_string()))?;
    println!("wrote {} ({points} points)", path.display());
    Ok(())
}
