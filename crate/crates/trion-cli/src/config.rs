//! Flat key=value configuration files with bracketed sections. One format
//! serves both run configs (simulate/scan) and analysis specs; unknown or
//! duplicate keys are errors that name the file, line and key.

use sha2::{Digest, Sha256};
use std::path::Path;
use trion::detection::{DetectorConfig, FilterConfig, FilterShape};
use trion::dynamics::{CollapseBasis, Imperfections, DEFAULT_DT_FACTOR};
use trion::pulse::{parse_sequence, RotationCalibration, Sequence};
use trion::quantum::{build_channels, Dephasing, DephasingShape, SystemParams, N_CHANNELS};
use trion::units::{uev_to_rad_per_ns, wavelength_offset_to_rad_per_ns};

/// Reference wavelength for nm-denominated filter settings.
pub const LAMBDA0_NM: f64 = 1550.0;

struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
    used: bool,
}

/// Section-aware key=value reader with consumption tracking, so leftover
/// (unknown) keys can be reported after parsing.
pub struct KvReader {
    label: String,
    entries: Vec<Entry>,
}

impl KvReader {
    pub fn parse(path: &Path, text: &str) -> Result<Self, String> {
        let label = path.display().to_string();
        let mut entries: Vec<Entry> = Vec::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(format!("{label}:{line}: malformed section header {s}"));
                };
                section = name.trim().to_string();
                continue;
            }
            let Some((k, v)) = s.split_once('=') else {
                return Err(format!("{label}:{line}: expected key = value, got {s}"));
            };
            let entry = Entry {
                section: section.clone(),
                key: k.trim().to_string(),
                value: v.trim().to_string(),
                line,
                used: false,
            };
            if let Some(prev) =
                entries.iter().find(|e| e.section == entry.section && e.key == entry.key)
            {
                return Err(format!(
                    "{label}:{line}: duplicate key {} in [{}] (first at line {})",
                    entry.key, entry.section, prev.line
                ));
            }
            entries.push(entry);
        }
        Ok(Self { label, entries })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let e = self.entries.iter_mut().find(|e| e.section == section && e.key == key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    pub fn get_str(&mut self, section: &str, key: &str) -> Option<String> {
        self.take(section, key).map(|(v, _)| v)
    }

    pub fn require_str(&mut self, section: &str, key: &str) -> Result<String, String> {
        self.get_str(section, key)
            .ok_or_else(|| format!("{}: missing required key {key} in [{section}]", self.label))
    }

    fn parsed<T: std::str::FromStr>(
        &mut self,
        section: &str,
        key: &str,
        what: &str,
    ) -> Result<Option<T>, String> {
        let Some((v, line)) = self.take(section, key) else { return Ok(None) };
        v.parse::<T>().map(Some).map_err(|_| {
            format!("{}:{line}: key {key}: expected {what}, got {v}", self.label)
        })
    }

    pub fn get_f64(&mut self, section: &str, key: &str) -> Result<Option<f64>, String> {
        self.parsed(section, key, "a number")
    }

    pub fn get_u64(&mut self, section: &str, key: &str) -> Result<Option<u64>, String> {
        self.parsed(section, key, "a non-negative integer")
    }

    pub fn get_u8(&mut self, section: &str, key: &str) -> Result<Option<u8>, String> {
        self.parsed(section, key, "a small non-negative integer")
    }

    pub fn get_bool(&mut self, section: &str, key: &str) -> Result<Option<bool>, String> {
        self.parsed(section, key, "true or false")
    }

    /// Comma-separated pair like `window_ns = 1.15, 1.7`.
    pub fn get_pair(&mut self, section: &str, key: &str) -> Result<Option<(f64, f64)>, String> {
        let Some((v, line)) = self.take(section, key) else { return Ok(None) };
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        let parsed: Option<(f64, f64)> = match parts.as_slice() {
            [a, b] => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        parsed.ok_or_else(|| {
            format!("{}:{line}: key {key}: expected two comma-separated numbers, got {v}", self.label)
        })
        .map(Some)
    }

    pub fn require_pair(&mut self, section: &str, key: &str) -> Result<(f64, f64), String> {
        self.get_pair(section, key)?
            .ok_or_else(|| format!("{}: missing required key {key} in [{section}]", self.label))
    }

    /// Errors on any key that was never consumed.
    pub fn finish(self) -> Result<(), String> {
        if let Some(e) = self.entries.iter().find(|e| !e.used) {
            return Err(format!(
                "{}:{}: unknown key {} in [{}]",
                self.label, e.line, e.key, e.section
            ));
        }
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn channel_index(token: &str) -> Option<usize> {
    let idx = token.strip_prefix('T')?.parse::<usize>().ok()?;
    (1..=N_CHANNELS).contains(&idx).then(|| idx - 1)
}

/// A fully resolved simulation configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub params: SystemParams,
    pub sequence: Sequence,
    pub calibration: Option<RotationCalibration>,
    pub imperfections: Imperfections,
    pub collapse: CollapseBasis,
    pub dt_factor: f64,
    pub cycles: u64,
    pub seed: u64,
    pub block_size: u64,
    pub detector: DetectorConfig,
    /// Readout integration window for scan statistics, ns.
    pub scan_window_ns: (f64, f64),
    /// Hash over the config and sequence text; stamped into output metadata.
    pub config_hash: String,
}

impl RunConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let mut kv = KvReader::parse(path, &text)?;
        let label = kv.label().to_string();

        let delta_e = uev_to_rad_per_ns(kv.get_f64("system", "delta_e_uev")?.unwrap_or(35.0));
        let delta_h = uev_to_rad_per_ns(kv.get_f64("system", "delta_h_uev")?.unwrap_or(65.0));
        let lifetime = kv.get_f64("system", "lifetime_ns")?.unwrap_or(1.32);
        if !(lifetime > 0.0) {
            return Err(format!("{label}: key lifetime_ns must be positive, got {lifetime}"));
        }
        let mut params = SystemParams::symmetric(delta_e, delta_h, 1.0 / lifetime);
        let t2star = kv.get_f64("system", "t2star_ns")?;
        let shape_key = kv.get_str("system", "dephasing_shape");
        if let Some(t2) = t2star {
            if !(t2 > 0.0) {
                return Err(format!("{label}: key t2star_ns must be positive, got {t2}"));
            }
            let shape = match shape_key.as_deref() {
                None | Some("gaussian") => DephasingShape::Gaussian,
                Some("exponential") => DephasingShape::Exponential,
                Some(other) => {
                    return Err(format!(
                        "{label}: key dephasing_shape: expected gaussian or exponential, got {other}"
                    ))
                }
            };
            params.dephasing = Some(Dephasing { t2star: t2, shape });
        } else if shape_key.is_some() {
            return Err(format!("{label}: dephasing_shape requires t2star_ns"));
        }

        let seq_rel = kv.require_str("run", "sequence")?;
        let sequence_path = path.parent().unwrap_or(Path::new(".")).join(seq_rel);
        let seq_text = std::fs::read_to_string(&sequence_path)
            .map_err(|e| format!("{}: {e}", sequence_path.display()))?;
        let sequence = parse_sequence(&seq_text)
            .map_err(|e| format!("{}: {e}", sequence_path.display()))?;
        let cycles = kv.get_u64("run", "cycles")?.unwrap_or(100_000);
        if cycles == 0 {
            return Err(format!("{label}: trajectories must be ≥ 1"));
        }
        let seed = match seed_override.or(kv.get_u64("run", "seed")?) {
            Some(s) => s,
            None => return Err(format!("{label}: seed is required: set [run] seed or pass --seed")),
        };
        let block_size = kv.get_u64("run", "block_size")?.unwrap_or(4096).max(1);
        let collapse = match kv.get_str("run", "collapse").as_deref() {
            None | Some("resolved") => CollapseBasis::FrequencyResolved,
            Some("erased") => CollapseBasis::FrequencyErased,
            Some(other) => {
                return Err(format!(
                    "{label}: key collapse: expected resolved or erased, got {other}"
                ))
            }
        };
        let dt_factor = kv.get_f64("run", "dt_factor")?.unwrap_or(DEFAULT_DT_FACTOR);
        let rot_coeff = kv.get_f64("run", "rotation_coeff")?;
        let rot_exp = kv.get_f64("run", "rotation_exponent")?;
        let calibration = match (rot_coeff, rot_exp) {
            (Some(c), e) => Some(RotationCalibration {
                coeff: c,
                exponent: e.unwrap_or(RotationCalibration::DEFAULT_EXPONENT),
            }),
            (None, Some(_)) => {
                return Err(format!("{label}: rotation_exponent requires rotation_coeff"))
            }
            (None, None) => None,
        };
        let imperfections = Imperfections {
            rotation_axis_tilt: kv.get_f64("run", "rotation_axis_tilt")?.unwrap_or(0.0),
        };

        let mut detector = DetectorConfig::default();
        if let Some(v) = kv.get_f64("detector", "efficiency")? {
            detector.efficiency = v;
        }
        if let Some(v) = kv.get_f64("detector", "jitter_fwhm_ps")? {
            detector.jitter_fwhm_ps = v;
        }
        if let Some(v) = kv.get_f64("detector", "dark_rate_per_ns")? {
            detector.dark_rate_per_ns = v;
        }
        if let Some(v) = kv.get_f64("detector", "laser_leakage")? {
            detector.laser_leakage = v;
        }
        if let Some(v) = kv.get_bool("detector", "hbt_split")? {
            detector.hbt_split = v;
        }
        let fwhm_nm = kv.get_f64("detector", "filter_fwhm_nm")?;
        let center = kv.get_str("detector", "filter_center");
        let offset_nm = kv.get_f64("detector", "filter_offset_nm")?;
        let shape_key = kv.get_str("detector", "filter_shape");
        if let Some(fwhm_nm) = fwhm_nm {
            let base = match center.as_deref() {
                Some(token) => {
                    let idx = channel_index(token).ok_or_else(|| {
                        format!("{label}: key filter_center: expected T1..T4, got {token}")
                    })?;
                    build_channels(&params)[idx].offset
                }
                None => 0.0,
            };
            let shape = match shape_key.as_deref() {
                None | Some("gaussian") => FilterShape::Gaussian,
                Some("lorentzian") => FilterShape::Lorentzian,
                Some(other) => {
                    return Err(format!(
                        "{label}: key filter_shape: expected gaussian or lorentzian, got {other}"
                    ))
                }
            };
            detector.filter = Some(FilterConfig {
                center_offset: base
                    + wavelength_offset_to_rad_per_ns(offset_nm.unwrap_or(0.0), LAMBDA0_NM),
                fwhm: wavelength_offset_to_rad_per_ns(fwhm_nm, LAMBDA0_NM),
                shape,
            });
        } else if center.is_some() || offset_nm.is_some() || shape_key.is_some() {
            return Err(format!("{label}: filter settings require filter_fwhm_nm"));
        }
        detector.validate().map_err(|e| format!("{label}: {e}"))?;

        let scan_window_ns =
            kv.get_pair("scan", "window_ns")?.unwrap_or((0.0, sequence.period));
        kv.finish()?;

        let config_hash = sha256_hex(&[text.as_bytes(), b"\n", seq_text.as_bytes()]);
        Ok(Self {
            params,
            sequence,
            calibration,
            imperfections,
            collapse,
            dt_factor,
            cycles,
            seed,
            block_size,
            detector,
            scan_window_ns,
            config_hash,
        })
    }

    pub fn collapse_name(&self) -> &'static str {
        match self.collapse {
            CollapseBasis::FrequencyResolved => "resolved",
            CollapseBasis::FrequencyErased => "erased",
        }
    }
}

/// What `analyze` should compute. All windows are stored in ps.
#[derive(Debug)]
pub enum AnalysisKind {
    G2 {
        window_a: (f64, f64),
        window_b: (f64, f64),
        max_lag: u64,
        min_mean_coincidences: f64,
    },
    Conditional {
        herald: (f64, f64),
        signal: (f64, f64),
        herald_channel: Option<u8>,
        signal_channel: Option<u8>,
        bin_width_ps: f64,
    },
    Fringe {
        herald: (f64, f64),
        readout: (f64, f64),
        herald_channel: Option<u8>,
        readout_channel: Option<u8>,
        bin_width_ps: f64,
        period_ps: f64,
        jitter_fwhm_ps: f64,
        resamples: usize,
    },
    Lifetime {
        window: (f64, f64),
        bin_width_ps: f64,
        tail_start_ps: f64,
    },
    Classical {
        herald: (f64, f64),
        readout: (f64, f64),
        herald_channel: Option<u8>,
        readout_channel: Option<u8>,
        resamples: usize,
    },
}

fn ns_pair_to_ps(w: (f64, f64)) -> (f64, f64) {
    (w.0 * 1000.0, w.1 * 1000.0)
}

pub fn load_analysis_spec(path: &Path) -> Result<AnalysisKind, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut kv = KvReader::parse(path, &text)?;
    let kind = kv.require_str("analysis", "kind")?;
    let out = match kind.as_str() {
        "g2" => {
            let a = ns_pair_to_ps(kv.require_pair("analysis", "window_a_ns")?);
            let b = kv.get_pair("analysis", "window_b_ns")?.map(ns_pair_to_ps).unwrap_or(a);
            AnalysisKind::G2 {
                window_a: a,
                window_b: b,
                max_lag: kv.get_u64("analysis", "max_lag")?.unwrap_or(10),
                min_mean_coincidences: kv
                    .get_f64("analysis", "min_mean_coincidences")?
                    .unwrap_or(100.0),
            }
        }
        "conditional" => AnalysisKind::Conditional {
            herald: ns_pair_to_ps(kv.require_pair("analysis", "herald_window_ns")?),
            signal: ns_pair_to_ps(kv.require_pair("analysis", "signal_window_ns")?),
            herald_channel: kv.get_u8("analysis", "herald_channel")?,
            signal_channel: kv.get_u8("analysis", "signal_channel")?,
            bin_width_ps: kv.get_f64("analysis", "bin_width_ps")?.unwrap_or(50.0),
        },
        "fringe" => AnalysisKind::Fringe {
            herald: ns_pair_to_ps(kv.require_pair("analysis", "herald_window_ns")?),
            readout: ns_pair_to_ps(kv.require_pair("analysis", "readout_window_ns")?),
            herald_channel: kv.get_u8("analysis", "herald_channel")?,
            readout_channel: kv.get_u8("analysis", "readout_channel")?,
            bin_width_ps: kv.get_f64("analysis", "bin_width_ps")?.unwrap_or(8.0),
            period_ps: kv
                .get_f64("analysis", "period_ps")?
                .ok_or_else(|| format!("{}: missing required key period_ps", kv.label()))?,
            jitter_fwhm_ps: kv.get_f64("analysis", "jitter_fwhm_ps")?.unwrap_or(0.0),
            resamples: kv.get_u64("analysis", "resamples")?.unwrap_or(200) as usize,
        },
        "lifetime" => AnalysisKind::Lifetime {
            window: ns_pair_to_ps(kv.require_pair("analysis", "window_ns")?),
            bin_width_ps: kv.get_f64("analysis", "bin_width_ps")?.unwrap_or(25.0),
            tail_start_ps: kv
                .get_f64("analysis", "tail_start_ns")?
                .ok_or_else(|| format!("{}: missing required key tail_start_ns", kv.label()))?
                * 1000.0,
        },
        "classical" => AnalysisKind::Classical {
            herald: ns_pair_to_ps(kv.require_pair("analysis", "herald_window_ns")?),
            readout: ns_pair_to_ps(kv.require_pair("analysis", "readout_window_ns")?),
            herald_channel: kv.get_u8("analysis", "herald_channel")?,
            readout_channel: kv.get_u8("analysis", "readout_channel")?,
            resamples: kv.get_u64("analysis", "resamples")?.unwrap_or(200) as usize,
        },
        other => {
            return Err(format!(
                "{}: key kind: expected g2, conditional, fringe, lifetime or classical, got {other}",
                kv.label()
            ))
        }
    };
    kv.finish()?;
    Ok(out)
}
