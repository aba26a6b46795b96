//! Line-oriented parser for the sequence text format.
//!
//! ```text
//! period 25
//! pulse reset kind=reset t0=14 dur=0.1
//! pulse pump  kind=drive t0=2.5 shape=square dur=6 target=T1 rabi_ghz=0.75
//! pulse ent   kind=drive t0=0.95 shape=gauss fwhm=0.3 target=T1 rabi_ghz=1.5656
//! pulse rot1  kind=rotate t0=4 theta_pi=0.5 detuning_nm=0.71
//! scan rot1.theta_pi from=0.5 to=1.5 steps=2
//! ```
//!
//! `#` starts a comment; blank lines are ignored. Pulse names must be unique
//! and contain no `.` (reserved for scan paths).

use super::*;
use std::collections::HashMap;

pub fn parse_sequence(text: &str) -> Result<Sequence, PulseError> {
    let mut period: Option<f64> = None;
    let mut pulses: Vec<Pulse> = Vec::new();
    let mut scans: Vec<ScanSpec> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        match tokens.next().unwrap() {
            "period" => {
                let val = tokens
                    .next()
                    .ok_or_else(|| syntax(line, "period needs a value in ns"))?;
                if period.is_some() {
                    return Err(syntax(line, "duplicate period directive"));
                }
                period = Some(parse_f64(line, "period", val)?);
                if let Some(extra) = tokens.next() {
                    return Err(syntax(line, format!("unexpected token {extra}")));
                }
            }
            "pulse" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| syntax(line, "pulse needs a name"))?
                    .to_string();
                if name.contains('.') {
                    return Err(syntax(line, format!("pulse name {name} may not contain '.'")));
                }
                if pulses.iter().any(|p| p.name == name) {
                    return Err(syntax(line, format!("duplicate pulse name {name}")));
                }
                let attrs = parse_attrs(line, tokens)?;
                pulses.push(build_pulse(line, name, attrs)?);
            }
            "scan" => {
                let path = tokens
                    .next()
                    .ok_or_else(|| syntax(line, "scan needs a <pulse>.<field> path"))?;
                let (pulse, field) = path
                    .split_once('.')
                    .ok_or_else(|| syntax(line, format!("scan path {path} is not <pulse>.<field>")))?;
                let attrs = parse_attrs(line, tokens)?;
                let mut attrs = Attrs { line, map: attrs };
                let from = attrs.take_f64("from")?;
                let to = attrs.take_f64("to")?;
                let steps = attrs.take_usize("steps")?;
                attrs.finish()?;
                scans.push(ScanSpec {
                    pulse: pulse.to_string(),
                    field: field.to_string(),
                    from,
                    to,
                    steps,
                });
            }
            other => return Err(syntax(line, format!("unknown directive {other}"))),
        }
    }

    let period = period.ok_or_else(|| syntax(0, "missing period directive"))?;
    Sequence::new(period, pulses, scans)
}

struct Attrs {
    line: usize,
    map: HashMap<String, String>,
}

impl Attrs {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take_f64(&mut self, key: &str) -> Result<f64, PulseError> {
        let v = self
            .take(key)
            .ok_or_else(|| syntax(self.line, format!("missing {key}=")))?;
        parse_f64(self.line, key, &v)
    }

    fn take_f64_opt(&mut self, key: &str) -> Result<Option<f64>, PulseError> {
        self.take(key).map(|v| parse_f64(self.line, key, &v)).transpose()
    }

    fn take_usize(&mut self, key: &str) -> Result<usize, PulseError> {
        let v = self
            .take(key)
            .ok_or_else(|| syntax(self.line, format!("missing {key}=")))?;
        v.parse::<usize>()
            .map_err(|_| syntax(self.line, format!("{key}={v} is not a non-negative integer")))
    }

    fn finish(self) -> Result<(), PulseError> {
        if let Some(key) = self.map.keys().next() {
            return Err(syntax(self.line, format!("unexpected attribute {key}=")));
        }
        Ok(())
    }
}

fn parse_attrs<'a>(
    line: usize,
    tokens: impl Iterator<Item = &'a str>,
) -> Result<HashMap<String, String>, PulseError> {
    let mut map = HashMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("expected key=value, got {tok}")))?;
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(syntax(line, format!("duplicate attribute {k}=")));
        }
    }
    Ok(map)
}

fn build_pulse(
    line: usize,
    name: String,
    attrs: HashMap<String, String>,
) -> Result<Pulse, PulseError> {
    let mut attrs = Attrs { line, map: attrs };
    let kind = attrs
        .take("kind")
        .ok_or_else(|| syntax(line, "missing kind="))?;
    let t0 = attrs.take_f64("t0")?;
    let body = match kind.as_str() {
        "reset" => {
            let dur = attrs.take_f64("dur")?;
            PulseBody::Reset { dur }
        }
        "drive" => {
            let shape_tok = attrs
                .take("shape")
                .ok_or_else(|| syntax(line, "drive needs shape=square|gauss"))?;
            let shape = match shape_tok.as_str() {
                "square" => Shape::Square { dur: attrs.take_f64("dur")? },
                "gauss" => Shape::Gaussian { fwhm: attrs.take_f64("fwhm")? },
                other => return Err(syntax(line, format!("unknown shape {other}"))),
            };
            let target_tok = attrs
                .take("target")
                .ok_or_else(|| syntax(line, "drive needs target=T1..T4"))?;
            let target = parse_target(&name, &target_tok)?;
            let rabi_ghz = attrs.take_f64("rabi_ghz")?;
            PulseBody::Drive { shape, target, rabi_ghz, role: infer_role(&name) }
        }
        "rotate" => {
            let theta = attrs.take_f64_opt("theta_pi")?;
            let power = attrs.take_f64_opt("power_mw")?;
            let angle = match (theta, power) {
                (Some(x), None) => RotationAngle::ThetaPi(x),
                (None, Some(x)) => RotationAngle::PowerMw(x),
                _ => {
                    return Err(syntax(
                        line,
                        "rotate needs exactly one of theta_pi= or power_mw=",
                    ))
                }
            };
            let detuning_nm = attrs.take_f64_opt("detuning_nm")?.unwrap_or(0.0);
            PulseBody::Rotate { angle, detuning_nm }
        }
        other => return Err(syntax(line, format!("unknown kind {other}"))),
    };
    attrs.finish()?;
    Ok(Pulse { name, t0, body })
}

fn parse_target(pulse: &str, token: &str) -> Result<usize, PulseError> {
    for i in 0..crate::quantum::N_CHANNELS {
        if token == format!("T{}", i + 1) {
            return Ok(i);
        }
    }
    Err(PulseError::UnknownTarget { name: pulse.to_string(), token: token.to_string() })
}

fn infer_role(name: &str) -> DriveRole {
    let lower = name.to_ascii_lowercase();
    if lower.starts_with("read") || lower.starts_with("probe") {
        DriveRole::Readout
    } else if lower.starts_with("ent") {
        DriveRole::Entanglement
    } else {
        DriveRole::Pump
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, PulseError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| syntax(line, format!("{key}={v} is not a finite number")))
}

fn syntax(line: usize, reason: impl Into<String>) -> PulseError {
    PulseError::Syntax { line, reason: reason.into() }
}
