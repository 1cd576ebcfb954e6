use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{sudden_schedule, Schedule};

/// Rabi pulse applied at fixed detuning before imaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSettings {
    pub omega: f64,
    pub hold_time: f64,
    pub rise_time: f64,
    pub fall_time: f64,
}

impl PulseSettings {
    /// Square pulse of area `pi/2` on the Bloch sphere, `omega * hold = 1/4`.
    pub fn quarter_period(omega: f64) -> Self {
        PulseSettings { omega, hold_time: 0.25 / omega, rise_time: 0.0, fall_time: 0.0 }
    }

    pub fn schedule(&self, delta: f64) -> Result<Schedule> {
        sudden_schedule(self.omega, delta, self.hold_time, self.rise_time, self.fall_time)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule(0.0).map(|_| ())
    }
}

/// Measured correlators at one detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub delta: f64,
    pub c00: f64,
    pub c10: f64,
    pub c01: f64,
    /// One-sigma errors of `c00`, `c10`, `c01`.
    pub errors: Option<[f64; 3]>,
}

impl ScanPoint {
    pub fn values(&self) -> [f64; 3] {
        [self.c00, self.c10, self.c01]
    }
}

/// Correlators after a sudden pulse for a range of detunings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorScan {
    points: Vec<ScanPoint>,
    pub pulse: PulseSettings,
    pub metadata: BTreeMap<String, String>,
}

const COLUMNS: [&str; 7] = ["delta", "c00", "c00_err", "c10", "c10_err", "c01", "c01_err"];

impl CorrelatorScan {
    /// Detunings must increase strictly; either every point carries positive
    /// errors or none does.
    pub fn new(points: Vec<ScanPoint>, pulse: PulseSettings) -> Result<Self> {
        pulse.validate()?;
        if points.is_empty() {
            return invalid("scan has no points");
        }
        if points.windows(2).any(|w| !(w[0].delta < w[1].delta)) {
            return invalid("scan detunings must be strictly increasing");
        }
        let with_errors = points.iter().filter(|p| p.errors.is_some()).count();
        if with_errors != 0 && with_errors != points.len() {
            return invalid("either all scan points carry errors or none does");
        }
        for p in &points {
            if p.values().iter().chain([p.delta].iter()).any(|v| !v.is_finite()) {
                return invalid(format!("non-finite value in scan point at delta = {}", p.delta));
            }
            if let Some(e) = p.errors {
                if e.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                    return invalid(format!("errors must be positive at delta = {}", p.delta));
                }
            }
        }
        Ok(CorrelatorScan { points, pulse, metadata: BTreeMap::new() })
    }

    pub fn points(&self) -> &[ScanPoint] {
        &self.points
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta).collect()
    }

    pub fn has_errors(&self) -> bool {
        self.points[0].errors.is_some()
    }

    /// Comment header with the pulse and metadata, then the seven columns.
    /// Missing errors are written as empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let p = &self.pulse;
        let _ = writeln!(out, "# correlator scan omega={} hold_time={} rise_time={} fall_time={}", p.omega, p.hold_time, p.rise_time, p.fall_time);
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "{}", COLUMNS.join(","));
        for q in &self.points {
            let e = q.errors.map(|e| e.map(|x| x.to_string())).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{},{}", q.delta, q.c00, e[0], q.c10, e[1], q.c01, e[2]);
        }
        out
    }

    /// Parses [`CorrelatorScan::to_csv`] output. `pulse` is used when the file
    /// has no pulse header.
    pub fn from_csv(text: &str, pulse: Option<PulseSettings>) -> Result<Self> {
        let mut pulse = pulse;
        let mut metadata = BTreeMap::new();
        let mut header_seen = false;
        let mut points = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse(format!("scan line {}: {msg}", ln + 1));
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(rest) = comment.strip_prefix("correlator scan") {
                    let mut fields = BTreeMap::new();
                    for kv in rest.split_whitespace() {
                        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("bad field {kv:?}")))?;
                        let v: f64 = v.parse().map_err(|_| err(format!("bad number in {kv:?}")))?;
                        fields.insert(k.to_string(), v);
                    }
                    let get = |k: &str| fields.get(k).copied().ok_or_else(|| err(format!("missing {k} in pulse header")));
                    pulse = Some(PulseSettings {
                        omega: get("omega")?,
                        hold_time: get("hold_time")?,
                        rise_time: get("rise_time")?,
                        fall_time: get("fall_time")?,
                    });
                } else if let Some((k, v)) = comment.split_once('=') {
                    metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if !header_seen {
                if fields != COLUMNS {
                    return Err(err(format!("expected header {}", COLUMNS.join(","))));
                }
                header_seen = true;
                continue;
            }
            if fields.len() != COLUMNS.len() {
                return Err(err(format!("expected {} fields, found {}", COLUMNS.len(), fields.len())));
            }
            let num = |k: usize| fields[k].parse::<f64>().map_err(|_| err(format!("bad {} value {:?}", COLUMNS[k], fields[k])));
            let errs = [fields[2], fields[4], fields[6]];
            let errors = if errs.iter().all(|f| f.is_empty()) {
                None
            } else {
                Some([num(2)?, num(4)?, num(6)?])
            };
            points.push(ScanPoint { delta: num(0)?, c00: num(1)?, c10: num(3)?, c01: num(5)?, errors });
        }
        if !header_seen {
            return Err(Error::Parse("scan has no header row".into()));
        }
        let pulse = pulse.ok_or_else(|| Error::Parse("scan has no pulse header and no pulse was supplied".into()))?;
        let mut scan = CorrelatorScan::new(points, pulse)?;
        scan.metadata = metadata;
        Ok(scan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(delta: f64, errors: Option<[f64; 3]>) -> ScanPoint {
        ScanPoint { delta, c00: 0.9, c10: -0.1, c01: -0.12, errors }
    }

    #[test]
    fn csv_round_trip() {
        let pulse = PulseSettings::quarter_period(4.05);
        let mut scan = CorrelatorScan::new(vec![point(-1.0, Some([0.01, 0.02, 0.03])), point(0.5, Some([0.01, 0.02, 0.03]))], pulse).unwrap();
        scan.metadata.insert("source".into(), "test".into());
        let back = CorrelatorScan::from_csv(&scan.to_csv(), None).unwrap();
        assert_eq!(back, scan);
        let plain = CorrelatorScan::new(vec![point(0.0, None)], pulse).unwrap();
        assert_eq!(CorrelatorScan::from_csv(&plain.to_csv(), None).unwrap(), plain);
    }

    #[test]
    fn invariants() {
        let pulse = PulseSettings::quarter_period(4.05);
        assert!(CorrelatorScan::new(vec![point(1.0, None), point(1.0, None)], pulse).is_err());
        assert!(CorrelatorScan::new(vec![point(1.0, None), point(0.0, None)], pulse).is_err());
        assert!(CorrelatorScan::new(vec![point(0.0, Some([0.1, 0.0, 0.1]))], pulse).is_err());
        assert!(CorrelatorScan::new(vec![point(0.0, Some([0.1; 3])), point(1.0, None)], pulse).is_err());
        assert!(CorrelatorScan::new(vec![], pulse).is_err());
    }

    #[test]
    fn csv_without_pulse_needs_one() {
        let text = "delta,c00,c00_err,c10,c10_err,c01,c01_err\n0,0.9,,0.1,,0.1,\n";
        assert!(CorrelatorScan::from_csv(text, None).is_err());
        let scan = CorrelatorScan::from_csv(text, Some(PulseSettings::quarter_period(1.0))).unwrap();
        assert!(!scan.has_errors());
    }
}
