//! Run configuration: TOML text with one table per pipeline stage.
//!
//! Physical quantities are strings with a unit tag (`"4.05 MHz"`,
//! `"0.6 h/J"`); lists use `{ values = [...], unit = "..." }`. A config
//! must stay inside one unit system, and unknown keys are errors.

use std::path::{Path, PathBuf};

use quench::evolve::{EvolveOptions, PropagatorOptions};
use quench::fitting::{ModelSeries, PulseSettings, Weighting};
use quench::lattice::{Cutoff, InteractionModel, LatticeGeometry, Spacing};
use quench::model::ShiftMode;
use quench::nlce::{DEFAULT_EULER_START, DEFAULT_ORDER};
use quench::observables::{DetectionModel, Window, DEFAULT_R_MAX, DEFAULT_R_MIN};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::units::{Dimension, Quantity, QuantityList, UnitSystem};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    geometry: Option<RawGeometry>,
    interaction: Option<RawInteraction>,
    schedule: Option<RawSchedule>,
    solver: Option<RawSolver>,
    detection: Option<RawDetection>,
    sampling: Option<RawSampling>,
    analysis: Option<RawAnalysis>,
    fit: Option<RawFit>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    nx: usize,
    ny: usize,
    /// Relative spacing difference of the two lattice axes.
    anisotropy: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInteraction {
    c6: Quantity,
    cutoff: String,
    radius: Option<f64>,
    shift_mode: Option<ShiftMode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    kind: String,
    omega: Quantity,
    hold_time: Option<Quantity>,
    rise_time: Option<Quantity>,
    fall_time: Option<Quantity>,
    detunings: Option<QuantityList>,
    delta_initial: Option<Quantity>,
    delta_final: Option<Quantity>,
    ramp_rate: Option<Quantity>,
    checkpoints: Option<QuantityList>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    method: Option<String>,
    order: Option<usize>,
    steps_per_segment: Option<usize>,
    krylov_tol: Option<f64>,
    dense_max_sites: Option<usize>,
    euler_start: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    alpha: Option<f64>,
    rydberg_removal_eff: Option<f64>,
    filling: Option<f64>,
    ground_detection_eff: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    shots: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    input: Option<String>,
    window: Option<[i32; 2]>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    subsystem: Option<[usize; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    scan: Option<String>,
    c6_grid: QuantityList,
    weighting: Option<String>,
    series: Option<ModelSeries>,
    grid_cache: Option<String>,
    synthetic: Option<RawSynthetic>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthetic {
    c6: Quantity,
    alpha: f64,
    noise: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Nlce,
    Ed,
    Both,
}

impl Method {
    pub fn nlce(self) -> bool {
        matches!(self, Method::Nlce | Method::Both)
    }

    pub fn ed(self) -> bool {
        matches!(self, Method::Ed | Method::Both)
    }
}

#[derive(Debug, Clone)]
pub enum ScheduleConfig {
    Sudden {
        pulse: PulseSettings,
        detunings: Vec<f64>,
    },
    Ramp {
        omega: f64,
        delta_initial: f64,
        delta_final: f64,
        ramp_rate: f64,
        rise_time: f64,
        checkpoints: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub order: usize,
    pub evolve: EvolveOptions,
    pub euler_start: usize,
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub input: Option<PathBuf>,
    pub window: Window,
    pub r_min: f64,
    pub r_max: f64,
    pub subsystem: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub c6: f64,
    pub alpha: f64,
    pub noise: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub scan: Option<PathBuf>,
    pub c6_grid: Vec<f64>,
    pub weighting: Option<Weighting>,
    pub series: ModelSeries,
    pub grid_cache: PathBuf,
    pub synthetic: Option<SyntheticConfig>,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// SHA-256 of the config text.
    pub hash: String,
    pub units: Option<UnitSystem>,
    pub seed: u64,
    pub geometry: Option<LatticeGeometry>,
    pub interaction: Option<InteractionModel>,
    pub shift_mode: ShiftMode,
    pub schedule: Option<ScheduleConfig>,
    pub solver: SolverConfig,
    pub alpha: f64,
    pub detection: DetectionModel,
    pub shots: Option<usize>,
    pub analysis: AnalysisConfig,
    pub fit: Option<FitConfig>,
    pub output_dir: PathBuf,
}

/// Line of `key` (`section.name`) in the config text, 1-based.
pub fn locate(text: &str, key: &str) -> Option<usize> {
    let (section, name) = key.rsplit_once('.').unwrap_or(("", key));
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == key {
                return Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == name {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Checker<'a> {
    text: &'a str,
    system: Option<(UnitSystem, String)>,
}

impl<'a> Checker<'a> {
    fn err(&self, key: &str, msg: impl Into<String>) -> CliError {
        CliError::Config { key: key.to_string(), line: locate(self.text, key), message: msg.into() }
    }

    fn unit(&mut self, key: &str, system: UnitSystem, dim: Dimension, want: Dimension) -> Result<(), CliError> {
        if dim != want {
            return Err(self.err(key, format!("expected a {want}, found a {dim}")));
        }
        match &self.system {
            Some((s, first)) if *s != system => {
                let first = first.clone();
                let s = *s;
                Err(self.err(key, format!("mixed units: {key} is in {system} units but {first} is in {s} units")))
            }
            Some(_) => Ok(()),
            None => {
                self.system = Some((system, key.to_string()));
                Ok(())
            }
        }
    }

    fn q(&mut self, key: &str, q: &Quantity, want: Dimension) -> Result<f64, CliError> {
        self.unit(key, q.system, q.dimension, want)?;
        Ok(q.value)
    }

    fn opt_q(&mut self, key: &str, q: &Option<Quantity>, want: Dimension) -> Result<Option<f64>, CliError> {
        q.as_ref().map(|q| self.q(key, q, want)).transpose()
    }

    fn list(&mut self, key: &str, l: &QuantityList, want: Dimension) -> Result<Vec<f64>, CliError> {
        let (values, system, dim) = l.resolve().map_err(|m| self.err(key, m))?;
        self.unit(key, system, dim, want)?;
        if values.is_empty() {
            return Err(self.err(key, "list is empty"));
        }
        Ok(values)
    }
}

fn non_negative(c: &Checker, key: &str, v: f64) -> Result<f64, CliError> {
    if v < 0.0 {
        return Err(c.err(key, format!("must be non-negative, got {v}")));
    }
    Ok(v)
}

fn strictly_increasing(c: &Checker, key: &str, v: &[f64]) -> Result<(), CliError> {
    if v.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(c.err(key, "values must be strictly increasing"));
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config { key: String::new(), line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::parse(&text, &base)
    }

    /// Parses and validates `text`; relative paths are taken from `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            CliError::Config { key: String::new(), line, message: e.message().to_string() }
        })?;
        let mut c = Checker { text, system: None };
        let path = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let geometry = match &raw.geometry {
            Some(g) => {
                let spacing = Spacing::anisotropic(g.anisotropy).map_err(|e| c.err("geometry.anisotropy", e.to_string()))?;
                Some(LatticeGeometry::new(g.nx, g.ny, spacing).map_err(|e| c.err("geometry.nx", e.to_string()))?)
            }
            None => None,
        };

        let (interaction, shift_mode) = match &raw.interaction {
            Some(i) => {
                let c6 = c.q("interaction.c6", &i.c6, Dimension::Frequency)?;
                let cutoff = match (i.cutoff.as_str(), i.radius) {
                    ("nn", None) => Cutoff::NearestNeighbor,
                    ("nnn", None) => Cutoff::NextNearestNeighbor,
                    ("radius", Some(r_max)) => Cutoff::Radius { r_max },
                    ("radius", None) => return Err(c.err("interaction.radius", "cutoff = \"radius\" needs radius")),
                    ("nn" | "nnn", Some(_)) => return Err(c.err("interaction.radius", "radius is only used with cutoff = \"radius\"")),
                    (other, _) => return Err(c.err("interaction.cutoff", format!("unknown cutoff {other:?}; use nn, nnn or radius"))),
                };
                let model = InteractionModel::new(c6, cutoff).map_err(|e| c.err("interaction.c6", e.to_string()))?;
                (Some(model), i.shift_mode.unwrap_or_default())
            }
            None => (None, ShiftMode::default()),
        };

        let schedule = match &raw.schedule {
            Some(s) => Some(resolve_schedule(&mut c, s)?),
            None => None,
        };

        let solver = {
            let s = raw.solver.as_ref();
            let method = match s.and_then(|s| s.method.as_deref()).unwrap_or("nlce") {
                "nlce" => Method::Nlce,
                "ed" => Method::Ed,
                "both" => Method::Both,
                other => return Err(c.err("solver.method", format!("unknown method {other:?}; use nlce, ed or both"))),
            };
            let mut propagator = PropagatorOptions::default();
            if let Some(t) = s.and_then(|s| s.krylov_tol) {
                if !(t > 0.0) {
                    return Err(c.err("solver.krylov_tol", "must be positive"));
                }
                propagator.krylov_tol = t;
            }
            if let Some(d) = s.and_then(|s| s.dense_max_sites) {
                propagator.dense_max_sites = d;
            }
            let steps = s.and_then(|s| s.steps_per_segment).unwrap_or(EvolveOptions::default().steps_per_segment);
            if steps == 0 {
                return Err(c.err("solver.steps_per_segment", "must be positive"));
            }
            SolverConfig {
                method,
                order: s.and_then(|s| s.order).unwrap_or(DEFAULT_ORDER),
                evolve: EvolveOptions { steps_per_segment: steps, propagator },
                euler_start: s.and_then(|s| s.euler_start).unwrap_or(DEFAULT_EULER_START),
            }
        };

        let d = raw.detection.as_ref();
        let alpha = d.and_then(|d| d.alpha).unwrap_or(1.0);
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(c.err("detection.alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        let perfect = DetectionModel::perfect();
        let detection = DetectionModel {
            rydberg_removal_eff: d.and_then(|d| d.rydberg_removal_eff).unwrap_or(perfect.rydberg_removal_eff),
            filling: d.and_then(|d| d.filling).unwrap_or(perfect.filling),
            ground_detection_eff: d.and_then(|d| d.ground_detection_eff).unwrap_or(perfect.ground_detection_eff),
        };
        detection.validate().map_err(|e| c.err("detection", e.to_string()))?;

        let shots = match &raw.sampling {
            Some(s) if s.shots == 0 => return Err(c.err("sampling.shots", "must be positive")),
            Some(s) => Some(s.shots),
            None => None,
        };

        let analysis = {
            let a = raw.analysis.as_ref();
            let window = a.and_then(|a| a.window).unwrap_or([3, 3]);
            let r_min = a.and_then(|a| a.r_min).unwrap_or(DEFAULT_R_MIN);
            let r_max = a.and_then(|a| a.r_max).unwrap_or(DEFAULT_R_MAX);
            if !(r_min >= 1.0 && r_max >= r_min) {
                return Err(c.err("analysis.r_min", format!("need 1 <= r_min <= r_max, got {r_min}, {r_max}")));
            }
            let subsystem = a.and_then(|a| a.subsystem).unwrap_or([3, 3]);
            if subsystem[0] == 0 || subsystem[1] == 0 {
                return Err(c.err("analysis.subsystem", "sizes must be positive"));
            }
            AnalysisConfig {
                input: a.and_then(|a| a.input.as_deref()).map(path),
                window: Window::new(window[0], window[1]),
                r_min,
                r_max,
                subsystem: (subsystem[0], subsystem[1]),
            }
        };

        let fit = match &raw.fit {
            Some(f) => {
                let c6_grid = c.list("fit.c6_grid", &f.c6_grid, Dimension::Frequency)?;
                strictly_increasing(&c, "fit.c6_grid", &c6_grid)?;
                let weighting = match f.weighting.as_deref().unwrap_or("auto") {
                    "auto" => None,
                    "inverse_variance" => Some(Weighting::InverseVariance),
                    "uniform" => Some(Weighting::Uniform),
                    other => return Err(c.err("fit.weighting", format!("unknown weighting {other:?}; use auto, inverse_variance or uniform"))),
                };
                let synthetic = match &f.synthetic {
                    Some(s) => {
                        let c6 = c.q("fit.synthetic.c6", &s.c6, Dimension::Frequency)?;
                        if !(s.alpha > 0.0 && s.alpha <= 1.0) {
                            return Err(c.err("fit.synthetic.alpha", "must lie in (0, 1]"));
                        }
                        if let Some(n) = s.noise {
                            if !(n > 0.0) {
                                return Err(c.err("fit.synthetic.noise", "must be positive when given"));
                            }
                        }
                        Some(SyntheticConfig { c6, alpha: s.alpha, noise: s.noise })
                    }
                    None => None,
                };
                if f.scan.is_none() && synthetic.is_none() {
                    return Err(c.err("fit.scan", "give a scan file or a [fit.synthetic] table"));
                }
                if f.scan.is_some() && synthetic.is_some() {
                    return Err(c.err("fit.scan", "scan and [fit.synthetic] are mutually exclusive"));
                }
                Some(FitConfig {
                    scan: f.scan.as_deref().map(path),
                    c6_grid,
                    weighting,
                    series: f.series.unwrap_or_default(),
                    grid_cache: path(f.grid_cache.as_deref().unwrap_or("grid-cache")),
                    synthetic,
                })
            }
            None => None,
        };

        let output_dir = path(raw.output.as_ref().and_then(|o| o.dir.as_deref()).unwrap_or("out"));
        let hash = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(RunConfig {
            hash,
            units: c.system.map(|s| s.0),
            seed: raw.seed.unwrap_or(0),
            geometry,
            interaction,
            shift_mode,
            schedule,
            solver,
            alpha,
            detection,
            shots,
            analysis,
            fit,
            output_dir,
        })
    }

    pub fn missing(section: &str) -> CliError {
        CliError::Config { key: section.to_string(), line: None, message: format!("this command needs a [{section}] table") }
    }

    pub fn require_geometry(&self) -> Result<&LatticeGeometry, CliError> {
        self.geometry.as_ref().ok_or_else(|| RunConfig::missing("geometry"))
    }

    pub fn require_interaction(&self) -> Result<&InteractionModel, CliError> {
        self.interaction.as_ref().ok_or_else(|| RunConfig::missing("interaction"))
    }

    pub fn require_schedule(&self) -> Result<&ScheduleConfig, CliError> {
        self.schedule.as_ref().ok_or_else(|| RunConfig::missing("schedule"))
    }

    pub fn units_label(&self) -> String {
        self.units.map(|u| u.to_string()).unwrap_or_else(|| "none".into())
    }
}

fn resolve_schedule(c: &mut Checker, s: &RawSchedule) -> Result<ScheduleConfig, CliError> {
    let omega = c.q("schedule.omega", &s.omega, Dimension::Frequency)?;
    if !(omega > 0.0) {
        return Err(c.err("schedule.omega", "must be positive"));
    }
    let rise = c.opt_q("schedule.rise_time", &s.rise_time, Dimension::Time)?.unwrap_or(0.0);
    let rise = non_negative(c, "schedule.rise_time", rise)?;
    let allowed: &[&str] = match s.kind.as_str() {
        "sudden" => &["hold_time", "rise_time", "fall_time", "detunings"],
        "ramp" => &["rise_time", "delta_initial", "delta_final", "ramp_rate", "checkpoints"],
        other => return Err(c.err("schedule.kind", format!("unknown schedule kind {other:?}; use sudden or ramp"))),
    };
    let present = [
        ("hold_time", s.hold_time.is_some()),
        ("fall_time", s.fall_time.is_some()),
        ("detunings", s.detunings.is_some()),
        ("delta_initial", s.delta_initial.is_some()),
        ("delta_final", s.delta_final.is_some()),
        ("ramp_rate", s.ramp_rate.is_some()),
        ("checkpoints", s.checkpoints.is_some()),
    ];
    for (name, is_set) in present {
        if is_set && !allowed.contains(&name) {
            return Err(c.err(&format!("schedule.{name}"), format!("not used by a {} schedule", s.kind)));
        }
    }
    let need = |c: &Checker, name: &str| c.err(&format!("schedule.{name}"), format!("a {} schedule needs {name}", s.kind));
    if s.kind == "sudden" {
        let hold = c.opt_q("schedule.hold_time", &s.hold_time, Dimension::Time)?.ok_or_else(|| need(c, "hold_time"))?;
        let hold = non_negative(c, "schedule.hold_time", hold)?;
        let fall = c.opt_q("schedule.fall_time", &s.fall_time, Dimension::Time)?.unwrap_or(0.0);
        let fall = non_negative(c, "schedule.fall_time", fall)?;
        let detunings = match &s.detunings {
            Some(l) => c.list("schedule.detunings", l, Dimension::Frequency)?,
            None => return Err(need(c, "detunings")),
        };
        strictly_increasing(c, "schedule.detunings", &detunings)?;
        let pulse = PulseSettings { omega, hold_time: hold, rise_time: rise, fall_time: fall };
        pulse.validate().map_err(|e| c.err("schedule.hold_time", e.to_string()))?;
        Ok(ScheduleConfig::Sudden { pulse, detunings })
    } else {
        let delta_initial = c.opt_q("schedule.delta_initial", &s.delta_initial, Dimension::Frequency)?.ok_or_else(|| need(c, "delta_initial"))?;
        let delta_final = c.opt_q("schedule.delta_final", &s.delta_final, Dimension::Frequency)?.ok_or_else(|| need(c, "delta_final"))?;
        let ramp_rate = c.opt_q("schedule.ramp_rate", &s.ramp_rate, Dimension::Rate)?.ok_or_else(|| need(c, "ramp_rate"))?;
        if !(ramp_rate > 0.0) {
            return Err(c.err("schedule.ramp_rate", "must be positive"));
        }
        let checkpoints = match &s.checkpoints {
            Some(l) => c.list("schedule.checkpoints", l, Dimension::Time)?,
            None => return Err(need(c, "checkpoints")),
        };
        if checkpoints.iter().any(|&t| t < 0.0) || checkpoints.windows(2).any(|w| w[0] > w[1]) {
            return Err(c.err("schedule.checkpoints", "checkpoint times must be non-negative and sorted"));
        }
        let cfg = ScheduleConfig::Ramp { omega, delta_initial, delta_final, ramp_rate, rise_time: rise, checkpoints };
        let schedule = cfg.ramp().map_err(|e| c.err("schedule.ramp_rate", e.to_string()))?;
        if let ScheduleConfig::Ramp { checkpoints, .. } = &cfg {
            if checkpoints.iter().any(|&t| t > schedule.duration() * (1.0 + 1e-12)) {
                return Err(c.err("schedule.checkpoints", format!("checkpoints beyond the schedule end at {}", schedule.duration())));
            }
        }
        Ok(cfg)
    }
}

impl ScheduleConfig {
    pub fn ramp(&self) -> quench::Result<quench::model::Schedule> {
        match self {
            ScheduleConfig::Ramp { omega, delta_initial, delta_final, ramp_rate, rise_time, .. } => {
                quench::model::ramp_schedule(*omega, *delta_initial, *delta_final, *ramp_rate, *rise_time)
            }
            ScheduleConfig::Sudden { .. } => Err(quench::Error::InvalidArgument("not a ramp schedule".into())),
        }
    }
}
