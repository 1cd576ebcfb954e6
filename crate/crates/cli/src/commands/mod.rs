mod analyze;
mod fit;
mod ramp;
mod sample;
mod sudden;

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::CliError;

pub use analyze::run as analyze;
pub use fit::run as fit;
pub use ramp::run as ramp;
pub use sample::run as sample;
pub use sudden::run as sudden;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Self-describing output file: `# key=value` provenance lines, then CSV.
pub struct Output {
    header: Vec<(String, String)>,
}

impl Output {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Output {
            header: vec![
                ("command".into(), command.into()),
                ("code_version".into(), VERSION.into()),
                ("config_sha256".into(), cfg.hash.clone()),
                ("units".into(), cfg.units_label()),
                ("seed".into(), cfg.seed.to_string()),
            ],
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.header.push((key.into(), value.to_string()));
        self
    }

    pub fn header_text(&self) -> String {
        self.header.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }

    /// Writes the header followed by `rows` under `columns`.
    pub fn write_csv(&self, path: &Path, columns: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(columns)?;
        for r in rows {
            w.write_record(r)?;
        }
        let body = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        let mut text = self.header_text().into_bytes();
        text.extend_from_slice(&body);
        std::fs::write(path, text)?;
        Ok(())
    }
}

pub fn output_path(cfg: &RunConfig, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.join(name))
}

pub fn cutoff_label(c: &quench::lattice::Cutoff) -> String {
    match c {
        quench::lattice::Cutoff::NearestNeighbor => "nn".into(),
        quench::lattice::Cutoff::NextNearestNeighbor => "nnn".into(),
        quench::lattice::Cutoff::Radius { r_max } => format!("radius {r_max}"),
    }
}

pub fn shift_label(s: quench::model::ShiftMode) -> &'static str {
    match s {
        quench::model::ShiftMode::Bulk => "bulk",
        quench::model::ShiftMode::ClusterRestricted => "cluster_restricted",
    }
}

/// Parameters common to every simulation output.
pub fn physics_meta(out: &mut Output, cfg: &RunConfig) {
    if let Some(g) = &cfg.geometry {
        out.meta("geometry", format!("{}x{}", g.nx, g.ny)).meta("anisotropy", g.anisotropy());
    }
    if let Some(i) = &cfg.interaction {
        out.meta("c6", i.c6).meta("cutoff", cutoff_label(&i.cutoff)).meta("shift_mode", shift_label(cfg.shift_mode));
    }
    out.meta("steps_per_segment", cfg.solver.evolve.steps_per_segment)
        .meta("krylov_tol", cfg.solver.evolve.propagator.krylov_tol)
        .meta("dense_max_sites", cfg.solver.evolve.propagator.dense_max_sites);
}

pub fn fmt(v: f64) -> String {
    format!("{v}")
}
