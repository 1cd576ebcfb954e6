use std::collections::BTreeMap;

use quench::lattice::Spacing;
use quench::observables::{correlators_from_snapshots, fit_correlation_length, subsystem_statistics, SnapshotSet};
use serde_json::json;

use super::{fmt, output_path, Output};
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let input = cfg.analysis.input.as_ref().ok_or_else(|| CliError::Config {
        key: "analysis.input".into(),
        line: None,
        message: "analyze needs a snapshot file".into(),
    })?;
    let text = std::fs::read_to_string(input).map_err(|e| CliError::Config {
        key: "analysis.input".into(),
        line: None,
        message: format!("cannot read {}: {e}", input.display()),
    })?;
    let set = SnapshotSet::from_csv(&text)?;
    let spacing = cfg.geometry.as_ref().map(|g| g.spacing).unwrap_or_else(Spacing::isotropic);
    let a = &cfg.analysis;

    let map = correlators_from_snapshots(&set, a.window)?;
    let stats = subsystem_statistics(&set, a.subsystem.0, a.subsystem.1)?;
    let xi = fit_correlation_length(&map, &spacing, a.r_min, a.r_max)?;

    let mut out = Output::new("analyze", cfg);
    out.meta("input", input.display())
        .meta("input_shots", set.n_shots())
        .meta("grid", format!("{}x{}", set.nx(), set.ny()))
        .meta("anisotropy", spacing.anisotropy())
        .meta("window", format!("{}x{}", a.window.max_dx, a.window.max_dy))
        .meta("subsystem", format!("{}x{}", a.subsystem.0, a.subsystem.1));

    let rows: Vec<Vec<String>> =
        map.entries().iter().map(|e| vec![e.dx.to_string(), e.dy.to_string(), fmt(e.value), fmt(e.error), e.n.to_string()]).collect();
    let corr_path = output_path(cfg, "correlations.csv")?;
    out.write_csv(&corr_path, &["dx", "dy", "value", "error", "n"], &rows)?;

    let n = stats.n_sites();
    let rows: Vec<Vec<String>> = (0..stats.counts.len())
        .map(|c| {
            let bits: String = (0..n).map(|k| if c >> k & 1 == 1 { '1' } else { '0' }).collect();
            vec![c.to_string(), bits, stats.counts[c].to_string(), fmt(stats.probability(c))]
        })
        .collect();
    let sub_path = output_path(cfg, "subsystem.csv")?;
    out.write_csv(&sub_path, &["config", "rydberg_bits", "count", "probability"], &rows)?;

    let header: BTreeMap<String, String> =
        out.header_text().lines().filter_map(|l| l.strip_prefix("# ")?.split_once('=')).map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let report = json!({
        "header": header,
        "mean_ground": set.mean_ground(),
        "input_metadata": set.metadata,
        "subsystem_classes": stats.classes(),
        "subsystem_total": stats.total,
        "correlation_length": xi,
    });
    let json_path = output_path(cfg, "analysis.json")?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&report).expect("plain data serialises") + "\n")?;
    println!("{}\n{}\n{}", corr_path.display(), sub_path.display(), json_path.display());
    Ok(())
}
