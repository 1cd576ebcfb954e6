use std::collections::BTreeMap;

use quench::fitting::{fit_c6_alpha, synthetic_scan, CorrelatorScan, FitOptions, GridSpec, PredictionGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{output_path, Output};
use crate::config::{RunConfig, ScheduleConfig};
use crate::error::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let geom = cfg.require_geometry()?;
    let inter = cfg.require_interaction()?;
    let fit = cfg.fit.as_ref().ok_or_else(|| RunConfig::missing("fit"))?;
    let ScheduleConfig::Sudden { pulse, detunings } = cfg.require_schedule()? else {
        return Err(CliError::Config { key: "schedule.kind".into(), line: None, message: "fit needs a sudden schedule".into() });
    };

    let mut spec = GridSpec::new(fit.c6_grid.clone(), detunings.clone(), *pulse, cfg.solver.order, geom.spacing, inter.cutoff);
    spec.shift_mode = cfg.shift_mode;
    spec.euler_start = cfg.solver.euler_start;
    spec.steps_per_segment = cfg.solver.evolve.steps_per_segment;
    let (grid, grid_path) = PredictionGrid::load_or_build(&fit.grid_cache, &spec)?;

    let mut out = Output::new("fit", cfg);
    out.meta("grid_hash", &grid.hash).meta("grid_file", grid_path.display()).meta("order", spec.order);

    let scan = match (&fit.scan, &fit.synthetic) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config { key: "fit.scan".into(), line: None, message: format!("cannot read {}: {e}", path.display()) })?;
            out.meta("scan", path.display());
            CorrelatorScan::from_csv(&text, Some(*pulse))?
        }
        (None, Some(s)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut scan = synthetic_scan(&grid, s.c6, s.alpha, fit.series, s.noise.map(|n| (n, &mut rng)))?;
            scan.metadata.insert("synthetic_noise".into(), s.noise.map(|n| n.to_string()).unwrap_or_else(|| "none".into()));
            scan.metadata.insert("config_sha256".into(), cfg.hash.clone());
            scan.metadata.insert("seed".into(), cfg.seed.to_string());
            scan.metadata.insert("units".into(), cfg.units_label());
            let path = output_path(cfg, "synthetic_scan.csv")?;
            std::fs::write(&path, scan.to_csv())?;
            println!("{}", path.display());
            scan
        }
        (None, None) => unreachable!("config validation requires a scan source"),
    };

    let opts = FitOptions { weighting: fit.weighting, series: fit.series, ..FitOptions::default() };
    let result = fit_c6_alpha(&scan, &grid, &opts)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let header: BTreeMap<String, String> =
        out.header_text().lines().filter_map(|l| l.strip_prefix("# ")?.split_once('=')).map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let report = json!({
        "header": header,
        "scan_metadata": scan.metadata,
        "c6_error": result.c6_error(),
        "alpha_error": result.alpha_error(),
        "fit": result,
    });
    let path = output_path(cfg, "fit_report.json")?;
    std::fs::write(&path, serde_json::to_string_pretty(&report).expect("plain data serialises") + "\n")?;
    println!("{}", path.display());
    Ok(())
}
